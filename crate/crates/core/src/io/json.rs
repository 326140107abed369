//! Native JSON documents.
//!
//! Probabilities are written as decimal strings with 17 significant digits,
//! which round-trips every `f64` exactly.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lmc::{Label, LabelledMarkovChain, SparseDistribution, TOL_STOCHASTIC};
use crate::trace::MinimisationTrace;
use crate::witness::{EpsQuotientCertificate, PerturbationWitness};

pub const SCHEMA_VERSION: u32 = 1;

/// How to treat fields the schema does not know.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadOptions {
    pub strict: bool,
    pub tol_stochastic: f64,
}

impl ReadOptions {
    pub fn strict() -> Self {
        Self { strict: true, tol_stochastic: TOL_STOCHASTIC }
    }

    pub fn lenient() -> Self {
        Self { strict: false, tol_stochastic: TOL_STOCHASTIC }
    }
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self::lenient()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prob(pub f64);

impl Serialize for Prob {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:.16e}", self.0))
    }
}

impl<'de> Deserialize<'de> for Prob {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Prob;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a probability as a decimal string or number")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Prob, E> {
                v.trim().parse::<f64>().map(Prob).map_err(|_| E::custom(format!("bad number {v:?}")))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Prob, E> {
                Ok(Prob(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Prob, E> {
                Ok(Prob(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Prob, E> {
                Ok(Prob(v as f64))
            }
        }
        d.deserialize_any(V)
    }
}

pub type Row = Vec<(usize, Prob)>;

fn row_doc(r: &SparseDistribution) -> Row {
    r.iter().map(|(t, p)| (t, Prob(p))).collect()
}

fn row_from_doc(r: &Row) -> Result<SparseDistribution> {
    SparseDistribution::new(r.iter().map(|&(t, p)| (t, p.0)))
}

type Extra = BTreeMap<String, Value>;

fn check_extra(what: &str, extra: &Extra, opts: ReadOptions) -> Result<()> {
    if extra.is_empty() {
        return Ok(());
    }
    let keys: Vec<&str> = extra.keys().map(String::as_str).collect();
    if opts.strict {
        return Err(Error::Validation(format!("{what}: unknown fields {keys:?}")));
    }
    log::warn!("{what}: ignoring unknown fields {keys:?}");
    Ok(())
}

fn check_header(version: u32, kind: &str, want: &str) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::SchemaVersionMismatch { found: version, expected: SCHEMA_VERSION });
    }
    if kind != want {
        return Err(Error::Validation(format!("expected a {want} document, found {kind}")));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateDoc {
    pub name: String,
    pub label: String,
    pub transitions: Row,
    #[serde(flatten)]
    pub extra: Extra,
}

/// Chain without a document header, for nesting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainBody {
    pub labels: Vec<String>,
    pub states: Vec<StateDoc>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl ChainBody {
    pub fn from_chain(m: &LabelledMarkovChain) -> Self {
        Self {
            labels: m.label_names().to_vec(),
            states: (0..m.n_states())
                .map(|s| StateDoc {
                    name: m.name(s).to_string(),
                    label: m.state_label_name(s).to_string(),
                    transitions: row_doc(m.row(s)),
                    extra: Extra::new(),
                })
                .collect(),
            extra: Extra::new(),
        }
    }

    pub fn to_chain(&self, opts: ReadOptions) -> Result<LabelledMarkovChain> {
        check_extra("chain", &self.extra, opts)?;
        let mut labels = Vec::with_capacity(self.states.len());
        let mut rows = Vec::with_capacity(self.states.len());
        for (s, st) in self.states.iter().enumerate() {
            check_extra(&format!("state {s}"), &st.extra, opts)?;
            let l = self
                .labels
                .iter()
                .position(|n| n == &st.label)
                .ok_or_else(|| Error::Validation(format!("state {s}: undeclared label {:?}", st.label)))?;
            labels.push(Label(l as u32));
            rows.push(row_from_doc(&st.transitions)?);
        }
        LabelledMarkovChain::with_tolerance(
            self.labels.clone(),
            labels,
            self.states.iter().map(|s| s.name.clone()).collect(),
            rows,
            opts.tol_stochastic,
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainDoc {
    pub schema_version: u32,
    pub kind: String,
    #[serde(flatten)]
    pub body: ChainBody,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub schema_version: u32,
    pub kind: String,
    pub epsilon: Prob,
    pub budget: Prob,
    pub mapping: Vec<usize>,
    pub source: ChainBody,
    pub target: ChainBody,
    pub witness: Vec<Row>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl CertificateDoc {
    pub fn from_certificate(c: &EpsQuotientCertificate) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "certificate".into(),
            epsilon: Prob(c.epsilon),
            budget: Prob(c.witness.budget),
            mapping: c.mapping.clone(),
            source: ChainBody::from_chain(&c.source),
            target: ChainBody::from_chain(&c.target),
            witness: c.witness.rows.iter().map(row_doc).collect(),
            extra: Extra::new(),
        }
    }

    pub fn to_certificate(&self, opts: ReadOptions) -> Result<EpsQuotientCertificate> {
        check_header(self.schema_version, &self.kind, "certificate")?;
        check_extra("certificate", &self.extra, opts)?;
        let rows = self.witness.iter().map(row_from_doc).collect::<Result<Vec<_>>>()?;
        Ok(EpsQuotientCertificate {
            source: self.source.to_chain(opts)?,
            target: self.target.to_chain(opts)?,
            mapping: self.mapping.clone(),
            witness: PerturbationWitness { rows, budget: self.budget.0 },
            epsilon: self.epsilon.0,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepDoc {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub merged_pair: Option<(usize, usize)>,
    pub epsilon: Prob,
    pub states: usize,
    pub mapping: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Vec<Row>>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceDoc {
    pub schema_version: u32,
    pub kind: String,
    pub algorithm: String,
    pub eps2: Prob,
    pub iterations: usize,
    pub bound: Prob,
    pub input_states: usize,
    pub final_states: usize,
    pub final_mapping: Vec<usize>,
    pub initial_mapping: Vec<usize>,
    pub steps: Vec<StepDoc>,
    /// `Q₀ … Q_i`.
    pub chains: Vec<ChainBody>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub input: Option<ChainBody>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub composed: Option<Box<CertificateDoc>>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl TraceDoc {
    /// With `emit_witnesses`, also records the input chain, every witness and
    /// the composed certificate.
    pub fn from_trace(t: &MinimisationTrace, emit_witnesses: bool) -> Result<Self> {
        let composed = if emit_witnesses { Some(Box::new(CertificateDoc::from_certificate(&t.composed()?))) } else { None };
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            kind: "trace".into(),
            algorithm: t.algorithm.as_str().into(),
            eps2: Prob(t.eps2),
            iterations: t.iterations(),
            bound: Prob(t.bound()),
            input_states: t.input().n_states(),
            final_states: t.final_chain().n_states(),
            final_mapping: t.final_mapping(),
            initial_mapping: t.initial.mapping.clone(),
            steps: t
                .steps
                .iter()
                .map(|s| StepDoc {
                    merged_pair: s.merged_pair,
                    epsilon: Prob(s.certificate.epsilon),
                    states: s.certificate.target.n_states(),
                    mapping: s.certificate.mapping.clone(),
                    witness: emit_witnesses.then(|| s.certificate.witness.rows.iter().map(row_doc).collect()),
                    extra: Extra::new(),
                })
                .collect(),
            chains: t.chains().map(ChainBody::from_chain).collect(),
            input: emit_witnesses.then(|| ChainBody::from_chain(t.input())),
            composed,
            extra: Extra::new(),
        })
    }

    pub fn final_chain(&self, opts: ReadOptions) -> Result<LabelledMarkovChain> {
        self.chains.last().ok_or_else(|| Error::Validation("trace has no chains".into()))?.to_chain(opts)
    }

    /// Step certificates, when witnesses were emitted.
    pub fn certificates(&self, opts: ReadOptions) -> Result<Vec<EpsQuotientCertificate>> {
        check_header(self.schema_version, &self.kind, "trace")?;
        check_extra("trace", &self.extra, opts)?;
        let chains = self.chains.iter().map(|c| c.to_chain(opts)).collect::<Result<Vec<_>>>()?;
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                check_extra(&format!("step {i}"), &s.extra, opts)?;
                let w = s.witness.as_ref().ok_or_else(|| Error::Validation("trace carries no witnesses".into()))?;
                let rows = w.iter().map(row_from_doc).collect::<Result<Vec<_>>>()?;
                let source = chains[i].clone();
                Ok(EpsQuotientCertificate {
                    witness: PerturbationWitness::measured(&source, rows),
                    source,
                    target: chains[i + 1].clone(),
                    mapping: s.mapping.clone(),
                    epsilon: s.epsilon.0,
                })
            })
            .collect()
    }
}

/// Exact quotient with its state mapping.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuotientDoc {
    pub schema_version: u32,
    pub kind: String,
    pub states: usize,
    pub mapping: Vec<usize>,
    pub quotient: ChainBody,
    #[serde(flatten)]
    pub extra: Extra,
}

impl QuotientDoc {
    pub fn new(q: &crate::lmc::QuotientResult) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "quotient".into(),
            states: q.n_states(),
            mapping: q.mapping.clone(),
            quotient: ChainBody::from_chain(&q.quotient),
            extra: Extra::new(),
        }
    }
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("documents serialise");
    s.push('\n');
    s
}

pub fn chain_to_json(m: &LabelledMarkovChain) -> String {
    to_pretty(&ChainDoc { schema_version: SCHEMA_VERSION, kind: "lmc".into(), body: ChainBody::from_chain(m) })
}

pub fn chain_from_json(text: &str, opts: ReadOptions) -> Result<LabelledMarkovChain> {
    let doc: ChainDoc = serde_json::from_str(text)?;
    check_header(doc.schema_version, &doc.kind, "lmc")?;
    doc.body.to_chain(opts)
}

pub fn certificate_to_json(c: &EpsQuotientCertificate) -> String {
    to_pretty(&CertificateDoc::from_certificate(c))
}

pub fn certificate_from_json(text: &str, opts: ReadOptions) -> Result<EpsQuotientCertificate> {
    let doc: CertificateDoc = serde_json::from_str(text)?;
    doc.to_certificate(opts)
}

pub fn trace_to_json(t: &MinimisationTrace, emit_witnesses: bool) -> Result<String> {
    Ok(to_pretty(&TraceDoc::from_trace(t, emit_witnesses)?))
}

pub fn trace_from_json(text: &str) -> Result<TraceDoc> {
    let doc: TraceDoc = serde_json::from_str(text)?;
    check_header(doc.schema_version, &doc.kind, "trace")?;
    Ok(doc)
}

/// Serialises any document type with the canonical layout.
pub fn to_json<T: Serialize>(v: &T) -> String {
    to_pretty(v)
}

/// Reads the `kind` field of a document.
pub fn document_kind(text: &str) -> Result<String> {
    let v: Value = serde_json::from_str(text)?;
    v.get("kind")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Validation("document has no kind".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::local::minimise_local;
    use crate::witness::verify_epsilon_quotient;

    #[test]
    fn chains_round_trip_exactly() {
        for (_, m) in fixtures::catalogue() {
            let text = chain_to_json(&m);
            assert_eq!(chain_from_json(&text, ReadOptions::strict()).unwrap(), m);
        }
        let m = fixtures::random_chain(3, 20, 4, 3);
        assert_eq!(chain_from_json(&chain_to_json(&m), ReadOptions::strict()).unwrap(), m);
    }

    #[test]
    fn probabilities_have_17_digits() {
        let text = chain_to_json(&fixtures::fig1(0.1));
        assert!(text.contains("\"5.0000000000000000e-1\""));
        assert!(text.contains("\"5.9999999999999998e-1\""));
    }

    #[test]
    fn unknown_fields() {
        let text = chain_to_json(&fixtures::fig8()).replacen("\"labels\"", "\"colour\": 1,\n  \"labels\"", 1);
        assert!(matches!(chain_from_json(&text, ReadOptions::strict()), Err(Error::Validation(_))));
        assert!(chain_from_json(&text, ReadOptions::lenient()).is_ok());
    }

    #[test]
    fn version_is_checked() {
        let text = chain_to_json(&fixtures::fig8()).replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(matches!(
            chain_from_json(&text, ReadOptions::strict()),
            Err(Error::SchemaVersionMismatch { found: 7, .. })
        ));
    }

    #[test]
    fn certificate_survives_round_trip() {
        let t = minimise_local(&fixtures::fig8(), 0.1);
        let c = t.composed().unwrap();
        let back = certificate_from_json(&certificate_to_json(&c), ReadOptions::strict()).unwrap();
        assert_eq!(back, c);
        assert!(verify_epsilon_quotient(&back).passed);
    }

    #[test]
    fn trace_round_trip() {
        let t = minimise_local(&fixtures::fig8(), 0.1);
        let doc = trace_from_json(&trace_to_json(&t, true).unwrap()).unwrap();
        assert_eq!(doc.iterations, 2);
        assert_eq!(doc.final_chain(ReadOptions::strict()).unwrap(), *t.final_chain());
        let certs = doc.certificates(ReadOptions::strict()).unwrap();
        assert!(certs.iter().all(|c| verify_epsilon_quotient(c).passed));
        let bare = trace_from_json(&trace_to_json(&t, false).unwrap()).unwrap();
        assert!(bare.certificates(ReadOptions::strict()).is_err());
    }
}
