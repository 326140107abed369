//! Experiment manifests and result tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::json::{ReadOptions, SCHEMA_VERSION};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmChoice {
    Local,
    Apr,
    Both,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    Noise,
    Sample,
}

fn default_delta() -> f64 {
    0.05
}

fn default_order() -> String {
    "input".into()
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Experiment {
    /// Model spec such as `planted:4:32:3`, `fig8`, or a file path.
    pub model: String,
    pub eps: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub eps2: Vec<f64>,
    pub seeds: Vec<u64>,
    pub algorithm: AlgorithmChoice,
    /// `input` or `seed:N`.
    #[serde(default = "default_order")]
    pub order: String,
    #[serde(default)]
    pub mode: NoiseMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<f64>,
    #[serde(default = "default_true")]
    pub verify: bool,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub kind: String,
    pub experiments: Vec<Experiment>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Manifest {
    pub fn parse(text: &str, opts: ReadOptions) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersionMismatch { found: m.schema_version, expected: SCHEMA_VERSION });
        }
        if m.kind != "manifest" {
            return Err(Error::Validation(format!("expected a manifest document, found {}", m.kind)));
        }
        let mut unknown: Vec<String> = m.extra.keys().cloned().collect();
        for (i, e) in m.experiments.iter().enumerate() {
            unknown.extend(e.extra.keys().map(|k| format!("experiments[{i}].{k}")));
            if e.eps2.is_empty() || e.seeds.is_empty() {
                return Err(Error::Validation(format!("experiment {i}: eps2 and seeds must be non-empty")));
            }
            if !(0.0..=1.0).contains(&e.eps) || !(0.0..1.0).contains(&e.delta) || e.delta == 0.0 {
                return Err(Error::Validation(format!("experiment {i}: need 0 ≤ eps ≤ 1 and 0 < delta < 1")));
            }
            if e.eps2.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Validation(format!("experiment {i}: eps2 values must be non-negative")));
            }
        }
        if !unknown.is_empty() {
            if opts.strict {
                return Err(Error::Validation(format!("manifest: unknown fields {unknown:?}")));
            }
            log::warn!("manifest: ignoring unknown fields {unknown:?}");
        }
        Ok(m)
    }
}

/// One line of a result table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub seed: u64,
    /// `M`, `M/~`, `M'/~` or `result`.
    pub variant: String,
    pub algorithm: Option<String>,
    pub eps2: Option<f64>,
    pub states: Option<usize>,
    pub transitions: Option<usize>,
    pub iterations: Option<usize>,
    pub recovered: Option<bool>,
    pub verified: Option<bool>,
    /// `ok`, `timeout` or `error: …`.
    pub status: String,
    pub wall_ms: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultsDoc {
    pub schema_version: u32,
    pub kind: String,
    pub rows: Vec<ResultRow>,
}

impl ResultsDoc {
    pub fn new(rows: Vec<ResultRow>) -> Self {
        Self { schema_version: SCHEMA_VERSION, kind: "results".into(), rows }
    }
}

pub const TSV_COLUMNS: [&str; 12] = [
    "model",
    "seed",
    "variant",
    "algorithm",
    "eps2",
    "states",
    "transitions",
    "iterations",
    "recovered",
    "verified",
    "status",
    "wall_ms",
];

fn cell<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), T::to_string)
}

pub fn to_tsv(rows: &[ResultRow]) -> String {
    let mut out = TSV_COLUMNS.join("\t");
    out.push('\n');
    for r in rows {
        let wall = r.wall_ms.map(|w| format!("{w:.1}"));
        let status = r.status.replace(['\t', '\n'], " ");
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.model,
            r.seed,
            r.variant,
            cell(&r.algorithm),
            cell(&r.eps2),
            cell(&r.states),
            cell(&r.transitions),
            cell(&r.iterations),
            cell(&r.recovered),
            cell(&r.verified),
            status,
            cell(&wall)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MANIFEST: &str = r#"{
  "schema_version": 1,
  "kind": "manifest",
  "experiments": [
    { "model": "planted:4:32:3", "eps": 0.01, "eps2": [0.04], "seeds": [1, 2], "algorithm": "both" }
  ]
}"#;

    #[test]
    fn parses_with_defaults() {
        let m = Manifest::parse(MANIFEST, ReadOptions::strict()).unwrap();
        let e = &m.experiments[0];
        assert_eq!(e.algorithm, AlgorithmChoice::Both);
        assert_eq!(e.mode, NoiseMode::Noise);
        assert_eq!(e.order, "input");
        assert!(e.verify);
        assert_eq!(e.delta, 0.05);
    }

    #[test]
    fn unknown_fields_in_strict_mode() {
        let text = MANIFEST.replace("\"eps\": 0.01", "\"eps\": 0.01, \"colour\": 2");
        assert!(Manifest::parse(&text, ReadOptions::strict()).is_err());
        assert!(Manifest::parse(&text, ReadOptions::lenient()).is_ok());
    }

    #[test]
    fn empty_seed_list_rejected() {
        let text = MANIFEST.replace("[1, 2]", "[]");
        assert!(matches!(Manifest::parse(&text, ReadOptions::strict()), Err(Error::Validation(_))));
    }

    #[test]
    fn tsv_layout() {
        let row = ResultRow {
            model: "fig8".into(),
            seed: 0,
            variant: "result".into(),
            algorithm: Some("local".into()),
            eps2: Some(0.1),
            states: Some(2),
            transitions: Some(4),
            iterations: Some(2),
            recovered: Some(true),
            verified: Some(true),
            status: "ok".into(),
            wall_ms: None,
        };
        let tsv = to_tsv(&[row]);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0].split('\t').count(), 12);
        assert_eq!(lines[1], "fig8\t0\tresult\tlocal\t0.1\t2\t4\t2\ttrue\ttrue\tok\t-");
    }
}
