use crate::error::Result;
use crate::lmc::{LabelledMarkovChain, Partition};
use crate::witness::{compose_witnesses, EpsQuotientCertificate};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Local,
    Apr,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Local => "local",
            Algorithm::Apr => "apr",
        }
    }
}

/// One productive iteration `Q_i → Q_{i+1}`.
#[derive(Clone, Debug)]
pub struct TraceStep {
    pub certificate: EpsQuotientCertificate,
    /// The pair merged by the local algorithm.
    pub merged_pair: Option<(usize, usize)>,
    /// The pair partition (local) or the refined partition (apr) over `Q_i`.
    pub partition: Partition,
}

/// `Q₀, Q₁, …, Q_i` with a certificate per step.
#[derive(Clone, Debug)]
pub struct MinimisationTrace {
    pub algorithm: Algorithm,
    pub eps2: f64,
    /// Input chain to `Q₀` (exact quotient, zero budget).
    pub initial: EpsQuotientCertificate,
    pub steps: Vec<TraceStep>,
}

impl MinimisationTrace {
    pub fn new(algorithm: Algorithm, eps2: f64, initial: EpsQuotientCertificate) -> Self {
        Self { algorithm, eps2, initial, steps: Vec::new() }
    }

    pub fn push(&mut self, step: TraceStep) {
        self.steps.push(step);
    }

    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    /// `i · ε₂`.
    pub fn bound(&self) -> f64 {
        self.iterations() as f64 * self.eps2
    }

    pub fn input(&self) -> &LabelledMarkovChain {
        &self.initial.source
    }

    pub fn chains(&self) -> impl Iterator<Item = &LabelledMarkovChain> {
        std::iter::once(&self.initial.target).chain(self.steps.iter().map(|s| &s.certificate.target))
    }

    pub fn final_chain(&self) -> &LabelledMarkovChain {
        self.steps.last().map_or(&self.initial.target, |s| &s.certificate.target)
    }

    /// Input state to final quotient state.
    pub fn final_mapping(&self) -> Vec<usize> {
        let mut m = self.initial.mapping.clone();
        for step in &self.steps {
            for q in m.iter_mut() {
                *q = step.certificate.mapping[*q];
            }
        }
        m
    }

    /// Sum of the per-step budgets.
    pub fn realised_budget(&self) -> f64 {
        self.steps.iter().map(|s| s.certificate.epsilon).sum()
    }

    /// Folds all certificates into one from the input chain to the final quotient.
    pub fn composed(&self) -> Result<EpsQuotientCertificate> {
        compose_all(&self.initial, self.steps.iter().map(|s| &s.certificate))
    }
}

/// Left fold of [`compose_witnesses`].
pub fn compose_all<'a>(
    first: &EpsQuotientCertificate,
    rest: impl IntoIterator<Item = &'a EpsQuotientCertificate>,
) -> Result<EpsQuotientCertificate> {
    let mut acc = first.clone();
    for c in rest {
        acc = compose_witnesses(&acc, c)?;
    }
    Ok(acc)
}
