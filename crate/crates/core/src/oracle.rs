//! ε-liftings and the greatest ε-bisimulation, for small chains.

use crate::bisim::direct_sum;
use crate::lmc::{LabelledMarkovChain, Partition, SparseDistribution};
use crate::maxflow::{FlowNetwork, INF};
use crate::witness::{EpsQuotientCertificate, BUDGET_SLACK};

/// Capacities are probabilities scaled by this factor and rounded.
pub const FLOW_SCALE: f64 = 1e12;

/// Reflexive, symmetric relation stored as a dense bit matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateRelation {
    n: usize,
    bits: Vec<bool>,
}

impl StateRelation {
    pub fn identity(n: usize) -> Self {
        let mut r = Self { n, bits: vec![false; n * n] };
        for s in 0..n {
            r.bits[s * n + s] = true;
        }
        r
    }

    /// All pairs of states carrying the same label.
    pub fn same_label(chain: &LabelledMarkovChain) -> Self {
        let n = chain.n_states();
        let mut r = Self::identity(n);
        for s in 0..n {
            for t in 0..n {
                r.bits[s * n + t] = chain.label(s) == chain.label(t);
            }
        }
        r
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn contains(&self, s: usize, t: usize) -> bool {
        self.bits[s * self.n + t]
    }

    pub fn insert(&mut self, s: usize, t: usize) {
        self.bits[s * self.n + t] = true;
        self.bits[t * self.n + s] = true;
    }

    pub fn remove(&mut self, s: usize, t: usize) {
        self.bits[s * self.n + t] = false;
        self.bits[t * self.n + s] = false;
    }

    /// Pairs with `s ≤ t`, in ascending order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n).flat_map(|s| (s..self.n).map(move |t| (s, t))).filter(|&(s, t)| self.contains(s, t)).collect()
    }

    pub fn is_reflexive(&self) -> bool {
        (0..self.n).all(|s| self.contains(s, s))
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|s| (0..self.n).all(|t| self.contains(s, t) == self.contains(t, s)))
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.n == other.n && self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }

    /// Classes of the transitive closure.
    pub fn closure_classes(&self) -> Partition {
        let mut comp = vec![usize::MAX; self.n];
        for s in 0..self.n {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = s;
            while let Some(u) = stack.pop() {
                for v in 0..self.n {
                    if comp[v] == usize::MAX && self.contains(u, v) {
                        comp[v] = s;
                        stack.push(v);
                    }
                }
            }
        }
        Partition::from_assignment(&comp)
    }
}

/// Whether some coupling of `mu` and `nu` puts mass at least `1 − eps` on `r`.
pub fn lifting_feasible(mu: &SparseDistribution, nu: &SparseDistribution, r: &StateRelation, eps: f64) -> bool {
    if eps >= 1.0 {
        return true;
    }
    let (a, b) = (mu.entries(), nu.entries());
    let (src, sink) = (0, 1);
    let mut g = FlowNetwork::new(2 + a.len() + b.len());
    let scale = |p: f64| (p * FLOW_SCALE).round() as i64;
    for (i, &(_, p)) in a.iter().enumerate() {
        g.add_edge(src, 2 + i, scale(p));
    }
    for (j, &(_, q)) in b.iter().enumerate() {
        g.add_edge(2 + a.len() + j, sink, scale(q));
    }
    for (i, &(u, _)) in a.iter().enumerate() {
        for (j, &(v, _)) in b.iter().enumerate() {
            if r.contains(u, v) {
                g.add_edge(2 + i, 2 + a.len() + j, INF);
            }
        }
    }
    let flow = g.max_flow(src, sink) as f64 / FLOW_SCALE;
    let slack = 1e-12 * (1 + a.len() + b.len()) as f64;
    flow >= 1.0 - eps - slack
}

/// Greatest fixed point, starting from the same-label relation.
pub fn greatest_eps_bisim(chain: &LabelledMarkovChain, eps: f64) -> StateRelation {
    greatest_from(chain, StateRelation::same_label(chain), eps, None)
}

/// Same fixed point, with an optional permutation of the sweep order.
pub(crate) fn greatest_from(
    chain: &LabelledMarkovChain,
    mut r: StateRelation,
    eps: f64,
    order: Option<&[usize]>,
) -> StateRelation {
    loop {
        let mut pairs: Vec<(usize, usize)> = r.pairs().into_iter().filter(|(s, t)| s != t).collect();
        if let Some(perm) = order {
            pairs.sort_by_key(|&(s, t)| (perm[s], perm[t]));
        }
        let dead: Vec<(usize, usize)> = pairs
            .into_iter()
            .filter(|&(s, t)| !lifting_feasible(chain.row(s), chain.row(t), &r, eps))
            .collect();
        if dead.is_empty() {
            return r;
        }
        for (s, t) in dead {
            r.remove(s, t);
        }
    }
}

/// Each source state is `ε/2`-related to its image in the direct sum of
/// source and target.
pub fn check_prop1(cert: &EpsQuotientCertificate) -> bool {
    let Ok((sum, off)) = direct_sum(&cert.source, &cert.target) else {
        return false;
    };
    let r = greatest_eps_bisim(&sum, (cert.epsilon + BUDGET_SLACK) / 2.0);
    cert.mapping.iter().enumerate().all(|(s, &q)| r.contains(s, off + q))
}
