//! Approximate partition refinement and the minimisation loop around it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bisim::exact_quotient_with;
use crate::error::{Error, Result};
use crate::lmc::{l1_distance, lump, LabelledMarkovChain, Partition, QuotientResult, SparseDistribution, TOL_EXACT};
use crate::trace::{Algorithm, MinimisationTrace, TraceStep};
use crate::witness::{apr_witness, EpsQuotientCertificate};

/// Slack on the `≤ ε₂` test.
pub const APR_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OrderPolicy {
    /// Ascending state index.
    Input,
    /// A seeded shuffle of the input states.
    Seeded(u64),
    /// Explicit permutation of the input states: `order[k]` is scanned k-th.
    Explicit(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementConfig {
    pub eps2: f64,
    pub order: OrderPolicy,
    pub tol_exact: f64,
}

impl RefinementConfig {
    pub fn new(eps2: f64) -> Self {
        Self { eps2, order: OrderPolicy::Input, tol_exact: TOL_EXACT }
    }

    pub fn with_order(mut self, order: OrderPolicy) -> Self {
        self.order = order;
        self
    }

    /// Scan rank of every state of an `n`-state chain.
    pub fn ranks(&self, n: usize) -> Result<Vec<usize>> {
        let order: Vec<usize> = match &self.order {
            OrderPolicy::Input => (0..n).collect(),
            OrderPolicy::Seeded(seed) => {
                let mut v: Vec<usize> = (0..n).collect();
                v.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
                v
            }
            OrderPolicy::Explicit(v) => v.clone(),
        };
        let mut rank = vec![usize::MAX; n];
        if order.len() != n {
            return Err(Error::InvalidArgument(format!("order has {} entries for {n} states", order.len())));
        }
        for (k, &s) in order.iter().enumerate() {
            if s >= n || rank[s] != usize::MAX {
                return Err(Error::InvalidArgument("order is not a permutation".into()));
            }
            rank[s] = k;
        }
        Ok(rank)
    }
}

pub fn approx_refine(chain: &LabelledMarkovChain, config: &RefinementConfig) -> Result<Partition> {
    let rank = config.ranks(chain.n_states())?;
    Ok(approx_refine_ranked(chain, config.eps2, &rank))
}

/// Refinement scanning states by ascending `rank`.
pub fn approx_refine_ranked(chain: &LabelledMarkovChain, eps2: f64, rank: &[usize]) -> Partition {
    let n = chain.n_states();
    let mut x = Partition::trivial(n);
    loop {
        let lumped: Vec<SparseDistribution> = (0..n).map(|s| lump(chain, s, &x)).collect();
        let mut assign = vec![0; n];
        let mut next = 0;
        for block in x.blocks() {
            let mut scan = block.clone();
            scan.sort_by_key(|&s| rank[s]);
            let mut sets: Vec<Vec<usize>> = Vec::new();
            for &s in &scan {
                let mut best: Option<(f64, usize, usize)> = None;
                for (k, set) in sets.iter().enumerate() {
                    if chain.label(set[0]) != chain.label(s) {
                        continue;
                    }
                    let mut total = 0.0;
                    let mut ok = true;
                    for &t in set {
                        let d = l1_distance(&lumped[s], &lumped[t]);
                        if d > eps2 + APR_SLACK {
                            ok = false;
                            break;
                        }
                        total += d;
                    }
                    if !ok {
                        continue;
                    }
                    let avg = total / set.len() as f64;
                    let min_member = *set.iter().min().unwrap();
                    let better = match best {
                        None => true,
                        Some((a, m, _)) => avg < a || (avg == a && min_member < m),
                    };
                    if better {
                        best = Some((avg, min_member, k));
                    }
                }
                match best {
                    Some((_, _, k)) => sets[k].push(s),
                    None => sets.push(vec![s]),
                }
            }
            for set in sets {
                for s in set {
                    assign[s] = next;
                }
                next += 1;
            }
        }
        let y = Partition::from_assignment(&assign);
        if y.len() == x.len() {
            return y;
        }
        x = y;
    }
}

/// Chain over blocks whose rows are the mean lumped rows of the members.
pub fn lump_average(chain: &LabelledMarkovChain, partition: &Partition) -> Result<QuotientResult> {
    let mut rows = Vec::with_capacity(partition.len());
    let mut labels = Vec::with_capacity(partition.len());
    let mut names = Vec::with_capacity(partition.len());
    for blk in partition.blocks() {
        rows.push(block_average(chain, partition, blk)?);
        labels.push(chain.label(blk[0]));
        names.push(chain.name(blk[0]).to_string());
    }
    let quotient = LabelledMarkovChain::from_parts(chain.label_names().to_vec(), labels, names, rows);
    Ok(QuotientResult { quotient, mapping: partition.assignment().to_vec() })
}

pub(crate) fn block_average(
    chain: &LabelledMarkovChain,
    partition: &Partition,
    blk: &[usize],
) -> Result<SparseDistribution> {
    let k = blk.len() as f64;
    let mut pairs = Vec::new();
    for &u in blk {
        if chain.label(u) != chain.label(blk[0]) {
            return Err(Error::LabelMismatch { s: blk[0], t: u });
        }
        pairs.extend(lump(chain, u, partition).iter().map(|(b, p)| (b, p / k)));
    }
    Ok(SparseDistribution::from_pairs(pairs))
}

pub fn minimise_apr(chain: &LabelledMarkovChain, config: &RefinementConfig) -> Result<MinimisationTrace> {
    let tol = config.tol_exact;
    let mut rank = config.ranks(chain.n_states())?;
    let q0 = exact_quotient_with(chain, tol);
    rank = carry_ranks(&rank, &q0.mapping, q0.n_states());
    let initial = EpsQuotientCertificate::identity_witness(chain.clone(), q0.quotient.clone(), q0.mapping.clone());
    let mut trace = MinimisationTrace::new(Algorithm::Apr, config.eps2, initial);
    let mut q = q0.quotient;
    loop {
        let x = approx_refine_ranked(&q, config.eps2, &rank);
        let avg = lump_average(&q, &x)?;
        let next = exact_quotient_with(&avg.quotient, tol);
        if next.n_states() == q.n_states() {
            return Ok(trace);
        }
        let mapping: Vec<usize> = x.assignment().iter().map(|&b| next.mapping[b]).collect();
        let witness = apr_witness(&q, &x)?;
        let cert = EpsQuotientCertificate {
            source: q.clone(),
            target: next.quotient.clone(),
            epsilon: witness.budget,
            mapping: mapping.clone(),
            witness,
        };
        trace.push(TraceStep { certificate: cert, merged_pair: None, partition: x });
        rank = carry_ranks(&rank, &mapping, next.n_states());
        q = next.quotient;
    }
}

/// Rank of a merged state is the smallest rank among the states it absorbs.
fn carry_ranks(rank: &[usize], mapping: &[usize], m: usize) -> Vec<usize> {
    let mut out = vec![usize::MAX; m];
    for (s, &q) in mapping.iter().enumerate() {
        out[q] = out[q].min(rank[s]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bisim::{bisimulation_partition, exact_quotient};
    use crate::fixtures;

    fn names(m: &LabelledMarkovChain, p: &Partition) -> Vec<Vec<String>> {
        p.blocks().iter().map(|b| b.iter().map(|&s| m.name(s).to_string()).collect()).collect()
    }

    fn order_of(m: &LabelledMarkovChain, ns: &[&str]) -> OrderPolicy {
        OrderPolicy::Explicit(ns.iter().map(|n| m.state_by_name(n).unwrap()).collect())
    }

    #[test]
    fn fig1_blocks() {
        let eps = 0.1;
        let m = fixtures::fig1(eps);
        let x = approx_refine(&m, &RefinementConfig::new(2.0 * eps)).unwrap();
        let want = Partition::from_blocks(4, vec![vec![0, 2], vec![1, 3]]).unwrap();
        assert_eq!(x, want);
    }

    #[test]
    fn fig1_lump_average() {
        let eps = 0.1;
        let m = fixtures::fig1(eps);
        let x = approx_refine(&m, &RefinementConfig::new(2.0 * eps)).unwrap();
        let r = lump_average(&m, &x).unwrap();
        let q = &r.quotient;
        assert_eq!(q.n_states(), 2);
        assert!((q.row(0).get(0) - (0.5 + eps / 2.0)).abs() < 1e-12);
        assert!((q.row(0).get(1) - (0.5 - eps / 2.0)).abs() < 1e-12);
        let same = lump_average(&m, &Partition::discrete(4)).unwrap();
        assert_eq!(same.quotient.rows(), m.rows());
    }

    #[test]
    fn table2_and_table3_orders() {
        let m = fixtures::fig8();
        let a = approx_refine(&m, &RefinementConfig::new(0.1).with_order(order_of(&m, &["s1", "s2", "s3", "v"]))).unwrap();
        assert_eq!(a.len(), 4);
        let b = approx_refine(&m, &RefinementConfig::new(0.1).with_order(order_of(&m, &["s1", "s3", "s2", "v"]))).unwrap();
        assert_eq!(names(&m, &b), vec![vec!["s1", "s3"], vec!["s2"], vec!["v"]]);
    }

    #[test]
    fn fig8_apr_traces() {
        let m = fixtures::fig8();
        let t = minimise_apr(&m, &RefinementConfig::new(0.1)).unwrap();
        assert_eq!((t.iterations(), t.final_chain().n_states()), (0, 4));
        let cfg = RefinementConfig::new(0.1).with_order(order_of(&m, &["s1", "s3", "s2", "v"]));
        let t = minimise_apr(&m, &cfg).unwrap();
        assert_eq!(t.iterations(), 1);
        let q = t.final_chain();
        assert_eq!(q.n_states(), 3);
        let s13 = t.final_mapping()[m.state_by_name("s1").unwrap()];
        let v = t.final_mapping()[m.state_by_name("v").unwrap()];
        assert!((q.row(s13).get(s13) - 0.48).abs() < 1e-12);
        assert!((q.row(s13).get(v) - 0.52).abs() < 1e-12);
    }

    #[test]
    fn fig1_single_iteration() {
        let eps = 0.05;
        let t = minimise_apr(&fixtures::fig1(eps), &RefinementConfig::new(2.0 * eps)).unwrap();
        assert_eq!(t.iterations(), 1);
        assert_eq!(t.final_chain().n_states(), 2);
    }

    #[test]
    fn zero_budget_is_exact() {
        for seed in 0..30 {
            let m = fixtures::random_chain(seed, 12, 3, 2);
            let x = approx_refine(&m, &RefinementConfig::new(0.0)).unwrap();
            assert_eq!(x, bisimulation_partition(&m, TOL_EXACT));
            let t = minimise_apr(&m, &RefinementConfig::new(0.0)).unwrap();
            assert_eq!(t.iterations(), 0);
            assert_eq!(t.final_chain().n_states(), exact_quotient(&m).n_states());
        }
    }

    #[test]
    fn output_contract_holds() {
        for seed in 0..40 {
            let m = fixtures::random_chain(seed, 15, 3, 2);
            for eps2 in [0.05, 0.3, 0.8] {
                let cfg = RefinementConfig::new(eps2).with_order(OrderPolicy::Seeded(seed));
                let x = approx_refine(&m, &cfg).unwrap();
                for b in x.blocks() {
                    for &s in b {
                        for &t in b {
                            assert_eq!(m.label(s), m.label(t));
                            let d = l1_distance(&lump(&m, s, &x), &lump(&m, t, &x));
                            assert!(d <= eps2 + APR_SLACK);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bad_order_rejected() {
        let m = fixtures::fig8();
        let cfg = RefinementConfig::new(0.1).with_order(OrderPolicy::Explicit(vec![0, 0, 1, 2]));
        assert!(approx_refine(&m, &cfg).is_err());
    }
}
