//! Empirical sampling, noise injection and planted-structure chains.
//!
//! Every state draws from its own stream: `ChaCha8Rng::seed_from_u64(seed)`
//! with `set_stream(state)`. Results therefore do not depend on the order in
//! which states are processed.

use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::StandardNormal;

use crate::bisim::exact_quotient;
use crate::error::{Error, Result};
use crate::lmc::{l1_distance, Label, LabelledMarkovChain, SparseDistribution};

/// RNG for one state under a run seed.
pub fn state_rng(seed: u64, state: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(state as u64);
    rng
}

/// Smallest n with n ≥ ln(2x/δ) / (2ε²).
pub fn sample_size(x: usize, eps: f64, delta: f64) -> u64 {
    let v = (2.0 * x as f64 / delta).ln() / (2.0 * eps * eps);
    v.ceil().max(1.0) as u64
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingPlan {
    pub eps: f64,
    pub delta: f64,
    pub counts: Vec<u64>,
}

impl SamplingPlan {
    pub fn new(eps: f64, delta: f64, counts: Vec<u64>) -> Result<Self> {
        if !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("eps {eps}, delta {delta}")));
        }
        Ok(Self { eps, delta, counts })
    }

    /// Per-state sizes from the support sizes of `chain`.
    pub fn for_chain(chain: &LabelledMarkovChain, eps: f64, delta: f64) -> Result<Self> {
        let counts = chain.rows().iter().map(|r| sample_size(r.len(), eps, delta)).collect();
        Self::new(eps, delta, counts)
    }
}

/// Empirical frequencies of `plan.counts[s]` draws from each row.
pub fn sample_chain(truth: &LabelledMarkovChain, plan: &SamplingPlan, seed: u64) -> Result<LabelledMarkovChain> {
    if plan.counts.len() != truth.n_states() {
        return Err(Error::InvalidArgument("plan does not cover every state".into()));
    }
    let rows = (0..truth.n_states()).map(|s| sample_row(truth.row(s), plan.counts[s], seed, s)).collect();
    Ok(truth.with_rows_unchecked(rows))
}

fn sample_row(row: &SparseDistribution, n: u64, seed: u64, state: usize) -> SparseDistribution {
    if row.len() == 1 || n == 0 {
        return row.clone();
    }
    let (targets, weights): (Vec<usize>, Vec<f64>) = row.iter().unzip();
    let alias = WeightedAliasIndex::new(weights).expect("row weights are positive");
    let mut rng = state_rng(seed, state);
    let mut counts = vec![0u64; targets.len()];
    for _ in 0..n {
        counts[alias.sample(&mut rng)] += 1;
    }
    SparseDistribution::from_pairs(targets.into_iter().zip(counts).map(|(t, c)| (t, c as f64 / n as f64)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbModel {
    pub eps: f64,
    pub delta: f64,
}

impl PerturbModel {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("eps {eps}, delta {delta}")));
        }
        Ok(Self { eps, delta })
    }
}

/// Per state: with probability 1−δ an L1 shift drawn uniformly from [0, ε],
/// otherwise a shift of exactly 2ε. Support is never enlarged.
pub fn perturb_chain(truth: &LabelledMarkovChain, model: &PerturbModel, seed: u64) -> LabelledMarkovChain {
    let rows = (0..truth.n_states())
        .map(|s| {
            let mut rng = state_rng(seed, s);
            let target = if rng.random::<f64>() < 1.0 - model.delta {
                rng.random::<f64>() * model.eps
            } else {
                2.0 * model.eps
            };
            perturb_row(truth.row(s), target, &mut rng)
        })
        .collect();
    truth.with_rows_unchecked(rows)
}

/// Moves `row` by L1 distance `target` along a random zero-sum direction on its
/// support. Falls back to the largest shift found if `target` is out of reach.
pub fn perturb_row(row: &SparseDistribution, target: f64, rng: &mut impl Rng) -> SparseDistribution {
    if row.len() < 2 || target <= 0.0 {
        return row.clone();
    }
    let (idx, p): (Vec<usize>, Vec<f64>) = row.iter().unzip();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..200 {
        let z: Vec<f64> = (0..p.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let z: Vec<f64> = z.iter().map(|v| v - mean).collect();
        let norm: f64 = z.iter().map(|v| v.abs()).sum();
        if norm == 0.0 {
            continue;
        }
        let mut q: Vec<f64> = p.iter().zip(&z).map(|(a, b)| (a + b * target / norm).max(0.0)).collect();
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        let d: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        if d >= target {
            // Pull back along the segment towards the original row.
            let lam = target / d;
            let q: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a + lam * (b - a)).collect();
            return finish(&idx, q);
        }
        if d >= 0.99 * target {
            return finish(&idx, q);
        }
        if best.as_ref().is_none_or(|b| d > b.0) {
            best = Some((d, q));
        }
    }
    finish(&idx, best.map_or(p, |b| b.1))
}

fn finish(idx: &[usize], q: Vec<f64>) -> SparseDistribution {
    let total: f64 = q.iter().sum();
    SparseDistribution::from_pairs(idx.iter().copied().zip(q.into_iter().map(|v| (v / total).max(0.0))))
}

/// Largest per-state L1 distance between two chains on the same states.
pub fn max_deviation(a: &LabelledMarkovChain, b: &LabelledMarkovChain) -> f64 {
    a.rows().iter().zip(b.rows()).map(|(x, y)| l1_distance(x, y)).fold(0.0, f64::max)
}

/// Random chain whose exact quotient has exactly `m` states, plus the ground
/// truth state → quotient state map.
///
/// `branching` bounds the quotient successors per state and the fiber members
/// each quotient edge is spread over.
pub fn planted_chain(m: usize, n: usize, branching: usize, seed: u64) -> (LabelledMarkovChain, Vec<usize>) {
    assert!(m >= 1 && m <= n, "need 1 ≤ m ≤ n");
    let branching = branching.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_labels = if m == 1 { 1 } else { (m / 4).max(2) };
    let quotient = loop {
        let q = random_rows(&mut rng, m, branching, n_labels);
        if exact_quotient(&q).n_states() == m {
            break q;
        }
    };
    let mut fiber: Vec<usize> = (0..n).map(|i| if i < m { i } else { rng.random_range(0..m) }).collect();
    fiber.shuffle(&mut rng);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (s, &f) in fiber.iter().enumerate() {
        members[f].push(s);
    }
    let mut rows = Vec::with_capacity(n);
    for s in 0..n {
        let mut pairs = Vec::new();
        for (qt, w) in quotient.row(fiber[s]).iter() {
            let k = branching.min(members[qt].len());
            let chosen: Vec<usize> = members[qt].choose_multiple(&mut rng, k).copied().collect();
            let parts: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = parts.iter().sum();
            pairs.extend(chosen.into_iter().zip(parts).map(|(t, x)| (t, w * x / total)));
        }
        rows.push(SparseDistribution::from_pairs(pairs));
    }
    let labels = fiber.iter().map(|&f| quotient.label(f)).collect();
    let names = (0..n).map(|s| format!("s{s}")).collect();
    let chain = LabelledMarkovChain::from_parts(quotient.label_names().to_vec(), labels, names, rows);
    (chain, fiber)
}

/// `n` states with up to `branching` successors each and `n_labels` labels.
pub(crate) fn random_rows(rng: &mut ChaCha8Rng, n: usize, branching: usize, n_labels: usize) -> LabelledMarkovChain {
    let states: Vec<usize> = (0..n).collect();
    let rows = (0..n)
        .map(|_| {
            let k = rng.random_range(1..=branching.min(n));
            let succ: Vec<usize> = states.choose_multiple(rng, k).copied().collect();
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = w.iter().sum();
            SparseDistribution::from_pairs(succ.into_iter().zip(w.into_iter().map(|x| x / total)))
        })
        .collect();
    let labels = (0..n).map(|s| Label(if s < n_labels { s as u32 } else { rng.random_range(0..n_labels) as u32 })).collect();
    let label_names = (0..n_labels).map(|l| format!("l{l}")).collect();
    let names = (0..n).map(|s| format!("s{s}")).collect();
    LabelledMarkovChain::from_parts(label_names, labels, names, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn sample_sizes() {
        let n = sample_size(2, 0.01, 0.01);
        assert_eq!(n, (5000.0f64 * 400.0f64.ln()).ceil() as u64);
        assert_eq!(sample_size(1, 0.1, 0.05), ((2.0f64 / 0.05).ln() * 50.0).ceil() as u64);
        for x in 1..50 {
            let gap = sample_size(2 * x, 0.02, 0.1) - sample_size(x, 0.02, 0.1);
            assert!(gap <= (2f64.ln() / (2.0 * 0.02 * 0.02)).ceil() as u64);
        }
    }

    #[test]
    fn deterministic_rows_survive_sampling() {
        let m = fixtures::fig4(0.01);
        let plan = SamplingPlan::new(0.1, 0.1, vec![50; 4]).unwrap();
        let s = sample_chain(&m, &plan, 3).unwrap();
        let x = m.state_by_name("x").unwrap();
        assert_eq!(s.row(x), m.row(x));
        assert!(s.rows().iter().all(|r| r.is_distribution(1e-12)));
        assert_eq!(sample_chain(&m, &plan, 3).unwrap(), s);
        assert_ne!(sample_chain(&m, &plan, 4).unwrap(), s);
    }

    #[test]
    fn sampled_rows_meet_the_max_norm_bound() {
        // The union bound behind the sample size controls the largest
        // coordinate error, which is what is checked here.
        let (eps, delta) = (0.01, 0.01);
        let m = fixtures::fig1(0.1);
        let plan = SamplingPlan::for_chain(&m, eps, delta).unwrap();
        let trials = 200;
        let mut ok = 0;
        let mut total = 0;
        for seed in 0..trials {
            let s = sample_chain(&m, &plan, seed).unwrap();
            for st in 0..4 {
                total += 1;
                if crate::lmc::linf_distance(s.row(st), m.row(st)) <= eps {
                    ok += 1;
                }
            }
        }
        assert!(ok as f64 / total as f64 >= 1.0 - delta - 0.01, "{ok}/{total}");
    }

    #[test]
    fn perturbation_envelope() {
        let m = fixtures::random_chain(1, 30, 4, 2);
        assert_eq!(perturb_chain(&m, &PerturbModel::new(0.0, 0.1).unwrap(), 9), m);
        let eps = 0.02;
        let model = PerturbModel::new(eps, 0.1).unwrap();
        let mut within = 0;
        let mut total = 0;
        for seed in 0..40 {
            let p = perturb_chain(&m, &model, seed);
            for s in 0..m.n_states() {
                let d = l1_distance(m.row(s), p.row(s));
                assert!(d <= 2.0 * eps + 1e-12);
                assert!(p.row(s).support().all(|t| m.row(s).get(t) > 0.0));
                assert!(p.row(s).is_distribution(1e-12));
                total += 1;
                within += usize::from(d <= eps + 1e-12);
            }
            assert_eq!(perturb_chain(&m, &model, seed), p);
        }
        assert!(within as f64 / total as f64 >= 0.85);
    }

    #[test]
    fn perturbation_breaks_planted_lumpability() {
        let (m, _) = planted_chain(4, 32, 3, 5);
        let p = perturb_chain(&m, &PerturbModel::new(1e-3, 0.05).unwrap(), 5);
        assert!(exact_quotient(&p).n_states() >= 4);
        assert!(exact_quotient(&p).n_states() > 4);
    }

    #[test]
    fn planted_sizes() {
        for seed in 0..10 {
            let (m, f) = planted_chain(4, 32, 3, seed);
            assert_eq!(exact_quotient(&m).n_states(), 4);
            assert_eq!(f.len(), 32);
            let (m, _) = planted_chain(5, 5, 2, seed);
            assert_eq!(exact_quotient(&m).n_states(), 5);
        }
    }
}
