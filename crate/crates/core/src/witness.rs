//! Perturbation witnesses, certificates and their verification.

use std::collections::BTreeMap;

use crate::bisim::{bisimulation_partition, direct_sum, exact_quotient_with};
use crate::error::{Error, Result};
use crate::lmc::{
    l1_distance, linf_distance, lump, LabelledMarkovChain, Partition, SparseDistribution, TOL_EXACT, TOL_STOCHASTIC,
};
use crate::local::local_distance_with;
use crate::lp::{Cmp, Lp, LpOutcome};
use crate::refine::block_average;

/// Slack on per-row budgets during verification.
pub const BUDGET_SLACK: f64 = 1e-9;

/// Alternative rows for a base chain, with the largest row deviation claimed.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationWitness {
    pub rows: Vec<SparseDistribution>,
    pub budget: f64,
}

impl PerturbationWitness {
    /// Wraps `rows`, measuring the budget against `base`.
    pub fn measured(base: &LabelledMarkovChain, rows: Vec<SparseDistribution>) -> Self {
        let budget = base.max_row_distance(&rows);
        Self { rows, budget }
    }

    pub fn realised(&self, base: &LabelledMarkovChain) -> f64 {
        base.max_row_distance(&self.rows)
    }
}

/// Claim that `target` is an `epsilon`-quotient of `source`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsQuotientCertificate {
    pub source: LabelledMarkovChain,
    pub target: LabelledMarkovChain,
    pub mapping: Vec<usize>,
    pub witness: PerturbationWitness,
    pub epsilon: f64,
}

impl EpsQuotientCertificate {
    /// Zero-budget certificate for an exact quotient.
    pub fn identity_witness(source: LabelledMarkovChain, target: LabelledMarkovChain, mapping: Vec<usize>) -> Self {
        let witness = PerturbationWitness { rows: source.rows().to_vec(), budget: 0.0 };
        Self { source, target, mapping, witness, epsilon: 0.0 }
    }

    /// Moves the certificate onto `truth`, a chain with the same states and
    /// labels whose rows may differ from the source; the budget grows by the
    /// largest row distance between the two.
    pub fn rebase(&self, truth: &LabelledMarkovChain) -> Result<Self> {
        if truth.n_states() != self.source.n_states()
            || (0..truth.n_states()).any(|s| truth.state_label_name(s) != self.source.state_label_name(s))
        {
            return Err(Error::ChainMismatch("ground truth differs in states or labels".into()));
        }
        let shift = truth.max_row_distance(self.source.rows());
        Ok(Self {
            source: truth.clone(),
            target: self.target.clone(),
            mapping: self.mapping.clone(),
            witness: PerturbationWitness::measured(truth, self.witness.rows.clone()),
            epsilon: self.epsilon + shift,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub passed: bool,
    pub failures: Vec<String>,
    pub max_row_deviation: f64,
}

/// Moves `mu` to block masses `gamma` with the smallest L1 change.
///
/// A block that must grow receives the deficit on its lowest-index state; a
/// block that must shrink is drained in ascending state order.
pub fn adjust_distribution(
    mu: &SparseDistribution,
    partition: &Partition,
    gamma: &SparseDistribution,
) -> Result<SparseDistribution> {
    if gamma.max_index().is_some_and(|b| b >= partition.len()) {
        return Err(Error::NotADistribution("gamma refers to a missing block".into()));
    }
    if !gamma.is_distribution(TOL_STOCHASTIC) {
        return Err(Error::NotADistribution(format!("gamma has mass {}", gamma.mass())));
    }
    if mu.max_index().is_some_and(|s| s >= partition.n_states()) {
        return Err(Error::InvalidPartition("mu has states outside the partition".into()));
    }
    let mut by_block: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (s, p) in mu.iter() {
        by_block.entry(partition.block_of(s)).or_default().push((s, p));
    }
    for (b, _) in gamma.iter() {
        by_block.entry(b).or_default();
    }
    let mut out = Vec::with_capacity(mu.len() + 1);
    for (b, mut members) in by_block {
        let have: f64 = members.iter().map(|e| e.1).sum();
        let want = gamma.get(b);
        if want > have {
            let x = partition.block(b)[0];
            match members.iter_mut().find(|e| e.0 == x) {
                Some(e) => e.1 += want - have,
                None => members.insert(0, (x, want - have)),
            }
        } else {
            let mut excess = have - want;
            for e in members.iter_mut() {
                if excess <= 0.0 {
                    break;
                }
                let take = e.1.min(excess);
                e.1 -= take;
                excess -= take;
            }
        }
        out.extend(members);
    }
    Ok(SparseDistribution::from_pairs(out))
}

pub fn local_merge_witness(chain: &LabelledMarkovChain, s: usize, t: usize) -> Result<PerturbationWitness> {
    let report = local_distance_with(chain, s, t, TOL_EXACT)?;
    Ok(local_merge_witness_in(chain, s, t, &report.partition))
}

/// Moves `s` and `t` to the midpoint of their lumped rows over `partition`.
pub(crate) fn local_merge_witness_in(
    chain: &LabelledMarkovChain,
    s: usize,
    t: usize,
    partition: &Partition,
) -> PerturbationWitness {
    let gamma = lump(chain, s, partition).midpoint(&lump(chain, t, partition));
    let mut rows = chain.rows().to_vec();
    for u in [s, t] {
        rows[u] = adjust_distribution(chain.row(u), partition, &gamma).expect("midpoint is a distribution");
    }
    PerturbationWitness::measured(chain, rows)
}

/// Moves every state to the mean lumped row of its block.
pub fn apr_witness(chain: &LabelledMarkovChain, partition: &Partition) -> Result<PerturbationWitness> {
    let mut rows = chain.rows().to_vec();
    for blk in partition.blocks() {
        if blk.len() == 1 {
            continue;
        }
        let gamma = block_average(chain, partition, blk)?;
        for &x in blk {
            rows[x] = adjust_distribution(chain.row(x), partition, &gamma)?;
        }
    }
    Ok(PerturbationWitness::measured(chain, rows))
}

/// Certificate for `c1.source → c2.target` with budget `ε₁ + ε₂`.
pub fn compose_witnesses(c1: &EpsQuotientCertificate, c2: &EpsQuotientCertificate) -> Result<EpsQuotientCertificate> {
    if !c1.target.approx_eq(&c2.source, 1e-12) {
        return Err(Error::ChainMismatch("second certificate does not start at the first one's target".into()));
    }
    let f = &c1.mapping;
    let fibers = Partition::from_assignment(f);
    if fibers.len() != c1.target.n_states() || f.len() != c1.source.n_states() {
        return Err(Error::ChainMismatch("first mapping is not onto its target".into()));
    }
    let mut block_of_target = vec![0; fibers.len()];
    for (b, blk) in fibers.blocks().iter().enumerate() {
        block_of_target[f[blk[0]]] = b;
    }
    let mut rows = Vec::with_capacity(f.len());
    for x in 0..f.len() {
        let gamma = c2.witness.rows[f[x]].pushforward(&block_of_target);
        rows.push(adjust_distribution(&c1.witness.rows[x], &fibers, &gamma)?);
    }
    let cert = EpsQuotientCertificate {
        source: c1.source.clone(),
        target: c2.target.clone(),
        mapping: f.iter().map(|&y| c2.mapping[y]).collect(),
        witness: PerturbationWitness::measured(&c1.source, rows),
        epsilon: c1.epsilon + c2.epsilon,
    };
    let v = verify_epsilon_quotient(&cert);
    if !v.passed {
        return Err(Error::VerificationFailed(v.failures));
    }
    Ok(cert)
}

pub fn verify_epsilon_quotient(cert: &EpsQuotientCertificate) -> Verdict {
    verify_epsilon_quotient_with(cert, TOL_EXACT)
}

pub fn verify_epsilon_quotient_with(cert: &EpsQuotientCertificate, tol: f64) -> Verdict {
    let mut failures = Vec::new();
    let (src, tgt) = (&cert.source, &cert.target);
    let (n, k) = (src.n_states(), tgt.n_states());
    let fail = |failures: Vec<String>, dev: f64| Verdict { passed: false, failures, max_row_deviation: dev };
    if cert.mapping.len() != n {
        return fail(vec![format!("mapping has {} entries for {n} states", cert.mapping.len())], f64::NAN);
    }
    if let Some(s) = cert.mapping.iter().position(|&q| q >= k) {
        return fail(vec![format!("state {s} maps outside the target")], f64::NAN);
    }
    let mut hit = vec![false; k];
    for &q in &cert.mapping {
        hit[q] = true;
    }
    if let Some(q) = hit.iter().position(|h| !h) {
        failures.push(format!("target state {q} has no preimage"));
    }
    if cert.witness.rows.len() != n {
        return fail(vec![format!("witness has {} rows for {n} states", cert.witness.rows.len())], f64::NAN);
    }
    for (s, row) in cert.witness.rows.iter().enumerate() {
        if !row.is_distribution(TOL_STOCHASTIC) || row.max_index().is_some_and(|t| t >= n) {
            failures.push(format!("witness row {s} is not a distribution over the source states"));
        }
    }
    if !failures.is_empty() {
        return fail(failures, f64::NAN);
    }

    // (a) row budgets
    let mut max_dev = 0.0f64;
    for s in 0..n {
        let d = l1_distance(&cert.witness.rows[s], src.row(s));
        max_dev = max_dev.max(d);
        if d > cert.epsilon + BUDGET_SLACK {
            failures.push(format!("state {s}: row moved by {d:.3e} > {:.3e}", cert.epsilon));
        }
        if src.state_label_name(s) != tgt.state_label_name(cert.mapping[s]) {
            failures.push(format!("state {s}: label differs from its image {}", cert.mapping[s]));
        }
    }

    // (b) fibers lumpable under the witness
    let lumped: Vec<SparseDistribution> = cert.witness.rows.iter().map(|r| r.pushforward(&cert.mapping)).collect();
    let mut rep = vec![usize::MAX; k];
    for s in 0..n {
        let q = cert.mapping[s];
        if rep[q] == usize::MAX {
            rep[q] = s;
            continue;
        }
        let dev = linf_distance(&lumped[rep[q]], &lumped[s]);
        if dev > tol {
            failures.push(format!("states {} and {s} map to {q} but their lumped rows differ by {dev:.3e}", rep[q]));
        }
    }
    if !failures.is_empty() {
        return fail(failures, max_dev);
    }

    // (c) lumped chain bisimilar to the target, state by state
    let lumped_chain = LabelledMarkovChain::from_parts(
        src.label_names().to_vec(),
        rep.iter().map(|&s| src.label(s)).collect(),
        rep.iter().map(|&s| src.name(s).to_string()).collect(),
        rep.iter().map(|&s| lumped[s].clone()).collect(),
    );
    match direct_sum(&lumped_chain, tgt) {
        Ok((sum, off)) => {
            let p = bisimulation_partition(&sum, tol);
            for q in 0..k {
                if !p.same_block(q, off + q) {
                    failures.push(format!("lumped state {q} is not bisimilar to target state {q}"));
                }
            }
        }
        Err(e) => failures.push(e.to_string()),
    }

    // (d) target is an exact quotient
    let tq = exact_quotient_with(tgt, tol).n_states();
    if tq != k {
        failures.push(format!("target is not minimal: {k} states collapse to {tq}"));
    }
    Verdict { passed: failures.is_empty(), failures, max_row_deviation: max_dev }
}

/// Smallest uniform row budget making `partition` lumpable.
pub fn min_epsilon_for_partition(chain: &LabelledMarkovChain, partition: &Partition) -> f64 {
    partition_centres(chain, partition).map_or(f64::INFINITY, |(r, _)| r)
}

/// Radius and, per block, an optimal lumped row (over block indices).
pub(crate) fn partition_centres(
    chain: &LabelledMarkovChain,
    partition: &Partition,
) -> Option<(f64, Vec<SparseDistribution>)> {
    let mut radius = 0.0f64;
    let mut centres = Vec::with_capacity(partition.len());
    for blk in partition.blocks() {
        if blk.iter().any(|&u| chain.label(u) != chain.label(blk[0])) {
            return None;
        }
        let rows: Vec<SparseDistribution> = blk.iter().map(|&u| lump(chain, u, partition)).collect();
        let (r, c) = l1_chebyshev_centre(&rows);
        radius = radius.max(r);
        centres.push(c);
    }
    Some((radius, centres))
}

/// Point of the simplex minimising the largest L1 distance to `points`.
pub fn l1_chebyshev_centre(points: &[SparseDistribution]) -> (f64, SparseDistribution) {
    let mut coords: Vec<usize> = points.iter().flat_map(|p| p.support()).collect();
    coords.sort_unstable();
    coords.dedup();
    let (m, k) = (points.len(), coords.len());
    if m == 1 {
        return (0.0, points[0].clone());
    }
    if m == 2 {
        return (0.5 * l1_distance(&points[0], &points[1]), points[0].midpoint(&points[1]));
    }
    if k <= 1 {
        return (0.0, points[0].clone());
    }
    if k == 2 {
        let xs: Vec<f64> = points.iter().map(|p| p.get(coords[0])).collect();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let a = (lo + hi) / 2.0;
        return (hi - lo, SparseDistribution::from_pairs([(coords[0], a), (coords[1], 1.0 - a)]));
    }
    // Variables: c_0..c_{k-1}, d_{i,e} at k + i*k + e, r last.
    let r = k + m * k;
    let mut lp = Lp::new(r + 1);
    lp.c[r] = 1.0;
    for (i, p) in points.iter().enumerate() {
        for (e, &coord) in coords.iter().enumerate() {
            let d = k + i * k + e;
            let v = p.get(coord);
            lp.add(&[(e, 1.0), (d, -1.0)], Cmp::Le, v);
            lp.add(&[(e, -1.0), (d, -1.0)], Cmp::Le, -v);
        }
        let mut sum: Vec<(usize, f64)> = (0..k).map(|e| (k + i * k + e, 1.0)).collect();
        sum.push((r, -1.0));
        lp.add(&sum, Cmp::Le, 0.0);
    }
    lp.add(&(0..k).map(|e| (e, 1.0)).collect::<Vec<_>>(), Cmp::Eq, 1.0);
    match lp.solve() {
        LpOutcome::Optimal { x, .. } => {
            let centre = SparseDistribution::from_pairs(coords.iter().enumerate().map(|(e, &c)| (c, x[e].max(0.0))))
                .normalised();
            let radius = points.iter().map(|p| l1_distance(p, &centre)).fold(0.0, f64::max);
            (radius, centre)
        }
        other => unreachable!("simplex centre program is feasible and bounded: {other:?}"),
    }
}
