//! Local bisimilarity distance and greedy pairwise merging.

use crate::bisim::{bisimulation_partition, exact_quotient_with};
use crate::error::{Error, Result};
use crate::lmc::{l1_distance, linf_distance, lump, Label, LabelledMarkovChain, Partition, QuotientResult, SparseDistribution, TOL_EXACT};
use crate::trace::{Algorithm, MinimisationTrace, TraceStep};
use crate::witness::{local_merge_witness_in, EpsQuotientCertificate};

#[derive(Clone, Debug, PartialEq)]
pub struct LocalDistanceReport {
    pub pair: (usize, usize),
    pub partition: Partition,
    pub distance: f64,
}

fn check_pair(chain: &LabelledMarkovChain, s: usize, t: usize) -> Result<()> {
    let n = chain.n_states();
    if s >= n {
        return Err(Error::StateOutOfRange(s));
    }
    if t >= n {
        return Err(Error::StateOutOfRange(t));
    }
    if s == t {
        return Err(Error::SameState(s));
    }
    if chain.label(s) != chain.label(t) {
        return Err(Error::LabelMismatch { s, t });
    }
    Ok(())
}

pub fn local_partition(chain: &LabelledMarkovChain, s: usize, t: usize) -> Result<Partition> {
    local_partition_with(chain, s, t, TOL_EXACT)
}

/// Bisimulation partition of the chain where `s` and `t` get a fresh label and
/// become absorbing.
pub fn local_partition_with(chain: &LabelledMarkovChain, s: usize, t: usize, tol: f64) -> Result<Partition> {
    check_pair(chain, s, t)?;
    let mut label_names = chain.label_names().to_vec();
    let fresh = Label(label_names.len() as u32);
    label_names.push(format!("#pair{s}_{t}"));
    let mut labels = chain.labels().to_vec();
    labels[s] = fresh;
    labels[t] = fresh;
    let mut rows = chain.rows().to_vec();
    rows[s] = SparseDistribution::point(s);
    rows[t] = SparseDistribution::point(t);
    let modified = LabelledMarkovChain::from_parts(label_names, labels, chain.names().to_vec(), rows);
    Ok(bisimulation_partition(&modified, tol))
}

pub fn local_distance(chain: &LabelledMarkovChain, s: usize, t: usize) -> Result<LocalDistanceReport> {
    local_distance_with(chain, s, t, TOL_EXACT)
}

pub fn local_distance_with(chain: &LabelledMarkovChain, s: usize, t: usize, tol: f64) -> Result<LocalDistanceReport> {
    let partition = local_partition_with(chain, s, t, tol)?;
    let distance = 0.5 * l1_distance(&lump(chain, s, &partition), &lump(chain, t, &partition));
    Ok(LocalDistanceReport { pair: (s, t), partition, distance })
}

pub fn merge_pair(chain: &LabelledMarkovChain, s: usize, t: usize, partition: &Partition) -> Result<QuotientResult> {
    merge_pair_with(chain, s, t, partition, TOL_EXACT)
}

/// Chain over the blocks of `partition`; the block of `s` and `t` gets the mean
/// of their lumped rows.
pub fn merge_pair_with(
    chain: &LabelledMarkovChain,
    s: usize,
    t: usize,
    partition: &Partition,
    tol: f64,
) -> Result<QuotientResult> {
    check_pair(chain, s, t)?;
    if !partition.same_block(s, t) {
        return Err(Error::InvalidPartition(format!("{s} and {t} lie in different blocks")));
    }
    let merged = partition.block_of(s);
    if partition.block(merged).len() != 2 {
        return Err(Error::InvalidPartition(format!("the block of {s} and {t} holds other states")));
    }
    for (b, blk) in partition.blocks().iter().enumerate() {
        if b == merged {
            continue;
        }
        let r = lump(chain, blk[0], partition);
        for &u in &blk[1..] {
            if chain.label(u) != chain.label(blk[0]) {
                return Err(Error::LabelMismatch { s: blk[0], t: u });
            }
            let dev = linf_distance(&r, &lump(chain, u, partition));
            if dev > tol {
                return Err(Error::NotLumpable { block: b, s: blk[0], t: u, deviation: dev });
            }
        }
    }
    let mut rows = Vec::with_capacity(partition.len());
    let mut labels = Vec::with_capacity(partition.len());
    let mut names = Vec::with_capacity(partition.len());
    for (b, blk) in partition.blocks().iter().enumerate() {
        let rep = blk[0];
        let row = if b == merged {
            lump(chain, s, partition).midpoint(&lump(chain, t, partition))
        } else {
            lump(chain, rep, partition)
        };
        rows.push(row);
        labels.push(chain.label(rep));
        names.push(chain.name(rep).to_string());
    }
    let quotient = LabelledMarkovChain::from_parts(chain.label_names().to_vec(), labels, names, rows);
    Ok(QuotientResult { quotient, mapping: partition.assignment().to_vec() })
}

/// Smallest local distance among same-label pairs, ties to the smallest pair.
pub fn closest_pair(chain: &LabelledMarkovChain, tol: f64) -> Option<LocalDistanceReport> {
    let n = chain.n_states();
    let mut best: Option<LocalDistanceReport> = None;
    for s in 0..n {
        for t in s + 1..n {
            if chain.label(s) != chain.label(t) {
                continue;
            }
            let r = local_distance_with(chain, s, t, tol).expect("valid pair");
            if best.as_ref().is_none_or(|b| r.distance < b.distance) {
                best = Some(r);
            }
        }
    }
    best
}

pub fn minimise_local(chain: &LabelledMarkovChain, eps2: f64) -> MinimisationTrace {
    minimise_local_with(chain, eps2, TOL_EXACT)
}

pub fn minimise_local_with(chain: &LabelledMarkovChain, eps2: f64, tol: f64) -> MinimisationTrace {
    let q0 = exact_quotient_with(chain, tol);
    let initial = EpsQuotientCertificate::identity_witness(chain.clone(), q0.quotient.clone(), q0.mapping.clone());
    let mut trace = MinimisationTrace::new(Algorithm::Local, eps2, initial);
    let mut q = q0.quotient;
    while let Some(best) = closest_pair(&q, tol).filter(|r| r.distance <= eps2 + 1e-12) {
        let (s, t) = best.pair;
        let merged = merge_pair_with(&q, s, t, &best.partition, tol).expect("local partition is lumpable");
        let next = exact_quotient_with(&merged.quotient, tol);
        let mapping: Vec<usize> = merged.mapping.iter().map(|&b| next.mapping[b]).collect();
        let witness = local_merge_witness_in(&q, s, t, &best.partition);
        let cert = EpsQuotientCertificate {
            source: q.clone(),
            target: next.quotient.clone(),
            mapping,
            witness,
            epsilon: best.distance,
        };
        trace.push(TraceStep { certificate: cert, merged_pair: Some((s, t)), partition: best.partition });
        q = next.quotient;
    }
    trace
}
