//! Exact probabilistic bisimulation by signature refinement.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::lmc::{lump, Label, LabelledMarkovChain, Partition, QuotientResult, SparseDistribution, TOL_EXACT};

/// Splits `items` into groups of near-equal vectors.
///
/// Vectors are first bucketed by the set of coordinates above `tol`, then split
/// coordinate by coordinate wherever consecutive sorted values differ by more
/// than `tol`. Groups come back ordered by smallest member id.
pub(crate) fn group_close(items: &[(usize, &SparseDistribution)], tol: f64) -> Vec<Vec<usize>> {
    let mut buckets: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for (k, (_, row)) in items.iter().enumerate() {
        let key: Vec<usize> = row.iter().filter(|e| e.1 > tol).map(|e| e.0).collect();
        buckets.entry(key).or_default().push(k);
    }
    let mut out = Vec::new();
    for (key, members) in buckets {
        split_coords(items, &key, 0, members, tol, &mut out);
    }
    let mut groups: Vec<Vec<usize>> = out
        .into_iter()
        .map(|g| {
            let mut ids: Vec<usize> = g.into_iter().map(|k| items[k].0).collect();
            ids.sort_unstable();
            ids
        })
        .collect();
    groups.sort_by_key(|g| g[0]);
    groups
}

fn split_coords(
    items: &[(usize, &SparseDistribution)],
    key: &[usize],
    depth: usize,
    mut members: Vec<usize>,
    tol: f64,
    out: &mut Vec<Vec<usize>>,
) {
    if members.len() == 1 || depth == key.len() {
        out.push(members);
        return;
    }
    let c = key[depth];
    members.sort_by(|&a, &b| items[a].1.get(c).total_cmp(&items[b].1.get(c)).then(a.cmp(&b)));
    let mut start = 0;
    for k in 1..=members.len() {
        let cut = k == members.len()
            || items[members[k]].1.get(c) - items[members[k - 1]].1.get(c) > tol;
        if cut {
            split_coords(items, key, depth + 1, members[start..k].to_vec(), tol, out);
            start = k;
        }
    }
}

/// Coarsest bisimulation refining `initial`.
pub fn refine_from(chain: &LabelledMarkovChain, initial: Partition, tol: f64) -> Partition {
    let n = chain.n_states();
    let mut p = initial;
    loop {
        let mut assign = vec![0; n];
        let mut next = 0;
        for block in p.blocks() {
            let rows: Vec<SparseDistribution> = block.iter().map(|&s| lump(chain, s, &p)).collect();
            let items: Vec<(usize, &SparseDistribution)> = block.iter().copied().zip(rows.iter()).collect();
            for g in group_close(&items, tol) {
                for s in g {
                    assign[s] = next;
                }
                next += 1;
            }
        }
        let q = Partition::from_assignment(&assign);
        if q.len() == p.len() {
            return q;
        }
        p = q;
    }
}

/// Probabilistic bisimilarity as a partition.
pub fn bisimulation_partition(chain: &LabelledMarkovChain, tol: f64) -> Partition {
    refine_from(chain, Partition::by_label(chain), tol)
}

pub fn exact_quotient(chain: &LabelledMarkovChain) -> QuotientResult {
    exact_quotient_with(chain, TOL_EXACT)
}

pub fn exact_quotient_with(chain: &LabelledMarkovChain, tol: f64) -> QuotientResult {
    build_quotient(chain, &bisimulation_partition(chain, tol))
}

/// Quotient state per block, taking label, name and lumped row from the block's
/// smallest member.
pub(crate) fn build_quotient(chain: &LabelledMarkovChain, p: &Partition) -> QuotientResult {
    let reps: Vec<usize> = p.blocks().iter().map(|b| b[0]).collect();
    let rows = reps.iter().map(|&s| lump(chain, s, p)).collect();
    let labels = reps.iter().map(|&s| chain.label(s)).collect();
    let names = reps.iter().map(|&s| chain.name(s).to_string()).collect();
    let quotient = LabelledMarkovChain::from_parts(chain.label_names().to_vec(), labels, names, rows);
    QuotientResult { quotient, mapping: p.assignment().to_vec() }
}

/// Checks that every block is label-homogeneous with equal lumped rows.
pub fn check_lumpable(chain: &LabelledMarkovChain, partition: &Partition, tol: f64) -> Result<()> {
    if partition.n_states() != chain.n_states() {
        return Err(Error::InvalidPartition("partition size differs from chain".into()));
    }
    for (b, block) in partition.blocks().iter().enumerate() {
        let r = block[0];
        let rr = lump(chain, r, partition);
        for &s in &block[1..] {
            if chain.label(s) != chain.label(r) {
                return Err(Error::LabelMismatch { s: r, t: s });
            }
            let dev = crate::lmc::linf_distance(&rr, &lump(chain, s, partition));
            if dev > tol {
                return Err(Error::NotLumpable { block: b, s: r, t: s, deviation: dev });
            }
        }
    }
    Ok(())
}

/// Lumped chain over a lumpable partition.
pub fn quotient_wrt(chain: &LabelledMarkovChain, partition: &Partition, tol: f64) -> Result<QuotientResult> {
    check_lumpable(chain, partition, tol)?;
    Ok(build_quotient(chain, partition))
}

/// Disjoint union; labels are merged by name. Returns the offset of `b`'s states.
pub fn direct_sum(a: &LabelledMarkovChain, b: &LabelledMarkovChain) -> Result<(LabelledMarkovChain, usize)> {
    if a.n_states() == 0 || b.n_states() == 0 {
        return Err(Error::Empty);
    }
    let off = a.n_states();
    let mut label_names = a.label_names().to_vec();
    let remap: Vec<Label> = b
        .label_names()
        .iter()
        .map(|n| match label_names.iter().position(|m| m == n) {
            Some(i) => Label(i as u32),
            None => {
                label_names.push(n.clone());
                Label(label_names.len() as u32 - 1)
            }
        })
        .collect();
    let mut labels = a.labels().to_vec();
    labels.extend(b.labels().iter().map(|l| remap[l.index()]));
    let mut names = a.names().to_vec();
    names.extend(b.names().iter().cloned());
    let mut rows = a.rows().to_vec();
    rows.extend(b.rows().iter().map(|r| SparseDistribution::from_pairs(r.iter().map(|(t, p)| (t + off, p)))));
    Ok((LabelledMarkovChain::from_parts(label_names, labels, names, rows), off))
}
