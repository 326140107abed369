//! Chains, distributions and partitions.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Row-sum tolerance used when validating chains.
pub const TOL_STOCHASTIC: f64 = 1e-9;
/// Tolerance for equality of lumped rows in exact bisimulation.
pub const TOL_EXACT: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub u32);

impl Label {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

/// Sparse vector of nonnegative masses, sorted by index with no zero entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseDistribution {
    entries: Vec<(usize, f64)>,
}

impl SparseDistribution {
    /// Builds from unsorted pairs, summing duplicates and dropping zeros.
    pub fn new(pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut entries: Vec<(usize, f64)> = pairs.into_iter().collect();
        for &(i, p) in &entries {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::NotADistribution(format!("entry {i} has mass {p}")));
            }
        }
        entries.sort_by_key(|e| e.0);
        Ok(Self::from_sorted(entries))
    }

    /// Builds from pairs already known to be nonnegative.
    pub(crate) fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut entries: Vec<(usize, f64)> = pairs.into_iter().collect();
        entries.sort_by_key(|e| e.0);
        Self::from_sorted(entries)
    }

    fn from_sorted(entries: Vec<(usize, f64)>) -> Self {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, p) in entries {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += p,
                _ => out.push((i, p)),
            }
        }
        out.retain(|e| e.1 > 0.0);
        Self { entries: out }
    }

    pub fn point(i: usize) -> Self {
        Self { entries: vec![(i, 1.0)] }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self::from_sorted(values.iter().copied().enumerate().filter(|e| e.1 > 0.0).collect())
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for &(i, p) in &self.entries {
            v[i] += p;
        }
        v
    }

    pub fn get(&self, i: usize) -> f64 {
        match self.entries.binary_search_by_key(&i, |e| e.0) {
            Ok(k) => self.entries[k].1,
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn is_distribution(&self, tol: f64) -> bool {
        (self.mass() - 1.0).abs() <= tol
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|e| e.0)
    }

    /// Midpoint of two vectors.
    pub fn midpoint(&self, other: &Self) -> Self {
        Self::from_pairs(self.iter().chain(other.iter()).map(|(i, p)| (i, p / 2.0)))
    }

    /// Rescales to unit mass.
    pub fn normalised(&self) -> Self {
        let m = self.mass();
        Self { entries: self.entries.iter().map(|&(i, p)| (i, p / m)).collect() }
    }

    /// Renames indices through `map`, summing collisions.
    pub fn pushforward(&self, map: &[usize]) -> Self {
        Self::from_pairs(self.iter().map(|(i, p)| (map[i], p)))
    }
}

/// Σ|a(i) − b(i)| over the union of supports.
pub fn l1_distance(a: &SparseDistribution, b: &SparseDistribution) -> f64 {
    let (x, y) = (&a.entries, &b.entries);
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < x.len() || j < y.len() {
        if j == y.len() || (i < x.len() && x[i].0 < y[j].0) {
            acc += x[i].1;
            i += 1;
        } else if i == x.len() || y[j].0 < x[i].0 {
            acc += y[j].1;
            j += 1;
        } else {
            acc += (x[i].1 - y[j].1).abs();
            i += 1;
            j += 1;
        }
    }
    acc
}

/// max_i |a(i) − b(i)|.
pub fn linf_distance(a: &SparseDistribution, b: &SparseDistribution) -> f64 {
    let (x, y) = (&a.entries, &b.entries);
    let (mut i, mut j, mut acc) = (0, 0, 0.0f64);
    while i < x.len() || j < y.len() {
        if j == y.len() || (i < x.len() && x[i].0 < y[j].0) {
            acc = acc.max(x[i].1);
            i += 1;
        } else if i == x.len() || y[j].0 < x[i].0 {
            acc = acc.max(y[j].1);
            j += 1;
        } else {
            acc = acc.max((x[i].1 - y[j].1).abs());
            i += 1;
            j += 1;
        }
    }
    acc
}

/// Finite labelled Markov chain with sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledMarkovChain {
    label_names: Vec<String>,
    labels: Vec<Label>,
    names: Vec<String>,
    rows: Vec<SparseDistribution>,
}

impl LabelledMarkovChain {
    pub fn new(
        label_names: Vec<String>,
        labels: Vec<Label>,
        names: Vec<String>,
        rows: Vec<SparseDistribution>,
    ) -> Result<Self> {
        Self::with_tolerance(label_names, labels, names, rows, TOL_STOCHASTIC)
    }

    pub fn with_tolerance(
        label_names: Vec<String>,
        labels: Vec<Label>,
        names: Vec<String>,
        rows: Vec<SparseDistribution>,
        tol_stochastic: f64,
    ) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        if labels.len() != n || names.len() != n {
            return Err(Error::Validation(format!(
                "{} rows, {} labels, {} names",
                n,
                labels.len(),
                names.len()
            )));
        }
        for (s, l) in labels.iter().enumerate() {
            if l.index() >= label_names.len() {
                return Err(Error::UnknownLabel { state: s, label: l.0 });
            }
        }
        for (s, row) in rows.iter().enumerate() {
            if let Some(t) = row.max_index().filter(|&t| t >= n) {
                return Err(Error::TargetOutOfRange { state: s, target: t });
            }
            for (t, p) in row.iter() {
                if !p.is_finite() || p > 1.0 + tol_stochastic {
                    return Err(Error::InvalidProbability { state: s, target: t, value: p });
                }
            }
            if !row.is_distribution(tol_stochastic) {
                return Err(Error::NonStochasticRow { state: s, sum: row.mass() });
            }
        }
        Ok(Self { label_names, labels, names, rows })
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_parts(
        label_names: Vec<String>,
        labels: Vec<Label>,
        names: Vec<String>,
        rows: Vec<SparseDistribution>,
    ) -> Self {
        debug_assert!(rows.iter().all(|r| r.is_distribution(1e-6)));
        Self { label_names, labels, names, rows }
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn n_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn label(&self, s: usize) -> Label {
        self.labels[s]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label_name(&self, l: Label) -> &str {
        &self.label_names[l.index()]
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn state_label_name(&self, s: usize) -> &str {
        self.label_name(self.labels[s])
    }

    pub fn label_by_name(&self, name: &str) -> Option<Label> {
        self.label_names.iter().position(|n| n == name).map(|i| Label(i as u32))
    }

    pub fn name(&self, s: usize) -> &str {
        &self.names[s]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn state_by_name(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn row(&self, s: usize) -> &SparseDistribution {
        &self.rows[s]
    }

    pub fn rows(&self) -> &[SparseDistribution] {
        &self.rows
    }

    /// Same states and labels, different rows.
    pub fn with_rows(&self, rows: Vec<SparseDistribution>) -> Result<Self> {
        Self::new(self.label_names.clone(), self.labels.clone(), self.names.clone(), rows)
    }

    pub(crate) fn with_rows_unchecked(&self, rows: Vec<SparseDistribution>) -> Self {
        Self::from_parts(self.label_names.clone(), self.labels.clone(), self.names.clone(), rows)
    }

    /// Largest per-state L1 distance to `other`'s rows.
    pub fn max_row_distance(&self, other: &[SparseDistribution]) -> f64 {
        self.rows.iter().zip(other).map(|(a, b)| l1_distance(a, b)).fold(0.0, f64::max)
    }

    /// Same state count, label names per state, and rows within `tol` (L∞).
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.n_states() == other.n_states()
            && (0..self.n_states()).all(|s| {
                self.state_label_name(s) == other.state_label_name(s)
                    && linf_distance(self.row(s), other.row(s)) <= tol
            })
    }
}

/// Incremental construction by state name.
#[derive(Debug, Default)]
pub struct ChainBuilder {
    label_names: Vec<String>,
    labels: Vec<Label>,
    names: Vec<String>,
    edges: Vec<Vec<(String, f64)>>,
}

impl ChainBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&mut self, name: &str, label: &str) -> &mut Self {
        let l = match self.label_names.iter().position(|n| n == label) {
            Some(i) => i,
            None => {
                self.label_names.push(label.to_string());
                self.label_names.len() - 1
            }
        };
        self.labels.push(Label(l as u32));
        self.names.push(name.to_string());
        self.edges.push(Vec::new());
        self
    }

    /// Adds mass from the most recently declared `from` state to `to`.
    pub fn edge(&mut self, from: &str, to: &str, p: f64) -> &mut Self {
        let s = self.names.iter().position(|n| n == from).expect("unknown source state");
        self.edges[s].push((to.to_string(), p));
        self
    }

    pub fn build(&self) -> Result<LabelledMarkovChain> {
        let index: HashMap<&str, usize> =
            self.names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut rows = Vec::with_capacity(self.names.len());
        for (s, es) in self.edges.iter().enumerate() {
            let mut pairs = Vec::with_capacity(es.len());
            for (to, p) in es {
                let t = *index
                    .get(to.as_str())
                    .ok_or_else(|| Error::Validation(format!("state {s}: unknown successor {to}")))?;
                pairs.push((t, *p));
            }
            rows.push(SparseDistribution::new(pairs)?);
        }
        LabelledMarkovChain::new(self.label_names.clone(), self.labels.clone(), self.names.clone(), rows)
    }
}

/// Disjoint blocks covering `0..n`, blocks ordered by smallest member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl Partition {
    pub fn from_blocks(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut assign = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition(format!("block {b} is empty")));
            }
            for &s in block {
                if s >= n {
                    return Err(Error::InvalidPartition(format!("state {s} out of range")));
                }
                if assign[s] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("state {s} in two blocks")));
                }
                assign[s] = b;
            }
        }
        if let Some(s) = assign.iter().position(|&b| b == usize::MAX) {
            return Err(Error::InvalidPartition(format!("state {s} not covered")));
        }
        Ok(Self::from_assignment(&assign))
    }

    /// Groups states by arbitrary block ids.
    pub fn from_assignment(assign: &[usize]) -> Self {
        let mut ids: HashMap<usize, usize> = HashMap::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut block_of = vec![0; assign.len()];
        for (s, &a) in assign.iter().enumerate() {
            let b = *ids.entry(a).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[b].push(s);
            block_of[s] = b;
        }
        Self { blocks, block_of }
    }

    pub fn discrete(n: usize) -> Self {
        Self { blocks: (0..n).map(|s| vec![s]).collect(), block_of: (0..n).collect() }
    }

    pub fn trivial(n: usize) -> Self {
        Self { blocks: vec![(0..n).collect()], block_of: vec![0; n] }
    }

    pub fn by_label(chain: &LabelledMarkovChain) -> Self {
        let assign: Vec<usize> = chain.labels().iter().map(|l| l.index()).collect();
        Self::from_assignment(&assign)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.block_of.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &[usize] {
        &self.blocks[b]
    }

    pub fn block_of(&self, s: usize) -> usize {
        self.block_of[s]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.block_of
    }

    pub fn same_block(&self, s: usize, t: usize) -> bool {
        self.block_of[s] == self.block_of[t]
    }
}

/// τ(s)(E) for every block E, indexed by block.
pub fn lump(chain: &LabelledMarkovChain, s: usize, partition: &Partition) -> SparseDistribution {
    chain.row(s).pushforward(partition.assignment())
}

/// Quotient chain and the surjection onto its states.
#[derive(Clone, Debug, PartialEq)]
pub struct QuotientResult {
    pub quotient: LabelledMarkovChain,
    pub mapping: Vec<usize>,
}

impl QuotientResult {
    pub fn n_states(&self) -> usize {
        self.quotient.n_states()
    }

    pub fn partition(&self) -> Partition {
        Partition::from_assignment(&self.mapping)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(pairs: &[(usize, f64)]) -> SparseDistribution {
        SparseDistribution::new(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn l1_of_equal_is_zero() {
        let a = d(&[(0, 0.3), (2, 0.7)]);
        assert_eq!(l1_distance(&a, &a), 0.0);
    }

    #[test]
    fn l1_disjoint_keys() {
        let eps = 0.1;
        let a = d(&[(0, 0.5), (1, 0.5)]);
        let b = d(&[(0, 0.5 + eps), (2, 0.5 - eps)]);
        assert!((l1_distance(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn new_merges_duplicates_and_drops_zeros() {
        let a = d(&[(3, 0.25), (1, 0.0), (3, 0.25), (0, 0.5)]);
        assert_eq!(a.entries(), &[(0, 0.5), (3, 0.5)]);
        assert!(SparseDistribution::new([(0, -0.1)]).is_err());
    }

    #[test]
    fn chain_validation() {
        let ok = LabelledMarkovChain::new(
            vec!["a".into()],
            vec![Label(0)],
            vec!["s".into()],
            vec![SparseDistribution::point(0)],
        );
        assert!(ok.is_ok());
        let bad = LabelledMarkovChain::new(
            vec!["a".into()],
            vec![Label(0)],
            vec!["s".into()],
            vec![d(&[(0, 0.5)])],
        );
        assert!(matches!(bad, Err(Error::NonStochasticRow { state: 0, .. })));
        let out = LabelledMarkovChain::new(
            vec!["a".into()],
            vec![Label(0)],
            vec!["s".into()],
            vec![SparseDistribution::point(4)],
        );
        assert!(matches!(out, Err(Error::TargetOutOfRange { .. })));
    }

    #[test]
    fn partition_is_canonical() {
        let p = Partition::from_assignment(&[7, 3, 7, 1]);
        assert_eq!(p.blocks(), &[vec![0, 2], vec![1], vec![3]]);
        assert_eq!(p.block_of(2), 0);
        assert!(Partition::from_blocks(3, vec![vec![0], vec![0, 1, 2]]).is_err());
        assert!(Partition::from_blocks(3, vec![vec![0], vec![2]]).is_err());
        let q = Partition::from_blocks(3, vec![vec![2, 1], vec![0]]).unwrap();
        assert_eq!(q.blocks(), &[vec![0], vec![1, 2]]);
    }

    #[test]
    fn lump_singletons_and_trivial() {
        let mut b = ChainBuilder::new();
        b.state("a", "x").state("b", "x").state("c", "y");
        b.edge("a", "b", 0.25).edge("a", "c", 0.75);
        b.edge("b", "b", 1.0).edge("c", "a", 1.0);
        let m = b.build().unwrap();
        assert_eq!(lump(&m, 0, &Partition::discrete(3)), m.row(0).clone());
        assert_eq!(lump(&m, 0, &Partition::trivial(3)).entries(), &[(0, 1.0)]);
    }
}
