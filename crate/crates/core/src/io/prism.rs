//! PRISM explicit DTMC files: `.tra` transitions and `.lab` labels.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lmc::{Label, LabelledMarkovChain, SparseDistribution, TOL_STOCHASTIC};

/// Label given to states that carry no label in the `.lab` file.
pub const UNLABELLED: &str = "none";

#[derive(Clone, Copy, Debug)]
pub struct PrismOptions {
    pub tol_stochastic: f64,
}

impl Default for PrismOptions {
    fn default() -> Self {
        Self { tol_stochastic: TOL_STOCHASTIC }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Rows from a `.tra` file. Duplicate entries add up; empty rows become
/// self-loops; rows off by at most the tolerance are renormalised.
pub fn parse_tra(text: &str, opts: PrismOptions) -> Result<Vec<SparseDistribution>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let nums: Vec<&str> = header.split_whitespace().collect();
    if nums.len() != 2 {
        return Err(parse_err(hline + 1, "header must be `states transitions`"));
    }
    let n: usize = nums[0].parse().map_err(|_| parse_err(hline + 1, "bad state count"))?;
    let m: usize = nums[1].parse().map_err(|_| parse_err(hline + 1, "bad transition count"))?;
    if n == 0 {
        return Err(Error::Empty);
    }
    let mut acc: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut count = 0;
    for (i, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(i + 1, format!("expected `src dst prob`, got {} fields", f.len())));
        }
        let s: usize = f[0].parse().map_err(|_| parse_err(i + 1, "bad source"))?;
        let t: usize = f[1].parse().map_err(|_| parse_err(i + 1, "bad target"))?;
        let p: f64 = f[2].parse().map_err(|_| parse_err(i + 1, "bad probability"))?;
        if s >= n || t >= n {
            return Err(parse_err(i + 1, format!("state out of range 0..{n}")));
        }
        if !p.is_finite() || !(0.0..=1.0 + opts.tol_stochastic).contains(&p) {
            return Err(parse_err(i + 1, format!("probability {p} out of range")));
        }
        *acc[s].entry(t).or_insert(0.0) += p;
        count += 1;
    }
    if count != m {
        return Err(parse_err(hline + 1, format!("header declares {m} transitions, found {count}")));
    }
    acc.into_iter()
        .enumerate()
        .map(|(s, row)| {
            if row.values().all(|&p| p == 0.0) {
                log::warn!("state {s} has no outgoing transitions; adding a self-loop");
                return Ok(SparseDistribution::point(s));
            }
            let d = SparseDistribution::new(row)?;
            let sum = d.mass();
            if (sum - 1.0).abs() > opts.tol_stochastic {
                return Err(Error::NonStochasticRow { state: s, sum });
            }
            if (sum - 1.0).abs() > 1e-12 {
                log::warn!("state {s}: row sums to {sum}; renormalising");
            }
            Ok(d.normalised())
        })
        .collect()
}

/// Per-state label names from a `.lab` file. States with several labels get
/// one composite label, the sorted names joined by `+`.
pub fn parse_lab(text: &str, n: usize) -> Result<Vec<String>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut ids: HashMap<usize, String> = HashMap::new();
    if let Some((i, header)) = lines.next() {
        for item in header.split_whitespace() {
            let (id, name) = item.split_once('=').ok_or_else(|| parse_err(i + 1, format!("bad declaration {item:?}")))?;
            let id: usize = id.parse().map_err(|_| parse_err(i + 1, format!("bad label id {id:?}")))?;
            ids.insert(id, name.trim_matches('"').to_string());
        }
    }
    let mut per_state: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, line) in lines {
        let (s, rest) = line.split_once(':').ok_or_else(|| parse_err(i + 1, "expected `state: ids`"))?;
        let s: usize = s.trim().parse().map_err(|_| parse_err(i + 1, "bad state"))?;
        if s >= n {
            return Err(parse_err(i + 1, format!("state {s} out of range 0..{n}")));
        }
        for id in rest.split_whitespace() {
            let id: usize = id.parse().map_err(|_| parse_err(i + 1, format!("bad label id {id:?}")))?;
            if !ids.contains_key(&id) {
                return Err(parse_err(i + 1, format!("undeclared label id {id}")));
            }
            per_state[s].push(id);
        }
    }
    Ok(per_state
        .into_iter()
        .map(|mut v| {
            v.sort_unstable();
            v.dedup();
            if v.is_empty() {
                UNLABELLED.to_string()
            } else {
                v.iter().map(|id| ids[id].as_str()).collect::<Vec<_>>().join("+")
            }
        })
        .collect())
}

pub fn chain_from_prism(tra: &str, lab: Option<&str>, opts: PrismOptions) -> Result<LabelledMarkovChain> {
    let rows = parse_tra(tra, opts)?;
    let n = rows.len();
    let names = match lab {
        Some(text) => parse_lab(text, n)?,
        None => vec![UNLABELLED.to_string(); n],
    };
    let mut label_names: Vec<String> = Vec::new();
    let mut index: HashMap<String, u32> = HashMap::new();
    let labels = names
        .into_iter()
        .map(|name| {
            let next = label_names.len() as u32;
            Label(*index.entry(name.clone()).or_insert_with(|| {
                label_names.push(name);
                next
            }))
        })
        .collect();
    LabelledMarkovChain::with_tolerance(label_names, labels, (0..n).map(|s| s.to_string()).collect(), rows, opts.tol_stochastic)
}

/// Reads `path` and, when present, the `.lab` file beside it.
pub fn read_prism(tra: &Path, lab: Option<&Path>, opts: PrismOptions) -> Result<LabelledMarkovChain> {
    let tra_text = std::fs::read_to_string(tra)?;
    let sibling = tra.with_extension("lab");
    let lab = lab.map(Path::to_path_buf).or_else(|| sibling.exists().then_some(sibling));
    let lab_text = lab.map(std::fs::read_to_string).transpose()?;
    chain_from_prism(&tra_text, lab_text.as_deref(), opts)
}
