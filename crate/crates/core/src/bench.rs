//! Runs experiment manifests: build, perturb, minimise, verify, tabulate.

use std::path::Path;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::bisim::exact_quotient;
use crate::error::{Error, Result};
use crate::fixtures::{self, FamilyKind};
use crate::io::manifest::{AlgorithmChoice, Experiment, Manifest, NoiseMode, ResultRow};
use crate::io::{prism, ReadOptions};
use crate::lmc::LabelledMarkovChain;
use crate::local::minimise_local;
use crate::perturb::{perturb_chain, planted_chain, sample_chain, PerturbModel, SamplingPlan};
use crate::refine::{minimise_apr, OrderPolicy, RefinementConfig};
use crate::trace::{Algorithm, MinimisationTrace};
use crate::witness::verify_epsilon_quotient;

pub const DEFAULT_TIMEOUT_SECS: f64 = 7200.0;

fn num<T: std::str::FromStr>(spec: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::InvalidArgument(format!("model {spec:?}: bad number {s:?}")))
}

/// Builds a chain from a model spec.
///
/// Specs: `fig1:EPS`, `fig4:EPS`, `fig8`, `example5:EPS`,
/// `family-m:odd|even:N:EPS`, `subset-sum:P1,P2,…:TARGET`,
/// `planted:M:N[:BRANCHING]`, `random:N[:BRANCHING[:LABELS]]`,
/// `prism:TRA[:LAB]`, or a path to a `.json` or `.tra` file.
/// Random models take `seed`.
pub fn build_model(spec: &str, seed: u64, opts: ReadOptions) -> Result<LabelledMarkovChain> {
    let parts: Vec<&str> = spec.split(':').collect();
    let arg = |i: usize| parts.get(i).copied().ok_or_else(|| Error::InvalidArgument(format!("model {spec:?}: missing field {i}")));
    match parts[0] {
        "fig1" => Ok(fixtures::fig1(num(spec, arg(1)?)?)),
        "fig4" => Ok(fixtures::fig4(num(spec, arg(1)?)?)),
        "fig8" => Ok(fixtures::fig8()),
        "example5" => Ok(fixtures::example5(num(spec, arg(1)?)?)),
        "family-m" => {
            let kind = match arg(1)? {
                "odd" => FamilyKind::Odd,
                "even" => FamilyKind::Even,
                k => return Err(Error::InvalidArgument(format!("family kind {k:?}"))),
            };
            let n: usize = num(spec, arg(2)?)?;
            if n == 0 {
                return Err(Error::InvalidArgument("family index must be positive".into()));
            }
            Ok(fixtures::family_m(kind, n, num(spec, arg(3)?)?))
        }
        "subset-sum" => {
            let p = arg(1)?.split(',').map(|x| num(spec, x)).collect::<Result<Vec<u32>>>()?;
            Ok(fixtures::subset_sum_chain(&p, num(spec, arg(2)?)?)?.0)
        }
        "planted" => {
            let m: usize = num(spec, arg(1)?)?;
            let n: usize = num(spec, arg(2)?)?;
            let b: usize = parts.get(3).map_or(Ok(3), |x| num(spec, x))?;
            if m == 0 || n < m || b == 0 {
                return Err(Error::InvalidArgument(format!("model {spec:?}: need 0 < m ≤ n, branching > 0")));
            }
            Ok(planted_chain(m, n, b, seed).0)
        }
        "random" => {
            let n: usize = num(spec, arg(1)?)?;
            let b: usize = parts.get(2).map_or(Ok(3), |x| num(spec, x))?;
            let l: usize = parts.get(3).map_or(Ok(2), |x| num(spec, x))?;
            if n == 0 || b == 0 || l == 0 {
                return Err(Error::InvalidArgument(format!("model {spec:?}: sizes must be positive")));
            }
            Ok(fixtures::random_chain(seed, n, b, l))
        }
        "prism" => {
            let lab = parts.get(2).map(Path::new);
            prism::read_prism(Path::new(arg(1)?), lab, prism::PrismOptions { tol_stochastic: opts.tol_stochastic })
        }
        _ => crate::io::read_chain_file(Path::new(spec), opts),
    }
}

/// `input`, `seed:N`, or `file:PATH` holding a whitespace-separated
/// permutation of state indices.
pub fn parse_order(s: &str) -> Result<OrderPolicy> {
    if s == "input" {
        return Ok(OrderPolicy::Input);
    }
    if let Some(n) = s.strip_prefix("seed:") {
        return n.parse().map(OrderPolicy::Seeded).map_err(|_| Error::InvalidArgument(format!("bad order seed {n:?}")));
    }
    if let Some(path) = s.strip_prefix("file:") {
        let text = std::fs::read_to_string(path)?;
        let v = text
            .split(|c: char| c.is_whitespace() || c == ',' || c == '[' || c == ']')
            .filter(|w| !w.is_empty())
            .map(|w| w.parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad state index {w:?}"))))
            .collect::<Result<Vec<_>>>()?;
        return Ok(OrderPolicy::Explicit(v));
    }
    Err(Error::InvalidArgument(format!("order must be input, seed:N or file:PATH, got {s:?}")))
}

/// Runs either algorithm with the given parameters.
pub fn minimise(chain: &LabelledMarkovChain, algorithm: Algorithm, eps2: f64, order: &OrderPolicy) -> Result<MinimisationTrace> {
    match algorithm {
        Algorithm::Local => Ok(minimise_local(chain, eps2)),
        Algorithm::Apr => minimise_apr(chain, &RefinementConfig::new(eps2).with_order(order.clone())),
    }
}

/// Every step certificate and the composed one pass verification.
pub fn verify_trace(trace: &MinimisationTrace) -> Result<bool> {
    if !trace.steps.iter().all(|s| verify_epsilon_quotient(&s.certificate).passed) {
        return Ok(false);
    }
    Ok(verify_epsilon_quotient(&trace.composed()?).passed)
}

struct Prepared {
    model: String,
    seed: u64,
    perturbed: LabelledMarkovChain,
    truth_states: usize,
    header: Vec<ResultRow>,
}

fn header_row(model: &str, seed: u64, variant: &str, m: &LabelledMarkovChain) -> ResultRow {
    ResultRow {
        model: model.into(),
        seed,
        variant: variant.into(),
        algorithm: None,
        eps2: None,
        states: Some(m.n_states()),
        transitions: Some(m.n_transitions()),
        iterations: None,
        recovered: None,
        verified: None,
        status: "ok".into(),
        wall_ms: None,
    }
}

fn error_row(model: &str, seed: u64, variant: &str, e: &Error) -> ResultRow {
    ResultRow {
        model: model.into(),
        seed,
        variant: variant.into(),
        algorithm: None,
        eps2: None,
        states: None,
        transitions: None,
        iterations: None,
        recovered: None,
        verified: None,
        status: format!("error: {e}"),
        wall_ms: None,
    }
}

fn prepare(e: &Experiment, seed: u64, opts: ReadOptions) -> Result<Prepared> {
    let truth = build_model(&e.model, seed, opts)?;
    let perturbed = match e.mode {
        NoiseMode::Noise => perturb_chain(&truth, &PerturbModel::new(e.eps, e.delta)?, seed),
        NoiseMode::Sample => sample_chain(&truth, &SamplingPlan::for_chain(&truth, e.eps, e.delta)?, seed)?,
    };
    let truth_q = exact_quotient(&truth).quotient;
    let header = vec![
        header_row(&e.model, seed, "M", &truth),
        header_row(&e.model, seed, "M/~", &truth_q),
        header_row(&e.model, seed, "M'/~", &exact_quotient(&perturbed).quotient),
    ];
    Ok(Prepared { model: e.model.clone(), seed, perturbed, truth_states: truth_q.n_states(), header })
}

struct Cell {
    algorithm: Algorithm,
    eps2: f64,
    order: OrderPolicy,
    verify: bool,
    timeout: Duration,
}

struct Outcome {
    states: usize,
    transitions: usize,
    iterations: usize,
    verified: Option<bool>,
    wall_ms: f64,
}

fn run_cell(p: &Prepared, c: &Cell) -> ResultRow {
    let (tx, rx) = mpsc::channel();
    let chain = p.perturbed.clone();
    let (algorithm, eps2, order, verify) = (c.algorithm, c.eps2, c.order.clone(), c.verify);
    std::thread::spawn(move || {
        let run = || -> Result<Outcome> {
            let start = Instant::now();
            let t = minimise(&chain, algorithm, eps2, &order)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let verified = if verify { Some(verify_trace(&t)?) } else { None };
            let last = t.final_chain();
            Ok(Outcome {
                states: last.n_states(),
                transitions: last.n_transitions(),
                iterations: t.iterations(),
                verified,
                wall_ms,
            })
        };
        let _ = tx.send(run());
    });
    let mut row = ResultRow {
        model: p.model.clone(),
        seed: p.seed,
        variant: "result".into(),
        algorithm: Some(c.algorithm.as_str().into()),
        eps2: Some(c.eps2),
        states: None,
        transitions: None,
        iterations: None,
        recovered: None,
        verified: None,
        status: "ok".into(),
        wall_ms: None,
    };
    match rx.recv_timeout(c.timeout) {
        Ok(Ok(o)) => {
            row.states = Some(o.states);
            row.transitions = Some(o.transitions);
            row.iterations = Some(o.iterations);
            row.recovered = Some(o.states == p.truth_states);
            row.verified = o.verified;
            row.wall_ms = Some(o.wall_ms);
        }
        Ok(Err(e)) => row.status = format!("error: {e}"),
        Err(mpsc::RecvTimeoutError::Timeout) => row.status = "timeout".into(),
        Err(mpsc::RecvTimeoutError::Disconnected) => row.status = "error: worker panicked".into(),
    }
    row
}

/// All rows of a manifest, in manifest order. Cells run in parallel on the
/// current rayon pool.
pub fn run_manifest(manifest: &Manifest, opts: ReadOptions) -> Vec<ResultRow> {
    let jobs: Vec<(&Experiment, u64)> =
        manifest.experiments.iter().flat_map(|e| e.seeds.iter().map(move |&s| (e, s))).collect();
    jobs.par_iter()
        .flat_map_iter(|&(e, seed)| {
            let prepared = match prepare(e, seed, opts) {
                Ok(p) => p,
                Err(err) => return vec![error_row(&e.model, seed, "M", &err)],
            };
            let order = match parse_order(&e.order) {
                Ok(o) => o,
                Err(err) => return vec![error_row(&e.model, seed, "result", &err)],
            };
            let algorithms: &[Algorithm] = match e.algorithm {
                AlgorithmChoice::Local => &[Algorithm::Local],
                AlgorithmChoice::Apr => &[Algorithm::Apr],
                AlgorithmChoice::Both => &[Algorithm::Local, Algorithm::Apr],
            };
            let timeout = Duration::from_secs_f64(e.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS));
            let cells: Vec<Cell> = e
                .eps2
                .iter()
                .flat_map(|&eps2| {
                    algorithms.iter().map(move |&algorithm| (algorithm, eps2))
                })
                .map(|(algorithm, eps2)| Cell { algorithm, eps2, order: order.clone(), verify: e.verify, timeout })
                .collect();
            let results: Vec<ResultRow> = cells.par_iter().map(|c| run_cell(&prepared, c)).collect();
            let mut rows = prepared.header;
            rows.extend(results);
            rows
        })
        .collect()
}
