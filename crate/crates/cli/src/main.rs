use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use mcmin::bench::{build_model, parse_order, run_manifest};
use mcmin::io::json::{self, CertificateDoc, QuotientDoc, ReadOptions, TraceDoc};
use mcmin::io::manifest::{to_tsv, Manifest, ResultsDoc};
use mcmin::lmc::{LabelledMarkovChain, TOL_EXACT, TOL_STOCHASTIC};
use mcmin::local::minimise_local_with;
use mcmin::perturb::{perturb_chain, planted_chain, sample_chain, PerturbModel, SamplingPlan};
use mcmin::{fixtures, minimise_apr, verify_epsilon_quotient, Error, RefinementConfig, Verdict};

const EXIT_VERIFY: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_NO_INPUT: u8 = 66;
const EXIT_INTERNAL: u8 = 70;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(name = "mcmin", version, about = "Approximate minimisation of labelled Markov chains")]
struct Cli {
    /// Seed for generators and perturbations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for bench.
    #[arg(long, global = true, env = "MCMIN_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true, default_value_t = TOL_STOCHASTIC)]
    tol_stochastic: f64,
    #[arg(long, global = true, default_value_t = TOL_EXACT)]
    tol_exact: f64,
    /// Reject unknown JSON fields instead of warning.
    #[arg(long, global = true)]
    strict: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Local,
    Apr,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Noise,
    Sample,
}

#[derive(Subcommand)]
enum Command {
    /// Exact bisimulation quotient and state mapping.
    Quotient {
        /// Chain file (`.json` or `.tra`), model spec, or `-` for stdin.
        #[arg(default_value = "-")]
        model: String,
    },
    /// Approximate minimisation; prints the trace.
    Minimise {
        #[arg(default_value = "-")]
        model: String,
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long)]
        eps2: f64,
        /// `input`, `seed:N` or `file:PATH`.
        #[arg(long, default_value = "input")]
        order: String,
        #[arg(long)]
        emit_witnesses: bool,
        /// Also write the final chain here.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Random perturbation or empirical resampling of a chain.
    Perturb {
        #[arg(default_value = "-")]
        model: String,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, value_enum, default_value = "noise")]
        mode: Mode,
    },
    /// Checks a certificate (or a trace with witnesses). Exit 2 on failure.
    Verify {
        #[arg(default_value = "-")]
        certificate: String,
    },
    /// Prints a generated chain.
    Gen {
        #[command(subcommand)]
        which: Gen,
    },
    /// Runs an experiment manifest.
    Bench {
        manifest: PathBuf,
        #[arg(long)]
        tsv_out: Option<PathBuf>,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Gen {
    Fig1 {
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
    Fig4 {
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
    },
    Fig8,
    Example5 {
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
    SubsetSum {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<u32>,
        #[arg(long)]
        target: u32,
    },
    /// Member M(k) of the hardness family.
    FamilyM {
        #[arg(long)]
        k: usize,
        /// Defaults to the largest admissible value.
        #[arg(long)]
        eps: Option<f64>,
    },
    Planted {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        branching: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::VerificationFailed(_) => EXIT_VERIFY,
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_NO_INPUT,
        Error::Io(_) => EXIT_IO,
        Error::Empty
        | Error::NonStochasticRow { .. }
        | Error::InvalidProbability { .. }
        | Error::TargetOutOfRange { .. }
        | Error::UnknownLabel { .. }
        | Error::NotADistribution(_)
        | Error::Parse { .. }
        | Error::SchemaVersionMismatch { .. }
        | Error::Validation(_)
        | Error::Json(_)
        | Error::InvalidPartition(_)
        | Error::NotLumpable { .. }
        | Error::LabelMismatch { .. }
        | Error::ChainMismatch(_)
        | Error::TooLarge(_) => EXIT_DATA,
        Error::SameState(_) | Error::StateOutOfRange(_) => EXIT_USAGE,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::VerificationFailed(_) => "verification_failed",
        Error::InvalidArgument(_) | Error::SameState(_) | Error::StateOutOfRange(_) => "usage",
        Error::Io(_) => "io",
        Error::Parse { .. } | Error::Json(_) => "parse",
        Error::SchemaVersionMismatch { .. } => "schema_version",
        _ => "data",
    }
}

fn report(kind: &str, message: &str, code: u8) -> ExitCode {
    let doc = json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{doc}");
    ExitCode::from(code)
}

struct Ctx {
    seed: u64,
    format: Option<Format>,
    opts: ReadOptions,
    tol_exact: f64,
}

fn read_input(path: &str) -> mcmin::Result<String> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        Ok(std::fs::read_to_string(path)?)
    }
}

/// `-` reads stdin; an existing path is read as a file; anything else is
/// tried as a model spec.
fn read_model(spec: &str, ctx: &Ctx) -> mcmin::Result<LabelledMarkovChain> {
    if spec == "-" {
        return mcmin::io::parse_chain(&read_input(spec)?, ctx.opts);
    }
    if Path::new(spec).exists() {
        return mcmin::io::read_chain_file(Path::new(spec), ctx.opts);
    }
    build_model(spec, ctx.seed, ctx.opts)
}

fn emit(text: &str) -> mcmin::Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn chain_only(ctx: &Ctx) -> mcmin::Result<()> {
    if ctx.format == Some(Format::Tsv) {
        return Err(Error::InvalidArgument("chains are only written as JSON".into()));
    }
    Ok(())
}

fn run(cmd: Command, ctx: &Ctx) -> mcmin::Result<()> {
    match cmd {
        Command::Quotient { model } => {
            let m = read_model(&model, ctx)?;
            let q = mcmin::bisim::exact_quotient_with(&m, ctx.tol_exact);
            if ctx.format == Some(Format::Tsv) {
                let mut out = String::from("state\tname\tblock\n");
                for (s, b) in q.mapping.iter().enumerate() {
                    out.push_str(&format!("{s}\t{}\t{b}\n", m.name(s)));
                }
                emit(&out)
            } else {
                emit(&json::to_json(&QuotientDoc::new(&q)))
            }
        }
        Command::Minimise { model, algo, eps2, order, emit_witnesses, model_out } => {
            if !(eps2.is_finite() && eps2 >= 0.0) {
                return Err(Error::InvalidArgument(format!("eps2 must be a non-negative number, got {eps2}")));
            }
            let m = read_model(&model, ctx)?;
            let trace = match algo {
                Algo::Local => minimise_local_with(&m, eps2, ctx.tol_exact),
                Algo::Apr => {
                    let config = RefinementConfig { eps2, order: parse_order(&order)?, tol_exact: ctx.tol_exact };
                    minimise_apr(&m, &config)?
                }
            };
            log::info!(
                "{} states -> {} states in {} iterations, bound {}",
                m.n_states(),
                trace.final_chain().n_states(),
                trace.iterations(),
                trace.bound()
            );
            if let Some(path) = model_out {
                std::fs::write(path, json::chain_to_json(trace.final_chain()))?;
            }
            if ctx.format == Some(Format::Tsv) {
                let last = trace.final_chain();
                emit(&format!(
                    "algorithm\teps2\tinput_states\tstates\ttransitions\titerations\tbound\n{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    trace.algorithm.as_str(),
                    eps2,
                    m.n_states(),
                    last.n_states(),
                    last.n_transitions(),
                    trace.iterations(),
                    trace.bound()
                ))
            } else {
                emit(&json::trace_to_json(&trace, emit_witnesses)?)
            }
        }
        Command::Perturb { model, eps, delta, mode } => {
            chain_only(ctx)?;
            let truth = read_model(&model, ctx)?;
            let out = match mode {
                Mode::Noise => perturb_chain(&truth, &PerturbModel::new(eps, delta)?, ctx.seed),
                Mode::Sample => sample_chain(&truth, &SamplingPlan::for_chain(&truth, eps, delta)?, ctx.seed)?,
            };
            emit(&json::chain_to_json(&out))
        }
        Command::Verify { certificate } => {
            let text = read_input(&certificate)?;
            let verdicts: Vec<(String, Verdict)> = match json::document_kind(&text)?.as_str() {
                "certificate" => {
                    let doc: CertificateDoc = serde_json::from_str(&text)?;
                    vec![("certificate".into(), verify_epsilon_quotient(&doc.to_certificate(ctx.opts)?))]
                }
                "trace" => {
                    let doc: TraceDoc = json::trace_from_json(&text)?;
                    let mut v: Vec<(String, Verdict)> = doc
                        .certificates(ctx.opts)?
                        .iter()
                        .enumerate()
                        .map(|(i, c)| (format!("step {}", i + 1), verify_epsilon_quotient(c)))
                        .collect();
                    if let Some(c) = &doc.composed {
                        v.push(("composed".into(), verify_epsilon_quotient(&c.to_certificate(ctx.opts)?)));
                    }
                    v
                }
                k => return Err(Error::Validation(format!("cannot verify a {k} document"))),
            };
            let passed = verdicts.iter().all(|(_, v)| v.passed);
            let mut failures = Vec::new();
            for (what, v) in &verdicts {
                for f in &v.failures {
                    eprintln!("{what}: {f}");
                    failures.push(format!("{what}: {f}"));
                }
            }
            let max_dev = verdicts.iter().map(|(_, v)| v.max_row_deviation).fold(0.0, f64::max);
            emit(&format!(
                "{}\n",
                json!({ "passed": passed, "checked": verdicts.len(), "max_row_deviation": max_dev, "failures": failures })
            ))?;
            if passed {
                Ok(())
            } else {
                Err(Error::VerificationFailed(failures))
            }
        }
        Command::Gen { which } => {
            chain_only(ctx)?;
            let m = match which {
                Gen::Fig1 { eps } => fixtures::fig1(eps),
                Gen::Fig4 { eps } => fixtures::fig4(eps),
                Gen::Fig8 => fixtures::fig8(),
                Gen::Example5 { eps } => fixtures::example5(eps),
                Gen::SubsetSum { p, target } => {
                    let (m, eps, k) = fixtures::subset_sum_chain(&p, target)?;
                    log::info!("decide a {k}-state quotient at eps = {eps}");
                    m
                }
                Gen::FamilyM { k, eps } => {
                    if k == 0 {
                        return Err(Error::InvalidArgument("k must be at least 1".into()));
                    }
                    let max = fixtures::family_eps_max(k);
                    let eps = eps.unwrap_or(max);
                    if !(eps > 0.0 && eps <= max) {
                        return Err(Error::InvalidArgument(format!("eps must lie in (0, {max}]")));
                    }
                    fixtures::family_m_index(k, eps)
                }
                Gen::Planted { m, n, branching } => {
                    if m == 0 || n < m || branching == 0 {
                        return Err(Error::InvalidArgument("need 0 < m <= n and branching > 0".into()));
                    }
                    planted_chain(m, n, branching, ctx.seed).0
                }
            };
            emit(&json::chain_to_json(&m))
        }
        Command::Bench { manifest, tsv_out, json_out } => {
            let manifest = Manifest::parse(&read_input(&manifest.to_string_lossy())?, ctx.opts)?;
            let rows = run_manifest(&manifest, ctx.opts);
            let tsv = to_tsv(&rows);
            let doc = json::to_json(&ResultsDoc::new(rows));
            if let Some(p) = tsv_out {
                std::fs::write(p, &tsv)?;
            }
            if let Some(p) = json_out {
                std::fs::write(p, &doc)?;
            }
            match ctx.format {
                Some(Format::Json) => emit(&doc),
                _ => emit(&tsv),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            return report("usage", msg.trim(), EXIT_USAGE);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report("internal", &e.to_string(), EXIT_INTERNAL);
        }
    }
    let ctx = Ctx {
        seed: cli.seed,
        format: cli.format,
        opts: ReadOptions { strict: cli.strict, tol_stochastic: cli.tol_stochastic },
        tol_exact: cli.tol_exact,
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli.command, &ctx)));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => report(error_kind(&e), &e.to_string(), exit_code(&e)),
        Err(_) => report("internal", "internal error", EXIT_INTERNAL),
    }
}
