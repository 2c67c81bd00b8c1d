//! `fdivkit`: batch front end over the fdivkit library.
//!
//! Exit status 0 on success, 1 when a checked property fails or a run is
//! refused, 2 on malformed or invalid input.

mod input;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

use fdivkit_core::calibration::calibration_check;
use fdivkit_core::divergences::{f_divergence, f_divergence_quantized};
use fdivkit_core::equivalence::{affine_equivalence_f, affine_equivalence_u, counterexample_search};
use fdivkit_core::experiment::argmax;
use fdivkit_core::losses::{generator_from_loss, loss_from_generator, loss_from_uncertainty, pointwise_bayes};
use fdivkit_core::quantize::{
    consistency_experiment, greedy_quantizer, optimal_quantizers, quantized_bayes_risk, ConsistencyConfig,
    QuantizerFamily, ENUMERATION_GUARD,
};
use fdivkit_core::selftest::run_selftest;
use fdivkit_core::uncertainty::statistical_information;
use fdivkit_core::{rng, CostMatrix, Error, LossFamily, UncertaintyFn};

use input::InputError;
use report::float;

#[derive(Parser)]
#[command(name = "fdivkit", version, about = "f-divergences, statistical information and surrogate losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// f-divergence of the class conditionals, optionally after quantizing.
    Div {
        #[arg(long)]
        experiment: String,
        /// Name, or {"name": ..., "k": ...}.
        #[arg(long)]
        generator: String,
        #[arg(long)]
        quantizer: Option<String>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Statistical information of an experiment under an uncertainty function.
    Info {
        #[arg(long)]
        experiment: String,
        /// Uncertainty kind or loss kind, or {"kind": ..., "k": ..., "C": ...}.
        #[arg(long)]
        uncertainty: String,
        #[arg(long)]
        quantizer: Option<String>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Tabulate the loss built from an uncertainty function or a generator.
    LossBuild {
        #[arg(long, conflicts_with = "generator")]
        uncertainty: Option<String>,
        #[arg(long)]
        generator: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        /// Grid steps per coordinate of α.
        #[arg(long, default_value_t = 8)]
        resolution: usize,
        /// α ranges over [−span, span] in every coordinate.
        #[arg(long, default_value_t = 2.0)]
        span: f64,
        #[arg(long)]
        out: Option<String>,
    },
    /// Compare two losses: affine fit of U or f, or a search for ranking flips.
    Equiv {
        #[arg(long, value_enum, default_value_t = EquivMode::U)]
        mode: EquivMode,
        #[arg(long)]
        loss_a: String,
        #[arg(long)]
        loss_b: String,
        #[arg(long)]
        k: Option<usize>,
        /// Grid resolution for U mode, lattice steps for f mode.
        #[arg(long)]
        resolution: Option<usize>,
        /// Lattice extent for f mode.
        #[arg(long, default_value_t = 4.0)]
        span: f64,
        #[arg(long, default_value_t = 100_000)]
        budget: u64,
        #[arg(long, default_value_t = 4)]
        max_columns: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<String>,
    },
    /// Calibration verdicts at random (π, i*) with i* suboptimal.
    Calibrate {
        #[arg(long)]
        loss: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<String>,
    },
    /// Best quantizers for an experiment under a loss.
    Quantize {
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        loss: String,
        #[arg(long)]
        max_codes: usize,
        #[arg(long)]
        out: Option<String>,
    },
    /// ERM consistency run over a schedule of sample sizes.
    Erm {
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        loss: String,
        /// Comma-separated sample sizes.
        #[arg(long, default_value = "100,1000,10000")]
        schedule: String,
        #[arg(long, default_value_t = 50)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Search all partitions with at most this many cells.
        #[arg(long, conflicts_with = "quantizer")]
        max_codes: Option<usize>,
        /// JSON list of candidate quantizers.
        #[arg(long)]
        quantizer: Option<String>,
        /// Target cost matrix; zero-one when absent.
        #[arg(long)]
        cost: Option<String>,
        #[arg(long)]
        force: bool,
        /// CSV gap curve: n, mean_gap, std_gap.
        #[arg(long)]
        curve: Option<String>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Run the invariant suite.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EquivMode {
    #[value(name = "U")]
    U,
    #[value(name = "f")]
    F,
    #[value(name = "search")]
    Search,
}

enum Failure {
    Input(String),
    Property(String),
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        Failure::Input(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Refused(_) => Failure::Property(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(format!("write failed: {e}"))
    }
}

type Run = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("FDIVKIT_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: FDIVKIT_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Property(msg)) => {
            eprintln!("failed: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> Run {
    match cmd {
        Command::Div { experiment, generator, quantizer, out } => div(&experiment, &generator, quantizer.as_deref(), out),
        Command::Info { experiment, uncertainty, quantizer, out } => {
            info(&experiment, &uncertainty, quantizer.as_deref(), out)
        }
        Command::LossBuild { uncertainty, generator, k, resolution, span, out } => {
            loss_build(uncertainty.as_deref(), generator.as_deref(), k, resolution, span, out)
        }
        Command::Equiv { mode, loss_a, loss_b, k, resolution, span, budget, max_columns, seed, out } => {
            equiv(mode, &loss_a, &loss_b, k, resolution, span, budget, max_columns, seed, out)
        }
        Command::Calibrate { loss, k, trials, seed, out } => calibrate(&loss, k, trials, seed, out),
        Command::Quantize { experiment, loss, max_codes, out } => quantize(&experiment, &loss, max_codes, out),
        Command::Erm { experiment, loss, schedule, reps, seed, max_codes, quantizer, cost, force, curve, out } => {
            let family = match (max_codes, quantizer) {
                (_, Some(q)) => QuantizerFamily::Explicit { quantizers: input::quantizer_list(&q)? },
                (Some(c), None) => QuantizerFamily::AllPartitions { max_codes: c },
                (None, None) => return Err(Failure::Input("erm needs --max-codes or --quantizer".into())),
            };
            erm(&experiment, &loss, &schedule, reps, seed, family, cost.as_deref(), force, curve, out)
        }
        Command::Selftest { seed, out } => selftest(seed, out),
    }
}

fn div(exp: &str, generator: &str, quantizer: Option<&str>, out: Option<String>) -> Run {
    let e = input::experiment(exp)?;
    let g = input::generator(generator, Some(e.k()))?;
    let q = quantizer.map(input::quantizer).transpose()?;
    let value = match &q {
        Some(q) => f_divergence_quantized(e.conditionals(), &g, q)?,
        None => f_divergence(e.conditionals(), &g)?,
    };
    #[derive(Serialize)]
    struct Body {
        value: f64,
        /// "inf" when the divergence is infinite (value is then null).
        #[serde(skip_serializing_if = "Option::is_none")]
        value_text: Option<String>,
        generator: String,
        k: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        quantizer: Option<Vec<usize>>,
    }
    let body = Body {
        value,
        value_text: (!value.is_finite()).then(|| float(value)),
        generator: g.name().to_string(),
        k: e.k(),
        quantizer: q.map(|q| q.assignment().to_vec()),
    };
    Ok(report::emit(&report::json(&body, 0), out.as_deref())?)
}

fn info(exp: &str, u: &str, quantizer: Option<&str>, out: Option<String>) -> Run {
    let e = input::experiment(exp)?;
    let u = input::uncertainty(u, Some(e.k()))?;
    let q = quantizer.map(input::quantizer).transpose()?;
    let rep = statistical_information(&e, &u, q.as_ref())?;
    #[derive(Serialize)]
    struct Body {
        uncertainty: String,
        #[serde(flatten)]
        report: fdivkit_core::InformationReport,
    }
    let body = Body { uncertainty: u.tag().to_string(), report: rep };
    Ok(report::emit(&report::json(&body, 0), out.as_deref())?)
}

fn loss_build(
    u: Option<&str>,
    g: Option<&str>,
    k: Option<usize>,
    resolution: usize,
    span: f64,
    out: Option<String>,
) -> Run {
    let loss: LossFamily = match (u, g) {
        (Some(u), None) => loss_from_uncertainty(input::uncertainty(u, k)?),
        (None, Some(g)) => loss_from_generator(input::generator(g, k)?).1,
        _ => return Err(Failure::Input("loss-build needs exactly one of --uncertainty or --generator".into())),
    };
    if resolution == 0 || !(span > 0.0) {
        return Err(Failure::Input("resolution must be positive and span > 0".into()));
    }
    let k = loss.k();
    let points = (resolution + 1).checked_pow(k as u32).filter(|&n| n <= 1_000_000);
    let Some(points) = points else {
        return Err(Failure::Input(format!("grid of ({resolution}+1)^{k} points is too large")));
    };
    let mut header: Vec<String> = (1..=k).map(|i| format!("alpha_{i}")).collect();
    header.extend((1..=k).map(|i| format!("loss_{i}")));
    let mut rows = Vec::with_capacity(points);
    for idx in 0..points {
        let mut rem = idx;
        let alpha: Vec<f64> = (0..k)
            .map(|_| {
                let j = rem % (resolution + 1);
                rem /= resolution + 1;
                -span + 2.0 * span * j as f64 / resolution as f64
            })
            .collect();
        let mut row: Vec<String> = alpha.iter().map(|&a| float(a)).collect();
        row.extend(loss.values(&alpha).into_iter().map(float));
        rows.push(row);
    }
    Ok(report::emit(&report::csv(&header, &rows), out.as_deref())?)
}

#[allow(clippy::too_many_arguments)]
fn equiv(
    mode: EquivMode,
    a: &str,
    b: &str,
    k: Option<usize>,
    resolution: Option<usize>,
    span: f64,
    budget: u64,
    max_columns: usize,
    seed: u64,
    out: Option<String>,
) -> Run {
    let la = input::loss(a, k)?;
    let lb = input::loss(b, Some(la.k()))?;
    if la.k() != lb.k() {
        return Err(Failure::Input(format!("losses have k = {} and k = {}", la.k(), lb.k())));
    }
    let k = la.k();
    #[derive(Serialize)]
    struct Body<T> {
        mode: &'static str,
        loss_a: String,
        loss_b: String,
        k: usize,
        #[serde(flatten)]
        result: T,
    }
    let text = match mode {
        EquivMode::U => {
            let fit = affine_equivalence_u(
                &UncertaintyFn::from_loss(la.clone()),
                &UncertaintyFn::from_loss(lb.clone()),
                resolution.unwrap_or(8),
            )?;
            let body = Body { mode: "U", loss_a: la.tag().into(), loss_b: lb.tag().into(), k, result: fit };
            report::json(&body, seed)
        }
        EquivMode::F => {
            let pi = vec![1.0 / k as f64; k];
            let ga = generator_from_loss(&la, &pi)?;
            let gb = generator_from_loss(&lb, &pi)?;
            let fit = affine_equivalence_f(&ga, &gb, span, resolution.unwrap_or(8))?;
            let body = Body { mode: "f", loss_a: la.tag().into(), loss_b: lb.tag().into(), k, result: fit };
            report::json(&body, seed)
        }
        EquivMode::Search => {
            let found = counterexample_search(&la, &lb, k, max_columns, budget, seed)?;
            let body = Body { mode: "search", loss_a: la.tag().into(), loss_b: lb.tag().into(), k, result: found };
            report::json(&body, seed)
        }
    };
    Ok(report::emit(&text, out.as_deref())?)
}

fn calibrate(loss: &str, k: Option<usize>, trials: usize, seed: u64, out: Option<String>) -> Run {
    let l = input::loss(loss, k)?;
    let k = l.k();
    let cost = l.cost_matrix().filter(|c| *c != CostMatrix::zero_one(k));
    let mut header = vec!["trial".to_string()];
    header.extend((1..=k).map(|i| format!("pi_{i}")));
    header.extend(["istar", "margin", "verdict"].map(String::from));
    let mut rows = Vec::with_capacity(trials);
    let mut r = rng::stream(seed, 0);
    while rows.len() < trials {
        let pi = rng::simplex(&mut r, k);
        let istar = r.random_range(0..k);
        let suboptimal = match &cost {
            Some(c) => c.column_risk(&pi, istar) > c.min_column_risk(&pi).0,
            None => pi[istar] < pi[argmax(&pi)],
        };
        if !suboptimal {
            continue;
        }
        let v = calibration_check(&l, &pi, istar, cost.as_ref())?;
        let mut row = vec![rows.len().to_string()];
        row.extend(pi.iter().map(|&p| float(p)));
        row.extend([istar.to_string(), float(v.margin), v.verdict.to_string()]);
        rows.push(row);
    }
    Ok(report::emit(&report::csv(&header, &rows), out.as_deref())?)
}

fn quantize(exp: &str, loss: &str, max_codes: usize, out: Option<String>) -> Run {
    let e = input::experiment(exp)?;
    let l = input::loss(loss, Some(e.k()))?;
    #[derive(Serialize)]
    struct Body {
        loss: String,
        max_codes: usize,
        /// True when the alphabet is too large for exhaustive search.
        approximate: bool,
        risk: f64,
        information: f64,
        best: Vec<Vec<usize>>,
    }
    let (best, approximate) = if e.m() > ENUMERATION_GUARD {
        (vec![greedy_quantizer(&e, &l, max_codes)?.0], true)
    } else {
        (optimal_quantizers(&e, &l, max_codes)?, false)
    };
    let risk = quantized_bayes_risk(&e, &l, &best[0])?;
    let body = Body {
        loss: l.tag().into(),
        max_codes,
        approximate,
        risk,
        information: pointwise_bayes(&l, e.prior()).value - risk,
        best: best.iter().map(|q| q.assignment().to_vec()).collect(),
    };
    Ok(report::emit(&report::json(&body, 0), out.as_deref())?)
}

#[allow(clippy::too_many_arguments)]
fn erm(
    exp: &str,
    loss: &str,
    schedule: &str,
    reps: usize,
    seed: u64,
    family: QuantizerFamily,
    cost: Option<&str>,
    force: bool,
    curve: Option<String>,
    out: Option<String>,
) -> Run {
    let e = input::experiment(exp)?;
    let l = input::loss(loss, Some(e.k()))?;
    let cost = match cost {
        Some(c) => input::cost(c)?,
        None => CostMatrix::zero_one(e.k()),
    };
    if reps == 0 {
        return Err(Failure::Input("reps must be positive".into()));
    }
    let cfg = ConsistencyConfig { schedule: input::schedule(schedule)?, reps, seed, family, cost, force };
    let rep = consistency_experiment(&e, &l, &cfg)?;
    if let Some(path) = curve {
        let header = ["n", "mean_gap", "std_gap"].map(String::from);
        let rows: Vec<Vec<String>> =
            rep.rows.iter().map(|r| vec![r.n.to_string(), float(r.mean_gap), float(r.std_gap)]).collect();
        report::emit(&report::csv(&header, &rows), Some(&path))?;
    }
    #[derive(Serialize)]
    struct Body<'a> {
        loss: String,
        config: &'a ConsistencyConfig,
        #[serde(flatten)]
        report: &'a fdivkit_core::quantize::ConsistencyReport,
    }
    let body = Body { loss: l.tag().into(), config: &cfg, report: &rep };
    Ok(report::emit(&report::json(&body, seed), out.as_deref())?)
}

fn selftest(seed: u64, out: Option<String>) -> Run {
    let checks = run_selftest(seed);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    #[derive(Serialize)]
    struct Body<'a> {
        passed: bool,
        checks: &'a [fdivkit_core::selftest::CheckOutcome],
    }
    report::emit(&report::json(&Body { passed: failed.is_empty(), checks: &checks }, seed), out.as_deref())?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Property(format!("selftest checks failed: {}", failed.join(", "))))
    }
}
