//! Command-line front end: instance generation, single solves, objective
//! evaluation, and the benchmark sweep.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use subsetreg::bench::{self, BenchPlan, Method, SolveSettings};
use subsetreg::big_m::BigMMethod;
use subsetreg::dataset::{self, GeneratorMeta};
use subsetreg::objectives::{evaluate, ObjectiveKind, ObjectiveSpec};
use subsetreg::{Error, Result};

#[derive(Parser)]
#[command(name = "subsetreg", version, about = "Best-subset regression solvers")]
struct Cli {
    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance CSV plus a metadata sidecar.
    Generate {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path; the sidecar gets a .json extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one instance with a chosen method.
    Solve(SolveArgs),
    /// Evaluate an explicit subset of columns.
    Evaluate {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ObjectiveKind::Mae)]
        objective: ObjectiveKind,
        /// Comma-separated column names; empty selects no variables.
        #[arg(long, default_value = "")]
        subset: String,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
    /// Run the benchmark sweep and write report files.
    Bench {
        #[arg(long)]
        out_dir: PathBuf,
        /// Use the published large grid instead of the desk-scale default.
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-solve time limit in seconds.
        #[arg(long)]
        time_limit: Option<f64>,
    },
}

#[derive(Args)]
struct SolveArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ObjectiveKind::Mae)]
    objective: ObjectiveKind,
    #[arg(long, value_enum, default_value_t = Method::Mip)]
    method: Method,
    /// Seconds before the solver returns its best incumbent.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Core fraction: "auto" or a float in (0, 1].
    #[arg(long, default_value = "auto")]
    theta: String,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Coefficient-bound procedure for the MIP path.
    #[arg(long, value_name = "lp|size|heuristic|statistical")]
    big_m: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Root-node valid inequalities: on or off.
    #[arg(long, default_value = "off")]
    cuts: String,
    /// Iteration cap for the randomized core search.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Write the core-search iteration trace to this JSONL file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Dump the built model in LP text format to this path and exit.
    #[arg(long)]
    dump_model: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_theta(s: &str) -> Result<Option<f64>> {
    if s == "auto" {
        return Ok(None);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("theta must be 'auto' or a number, got {s}")))?;
    Ok(Some(v))
}

fn parse_big_m(s: &str) -> Result<BigMMethod> {
    match s {
        "lp" => Ok(BigMMethod::LpBased),
        "size" => Ok(BigMMethod::SizeBased),
        "heuristic" => Ok(BigMMethod::Heuristic),
        "statistical" => Ok(BigMMethod::Statistical),
        other => Err(Error::InvalidArgument(format!("unknown big-M method: {other}"))),
    }
}

fn run_solve(args: &SolveArgs) -> Result<serde_json::Value> {
    let inst = dataset::load_csv(&args.input)?;
    let spec = ObjectiveSpec::with_lambda(args.objective, args.lambda)?;
    let settings = SolveSettings {
        time_limit: args.time_limit.map(Duration::from_secs_f64),
        theta: parse_theta(&args.theta)?,
        big_m: args.big_m.as_deref().map(parse_big_m).transpose()?,
        seed: args.seed,
        use_cuts: match args.cuts.as_str() {
            "on" => true,
            "off" => false,
            other => {
                return Err(Error::InvalidArgument(format!("--cuts takes on or off, got {other}")))
            }
        },
        lambda: args.lambda,
        max_iters: args.max_iters,
    };
    if let Some(path) = &args.dump_model {
        let stats = dataset::compute_stats(&inst)?;
        let warm = subsetreg::heuristics::stepwise(&inst, &spec, (inst.n - 2).min(inst.m))?;
        let method = settings.big_m.unwrap_or(if inst.is_fat() {
            BigMMethod::Heuristic
        } else {
            BigMMethod::LpBased
        });
        let bm = subsetreg::big_m::compute(&inst, &stats, method, Some(&warm), settings.seed)?;
        let cap = if inst.is_fat() { Some(inst.n - 2) } else { None };
        let model =
            subsetreg::mip_models::build(&inst, &spec, &bm.m_x, &vec![bm.m_v; inst.m], cap)?;
        std::fs::write(path, model.export_lp_text())?;
        return Ok(json!({ "dumped": path }));
    }
    let outcome = bench::solve_instance(&inst, &spec, args.method, &settings)?;
    if let (Some(path), Method::CoreHeur | Method::CoreRand) = (&args.trace, args.method) {
        // Re-run cheaply is wasteful; instead the core drivers would need a
        // sink. The trace is produced by running the core method directly.
        let theta = settings.theta.unwrap_or_else(|| {
            subsetreg::heuristics::auto_theta(
                match args.method {
                    Method::CoreHeur => subsetreg::heuristics::CoreMethod::CoreHeuristic,
                    _ => subsetreg::heuristics::CoreMethod::CoreRandom,
                },
                spec.kind,
                inst.m,
                inst.n,
                settings.time_limit,
            )
        });
        let run = match args.method {
            Method::CoreHeur => {
                subsetreg::heuristics::core_heuristic(&inst, &spec, theta, settings.time_limit)?
            }
            _ => subsetreg::heuristics::core_random(
                &inst,
                &spec,
                theta,
                settings.time_limit,
                settings.max_iters.or(Some(10)),
                settings.seed,
            )?,
        };
        let mut lines = String::new();
        for row in &run.trace {
            lines.push_str(&serde_json::to_string(row)?);
            lines.push('\n');
        }
        std::fs::write(path, lines)?;
    }
    let subset_names: Vec<&str> = outcome
        .solution
        .subset
        .iter()
        .map(|&j| inst.var_names[j].as_str())
        .collect();
    let report = json!({
        "method": outcome.method,
        "objective_kind": spec.kind,
        "lambda": spec.lambda,
        "objective": outcome.solution.objective,
        "subset": subset_names,
        "subset_indices": outcome.solution.subset,
        "coefficients": outcome.solution.coefficients,
        "intercept": outcome.solution.intercept,
        "gap_ip": outcome.gap_ip,
        "nodes": outcome.nodes,
        "time_s": outcome.time_s,
        "bound": outcome.report.as_ref().map(|r| r.best_bound),
        "time_limit_hit": outcome.report.as_ref().map_or(false, |r| r.time_limit_hit),
        "cuts_applied": outcome.report.as_ref().map(|r| r.cuts_applied),
        "big_m": outcome.big_m,
        "phi": outcome.phi,
    });
    Ok(report)
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    match &cli.command {
        Command::Generate { m, n, seed, out } => {
            let inst = dataset::generate(*m, *n, *seed)?;
            dataset::save_csv(&inst, out)?;
            let meta = GeneratorMeta { m: *m, n: *n, seed: *seed, rho_seed: 0.2, b_sigma: 5.0 };
            let sidecar = out.with_extension("json");
            std::fs::write(&sidecar, serde_json::to_string_pretty(&meta)?)?;
            Ok(json!({ "csv": out, "meta": sidecar, "m": m, "n": n, "seed": seed }))
        }
        Command::Solve(args) => run_solve(args),
        Command::Evaluate { input, objective, subset, lambda } => {
            let inst = dataset::load_csv(input)?;
            let spec = ObjectiveSpec::with_lambda(*objective, *lambda)?;
            let mut indices = Vec::new();
            for name in subset.split(',').filter(|s| !s.is_empty()) {
                let j = inst
                    .var_names
                    .iter()
                    .position(|v| v == name)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown column: {name}")))?;
                indices.push(j);
            }
            indices.sort_unstable();
            indices.dedup();
            let value = evaluate(&inst, &indices, &spec)?;
            Ok(json!({ "objective_kind": spec.kind, "subset": subset, "objective": value }))
        }
        Command::Bench { out_dir, full, seed, time_limit } => {
            let mut plan = if *full { BenchPlan::full(*seed) } else { BenchPlan::desk(*seed) };
            if let Some(t) = time_limit {
                plan.time_limit_s = Some(*t);
            }
            let report = bench::run_bench(&plan, out_dir)?;
            let failures = report.rows.iter().filter(|r| r.error.is_some()).count();
            Ok(json!({
                "rows": report.rows.len(),
                "failures": failures,
                "out_dir": out_dir,
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match run(&cli) {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report).expect("serializable report");
            if let Command::Solve(args) = &cli.command {
                if let Some(out) = &args.out {
                    if let Err(e) = std::fs::write(out, &text) {
                        eprintln!("{}", json!({ "error": e.to_string(), "kind": "io" }));
                        return ExitCode::from(1);
                    }
                    println!("{}", json!({ "written": out }));
                    return ExitCode::SUCCESS;
                }
            }
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string(), "kind": error_kind(&e) }));
            ExitCode::from(1)
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::CsvParse { .. } => "csv-parse",
        Error::InvalidInstance(_) => "invalid-instance",
        Error::Io(_) => "io",
        Error::SingularSystem { .. } => "singular-system",
        Error::Cardinality { .. } => "cardinality",
        Error::LpNumeric(_) => "lp-numeric",
        Error::InconsistentBigM(_) => "inconsistent-big-m",
        Error::InvalidArgument(_) => "invalid-argument",
        Error::CsvWrite(_) => "csv-write",
        Error::Json(_) => "json",
    }
}
