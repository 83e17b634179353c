//! Benchmark harness: a desk-scale instance grid, a shared method driver,
//! and CSV/JSON report emission.

use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::big_m::{self, BigMMethod, BigMResult};
use crate::branch_and_bound::{exhaustive, solve_mip, SolveReport};
use crate::dataset::{compute_stats, generate, Instance};
use crate::heuristics::{self, auto_theta, CoreMethod};
use crate::mip_models::build;
use crate::objectives::{ObjectiveKind, ObjectiveSpec, SubsetSolution};
use crate::Result;

/// Solution methods exposed by the harness and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mip,
    Stepwise,
    CoreHeur,
    CoreRand,
    Exhaustive,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Mip => "mip",
            Method::Stepwise => "stepwise",
            Method::CoreHeur => "core-heur",
            Method::CoreRand => "core-rand",
            Method::Exhaustive => "exhaustive",
        };
        f.write_str(s)
    }
}

/// Generates an instance of any width by drawing the next multiple-of-five
/// column pool and keeping the first `m` columns; the correlation structure
/// of the kept columns is unchanged.
pub fn generate_any(m: usize, n: usize, seed: u64) -> Result<Instance> {
    let pool = m.div_ceil(5) * 5;
    let full = generate(pool, n, seed)?;
    if pool == m {
        return Ok(full);
    }
    let cols: Vec<usize> = (0..m).collect();
    Ok(full.restrict_columns(&cols))
}

/// Knobs shared by the CLI `solve` command and the bench rows.
#[derive(Debug, Clone)]
pub struct SolveSettings {
    pub time_limit: Option<Duration>,
    /// Core fraction; `None` selects the documented defaults.
    pub theta: Option<f64>,
    /// Coefficient-bound procedure; `None` picks LP-based for thin
    /// instances and the incumbent-based bound for fat ones.
    pub big_m: Option<BigMMethod>,
    pub seed: u64,
    pub use_cuts: bool,
    pub lambda: f64,
    /// Iteration cap for the randomized core search (reproducible runs).
    pub max_iters: Option<usize>,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            time_limit: None,
            theta: None,
            big_m: None,
            seed: 0,
            use_cuts: false,
            lambda: 1.0,
            max_iters: None,
        }
    }
}

/// Everything a single method run produces.
#[derive(Debug, Clone, Serialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub solution: SubsetSolution,
    pub gap_ip: f64,
    pub nodes: u64,
    pub time_s: f64,
    /// Big-M bookkeeping; its compute time is excluded from `time_s`.
    pub big_m: Option<BigMResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<SolveReport>,
    /// Optimum-coverage floor of the randomized core search, if applicable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
}

/// Runs one method on one instance. The stepwise warm start is computed
/// internally where a method needs one.
pub fn solve_instance(
    inst: &Instance,
    spec: &ObjectiveSpec,
    method: Method,
    settings: &SolveSettings,
) -> Result<MethodOutcome> {
    let cap = if inst.is_fat() { Some(inst.n - 2) } else { None };
    let p_max = cap.unwrap_or(inst.n - 2).min(inst.m);
    match method {
        Method::Stepwise => {
            let t = Instant::now();
            let sol = heuristics::stepwise(inst, spec, p_max)?;
            Ok(MethodOutcome {
                method,
                solution: sol,
                gap_ip: 0.0,
                nodes: 0,
                time_s: t.elapsed().as_secs_f64(),
                big_m: None,
                report: None,
                phi: None,
            })
        }
        Method::Exhaustive => {
            let t = Instant::now();
            let sol = exhaustive(inst, spec, cap)?;
            Ok(MethodOutcome {
                method,
                solution: sol,
                gap_ip: 0.0,
                nodes: 1 << inst.m,
                time_s: t.elapsed().as_secs_f64(),
                big_m: None,
                report: None,
                phi: None,
            })
        }
        Method::Mip => {
            let warm = heuristics::stepwise(inst, spec, p_max)?;
            let stats = compute_stats(inst)?;
            let bm_method = settings.big_m.unwrap_or(if inst.is_fat() {
                BigMMethod::Heuristic
            } else {
                BigMMethod::LpBased
            });
            let bm = big_m::compute(inst, &stats, bm_method, Some(&warm), settings.seed)?;
            let t = Instant::now();
            // An unproven coefficient bound can cut off the optimum. Re-solve
            // with doubled bounds until the objective stops improving; proven
            // bounds solve once.
            let mut m_x = bm.m_x.clone();
            let mut report: Option<SolveReport> = None;
            for _ in 0..4 {
                let model = build(inst, spec, &m_x, &vec![bm.m_v; inst.m], cap)?;
                let r = solve_mip(inst, &model, &warm, settings.time_limit, settings.use_cuts)?;
                let stable = report
                    .as_ref()
                    .map_or(false, |prev| r.incumbent.objective >= prev.incumbent.objective - 1e-9);
                let combinatorial = model.quadratic_balance || model.cap.is_some();
                let stop = combinatorial
                    || bm.validity == big_m::Validity::Proven
                    || stable
                    || r.time_limit_hit;
                report = Some(r);
                if stop {
                    break;
                }
                for v in &mut m_x {
                    *v *= 2.0;
                }
            }
            let report = report.expect("at least one solve");
            Ok(MethodOutcome {
                method,
                solution: report.incumbent.clone(),
                gap_ip: report.gap_ip,
                nodes: report.nodes,
                time_s: t.elapsed().as_secs_f64(),
                big_m: Some(bm),
                report: Some(report),
                phi: None,
            })
        }
        Method::CoreHeur => {
            let theta = settings.theta.unwrap_or_else(|| {
                auto_theta(CoreMethod::CoreHeuristic, spec.kind, inst.m, inst.n, settings.time_limit)
            });
            let t = Instant::now();
            let run = heuristics::core_heuristic(inst, spec, theta, settings.time_limit)?;
            Ok(MethodOutcome {
                method,
                solution: run.solution,
                gap_ip: 0.0,
                nodes: run.iterations as u64,
                time_s: t.elapsed().as_secs_f64(),
                big_m: None,
                report: None,
                phi: Some(run.phi),
            })
        }
        Method::CoreRand => {
            let theta = settings.theta.unwrap_or_else(|| {
                auto_theta(CoreMethod::CoreRandom, spec.kind, inst.m, inst.n, settings.time_limit)
            });
            let limit = settings
                .time_limit
                .or(if settings.max_iters.is_none() { Some(Duration::from_secs(5)) } else { None });
            let t = Instant::now();
            let run = heuristics::core_random(
                inst,
                spec,
                theta,
                limit,
                settings.max_iters,
                settings.seed,
            )?;
            Ok(MethodOutcome {
                method,
                solution: run.solution,
                gap_ip: 0.0,
                nodes: run.iterations as u64,
                time_s: t.elapsed().as_secs_f64(),
                big_m: None,
                report: None,
                phi: Some(run.phi),
            })
        }
    }
}

/// One (m, n) cell of the instance grid.
#[derive(Debug, Clone, Serialize)]
pub struct GridSet {
    pub m: usize,
    pub n: usize,
    pub replicates: usize,
    pub fat: bool,
}

/// The full sweep description.
#[derive(Debug, Clone, Serialize)]
pub struct BenchPlan {
    pub sets: Vec<GridSet>,
    pub methods: Vec<Method>,
    pub time_limit_s: Option<f64>,
    pub base_seed: u64,
}

impl BenchPlan {
    /// Desk-scale defaults: small thin and fat grids, five replicates each.
    pub fn desk(base_seed: u64) -> Self {
        let mut sets = Vec::new();
        for m in [8usize, 10, 12] {
            for n in [20usize, 30, 40] {
                sets.push(GridSet { m, n, replicates: 5, fat: false });
            }
        }
        for m in [40usize, 60] {
            for n in [15usize, 20] {
                sets.push(GridSet { m, n, replicates: 5, fat: true });
            }
        }
        BenchPlan {
            sets,
            methods: vec![Method::Stepwise, Method::Mip],
            time_limit_s: Some(60.0),
            base_seed,
        }
    }

    /// The published large grid; hours of runtime, not part of acceptance.
    pub fn full(base_seed: u64) -> Self {
        let mut sets = Vec::new();
        for m in [20usize, 30, 40, 50] {
            for n in (30..=100).step_by(10) {
                if m + 10 <= n {
                    sets.push(GridSet { m, n, replicates: 10, fat: false });
                }
            }
        }
        for m in [100usize, 150, 200, 250] {
            for n in [30usize, 40, 50, 60] {
                sets.push(GridSet { m, n, replicates: 10, fat: true });
            }
        }
        BenchPlan {
            sets,
            methods: vec![Method::Stepwise, Method::Mip, Method::CoreHeur, Method::CoreRand],
            time_limit_s: Some(3600.0),
            base_seed,
        }
    }
}

/// Relative improvement over the stepwise baseline; zero when the baseline
/// is already zero.
pub fn gap_sol(obj_step: f64, obj_method: f64) -> f64 {
    if obj_step == 0.0 {
        0.0
    } else {
        (obj_step - obj_method) / obj_step
    }
}

/// One report line, mirroring the CSV schema.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub instance: String,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub method: Method,
    pub objective_kind: ObjectiveKind,
    pub obj: f64,
    pub gap_ip: f64,
    pub gap_sol: f64,
    pub nodes: u64,
    pub time_s: f64,
    pub bigm_method: String,
    pub bigm_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub m: usize,
    pub n: usize,
    pub method: Method,
    pub objective_kind: ObjectiveKind,
    pub runs: usize,
    pub mean_obj: f64,
    pub mean_gap_ip: f64,
    pub mean_gap_sol: f64,
    pub mean_time_s: f64,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub plan: BenchPlan,
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Runs the sweep and writes `rows.csv`, `rows.json`, `aggregates.csv`, and
/// `aggregates.json` into `out_dir`. Failures become rows with an error
/// field instead of aborting the sweep.
pub fn run_bench(plan: &BenchPlan, out_dir: &Path) -> Result<BenchReport> {
    fs::create_dir_all(out_dir)?;
    struct Task {
        set: GridSet,
        rep: usize,
        seed: u64,
        kind: ObjectiveKind,
    }
    let mut tasks = Vec::new();
    for (si, set) in plan.sets.iter().enumerate() {
        let kinds = if set.fat {
            [ObjectiveKind::MaeA, ObjectiveKind::MseA]
        } else {
            [ObjectiveKind::Mae, ObjectiveKind::Mse]
        };
        for rep in 0..set.replicates {
            let seed = plan.base_seed + (si * 1000 + rep) as u64;
            for kind in kinds {
                tasks.push(Task { set: set.clone(), rep, seed, kind });
            }
        }
    }
    let rows = Mutex::new(Vec::new());
    tasks.par_iter().for_each(|task| {
        let mut local = run_task(plan, task.set.clone(), task.rep, task.seed, task.kind);
        rows.lock().unwrap().append(&mut local);
    });
    let mut rows = rows.into_inner().unwrap();
    rows.sort_by(|a, b| {
        (a.m, a.n, a.seed, format!("{}", a.objective_kind), format!("{}", a.method)).cmp(&(
            b.m,
            b.n,
            b.seed,
            format!("{}", b.objective_kind),
            format!("{}", b.method),
        ))
    });
    let aggregates = aggregate(&rows);
    write_reports(out_dir, plan, &rows, &aggregates)?;
    Ok(BenchReport { plan: plan.clone(), rows, aggregates })
}

fn run_task(
    plan: &BenchPlan,
    set: GridSet,
    rep: usize,
    seed: u64,
    kind: ObjectiveKind,
) -> Vec<BenchRow> {
    let instance_id = format!("m{}n{}r{}", set.m, set.n, rep);
    let blank = |method: Method, err: String| BenchRow {
        instance: instance_id.clone(),
        m: set.m,
        n: set.n,
        seed,
        method,
        objective_kind: kind,
        obj: f64::NAN,
        gap_ip: f64::NAN,
        gap_sol: f64::NAN,
        nodes: 0,
        time_s: 0.0,
        bigm_method: String::new(),
        bigm_time_s: 0.0,
        error: Some(err),
    };
    let inst = match generate_any(set.m, set.n, seed) {
        Ok(i) => i,
        Err(e) => return plan.methods.iter().map(|&m| blank(m, e.to_string())).collect(),
    };
    let spec = ObjectiveSpec::new(kind);
    let settings = SolveSettings {
        time_limit: plan.time_limit_s.map(Duration::from_secs_f64),
        seed,
        ..SolveSettings::default()
    };
    let step_obj = heuristics::stepwise(&inst, &spec, (inst.n - 2).min(inst.m))
        .map(|s| s.objective)
        .ok();
    plan.methods
        .iter()
        .map(|&method| match solve_instance(&inst, &spec, method, &settings) {
            Ok(out) => BenchRow {
                instance: instance_id.clone(),
                m: set.m,
                n: set.n,
                seed,
                method,
                objective_kind: kind,
                obj: out.solution.objective,
                gap_ip: out.gap_ip,
                gap_sol: step_obj.map_or(f64::NAN, |s| gap_sol(s, out.solution.objective)),
                nodes: out.nodes,
                time_s: out.time_s,
                bigm_method: out
                    .big_m
                    .as_ref()
                    .map(|b| format!("{:?}", b.method).to_lowercase())
                    .unwrap_or_default(),
                bigm_time_s: out.big_m.as_ref().map_or(0.0, |b| b.compute_time),
                error: None,
            },
            Err(e) => blank(method, e.to_string()),
        })
        .collect()
}

/// Per-set means, recomputable from the rows.
pub fn aggregate(rows: &[BenchRow]) -> Vec<Aggregate> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(usize, usize, String, String), Vec<&BenchRow>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.error.is_none()) {
        groups
            .entry((row.m, row.n, format!("{}", row.method), format!("{}", row.objective_kind)))
            .or_default()
            .push(row);
    }
    groups
        .into_iter()
        .map(|(_, rs)| {
            let k = rs.len() as f64;
            Aggregate {
                m: rs[0].m,
                n: rs[0].n,
                method: rs[0].method,
                objective_kind: rs[0].objective_kind,
                runs: rs.len(),
                mean_obj: rs.iter().map(|r| r.obj).sum::<f64>() / k,
                mean_gap_ip: rs.iter().map(|r| r.gap_ip).sum::<f64>() / k,
                mean_gap_sol: rs.iter().map(|r| r.gap_sol).sum::<f64>() / k,
                mean_time_s: rs.iter().map(|r| r.time_s).sum::<f64>() / k,
            }
        })
        .collect()
}

fn write_reports(
    out_dir: &Path,
    plan: &BenchPlan,
    rows: &[BenchRow],
    aggregates: &[Aggregate],
) -> Result<()> {
    let mut w = csv::Writer::from_path(out_dir.join("rows.csv"))?;
    w.write_record([
        "instance",
        "m",
        "n",
        "seed",
        "method",
        "objective_kind",
        "obj",
        "gap_ip",
        "gap_sol",
        "nodes",
        "time_s",
        "bigm_method",
        "bigm_time_s",
    ])?;
    for r in rows {
        w.write_record([
            r.instance.clone(),
            r.m.to_string(),
            r.n.to_string(),
            r.seed.to_string(),
            r.method.to_string(),
            r.objective_kind.to_string(),
            r.obj.to_string(),
            r.gap_ip.to_string(),
            r.gap_sol.to_string(),
            r.nodes.to_string(),
            r.time_s.to_string(),
            r.bigm_method.clone(),
            r.bigm_time_s.to_string(),
        ])?;
    }
    w.flush()?;
    fs::write(out_dir.join("rows.json"), serde_json::to_string_pretty(rows)?)?;
    let mut w = csv::Writer::from_path(out_dir.join("aggregates.csv"))?;
    w.write_record([
        "m",
        "n",
        "method",
        "objective_kind",
        "runs",
        "mean_obj",
        "mean_gap_ip",
        "mean_gap_sol",
        "mean_time_s",
    ])?;
    for a in aggregates {
        w.write_record([
            a.m.to_string(),
            a.n.to_string(),
            a.method.to_string(),
            a.objective_kind.to_string(),
            a.runs.to_string(),
            a.mean_obj.to_string(),
            a.mean_gap_ip.to_string(),
            a.mean_gap_sol.to_string(),
            a.mean_time_s.to_string(),
        ])?;
    }
    w.flush()?;
    fs::write(
        out_dir.join("aggregates.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "plan": plan, "aggregates": aggregates }))?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_sol_formula() {
        assert!((gap_sol(2.0, 1.5) - 0.25).abs() < 1e-15);
        assert_eq!(gap_sol(0.0, 1.0), 0.0);
        assert_eq!(gap_sol(1.0, 1.0), 0.0);
    }

    #[test]
    fn generate_any_widths() {
        let inst = generate_any(8, 20, 1).unwrap();
        assert_eq!((inst.m, inst.n), (8, 20));
        // Restriction keeps the leading columns of the wider pool.
        let pool = generate(10, 20, 1).unwrap();
        assert_eq!(inst.column(7), pool.column(7));
        let exact = generate_any(10, 20, 1).unwrap();
        assert_eq!(exact, pool);
    }

    #[test]
    fn desk_plan_grids() {
        let plan = BenchPlan::desk(0);
        for set in &plan.sets {
            if set.fat {
                assert!(set.m > set.n);
            } else {
                assert!(set.m + 2 <= set.n);
            }
        }
    }

    #[test]
    fn small_sweep_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let plan = BenchPlan {
            sets: vec![GridSet { m: 5, n: 15, replicates: 2, fat: false }],
            methods: vec![Method::Stepwise, Method::Mip, Method::Exhaustive],
            time_limit_s: Some(30.0),
            base_seed: 3,
        };
        let report = run_bench(&plan, dir.path()).unwrap();
        assert_eq!(report.rows.len(), 2 * 2 * 3);
        for row in &report.rows {
            assert!(row.error.is_none(), "{:?}", row.error);
            // Warm-started methods never lose to their own warm start.
            assert!(row.gap_sol >= -1e-9, "{row:?}");
        }
        // Exhaustive and mip agree on every row.
        for chunk in report.rows.chunks(3) {
            let get = |m: Method| chunk.iter().find(|r| r.method == m).unwrap().obj;
            assert!((get(Method::Mip) - get(Method::Exhaustive)).abs() <= 1e-6);
        }
        // Aggregates are consistent with a recomputation from the rows.
        let again = aggregate(&report.rows);
        assert_eq!(again.len(), report.aggregates.len());
        for (a, b) in again.iter().zip(&report.aggregates) {
            assert!((a.mean_obj - b.mean_obj).abs() < 1e-12);
        }
        for f in ["rows.csv", "rows.json", "aggregates.csv", "aggregates.json"] {
            assert!(dir.path().join(f).exists());
        }
    }
}
