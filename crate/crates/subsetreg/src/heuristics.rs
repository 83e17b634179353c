//! Stepwise selection and the two core-set heuristics for instances with
//! more variables than the cardinality cap allows.
//!
//! The core-set algorithms keep a working pool `C` of at most `Theta`
//! variables, solve the capped problem exactly on the pool, then rebuild the
//! pool around the incumbent: greedily from neighbor scores, or randomly
//! from an exponential selection distribution.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::big_m;
use crate::branch_and_bound::solve_mip;
use crate::dataset::Instance;
use crate::mip_models::build;
use crate::objectives::{evaluate, fit_solution, ObjectiveKind, ObjectiveSpec, SubsetSolution};
use crate::{Error, Result};

/// Greedy forward selection followed by alternating add/drop passes, never
/// exceeding `p_max` variables. The result has no improving single add or
/// drop within the cap.
pub fn stepwise(inst: &Instance, spec: &ObjectiveSpec, p_max: usize) -> Result<SubsetSolution> {
    if p_max > inst.n - 2 {
        return Err(Error::Cardinality { p: p_max, max: inst.n - 2 });
    }
    let m = inst.m;
    let mut subset: Vec<usize> = Vec::new();
    let mut best = evaluate(inst, &subset, spec)?;

    let best_add = |subset: &[usize], best: f64| -> Result<Option<(usize, f64)>> {
        let mut found: Option<(usize, f64)> = None;
        for j in 0..m {
            if subset.contains(&j) {
                continue;
            }
            let mut cand = subset.to_vec();
            cand.push(j);
            cand.sort_unstable();
            let val = evaluate(inst, &cand, spec)?;
            if val < best - 1e-12 && found.map_or(true, |(_, fv)| val < fv - 1e-12) {
                found = Some((j, val));
            }
        }
        Ok(found)
    };

    // Forward phase.
    while subset.len() < p_max {
        match best_add(&subset, best)? {
            Some((j, val)) => {
                subset.push(j);
                subset.sort_unstable();
                best = val;
            }
            None => break,
        }
    }
    // Alternating passes until a full pass changes nothing.
    loop {
        let mut improved = false;
        if subset.len() < p_max {
            if let Some((j, val)) = best_add(&subset, best)? {
                subset.push(j);
                subset.sort_unstable();
                best = val;
                improved = true;
            }
        }
        let mut best_drop: Option<(usize, f64)> = None;
        for (pos, _) in subset.iter().enumerate() {
            let mut cand = subset.clone();
            cand.remove(pos);
            let val = evaluate(inst, &cand, spec)?;
            if val < best - 1e-12 && best_drop.map_or(true, |(_, fv)| val < fv - 1e-12) {
                best_drop = Some((pos, val));
            }
        }
        if let Some((pos, val)) = best_drop {
            subset.remove(pos);
            best = val;
            improved = true;
        }
        if !improved {
            break;
        }
    }
    fit_solution(inst, &subset, spec, "stepwise")
}

/// Working state of a core-set run.
#[derive(Debug, Clone)]
pub struct CoreState {
    pub s_star: Vec<usize>,
    pub obj_star: f64,
    pub core: Vec<usize>,
    /// Current core cardinality `Theta`.
    pub theta_cap: usize,
    /// The input fraction the cardinality was derived from.
    pub theta: f64,
    /// Best objective seen with variable `j` selected.
    pub u: Vec<f64>,
    /// Bonus weight: 0.5 inside `s_star`, 1 outside.
    pub w: Vec<f64>,
    pub seed: u64,
}

/// Normalized selection probabilities over the active variables.
#[derive(Debug, Clone)]
pub struct SelectionDistribution {
    pub q: Vec<f64>,
    pub active: Vec<usize>,
}

/// Builds the exponential selection distribution over all variables: the
/// weighted scores are shifted to the symmetric range [-0.5, 0.5] and mapped
/// through `exp(-x)`, so the best variable is at most `e` times likelier
/// than the worst. Equal scores degenerate to the uniform distribution.
pub fn build_distribution(state: &CoreState) -> SelectionDistribution {
    let m = state.u.len();
    let wu: Vec<f64> = (0..m).map(|j| state.w[j] * state.u[j]).collect();
    let u_min = wu.iter().cloned().fold(f64::INFINITY, f64::min);
    let u_max = wu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let active: Vec<usize> = (0..m).collect();
    if !(u_max - u_min > 1e-300) {
        return SelectionDistribution { q: vec![1.0 / m as f64; m], active };
    }
    let u_mid = (u_max + u_min) / 2.0;
    let weights: Vec<f64> = wu.iter().map(|&v| (-(v - u_mid) / (u_max - u_min)).exp()).collect();
    let total: f64 = weights.iter().sum();
    SelectionDistribution { q: weights.iter().map(|w| w / total).collect(), active }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub obj_star: f64,
    pub subset_size: usize,
    pub theta_cap: usize,
    pub core_hash: u64,
}

/// Outcome of a core-set run, with the audit trail the invariants need.
#[derive(Debug, Clone)]
pub struct CoreRun {
    pub solution: SubsetSolution,
    /// Hash of each core set in construction order.
    pub core_log: Vec<u64>,
    /// `obj_star` after each outer iteration.
    pub obj_log: Vec<f64>,
    pub theta_final: usize,
    /// Per-iteration optimum-coverage probability floor for the randomized
    /// variant, `(1/(1+2.72(m-1)))^Theta`.
    pub phi: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

pub fn core_hash(core: &[usize]) -> u64 {
    let mut sorted = core.to_vec();
    sorted.sort_unstable();
    let mut h = DefaultHasher::new();
    sorted.hash(&mut h);
    h.finish()
}

pub fn phi_floor(m: usize, theta_cap: usize) -> f64 {
    (1.0 / (1.0 + 2.72 * (m as f64 - 1.0))).powi(theta_cap as i32)
}

fn theta_cap_for(n: usize, theta: f64) -> usize {
    ((n as f64 * theta).ceil() as usize).min(n - 2).max(1)
}

/// Hill-climbs `s_star` over its one-variable neighborhood until no neighbor
/// improves, growing `theta_cap` by at most one when the subset fills the
/// core. Returns the neighbor scores of the final subset for core building.
fn neighborhood_climb(
    inst: &Instance,
    spec: &ObjectiveSpec,
    state: &mut CoreState,
) -> Result<Vec<(usize, f64)>> {
    let m = inst.m;
    let cap_total = inst.n - 2;
    let mut grown = false;
    loop {
        let mut best_j: Option<(usize, Vec<usize>, f64)> = None;
        let mut outsider_scores: Vec<(usize, f64)> = Vec::new();
        for j in 0..m {
            let inside = state.s_star.contains(&j);
            let mut cand = state.s_star.clone();
            if inside {
                cand.retain(|&x| x != j);
            } else {
                if cand.len() + 1 > cap_total {
                    continue;
                }
                cand.push(j);
                cand.sort_unstable();
            }
            let sol = fit_solution(inst, &cand, spec, "neighbor")?;
            let e_a = sol.objective;
            if !inside {
                let t_j = if spec.kind.is_absolute() { sol.sae() } else { sol.sse() };
                outsider_scores.push((j, t_j));
            }
            if e_a < state.obj_star - 1e-12
                && best_j.as_ref().map_or(true, |(_, _, bv)| e_a < bv - 1e-12)
            {
                best_j = Some((j, cand, e_a));
            }
        }
        match best_j {
            Some((_, cand, val)) => {
                state.s_star = cand;
                state.obj_star = val;
                for &j in &state.s_star {
                    state.u[j] = state.u[j].min(val);
                }
                if state.s_star.len() >= state.theta_cap && !grown {
                    state.theta_cap = (state.theta_cap + 1).min(inst.n - 2);
                    grown = true;
                }
            }
            None => return Ok(outsider_scores),
        }
    }
}

fn rebuild_weights(state: &mut CoreState) {
    for j in 0..state.w.len() {
        state.w[j] = if state.s_star.contains(&j) { 0.5 } else { 1.0 };
    }
}

/// Solves the capped problem exactly on the core pool and maps the result
/// back to original indices. The pool is small enough to be a thin
/// subinstance, so the LP-based coefficient bound applies directly.
fn solve_core(
    inst: &Instance,
    spec: &ObjectiveSpec,
    state: &CoreState,
    mip_budget: Option<Duration>,
) -> Result<SubsetSolution> {
    let mut core = state.core.clone();
    core.sort_unstable();
    let sub = inst.restrict_columns(&core);
    let warm_local: Vec<usize> = state
        .s_star
        .iter()
        .filter_map(|j| core.iter().position(|&c| c == *j))
        .collect();
    let warm = fit_solution(&sub, &warm_local, spec, "core-warm")?;
    let m_x_val = big_m::m_for_x_lp(&sub, 0.5).unwrap_or_else(|_| {
        // Degenerate pools fall back to the incumbent-based bound.
        warm.coefficients.iter().fold(1.0f64, |acc, c| acc.max(c.abs()))
    });
    let (_, pen_0) = penalty_base(&sub, spec.kind);
    let m_v = state.obj_star + spec.lambda * pen_0 / (sub.n as f64 - 2.0);
    let model = build(&sub, spec, &vec![m_x_val; sub.m], &vec![m_v.max(1e-9); sub.m], None)?;
    let report = solve_mip(&sub, &model, &warm, mip_budget, false)?;
    let mapped: Vec<usize> = report.incumbent.subset.iter().map(|&s| core[s]).collect();
    fit_solution(inst, &mapped, spec, "core-solve")
}

fn penalty_base(inst: &Instance, kind: ObjectiveKind) -> (f64, f64) {
    let n = inst.n as f64;
    let b_bar = inst.b.iter().sum::<f64>() / n;
    let mae_0 = inst.b.iter().map(|&b| (b - b_bar).abs()).sum::<f64>() / (n - 1.0);
    let mse_0 = inst.b.iter().map(|&b| (b - b_bar).powi(2)).sum::<f64>() / (n - 1.0);
    match kind {
        ObjectiveKind::Mae | ObjectiveKind::MaeA => (mae_0, mae_0),
        ObjectiveKind::Mse | ObjectiveKind::MseA => (mse_0, mse_0),
    }
}

fn init_state(
    inst: &Instance,
    spec: &ObjectiveSpec,
    theta: f64,
    seed: u64,
) -> Result<(CoreState, SubsetSolution)> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta must be in (0,1], got {theta}")));
    }
    let theta_cap = theta_cap_for(inst.n, theta);
    let step = stepwise(inst, spec, theta_cap)?;
    let (_, pen_0) = penalty_base(inst, spec.kind);
    let mut u = vec![pen_0; inst.m];
    for &j in &step.subset {
        u[j] = step.objective;
    }
    let state = CoreState {
        s_star: step.subset.clone(),
        obj_star: step.objective,
        core: Vec::new(),
        theta_cap,
        theta,
        u,
        w: vec![1.0; inst.m],
        seed,
    };
    Ok((state, step))
}

/// Deterministic core-set search: neighbor hill-climb, then refill the pool
/// with the lowest-residual outsiders, solve the pool exactly, and repeat
/// until an outer iteration fails to improve.
pub fn core_heuristic(
    inst: &Instance,
    spec: &ObjectiveSpec,
    theta: f64,
    mip_budget: Option<Duration>,
) -> Result<CoreRun> {
    let (mut state, _) = init_state(inst, spec, theta, 0)?;
    let mut core_log = Vec::new();
    let mut obj_log = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0usize;

    let build_core = |state: &mut CoreState| -> Result<()> {
        let outsiders = neighborhood_climb(inst, spec, state)?;
        let mut scored = outsiders;
        scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        let need = state.theta_cap.saturating_sub(state.s_star.len());
        let mut core = state.s_star.clone();
        core.extend(scored.iter().take(need).map(|&(j, _)| j));
        core.sort_unstable();
        state.core = core;
        Ok(())
    };

    build_core(&mut state)?;
    core_log.push(core_hash(&state.core));
    loop {
        iterations += 1;
        let prev = state.obj_star;
        let core_sol = solve_core(inst, spec, &state, mip_budget)?;
        if core_sol.objective < state.obj_star - 1e-12 {
            state.s_star = core_sol.subset.clone();
            state.obj_star = core_sol.objective;
            for &j in &state.s_star {
                state.u[j] = state.u[j].min(state.obj_star);
            }
        }
        build_core(&mut state)?;
        core_log.push(core_hash(&state.core));
        obj_log.push(state.obj_star);
        trace.push(TraceRow {
            iteration: iterations,
            obj_star: state.obj_star,
            subset_size: state.s_star.len(),
            theta_cap: state.theta_cap,
            core_hash: *core_log.last().unwrap(),
        });
        if state.obj_star >= prev - 1e-12 {
            break;
        }
    }
    let solution = fit_solution(inst, &state.s_star, spec, "core-heuristic")?;
    Ok(CoreRun {
        solution,
        core_log,
        obj_log,
        theta_final: state.theta_cap,
        phi: phi_floor(inst.m, state.theta_cap),
        iterations,
        trace,
    })
}

/// Draws `count` distinct variables without replacement from `dist`,
/// renormalizing the survivors after every draw.
pub fn sample_core(dist: &SelectionDistribution, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut remaining: Vec<(usize, f64)> =
        dist.active.iter().copied().zip(dist.q.iter().copied()).collect();
    let mut picked = Vec::with_capacity(count);
    while picked.len() < count && !remaining.is_empty() {
        let total: f64 = remaining.iter().map(|&(_, q)| q).sum();
        let mut roll: f64 = rng.gen::<f64>() * total;
        let mut chosen = remaining.len() - 1;
        for (idx, &(_, q)) in remaining.iter().enumerate() {
            roll -= q;
            if roll <= 0.0 {
                chosen = idx;
                break;
            }
        }
        picked.push(remaining.remove(chosen).0);
    }
    picked.sort_unstable();
    picked
}

/// Randomized core-set search: anytime loop drawing each pool from the
/// exponential distribution; stops at the time limit or after `max_iters`
/// outer iterations, whichever comes first.
pub fn core_random(
    inst: &Instance,
    spec: &ObjectiveSpec,
    theta: f64,
    time_limit: Option<Duration>,
    max_iters: Option<usize>,
    seed: u64,
) -> Result<CoreRun> {
    if time_limit.is_none() && max_iters.is_none() {
        return Err(Error::InvalidArgument(
            "the randomized search needs a time limit or an iteration cap".into(),
        ));
    }
    let start = Instant::now();
    let (mut state, _) = init_state(inst, spec, theta, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut core_log = Vec::new();
    let mut obj_log = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0usize;

    loop {
        if let Some(limit) = time_limit {
            if start.elapsed() >= limit {
                break;
            }
        }
        if let Some(cap) = max_iters {
            if iterations >= cap {
                break;
            }
        }
        iterations += 1;
        neighborhood_climb(inst, spec, &mut state)?;
        rebuild_weights(&mut state);
        let dist = build_distribution(&state);
        state.core = sample_core(&dist, state.theta_cap, &mut rng);
        core_log.push(core_hash(&state.core));
        let core_sol = solve_core(inst, spec, &state, time_limit.map(|l| l.saturating_sub(start.elapsed()).max(Duration::from_millis(1))))?;
        if core_sol.objective < state.obj_star - 1e-12 {
            state.s_star = core_sol.subset.clone();
            state.obj_star = core_sol.objective;
            for &j in &state.s_star {
                state.u[j] = state.obj_star;
            }
        }
        obj_log.push(state.obj_star);
        trace.push(TraceRow {
            iteration: iterations,
            obj_star: state.obj_star,
            subset_size: state.s_star.len(),
            theta_cap: state.theta_cap,
            core_hash: *core_log.last().unwrap(),
        });
    }
    // One final polish so the returned subset is neighborhood-local even
    // when the loop exits right after a core solve.
    neighborhood_climb(inst, spec, &mut state)?;
    let solution = fit_solution(inst, &state.s_star, spec, "core-random")?;
    Ok(CoreRun {
        solution,
        core_log,
        obj_log,
        theta_final: state.theta_cap,
        phi: phi_floor(inst.m, state.theta_cap),
        iterations,
        trace,
    })
}

/// Which core algorithm a theta policy is asked for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoreMethod {
    CoreHeuristic,
    CoreRandom,
}

/// Default core fraction derived from the instance shape, the objective, and
/// the time budget.
pub fn auto_theta(
    method: CoreMethod,
    kind: ObjectiveKind,
    m: usize,
    n: usize,
    time_limit: Option<Duration>,
) -> f64 {
    match method {
        CoreMethod::CoreHeuristic => match kind {
            ObjectiveKind::MseA | ObjectiveKind::Mse => 0.8,
            _ => {
                let ratio = n as f64 / m as f64;
                if (ratio >= 0.4 && n <= 40) || (ratio >= 0.5 && n > 40) {
                    1.0
                } else {
                    0.8
                }
            }
        },
        CoreMethod::CoreRandom => {
            let long_run = time_limit.map_or(false, |l| l >= Duration::from_secs(3600));
            if long_run && m * n >= 9000 {
                0.8
            } else {
                1.0
            }
        }
    }
}
