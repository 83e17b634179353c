//! Bounding constants for the coefficient and linearization variables.
//!
//! Four procedures are provided. The LP-based bound and the size-based bound
//! are provably valid; the statistical estimate holds with 95% confidence per
//! variable; the incumbent-based bound is a pure heuristic. The `v_j` bound
//! is a separate, always-valid constant derived from objective bounds.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Instance, InstanceStats};
use crate::lp_solver::{self, LpProblem, LpStatus, Sense};
use crate::objectives::{lad_fit, SubsetSolution};
use crate::{Error, Result};

/// How the coefficient bound was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BigMMethod {
    LpBased,
    SizeBased,
    Heuristic,
    Statistical,
}

/// What the bound guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Validity {
    Proven,
    Confidence95,
    Heuristic,
}

impl BigMMethod {
    /// The method fixes the guarantee; they are never mixed.
    pub fn validity(self) -> Validity {
        match self {
            BigMMethod::LpBased | BigMMethod::SizeBased => Validity::Proven,
            BigMMethod::Statistical => Validity::Confidence95,
            BigMMethod::Heuristic => Validity::Heuristic,
        }
    }
}

/// A complete big-M configuration for one model build.
#[derive(Debug, Clone, Serialize)]
pub struct BigMResult {
    /// Per-variable coefficient bounds, length `m`.
    pub m_x: Vec<f64>,
    /// Bound for the `v_j` linearization variables.
    pub m_v: f64,
    pub method: BigMMethod,
    pub validity: Validity,
    /// Seconds spent computing the bounds.
    pub compute_time: f64,
    /// `log2` of the uniform coefficient bound when the bound itself may
    /// overflow an `f64` (size-based only).
    pub log2_m_x: Option<f64>,
}

impl BigMResult {
    pub fn new(m_x: Vec<f64>, m_v: f64, method: BigMMethod, compute_time: f64) -> Result<Self> {
        if !(m_v > 0.0) || m_x.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InconsistentBigM("bounds must be strictly positive".into()));
        }
        Ok(BigMResult {
            m_x,
            m_v,
            method,
            validity: method.validity(),
            compute_time,
            log2_m_x: None,
        })
    }
}

/// Instance shape for the `v` bound: thin means the full model is fittable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Thin,
    Fat,
}

/// Upper bound for the `v_j` variables.
///
/// Thin case: the full-model error, since no subset does worse at the
/// optimum. Fat case: the no-variable model bound `(n-1)/(n-2) * mae_0`,
/// replaced by `u_heur + mae_0/(n-2)` when an incumbent value is known.
pub fn m_for_v(stats: &InstanceStats, case: Case, u_heur: Option<f64>) -> Result<f64> {
    if let Some(h) = u_heur {
        if !(h >= 0.0) {
            return Err(Error::InvalidArgument("u_heur must be nonnegative".into()));
        }
    }
    match case {
        Case::Thin => stats
            .mae_m
            .ok_or_else(|| Error::InconsistentBigM("thin v-bound needs the full-model error".into())),
        Case::Fat => {
            let n = stats.n as f64;
            Ok(match u_heur {
                Some(h) => h + stats.mae_0 / (n - 2.0),
                None => (n - 1.0) / (n - 2.0) * stats.mae_0,
            })
        }
    }
}

/// Uniform LP-based coefficient bound.
///
/// For each variable `k` and each sign, maximizes `x_k - eps * mu` over the
/// feasibility set that keeps the total absolute error within `T_max` and
/// bounds every coefficient by `mu`; the bound candidate is the optimal `mu`.
/// The result is valid for every model whose total error stays below `T_max`.
pub fn m_for_x_lp(inst: &Instance, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be in (0,1), got {epsilon}")));
    }
    let n = inst.n;
    let m = inst.m;
    let full: Vec<usize> = (0..m).collect();
    let full_fit = lad_fit(inst, &full)?;
    if full_fit.sae() <= 1e-8 {
        return Err(Error::InvalidInstance(
            "response is an exact linear combination of the columns; coefficient bounds are unbounded".into(),
        ));
    }
    let b_bar = inst.b.iter().sum::<f64>() / n as f64;
    let t_max: f64 = inst.b.iter().map(|&b| (b - b_bar).abs()).sum();

    // Layout: mu, x+ (m), x- (m), y+, y-, t+ (n), t- (n).
    let mu = 0usize;
    let xp = 1;
    let xm = 1 + m;
    let yp = 1 + 2 * m;
    let ym = yp + 1;
    let tp = ym + 1;
    let tm = tp + n;
    let mut base = LpProblem::new(tm + n);
    let budget: Vec<(usize, f64)> = (0..n)
        .flat_map(|i| [(tp + i, 1.0), (tm + i, 1.0)])
        .collect();
    base.add_row(budget, Sense::Le, t_max);
    for i in 0..n {
        let mut coeffs = Vec::with_capacity(2 * m + 4);
        coeffs.push((tp + i, 1.0));
        coeffs.push((tm + i, -1.0));
        for j in 0..m {
            let a = inst.at(i, j);
            if a != 0.0 {
                coeffs.push((xp + j, -a));
                coeffs.push((xm + j, a));
            }
        }
        coeffs.push((yp, -1.0));
        coeffs.push((ym, 1.0));
        base.add_row(coeffs, Sense::Eq, -inst.b[i]);
    }
    for j in 0..m {
        base.add_row(vec![(xp + j, 1.0), (mu, -1.0)], Sense::Le, 0.0);
        base.add_row(vec![(xm + j, 1.0), (mu, -1.0)], Sense::Le, 0.0);
    }

    let solve_one = |k: usize, positive: bool| -> Result<f64> {
        let mut lp = base.clone();
        let target = if positive { xp + k } else { xm + k };
        let other = if positive { xm + k } else { xp + k };
        lp.objective[target] = -1.0;
        lp.objective[mu] = epsilon;
        let mut fix = std::collections::BTreeMap::new();
        fix.insert(other, 0.0);
        let sol = lp_solver::solve_lp_fixed(&lp, &fix)?;
        match sol.status {
            LpStatus::Optimal => Ok(sol.x[mu]),
            other => Err(Error::InconsistentBigM(format!(
                "coefficient-bound LP for variable {k} returned {other:?}"
            ))),
        }
    };
    let candidates: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|k| -> Result<f64> { Ok(solve_one(k, true)?.max(solve_one(k, false)?)) })
        .collect::<Result<_>>()?;
    let m_hat = candidates.into_iter().fold(0.0f64, f64::max);
    if !(m_hat > 0.0) {
        return Err(Error::InconsistentBigM("LP-based bound collapsed to zero".into()));
    }
    Ok(m_hat)
}

/// Size-based coefficient bound: `2^(size(A) * size(B) - 1)` from the exact
/// rational Gram system of the full instance. `value` is infinite when the
/// exponent exceeds the `f64` range; `log2` is always finite.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SizeBound {
    pub value: f64,
    pub log2: f64,
}

pub fn m_for_x_size(inst: &Instance) -> Result<SizeBound> {
    let (gram, rhs) = crate::linalg::exact_gram(inst);
    let size_a = (inst.m * inst.m) as u64 + gram.iter().map(|r| r.size()).sum::<u64>();
    let size_b = rhs.iter().map(|r| r.size()).sum::<u64>();
    let log2 = (size_a as f64) * (size_b as f64) - 1.0;
    let value = if log2 < 1023.0 { log2.exp2() } else { f64::INFINITY };
    Ok(SizeBound { value, log2 })
}

/// Exponent threshold past which the size-based bound is refused for model
/// building; such constants wreck the floating-point pivoting.
pub const SIZE_BOUND_LOG2_LIMIT: f64 = 300.0;

/// Incumbent-based bound: the largest absolute coefficient of a heuristic
/// solution. Not valid in general; solving with it yields a heuristic even
/// if the search itself is exact. `fallback` covers the all-zero case.
pub fn m_for_x_heuristic(heur: &SubsetSolution, fallback: f64) -> Result<f64> {
    if !(fallback > 0.0) {
        return Err(Error::InvalidArgument("fallback bound must be positive".into()));
    }
    let max_abs = heur.coefficients.iter().fold(0.0f64, |acc, &c| acc.max(c.abs()));
    Ok(if max_abs > 0.0 { max_abs } else { fallback })
}

/// Statistical per-variable bound for fat instances.
///
/// For each variable `k`, fits 30 random models that contain `k` along with
/// `n-3` other columns and records the absolute fitted coefficient of `k`;
/// the bound is the sample mean plus 1.65 sample standard deviations, an
/// upper 95% confidence point for the coefficient magnitude.
pub fn estimate_m(inst: &Instance, samples: usize, seed: u64) -> Result<Vec<f64>> {
    let n = inst.n;
    let m = inst.m;
    if m <= n - 2 {
        return Err(Error::InvalidArgument("the statistical bound targets fat instances".into()));
    }
    if n < 5 {
        return Err(Error::InvalidInstance("need at least 5 observations".into()));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    (0..m)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            // Stream-independent per-variable rng keeps the parallel
            // aggregation deterministic.
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((k as u64) << 32));
            let others: Vec<usize> = (0..m).filter(|&j| j != k).collect();
            let mut draws = Vec::with_capacity(samples);
            let mut failures = 0usize;
            while draws.len() < samples {
                let mut cols = vec![k];
                cols.extend(others.choose_multiple(&mut rng, n - 3).copied());
                match lad_fit(inst, &cols) {
                    Ok(fit) => draws.push(fit.coefficients[0].abs()),
                    Err(_) => {
                        failures += 1;
                        if failures > 100 {
                            return Err(Error::InconsistentBigM(format!(
                                "variable {k}: more than 100 degenerate sample fits"
                            )));
                        }
                    }
                }
            }
            let s = samples as f64;
            let mean = draws.iter().sum::<f64>() / s;
            let var = draws.iter().map(|&d| (d - mean).powi(2)).sum::<f64>() / (s - 1.0);
            Ok(mean + 1.65 * var.sqrt())
        })
        .collect()
}

/// One-call configuration used by the solver front end: picks the `x` bound
/// by `method` and pairs it with the appropriate `v` bound.
pub fn compute(
    inst: &Instance,
    stats: &InstanceStats,
    method: BigMMethod,
    u_heur_solution: Option<&SubsetSolution>,
    seed: u64,
) -> Result<BigMResult> {
    let start = Instant::now();
    let case = if inst.is_fat() { Case::Fat } else { Case::Thin };
    let m_v = m_for_v(stats, case, u_heur_solution.map(|s| s.objective))?;
    let (m_x, log2) = match method {
        BigMMethod::LpBased => (vec![m_for_x_lp(inst, 0.5)?; inst.m], None),
        BigMMethod::SizeBased => {
            let bound = m_for_x_size(inst)?;
            if bound.log2 > SIZE_BOUND_LOG2_LIMIT {
                return Err(Error::InconsistentBigM(format!(
                    "size-based bound has log2 = {:.0}; use the LP-based or statistical bound instead",
                    bound.log2
                )));
            }
            (vec![bound.value; inst.m], Some(bound.log2))
        }
        BigMMethod::Heuristic => {
            let heur = u_heur_solution.ok_or_else(|| {
                Error::InvalidArgument("heuristic bound needs an incumbent solution".into())
            })?;
            (vec![m_for_x_heuristic(heur, m_v)?; inst.m], None)
        }
        BigMMethod::Statistical => (estimate_m(inst, 30, seed)?, None),
    };
    let mut result = BigMResult::new(m_x, m_v, method, start.elapsed().as_secs_f64())?;
    result.log2_m_x = log2;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{compute_stats, generate, Instance};
    use crate::objectives::{evaluate, ObjectiveKind, ObjectiveSpec};

    fn p1() -> Instance {
        Instance::new(3, 1, vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 4.0], vec!["x1".into()]).unwrap()
    }

    #[test]
    fn v_bound_formulas() {
        let mut stats = compute_stats(&p1()).unwrap();
        stats.mae_m = Some(0.25);
        assert_eq!(m_for_v(&stats, Case::Thin, None).unwrap(), 0.25);
        stats.n = 30;
        stats.mae_0 = 1.0;
        let fat = m_for_v(&stats, Case::Fat, None).unwrap();
        assert!((fat - 29.0 / 28.0).abs() < 1e-12);
        let fat_h = m_for_v(&stats, Case::Fat, Some(0.8)).unwrap();
        assert!((fat_h - (0.8 + 1.0 / 28.0)).abs() < 1e-12);
        assert!(m_for_v(&stats, Case::Fat, Some(-0.1)).is_err());
    }

    #[test]
    fn v_bound_thin_does_not_cut_optimum() {
        let spec = ObjectiveSpec::new(ObjectiveKind::Mae);
        for seed in [1u64, 2, 3] {
            let inst = generate(5, 12, seed).unwrap();
            let stats = compute_stats(&inst).unwrap();
            let m_v = m_for_v(&stats, Case::Thin, None).unwrap();
            let mut best = f64::INFINITY;
            for mask in 0u32..32 {
                let subset: Vec<usize> = (0..5).filter(|j| mask >> j & 1 == 1).collect();
                best = best.min(evaluate(&inst, &subset, &spec).unwrap());
            }
            assert!(best <= m_v + 1e-9, "seed {seed}: {best} vs {m_v}");
        }
    }

    fn enumerate_validity(inst: &Instance, m_hat: f64) {
        let b_bar = inst.b.iter().sum::<f64>() / inst.n as f64;
        let t_max: f64 = inst.b.iter().map(|&b| (b - b_bar).abs()).sum();
        for mask in 1u32..(1 << inst.m) {
            let subset: Vec<usize> = (0..inst.m).filter(|j| mask >> j & 1 == 1).collect();
            let fit = lad_fit(inst, &subset).unwrap();
            if fit.sae() > t_max {
                continue;
            }
            for &c in &fit.coefficients {
                assert!(c.abs() <= m_hat + 1e-6, "subset {subset:?}: {c} vs {m_hat}");
            }
        }
    }

    #[test]
    fn lp_bound_reaches_lad_slope_on_p1() {
        let m_hat = m_for_x_lp(&p1(), 0.5).unwrap();
        assert!(m_hat >= 1.5, "{m_hat}");
        enumerate_validity(&p1(), m_hat);
    }

    #[test]
    fn lp_bound_valid_across_epsilon() {
        let inst = generate(5, 12, 7).unwrap();
        for eps in [0.3, 0.5, 0.7] {
            let m_hat = m_for_x_lp(&inst, eps).unwrap();
            enumerate_validity(&inst, m_hat);
        }
        assert!(m_for_x_lp(&inst, 0.0).is_err());
        assert!(m_for_x_lp(&inst, 1.0).is_err());
    }

    #[test]
    fn lp_bound_small_on_noise_instance() {
        // Response nearly orthogonal to the lone column: tiny but positive M.
        let inst = Instance::new(
            6,
            1,
            vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
            vec![0.03, -0.01, 0.005, -0.02, 0.01, 0.004],
            vec!["x1".into()],
        )
        .unwrap();
        let m_hat = m_for_x_lp(&inst, 0.5).unwrap();
        assert!(m_hat > 0.0 && m_hat < 1.0, "{m_hat}");
        enumerate_validity(&inst, m_hat);
    }

    #[test]
    fn size_bound_example() {
        // A = [[2]], B = [4]: size(A) = 1 + 4, size(B) = 5, M = 2^24.
        // Achieved by a single column with a'a = 2 and a'b = 4.
        let inst = Instance::new(
            3,
            1,
            vec![1.0, 1.0, 0.0],
            vec![2.0, 2.0, 5.0],
            vec!["x1".into()],
        )
        .unwrap();
        let bound = m_for_x_size(&inst).unwrap();
        assert_eq!(bound.log2, 24.0);
        assert_eq!(bound.value, (1u64 << 24) as f64);
    }

    #[test]
    fn size_bound_dominates_ols_coefficients() {
        for seed in [1u64, 5] {
            let inst = generate(5, 12, seed).unwrap();
            let bound = m_for_x_size(&inst).unwrap();
            for mask in 1u32..32 {
                let subset: Vec<usize> = (0..5).filter(|j| mask >> j & 1 == 1).collect();
                if let Ok((coefs, _, _)) = crate::linalg::solve_normal_equations(&inst, &subset) {
                    for &c in &coefs {
                        assert!(bound.value.is_infinite() || c.abs() <= bound.value);
                    }
                }
            }
        }
    }

    #[test]
    fn size_bound_dominates_lp_bound() {
        for seed in [1u64, 2] {
            let inst = generate(5, 12, seed).unwrap();
            let size = m_for_x_size(&inst).unwrap();
            let lp = m_for_x_lp(&inst, 0.5).unwrap();
            assert!(size.value.is_infinite() || size.value >= lp);
        }
    }

    #[test]
    fn heuristic_bound() {
        let mut sol = crate::objectives::fit_solution(
            &p1(),
            &[0],
            &ObjectiveSpec::new(ObjectiveKind::Mae),
            "test",
        )
        .unwrap();
        sol.coefficients = vec![1.5, -3.0, 0.2];
        assert_eq!(m_for_x_heuristic(&sol, 9.0).unwrap(), 3.0);
        sol.coefficients = vec![-0.5];
        assert_eq!(m_for_x_heuristic(&sol, 9.0).unwrap(), 0.5);
        sol.coefficients = vec![];
        assert_eq!(m_for_x_heuristic(&sol, 9.0).unwrap(), 9.0);
        assert!(m_for_x_heuristic(&sol, 0.0).is_err());
    }

    #[test]
    fn estimate_m_properties() {
        let inst = generate(20, 8, 3).unwrap();
        let a = estimate_m(&inst, 10, 42).unwrap();
        let b = estimate_m(&inst, 10, 42).unwrap();
        assert_eq!(a, b, "deterministic for a fixed seed");
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|&v| v >= 0.0));
        let c = estimate_m(&inst, 10, 43).unwrap();
        assert_ne!(a, c, "seed matters");
        // Thin instances are rejected.
        assert!(estimate_m(&generate(5, 12, 1).unwrap(), 10, 1).is_err());
    }

    #[test]
    fn estimate_m_dominates_sample_mean() {
        let inst = generate(15, 8, 9).unwrap();
        let est = estimate_m(&inst, 10, 7).unwrap();
        // Re-derive the means with the same draws by a second run with the
        // 1.65 sigma term removed is not accessible; instead check the bound
        // is nonnegative and finite, which the mean + 1.65 sigma form implies.
        assert!(est.iter().all(|&v| v.is_finite() && v >= 0.0));
    }

    #[test]
    fn compute_pairs_method_and_validity() {
        let inst = p1();
        let stats = compute_stats(&inst).unwrap();
        let res = compute(&inst, &stats, BigMMethod::LpBased, None, 0).unwrap();
        assert_eq!(res.validity, Validity::Proven);
        assert_eq!(res.m_x.len(), 1);
        assert!((res.m_v - 0.5).abs() < 1e-9);
        let res = compute(&inst, &stats, BigMMethod::SizeBased, None, 0).unwrap();
        assert_eq!(res.validity, Validity::Proven);
        assert!(res.log2_m_x.is_some());
        assert!(compute(&inst, &stats, BigMMethod::Heuristic, None, 0).is_err());
    }

    #[test]
    fn compute_refuses_huge_size_bound() {
        // Long decimals inflate the rational sizes far past the guard.
        let inst = generate(5, 20, 11).unwrap();
        let err = compute(&inst, &compute_stats(&inst).unwrap(), BigMMethod::SizeBased, None, 0);
        match err {
            Err(Error::InconsistentBigM(msg)) => assert!(msg.contains("log2")),
            other => panic!("expected refusal, got {other:?}"),
        }
    }
}
