//! Self-contained two-phase primal simplex for the standard-form LPs the
//! model builders and big-M procedures produce.
//!
//! All variables have lower bound 0 and an optional upper bound. The solver
//! is deterministic: Dantzig pricing with lowest-index tie-breaks, switching
//! to Bland's rule after a fixed number of degenerate pivots.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// Feasibility tolerance on each row of an Optimal solution.
pub const FEAS_TOL: f64 = 1e-7;
/// Entries below this are treated as zero during pivoting.
pub const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct LpRow {
    /// Sparse coefficients, `(variable index, coefficient)`.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A minimization LP over nonnegative variables.
#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    /// Optional upper bound per variable; lower bounds are all 0.
    pub var_upper: Vec<Option<f64>>,
    pub rows: Vec<LpRow>,
}

impl LpProblem {
    pub fn new(num_vars: usize) -> Self {
        LpProblem {
            objective: vec![0.0; num_vars],
            var_upper: vec![None; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(LpRow { coeffs, sense, rhs });
    }

    /// Plain-text dump of the problem, for debugging behind a CLI flag.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str("min");
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                out.push_str(&format!(" {c:+}*x{j}"));
            }
        }
        out.push('\n');
        for row in &self.rows {
            for (j, c) in &row.coeffs {
                out.push_str(&format!(" {c:+}*x{j}"));
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            out.push_str(&format!(" {op} {}\n", row.rhs));
        }
        for (j, ub) in self.var_upper.iter().enumerate() {
            if let Some(u) = ub {
                out.push_str(&format!(" x{j} <= {u}\n"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Numerical failure after the anti-cycling fallback.
    NumericFailure,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LpSolution {
    fn status_only(status: LpStatus, num_vars: usize) -> Self {
        LpSolution { status, x: vec![0.0; num_vars], objective: f64::NAN }
    }
}

pub fn solve_lp(p: &LpProblem) -> LpSolution {
    Tableau::build(p).solve(p)
}

/// Solves `p` with the listed variables pinned to the given values.
pub fn solve_lp_fixed(p: &LpProblem, fixings: &BTreeMap<usize, f64>) -> Result<LpSolution> {
    if fixings.is_empty() {
        return Ok(solve_lp(p));
    }
    for (&j, &v) in fixings {
        if j >= p.num_vars() {
            return Err(Error::InvalidArgument(format!("fixing for unknown variable {j}")));
        }
        let ub = p.var_upper[j].unwrap_or(f64::INFINITY);
        if !(-1e-9..=ub + 1e-9).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "fixed value {v} for variable {j} outside [0, {ub}]"
            )));
        }
    }
    // Substitute fixed variables out of the problem.
    let n = p.num_vars();
    let mut map = vec![usize::MAX; n];
    let mut kept = 0usize;
    for j in 0..n {
        if !fixings.contains_key(&j) {
            map[j] = kept;
            kept += 1;
        }
    }
    let mut reduced = LpProblem::new(kept);
    let mut constant = 0.0;
    for j in 0..n {
        match fixings.get(&j) {
            Some(&v) => constant += p.objective[j] * v,
            None => {
                reduced.objective[map[j]] = p.objective[j];
                reduced.var_upper[map[j]] = p.var_upper[j];
            }
        }
    }
    for row in &p.rows {
        let mut rhs = row.rhs;
        let mut coeffs = Vec::with_capacity(row.coeffs.len());
        for &(j, c) in &row.coeffs {
            match fixings.get(&j) {
                Some(&v) => rhs -= c * v,
                None => coeffs.push((map[j], c)),
            }
        }
        if coeffs.is_empty() {
            // Constant row: feasibility must hold outright.
            let ok = match row.sense {
                Sense::Le => rhs >= -FEAS_TOL,
                Sense::Eq => rhs.abs() <= FEAS_TOL,
                Sense::Ge => rhs <= FEAS_TOL,
            };
            if !ok {
                return Ok(LpSolution::status_only(LpStatus::Infeasible, n));
            }
            continue;
        }
        reduced.rows.push(LpRow { coeffs, sense: row.sense, rhs });
    }
    let sol = solve_lp(&reduced);
    let mut x = vec![0.0; n];
    for j in 0..n {
        x[j] = match fixings.get(&j) {
            Some(&v) => v,
            None => sol.x[map[j]],
        };
    }
    Ok(LpSolution { status: sol.status, x, objective: sol.objective + constant })
}

struct Tableau {
    /// Row-major `(rows) x (cols + 1)`; last column is the RHS.
    data: Vec<f64>,
    ncols: usize,
    nrows: usize,
    basis: Vec<usize>,
    #[allow(dead_code)]
    n_struct: usize,
    art_start: usize,
}

impl Tableau {
    fn build(p: &LpProblem) -> Tableau {
        let n_struct = p.num_vars();
        // Upper bounds become explicit rows.
        let mut rows: Vec<(Vec<(usize, f64)>, Sense, f64)> = p
            .rows
            .iter()
            .map(|r| (r.coeffs.clone(), r.sense, r.rhs))
            .collect();
        for (j, ub) in p.var_upper.iter().enumerate() {
            if let Some(u) = ub {
                rows.push((vec![(j, 1.0)], Sense::Le, *u));
            }
        }
        let nrows = rows.len();
        // Count slack and artificial columns.
        let mut n_slack = 0;
        let mut n_art = 0;
        for (_, sense, rhs) in rows.iter_mut() {
            match sense {
                Sense::Le | Sense::Ge => n_slack += 1,
                Sense::Eq => {}
            }
            let needs_art = match (*sense, *rhs >= 0.0) {
                (Sense::Le, true) | (Sense::Ge, false) => false,
                _ => true,
            };
            if needs_art {
                n_art += 1;
            }
        }
        let art_start = n_struct + n_slack;
        let ncols = n_struct + n_slack + n_art;
        let mut data = vec![0.0; nrows * (ncols + 1)];
        let mut basis = vec![0usize; nrows];
        let mut slack_idx = n_struct;
        let mut art_idx = art_start;
        for (r, (coeffs, sense, rhs)) in rows.iter().enumerate() {
            let flip = *rhs < 0.0;
            let sgn = if flip { -1.0 } else { 1.0 };
            let base = r * (ncols + 1);
            for &(j, c) in coeffs {
                data[base + j] += sgn * c;
            }
            data[base + ncols] = sgn * rhs;
            let eff_sense = match (sense, flip) {
                (Sense::Le, false) | (Sense::Ge, true) => Sense::Le,
                (Sense::Ge, false) | (Sense::Le, true) => Sense::Ge,
                (Sense::Eq, _) => Sense::Eq,
            };
            match eff_sense {
                Sense::Le => {
                    data[base + slack_idx] = 1.0;
                    basis[r] = slack_idx;
                    slack_idx += 1;
                }
                Sense::Ge => {
                    data[base + slack_idx] = -1.0;
                    slack_idx += 1;
                    data[base + art_idx] = 1.0;
                    basis[r] = art_idx;
                    art_idx += 1;
                }
                Sense::Eq => {
                    data[base + art_idx] = 1.0;
                    basis[r] = art_idx;
                    art_idx += 1;
                }
            }
        }
        Tableau { data, ncols, nrows, basis, n_struct, art_start }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.ncols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.ncols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let stride = self.ncols + 1;
        let pval = self.data[pr * stride + pc];
        let inv = 1.0 / pval;
        for c in 0..stride {
            self.data[pr * stride + c] *= inv;
        }
        self.data[pr * stride + pc] = 1.0;
        for r in 0..self.nrows {
            if r == pr {
                continue;
            }
            let factor = self.data[r * stride + pc];
            if factor.abs() <= 1e-13 {
                continue;
            }
            let (head, tail) = if r < pr {
                let (a, b) = self.data.split_at_mut(pr * stride);
                (&mut a[r * stride..r * stride + stride], &b[..stride])
            } else {
                let (a, b) = self.data.split_at_mut(r * stride);
                (&mut b[..stride], &a[pr * stride..pr * stride + stride])
            };
            for (h, t) in head.iter_mut().zip(tail.iter()) {
                *h -= factor * t;
            }
            self.data[r * stride + pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Reduced costs for the cost vector `costs` (length `ncols`).
    fn reduced_costs(&self, costs: &[f64]) -> Vec<f64> {
        let mut red = costs.to_vec();
        for r in 0..self.nrows {
            let cb = costs[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for c in 0..self.ncols {
                red[c] -= cb * self.at(r, c);
            }
        }
        red
    }

    /// Runs the simplex on the given cost vector until optimal.
    /// `allowed` marks the columns eligible to enter the basis.
    fn run(&mut self, costs: &[f64], allowed: &[bool]) -> LpStatus {
        let mut red = self.reduced_costs(costs);
        let max_degenerate = 5 * (self.nrows + self.ncols);
        let max_iters = 200 * (self.nrows + self.ncols) + 2000;
        let mut degenerate = 0usize;
        let mut bland = false;
        for iter in 0..max_iters {
            if iter > 0 && iter % 64 == 0 {
                // Periodic refresh against accumulated drift.
                red = self.reduced_costs(costs);
            }
            // Pricing.
            let mut enter = None;
            if bland {
                for c in 0..self.ncols {
                    if allowed[c] && red[c] < -PIVOT_TOL {
                        enter = Some(c);
                        break;
                    }
                }
            } else {
                let mut best = -PIVOT_TOL;
                for c in 0..self.ncols {
                    if allowed[c] && red[c] < best {
                        best = red[c];
                        enter = Some(c);
                    }
                }
            }
            let Some(pc) = enter else {
                return LpStatus::Optimal;
            };
            // Ratio test.
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.nrows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio < lratio + 1e-12
                                    && (bland && self.basis[r] < self.basis[lr]))
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((pr, ratio)) = leave else {
                return LpStatus::Unbounded;
            };
            if ratio < 1e-10 {
                degenerate += 1;
                if degenerate > max_degenerate {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            let entering_cost = red[pc];
            self.pivot(pr, pc);
            // After the pivot, row `pr` holds the scaled pivot row; update
            // the reduced costs against it.
            for c in 0..self.ncols {
                red[c] -= entering_cost * self.at(pr, c);
            }
            red[pc] = 0.0;
        }
        LpStatus::NumericFailure
    }

    fn solve(mut self, p: &LpProblem) -> LpSolution {
        let n = p.num_vars();
        // Phase 1: minimize the sum of artificials, if any.
        if self.art_start < self.ncols {
            let mut costs = vec![0.0; self.ncols];
            for c in self.art_start..self.ncols {
                costs[c] = 1.0;
            }
            let allowed: Vec<bool> = (0..self.ncols).map(|c| c < self.art_start).collect();
            match self.run(&costs, &allowed) {
                LpStatus::Optimal => {}
                LpStatus::Unbounded | LpStatus::NumericFailure => {
                    return LpSolution::status_only(LpStatus::NumericFailure, n);
                }
                LpStatus::Infeasible => unreachable!(),
            }
            let phase1: f64 = (0..self.nrows)
                .filter(|&r| self.basis[r] >= self.art_start)
                .map(|r| self.rhs(r))
                .sum();
            if phase1 > 1e-7 {
                return LpSolution::status_only(LpStatus::Infeasible, n);
            }
            // Drive artificials out of the basis where possible.
            for r in 0..self.nrows {
                if self.basis[r] >= self.art_start {
                    let mut pivot_col = None;
                    for c in 0..self.art_start {
                        if self.at(r, c).abs() > 1e-8 {
                            pivot_col = Some(c);
                            break;
                        }
                    }
                    if let Some(c) = pivot_col {
                        self.pivot(r, c);
                    }
                    // Otherwise the row is redundant; the artificial stays
                    // basic at zero and is never priced again.
                }
            }
        }
        // Phase 2.
        let mut costs = vec![0.0; self.ncols];
        costs[..n].copy_from_slice(&p.objective);
        let allowed: Vec<bool> = (0..self.ncols).map(|c| c < self.art_start).collect();
        let status = self.run(&costs, &allowed);
        match status {
            LpStatus::Optimal => {}
            s => return LpSolution::status_only(s, n),
        }
        let mut x = vec![0.0; n];
        for r in 0..self.nrows {
            if self.basis[r] < n {
                x[self.basis[r]] = self.rhs(r);
            }
        }
        let objective: f64 = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        // Sanity: verify primal feasibility on the original rows.
        for row in &p.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(j, c)| c * x[j]).sum();
            let viol = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            let scale = row.rhs.abs().max(1.0);
            if viol > 1e-5 * scale {
                return LpSolution::status_only(LpStatus::NumericFailure, n);
            }
        }
        LpSolution { status: LpStatus::Optimal, x, objective }
    }
}
