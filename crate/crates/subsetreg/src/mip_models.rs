//! Builders for the four subset-selection MIP formulations and the
//! root-node valid inequalities.
//!
//! The variable layout is shared by every formulation: the objective scalar
//! `u`, split error terms `t+`/`t-`, split coefficients `x+`/`x-`, split
//! intercept `y+`/`y-`, the linearization products `v_j`, and the binary
//! selectors `z_j`. The MAE family is fully linear; the MSE family swaps the
//! balance equality for one convex quadratic row.

use serde::Serialize;

use crate::dataset::Instance;
use crate::lp_solver::{LpProblem, LpRow, Sense};
use crate::objectives::{ObjectiveKind, ObjectiveSpec};
use crate::{Error, Result};

/// Index layout over the `2n + 4m + 3` decision variables.
#[derive(Debug, Clone, Copy)]
pub struct VarLayout {
    pub n: usize,
    pub m: usize,
}

impl VarLayout {
    pub fn u(&self) -> usize {
        0
    }
    pub fn t_plus(&self, i: usize) -> usize {
        1 + i
    }
    pub fn t_minus(&self, i: usize) -> usize {
        1 + self.n + i
    }
    pub fn x_plus(&self, j: usize) -> usize {
        1 + 2 * self.n + j
    }
    pub fn x_minus(&self, j: usize) -> usize {
        1 + 2 * self.n + self.m + j
    }
    pub fn y_plus(&self) -> usize {
        1 + 2 * self.n + 2 * self.m
    }
    pub fn y_minus(&self) -> usize {
        2 + 2 * self.n + 2 * self.m
    }
    pub fn v(&self, j: usize) -> usize {
        3 + 2 * self.n + 2 * self.m + j
    }
    pub fn z(&self, j: usize) -> usize {
        3 + 2 * self.n + 3 * self.m + j
    }
    pub fn num_vars(&self) -> usize {
        2 * self.n + 4 * self.m + 3
    }
}

/// A built subset-selection model.
#[derive(Debug, Clone)]
pub struct MipModel {
    pub layout: VarLayout,
    pub spec: ObjectiveSpec,
    /// Per-variable big-M for the coefficient bounds.
    pub m_x: Vec<f64>,
    /// Per-variable big-M for the `v_j` linearization bounds.
    pub m_v: Vec<f64>,
    /// Cardinality cap on the number of selected variables.
    pub cap: Option<usize>,
    /// `mae_0 / (n-2)` (or `mse_0 / (n-2)`) times lambda for the adjusted
    /// objectives; zero for plain MAE/MSE.
    pub penalty_shift: f64,
    /// All linear rows. For the MSE family the balance row is quadratic and
    /// not included here.
    pub rows: Vec<LpRow>,
    /// True for the MSE family: `sum (t_i^+ - t_i^-)^2 <= (n-1)u - sum v_j`.
    pub quadratic_balance: bool,
}

impl MipModel {
    /// Total constraint count, counting the quadratic balance row.
    pub fn row_count(&self) -> usize {
        self.rows.len() + usize::from(self.quadratic_balance)
    }

    pub fn num_vars(&self) -> usize {
        self.layout.num_vars()
    }

    /// LP relaxation over the continuous box `z in [0,1]`. Only meaningful
    /// for the MAE family; the quadratic balance row cannot be expressed.
    pub fn lp_relaxation(&self) -> Result<LpProblem> {
        if self.quadratic_balance {
            return Err(Error::InvalidArgument(
                "MSE-family models have no LP relaxation".into(),
            ));
        }
        let mut lp = LpProblem::new(self.num_vars());
        lp.objective[self.layout.u()] = 1.0;
        for j in 0..self.layout.m {
            lp.var_upper[self.layout.z(j)] = Some(1.0);
        }
        lp.rows = self.rows.clone();
        Ok(lp)
    }

    /// Human-auditable LP-format text export of the model.
    pub fn export_lp_text(&self) -> String {
        let lay = self.layout;
        let name = |idx: usize| -> String {
            if idx == lay.u() {
                return "u".into();
            }
            if idx < lay.t_minus(0) {
                return format!("tp{}", idx - lay.t_plus(0));
            }
            if idx < lay.x_plus(0) {
                return format!("tm{}", idx - lay.t_minus(0));
            }
            if idx < lay.x_minus(0) {
                return format!("xp{}", idx - lay.x_plus(0));
            }
            if idx < lay.y_plus() {
                return format!("xm{}", idx - lay.x_minus(0));
            }
            if idx == lay.y_plus() {
                return "yp".into();
            }
            if idx == lay.y_minus() {
                return "ym".into();
            }
            if idx < lay.z(0) {
                return format!("v{}", idx - lay.v(0));
            }
            format!("z{}", idx - lay.z(0))
        };
        let mut out = String::from("\\ subset-selection model\nMinimize\n obj: u\nSubject To\n");
        if self.quadratic_balance {
            out.push_str(" \\ quadratic balance: sum (tp_i - tm_i)^2 <= (n-1) u - sum v_j\n");
        }
        for (r, row) in self.rows.iter().enumerate() {
            out.push_str(&format!(" c{r}:"));
            for &(j, c) in &row.coeffs {
                out.push_str(&format!(" {c:+} {}", name(j)));
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            out.push_str(&format!(" {op} {}\n", row.rhs));
        }
        out.push_str("Binaries\n");
        for j in 0..lay.m {
            out.push_str(&format!(" z{j}"));
        }
        out.push('\n');
        out.push_str("End\n");
        out
    }
}

/// Builds the model for `spec` over the full variable set of `inst`.
///
/// `m_x[j]` bounds `|x_j|`; `m_v[j]` bounds `v_j`. The cardinality cap is
/// mandatory whenever the instance is fat (`m > n-2`).
pub fn build(
    inst: &Instance,
    spec: &ObjectiveSpec,
    m_x: &[f64],
    m_v: &[f64],
    cap: Option<usize>,
) -> Result<MipModel> {
    let n = inst.n;
    let m = inst.m;
    if m_x.len() != m || m_v.len() != m {
        return Err(Error::InvalidArgument("big-M vectors must have length m".into()));
    }
    if m_x.iter().chain(m_v.iter()).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("big-M values must be strictly positive".into()));
    }
    if let Some(c) = cap {
        if c > n - 2 {
            return Err(Error::Cardinality { p: c, max: n - 2 });
        }
    }
    if m > n - 2 && cap.is_none() {
        return Err(Error::InvalidArgument(
            "fat instances require the cardinality cap".into(),
        ));
    }
    let layout = VarLayout { n, m };
    let quadratic_balance = !spec.kind.is_absolute();
    let penalty_shift = if spec.kind.is_adjusted() {
        let n_f = n as f64;
        let b_bar = inst.b.iter().sum::<f64>() / n_f;
        let base = match spec.kind {
            ObjectiveKind::MaeA => inst.b.iter().map(|&b| (b - b_bar).abs()).sum::<f64>() / (n_f - 1.0),
            ObjectiveKind::MseA => inst.b.iter().map(|&b| (b - b_bar).powi(2)).sum::<f64>() / (n_f - 1.0),
            _ => unreachable!(),
        };
        spec.lambda * base / (n_f - 2.0)
    } else {
        0.0
    };

    let mut rows = Vec::with_capacity(n + 5 * m + 2);
    // Balance row (linear only for the MAE family):
    // sum_i (t+ + t-) - (n-1) u + sum_j v_j = 0.
    if !quadratic_balance {
        let mut coeffs = Vec::with_capacity(2 * n + m + 1);
        for i in 0..n {
            coeffs.push((layout.t_plus(i), 1.0));
            coeffs.push((layout.t_minus(i), 1.0));
        }
        coeffs.push((layout.u(), -((n as f64) - 1.0)));
        for j in 0..m {
            coeffs.push((layout.v(j), 1.0));
        }
        rows.push(LpRow { coeffs, sense: Sense::Eq, rhs: 0.0 });
    }
    // Error definitions: t+ - t- - sum_j a_ij (x+ - x-) - y+ + y- = -b_i.
    for i in 0..n {
        let mut coeffs = Vec::with_capacity(2 * m + 4);
        coeffs.push((layout.t_plus(i), 1.0));
        coeffs.push((layout.t_minus(i), -1.0));
        for j in 0..m {
            let a = inst.at(i, j);
            if a != 0.0 {
                coeffs.push((layout.x_plus(j), -a));
                coeffs.push((layout.x_minus(j), a));
            }
        }
        coeffs.push((layout.y_plus(), -1.0));
        coeffs.push((layout.y_minus(), 1.0));
        rows.push(LpRow { coeffs, sense: Sense::Eq, rhs: -inst.b[i] });
    }
    // Coefficient big-M links: x+_j <= M_x z_j, x-_j <= M_x z_j.
    for j in 0..m {
        rows.push(LpRow {
            coeffs: vec![(layout.x_plus(j), 1.0), (layout.z(j), -m_x[j])],
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    for j in 0..m {
        rows.push(LpRow {
            coeffs: vec![(layout.x_minus(j), 1.0), (layout.z(j), -m_x[j])],
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    // v_j <= u (+ penalty shift).
    for j in 0..m {
        rows.push(LpRow {
            coeffs: vec![(layout.v(j), 1.0), (layout.u(), -1.0)],
            sense: Sense::Le,
            rhs: penalty_shift,
        });
    }
    // u (+ shift) - M_v (1 - z_j) <= v_j, i.e. u - v_j + M_v z_j <= M_v - shift.
    for j in 0..m {
        rows.push(LpRow {
            coeffs: vec![
                (layout.u(), 1.0),
                (layout.v(j), -1.0),
                (layout.z(j), m_v[j]),
            ],
            sense: Sense::Le,
            rhs: m_v[j] - penalty_shift,
        });
    }
    // v_j <= M_v z_j.
    for j in 0..m {
        rows.push(LpRow {
            coeffs: vec![(layout.v(j), 1.0), (layout.z(j), -m_v[j])],
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    if let Some(c) = cap {
        let coeffs = (0..m).map(|j| (layout.z(j), 1.0)).collect();
        rows.push(LpRow { coeffs, sense: Sense::Le, rhs: c as f64 });
    }
    Ok(MipModel {
        layout,
        spec: *spec,
        m_x: m_x.to_vec(),
        m_v: m_v.to_vec(),
        cap,
        penalty_shift,
        rows,
        quadratic_balance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutKind {
    /// `v_j <= u_heur z_j` (prunes solutions worse than the incumbent).
    IncumbentCut,
    /// `v_j >= u_bar z_j` with `u_bar` the root relaxation bound.
    LbCut,
    /// `u >= (beta1_j - beta0_j) z_j + beta0_j`.
    FixingCut,
}

#[derive(Debug, Clone)]
pub struct Cut {
    pub kind: CutKind,
    pub row: LpRow,
    /// The variable the cut was generated for.
    pub var: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CutSet {
    pub cuts: Vec<Cut>,
    pub u_heur: f64,
    pub root_bound: f64,
    /// `(beta0, beta1)` per variable.
    pub betas: Vec<(f64, f64)>,
}

impl CutSet {
    pub fn count_by_kind(&self, kind: CutKind) -> usize {
        self.cuts.iter().filter(|c| c.kind == kind).count()
    }
}

/// Supplies valid lower bounds of the model optimum, optionally with one
/// selector pinned. Implemented by the branch-and-bound engines so cut
/// generation stays solver-agnostic.
pub trait RelaxationBounder {
    /// `Ok(None)` signals an infeasible relaxation.
    fn bound(&self, fixing: Option<(usize, bool)>) -> Result<Option<f64>>;
}

/// Generates the root-node inequalities. Only plain MAE/MSE models are
/// eligible; for the adjusted objectives the `v_j` product carries the
/// penalty shift and the incumbent cut shape no longer applies.
pub fn generate_cuts(
    model: &MipModel,
    u_heur: f64,
    bounder: &dyn RelaxationBounder,
) -> Result<CutSet> {
    if model.spec.kind.is_adjusted() {
        return Err(Error::InvalidArgument(
            "cuts are generated for the plain MAE/MSE models only".into(),
        ));
    }
    let lay = model.layout;
    let root = bounder
        .bound(None)?
        .ok_or_else(|| Error::InconsistentBigM("root relaxation infeasible".into()))?;
    let mut cuts = Vec::with_capacity(3 * lay.m);
    for j in 0..lay.m {
        cuts.push(Cut {
            kind: CutKind::IncumbentCut,
            row: LpRow {
                coeffs: vec![(lay.v(j), 1.0), (lay.z(j), -u_heur)],
                sense: Sense::Le,
                rhs: 0.0,
            },
            var: j,
        });
    }
    for j in 0..lay.m {
        cuts.push(Cut {
            kind: CutKind::LbCut,
            row: LpRow {
                coeffs: vec![(lay.z(j), root), (lay.v(j), -1.0)],
                sense: Sense::Le,
                rhs: 0.0,
            },
            var: j,
        });
    }
    let mut betas = Vec::with_capacity(lay.m);
    for j in 0..lay.m {
        // Infeasible single fixings mean that branch is empty; any finite
        // bound works there, so reuse the incumbent value.
        let beta0 = bounder.bound(Some((j, false)))?.unwrap_or(u_heur);
        let beta1 = bounder.bound(Some((j, true)))?.unwrap_or(u_heur);
        betas.push((beta0, beta1));
        cuts.push(Cut {
            kind: CutKind::FixingCut,
            row: LpRow {
                coeffs: vec![(lay.z(j), beta1 - beta0), (lay.u(), -1.0)],
                sense: Sense::Le,
                rhs: -beta0,
            },
            var: j,
        });
    }
    Ok(CutSet { cuts, u_heur, root_bound: root, betas })
}

/// Canonical model-space point for a subset and its fitted solution: `u` is
/// the exact objective, `v_j = (u + shift) z_j`, errors and coefficients
/// split by sign.
pub fn canonical_point(model: &MipModel, sol: &crate::objectives::SubsetSolution) -> Vec<f64> {
    let lay = model.layout;
    let mut x = vec![0.0; lay.num_vars()];
    x[lay.u()] = sol.objective;
    for (s, &j) in sol.subset.iter().enumerate() {
        let c = sol.coefficients[s];
        if c >= 0.0 {
            x[lay.x_plus(j)] = c;
        } else {
            x[lay.x_minus(j)] = -c;
        }
        x[lay.z(j)] = 1.0;
        x[lay.v(j)] = sol.objective + model.penalty_shift;
    }
    if sol.intercept >= 0.0 {
        x[lay.y_plus()] = sol.intercept;
    } else {
        x[lay.y_minus()] = -sol.intercept;
    }
    for (i, &e) in sol.errors.iter().enumerate() {
        if e >= 0.0 {
            x[lay.t_plus(i)] = e;
        } else {
            x[lay.t_minus(i)] = -e;
        }
    }
    x
}

/// Checks a point against one linear row.
pub fn row_satisfied(row: &LpRow, x: &[f64], tol: f64) -> bool {
    let lhs: f64 = row.coeffs.iter().map(|&(j, c)| c * x[j]).sum();
    match row.sense {
        Sense::Le => lhs <= row.rhs + tol,
        Sense::Ge => lhs >= row.rhs - tol,
        Sense::Eq => (lhs - row.rhs).abs() <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, Instance};
    use crate::objectives::{evaluate, ObjectiveKind, ObjectiveSpec};
    use std::collections::BTreeMap;

    fn p1() -> Instance {
        Instance::new(3, 1, vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 4.0], vec!["x1".into()]).unwrap()
    }

    #[test]
    fn thin_mae_dimensions() {
        let inst = p1();
        let spec = ObjectiveSpec::new(ObjectiveKind::Mae);
        let model = build(&inst, &spec, &[10.0], &[10.0], None).unwrap();
        assert_eq!(model.num_vars(), 13);
        assert_eq!(model.row_count(), 9);
        assert!(!model.quadratic_balance);
    }

    #[test]
    fn fat_mae_a_dimensions() {
        let inst = generate(100, 30, 1).unwrap();
        let spec = ObjectiveSpec::new(ObjectiveKind::MaeA);
        let m_x = vec![5.0; 100];
        let m_v = vec![5.0; 100];
        let model = build(&inst, &spec, &m_x, &m_v, Some(28)).unwrap();
        assert_eq!(model.row_count(), 30 + 5 * 100 + 2);
        assert_eq!(model.num_vars(), 2 * 30 + 4 * 100 + 3);
    }

    #[test]
    fn mse_has_quadratic_row() {
        let inst = p1();
        let spec = ObjectiveSpec::new(ObjectiveKind::Mse);
        let model = build(&inst, &spec, &[10.0], &[10.0], None).unwrap();
        assert!(model.quadratic_balance);
        assert_eq!(model.row_count(), 9);
        assert!(model.lp_relaxation().is_err());
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let inst = p1();
        let spec = ObjectiveSpec::new(ObjectiveKind::Mae);
        assert!(build(&inst, &spec, &[0.0], &[1.0], None).is_err());
        assert!(build(&inst, &spec, &[1.0], &[-1.0], None).is_err());
        // Fat instance without a cap.
        let fat = generate(10, 5, 1).unwrap();
        assert!(build(&fat, &ObjectiveSpec::new(ObjectiveKind::MaeA), &[1.0; 10], &[1.0; 10], None).is_err());
    }

    #[test]
    fn fixed_z_lp_matches_evaluate() {
        // With z pinned to a subset, the MAE LP objective is the exact MAE.
        let inst = generate(5, 12, 2).unwrap();
        let spec = ObjectiveSpec::new(ObjectiveKind::Mae);
        let stats = crate::dataset::compute_stats(&inst).unwrap();
        let m_v = vec![stats.mae_m.unwrap(); 5];
        let m_x = vec![100.0; 5];
        let model = build(&inst, &spec, &m_x, &m_v, None).unwrap();
        let lp = model.lp_relaxation().unwrap();
        for subset in [vec![0usize], vec![1, 3], vec![0, 2, 4]] {
            let mut fix = BTreeMap::new();
            for j in 0..5 {
                fix.insert(model.layout.z(j), if subset.contains(&j) { 1.0 } else { 0.0 });
            }
            let sol = crate::lp_solver::solve_lp_fixed(&lp, &fix).unwrap();
            assert_eq!(sol.status, crate::lp_solver::LpStatus::Optimal);
            let want = evaluate(&inst, &subset, &spec).unwrap();
            assert!(
                (sol.objective - want).abs() <= 1e-6 * want.max(1.0),
                "subset {subset:?}: {} vs {want}",
                sol.objective
            );
        }
    }

    #[test]
    fn fixed_z_lp_matches_evaluate_mae_a() {
        let inst = generate(10, 8, 3).unwrap();
        let spec = ObjectiveSpec::new(ObjectiveKind::MaeA);
        let m_x = vec![100.0; 10];
        let m_v = vec![100.0; 10];
        let model = build(&inst, &spec, &m_x, &m_v, Some(6)).unwrap();
        let lp = model.lp_relaxation().unwrap();
        for subset in [vec![0usize], vec![2, 5], vec![1, 4, 7]] {
            let mut fix = BTreeMap::new();
            for j in 0..10 {
                fix.insert(model.layout.z(j), if subset.contains(&j) { 1.0 } else { 0.0 });
            }
            let sol = crate::lp_solver::solve_lp_fixed(&lp, &fix).unwrap();
            let want = evaluate(&inst, &subset, &spec).unwrap();
            assert!(
                (sol.objective - want).abs() <= 1e-6 * want.max(1.0),
                "subset {subset:?}: {} vs {want}",
                sol.objective
            );
        }
    }

    struct ConstBounder(f64);
    impl RelaxationBounder for ConstBounder {
        fn bound(&self, _f: Option<(usize, bool)>) -> crate::Result<Option<f64>> {
            Ok(Some(self.0))
        }
    }

    #[test]
    fn degenerate_fixing_cut() {
        // beta0 = beta1 = root bound: cut (14) reduces to u >= root.
        let inst = p1();
        let spec = ObjectiveSpec::new(ObjectiveKind::Mae);
        let model = build(&inst, &spec, &[10.0], &[10.0], None).unwrap();
        let cuts = generate_cuts(&model, 0.5, &ConstBounder(0.3)).unwrap();
        assert_eq!(cuts.cuts.len(), 3);
        let fixing = cuts
            .cuts
            .iter()
            .find(|c| c.kind == CutKind::FixingCut)
            .unwrap();
        // (beta1 - beta0) z - u <= -beta0 with beta1 = beta0 = 0.3.
        let mut x = vec![0.0; model.num_vars()];
        x[model.layout.u()] = 0.3;
        assert!(row_satisfied(&fixing.row, &x, 1e-9));
        x[model.layout.u()] = 0.29;
        assert!(!row_satisfied(&fixing.row, &x, 1e-9));
    }

    #[test]
    fn cuts_rejected_for_adjusted_models() {
        let inst = generate(10, 8, 3).unwrap();
        let spec = ObjectiveSpec::new(ObjectiveKind::MaeA);
        let model = build(&inst, &spec, &[1.0; 10], &[1.0; 10], Some(6)).unwrap();
        assert!(generate_cuts(&model, 1.0, &ConstBounder(0.5)).is_err());
    }

    #[test]
    fn incumbent_cut_tight_at_optimum() {
        let inst = p1();
        let spec = ObjectiveSpec::new(ObjectiveKind::Mae);
        let model = build(&inst, &spec, &[10.0], &[0.5], None).unwrap();
        // u_heur equals the optimal u; the optimal point stays feasible.
        let cuts = generate_cuts(&model, 0.5, &ConstBounder(0.2)).unwrap();
        let opt = crate::objectives::fit_solution(&inst, &[0], &spec, "oracle").unwrap();
        let x = canonical_point(&model, &opt);
        for cut in &cuts.cuts {
            assert!(row_satisfied(&cut.row, &x, 1e-7), "{:?}", cut.kind);
        }
        let inc = cuts
            .cuts
            .iter()
            .find(|c| c.kind == CutKind::IncumbentCut)
            .unwrap();
        let lhs: f64 = inc.row.coeffs.iter().map(|&(j, c)| c * x[j]).sum();
        assert!(lhs.abs() < 1e-9, "tight at the optimum");
    }
}
