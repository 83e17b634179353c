//! Exact engines: LP-based branch-and-bound over the selector variables for
//! the absolute-error models, a combinatorial branch-and-bound for the
//! squared-error models, and a brute-force enumeration oracle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::dataset::Instance;
use crate::lp_solver::{self, LpProblem, LpStatus};
use crate::mip_models::{generate_cuts, CutKind, MipModel, RelaxationBounder};
use crate::objectives::{evaluate, fit_solution, ObjectiveSpec, SubsetSolution};
use crate::{Error, Result};

/// Selector tolerance: an LP value within this of 0 or 1 counts as integral.
pub const INT_TOL: f64 = 1e-6;
/// Relative optimality gap at which the search stops.
pub const GAP_TOL: f64 = 1e-6;

/// Relative gap between the incumbent objective and the best proven bound.
pub fn gap_ip(incumbent: f64, bound: f64) -> f64 {
    ((incumbent - bound) / incumbent.abs().max(1e-10)).max(0.0)
}

/// Cut counts by kind, for reporting.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct CutCounts {
    pub incumbent: usize,
    pub lb: usize,
    pub fixing: usize,
}

impl CutCounts {
    pub fn total(&self) -> usize {
        self.incumbent + self.lb + self.fixing
    }
}

/// Outcome of one exact solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub incumbent: SubsetSolution,
    pub best_bound: f64,
    pub gap_ip: f64,
    pub nodes: u64,
    pub cuts_applied: CutCounts,
    pub wall_time: f64,
    pub time_limit_hit: bool,
}

/// An open subproblem. `fixed[j]` is -1 (free), 0, or 1.
#[derive(Debug, Clone)]
struct Node {
    fixed: Vec<i8>,
    bound: f64,
    depth: usize,
}

/// Best-bound ordering with depth-first tie-break; `BinaryHeap` is a
/// max-heap, so the comparison is reversed on the bound.
struct HeapEntry(Node);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.0.bound == other.0.bound && self.0.depth == other.0.depth
    }
}
impl Eq for HeapEntry {}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .bound
            .partial_cmp(&self.0.bound)
            .unwrap_or(Ordering::Equal)
            .then(self.0.depth.cmp(&other.0.depth))
    }
}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn check_warm_start(model: &MipModel, warm: &SubsetSolution) -> Result<()> {
    let cap = model.cap.unwrap_or(model.layout.n - 2);
    if warm.subset.len() > cap {
        return Err(Error::Cardinality { p: warm.subset.len(), max: cap });
    }
    if warm.subset.iter().any(|&j| j >= model.layout.m) {
        return Err(Error::InvalidArgument("warm start references unknown variables".into()));
    }
    Ok(())
}

/// Bounds the model optimum by its LP relaxation with optional selector
/// fixings; used both for node bounds and for root cut generation.
struct LpBounder<'a> {
    model: &'a MipModel,
    lp: &'a LpProblem,
}

impl RelaxationBounder for LpBounder<'_> {
    fn bound(&self, fixing: Option<(usize, bool)>) -> Result<Option<f64>> {
        let mut fix = BTreeMap::new();
        if let Some((j, up)) = fixing {
            fix.insert(self.model.layout.z(j), if up { 1.0 } else { 0.0 });
        }
        let sol = lp_solver::solve_lp_fixed(self.lp, &fix)?;
        match sol.status {
            LpStatus::Optimal => Ok(Some(sol.objective)),
            LpStatus::Infeasible => Ok(None),
            other => Err(Error::LpNumeric(format!("relaxation bound returned {other:?}"))),
        }
    }
}

/// Solves a built model exactly, warm-started from a feasible subset.
///
/// The absolute-error family runs a best-first search on the LP relaxation,
/// branching on the most fractional selector. The squared-error family uses
/// the combinatorial bound below; the quadratic balance row never has to be
/// relaxed because every leaf is evaluated exactly.
pub fn solve_mip(
    inst: &Instance,
    model: &MipModel,
    warm_start: &SubsetSolution,
    time_limit: Option<Duration>,
    use_cuts: bool,
) -> Result<SolveReport> {
    check_warm_start(model, warm_start)?;
    // The capped (fat) case goes through the combinatorial search as well:
    // coefficient bounds wide enough to provably contain every candidate fit
    // are numerically unusable there, while the enumeration bound needs none.
    if model.quadratic_balance || model.cap.is_some() {
        solve_combinatorial(inst, &model.spec, model.cap, warm_start, time_limit)
    } else {
        solve_lp_bnb(inst, model, warm_start, time_limit, use_cuts)
    }
}

fn solve_lp_bnb(
    inst: &Instance,
    model: &MipModel,
    warm_start: &SubsetSolution,
    time_limit: Option<Duration>,
    use_cuts: bool,
) -> Result<SolveReport> {
    let start = Instant::now();
    let spec = model.spec;
    let lay = model.layout;
    let m = lay.m;
    let base_lp = model.lp_relaxation()?;

    let mut lp = base_lp.clone();
    let mut cuts_applied = CutCounts::default();
    if use_cuts {
        let bounder = LpBounder { model, lp: &base_lp };
        let cuts = generate_cuts(model, warm_start.objective, &bounder)?;
        for cut in &cuts.cuts {
            match cut.kind {
                CutKind::IncumbentCut => cuts_applied.incumbent += 1,
                CutKind::LbCut => cuts_applied.lb += 1,
                CutKind::FixingCut => cuts_applied.fixing += 1,
            }
            lp.rows.push(cut.row.clone());
        }
    }

    let mut incumbent = fit_solution(inst, &warm_start.subset, &spec, "warm-start")?;
    let mut nodes = 0u64;
    let mut time_limit_hit = false;
    let mut best_bound = f64::NEG_INFINITY;

    let solve_node = |fixed: &[i8]| -> Result<lp_solver::LpSolution> {
        let mut fix = BTreeMap::new();
        for (j, &f) in fixed.iter().enumerate() {
            if f >= 0 {
                fix.insert(lay.z(j), f as f64);
            }
        }
        lp_solver::solve_lp_fixed(&lp, &fix)
    };

    let mut heap = BinaryHeap::new();
    let root = Node { fixed: vec![-1; m], bound: f64::NEG_INFINITY, depth: 0 };
    heap.push(HeapEntry(root));

    while let Some(HeapEntry(node)) = heap.pop() {
        best_bound = best_bound.max(node.bound.min(incumbent.objective));
        if node.bound.is_finite() && gap_ip(incumbent.objective, node.bound) <= GAP_TOL {
            best_bound = incumbent.objective;
            break;
        }
        if let Some(limit) = time_limit {
            if start.elapsed() >= limit {
                time_limit_hit = true;
                break;
            }
        }
        nodes += 1;
        let sol = solve_node(&node.fixed)
            .map_err(|e| Error::LpNumeric(format!("node {nodes}: {e}")))?;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Optimal => {}
            other => return Err(Error::LpNumeric(format!("node {nodes} returned {other:?}"))),
        }
        if nodes == 1 && node.depth == 0 && sol.status == LpStatus::Infeasible {
            return Err(Error::InconsistentBigM("root relaxation infeasible".into()));
        }
        let bound = sol.objective;
        if gap_ip(incumbent.objective, bound) <= GAP_TOL {
            continue;
        }
        // Most fractional free selector.
        let mut branch_var: Option<(usize, f64)> = None;
        for j in 0..m {
            if node.fixed[j] >= 0 {
                continue;
            }
            let zj = sol.x[lay.z(j)];
            let frac = zj.min(1.0 - zj).max(0.0);
            if frac > INT_TOL {
                if branch_var.map_or(true, |(_, best)| frac > best) {
                    branch_var = Some((j, frac));
                }
            }
        }
        if branch_var.is_none() {
            // Integral relaxation: harvest the subset it encodes.
            let subset: Vec<usize> = (0..m)
                .filter(|&j| match node.fixed[j] {
                    1 => true,
                    0 => false,
                    _ => sol.x[lay.z(j)] >= 0.5,
                })
                .collect();
            let cap_ok = model.cap.map_or(true, |c| subset.len() <= c);
            if cap_ok {
                let val = evaluate(inst, &subset, &spec)?;
                if val < incumbent.objective - 1e-12 {
                    incumbent = fit_solution(inst, &subset, &spec, "branch-and-bound")?;
                }
            }
            // The LP value can sit below the exact evaluation only through
            // the intercept-only completion; if the node still looks
            // improvable and free selectors remain, split on one of them.
            let free = (0..m).find(|&j| node.fixed[j] < 0);
            match free {
                Some(j) if gap_ip(incumbent.objective, bound) > GAP_TOL => {
                    branch_var = Some((j, 0.0));
                }
                _ => continue,
            }
        }
        let (j, _) = branch_var.unwrap();
        for val in [1i8, 0] {
            let mut fixed = node.fixed.clone();
            fixed[j] = val;
            heap.push(HeapEntry(Node { fixed, bound, depth: node.depth + 1 }));
        }
    }
    if heap.is_empty() && !time_limit_hit {
        best_bound = incumbent.objective;
    }
    Ok(SolveReport {
        gap_ip: gap_ip(incumbent.objective, best_bound),
        incumbent,
        best_bound,
        nodes,
        cuts_applied,
        wall_time: start.elapsed().as_secs_f64(),
        time_limit_hit,
    })
}

/// Valid lower bound for any completion `F1 <= S <= F1 + free`: the residual
/// of the most permissive fit with the least punishing denominator. Rank
/// trouble degrades to 0, which stays valid.
pub fn mse_node_bound(
    inst: &Instance,
    f1: &[usize],
    f0: &[usize],
    spec: &ObjectiveSpec,
    cap: Option<usize>,
) -> f64 {
    let n = inst.n;
    let m = inst.m;
    let cap = cap.unwrap_or(n - 2).min(n - 2);
    let relaxed: Vec<usize> = (0..m).filter(|j| !f0.contains(j)).collect();
    let sse = if relaxed.is_empty() {
        let b_bar = inst.b.iter().sum::<f64>() / n as f64;
        inst.b.iter().map(|&b| (b - b_bar).powi(2)).sum()
    } else {
        crate::linalg::sse_rank_tolerant(inst, &relaxed)
    };
    let p_lo = f1.len();
    if spec.kind.is_adjusted() {
        let b_bar = inst.b.iter().sum::<f64>() / n as f64;
        let mse_0 = inst.b.iter().map(|&b| (b - b_bar).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let p_hi = relaxed.len().min(cap);
        let mut best = f64::INFINITY;
        for p in p_lo..=p_hi.max(p_lo) {
            let denom = (n - 1 - p) as f64;
            let pen = spec.lambda * (p as f64 / (n as f64 - 2.0)) * mse_0;
            best = best.min((sse + pen) / denom);
        }
        best.max(0.0)
    } else {
        (sse / (n - 1 - p_lo) as f64).max(0.0)
    }
}

/// Absolute-error counterpart of [`mse_node_bound`]: the relaxed residual is
/// the SAE of a LAD fit over every variable not yet excluded. Numeric
/// trouble in the fit degrades to 0, which stays a valid bound.
pub fn mae_node_bound(
    inst: &Instance,
    f1: &[usize],
    f0: &[usize],
    spec: &ObjectiveSpec,
    cap: Option<usize>,
) -> f64 {
    let n = inst.n;
    let m = inst.m;
    let cap = cap.unwrap_or(n - 2).min(n - 2);
    let relaxed: Vec<usize> = (0..m).filter(|j| !f0.contains(j)).collect();
    let b_bar = inst.b.iter().sum::<f64>() / n as f64;
    let sae = if relaxed.is_empty() {
        inst.b.iter().map(|&b| (b - b_bar).abs()).sum()
    } else {
        crate::objectives::lad_fit(inst, &relaxed).map(|f| f.sae()).unwrap_or(0.0)
    };
    let p_lo = f1.len();
    if spec.kind.is_adjusted() {
        let mae_0 = inst.b.iter().map(|&b| (b - b_bar).abs()).sum::<f64>() / (n as f64 - 1.0);
        let p_hi = relaxed.len().min(cap);
        let mut best = f64::INFINITY;
        for p in p_lo..=p_hi.max(p_lo) {
            let denom = (n - 1 - p) as f64;
            let pen = spec.lambda * (p as f64 / (n as f64 - 2.0)) * mae_0;
            best = best.min((sae + pen) / denom);
        }
        best.max(0.0)
    } else {
        (sae / (n - 1 - p_lo) as f64).max(0.0)
    }
}

fn solve_combinatorial(
    inst: &Instance,
    spec: &ObjectiveSpec,
    cap: Option<usize>,
    warm_start: &SubsetSolution,
    time_limit: Option<Duration>,
) -> Result<SolveReport> {
    let start = Instant::now();
    let n = inst.n;
    let m = inst.m;
    let cap = cap.unwrap_or(n - 2).min(n - 2);
    let mut incumbent = fit_solution(inst, &warm_start.subset, spec, "warm-start")?;
    let mut nodes = 0u64;
    let mut time_limit_hit = false;
    let mut best_bound = f64::NEG_INFINITY;

    #[derive(Clone)]
    struct CNode {
        f1: Vec<usize>,
        f0: Vec<usize>,
        bound: f64,
        depth: usize,
    }
    struct CEntry(CNode);
    impl PartialEq for CEntry {
        fn eq(&self, other: &Self) -> bool {
            self.0.bound == other.0.bound && self.0.depth == other.0.depth
        }
    }
    impl Eq for CEntry {}
    impl Ord for CEntry {
        fn cmp(&self, other: &Self) -> Ordering {
            other
                .0
                .bound
                .partial_cmp(&self.0.bound)
                .unwrap_or(Ordering::Equal)
                .then(self.0.depth.cmp(&other.0.depth))
        }
    }
    impl PartialOrd for CEntry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }

    let node_bound = |f1: &[usize], f0: &[usize]| -> f64 {
        if spec.kind.is_absolute() {
            mae_node_bound(inst, f1, f0, spec, Some(cap))
        } else {
            mse_node_bound(inst, f1, f0, spec, Some(cap))
        }
    };
    let relax_err = |subset: &[usize]| -> f64 {
        if spec.kind.is_absolute() {
            crate::objectives::lad_fit(inst, subset).map(|f| f.sae()).unwrap_or(0.0)
        } else {
            crate::linalg::sse_rank_tolerant(inst, subset)
        }
    };

    let mut heap = BinaryHeap::new();
    let root_bound = node_bound(&[], &[]);
    heap.push(CEntry(CNode { f1: vec![], f0: vec![], bound: root_bound, depth: 0 }));

    while let Some(CEntry(node)) = heap.pop() {
        best_bound = best_bound.max(node.bound.min(incumbent.objective));
        if gap_ip(incumbent.objective, node.bound) <= GAP_TOL {
            best_bound = incumbent.objective;
            break;
        }
        if let Some(limit) = time_limit {
            if start.elapsed() >= limit {
                time_limit_hit = true;
                break;
            }
        }
        nodes += 1;
        // The partial selection itself is a feasible candidate.
        if node.f1.len() <= cap {
            let val = evaluate(inst, &node.f1, spec)?;
            if val < incumbent.objective - 1e-12 {
                incumbent = fit_solution(inst, &node.f1, spec, "branch-and-bound")?;
            }
        }
        if gap_ip(incumbent.objective, node.bound) <= GAP_TOL {
            continue;
        }
        let free: Vec<usize> =
            (0..m).filter(|j| !node.f1.contains(j) && !node.f0.contains(j)).collect();
        if free.is_empty() || node.f1.len() >= cap {
            continue;
        }
        // Branch on the free variable whose individual removal from the
        // relaxed set hurts the residual most; those fits are cheap and
        // approximate strong branching.
        let mut branch = free[0];
        let mut worst = f64::NEG_INFINITY;
        let relaxed: Vec<usize> = (0..m).filter(|j| !node.f0.contains(j)).collect();
        for &j in &free {
            let without: Vec<usize> = relaxed.iter().copied().filter(|&x| x != j).collect();
            let err = relax_err(&without);
            if err > worst + 1e-15 {
                worst = err;
                branch = j;
            }
        }
        for include in [true, false] {
            let mut f1 = node.f1.clone();
            let mut f0 = node.f0.clone();
            if include {
                f1.push(branch);
                f1.sort_unstable();
            } else {
                f0.push(branch);
                f0.sort_unstable();
            }
            let bound = node_bound(&f1, &f0);
            if gap_ip(incumbent.objective, bound) <= GAP_TOL {
                continue;
            }
            heap.push(CEntry(CNode { f1, f0, bound, depth: node.depth + 1 }));
        }
    }
    if heap.is_empty() && !time_limit_hit {
        best_bound = incumbent.objective;
    }
    Ok(SolveReport {
        gap_ip: gap_ip(incumbent.objective, best_bound),
        incumbent,
        best_bound,
        nodes,
        cuts_applied: CutCounts::default(),
        wall_time: start.elapsed().as_secs_f64(),
        time_limit_hit,
    })
}

/// Brute-force oracle over every subset within the cardinality cap.
pub fn exhaustive(inst: &Instance, spec: &ObjectiveSpec, cap: Option<usize>) -> Result<SubsetSolution> {
    let m = inst.m;
    if m > 22 {
        return Err(Error::InvalidArgument(format!("exhaustive enumeration capped at m = 22, got {m}")));
    }
    let cap = cap.unwrap_or(inst.n - 2).min(inst.n - 2);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u64..(1u64 << m) {
        if mask.count_ones() as usize > cap {
            continue;
        }
        let subset: Vec<usize> = (0..m).filter(|j| mask >> j & 1 == 1).collect();
        let val = evaluate(inst, &subset, spec)?;
        if best.as_ref().map_or(true, |(b, _)| val < *b - 1e-15) {
            best = Some((val, subset));
        }
    }
    let (_, subset) = best.unwrap();
    fit_solution(inst, &subset, spec, "exhaustive")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::big_m::{self, BigMMethod};
    use crate::dataset::{compute_stats, generate, Instance};
    use crate::mip_models::build;
    use crate::objectives::{ObjectiveKind, ObjectiveSpec};

    fn p1() -> Instance {
        Instance::new(3, 1, vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 4.0], vec!["x1".into()]).unwrap()
    }

    fn solve(inst: &Instance, kind: ObjectiveKind, use_cuts: bool) -> SolveReport {
        let spec = ObjectiveSpec::new(kind);
        let stats = compute_stats(inst).unwrap();
        let cap = if inst.is_fat() { Some(inst.n - 2) } else { None };
        let warm = crate::heuristics::stepwise(inst, &spec, cap.unwrap_or(inst.n - 2)).unwrap();
        let method = if inst.is_fat() { BigMMethod::Statistical } else { BigMMethod::LpBased };
        let bm = big_m::compute(inst, &stats, method, Some(&warm), 7).unwrap();
        let model = build(inst, &spec, &bm.m_x, &vec![bm.m_v; inst.m], cap).unwrap();
        solve_mip(inst, &model, &warm, None, use_cuts).unwrap()
    }

    #[test]
    fn p1_mae_optimum() {
        let report = solve(&p1(), ObjectiveKind::Mae, false);
        assert!((report.incumbent.objective - 0.5).abs() < 1e-9);
        assert_eq!(report.incumbent.subset, vec![0]);
        assert!(report.gap_ip <= GAP_TOL);
    }

    #[test]
    fn p1_mse_optimum() {
        let report = solve(&p1(), ObjectiveKind::Mse, false);
        assert!((report.incumbent.objective - 1.0 / 6.0).abs() < 1e-9);
        assert_eq!(report.incumbent.subset, vec![0]);
    }

    #[test]
    fn p1_mae_a_prefers_empty() {
        let inst = p1();
        let spec = ObjectiveSpec::new(ObjectiveKind::MaeA);
        let best = exhaustive(&inst, &spec, None).unwrap();
        assert!(best.subset.is_empty());
        assert!((best.objective - 5.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn oracle_equivalence_small() {
        for (seed, kind) in [
            (1u64, ObjectiveKind::Mae),
            (2, ObjectiveKind::Mse),
            (3, ObjectiveKind::Mae),
            (4, ObjectiveKind::Mse),
        ] {
            let inst = generate(5, 15, seed).unwrap();
            let report = solve(&inst, kind, false);
            let oracle = exhaustive(&inst, &ObjectiveSpec::new(kind), None).unwrap();
            assert!(
                (report.incumbent.objective - oracle.objective).abs() <= 1e-6,
                "seed {seed} {kind:?}: {} vs {}",
                report.incumbent.objective,
                oracle.objective
            );
        }
    }

    #[test]
    fn oracle_equivalence_fat() {
        for kind in [ObjectiveKind::MaeA, ObjectiveKind::MseA] {
            let inst = generate(10, 8, 5).unwrap();
            let report = solve(&inst, kind, false);
            let oracle = exhaustive(&inst, &ObjectiveSpec::new(kind), Some(inst.n - 2)).unwrap();
            assert!(
                (report.incumbent.objective - oracle.objective).abs() <= 1e-6,
                "{kind:?}: {} vs {}",
                report.incumbent.objective,
                oracle.objective
            );
        }
    }

    #[test]
    fn cut_neutrality() {
        for seed in [1u64, 6] {
            let inst = generate(5, 15, seed).unwrap();
            let plain = solve(&inst, ObjectiveKind::Mae, false);
            let cut = solve(&inst, ObjectiveKind::Mae, true);
            assert!((plain.incumbent.objective - cut.incumbent.objective).abs() <= 1e-9);
            assert!(cut.cuts_applied.total() > 0);
        }
    }

    #[test]
    fn warm_start_never_worsens() {
        let inst = generate(5, 15, 9).unwrap();
        let spec = ObjectiveSpec::new(ObjectiveKind::Mae);
        let oracle = exhaustive(&inst, &spec, None).unwrap();
        let stats = compute_stats(&inst).unwrap();
        let bm = big_m::compute(&inst, &stats, BigMMethod::LpBased, Some(&oracle), 0).unwrap();
        let model = build(&inst, &spec, &bm.m_x, &vec![bm.m_v; inst.m], None).unwrap();
        let report = solve_mip(&inst, &model, &oracle, None, false).unwrap();
        assert!(report.incumbent.objective <= oracle.objective + 1e-12);
        assert!(report.gap_ip <= GAP_TOL);
    }

    #[test]
    fn mse_bound_properties() {
        let inst = generate(10, 20, 2).unwrap();
        let spec = ObjectiveSpec::new(ObjectiveKind::Mse);
        // Leaf exactness: all variables fixed out except F1.
        let f1 = vec![1usize, 4];
        let f0: Vec<usize> = (0..10).filter(|j| !f1.contains(j)).collect();
        let leaf = mse_node_bound(&inst, &f1, &f0, &spec, None);
        let exact = evaluate(&inst, &f1, &spec).unwrap();
        assert!((leaf - exact).abs() < 1e-9);
        // Root validity against the oracle.
        let root = mse_node_bound(&inst, &[], &[], &spec, None);
        let oracle = exhaustive(&inst, &spec, None).unwrap();
        assert!(root <= oracle.objective + 1e-9);
        // Child bounds never fall below the parent.
        let parent = mse_node_bound(&inst, &[0], &[], &spec, None);
        for j in 1..10 {
            let with = mse_node_bound(&inst, &[0, j], &[], &spec, None);
            let without = mse_node_bound(&inst, &[0], &[j], &spec, None);
            assert!(with >= parent - 1e-9);
            assert!(without >= parent - 1e-9);
        }
    }

    #[test]
    fn mse_a_bound_root_validity() {
        let inst = generate(10, 8, 4).unwrap();
        let spec = ObjectiveSpec::new(ObjectiveKind::MseA);
        let cap = inst.n - 2;
        let root = mse_node_bound(&inst, &[], &[], &spec, Some(cap));
        let oracle = exhaustive(&inst, &spec, Some(cap)).unwrap();
        assert!(root <= oracle.objective + 1e-9);
    }

    #[test]
    fn exhaustive_guards_large_m() {
        let inst = generate(25, 40, 1).unwrap();
        assert!(exhaustive(&inst, &ObjectiveSpec::new(ObjectiveKind::Mse), None).is_err());
    }

    #[test]
    fn time_limit_returns_incumbent() {
        let inst = generate(10, 30, 8).unwrap();
        let spec = ObjectiveSpec::new(ObjectiveKind::Mae);
        let stats = compute_stats(&inst).unwrap();
        let warm = crate::heuristics::stepwise(&inst, &spec, inst.n - 2).unwrap();
        let bm = big_m::compute(&inst, &stats, BigMMethod::LpBased, Some(&warm), 0).unwrap();
        let model = build(&inst, &spec, &bm.m_x, &vec![bm.m_v; inst.m], None).unwrap();
        let report =
            solve_mip(&inst, &model, &warm, Some(Duration::from_millis(1)), false).unwrap();
        assert!(report.incumbent.objective <= warm.objective + 1e-12);
        assert!(report.gap_ip >= 0.0);
    }

    #[test]
    fn gap_formula() {
        assert!((gap_ip(2.0, 1.5) - 0.25).abs() < 1e-15);
        assert_eq!(gap_ip(1.0, 1.0), 0.0);
        assert_eq!(gap_ip(1.0, 2.0), 0.0, "bound past the incumbent clamps to zero");
    }
}
