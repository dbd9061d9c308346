//! Lane-choice (Wardrop) equilibria of the tolled classes.
//!
//! Lane-1 cost rises and lane-2 cost falls with the lane-1 effective flow, so the
//! equilibrium is either a pure point (every chooser on one lane) or the set of
//! feasible splits that realize the single critical flow where the two costs meet.
//! On that set the total delay is linear, and its extremes are found by filling
//! the lane-1 budget greedily in order of commuters carried per unit of effective
//! flow.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{
    check_feasible, flow_bounds, lane1_effective, total_delay, travel_costs, DelayFunction,
    FlowDistribution, Scenario, TolledClass, FEASIBILITY_TOL,
};
use crate::search::{bisect, BisectionOptions};

/// Default cost tolerance for [`wardrop_check`].
pub const WARDROP_TOL: f64 = 1e-9;

/// Tolerance on `n == 1/mu` when picking the best-case priority.
pub const OCCUPANCY_TIE_TOL: f64 = 1e-12;

/// Tolls within this distance of a uniqueness threshold count as on it.
pub const THRESHOLD_TIE_TOL: f64 = 1e-12;

/// Which of the three regimes the toll puts the segment in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Uniqueness {
    /// Toll at or above the upper threshold: every chooser on lane 2.
    AllLane2,
    /// Toll at or below the lower threshold: every chooser on lane 1.
    AllLane1,
    /// Costs cross strictly inside the feasible range; equilibria form a simplex.
    Interior,
}

impl Uniqueness {
    pub fn name(self) -> &'static str {
        match self {
            Uniqueness::AllLane2 => "all_lane2",
            Uniqueness::AllLane1 => "all_lane1",
            Uniqueness::Interior => "interior",
        }
    }
}

impl fmt::Display for Uniqueness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Tolls bounding the interior regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TollThresholds {
    /// At or below: unique all-lane-1 equilibrium.
    pub lower: f64,
    /// At or above: unique all-lane-2 equilibrium.
    pub upper: f64,
}

pub fn toll_thresholds(s: &Scenario) -> TollThresholds {
    let (f1_min, f1_max) = flow_bounds(s);
    let d1 = s.delay_lane1();
    let d2 = s.delay_lane2();
    TollThresholds {
        lower: d2.eval(0.0) - d1.eval(f1_max),
        upper: d2.eval(f1_max - f1_min) - d1.eval(f1_min),
    }
}

/// Classifies the toll against the uniqueness thresholds.
///
/// The all-lane-2 test runs first; a toll on a threshold (within
/// [`THRESHOLD_TIE_TOL`]) counts as the pure case.
pub fn uniqueness_class(s: &Scenario) -> Uniqueness {
    let t = toll_thresholds(s);
    if s.toll() >= t.upper - THRESHOLD_TIE_TOL {
        Uniqueness::AllLane2
    } else if s.toll() <= t.lower + THRESHOLD_TIE_TOL {
        Uniqueness::AllLane1
    } else {
        Uniqueness::Interior
    }
}

/// Lane-1 effective flow at which both lane costs are equal.
pub fn solve_critical_flow(s: &Scenario) -> Result<f64> {
    match uniqueness_class(s) {
        Uniqueness::Interior => {}
        other => {
            return Err(Error::Precondition(format!(
                "critical flow is only defined in the interior regime, toll {} gives {other}",
                s.toll()
            )))
        }
    }
    let (f1_min, f1_max) = flow_bounds(s);
    Ok(bisect(
        |f1| s.cost_gap(f1),
        f1_min,
        f1_max,
        BisectionOptions::default(),
    ))
}

/// Lane-1 budget `f1* - f1_min` the choosing classes share.
pub fn simplex_budget(s: &Scenario, f1_star: f64) -> f64 {
    (f1_star - flow_bounds(s).0).max(0.0)
}

/// Range of one class's lane-1 flow over the equilibrium simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRange {
    pub min: f64,
    pub max: f64,
}

/// Per-class extremes of lane-1 flow over the simplex at `f1_star`, indexed by
/// [`TolledClass::index`]. Pinned classes report their fixed full count.
pub fn coordinate_extremes(s: &Scenario, f1_star: f64) -> [ClassRange; 3] {
    let budget = simplex_budget(s, f1_star);
    let policy = s.policy();
    let mut out = [ClassRange { min: 0.0, max: 0.0 }; 3];
    for class in TolledClass::ALL {
        let cap = s.vehicles(class);
        out[class.index()] = if policy.is_pinned(class) {
            ClassRange { min: cap, max: cap }
        } else {
            let w = s.weight(class);
            let others: f64 = policy
                .choosing()
                .filter(|&c| c != class)
                .map(|c| s.class_effective(c))
                .sum();
            ClassRange {
                min: ((budget - others) / w).clamp(0.0, cap),
                max: (budget / w).min(cap),
            }
        };
    }
    out
}

/// How carpools compare with low-occupancy AVs per unit of lane capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccupancyRegime {
    /// `n > 1/mu`: a human-driven carpool moves more commuters per unit of flow.
    CarpoolFirst,
    /// `n < 1/mu`: a low-occupancy AV moves more.
    AutonomyFirst,
    /// `n == 1/mu` within [`OCCUPANCY_TIE_TOL`].
    Tied,
}

pub fn occupancy_regime(s: &Scenario) -> OccupancyRegime {
    let pivot = 1.0 / s.asymmetry();
    let n = s.occupancy();
    if (n - pivot).abs() <= OCCUPANCY_TIE_TOL {
        OccupancyRegime::Tied
    } else if n > pivot {
        OccupancyRegime::CarpoolFirst
    } else {
        OccupancyRegime::AutonomyFirst
    }
}

/// Choosing classes in best-case fill order. HV,LO always comes last.
pub fn best_case_priority(s: &Scenario) -> Vec<TolledClass> {
    use TolledClass::*;
    let order = match occupancy_regime(s) {
        OccupancyRegime::CarpoolFirst | OccupancyRegime::Tied => [HvHo, AvLo, HvLo],
        OccupancyRegime::AutonomyFirst => [AvLo, HvHo, HvLo],
    };
    let policy = s.policy();
    order.into_iter().filter(|&c| policy.is_choosing(c)).collect()
}

/// Choosing classes in worst-case fill order: HV,LO first, then the rest reversed.
pub fn worst_case_priority(s: &Scenario) -> Vec<TolledClass> {
    let mut order = best_case_priority(s);
    order.reverse();
    order
}

fn greedy_fill(s: &Scenario, budget: f64, order: &[TolledClass]) -> FlowDistribution {
    let mut f = s.all_lane2();
    let mut remaining = budget;
    for &class in order {
        let take = (remaining / s.weight(class)).clamp(0.0, s.vehicles(class));
        f.set(class, take);
        remaining = (remaining - take * s.weight(class)).max(0.0);
    }
    f
}

/// Best (least total delay) and worst points of the simplex at `f1_star`.
pub fn select_best_worst(s: &Scenario, f1_star: f64) -> (FlowDistribution, FlowDistribution) {
    let budget = simplex_budget(s, f1_star);
    let best = greedy_fill(s, budget, &best_case_priority(s));
    let worst = greedy_fill(s, budget, &worst_case_priority(s));
    (best, worst)
}

/// The equilibrium set: a single point or the simplex at a critical flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EquilibriumSet {
    UniquePoint(FlowDistribution),
    Simplex { f1_star: f64 },
}

impl EquilibriumSet {
    /// Whether a feasible `f` belongs to the set, up to `tol` in effective flow.
    pub fn contains(&self, s: &Scenario, f: &FlowDistribution, tol: f64) -> bool {
        if check_feasible(s, f).is_err() {
            return false;
        }
        match self {
            EquilibriumSet::UniquePoint(p) => p
                .to_array()
                .iter()
                .zip(f.to_array())
                .all(|(a, b)| (a - b).abs() <= tol),
            EquilibriumSet::Simplex { f1_star } => (lane1_effective(s, f) - f1_star).abs() <= tol,
        }
    }
}

/// Equilibrium set with its best and worst members by total commuter delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumReport {
    pub class: Uniqueness,
    pub set: EquilibriumSet,
    pub best: FlowDistribution,
    pub worst: FlowDistribution,
    pub j_best: f64,
    pub j_worst: f64,
}

impl EquilibriumReport {
    pub fn f1_star(&self) -> Option<f64> {
        match self.set {
            EquilibriumSet::Simplex { f1_star } => Some(f1_star),
            EquilibriumSet::UniquePoint(_) => None,
        }
    }
}

pub fn equilibrium_report(s: &Scenario) -> EquilibriumReport {
    let delay = |f: &FlowDistribution| total_delay(s, f).expect("constructed flows are feasible");
    let class = uniqueness_class(s);
    let unique = |p: FlowDistribution| {
        let j = delay(&p);
        EquilibriumReport {
            class,
            set: EquilibriumSet::UniquePoint(p),
            best: p,
            worst: p,
            j_best: j,
            j_worst: j,
        }
    };
    match class {
        Uniqueness::AllLane2 => unique(s.all_lane2()),
        Uniqueness::AllLane1 => unique(s.all_lane1()),
        Uniqueness::Interior => {
            let f1_star = solve_critical_flow(s).expect("interior regime");
            let (best, worst) = select_best_worst(s, f1_star);
            EquilibriumReport {
                class,
                set: EquilibriumSet::Simplex { f1_star },
                best,
                worst,
                j_best: delay(&best),
                j_worst: delay(&worst),
            }
        }
    }
}

/// Definition-level equilibrium test for a single distribution.
///
/// Every choosing class with flow on lane 1 must not pay more than on lane 2, and
/// vice versa, up to `tol`. Flows below the feasibility tolerance count as zero.
/// Infeasible distributions are never equilibria.
pub fn wardrop_check(s: &Scenario, f: &FlowDistribution, tol: f64) -> bool {
    let Ok((c1, c2)) = travel_costs(s, f) else {
        return false;
    };
    s.policy().choosing().all(|class| {
        let on1 = f.get(class) > FEASIBILITY_TOL;
        let on2 = f.lane2(s, class) > FEASIBILITY_TOL;
        (!on1 || c1 <= c2 + tol) && (!on2 || c2 <= c1 + tol)
    })
}

/// Largest change of `d` over any interval of width `h` inside `[0, span]`.
///
/// BPR delays are convex or concave, so the extreme is at one end.
fn max_increment(d: &DelayFunction, h: f64, span: f64) -> f64 {
    let h = h.min(span);
    (d.eval(h) - d.eval(0.0)).max(d.eval(span) - d.eval(span - h))
}

/// Cost tolerance used by [`brute_force_equilibria`] for a given grid resolution.
pub fn brute_force_tolerance(s: &Scenario, grid_steps: usize) -> f64 {
    let (_, f1_max) = flow_bounds(s);
    let h = grid_spacing(s, grid_steps);
    let both = max_increment(s.delay_lane1(), h, f1_max) + max_increment(s.delay_lane2(), h, f1_max);
    both * (1.0 + 1e-9) + WARDROP_TOL
}

/// Largest effective-flow step between neighbouring grid points.
pub fn grid_spacing(s: &Scenario, grid_steps: usize) -> f64 {
    s.policy()
        .choosing()
        .map(|c| s.class_effective(c) / grid_steps as f64)
        .fold(0.0, f64::max)
}

fn axis(s: &Scenario, class: TolledClass, steps: usize) -> Vec<f64> {
    let cap = s.vehicles(class);
    if s.policy().is_pinned(class) {
        vec![cap]
    } else if cap == 0.0 {
        vec![0.0]
    } else {
        (0..=steps)
            .map(|i| if i == steps { cap } else { cap * i as f64 / steps as f64 })
            .collect()
    }
}

fn lex_cmp(a: &FlowDistribution, b: &FlowDistribution) -> Ordering {
    a.to_array()
        .iter()
        .zip(b.to_array().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Exhaustive grid search for equilibria, for cross-checking the analytic route.
///
/// Each choosing class's lane-1 flow runs over `grid_steps + 1` evenly spaced
/// values; points passing [`wardrop_check`] at [`brute_force_tolerance`] are
/// returned in lexicographic order.
pub fn brute_force_equilibria(s: &Scenario, grid_steps: usize) -> Result<Vec<FlowDistribution>> {
    brute_force_equilibria_with(s, grid_steps, Execution::default())
}

pub fn brute_force_equilibria_with(
    s: &Scenario,
    grid_steps: usize,
    exec: Execution,
) -> Result<Vec<FlowDistribution>> {
    if grid_steps < 1 {
        return Err(Error::Precondition("grid_steps must be at least 1".into()));
    }
    let tol = brute_force_tolerance(s, grid_steps);
    let xs = axis(s, TolledClass::HvLo, grid_steps);
    let ys = axis(s, TolledClass::HvHo, grid_steps);
    let zs = axis(s, TolledClass::AvLo, grid_steps);
    let chunks = exec::map(exec, &xs, |&x| {
        let mut hits = Vec::new();
        for &y in &ys {
            for &z in &zs {
                let f = FlowDistribution::new(x, y, z);
                if wardrop_check(s, &f, tol) {
                    hits.push(f);
                }
            }
        }
        hits
    });
    let mut out: Vec<FlowDistribution> = chunks.into_iter().flatten().collect();
    out.sort_by(lex_cmp);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::example;
    use crate::model::DemandProfile;
    use approx::assert_abs_diff_eq;

    fn assert_flow(f: FlowDistribution, expected: [f64; 3], eps: f64) {
        for (a, b) in f.to_array().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = eps);
        }
    }

    #[test]
    fn thresholds_match_example() {
        let t = toll_thresholds(&example(0.0, 4.0, 0.5));
        assert_abs_diff_eq!(t.upper, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(t.lower, -0.8, epsilon = 1e-12);
        let t = toll_thresholds(&example(0.0, 2.0, 0.4));
        assert_abs_diff_eq!(t.upper, 0.74, epsilon = 1e-12);
    }

    #[test]
    fn classification() {
        assert_eq!(uniqueness_class(&example(0.7, 4.0, 0.5)), Uniqueness::AllLane2);
        assert_eq!(uniqueness_class(&example(0.74, 2.0, 0.4)), Uniqueness::AllLane2);
        assert_eq!(uniqueness_class(&example(0.5, 4.0, 0.5)), Uniqueness::Interior);
        assert_eq!(uniqueness_class(&example(0.69, 4.0, 0.5)), Uniqueness::Interior);
    }

    #[test]
    fn critical_flow_closed_form() {
        // linear delays: f1* = (f1_max - 10 tau) / 2
        let f = solve_critical_flow(&example(0.5, 4.0, 0.5)).unwrap();
        assert_abs_diff_eq!(f, 1.5, epsilon = 1e-10);
        let f = solve_critical_flow(&example(0.5, 2.0, 0.4)).unwrap();
        assert_abs_diff_eq!(f, 2.0, epsilon = 1e-10);
        for tau in [0.0, 0.1, 0.33, 0.6] {
            let f = solve_critical_flow(&example(tau, 4.0, 0.5)).unwrap();
            assert_abs_diff_eq!(f, (8.0 - 10.0 * tau) / 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn critical_flow_approaches_minimum_at_threshold() {
        let f = solve_critical_flow(&example(0.7 - 1e-9, 4.0, 0.5)).unwrap();
        assert_abs_diff_eq!(f, 0.5, epsilon = 1e-8);
    }

    #[test]
    fn critical_flow_outside_interior_is_an_error() {
        let err = solve_critical_flow(&example(1.0, 4.0, 0.5)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn extremes_example() {
        let s = example(0.5, 4.0, 0.5);
        let r = coordinate_extremes(&s, 1.5);
        assert_abs_diff_eq!(r[0].max, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1].max, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[2].max, 2.0, epsilon = 1e-12);
        assert!(r.iter().all(|c| c.min == 0.0));

        let s = example(0.5, 2.0, 0.4);
        let r = coordinate_extremes(&s, 2.0);
        assert_abs_diff_eq!(r[2].max, 3.0, epsilon = 1e-12);
        assert_eq!(r[0].min, 0.0);

        let r = coordinate_extremes(&s, flow_bounds(&s).0);
        assert!(r.iter().all(|c| c.min == 0.0 && c.max == 0.0));
    }

    #[test]
    fn extremes_positive_minimum() {
        // budget close to f1_max forces every class onto lane 1
        let s = example(0.0, 4.0, 0.5);
        let (_, hi) = flow_bounds(&s);
        let r = coordinate_extremes(&s, hi - 0.25);
        assert_abs_diff_eq!(r[0].min, 5.0 - 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1].min, 1.0 - 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r[2].min, 3.0 - 0.5, epsilon = 1e-12);
    }

    #[test]
    fn best_worst_example() {
        let s = example(0.5, 4.0, 0.5);
        let f = solve_critical_flow(&s).unwrap();
        let (best, worst) = select_best_worst(&s, f);
        assert_flow(best, [0.0, 1.0, 0.0], 1e-8);
        assert_flow(worst, [1.0, 0.0, 0.0], 1e-8);

        let s = example(0.5, 2.0, 0.4);
        let f = solve_critical_flow(&s).unwrap();
        let (best, worst) = select_best_worst(&s, f);
        assert_flow(best, [0.0, 0.0, 3.0], 1e-8);
        assert_flow(worst, [1.2, 0.0, 0.0], 1e-8);
    }

    #[test]
    fn tied_regime_split_is_free() {
        // n = 1/mu: any HO/AV split with the same HV,LO flow has the same delay
        let s = example(0.3, 4.0, 0.25);
        assert_eq!(occupancy_regime(&s), OccupancyRegime::Tied);
        let f1_star = solve_critical_flow(&s).unwrap();
        let (best, _) = select_best_worst(&s, f1_star);
        let j_best = total_delay(&s, &best).unwrap();
        let budget = simplex_budget(&s, f1_star) - best.hv_lo;
        for k in 0..=10 {
            let ho = (budget * k as f64 / 10.0).min(s.vehicles(TolledClass::HvHo));
            let av = (budget - ho) / s.asymmetry();
            if av > s.vehicles(TolledClass::AvLo) {
                continue;
            }
            let f = FlowDistribution::new(best.hv_lo, ho, av);
            assert_abs_diff_eq!(total_delay(&s, &f).unwrap(), j_best, epsilon = 1e-10);
        }
    }

    #[test]
    fn report_regimes() {
        let r = equilibrium_report(&example(1.0, 4.0, 0.5));
        assert_eq!(r.set, EquilibriumSet::UniquePoint(FlowDistribution::default()));
        assert_eq!(r.j_best, r.j_worst);

        let r = equilibrium_report(&example(0.5, 4.0, 0.5));
        assert_eq!(r.class, Uniqueness::Interior);
        assert_abs_diff_eq!(r.j_best, 54.4, epsilon = 1e-8);
        assert_abs_diff_eq!(r.j_worst, 55.9, epsilon = 1e-8);

        let fast = crate::model::DelayFunction::bpr(1.0, 1.0, 1.0, 10.0).unwrap();
        let slow = crate::model::DelayFunction::bpr(10.0, 1.0, 1.0, 10.0).unwrap();
        let s = example(0.0, 4.0, 0.5).with_delays(fast, slow);
        let r = equilibrium_report(&s);
        assert_eq!(r.class, Uniqueness::AllLane1);
        assert_flow(r.best, [5.0, 1.0, 3.0], 0.0);
    }

    #[test]
    fn wardrop_examples() {
        let s = example(0.5, 4.0, 0.5);
        assert!(wardrop_check(&s, &FlowDistribution::new(0.0, 1.0, 0.0), WARDROP_TOL));
        assert!(!wardrop_check(&s, &FlowDistribution::new(0.0, 0.0, 0.0), WARDROP_TOL));
        let (c1, c2) = travel_costs(&s, &FlowDistribution::default()).unwrap();
        assert_abs_diff_eq!(c1, 3.55, epsilon = 1e-12);
        assert_abs_diff_eq!(c2, 3.75, epsilon = 1e-12);
        let s = example(1.0, 4.0, 0.5);
        assert!(wardrop_check(&s, &FlowDistribution::default(), WARDROP_TOL));
        assert!(!wardrop_check(&s, &FlowDistribution::new(9.0, 0.0, 0.0), WARDROP_TOL));
    }

    #[test]
    fn brute_force_near_critical_flow() {
        let s = example(0.5, 4.0, 0.5);
        let pts = brute_force_equilibria(&s, 50).unwrap();
        assert!(!pts.is_empty());
        let cell = grid_spacing(&s, 50);
        for p in &pts {
            let f1 = lane1_effective(&s, p);
            assert!((f1 - 1.5).abs() <= cell + 1e-12, "{p} has f1={f1}");
        }
        let js: Vec<f64> = pts.iter().map(|p| total_delay(&s, p).unwrap()).collect();
        let lo = js.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = js.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((lo - 54.4).abs() < 0.2 && (hi - 55.9).abs() < 0.2, "{lo} {hi}");
    }

    #[test]
    fn brute_force_pure_regime() {
        let s = example(1.0, 4.0, 0.5);
        assert_eq!(
            brute_force_equilibria(&s, 20).unwrap(),
            vec![FlowDistribution::default()]
        );
        assert!(brute_force_equilibria(&s, 0).is_err());
    }

    #[test]
    fn brute_force_is_execution_independent() {
        let s = example(0.3, 2.0, 0.4);
        let a = brute_force_equilibria_with(&s, 24, Execution::Sequential).unwrap();
        let b = brute_force_equilibria_with(&s, 24, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_demand_class_collapses() {
        let s = example(0.3, 4.0, 0.5).with_demand(DemandProfile::new(5.0, 0.0, 3.0, 4.0).unwrap());
        let r = equilibrium_report(&s);
        assert_eq!(r.best.hv_ho, 0.0);
        assert_eq!(r.worst.hv_ho, 0.0);
        assert!(wardrop_check(&s, &r.best, WARDROP_TOL));
    }
}
