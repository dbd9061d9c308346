//! Design problems on top of the equilibrium solver: the uniform toll, the
//! carpool occupancy threshold, and per-class toll differentiation.

use std::fmt;
use std::str::FromStr;

use crate::equilibrium::{
    equilibrium_report, solve_critical_flow, toll_thresholds, uniqueness_class, EquilibriumReport,
    Uniqueness, OCCUPANCY_TIE_TOL,
};
use crate::error::{check_finite_nonneg, Error, Result};
use crate::exec::{self, Execution};
use crate::model::{
    flow_bounds, total_delay, DelayFunction, DemandProfile, FlowDistribution, Scenario,
    TolledClass,
};
use crate::policy::LanePolicy;
use crate::search::{bisect, grid_then_golden, linspace, argmin, BisectionOptions, Minimum};

/// Default toll separation used by [`differentiate_tolls`].
pub const DEFAULT_TOLL_DELTA: f64 = 0.05;

/// Slack on the critical flow when comparing it with the class thresholds in
/// [`differentiate_tolls`]; covers the root solver's residual.
pub const SPLIT_TIE_TOL: f64 = 1e-9;

/// Default number of coarse grid points before golden-section refinement.
pub const DEFAULT_GRID_STEPS: usize = 101;

/// Which end of the equilibrium set a design targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Objective {
    #[default]
    BestCase,
    WorstCase,
}

impl Objective {
    pub fn of(self, r: &EquilibriumReport) -> f64 {
        match self {
            Objective::BestCase => r.j_best,
            Objective::WorstCase => r.j_worst,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::BestCase => "best",
            Objective::WorstCase => "worst",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "best" | "best_case" => Ok(Objective::BestCase),
            "worst" | "worst_case" => Ok(Objective::WorstCase),
            other => Err(format!("unknown objective `{other}` (expected best or worst)")),
        }
    }
}

/// Best- and worst-case total delay along a parameter sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepCurve {
    pub parameters: Vec<f64>,
    pub j_best: Vec<f64>,
    pub j_worst: Vec<f64>,
    pub classes: Vec<Uniqueness>,
}

impl SweepCurve {
    fn from_reports(parameters: Vec<f64>, reports: &[EquilibriumReport]) -> Self {
        SweepCurve {
            parameters,
            j_best: reports.iter().map(|r| r.j_best).collect(),
            j_worst: reports.iter().map(|r| r.j_worst).collect(),
            classes: reports.iter().map(|r| r.class).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.parameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameters.is_empty()
    }

    pub fn values(&self, objective: Objective) -> &[f64] {
        match objective {
            Objective::BestCase => &self.j_best,
            Objective::WorstCase => &self.j_worst,
        }
    }
}

fn check_increasing(name: &str, xs: &[f64], min: f64) -> Result<()> {
    for (i, &x) in xs.iter().enumerate() {
        if !x.is_finite() || x < min {
            return Err(Error::Precondition(format!(
                "{name}[{i}] = {x} must be finite and at least {min}"
            )));
        }
        if i > 0 && x <= xs[i - 1] {
            return Err(Error::Precondition(format!(
                "{name} must be strictly increasing ({} then {x})",
                xs[i - 1]
            )));
        }
    }
    Ok(())
}

/// Equilibrium delays of `s` at every toll in `taus`.
pub fn sweep_toll(s: &Scenario, taus: &[f64]) -> Result<SweepCurve> {
    sweep_toll_with(s, taus, Execution::default())
}

pub fn sweep_toll_with(s: &Scenario, taus: &[f64], exec: Execution) -> Result<SweepCurve> {
    check_increasing("taus", taus, 0.0)?;
    let reports = exec::map(exec, taus, |&tau| {
        equilibrium_report(&s.with_toll(tau).expect("validated toll"))
    });
    Ok(SweepCurve::from_reports(taus.to_vec(), &reports))
}

/// Minimizer of a design search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptimum {
    pub argmin: f64,
    pub total_delay: f64,
}

impl From<Minimum> for DesignOptimum {
    fn from(m: Minimum) -> Self {
        DesignOptimum {
            argmin: m.x,
            total_delay: m.value,
        }
    }
}

/// Uniform toll minimizing the chosen end of the equilibrium delay.
///
/// Tolls at or above the all-lane-2 threshold all give the same equilibrium, so the
/// search covers `[0, upper]`: a coarse grid of `grid_steps` points, then
/// golden-section refinement between the neighbours of the grid minimum.
pub fn optimize_toll(s: &Scenario, objective: Objective, grid_steps: usize) -> Result<DesignOptimum> {
    if grid_steps < 3 {
        return Err(Error::Precondition(format!(
            "grid_steps must be at least 3, got {grid_steps}"
        )));
    }
    let eval = |tau: f64| objective.of(&equilibrium_report(&s.with_toll(tau).expect("toll >= 0")));
    let upper = toll_thresholds(s).upper.max(0.0);
    if upper == 0.0 {
        return Ok(DesignOptimum {
            argmin: 0.0,
            total_delay: eval(0.0),
        });
    }
    let grid = linspace(0.0, upper, grid_steps);
    let values = exec::map(Execution::default(), &grid, |&t| eval(t));
    Ok(grid_then_golden(&grid, &values, |t| eval(t.clamp(0.0, upper))).into())
}

/// Probability that a commuter carpools under occupancy threshold `n`.
#[derive(Debug, Clone, PartialEq)]
pub enum CarpoolProbability {
    /// `p(n) = 1/n`.
    Reciprocal,
    Constant(f64),
    /// Piecewise-linear through `(n, p)` knots with increasing `n`.
    Table(Vec<(f64, f64)>),
}

impl CarpoolProbability {
    pub fn at(&self, n: f64) -> Result<f64> {
        let p = match self {
            CarpoolProbability::Reciprocal => 1.0 / n,
            CarpoolProbability::Constant(p) => *p,
            CarpoolProbability::Table(knots) => interpolate(knots, n)?,
        };
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter {
                name: "carpool probability",
                value: p,
                reason: "must lie in [0, 1]",
            });
        }
        Ok(p)
    }
}

fn interpolate(knots: &[(f64, f64)], n: f64) -> Result<f64> {
    let (first, last) = match (knots.first(), knots.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Precondition("carpool table is empty".into())),
    };
    if n < first.0 || n > last.0 {
        return Err(Error::Precondition(format!(
            "occupancy {n} outside carpool table range [{}, {}]",
            first.0, last.0
        )));
    }
    let i = knots.partition_point(|&(x, _)| x < n);
    if knots[i.min(knots.len() - 1)].0 == n {
        return Ok(knots[i].1);
    }
    let (x0, p0) = knots[i - 1];
    let (x1, p1) = knots[i];
    Ok(p0 + (p1 - p0) * (n - x0) / (x1 - x0))
}

/// Fixed human-driven and autonomous commuter totals split by carpool propensity.
#[derive(Debug, Clone, PartialEq)]
pub struct CarpoolModel {
    hv_total: f64,
    av_total: f64,
    carpool_prob: CarpoolProbability,
}

impl CarpoolModel {
    pub fn new(hv_total: f64, av_total: f64, carpool_prob: CarpoolProbability) -> Result<Self> {
        check_finite_nonneg("hv_total", hv_total)?;
        check_finite_nonneg("av_total", av_total)?;
        if hv_total + av_total <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "commuter totals",
                value: hv_total + av_total,
                reason: "at least one total must be positive",
            });
        }
        match &carpool_prob {
            CarpoolProbability::Constant(p) if !(0.0..=1.0).contains(p) => {
                return Err(Error::InvalidParameter {
                    name: "carpool probability",
                    value: *p,
                    reason: "must lie in [0, 1]",
                })
            }
            CarpoolProbability::Table(knots) => {
                if knots.is_empty() {
                    return Err(Error::Precondition("carpool table is empty".into()));
                }
                for w in knots.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(Error::Precondition(
                            "carpool table occupancies must be strictly increasing".into(),
                        ));
                    }
                    if w[1].1 > w[0].1 {
                        return Err(Error::Precondition(
                            "carpool probability must be non-increasing in occupancy".into(),
                        ));
                    }
                }
                for &(_, p) in knots {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidParameter {
                            name: "carpool probability",
                            value: p,
                            reason: "must lie in [0, 1]",
                        });
                    }
                }
            }
            _ => {}
        }
        Ok(CarpoolModel {
            hv_total,
            av_total,
            carpool_prob,
        })
    }

    pub fn hv_total(&self) -> f64 {
        self.hv_total
    }
    pub fn av_total(&self) -> f64 {
        self.av_total
    }
    pub fn carpool_prob(&self) -> &CarpoolProbability {
        &self.carpool_prob
    }
}

pub fn demands_from_threshold(cm: &CarpoolModel, n: f64) -> Result<DemandProfile> {
    if !(n.is_finite() && n >= 2.0) {
        return Err(Error::InvalidParameter {
            name: "occupancy",
            value: n,
            reason: "must be at least 2",
        });
    }
    let p = cm.carpool_prob.at(n)?;
    DemandProfile::new(
        cm.hv_total * (1.0 - p),
        cm.hv_total * p,
        cm.av_total * (1.0 - p),
        cm.av_total * p,
    )
}

/// A segment whose demands and occupancy threshold are set by a [`CarpoolModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdBase {
    pub delay_lane1: DelayFunction,
    pub delay_lane2: DelayFunction,
    pub toll: f64,
    pub asymmetry: f64,
    pub policy: LanePolicy,
}

impl ThresholdBase {
    pub fn scenario(&self, cm: &CarpoolModel, n: f64) -> Result<Scenario> {
        Scenario::new(
            self.delay_lane1,
            self.delay_lane2,
            demands_from_threshold(cm, n)?,
            self.toll,
            n,
            self.asymmetry,
            self.policy,
        )
    }
}

pub fn sweep_threshold(cm: &CarpoolModel, base: &ThresholdBase, ns: &[f64]) -> Result<SweepCurve> {
    sweep_threshold_with(cm, base, ns, Execution::default())
}

pub fn sweep_threshold_with(
    cm: &CarpoolModel,
    base: &ThresholdBase,
    ns: &[f64],
    exec: Execution,
) -> Result<SweepCurve> {
    check_increasing("occupancies", ns, 2.0)?;
    let reports = exec::map(exec, ns, |&n| base.scenario(cm, n).map(|s| equilibrium_report(&s)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepCurve::from_reports(ns.to_vec(), &reports))
}

/// Occupancy thresholds considered by [`optimize_threshold`].
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdRange {
    Interval { lo: f64, hi: f64 },
    Candidates(Vec<f64>),
}

pub fn optimize_threshold(
    cm: &CarpoolModel,
    base: &ThresholdBase,
    range: &ThresholdRange,
    objective: Objective,
    grid_steps: usize,
) -> Result<DesignOptimum> {
    match range {
        ThresholdRange::Candidates(ns) => {
            if ns.is_empty() {
                return Err(Error::Precondition("candidate list is empty".into()));
            }
            let mut sorted = ns.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let curve = sweep_threshold(cm, base, &sorted)?;
            let values = curve.values(objective);
            let i = argmin(values).expect("nonempty");
            Ok(DesignOptimum {
                argmin: sorted[i],
                total_delay: values[i],
            })
        }
        &ThresholdRange::Interval { lo, hi } => {
            if !(lo.is_finite() && hi.is_finite() && lo >= 2.0 && hi >= lo) {
                return Err(Error::Precondition(format!(
                    "occupancy interval [{lo}, {hi}] must satisfy 2 <= lo <= hi"
                )));
            }
            if grid_steps < 3 {
                return Err(Error::Precondition(format!(
                    "grid_steps must be at least 3, got {grid_steps}"
                )));
            }
            if hi == lo {
                let s = base.scenario(cm, lo)?;
                return Ok(DesignOptimum {
                    argmin: lo,
                    total_delay: objective.of(&equilibrium_report(&s)),
                });
            }
            let grid = linspace(lo, hi, grid_steps);
            let curve = sweep_threshold(cm, base, &grid)?;
            let eval = |n: f64| match base.scenario(cm, n.clamp(lo, hi)) {
                Ok(s) => objective.of(&equilibrium_report(&s)),
                Err(_) => f64::INFINITY,
            };
            Ok(grid_then_golden(&grid, curve.values(objective), eval).into())
        }
    }
}

/// Per-class tolls for the reserved lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorToll {
    pub hv_lo: f64,
    pub hv_ho: f64,
    pub av_lo: f64,
}

impl VectorToll {
    pub fn new(hv_lo: f64, hv_ho: f64, av_lo: f64) -> Result<Self> {
        check_finite_nonneg("toll hv_lo", hv_lo)?;
        check_finite_nonneg("toll hv_ho", hv_ho)?;
        check_finite_nonneg("toll av_lo", av_lo)?;
        Ok(VectorToll { hv_lo, hv_ho, av_lo })
    }

    pub fn uniform(toll: f64) -> Result<Self> {
        VectorToll::new(toll, toll, toll)
    }

    pub fn get(&self, class: TolledClass) -> f64 {
        match class {
            TolledClass::HvLo => self.hv_lo,
            TolledClass::HvHo => self.hv_ho,
            TolledClass::AvLo => self.av_lo,
        }
    }

    fn set(&mut self, class: TolledClass, value: f64) {
        match class {
            TolledClass::HvLo => self.hv_lo = value,
            TolledClass::HvHo => self.hv_ho = value,
            TolledClass::AvLo => self.av_lo = value,
        }
    }
}

impl fmt::Display for VectorToll {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(hv_lo={}, hv_ho={}, av_lo={})", self.hv_lo, self.hv_ho, self.av_lo)
    }
}

/// Per-class tolls that make the best uniform-toll equilibrium the only one.
///
/// The class left straddling both lanes at the best equilibrium keeps `tau_star`,
/// classes filled before it get `tau_star - delta` (floored at zero) and those
/// after it `tau_star + delta`.
pub fn differentiate_tolls(s: &Scenario, tau_star: f64, delta: f64) -> Result<VectorToll> {
    if !(tau_star.is_finite() && tau_star > 0.0) {
        return Err(Error::Precondition(format!(
            "optimal uniform toll must be positive, got {tau_star}"
        )));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::Precondition(format!(
            "toll separation must be positive, got {delta}"
        )));
    }
    let at = s.with_toll(tau_star)?;
    let class = uniqueness_class(&at);
    if class != Uniqueness::Interior {
        return Err(Error::Precondition(format!(
            "uniform toll {tau_star} induces a unique equilibrium ({class}), nothing to differentiate"
        )));
    }
    let f1_star = solve_critical_flow(&at)?;
    let plus = tau_star + delta;
    let minus = (tau_star - delta).max(0.0);
    if s.policy() == LanePolicy::baseline() {
        Ok(baseline_split(&at, f1_star, tau_star, plus, minus))
    } else {
        Ok(layered_split(&at, f1_star, tau_star, plus, minus))
    }
}

fn carpool_not_preferred(s: &Scenario) -> bool {
    s.occupancy() <= 1.0 / s.asymmetry() + OCCUPANCY_TIE_TOL
}

fn baseline_split(s: &Scenario, f1_star: f64, star: f64, plus: f64, minus: f64) -> VectorToll {
    let d = s.demand();
    let n = s.occupancy();
    let mu = s.asymmetry();
    let hv_ho = d.hv_ho() / n;
    let av_all = mu * (d.av_lo() + d.av_ho() / n);
    let at_most = |threshold: f64| f1_star <= threshold + SPLIT_TIE_TOL;
    let (hv_lo, hv_ho_toll, av_lo) = if carpool_not_preferred(s) {
        if at_most(av_all) {
            (plus, plus, star)
        } else if at_most(hv_ho + av_all) {
            (plus, star, minus)
        } else {
            (star, minus, minus)
        }
    } else if at_most(hv_ho + mu * d.av_ho() / n) {
        (plus, star, plus)
    } else if at_most(hv_ho + av_all) {
        (plus, minus, star)
    } else {
        (star, minus, minus)
    };
    VectorToll {
        hv_lo,
        hv_ho: hv_ho_toll,
        av_lo,
    }
}

/// Policy-generic form of the split: walk choosing classes in priority order and
/// find the first whose cumulative lane-1 effective flow reaches `f1_star`.
pub(crate) fn layered_split(s: &Scenario, f1_star: f64, star: f64, plus: f64, minus: f64) -> VectorToll {
    use TolledClass::*;
    let order = if carpool_not_preferred(s) {
        [AvLo, HvHo, HvLo]
    } else {
        [HvHo, AvLo, HvLo]
    };
    let choosing: Vec<TolledClass> = order
        .into_iter()
        .filter(|&c| s.policy().is_choosing(c))
        .collect();
    let mut vt = VectorToll {
        hv_lo: star,
        hv_ho: star,
        av_lo: star,
    };
    let mut level = flow_bounds(s).0;
    let mut marginal = choosing.len() - 1;
    for (i, &c) in choosing.iter().enumerate() {
        level += s.class_effective(c);
        if f1_star <= level + SPLIT_TIE_TOL {
            marginal = i;
            break;
        }
    }
    for (i, &c) in choosing.iter().enumerate() {
        let toll = match i.cmp(&marginal) {
            std::cmp::Ordering::Less => minus,
            std::cmp::Ordering::Equal => star,
            std::cmp::Ordering::Greater => plus,
        };
        vt.set(c, toll);
    }
    vt
}

/// Lane-choice equilibrium under per-class tolls.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorTollEquilibrium {
    Unique {
        flows: FlowDistribution,
        f1: f64,
        total_delay: f64,
    },
    /// Several classes share the marginal toll and straddle both lanes.
    NonUnique { f1: f64, tied: Vec<TolledClass> },
}

impl VectorTollEquilibrium {
    pub fn total_delay(&self) -> Option<f64> {
        match self {
            VectorTollEquilibrium::Unique { total_delay, .. } => Some(*total_delay),
            VectorTollEquilibrium::NonUnique { .. } => None,
        }
    }
}

/// Solves the equilibrium under per-class tolls.
///
/// Classes are taken in ascending toll order (equal tolls form one group) and
/// fill lane 1 until a group becomes indifferent between the lanes. Each group's
/// cost gap increases with lane-1 flow, so the stopping flow is unique; only the
/// split inside a tied marginal group can be ambiguous.
pub fn verify_vector_toll(s: &Scenario, vt: &VectorToll) -> Result<VectorTollEquilibrium> {
    let (f1_min, f1_max) = flow_bounds(s);
    let d1 = *s.delay_lane1();
    let d2 = *s.delay_lane2();
    let gap = |f1: f64, toll: f64| d1.eval(f1) + toll - d2.eval(f1_max - f1);

    let mut classes: Vec<TolledClass> = s
        .policy()
        .choosing()
        .filter(|&c| s.vehicles(c) > 0.0)
        .collect();
    classes.sort_by(|a, b| vt.get(*a).total_cmp(&vt.get(*b)));

    let mut flows = s.all_lane2();
    let mut level = f1_min;
    let mut i = 0;
    while i < classes.len() {
        let toll = vt.get(classes[i]);
        let group: Vec<TolledClass> = classes[i..]
            .iter()
            .copied()
            .take_while(|&c| vt.get(c) == toll)
            .collect();
        i += group.len();
        let width: f64 = group.iter().map(|&c| s.class_effective(c)).sum();
        let top = (level + width).min(f1_max);
        if gap(level, toll) >= 0.0 {
            break;
        }
        if gap(top, toll) <= 0.0 {
            for &c in &group {
                flows.set(c, s.vehicles(c));
            }
            level = top;
            continue;
        }
        let root = bisect(|f| gap(f, toll), level, top, BisectionOptions::default());
        if group.len() > 1 {
            return Ok(VectorTollEquilibrium::NonUnique { f1: root, tied: group });
        }
        let c = group[0];
        flows.set(c, ((root - level) / s.weight(c)).clamp(0.0, s.vehicles(c)));
        level = root;
        break;
    }
    Ok(VectorTollEquilibrium::Unique {
        flows,
        f1: level,
        total_delay: total_delay(s, &flows)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{bpr, example};
    use approx::assert_abs_diff_eq;

    fn vt_eq(a: VectorToll, b: [f64; 3]) {
        assert_abs_diff_eq!(a.hv_lo, b[0], epsilon = 1e-12);
        assert_abs_diff_eq!(a.hv_ho, b[1], epsilon = 1e-12);
        assert_abs_diff_eq!(a.av_lo, b[2], epsilon = 1e-12);
    }

    // Closed forms for the linear example with n = 4, mu = 0.5, toll in [0, 0.7).
    fn best_closed_form(t: f64) -> f64 {
        if t <= 0.2 {
            54.4 - 4.0 * t + 5.0 * t * t
        } else if t <= 0.5 {
            54.4 - 5.0 * t + 10.0 * t * t
        } else if t < 0.7 {
            54.4 - 10.0 * t + 20.0 * t * t
        } else {
            57.2
        }
    }

    fn worst_closed_form(t: f64) -> f64 {
        if t < 0.7 {
            54.4 + 0.5 * t + 5.0 * t * t
        } else {
            57.2
        }
    }

    #[test]
    fn sweep_matches_closed_form() {
        let s = example(0.0, 4.0, 0.5);
        let taus: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let c = sweep_toll(&s, &taus).unwrap();
        for (k, &t) in taus.iter().enumerate() {
            assert_abs_diff_eq!(c.j_best[k], best_closed_form(t), epsilon = 1e-8);
            assert_abs_diff_eq!(c.j_worst[k], worst_closed_form(t), epsilon = 1e-8);
        }
        assert_eq!(c.classes[70], Uniqueness::AllLane2);
        assert_eq!(c.classes[69], Uniqueness::Interior);
    }

    #[test]
    fn sweep_rejects_unsorted() {
        let s = example(0.0, 4.0, 0.5);
        assert!(sweep_toll(&s, &[0.2, 0.1]).is_err());
        assert!(sweep_toll(&s, &[-0.1, 0.1]).is_err());
        assert!(sweep_toll(&s, &[]).unwrap().is_empty());
    }

    #[test]
    fn flat_delays_flat_sweep() {
        let flat1 = DelayFunction::bpr(3.0, 0.0, 1.0, 10.0).unwrap();
        let flat2 = DelayFunction::bpr(3.5, 0.0, 1.0, 10.0).unwrap();
        let s = example(0.0, 4.0, 0.5).with_delays(flat1, flat2);
        let c = sweep_toll(&s, &[0.0, 0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(c.j_best.windows(2).all(|w| w[0] == w[1]));
        let opt = optimize_toll(&s, Objective::BestCase, 11).unwrap();
        assert_eq!(opt.argmin, 0.0);
        assert_eq!(opt.total_delay, c.j_best[0]);
    }

    #[test]
    fn optimal_toll_example() {
        let s = example(0.0, 4.0, 0.5);
        let best = optimize_toll(&s, Objective::BestCase, DEFAULT_GRID_STEPS).unwrap();
        assert_abs_diff_eq!(best.argmin, 0.25, epsilon = 1e-5);
        assert_abs_diff_eq!(best.total_delay, 53.775, epsilon = 1e-9);
        let worst = optimize_toll(&s, Objective::WorstCase, DEFAULT_GRID_STEPS).unwrap();
        assert_eq!(worst.argmin, 0.0);
        assert!(optimize_toll(&s, Objective::BestCase, 2).is_err());
    }

    #[test]
    fn demands_split() {
        let cm = CarpoolModel::new(9.0, 7.0, CarpoolProbability::Reciprocal).unwrap();
        let d = demands_from_threshold(&cm, 2.0).unwrap();
        assert_eq!((d.hv_lo(), d.hv_ho(), d.av_lo(), d.av_ho()), (4.5, 4.5, 3.5, 3.5));
        let none = CarpoolModel::new(9.0, 7.0, CarpoolProbability::Constant(0.0)).unwrap();
        let d = demands_from_threshold(&none, 3.0).unwrap();
        assert_eq!((d.hv_ho(), d.av_ho()), (0.0, 0.0));
        let all = CarpoolModel::new(9.0, 7.0, CarpoolProbability::Constant(1.0)).unwrap();
        let d = demands_from_threshold(&all, 3.0).unwrap();
        assert_eq!((d.hv_lo(), d.av_lo()), (0.0, 0.0));
        assert!(demands_from_threshold(&cm, 1.5).is_err());
    }

    #[test]
    fn carpool_table() {
        let p = CarpoolProbability::Table(vec![(2.0, 0.6), (3.0, 0.4), (4.0, 0.1)]);
        assert_abs_diff_eq!(p.at(2.5).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(p.at(3.0).unwrap(), 0.4);
        assert_eq!(p.at(4.0).unwrap(), 0.1);
        assert!(p.at(4.5).is_err());
        assert!(CarpoolModel::new(1.0, 1.0, CarpoolProbability::Table(vec![(2.0, 0.1), (3.0, 0.2)])).is_err());
        assert!(CarpoolModel::new(1.0, 1.0, CarpoolProbability::Constant(1.5)).is_err());
        assert!(CarpoolProbability::Constant(-0.5).at(2.0).is_err());
    }

    fn threshold_base() -> ThresholdBase {
        ThresholdBase {
            delay_lane1: bpr(),
            delay_lane2: bpr(),
            toll: 0.5,
            asymmetry: 0.5,
            policy: LanePolicy::baseline(),
        }
    }

    #[test]
    fn single_point_threshold_sweep() {
        let cm = CarpoolModel::new(9.0, 7.0, CarpoolProbability::Reciprocal).unwrap();
        let base = threshold_base();
        let c = sweep_threshold(&cm, &base, &[3.0]).unwrap();
        let r = equilibrium_report(&base.scenario(&cm, 3.0).unwrap());
        assert_eq!(c.j_best, vec![r.j_best]);
        assert_eq!(c.j_worst, vec![r.j_worst]);
    }

    #[test]
    fn discrete_candidates() {
        let cm = CarpoolModel::new(9.0, 7.0, CarpoolProbability::Reciprocal).unwrap();
        let base = threshold_base();
        let opt = optimize_threshold(
            &cm,
            &base,
            &ThresholdRange::Candidates(vec![4.0, 2.0, 3.0]),
            Objective::BestCase,
            0,
        )
        .unwrap();
        assert!([2.0, 3.0, 4.0].contains(&opt.argmin));
        let curve = sweep_threshold(&cm, &base, &[2.0, 3.0, 4.0]).unwrap();
        let m = curve.j_best.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(opt.total_delay, m);
    }

    #[test]
    fn no_carpooling_flat_threshold() {
        // Without carpools only the (zero) HO vehicle counts depend on n.
        let cm = CarpoolModel::new(9.0, 7.0, CarpoolProbability::Constant(0.0)).unwrap();
        let opt = optimize_threshold(
            &cm,
            &threshold_base(),
            &ThresholdRange::Interval { lo: 2.0, hi: 4.0 },
            Objective::BestCase,
            21,
        )
        .unwrap();
        assert_eq!(opt.argmin, 2.0);
    }

    #[test]
    fn differentiate_examples() {
        let s = example(0.5, 4.0, 0.5);
        vt_eq(differentiate_tolls(&s, 0.5, 0.1).unwrap(), [0.6, 0.5, 0.6]);
        let s = example(0.5, 2.0, 0.4);
        vt_eq(differentiate_tolls(&s, 0.5, 0.1).unwrap(), [0.6, 0.6, 0.5]);
        // small toll: everything but HV,LO fits on lane 1
        let s = example(0.0, 4.0, 0.5);
        vt_eq(differentiate_tolls(&s, 0.1, 0.05).unwrap(), [0.1, 0.05, 0.05]);
        // n < 1/mu: f1* = 4.0 sits exactly on the top threshold, which takes the <= branch
        let s = example(0.0, 2.0, 0.4);
        vt_eq(differentiate_tolls(&s, 0.1, 0.2).unwrap(), [0.3, 0.1, 0.0]);
        vt_eq(differentiate_tolls(&s, 0.05, 0.2).unwrap(), [0.05, 0.0, 0.0]);
    }

    #[test]
    fn differentiate_middle_cases() {
        // n > 1/mu, budget past HV,HO but inside AV,LO: tau* = 0.3 gives f1* = 2.5
        let s = example(0.0, 4.0, 0.5);
        vt_eq(differentiate_tolls(&s, 0.3, 0.05).unwrap(), [0.35, 0.25, 0.3]);
        // n < 1/mu, budget past AV,LO but inside HV,HO: f1* = (9 - 10 tau)/2 in (2.0, 4.0]
        let s = example(0.0, 2.0, 0.4);
        vt_eq(differentiate_tolls(&s, 0.3, 0.05).unwrap(), [0.35, 0.3, 0.25]);
    }

    #[test]
    fn differentiate_preconditions() {
        let s = example(0.0, 4.0, 0.5);
        assert!(differentiate_tolls(&s, 0.0, 0.1).is_err());
        assert!(differentiate_tolls(&s, 0.5, 0.0).is_err());
        let err = differentiate_tolls(&s, 0.9, 0.1).unwrap_err();
        assert!(err.to_string().contains("unique"), "{err}");
    }

    #[test]
    fn vector_toll_recovers_best_case() {
        let s = example(0.5, 4.0, 0.5);
        let out = verify_vector_toll(&s, &VectorToll::new(0.6, 0.5, 0.6).unwrap()).unwrap();
        match out {
            VectorTollEquilibrium::Unique { flows, total_delay, .. } => {
                assert_abs_diff_eq!(flows.hv_lo, 0.0, epsilon = 1e-9);
                assert_abs_diff_eq!(flows.hv_ho, 1.0, epsilon = 1e-9);
                assert_abs_diff_eq!(flows.av_lo, 0.0, epsilon = 1e-9);
                assert_abs_diff_eq!(total_delay, 54.4, epsilon = 1e-8);
            }
            other => panic!("{other:?}"),
        }
        let s = example(0.5, 2.0, 0.4);
        let out = verify_vector_toll(&s, &VectorToll::new(0.6, 0.6, 0.5).unwrap()).unwrap();
        let VectorTollEquilibrium::Unique { flows, .. } = out else {
            panic!("expected unique");
        };
        assert_abs_diff_eq!(flows.av_lo, 3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(flows.hv_lo + flows.hv_ho, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn uniform_vector_toll_reduces_to_uniform() {
        for tau in [0.0, 0.3, 0.5, 0.7, 1.0] {
            let s = example(tau, 4.0, 0.5);
            let r = equilibrium_report(&s);
            let out = verify_vector_toll(&s, &VectorToll::uniform(tau).unwrap()).unwrap();
            match (r.class, out) {
                (Uniqueness::Interior, VectorTollEquilibrium::NonUnique { f1, tied }) => {
                    assert_abs_diff_eq!(f1, r.f1_star().unwrap(), epsilon = 1e-9);
                    assert_eq!(tied.len(), 3);
                }
                (_, VectorTollEquilibrium::Unique { flows, total_delay, .. }) => {
                    assert_ne!(r.class, Uniqueness::Interior);
                    assert_eq!(flows, r.best);
                    assert_abs_diff_eq!(total_delay, r.j_best, epsilon = 1e-12);
                }
                (c, o) => panic!("mismatch {c:?} {o:?}"),
            }
        }
    }

    #[test]
    fn layered_split_agrees_on_baseline() {
        for (n, mu) in [(4.0, 0.5), (2.0, 0.4), (2.5, 0.4), (3.0, 0.2)] {
            let s = example(0.0, n, mu);
            let upper = toll_thresholds(&s).upper;
            for k in 1..20 {
                let tau = upper * k as f64 / 20.0;
                let at = s.with_toll(tau).unwrap();
                if uniqueness_class(&at) != Uniqueness::Interior {
                    continue;
                }
                let f1 = solve_critical_flow(&at).unwrap();
                let a = baseline_split(&at, f1, tau, tau + 0.1, (tau - 0.1).max(0.0));
                let b = layered_split(&at, f1, tau, tau + 0.1, (tau - 0.1).max(0.0));
                assert_eq!(a, b, "n={n} mu={mu} tau={tau}");
            }
        }
    }

    #[test]
    fn differentiate_under_policies() {
        use crate::policy::{make_policy, PolicyKind};
        for kind in [PolicyKind::Hovl, PolicyKind::Dla] {
            let s = example(0.0, 4.0, 0.5).with_policy(make_policy(kind));
            let opt = optimize_toll(&s, Objective::BestCase, 51).unwrap();
            let r = equilibrium_report(&s.with_toll(opt.argmin).unwrap());
            if opt.argmin <= 0.0 || r.class != Uniqueness::Interior {
                continue;
            }
            let vt = differentiate_tolls(&s, opt.argmin, 0.05).unwrap();
            let j = verify_vector_toll(&s, &vt).unwrap().total_delay().unwrap();
            assert_abs_diff_eq!(j, r.j_best, epsilon = 1e-6);
        }
    }
}
