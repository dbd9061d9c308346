//! Two-lane segment model: demands, delay functions, flows, costs and total delay.
//!
//! Lane 1 is the reserved toll lane, lane 2 the free regular lane. Flows are stored
//! for lane 1 only, in vehicles per unit time; lane-2 flows are the complements
//! implied by the demands. Autonomous vehicles count with weight `asymmetry` in
//! the effective flow that drives lane delay.

use std::fmt;

use crate::error::{check_finite_nonneg, Error, Result};
use crate::policy::LanePolicy;

/// Absolute slack allowed on flow bounds before a distribution is infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// The three classes that may pay to use the reserved lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TolledClass {
    HvLo,
    HvHo,
    AvLo,
}

impl TolledClass {
    pub const ALL: [TolledClass; 3] = [TolledClass::HvLo, TolledClass::HvHo, TolledClass::AvLo];

    pub fn index(self) -> usize {
        match self {
            TolledClass::HvLo => 0,
            TolledClass::HvHo => 1,
            TolledClass::AvLo => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TolledClass::HvLo => "hv_lo",
            TolledClass::HvHo => "hv_ho",
            TolledClass::AvLo => "av_lo",
        }
    }
}

impl fmt::Display for TolledClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TolledClass::HvLo => "HV,LO",
            TolledClass::HvHo => "HV,HO",
            TolledClass::AvLo => "AV,LO",
        })
    }
}

/// Commuter demands of the four classes (commuters, not vehicles).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandProfile {
    hv_lo: f64,
    hv_ho: f64,
    av_lo: f64,
    av_ho: f64,
}

impl DemandProfile {
    pub fn new(hv_lo: f64, hv_ho: f64, av_lo: f64, av_ho: f64) -> Result<Self> {
        check_finite_nonneg("demand hv_lo", hv_lo)?;
        check_finite_nonneg("demand hv_ho", hv_ho)?;
        check_finite_nonneg("demand av_lo", av_lo)?;
        check_finite_nonneg("demand av_ho", av_ho)?;
        let total = hv_lo + hv_ho + av_lo + av_ho;
        if total <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "demand",
                value: total,
                reason: "at least one class must have positive demand",
            });
        }
        Ok(DemandProfile {
            hv_lo,
            hv_ho,
            av_lo,
            av_ho,
        })
    }

    pub fn hv_lo(&self) -> f64 {
        self.hv_lo
    }
    pub fn hv_ho(&self) -> f64 {
        self.hv_ho
    }
    pub fn av_lo(&self) -> f64 {
        self.av_lo
    }
    pub fn av_ho(&self) -> f64 {
        self.av_ho
    }

    pub fn total(&self) -> f64 {
        self.hv_lo + self.hv_ho + self.av_lo + self.av_ho
    }
}

/// BPR-style lane delay `free_flow + gain * (f / capacity)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayFunction {
    free_flow: f64,
    gain: f64,
    exponent: f64,
    capacity: f64,
}

impl DelayFunction {
    pub fn bpr(free_flow: f64, gain: f64, exponent: f64, capacity: f64) -> Result<Self> {
        check_finite_nonneg("free_flow", free_flow)?;
        check_finite_nonneg("gain", gain)?;
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::InvalidParameter {
                name: "exponent",
                value: exponent,
                reason: "must be finite and positive",
            });
        }
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(Error::InvalidParameter {
                name: "capacity",
                value: capacity,
                reason: "must be finite and positive",
            });
        }
        Ok(DelayFunction {
            free_flow,
            gain,
            exponent,
            capacity,
        })
    }

    pub fn free_flow(&self) -> f64 {
        self.free_flow
    }
    pub fn gain(&self) -> f64 {
        self.gain
    }
    pub fn exponent(&self) -> f64 {
        self.exponent
    }
    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// Same function with a different free-flow delay.
    pub fn with_free_flow(&self, free_flow: f64) -> Result<Self> {
        DelayFunction::bpr(free_flow, self.gain, self.exponent, self.capacity)
    }

    /// Delay at effective flow `flow`. Negative rounding residue is treated as zero.
    pub fn eval(&self, flow: f64) -> f64 {
        let ratio = flow.max(0.0) / self.capacity;
        self.free_flow + self.gain * ratio.powf(self.exponent)
    }
}

/// A highway segment with one reserved toll lane and a uniform toll.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    delay_lane1: DelayFunction,
    delay_lane2: DelayFunction,
    demand: DemandProfile,
    toll: f64,
    occupancy: f64,
    asymmetry: f64,
    policy: LanePolicy,
}

impl Scenario {
    pub fn new(
        delay_lane1: DelayFunction,
        delay_lane2: DelayFunction,
        demand: DemandProfile,
        toll: f64,
        occupancy: f64,
        asymmetry: f64,
        policy: LanePolicy,
    ) -> Result<Self> {
        check_finite_nonneg("toll", toll)?;
        if !(occupancy.is_finite() && occupancy >= 2.0) {
            return Err(Error::InvalidParameter {
                name: "occupancy",
                value: occupancy,
                reason: "must be at least 2",
            });
        }
        if !(asymmetry > 0.0 && asymmetry < 1.0) {
            return Err(Error::InvalidParameter {
                name: "asymmetry",
                value: asymmetry,
                reason: "must lie strictly between 0 and 1",
            });
        }
        Ok(Scenario {
            delay_lane1,
            delay_lane2,
            demand,
            toll,
            occupancy,
            asymmetry,
            policy,
        })
    }

    pub fn delay_lane1(&self) -> &DelayFunction {
        &self.delay_lane1
    }
    pub fn delay_lane2(&self) -> &DelayFunction {
        &self.delay_lane2
    }
    pub fn demand(&self) -> &DemandProfile {
        &self.demand
    }
    pub fn toll(&self) -> f64 {
        self.toll
    }
    pub fn occupancy(&self) -> f64 {
        self.occupancy
    }
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }
    pub fn policy(&self) -> LanePolicy {
        self.policy
    }

    pub fn with_toll(&self, toll: f64) -> Result<Self> {
        check_finite_nonneg("toll", toll)?;
        Ok(Scenario { toll, ..*self })
    }

    pub fn with_policy(&self, policy: LanePolicy) -> Self {
        Scenario { policy, ..*self }
    }

    pub fn with_delays(&self, delay_lane1: DelayFunction, delay_lane2: DelayFunction) -> Self {
        Scenario {
            delay_lane1,
            delay_lane2,
            ..*self
        }
    }

    pub fn with_demand(&self, demand: DemandProfile) -> Self {
        Scenario { demand, ..*self }
    }

    pub fn with_occupancy(&self, occupancy: f64) -> Result<Self> {
        Scenario::new(
            self.delay_lane1,
            self.delay_lane2,
            self.demand,
            self.toll,
            occupancy,
            self.asymmetry,
            self.policy,
        )
    }

    /// Vehicle count of a tolled class (its lane-1 flow upper bound).
    pub fn vehicles(&self, class: TolledClass) -> f64 {
        match class {
            TolledClass::HvLo => self.demand.hv_lo,
            TolledClass::HvHo => self.demand.hv_ho / self.occupancy,
            TolledClass::AvLo => self.demand.av_lo,
        }
    }

    /// Weight of one vehicle of the class in the effective flow.
    pub fn weight(&self, class: TolledClass) -> f64 {
        match class {
            TolledClass::HvLo | TolledClass::HvHo => 1.0,
            TolledClass::AvLo => self.asymmetry,
        }
    }

    /// Commuters carried per vehicle of the class.
    pub fn commuters_per_vehicle(&self, class: TolledClass) -> f64 {
        match class {
            TolledClass::HvLo | TolledClass::AvLo => 1.0,
            TolledClass::HvHo => self.occupancy,
        }
    }

    /// Effective flow of the AV,HO vehicles, which always use lane 1.
    pub fn av_ho_effective(&self) -> f64 {
        self.asymmetry * self.demand.av_ho / self.occupancy
    }

    /// Effective-flow capacity of a class if all of it used lane 1.
    pub fn class_effective(&self, class: TolledClass) -> f64 {
        self.weight(class) * self.vehicles(class)
    }

    /// Travel-cost gap `C1 - C2` as a function of the lane-1 effective flow.
    pub fn cost_gap(&self, f1: f64) -> f64 {
        let (_, f1_max) = flow_bounds(self);
        self.delay_lane1.eval(f1) + self.toll - self.delay_lane2.eval(f1_max - f1)
    }

    /// The distribution with every choosing class on lane 2.
    pub fn all_lane2(&self) -> FlowDistribution {
        self.distribution_with(|_| 0.0)
    }

    /// The distribution with every tolled class on lane 1.
    pub fn all_lane1(&self) -> FlowDistribution {
        self.distribution_with(|c| self.vehicles(c))
    }

    /// Builds a distribution from choosing-class flows; pinned classes are set to
    /// their full vehicle counts.
    pub fn distribution_with(&self, mut choose: impl FnMut(TolledClass) -> f64) -> FlowDistribution {
        let mut lane1 = [0.0; 3];
        for class in TolledClass::ALL {
            lane1[class.index()] = if self.policy.is_pinned(class) {
                self.vehicles(class)
            } else {
                choose(class)
            };
        }
        FlowDistribution::from_array(lane1)
    }
}

/// Lane-1 vehicle flows of the tolled classes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlowDistribution {
    pub hv_lo: f64,
    pub hv_ho: f64,
    pub av_lo: f64,
}

impl FlowDistribution {
    pub const fn new(hv_lo: f64, hv_ho: f64, av_lo: f64) -> Self {
        FlowDistribution {
            hv_lo,
            hv_ho,
            av_lo,
        }
    }

    pub const fn from_array(a: [f64; 3]) -> Self {
        FlowDistribution::new(a[0], a[1], a[2])
    }

    pub const fn to_array(self) -> [f64; 3] {
        [self.hv_lo, self.hv_ho, self.av_lo]
    }

    pub fn get(&self, class: TolledClass) -> f64 {
        self.to_array()[class.index()]
    }

    pub fn set(&mut self, class: TolledClass, value: f64) {
        match class {
            TolledClass::HvLo => self.hv_lo = value,
            TolledClass::HvHo => self.hv_ho = value,
            TolledClass::AvLo => self.av_lo = value,
        }
    }

    /// Lane-2 flow of a class under scenario `s`.
    pub fn lane2(&self, s: &Scenario, class: TolledClass) -> f64 {
        s.vehicles(class) - self.get(class)
    }
}

impl fmt::Display for FlowDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(hv_lo={}, hv_ho={}, av_lo={})",
            self.hv_lo, self.hv_ho, self.av_lo
        )
    }
}

/// Bounds of the lane-1 effective flow as `(f1_min, f1_max)`.
///
/// `f1_max` is the total effective flow on the segment, which is the same under
/// every policy; `f1_min` counts AV,HO and any other pinned class.
pub fn flow_bounds(s: &Scenario) -> (f64, f64) {
    let pinned: f64 = s.policy().pinned().map(|c| s.class_effective(c)).sum();
    let f1_min = s.av_ho_effective() + pinned;
    let f1_max = s.av_ho_effective()
        + TolledClass::ALL
            .into_iter()
            .map(|c| s.class_effective(c))
            .sum::<f64>();
    (f1_min, f1_max)
}

/// Checks the flow bounds, and that pinned classes sit at their full counts.
pub fn check_feasible(s: &Scenario, f: &FlowDistribution) -> Result<()> {
    for class in TolledClass::ALL {
        let value = f.get(class);
        let cap = s.vehicles(class);
        if !value.is_finite() {
            return Err(Error::Infeasible {
                class,
                value,
                bound: "flow must be finite".into(),
            });
        }
        if value < -FEASIBILITY_TOL {
            return Err(Error::Infeasible {
                class,
                value,
                bound: "lower bound 0".into(),
            });
        }
        if value > cap + FEASIBILITY_TOL {
            return Err(Error::Infeasible {
                class,
                value,
                bound: format!("upper bound {cap}"),
            });
        }
        if s.policy().is_pinned(class) && value < cap - FEASIBILITY_TOL {
            return Err(Error::Infeasible {
                class,
                value,
                bound: format!("class is pinned to lane 1 at {cap}"),
            });
        }
    }
    Ok(())
}

/// Lane-1 effective flow without the feasibility check.
pub(crate) fn lane1_effective(s: &Scenario, f: &FlowDistribution) -> f64 {
    f.hv_lo + f.hv_ho + s.asymmetry() * f.av_lo + s.av_ho_effective()
}

/// Effective flows `(f1, f2)`; `f1 + f2` equals the segment's `f1_max`.
pub fn effective_flows(s: &Scenario, f: &FlowDistribution) -> Result<(f64, f64)> {
    check_feasible(s, f)?;
    let f1 = lane1_effective(s, f);
    let (_, f1_max) = flow_bounds(s);
    Ok((f1, f1_max - f1))
}

/// Travel costs `(c1, c2)`: lane-1 delay plus toll, and lane-2 delay.
pub fn travel_costs(s: &Scenario, f: &FlowDistribution) -> Result<(f64, f64)> {
    let (f1, f2) = effective_flows(s, f)?;
    Ok((s.delay_lane1().eval(f1) + s.toll(), s.delay_lane2().eval(f2)))
}

/// Commuters on each lane `(lane1, lane2)`.
pub fn lane_commuters(s: &Scenario, f: &FlowDistribution) -> (f64, f64) {
    let d = s.demand();
    let n = s.occupancy();
    let lane1 = f.hv_lo + f.av_lo + n * f.hv_ho + d.av_ho();
    let lane2 = (d.hv_lo() - f.hv_lo) + (d.av_lo() - f.av_lo) + n * (d.hv_ho() / n - f.hv_ho);
    (lane1, lane2)
}

/// Total commuter delay. The toll is a transfer and does not enter.
pub fn total_delay(s: &Scenario, f: &FlowDistribution) -> Result<f64> {
    let (f1, f2) = effective_flows(s, f)?;
    let (lane1, lane2) = lane_commuters(s, f);
    Ok(lane1 * s.delay_lane1().eval(f1) + lane2 * s.delay_lane2().eval(f2))
}
