//! Lane policies: which vehicle classes travel toll-free on the reserved lane.
//!
//! High-occupancy autonomous vehicles are always admitted for free. A policy may
//! additionally admit human-driven carpools (HOV lane) or all autonomous vehicles
//! (dedicated AV lane). Pinned classes are fixed at their full demand on lane 1 and
//! drop out of the lane-choice game; everything else in the crate is generic over
//! the policy.

use std::fmt;
use std::str::FromStr;

use crate::design::{sweep_toll_with, SweepCurve};
use crate::exec::Execution;
use crate::model::{DelayFunction, DemandProfile, Scenario, TolledClass};
use crate::Result;

/// The named policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    /// Only high-occupancy AVs ride free.
    Baseline,
    /// High-occupancy vehicle lane: all carpools ride free.
    Hovl,
    /// Dedicated lane for autonomous vehicles: all AVs ride free.
    Dla,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Baseline => "baseline",
            PolicyKind::Hovl => "hovl",
            PolicyKind::Dla => "dla",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(PolicyKind::Baseline),
            "hovl" => Ok(PolicyKind::Hovl),
            "dla" => Ok(PolicyKind::Dla),
            other => Err(format!(
                "unknown policy `{other}` (expected baseline, hovl or dla)"
            )),
        }
    }
}

/// Set of classes pinned to lane 1.
///
/// AV,HO is pinned in every policy and HV,LO never is, so only the two middle
/// classes are configurable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LanePolicy {
    pin_hv_ho: bool,
    pin_av_lo: bool,
}

impl LanePolicy {
    pub const fn new(pin_hv_ho: bool, pin_av_lo: bool) -> Self {
        LanePolicy {
            pin_hv_ho,
            pin_av_lo,
        }
    }

    pub const fn baseline() -> Self {
        LanePolicy::new(false, false)
    }

    pub fn is_pinned(&self, class: TolledClass) -> bool {
        match class {
            TolledClass::HvLo => false,
            TolledClass::HvHo => self.pin_hv_ho,
            TolledClass::AvLo => self.pin_av_lo,
        }
    }

    pub fn is_choosing(&self, class: TolledClass) -> bool {
        !self.is_pinned(class)
    }

    /// Tolled classes that make a lane choice, in canonical order.
    pub fn choosing(&self) -> impl Iterator<Item = TolledClass> + '_ {
        TolledClass::ALL.into_iter().filter(|&c| self.is_choosing(c))
    }

    /// Tolled classes pinned to lane 1 (AV,HO is implicit and not listed).
    pub fn pinned(&self) -> impl Iterator<Item = TolledClass> + '_ {
        TolledClass::ALL.into_iter().filter(|&c| self.is_pinned(c))
    }

    /// The named policy this set corresponds to, if any.
    pub fn kind(&self) -> Option<PolicyKind> {
        match (self.pin_hv_ho, self.pin_av_lo) {
            (false, false) => Some(PolicyKind::Baseline),
            (true, false) => Some(PolicyKind::Hovl),
            (false, true) => Some(PolicyKind::Dla),
            (true, true) => None,
        }
    }
}

impl From<PolicyKind> for LanePolicy {
    fn from(kind: PolicyKind) -> Self {
        make_policy(kind)
    }
}

pub fn make_policy(kind: PolicyKind) -> LanePolicy {
    match kind {
        PolicyKind::Baseline => LanePolicy::baseline(),
        PolicyKind::Hovl => LanePolicy::new(true, false),
        PolicyKind::Dla => LanePolicy::new(false, true),
    }
}

/// HOV-lane and dedicated-AV-lane toll sweeps on a shared toll grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyComparison {
    pub hovl: SweepCurve,
    pub dla: SweepCurve,
}

/// Parameters shared by both policies in [`compare_policies`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    pub delay_lane1: DelayFunction,
    pub delay_lane2: DelayFunction,
    pub demand: DemandProfile,
    pub occupancy: f64,
    pub asymmetry: f64,
}

pub fn compare_policies(params: &SegmentParams, taus: &[f64]) -> Result<PolicyComparison> {
    compare_policies_with(params, taus, Execution::default())
}

pub fn compare_policies_with(
    params: &SegmentParams,
    taus: &[f64],
    exec: Execution,
) -> Result<PolicyComparison> {
    let scenario = |kind| {
        Scenario::new(
            params.delay_lane1,
            params.delay_lane2,
            params.demand,
            0.0,
            params.occupancy,
            params.asymmetry,
            make_policy(kind),
        )
    };
    let hovl = scenario(PolicyKind::Hovl)?;
    let dla = scenario(PolicyKind::Dla)?;
    let (hovl, dla) = crate::exec::join(
        exec,
        || sweep_toll_with(&hovl, taus, exec),
        || sweep_toll_with(&dla, taus, exec),
    );
    Ok(PolicyComparison {
        hovl: hovl?,
        dla: dla?,
    })
}
