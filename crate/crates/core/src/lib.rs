//! Lane-choice equilibria and design tools for a two-lane highway segment with a
//! reserved toll lane.
//!
//! Four commuter classes share the segment: human-driven or autonomous, with low
//! or high occupancy. High-occupancy autonomous vehicles use the reserved lane
//! for free; the other classes either pay the toll or take the regular lane.
//! Autonomous vehicles consume a fraction `asymmetry` of a human-driven vehicle's
//! lane capacity.
//!
//! - [`model`]: demands, delay functions, flows, costs and total commuter delay.
//! - [`equilibrium`]: uniqueness regimes, the critical flow, best/worst equilibria.
//! - [`design`]: toll and occupancy-threshold search, per-class toll differentiation.
//! - [`policy`]: HOV-lane and dedicated-AV-lane variants of the reserved lane.
//!
//! ```
//! use tollane_core::prelude::*;
//!
//! let bpr = DelayFunction::bpr(3.0, 1.0, 1.0, 10.0)?;
//! let demand = DemandProfile::new(5.0, 4.0, 3.0, 4.0)?;
//! let s = Scenario::new(bpr, bpr, demand, 0.5, 4.0, 0.5, LanePolicy::baseline())?;
//! let report = equilibrium_report(&s);
//! assert_eq!(report.class, Uniqueness::Interior);
//! assert!((report.j_best - 54.4).abs() < 1e-8);
//! # Ok::<(), tollane_core::Error>(())
//! ```

pub mod design;
pub mod equilibrium;
mod error;
pub mod exec;
pub mod model;
pub mod policy;
pub mod search;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::design::{
        demands_from_threshold, differentiate_tolls, optimize_threshold, optimize_toll,
        sweep_threshold, sweep_toll, verify_vector_toll, CarpoolModel, CarpoolProbability,
        DesignOptimum, Objective, SweepCurve, ThresholdBase, ThresholdRange, VectorToll,
        VectorTollEquilibrium,
    };
    pub use crate::equilibrium::{
        brute_force_equilibria, coordinate_extremes, equilibrium_report, select_best_worst,
        solve_critical_flow, toll_thresholds, uniqueness_class, wardrop_check, EquilibriumReport,
        EquilibriumSet, Uniqueness, WARDROP_TOL,
    };
    pub use crate::exec::Execution;
    pub use crate::model::{
        effective_flows, flow_bounds, total_delay, travel_costs, DelayFunction, DemandProfile,
        FlowDistribution, Scenario, TolledClass,
    };
    pub use crate::policy::{compare_policies, make_policy, LanePolicy, PolicyKind, SegmentParams};
    pub use crate::{Error, Result};
}
