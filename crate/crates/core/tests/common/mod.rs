#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tollane_core::equilibrium::simplex_budget;
use tollane_core::model::lane_commuters;
use tollane_core::prelude::*;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bpr(theta: f64, gamma: f64, beta: f64, m: f64) -> DelayFunction {
    DelayFunction::bpr(theta, gamma, beta, m).unwrap()
}

pub fn example(toll: f64, n: f64, mu: f64) -> Scenario {
    let d = bpr(3.0, 1.0, 1.0, 10.0);
    Scenario::new(
        d,
        d,
        DemandProfile::new(5.0, 4.0, 3.0, 4.0).unwrap(),
        toll,
        n,
        mu,
        LanePolicy::baseline(),
    )
    .unwrap()
}

pub fn random_delay(r: &mut impl Rng) -> DelayFunction {
    let beta = if r.random_bool(0.5) { 1.0 } else { 2.0 };
    bpr(
        r.random_range(1.0..5.0),
        r.random_range(0.5..2.0),
        beta,
        r.random_range(5.0..15.0),
    )
}

/// Small random scenario with toll 0: demands in [0, 6], n in [2, 4], mu in [0.2, 0.9].
pub fn random_scenario(r: &mut impl Rng) -> Scenario {
    loop {
        let demand = DemandProfile::new(
            r.random_range(0.0..6.0),
            r.random_range(0.0..6.0),
            r.random_range(0.0..6.0),
            r.random_range(0.0..6.0),
        );
        let Ok(demand) = demand else { continue };
        return Scenario::new(
            random_delay(r),
            random_delay(r),
            demand,
            0.0,
            r.random_range(2.0..4.0),
            r.random_range(0.2..0.9),
            LanePolicy::baseline(),
        )
        .unwrap();
    }
}

/// Random scenario whose toll puts it in the interior regime.
pub fn random_interior(r: &mut impl Rng) -> Scenario {
    loop {
        let s = random_scenario(r);
        let t = toll_thresholds(&s);
        let lo = t.lower.max(0.0);
        if t.upper - lo < 1e-3 {
            continue;
        }
        let tau = r.random_range(lo..t.upper);
        let s = s.with_toll(tau).unwrap();
        if uniqueness_class(&s) == Uniqueness::Interior {
            return s;
        }
    }
}

/// Uniform sample of the equilibrium simplex at `f1_star` (baseline policy).
///
/// HV,LO and HV,HO are drawn uniformly from their ranges and AV,LO closes the
/// budget; the map is affine so accepted draws are uniform on the simplex.
pub fn sample_simplex(s: &Scenario, f1_star: f64, r: &mut impl Rng) -> FlowDistribution {
    let budget = simplex_budget(s, f1_star);
    let ext = coordinate_extremes(s, f1_star);
    let mu = s.asymmetry();
    let cap_av = s.vehicles(TolledClass::AvLo);
    for _ in 0..1_000_000 {
        let x = lerp(ext[0].min, ext[0].max, r.random::<f64>());
        let y = lerp(ext[1].min, ext[1].max, r.random::<f64>());
        let z = (budget - x - y) / mu;
        if (-1e-12..=cap_av + 1e-12).contains(&z) {
            return FlowDistribution::new(x, y, z.clamp(0.0, cap_av));
        }
    }
    panic!("rejection sampling failed");
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Root of an increasing `g` on `[lo, hi]`, independent of the library solver.
pub fn oracle_root(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest change of a delay over a window of width `e` inside `[0, span]`.
pub fn delay_modulus(d: &DelayFunction, e: f64, span: f64) -> f64 {
    let e = e.min(span);
    (d.eval(e) - d.eval(0.0)).max(d.eval(span) - d.eval(span - e))
}

/// Reference lane-1 flow of the analytic equilibrium, found without the library
/// root solver.
pub fn oracle_reference_flow(s: &Scenario) -> f64 {
    let (lo, hi) = flow_bounds(s);
    let g = |f: f64| s.cost_gap(f);
    if g(lo) >= 0.0 {
        lo
    } else if g(hi) <= 0.0 {
        hi
    } else {
        oracle_root(g, lo, hi)
    }
}

/// Bound on how far min/max total delay over the brute-force equilibria may sit
/// from the analytic best/worst values.
///
/// Every grid equilibrium has `|C1 - C2| <= tol`, so its lane-1 flow lies within
/// `e` of the reference flow, where `e` is read off the cost-gap curve. Writing
/// `J = C1 D1 + (T - C1) D2` and comparing with the analytic point, the delays move
/// by at most the modulus over `e`, and lane-1 commuters by at most `r_max * e`
/// against a cost difference of at most `tau + tol`.
pub fn discretization_bound(s: &Scenario, grid_steps: usize) -> f64 {
    use tollane_core::equilibrium::{brute_force_tolerance, grid_spacing};
    let tol = brute_force_tolerance(s, grid_steps);
    let h = grid_spacing(s, grid_steps);
    let (lo, hi) = flow_bounds(s);
    let g = |f: f64| s.cost_gap(f);
    let f_ref = oracle_reference_flow(s);
    let left = if g(lo) >= -tol { lo } else { oracle_root(|f| g(f) + tol, lo, hi) };
    let right = if g(hi) <= tol { hi } else { oracle_root(|f| g(f) - tol, lo, hi) };
    let e = (f_ref - left).max(right - f_ref).max(0.5 * h) * (1.0 + 1e-9);
    let total = s.demand().total();
    let modulus = delay_modulus(s.delay_lane1(), e, hi).max(delay_modulus(s.delay_lane2(), e, hi));
    let r_max = s.occupancy().max(1.0 / s.asymmetry());
    total * modulus + (s.toll() + tol) * r_max * e + 1e-9
}

pub fn commuters(s: &Scenario, f: &FlowDistribution) -> (f64, f64) {
    lane_commuters(s, f)
}

pub mod strategy {
    use super::bpr;
    use proptest::prelude::*;
    use tollane_core::prelude::*;

    pub fn delay() -> impl Strategy<Value = DelayFunction> {
        (1.0..5.0f64, 0.5..2.0f64, prop_oneof![Just(1.0), Just(2.0)], 5.0..15.0f64)
            .prop_map(|(t, g, b, m)| bpr(t, g, b, m))
    }

    pub fn demand() -> impl Strategy<Value = DemandProfile> {
        (0.0..6.0f64, 0.0..6.0f64, 0.0..6.0f64, 0.0..6.0f64)
            .prop_filter_map("zero demand", |(a, b, c, d)| DemandProfile::new(a, b, c, d).ok())
    }

    pub fn policy() -> impl Strategy<Value = LanePolicy> {
        (any::<bool>(), any::<bool>()).prop_map(|(a, b)| LanePolicy::new(a, b))
    }

    /// Baseline scenario with toll anywhere in [0, 1.5].
    pub fn scenario() -> impl Strategy<Value = Scenario> {
        (delay(), delay(), demand(), 0.0..1.5f64, 2.0..4.0f64, 0.2..0.9f64).prop_map(
            |(d1, d2, dem, tau, n, mu)| Scenario::new(d1, d2, dem, tau, n, mu, LanePolicy::baseline()).unwrap(),
        )
    }

    pub fn scenario_with_policy() -> impl Strategy<Value = Scenario> {
        (scenario(), policy()).prop_map(|(s, p)| s.with_policy(p))
    }

    /// Scenario placed inside the interior regime by rescaling its toll.
    pub fn interior() -> impl Strategy<Value = Scenario> {
        (scenario_with_policy(), 0.01..0.99f64).prop_filter_map("no interior band", |(s, u)| {
            let t = toll_thresholds(&s);
            let lo = t.lower.max(0.0);
            if t.upper - lo < 1e-6 {
                return None;
            }
            let s = s.with_toll(lo + u * (t.upper - lo)).ok()?;
            (uniqueness_class(&s) == Uniqueness::Interior).then_some(s)
        })
    }
}
