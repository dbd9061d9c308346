//! Scalar root finding and minimization used by the equilibrium and design code.

/// Stopping rule for [`bisect`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionOptions {
    /// Stop once the bracket is narrower than this.
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        BisectionOptions {
            x_tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// Root of an increasing function inside `[lo, hi]`.
///
/// Expects `g(lo) <= 0 <= g(hi)`; the caller is responsible for the bracket. An
/// exact zero at a midpoint is returned immediately.
pub fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, opts: BisectionOptions) -> f64 {
    debug_assert!(lo <= hi);
    for _ in 0..opts.max_iter {
        if hi - lo <= opts.x_tol {
            break;
        }
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = g(mid);
        if v == 0.0 {
            return mid;
        } else if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + 0.5 * (hi - lo)
}

/// Best point found by a minimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on `[lo, hi]` for a function assumed unimodal there.
///
/// `incumbent` seeds the result; a new point replaces it only on strict
/// improvement, so ties keep the earlier point.
pub fn golden_section(
    f: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    x_tol: f64,
    max_iter: usize,
    incumbent: Minimum,
) -> Minimum {
    let mut best = incumbent;
    let consider = |x: f64, v: f64, best: &mut Minimum| {
        if v < best.value {
            *best = Minimum { x, value: v };
        }
    };
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    consider(x1, f1, &mut best);
    consider(x2, f2, &mut best);
    for _ in 0..max_iter {
        if hi - lo <= x_tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
            consider(x1, f1, &mut best);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
            consider(x2, f2, &mut best);
        }
    }
    best
}

/// Evenly spaced grid over `[lo, hi]` with `points` entries (`points >= 2`).
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2, "linspace needs at least two points");
    let last = (points - 1) as f64;
    (0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                lo + (hi - lo) * (i as f64) / last
            }
        })
        .collect()
}

/// Argmin over precomputed values; first index wins ties.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if !(v < values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Grid scan followed by golden-section refinement around the best grid point.
///
/// The grid guards against multimodal objectives; refinement only runs inside
/// the bracketing neighbours of the grid argmin.
pub fn grid_then_golden(grid: &[f64], values: &[f64], f: impl Fn(f64) -> f64) -> Minimum {
    assert_eq!(grid.len(), values.len());
    let i = argmin(values).expect("empty grid");
    let incumbent = Minimum {
        x: grid[i],
        value: values[i],
    };
    if grid.len() < 3 {
        return incumbent;
    }
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    if hi <= lo {
        return incumbent;
    }
    golden_section(f, lo, hi, 1e-10 * (1.0 + hi.abs()), 200, incumbent)
}
