//! Distance from the manifold at which the score crosses the threshold.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::likelihood::LikelihoodModel;

pub const SCAN_POINTS: usize = 200;
pub const SCAN_START: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryStatus {
    /// A crossing was bracketed and refined.
    Root,
    /// The score stays at or above the threshold over the whole range.
    AllInlier,
    /// The score stays below the threshold over the whole range.
    AllOutlier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryResult {
    pub nu0: f64,
    pub status: BoundaryStatus,
}

/// First downward crossing of `score(ν) = log_gamma` on `(0, r_cap]`.
///
/// A log-spaced scan of [`SCAN_POINTS`] points on `[SCAN_START, r_cap]`
/// brackets the crossing, then bisection narrows it until the bracket is
/// narrower than `1e-6 · r_cap` and beyond, as far as floating point allows.
/// The returned `ν₀` is the bracket end that still scores at or above the
/// threshold.
pub fn solve_boundary(score: impl Fn(f64) -> f64, log_gamma: f64, r_cap: f64) -> BoundaryResult {
    let r_cap = r_cap.max(SCAN_START * 2.0);
    let ratio = (r_cap / SCAN_START).ln() / (SCAN_POINTS - 1) as f64;
    let grid = |i: usize| if i + 1 == SCAN_POINTS { r_cap } else { SCAN_START * (ratio * i as f64).exp() };
    let above: Vec<bool> = (0..SCAN_POINTS).map(|i| score(grid(i)) >= log_gamma).collect();
    let Some(first_above) = above.iter().position(|&a| a) else {
        return BoundaryResult { nu0: 0.0, status: BoundaryStatus::AllOutlier };
    };
    let Some(k) = (first_above + 1..SCAN_POINTS).find(|&i| !above[i]) else {
        return BoundaryResult { nu0: r_cap, status: BoundaryStatus::AllInlier };
    };
    let (mut lo, mut hi) = (grid(k - 1), grid(k));
    let tol = 1e-6 * r_cap;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if score(mid) >= log_gamma {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < tol * 1e-6 {
            break;
        }
    }
    BoundaryResult { nu0: lo, status: BoundaryStatus::Root }
}

/// `ν₀` for latent code `z` under a calibrated likelihood model.
pub fn solve_nu0(lm: &LikelihoodModel, z: &[f64]) -> Result<BoundaryResult> {
    let lg = lm.log_gamma()?;
    let latent = lm.latent.log_pdf(z);
    Ok(solve_boundary(|nu| latent + lm.log_orthogonal(nu).0, lg, lm.r_cap()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_root_of_decreasing_function() {
        let b = solve_boundary(|r| -r.ln(), -1.0, 10.0);
        assert_eq!(b.status, BoundaryStatus::Root);
        assert!((b.nu0 - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn status_codes() {
        assert_eq!(solve_boundary(|_| 5.0, 1.0, 3.0), BoundaryResult { nu0: 3.0, status: BoundaryStatus::AllInlier });
        assert_eq!(solve_boundary(|_| 0.0, 1.0, 3.0), BoundaryResult { nu0: 0.0, status: BoundaryStatus::AllOutlier });
    }

    #[test]
    fn root_side_is_inside() {
        let score = |r: f64| 3.0 - r * r;
        let b = solve_boundary(score, 1.0, 4.0);
        assert!(score(b.nu0) >= 1.0);
        assert!((score(b.nu0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn skips_initial_region_below_threshold() {
        // Below until 0.5, above until 2, below after.
        let score = |r: f64| if (0.5..2.0).contains(&r) { 1.0 } else { -1.0 };
        let b = solve_boundary(score, 0.0, 5.0);
        assert_eq!(b.status, BoundaryStatus::Root);
        assert!((b.nu0 - 2.0).abs() < 1e-9);
    }
}
