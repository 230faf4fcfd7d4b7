//! Density of the distance to the manifold, from a histogram.
//!
//! Bin heights sit at bin centers and are joined linearly; the density is
//! flat from 0 to the first center and from the last center to the upper
//! edge, which keeps the total mass exactly that of the histogram. Past the
//! upper edge, and wherever the interpolant is smaller, the density is the
//! floor `ρ_min`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 100;
pub const RHO_MIN: f64 = 1e-12;
/// Support extends this far past the largest fitted norm.
pub const SUPPORT_FACTOR: f64 = 1.2;
const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormDensity {
    /// Upper edge of the support; bins are uniform on `[0, upper]`.
    pub upper: f64,
    /// Density value of each bin (`Σ heights · width = 1`).
    pub heights: Vec<f64>,
    pub floor: f64,
    /// Largest norm seen when fitting.
    pub max_norm: f64,
}

impl NormDensity {
    pub fn fit(norms: &[f64]) -> Result<Self> {
        Self::fit_with_bins(norms, DEFAULT_BINS)
    }

    pub fn fit_with_bins(norms: &[f64], bins: usize) -> Result<Self> {
        if norms.len() < MIN_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "norm density needs at least {MIN_SAMPLES} samples, got {}",
                norms.len()
            )));
        }
        if bins == 0 {
            return Err(Error::InvalidArgument("norm density needs at least one bin".into()));
        }
        if norms.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidArgument("norms must be finite and non-negative".into()));
        }
        let max_norm = norms.iter().cloned().fold(0.0, f64::max);
        let min_norm = norms.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_norm == max_norm {
            log::warn!("all {} norms equal {max_norm}; norm density is a single spike", norms.len());
        }
        let upper = if max_norm > 0.0 { SUPPORT_FACTOR * max_norm } else { 1e-6 };
        let width = upper / bins as f64;
        let mut counts = vec![0usize; bins];
        for &r in norms {
            counts[((r / width) as usize).min(bins - 1)] += 1;
        }
        let scale = 1.0 / (norms.len() as f64 * width);
        let heights = counts.iter().map(|&c| c as f64 * scale).collect();
        Ok(NormDensity { upper, heights, floor: RHO_MIN, max_norm })
    }

    /// Tabulate an analytic density at bin centers on `[0, upper]` and
    /// renormalize. `max_norm` is set to `upper / SUPPORT_FACTOR`, as if fitted.
    pub fn from_pdf(pdf: impl Fn(f64) -> f64, upper: f64, bins: usize) -> Result<Self> {
        if !(upper > 0.0 && upper.is_finite()) || bins == 0 {
            return Err(Error::InvalidArgument(format!("bad tabulation range {upper} with {bins} bins")));
        }
        let width = upper / bins as f64;
        let raw: Vec<f64> = (0..bins).map(|k| pdf((k as f64 + 0.5) * width).max(0.0)).collect();
        let mass: f64 = raw.iter().sum::<f64>() * width;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidArgument("tabulated density has no mass".into()));
        }
        let heights = raw.iter().map(|h| h / mass).collect();
        Ok(NormDensity { upper, heights, floor: RHO_MIN, max_norm: upper / SUPPORT_FACTOR })
    }

    pub fn bins(&self) -> usize {
        self.heights.len()
    }

    pub fn width(&self) -> f64 {
        self.upper / self.bins() as f64
    }

    /// Interpolated density before flooring, and its slope in `r`.
    pub fn raw(&self, r: f64) -> (f64, f64) {
        let b = self.bins();
        let w = self.width();
        if !(r <= self.upper) {
            return (0.0, 0.0);
        }
        let t = r / w - 0.5;
        if t <= 0.0 {
            return (self.heights[0], 0.0);
        }
        let k = t.floor() as usize;
        if k + 1 >= b {
            return (self.heights[b - 1], 0.0);
        }
        let frac = t - k as f64;
        let (h0, h1) = (self.heights[k], self.heights[k + 1]);
        (h0 + frac * (h1 - h0), (h1 - h0) / w)
    }

    pub fn density(&self, r: f64) -> f64 {
        self.raw(r).0.max(self.floor)
    }

    /// `(log ρ(r), d/dr log ρ(r))`; the slope is 0 where the floor is active.
    pub fn log_density(&self, r: f64) -> (f64, f64) {
        let (v, dv) = self.raw(r);
        if v > self.floor {
            (v.ln(), dv / v)
        } else {
            (self.floor.ln(), 0.0)
        }
    }
}
