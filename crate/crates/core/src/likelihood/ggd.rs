//! Generalized Gaussian densities fitted by moment matching.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const BETA_MIN: f64 = 0.3;
pub const BETA_MAX: f64 = 10.0;
const MIN_SAMPLES: usize = 100;
/// Scale floor for components whose samples have (numerically) no spread.
const ALPHA_MIN: f64 = 1e-9;

/// `p(x) = β / (2 α Γ(1/β)) · exp(−(|x − μ| / α)^β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GGaussian1D {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Kurtosis `E[(x−μ)⁴] / σ⁴` of a generalized Gaussian with shape `β`.
pub fn ggd_kurtosis(beta: f64) -> f64 {
    (ln_gamma(5.0 / beta) + ln_gamma(1.0 / beta) - 2.0 * ln_gamma(3.0 / beta)).exp()
}

impl GGaussian1D {
    pub fn new(mu: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && mu.is_finite() && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid generalized Gaussian ({mu}, {alpha}, {beta})")));
        }
        Ok(GGaussian1D { mu, alpha, beta })
    }

    pub fn log_norm(&self) -> f64 {
        self.beta.ln() - std::f64::consts::LN_2 - self.alpha.ln() - ln_gamma(1.0 / self.beta)
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        self.log_norm() - ((x - self.mu).abs() / self.alpha).powf(self.beta)
    }

    /// `d/dx log p(x)`; taken as 0 at the mode, where it is undefined for `β ≤ 1`.
    pub fn dlog_pdf(&self, x: f64) -> f64 {
        let d = x - self.mu;
        if d == 0.0 {
            return 0.0;
        }
        let t = d.abs() / self.alpha;
        -self.beta / self.alpha * t.powf(self.beta - 1.0) * d.signum()
    }

    pub fn variance(&self) -> f64 {
        self.alpha * self.alpha * (ln_gamma(3.0 / self.beta) - ln_gamma(1.0 / self.beta)).exp()
    }

    /// Moment-matching fit. The second value is true when the sample
    /// kurtosis fell outside the invertible range and `β` was clamped.
    pub fn fit(samples: &[f64]) -> Result<(Self, bool)> {
        if samples.len() < MIN_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "generalized Gaussian fit needs at least {MIN_SAMPLES} samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "ggd fit input" });
        }
        let n = samples.len() as f64;
        let mu = samples.iter().sum::<f64>() / n;
        let m2 = samples.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        let m4 = samples.iter().map(|v| (v - mu).powi(4)).sum::<f64>() / n;
        if m2 <= 0.0 {
            return Ok((GGaussian1D { mu, alpha: ALPHA_MIN, beta: 2.0 }, true));
        }
        let kappa = m4 / (m2 * m2);
        let (beta, clamped) = solve_beta(kappa);
        let alpha = (m2 * (ln_gamma(1.0 / beta) - ln_gamma(3.0 / beta)).exp()).sqrt().max(ALPHA_MIN);
        Ok((GGaussian1D { mu, alpha, beta }, clamped))
    }
}

/// Invert the (decreasing) kurtosis map by bisection on `[BETA_MIN, BETA_MAX]`.
fn solve_beta(kappa: f64) -> (f64, bool) {
    if kappa >= ggd_kurtosis(BETA_MIN) {
        return (BETA_MIN, true);
    }
    if kappa <= ggd_kurtosis(BETA_MAX) {
        return (BETA_MAX, true);
    }
    let (mut lo, mut hi) = (BETA_MIN, BETA_MAX);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ggd_kurtosis(mid) > kappa {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    (0.5 * (lo + hi), false)
}

/// Product of independent per-dimension generalized Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDensity {
    pub components: Vec<GGaussian1D>,
}

impl LatentDensity {
    /// Fit every column of `z` (`N × n`).
    pub fn fit(z: &Tensor) -> Result<Self> {
        let mut components = Vec::with_capacity(z.cols());
        let mut col = vec![0.0; z.rows()];
        for j in 0..z.cols() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = z.get(i, j);
            }
            let (comp, clamped) = GGaussian1D::fit(&col)?;
            if clamped {
                log::warn!("latent dim {j}: kurtosis out of range, shape clamped to {}", comp.beta);
            }
            components.push(comp);
        }
        Ok(LatentDensity { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn log_pdf(&self, z: &[f64]) -> f64 {
        self.components.iter().zip(z).map(|(c, &v)| c.log_pdf(v)).sum()
    }
}
