//! The factorized novelty score and its threshold.
//!
//! A sample `x` is encoded to `z = g(x)`, projected to `x∥ = f(z)`, and
//! scored as
//!
//! ```text
//! log p(x) = log p_Z(z) + lnΓ(d/2) − ln 2 − (d/2) ln π − (d − 1) ln r + ln ρ(r)
//! ```
//!
//! with `d = m − n`, `r = ‖x − x∥‖` and `ρ` the density of `r` over the
//! training set. Everything stays in the log domain.

mod ggd;
mod norm;

pub use ggd::{ggd_kurtosis, GGaussian1D, LatentDensity, BETA_MAX, BETA_MIN};
pub use norm::{NormDensity, DEFAULT_BINS, RHO_MIN, SUPPORT_FACTOR};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::aae::AAEModel;
use crate::error::{Error, Result};
use crate::numcore::{MlpVars, Tensor, Var};

/// Lower clamp on `r` before taking its log.
pub const R_MIN: f64 = 1e-12;
/// The boundary search runs up to this multiple of the largest training norm.
pub const R_CAP_FACTOR: f64 = 1.5;

/// Decomposition of a batch against the learned manifold.
#[derive(Debug, Clone)]
pub struct Projection {
    pub z: Tensor,
    pub x_par: Tensor,
    pub x_perp: Tensor,
    pub r: Vec<f64>,
}

pub fn project(model: &AAEModel, x: &Tensor) -> Result<Projection> {
    let z = model.encode(x)?;
    let x_par = model.decode(&z)?;
    let x_perp = x.zip_map(&x_par, |a, b| a - b);
    let r = (0..x_perp.rows()).map(|i| x_perp.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    Ok(Projection { z, x_par, x_perp, r })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodModel {
    pub latent: LatentDensity,
    pub norm: NormDensity,
    pub ambient_dim: usize,
    pub latent_dim: usize,
    /// Decision threshold on the log score; `None` until calibrated.
    pub log_gamma: Option<f64>,
}

impl LikelihoodModel {
    pub fn new(latent: LatentDensity, norm: NormDensity, ambient_dim: usize) -> Result<Self> {
        let latent_dim = latent.dim();
        if latent_dim == 0 || latent_dim >= ambient_dim {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= latent dim ({latent_dim}) < ambient dim ({ambient_dim})"
            )));
        }
        Ok(LikelihoodModel { latent, norm, ambient_dim, latent_dim, log_gamma: None })
    }

    /// Fit both density factors on the encoded training inliers.
    pub fn fit(model: &AAEModel, x_train: &Tensor) -> Result<Self> {
        let p = project(model, x_train)?;
        Self::new(LatentDensity::fit(&p.z)?, NormDensity::fit(&p.r)?, model.ambient_dim())
    }

    /// Refit the densities, keeping the threshold.
    pub fn refit(&mut self, model: &AAEModel, x_train: &Tensor) -> Result<()> {
        let fresh = Self::fit(model, x_train)?;
        self.latent = fresh.latent;
        self.norm = fresh.norm;
        Ok(())
    }

    pub fn codim(&self) -> usize {
        self.ambient_dim - self.latent_dim
    }

    pub fn r_cap(&self) -> f64 {
        R_CAP_FACTOR * self.norm.max_norm
    }

    pub fn log_gamma(&self) -> Result<f64> {
        self.log_gamma.ok_or_else(|| Error::InvalidArgument("likelihood model has no threshold yet".into()))
    }

    /// Log density of the orthogonal component at distance `r`, with its
    /// derivative in `r`.
    pub fn log_orthogonal(&self, r: f64) -> (f64, f64) {
        let d = self.codim() as f64;
        let c = ln_gamma(d / 2.0) - std::f64::consts::LN_2 - d / 2.0 * std::f64::consts::PI.ln();
        let (rc, dr) = if r > R_MIN { (r, 1.0) } else { (R_MIN, 0.0) };
        let (lrho, dlrho) = self.norm.log_density(r);
        (c - (d - 1.0) * rc.ln() + lrho, -(d - 1.0) * dr / rc + dlrho)
    }

    /// Score from a latent code and a residual norm.
    pub fn score_parts(&self, z: &[f64], r: f64) -> f64 {
        self.latent.log_pdf(z) + self.log_orthogonal(r).0
    }

    pub fn log_px(&self, model: &AAEModel, x: &Tensor) -> Result<Vec<f64>> {
        let p = project(model, x)?;
        Ok((0..x.rows()).map(|i| self.score_parts(p.z.row(i), p.r[i])).collect())
    }

    /// Differentiable scores (`rows × 1`) through `g`, `f` and `r`. The
    /// density parameters are constants.
    pub fn log_px_var<'t>(&self, f: &MlpVars<'t>, g: &MlpVars<'t>, x: Var<'t>) -> Var<'t> {
        let z = g.forward(x);
        let x_par = f.forward(z);
        let r = x.sub(&x_par).row_norm();
        let orth = r.map_with("log_orthogonal", |v| self.log_orthogonal(v));
        let comps = &self.latent.components;
        let lat = z
            .map_cols_with("latent_log_pdf", |j, v| (comps[j].log_pdf(v), comps[j].dlog_pdf(v)))
            .sum_rows();
        lat.add(&orth)
    }

    /// Pick and store the F1-optimal threshold.
    pub fn calibrate(&mut self, scores: &[f64], labels: &[bool]) -> Result<f64> {
        let lg = select_gamma(scores, labels)?;
        self.log_gamma = Some(lg);
        Ok(lg)
    }
}

pub(crate) fn check_two_classes(scores: &[f64], labels: &[bool]) -> Result<usize> {
    if scores.len() != labels.len() {
        return Err(Error::shape("select_gamma", format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite { op: "select_gamma scores" });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::InvalidArgument("threshold selection needs both inliers and outliers".into()));
    }
    Ok(pos)
}

/// Threshold maximizing F1 with inliers as the positive class, searched over
/// midpoints of consecutive distinct scores and the lowest score, which
/// accepts everything. Ties go to the lower threshold.
pub fn select_gamma(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pos = check_two_classes(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut best = (f64::NEG_INFINITY, scores[order[0]]);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let threshold = if i == order.len() { s } else { 0.5 * (s + scores[order[i]]) };
        let f1 = 2.0 * tp as f64 / (tp + fp + pos) as f64;
        if f1 >= best.0 {
            best = (f1, threshold);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dummy_latent(n: usize) -> LatentDensity {
        LatentDensity { components: vec![GGaussian1D::new(0.0, 2f64.sqrt(), 2.0).unwrap(); n] }
    }

    fn rayleigh() -> NormDensity {
        NormDensity::from_pdf(|r| r * (-r * r / 2.0).exp(), 6.0, 100).unwrap()
    }

    #[test]
    fn codim_two_reduces_to_polar_density() {
        let lm = LikelihoodModel::new(dummy_latent(1), rayleigh(), 3).unwrap();
        for r in [0.3, 1.0, 2.5] {
            let expect = lm.norm.density(r).ln() - (2.0 * std::f64::consts::PI).ln() - r.ln();
            assert!((lm.log_orthogonal(r).0 - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn radius_one_removes_power_term() {
        let lm = LikelihoodModel::new(dummy_latent(16), rayleigh(), 784).unwrap();
        let d = 768.0_f64;
        let c = ln_gamma(d / 2.0) - 2f64.ln() - d / 2.0 * std::f64::consts::PI.ln();
        assert!((lm.log_orthogonal(1.0).0 - (c + lm.norm.density(1.0).ln())).abs() < 1e-9);
    }

    #[test]
    fn score_is_finite_at_extremes() {
        let lm = LikelihoodModel::new(dummy_latent(2), rayleigh(), 10).unwrap();
        for r in [0.0, 1e-300, 1e-3, 1e6] {
            assert!(lm.score_parts(&[0.0, 1e3], r).is_finite());
        }
    }

    #[test]
    fn orthogonal_derivative_matches_finite_difference() {
        let lm = LikelihoodModel::new(dummy_latent(2), rayleigh(), 12).unwrap();
        for r in [0.37, 1.21, 3.31] {
            let h = 1e-7;
            let fd = (lm.log_orthogonal(r + h).0 - lm.log_orthogonal(r - h).0) / (2.0 * h);
            let an = lm.log_orthogonal(r).1;
            assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "{fd} vs {an}");
        }
    }

    #[test]
    fn decreasing_in_r_where_density_is_non_increasing() {
        let exp_law = NormDensity::from_pdf(|r| (-r).exp(), 12.0, 100).unwrap();
        let lm = LikelihoodModel::new(dummy_latent(1), exp_law, 5).unwrap();
        let mut prev = lm.log_orthogonal(1.0).0;
        for k in 1..200 {
            let cur = lm.log_orthogonal(1.0 + k as f64 * 0.05).0;
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn gamma_examples() {
        let t = select_gamma(&[3.0, 2.0, 1.0, 0.0], &[true, true, false, false]).unwrap();
        assert!(t > 1.0 && t < 2.0);
        assert!(select_gamma(&[1.0, 2.0], &[true, true]).is_err());
        assert!(select_gamma(&[1.0], &[true, false]).is_err());
    }

    fn f1_at(scores: &[f64], labels: &[bool], t: f64) -> f64 {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l).count() as f64;
        let fp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && !**l).count() as f64;
        let pos = labels.iter().filter(|l| **l).count() as f64;
        if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (tp + fp + pos)
        }
    }

    #[test]
    fn gamma_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(2..60);
            let labels: Vec<bool> = (0..n).map(|i| i == 0 || (i > 1 && rng.random_bool(0.6))).collect();
            let scores: Vec<f64> =
                labels.iter().map(|&l| (rng.random_range(0..8) as f64) + if l { 1.0 } else { 0.0 }).collect();
            if labels.iter().all(|&l| l) {
                continue;
            }
            let got = select_gamma(&scores, &labels).unwrap();
            let best = scores.iter().map(|&t| f1_at(&scores, &labels, t)).fold(0.0, f64::max);
            assert!((f1_at(&scores, &labels, got) - best).abs() < 1e-12);
        }
    }
}
