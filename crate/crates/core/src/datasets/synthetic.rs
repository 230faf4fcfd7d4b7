//! Points sampled near a known `n`-dimensional manifold in `ℝᵐ`.
//!
//! `x = Q z + ξ` for the linear case, with `Q` an `m × n` matrix with
//! orthonormal columns and `ξ ~ N(0, σ² I_m)`. The bent variant adds
//! `c · sin(z₁) · v` with `v ⟂ span(Q)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifoldKind {
    LinearIsometry,
    BentIsometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticManifoldSpec {
    pub latent_dim: usize,
    pub ambient_dim: usize,
    pub kind: ManifoldKind,
    /// Standard deviation of the isotropic ambient noise.
    pub noise: f64,
    /// Amplitude of the bend; ignored for the linear manifold.
    #[serde(default = "default_bend")]
    pub bend_amplitude: f64,
}

fn default_bend() -> f64 {
    0.1
}

impl SyntheticManifoldSpec {
    pub fn linear(latent_dim: usize, ambient_dim: usize, noise: f64) -> Self {
        SyntheticManifoldSpec { latent_dim, ambient_dim, kind: ManifoldKind::LinearIsometry, noise, bend_amplitude: 0.1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.latent_dim >= self.ambient_dim {
            return Err(Error::InvalidArgument(format!(
                "need 0 < latent ({}) < ambient ({})",
                self.latent_dim, self.ambient_dim
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise scale {} must be >= 0", self.noise)));
        }
        if self.kind == ManifoldKind::BentIsometry && !(0.0..=0.1).contains(&self.bend_amplitude) {
            return Err(Error::InvalidArgument(format!("bend amplitude {} outside [0, 0.1]", self.bend_amplitude)));
        }
        Ok(())
    }
}

/// Samples plus ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticSet {
    /// `N × m`
    pub x: Tensor,
    /// Latent coordinates, `N × n`.
    pub z: Tensor,
    /// Norm of each sample's noise component orthogonal to `span(Q)`; for
    /// the linear manifold this is exactly `‖x − QQᵀx‖`.
    pub residual_norms: Vec<f64>,
    /// `m × n`, orthonormal columns.
    pub basis: Tensor,
    /// Unit bend direction orthogonal to `span(Q)` (unused when linear).
    pub bend_dir: Vec<f64>,
}

/// Orthonormalize `v` against the columns of `q` (twice, for accuracy).
fn orthogonalize(v: &mut [f64], q: &[Vec<f64>]) {
    for _ in 0..2 {
        for col in q {
            let dot: f64 = v.iter().zip(col).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(col).for_each(|(a, b)| *a -= dot * b);
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= n);
    n
}

pub fn gen_synthetic(spec: &SyntheticManifoldSpec, n_samples: usize, seed: u64) -> Result<SyntheticSet> {
    spec.validate()?;
    let (n, m) = (spec.latent_dim, spec.ambient_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |len: usize| -> Vec<f64> { (0..len).map(|_| StandardNormal.sample(&mut rng)).collect() };

    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    while cols.len() < n + 1 {
        let mut v = gauss(m);
        orthogonalize(&mut v, &cols);
        if normalize(&mut v) > 1e-6 {
            cols.push(v);
        }
    }
    let bend_dir = cols.pop().unwrap();
    let mut basis = Tensor::zeros(m, n);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..m {
            basis.set(i, j, col[i]);
        }
    }

    let mut x = Tensor::zeros(n_samples, m);
    let mut z = Tensor::zeros(n_samples, n);
    let mut residual_norms = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let zs = gauss(n);
        let mut noise: Vec<f64> = gauss(m).into_iter().map(|e| e * spec.noise).collect();
        let row = x.row_mut(s);
        for (j, col) in cols.iter().enumerate() {
            row.iter_mut().zip(col).for_each(|(a, q)| *a += q * zs[j]);
        }
        if spec.kind == ManifoldKind::BentIsometry {
            let bump = spec.bend_amplitude * zs[0].sin();
            row.iter_mut().zip(&bend_dir).for_each(|(a, v)| *a += bump * v);
        }
        row.iter_mut().zip(&noise).for_each(|(a, e)| *a += e);
        z.row_mut(s).copy_from_slice(&zs);

        // Noise component outside span(Q).
        for col in &cols {
            let dot: f64 = noise.iter().zip(col).map(|(a, b)| a * b).sum();
            noise.iter_mut().zip(col).for_each(|(a, b)| *a -= dot * b);
        }
        residual_norms.push(noise.iter().map(|a| a * a).sum::<f64>().sqrt());
    }
    Ok(SyntheticSet { x, z, residual_norms, basis, bend_dir })
}
