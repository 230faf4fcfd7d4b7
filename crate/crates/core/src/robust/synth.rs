//! Normal directions, closed-form worst-case perturbations and synthetic
//! inlier/outlier generation.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::boundary::{solve_nu0, BoundaryResult, BoundaryStatus};
use crate::aae::AAEModel;
use crate::error::{Error, Result};
use crate::likelihood::{project, LikelihoodModel, Projection};
use crate::numcore::Tensor;

/// Below this residual norm the normal is drawn at random instead.
pub const DEGENERATE_RESIDUAL: f64 = 1e-8;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Unit vector orthogonal to the columns of `jac` (`m × n`), drawn at random.
pub fn random_normal<R: Rng + ?Sized>(jac: &Tensor, rng: &mut R) -> Result<Vec<f64>> {
    let (m, n) = (jac.rows(), jac.cols());
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut col: Vec<f64> = (0..m).map(|i| jac.get(i, j)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = col.iter().zip(b).map(|(a, c)| a * c).sum();
                col.iter_mut().zip(b).for_each(|(a, c)| *a -= d * c);
            }
        }
        let nc = norm(&col);
        if nc > 1e-12 {
            col.iter_mut().for_each(|a| *a /= nc);
            basis.push(col);
        }
    }
    for _ in 0..100 {
        let mut v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                v.iter_mut().zip(b).for_each(|(a, c)| *a -= d * c);
            }
        }
        let nv = norm(&v);
        if nv > 1e-6 {
            v.iter_mut().for_each(|a| *a /= nv);
            return Ok(v);
        }
    }
    Err(Error::InvalidArgument("tangent space fills the ambient space".into()))
}

/// `1_x` for every row of a projected batch.
pub fn normal_directions<R: Rng + ?Sized>(model: &AAEModel, p: &Projection, rng: &mut R) -> Result<Tensor> {
    let mut dirs = p.x_perp.clone();
    for i in 0..dirs.rows() {
        if p.r[i] >= DEGENERATE_RESIDUAL {
            let r = p.r[i];
            dirs.row_mut(i).iter_mut().for_each(|v| *v /= r);
        } else {
            let jac = model.f.jacobian_value(p.z.row(i))?;
            let v = random_normal(&jac, rng)?;
            dirs.row_mut(i).copy_from_slice(&v);
        }
    }
    Ok(dirs)
}

/// `(x − f(g(x))) / ‖x − f(g(x))‖` for a single sample.
pub fn normal_direction<R: Rng + ?Sized>(model: &AAEModel, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let p = project(model, &Tensor::row_vector(x))?;
    Ok(normal_directions(model, &p, rng)?.row(0).to_vec())
}

/// `base + sign · magnitude · dir`.
pub fn displace(base: &[f64], dir: &[f64], magnitude: f64, sign: f64) -> Vec<f64> {
    base.iter().zip(dir).map(|(b, d)| b + sign * magnitude * d).collect()
}

pub fn inlier_magnitude(nu: f64, epsilon: f64) -> f64 {
    nu + epsilon
}

/// Outlier magnitude `ν + ν₀ − ε`, floored at zero.
pub fn outlier_magnitude(nu: f64, nu0: f64, epsilon: f64) -> f64 {
    (nu + nu0 - epsilon).max(0.0)
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// `f(z) ± (ν + ε) 1_x` with `ν ~ U[0, ν₀)`; `None` when no inlier region exists.
pub fn gen_inlier<R: Rng + ?Sized>(
    x_par: &[f64],
    dir: &[f64],
    boundary: BoundaryResult,
    epsilon: f64,
    rng: &mut R,
) -> Option<Vec<f64>> {
    if boundary.status == BoundaryStatus::AllOutlier || boundary.nu0 <= 0.0 {
        return None;
    }
    let nu = rng.random_range(0.0..boundary.nu0);
    Some(displace(x_par, dir, inlier_magnitude(nu, epsilon), random_sign(rng)))
}

/// `f(z) ± max(ν + ν₀ − ε, 0) 1_x` with `ν ~ Exp(rate)`; `None` when no
/// inlier region exists.
pub fn gen_outlier<R: Rng + ?Sized>(
    x_par: &[f64],
    dir: &[f64],
    boundary: BoundaryResult,
    epsilon: f64,
    rate: f64,
    rng: &mut R,
) -> Option<Vec<f64>> {
    if boundary.status == BoundaryStatus::AllOutlier || boundary.nu0 <= 0.0 {
        return None;
    }
    let nu = Exp::new(rate).expect("positive rate").sample(rng);
    Some(displace(x_par, dir, outlier_magnitude(nu, boundary.nu0, epsilon), random_sign(rng)))
}

/// Synthesized inlier and outlier batches from a minibatch of inliers.
#[derive(Debug, Clone)]
pub struct SynthBatch {
    pub inliers: Tensor,
    pub outliers: Tensor,
    pub boundaries: Vec<BoundaryResult>,
    /// Samples without an inlier region, left out of both batches.
    pub skipped: usize,
}

pub fn synthesize<R: Rng + ?Sized>(
    model: &AAEModel,
    lm: &LikelihoodModel,
    x: &Tensor,
    epsilon: f64,
    rate: f64,
    rng: &mut R,
) -> Result<SynthBatch> {
    let p = project(model, x)?;
    let dirs = normal_directions(model, &p, rng)?;
    let mut inl = Vec::with_capacity(x.rows());
    let mut out = Vec::with_capacity(x.rows());
    let mut boundaries = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let b = solve_nu0(lm, p.z.row(i))?;
        boundaries.push(b);
        let xi = gen_inlier(p.x_par.row(i), dirs.row(i), b, epsilon, rng);
        let xo = gen_outlier(p.x_par.row(i), dirs.row(i), b, epsilon, rate, rng);
        if let (Some(a), Some(c)) = (xi, xo) {
            inl.push(a);
            out.push(c);
        }
    }
    let skipped = x.rows() - inl.len();
    let stack = |rows: &[Vec<f64>]| {
        if rows.is_empty() {
            Ok(Tensor::zeros(0, x.cols()))
        } else {
            Tensor::stack_rows(rows)
        }
    };
    Ok(SynthBatch { inliers: stack(&inl)?, outliers: stack(&out)?, boundaries, skipped })
}

/// Closed-form worst-case attack of radius `epsilon`: inliers are pushed
/// away from the manifold, outliers toward it.
pub fn attack<R: Rng + ?Sized>(
    model: &AAEModel,
    x: &Tensor,
    is_inlier: &[bool],
    epsilon: f64,
    rng: &mut R,
) -> Result<Tensor> {
    if is_inlier.len() != x.rows() {
        return Err(Error::shape("attack", format!("{} labels for {} rows", is_inlier.len(), x.rows())));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("attack radius {epsilon} must be >= 0")));
    }
    if epsilon == 0.0 {
        return Ok(x.clone());
    }
    let p = project(model, x)?;
    let dirs = normal_directions(model, &p, rng)?;
    let mut out = x.clone();
    for (i, &inl) in is_inlier.iter().enumerate() {
        let sign = if inl { 1.0 } else { -1.0 };
        let row = displace(x.row(i), dirs.row(i), epsilon, sign);
        out.row_mut(i).copy_from_slice(&row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_normal_is_orthogonal_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let jac = Tensor::from_rows(4, 2, vec![1.0, 0.0, 1.0, 1.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
        let v = random_normal(&jac, &mut rng).unwrap();
        assert!((norm(&v) - 1.0).abs() < 1e-12);
        for j in 0..2 {
            let d: f64 = (0..4).map(|i| jac.get(i, j) * v[i]).sum();
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn magnitudes() {
        assert_eq!(outlier_magnitude(0.1, 1.0, 2.4), 0.0);
        assert!((outlier_magnitude(0.5, 1.0, 0.2) - 1.3).abs() < 1e-15);
        assert_eq!(inlier_magnitude(0.0, 0.0), 0.0);
    }

    #[test]
    fn skipped_without_inlier_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = BoundaryResult { nu0: 0.0, status: BoundaryStatus::AllOutlier };
        assert!(gen_inlier(&[0.0; 3], &[1.0, 0.0, 0.0], b, 0.1, &mut rng).is_none());
        assert!(gen_outlier(&[0.0; 3], &[1.0, 0.0, 0.0], b, 0.1, 5.0, &mut rng).is_none());
    }

    #[test]
    fn generated_inlier_magnitude_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = BoundaryResult { nu0: 0.7, status: BoundaryStatus::Root };
        for _ in 0..100 {
            let p = gen_inlier(&[1.0, 1.0], &[0.0, 1.0], b, 0.3, &mut rng).unwrap();
            let mag = (p[1] - 1.0).abs();
            assert_eq!(p[0], 1.0);
            assert!((0.3..1.0).contains(&mag));
        }
    }

    #[test]
    fn exponential_offsets_average_one_over_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = BoundaryResult { nu0: 1.0, status: BoundaryStatus::Root };
        let n = 20_000;
        let mean: f64 = (0..n)
            .map(|_| gen_outlier(&[0.0], &[1.0], b, 0.0, 5.0, &mut rng).unwrap()[0].abs() - 1.0)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.2).abs() < 0.01, "{mean}");
    }
}
