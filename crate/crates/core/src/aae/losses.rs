//! Autoencoder priors and adversarial losses as tape expressions.
//!
//! Each function takes its random draws (unit vectors, prior samples)
//! explicitly so that values are reproducible and can be checked against
//! direct recomputation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numcore::{MlpVars, Tensor, Trace, Var};

/// Discriminator outputs are clamped to `[D_EPS, 1 − D_EPS]` before logs.
pub const D_EPS: f64 = 1e-7;

/// `rows` independent draws from the uniform distribution on the unit
/// sphere in `ℝ^dim`.
pub fn unit_sphere<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Tensor {
    let mut u = Tensor::zeros(rows, dim);
    for r in 0..rows {
        let row = u.row_mut(r);
        loop {
            row.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-12 {
                row.iter_mut().for_each(|v| *v /= n);
                break;
            }
        }
    }
    u
}

/// Standard normal prior samples.
pub fn prior_sample<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * dim).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_rows(rows, dim, data).expect("sized buffer")
}

fn mean_sq_dev_from_one<'t>(v: Var<'t>) -> Var<'t> {
    v.row_norm().add_scalar(-1.0).square().mean()
}

/// `E(‖J_f(z) u‖ − 1)²` given the decoder trace at `z`.
pub fn loss_isometry_traced<'t>(f: &MlpVars<'t>, trace: &Trace<'t>, u: &Tensor) -> Var<'t> {
    let u = trace.out.tape().constant(u.clone());
    mean_sq_dev_from_one(f.jvp(trace, u))
}

/// `E(‖uᵀ J_g(x)‖ − 1)²` given the encoder trace at `x`.
pub fn loss_pseudoinverse_traced<'t>(g: &MlpVars<'t>, trace: &Trace<'t>, u: &Tensor) -> Var<'t> {
    let u = trace.out.tape().constant(u.clone());
    mean_sq_dev_from_one(g.vjp(trace, u))
}

pub fn loss_isometry<'t>(f: &MlpVars<'t>, z: Var<'t>, u: &Tensor) -> Var<'t> {
    loss_isometry_traced(f, &f.trace(z), u)
}

pub fn loss_pseudoinverse<'t>(g: &MlpVars<'t>, x: Var<'t>, u: &Tensor) -> Var<'t> {
    loss_pseudoinverse_traced(g, &g.trace(x), u)
}

/// Mean per-pixel Bernoulli cross-entropy between `x` and `f(g(x))`.
pub fn loss_recon_ce<'t>(f: &MlpVars<'t>, g: &MlpVars<'t>, x: Var<'t>) -> Var<'t> {
    let target = x.value().clone();
    f.forward(g.forward(x)).bce_mean(&target)
}

/// Mean squared reconstruction distance `E‖x − f(g(x))‖²`, for decoders
/// with an unbounded output.
pub fn loss_recon_sq<'t>(f: &MlpVars<'t>, g: &MlpVars<'t>, x: Var<'t>) -> Var<'t> {
    recon_sq(x, f.forward(g.forward(x)))
}

pub(crate) fn recon_sq<'t>(x: Var<'t>, y: Var<'t>) -> Var<'t> {
    let rows = x.dims().0 as f64;
    x.sub(&y).square().sum().scale(1.0 / rows)
}

fn log_d<'t>(d: Var<'t>) -> Var<'t> {
    d.clamp(D_EPS, 1.0 - D_EPS).ln()
}

fn log_one_minus_d<'t>(d: Var<'t>) -> Var<'t> {
    d.clamp(D_EPS, 1.0 - D_EPS).neg().add_scalar(1.0).ln()
}

/// `E log D(real) + E log(1 − D(fake))`, the quantity a discriminator
/// ascends.
pub fn discriminator_objective<'t>(d: &MlpVars<'t>, real: Var<'t>, fake: Var<'t>) -> Var<'t> {
    log_d(d.forward(real)).mean().add(&log_one_minus_d(d.forward(fake)).mean())
}

/// Non-saturating generator loss `−E log D(fake)`.
pub fn generator_loss<'t>(d: &MlpVars<'t>, fake: Var<'t>) -> Var<'t> {
    log_d(d.forward(fake)).mean().neg()
}

/// `E log D_z(prior) + E log(1 − D_z(g(x)))`.
pub fn loss_adv_latent<'t>(g: &MlpVars<'t>, dz: &MlpVars<'t>, x: Var<'t>, prior: Var<'t>) -> Var<'t> {
    discriminator_objective(dz, prior, g.forward(x))
}

/// `E log D_x(x) + E log(1 − D_x(f(prior)))`.
pub fn loss_adv_data<'t>(f: &MlpVars<'t>, dx: &MlpVars<'t>, x: Var<'t>, prior: Var<'t>) -> Var<'t> {
    discriminator_objective(dx, x, f.forward(prior))
}
