//! Finite-difference checks of every training loss against the tape.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rlnd::aae::{
    generator_loss, loss_adv_data, loss_adv_latent, loss_isometry, loss_pseudoinverse, loss_recon_ce,
    loss_recon_sq, prior_sample, unit_sphere, AAEModel,
};
use rlnd::likelihood::LikelihoodModel;
use rlnd::numcore::{Activation, Mlp, MlpVars, Tape, Tensor, Var};
use rlnd::robust::{loss_robust, loss_robust_additive};

pub const POINTS: u64 = 10;
const STEP: f64 = 1e-6;
pub const TOL: f64 = 1e-4;

const M: usize = 6;
const N: usize = 2;

type Build = dyn for<'t> Fn(&'t Tape, &[MlpVars<'t>]) -> Var<'t>;

fn random_nets(rng: &mut ChaCha8Rng, decoder_out: Activation) -> Vec<Mlp> {
    vec![
        Mlp::new_random(&[N, 7, M], Activation::Tanh, decoder_out, rng).unwrap(),
        Mlp::new_random(&[M, 7, N], Activation::Tanh, Activation::Identity, rng).unwrap(),
        Mlp::new_random(&[M, 5, 1], Activation::Tanh, Activation::Sigmoid, rng).unwrap(),
        Mlp::new_random(&[N, 5, 1], Activation::Tanh, Activation::Sigmoid, rng).unwrap(),
    ]
}

fn random_like(t: &Tensor, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..t.rows() * t.cols()).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_rows(t.rows(), t.cols(), data).unwrap()
}

fn value_and_grad(nets: &[Mlp], build: &Build) -> (f64, Vec<Tensor>) {
    let tape = Tape::new();
    let vars: Vec<MlpVars> = nets.iter().map(|n| n.register(&tape, true)).collect();
    let loss = build(&tape, &vars);
    let value = loss.item();
    let g = tape.backward(loss).unwrap();
    (value, vars.iter().flat_map(|v| v.grads(&g)).collect())
}

fn shifted(nets: &[Mlp], dir: &[Tensor], h: f64) -> Vec<Mlp> {
    let mut out = nets.to_vec();
    let mut k = 0;
    for net in &mut out {
        for p in net.params_mut() {
            *p = p.zip_map(&dir[k], |a, d| a + h * d);
            k += 1;
        }
    }
    out
}

/// Relative error between the tape's directional derivative along a random
/// parameter direction and a central difference.
fn directional_error(nets: &[Mlp], build: &Build, rng: &mut ChaCha8Rng) -> f64 {
    let (_, grads) = value_and_grad(nets, build);
    let dir: Vec<Tensor> = nets.iter().flat_map(|n| n.params()).map(|p| random_like(p, rng)).collect();
    let analytic: f64 = grads.iter().zip(&dir).map(|(g, d)| g.data().iter().zip(d.data()).map(|(a, b)| a * b).sum::<f64>()).sum();
    let plus = value_and_grad(&shifted(nets, &dir, STEP), build).0;
    let minus = value_and_grad(&shifted(nets, &dir, -STEP), build).0;
    let numeric = (plus - minus) / (2.0 * STEP);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn worst_error(name: &str, decoder_out: Activation, make: impl Fn(&mut ChaCha8Rng, &[Mlp]) -> Box<Build>) -> f64 {
    let mut worst: f64 = 0.0;
    for point in 0..POINTS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 * point + name.len() as u64);
        let nets = random_nets(&mut rng, decoder_out);
        let build = make(&mut rng, &nets);
        worst = worst.max(directional_error(&nets, build.as_ref(), &mut rng));
    }
    worst
}

fn data(rng: &mut ChaCha8Rng, rows: usize, unit: bool) -> Tensor {
    let t = prior_sample(rows, M, rng);
    if unit {
        t.map(|v| 1.0 / (1.0 + (-v).exp()))
    } else {
        t
    }
}

pub fn isometry_loss() -> f64 {
    worst_error("isometry", Activation::Identity, |rng, _| {
        let z = prior_sample(8, N, rng);
        let u = unit_sphere(8, N, rng);
        Box::new(move |tape, v| loss_isometry(&v[0], tape.constant(z.clone()), &u))
    })
}

pub fn isometry_loss_at_encoded_points() -> f64 {
    worst_error("isometry_encoded", Activation::Identity, |rng, _| {
        let x = data(rng, 8, false);
        let u = unit_sphere(8, N, rng);
        Box::new(move |tape, v| loss_isometry(&v[0], v[1].forward(tape.constant(x.clone())), &u))
    })
}

pub fn pseudoinverse_loss() -> f64 {
    worst_error("pseudoinverse", Activation::Identity, |rng, _| {
        let x = data(rng, 8, false);
        let u = unit_sphere(8, N, rng);
        Box::new(move |tape, v| loss_pseudoinverse(&v[1], tape.constant(x.clone()), &u))
    })
}

pub fn cross_entropy_reconstruction() -> f64 {
    worst_error("recon_ce", Activation::Sigmoid, |rng, _| {
        let x = data(rng, 8, true);
        Box::new(move |tape, v| loss_recon_ce(&v[0], &v[1], tape.constant(x.clone())))
    })
}

pub fn squared_reconstruction() -> f64 {
    worst_error("recon_sq", Activation::Identity, |rng, _| {
        let x = data(rng, 8, false);
        Box::new(move |tape, v| loss_recon_sq(&v[0], &v[1], tape.constant(x.clone())))
    })
}

pub fn adversarial_data_loss() -> f64 {
    worst_error("adv_data", Activation::Sigmoid, |rng, _| {
        let x = data(rng, 8, true);
        let prior = prior_sample(8, N, rng);
        Box::new(move |tape, v| loss_adv_data(&v[0], &v[2], tape.constant(x.clone()), tape.constant(prior.clone())))
    })
}

pub fn adversarial_latent_loss() -> f64 {
    worst_error("adv_latent", Activation::Sigmoid, |rng, _| {
        let x = data(rng, 8, true);
        let prior = prior_sample(8, N, rng);
        Box::new(move |tape, v| loss_adv_latent(&v[1], &v[3], tape.constant(x.clone()), tape.constant(prior.clone())))
    })
}

pub fn generator_losses() -> f64 {
    worst_error("generators", Activation::Sigmoid, |rng, _| {
        let x = data(rng, 8, true);
        let prior = prior_sample(8, N, rng);
        Box::new(move |tape, v| {
            let gx = generator_loss(&v[2], v[0].forward(tape.constant(prior.clone())));
            let gz = generator_loss(&v[3], v[1].forward(tape.constant(x.clone())));
            gx.add(&gz)
        })
    })
}

fn score_model(rng: &mut ChaCha8Rng, nets: &[Mlp]) -> LikelihoodModel {
    let model = AAEModel::from_parts(nets[0].clone(), nets[1].clone(), nets[2].clone(), nets[3].clone()).unwrap();
    LikelihoodModel::fit(&model, &data(rng, 200, false)).unwrap()
}

fn robust_through_scores(additive: bool) -> impl Fn(&mut ChaCha8Rng, &[Mlp]) -> Box<Build> {
    move |rng, nets| {
        let lm = score_model(rng, nets);
        let inl = data(rng, 8, false);
        let out = data(rng, 8, false).map(|v| 2.0 * v);
        Box::new(move |tape, v| {
            let si = lm.log_px_var(&v[0], &v[1], tape.constant(inl.clone()));
            let so = lm.log_px_var(&v[0], &v[1], tape.constant(out.clone()));
            if additive {
                loss_robust_additive(si, so).unwrap()
            } else {
                loss_robust(si, so).unwrap()
            }
        })
    }
}

pub fn robust_prior_fractional() -> f64 {
    worst_error("robust_fractional", Activation::Identity, robust_through_scores(false))
}

pub fn robust_prior_additive() -> f64 {
    worst_error("robust_additive", Activation::Identity, robust_through_scores(true))
}

/// Both forms on raw score vectors.
pub fn robust_prior_on_scores() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut normal = |n: usize, shift: f64| -> Vec<f64> {
        (0..n).map(|_| 3.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng) + shift).collect::<Vec<f64>>()
    };
    for _ in 0..POINTS {
        let (si, so) = (normal(6, -50.0), normal(5, -60.0));
        let (di, d_o) = (normal(6, 0.0), normal(5, 0.0));
        for additive in [false, true] {
            let eval = |h: f64| {
                let tape = Tape::new();
                let shift = |v: &[f64], d: &[f64]| Tensor::col_vector(&v.iter().zip(d).map(|(a, b)| a + h * b).collect::<Vec<_>>());
                let a = tape.param(shift(&si, &di));
                let b = tape.param(shift(&so, &d_o));
                let l = if additive { loss_robust_additive(a, b) } else { loss_robust(a, b) }.unwrap();
                let v = l.item();
                let g = tape.backward(l).unwrap();
                let dot = |g: Tensor, d: &[f64]| g.data().iter().zip(d).map(|(x, y)| x * y).sum::<f64>();
                (v, dot(g.get_or_zeros(a), &di) + dot(g.get_or_zeros(b), &d_o))
            };
            let analytic = eval(0.0).1;
            let numeric = (eval(STEP).0 - eval(-STEP).0) / (2.0 * STEP);
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}

/// Every loss with its worst relative error over the random points.
pub fn all_losses() -> Vec<(&'static str, f64)> {
    vec![
        ("isometry", isometry_loss()),
        ("isometry_encoded", isometry_loss_at_encoded_points()),
        ("pseudoinverse", pseudoinverse_loss()),
        ("recon_ce", cross_entropy_reconstruction()),
        ("recon_sq", squared_reconstruction()),
        ("adv_data", adversarial_data_loss()),
        ("adv_latent", adversarial_latent_loss()),
        ("generators", generator_losses()),
        ("robust_fractional", robust_prior_fractional()),
        ("robust_additive", robust_prior_additive()),
        ("robust_on_scores", robust_prior_on_scores()),
    ]
}
