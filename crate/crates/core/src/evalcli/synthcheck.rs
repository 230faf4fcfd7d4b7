//! Property checks against analytic ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::aae::{train_aae, unit_sphere, AAEModel, AAETrainConfig, Architecture};
use crate::datasets::{gen_synthetic, SyntheticManifoldSpec};
use crate::error::Result;
use crate::likelihood::{project, GGaussian1D, LatentDensity, LikelihoodModel, NormDensity};
use crate::numcore::{Activation, Tensor};
use crate::robust::{solve_nu0, synthesize, BoundaryStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult { name: name.into(), passed, detail }
    }
}

/// Density of `scale · χ_k`.
pub fn scaled_chi_pdf(k: usize, scale: f64) -> impl Fn(f64) -> f64 {
    let k = k as f64;
    let ln_c = (1.0 - k / 2.0) * std::f64::consts::LN_2 - ln_gamma(k / 2.0);
    move |r: f64| {
        if r <= 0.0 {
            return 0.0;
        }
        let t = r / scale;
        (ln_c + (k - 1.0) * t.ln() - t * t / 2.0).exp() / scale
    }
}

/// Samples from a generalized Gaussian via `|x − μ| / α ~ Gamma(1/β)^{1/β}`.
pub fn sample_ggd<R: Rng + ?Sized>(g: &GGaussian1D, n: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(1.0 / g.beta, 1.0).expect("positive shape");
    (0..n)
        .map(|_| {
            let mag = gamma.sample(rng).powf(1.0 / g.beta) * g.alpha;
            if rng.random_bool(0.5) {
                g.mu + mag
            } else {
                g.mu - mag
            }
        })
        .collect()
}

/// An analytic likelihood model: given latent components, `scale · χ_{m−n}`
/// residual law tabulated on `[0, upper]`.
pub fn analytic_model(components: Vec<GGaussian1D>, ambient: usize, scale: f64, upper: f64) -> Result<LikelihoodModel> {
    let d = ambient - components.len();
    let norm = NormDensity::from_pdf(scaled_chi_pdf(d, scale), upper, 400)?;
    LikelihoodModel::new(LatentDensity { components }, norm, ambient)
}

fn normal_component() -> GGaussian1D {
    GGaussian1D { mu: 0.0, alpha: std::f64::consts::SQRT_2, beta: 2.0 }
}

/// First downward crossing on a uniform grid of `points` over `(0, r_cap]`.
fn dense_grid_boundary(score: impl Fn(f64) -> f64, log_gamma: f64, r_cap: f64, points: usize) -> (f64, BoundaryStatus) {
    let step = r_cap / points as f64;
    let mut seen_above = false;
    let mut last_above = 0.0;
    for k in 1..=points {
        let r = k as f64 * step;
        if score(r) >= log_gamma {
            seen_above = true;
            last_above = r;
        } else if seen_above {
            return (last_above, BoundaryStatus::Root);
        }
    }
    if seen_above {
        (r_cap, BoundaryStatus::AllInlier)
    } else {
        (0.0, BoundaryStatus::AllOutlier)
    }
}

/// Boundary solver against a 10⁶-point grid scan on three analytic models.
///
/// Roots closer to the origin than two bins of the tabulated residual
/// density are reported separately: there the interpolated density of a
/// high-codimension law oscillates faster than the coarse scan resolves.
pub fn check_boundary_oracle() -> Result<CheckResult> {
    let laplace = GGaussian1D { mu: 0.0, alpha: 1.0, beta: 1.0 };
    let suites = [
        ("normal/chi2/m3", analytic_model(vec![normal_component()], 3, 1.0, 6.0)?, 2.0),
        ("laplace/chi3/m4", analytic_model(vec![laplace], 4, 0.5, 3.5)?, 1.0),
        ("normal2/chi8/m10", analytic_model(vec![normal_component(); 2], 10, 0.1, 0.7)?, 0.35),
    ];
    let zs: [f64; 6] = [0.0, 0.5, -1.0, 1.7, -2.5, 6.0];
    let mut worst: f64 = 0.0;
    let mut worst_unresolved: f64 = 0.0;
    let mut mismatches = Vec::new();
    let (mut roots, mut unresolved) = (0, 0);
    for (name, mut lm, r_ref) in suites {
        let n = lm.latent_dim;
        lm.log_gamma = Some(lm.score_parts(&vec![0.0; n], r_ref));
        let lg = lm.log_gamma.unwrap();
        let resolved_from = 2.0 * lm.norm.width();
        for &z0 in &zs {
            let z = vec![z0; n];
            let got = solve_nu0(&lm, &z)?;
            let latent = lm.latent.log_pdf(&z);
            let (nu, status) = dense_grid_boundary(|r| latent + lm.log_orthogonal(r).0, lg, lm.r_cap(), 1_000_000);
            if status != got.status {
                mismatches.push(format!("{name} z={z0}: {:?} vs grid {status:?}", got.status));
                continue;
            }
            let err = (got.nu0 - nu).abs();
            if status == BoundaryStatus::Root && nu < resolved_from {
                unresolved += 1;
                worst_unresolved = worst_unresolved.max(err);
                continue;
            }
            if status == BoundaryStatus::Root {
                roots += 1;
            }
            worst = worst.max(err);
        }
    }
    let passed = mismatches.is_empty() && worst < 1e-4 && roots >= 9;
    let mut detail = format!(
        "max |nu0 - grid| = {worst:.2e} over {roots} roots; {unresolved} sub-bin roots (max {worst_unresolved:.2e})"
    );
    if !mismatches.is_empty() {
        detail.push_str(&format!("; {}", mismatches.join("; ")));
    }
    Ok(CheckResult::new("boundary_vs_dense_grid", passed, detail))
}

/// Orthogonal factor for `m = 3, n = 1` against a 2-D histogram of
/// isotropic residuals, on cells with center radius in `[0.5, 1.5]`.
pub fn check_orthogonal_density(seed: u64) -> Result<CheckResult> {
    const DRAWS: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<[f64; 2]> {
        (0..n).map(|_| [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)]).collect()
    };
    let fit_pts = draw(DRAWS);
    let mc_pts = draw(DRAWS);
    let norms: Vec<f64> = fit_pts.iter().map(|p| p[0].hypot(p[1])).collect();
    let lm = LikelihoodModel::new(LatentDensity { components: vec![normal_component()] }, NormDensity::fit(&norms)?, 3)?;

    let cell = 0.5;
    let half = 4;
    let mut counts = vec![0usize; (2 * half) * (2 * half)];
    let lim = cell * half as f64;
    for p in &mc_pts {
        if p[0].abs() < lim && p[1].abs() < lim {
            let i = ((p[0] + lim) / cell) as usize;
            let j = ((p[1] + lim) / cell) as usize;
            counts[i * 2 * half + j] += 1;
        }
    }
    let sub = 20;
    let mut worst: f64 = 0.0;
    let mut cells = 0;
    for i in 0..2 * half {
        for j in 0..2 * half {
            let x0 = -lim + i as f64 * cell;
            let y0 = -lim + j as f64 * cell;
            let rc = (x0 + cell / 2.0).hypot(y0 + cell / 2.0);
            if !(0.5..=1.5).contains(&rc) {
                continue;
            }
            let h = cell / sub as f64;
            let mut mass = 0.0;
            for a in 0..sub {
                for b in 0..sub {
                    let r = (x0 + (a as f64 + 0.5) * h).hypot(y0 + (b as f64 + 0.5) * h);
                    mass += lm.log_orthogonal(r).0.exp() * h * h;
                }
            }
            let mc = counts[i * 2 * half + j] as f64 / DRAWS as f64;
            worst = worst.max((mass - mc).abs() / mc);
            cells += 1;
        }
    }
    Ok(CheckResult::new(
        "orthogonal_density_vs_2d_histogram",
        worst < 0.10 && cells > 0,
        format!("max relative error {worst:.4} over {cells} cells"),
    ))
}

/// Shape recovery of the generalized Gaussian fit for `β ∈ {1, 2}`.
pub fn check_ggd_recovery(seed: u64) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for beta in [1.0, 2.0] {
        for s in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s));
            let g = GGaussian1D::new(0.4, 1.3, beta)?;
            let (fit, _) = GGaussian1D::fit(&sample_ggd(&g, 10_000, &mut rng))?;
            worst = worst.max((fit.beta - beta).abs());
            detail.push(format!("{:.3}", fit.beta));
        }
    }
    Ok(CheckResult::new(
        "ggd_shape_recovery",
        worst <= 0.2,
        format!("max |beta_hat - beta| = {worst:.3} (fits {})", detail.join(", ")),
    ))
}

/// With `ε = 0`, synthesized inliers score at or above the threshold and
/// synthesized outliers below it, on an exact linear autoencoder with
/// analytic densities.
pub fn check_generation_sides(seed: u64) -> Result<CheckResult> {
    let spec = SyntheticManifoldSpec::linear(2, 10, 0.1);
    let data = gen_synthetic(&spec, 2000, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let model = AAEModel::from_linear_basis(&data.basis, &[8], &mut rng)?;
    let mut lm = analytic_model(vec![normal_component(); 2], 10, 0.1, 0.7)?;
    let noisy = gen_synthetic(&SyntheticManifoldSpec::linear(2, 10, 0.2), 2000, seed.wrapping_add(2))?;
    let mut scores = lm.log_px(&model, &data.x)?;
    let n_in = scores.len();
    scores.extend(lm.log_px(&model, &noisy.x)?);
    let labels: Vec<bool> = (0..scores.len()).map(|i| i < n_in).collect();
    lm.calibrate(&scores, &labels)?;
    let lg = lm.log_gamma()?;

    let synth = synthesize(&model, &lm, &data.x, 0.0, 5.0, &mut rng)?;
    let si = lm.log_px(&model, &synth.inliers)?;
    let so = lm.log_px(&model, &synth.outliers)?;
    let fi = si.iter().filter(|&&s| s >= lg).count() as f64 / si.len().max(1) as f64;
    let fo = so.iter().filter(|&&s| s < lg).count() as f64 / so.len().max(1) as f64;
    Ok(CheckResult::new(
        "generated_sides_at_zero_radius",
        fi >= 0.95 && fo >= 0.95 && !si.is_empty(),
        format!("inliers inside {fi:.4}, outliers outside {fo:.4}, skipped {}", synth.skipped),
    ))
}

/// The oracle suite run by `synth-check`.
pub fn run_synth_check(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_boundary_oracle()?,
        check_orthogonal_density(seed)?,
        check_ggd_recovery(seed)?,
        check_generation_sides(seed)?,
    ])
}

/// Statistics of a model trained on a synthetic linear manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldFit {
    pub mean_ju_norm: f64,
    pub mean_residual: f64,
    pub residual_bound: f64,
}

/// Mean `‖J_f(g(x)) u‖` over `x` with one random unit `u` each, and the mean
/// distance to the learned manifold.
pub fn manifold_statistics<R: Rng + ?Sized>(model: &AAEModel, x: &Tensor, rng: &mut R) -> Result<(f64, f64)> {
    let p = project(model, x)?;
    let u = unit_sphere(x.rows(), model.latent_dim(), rng);
    let mut total = 0.0;
    for i in 0..x.rows() {
        let j = model.f.jacobian_value(p.z.row(i))?;
        let ju = j.matmul(&Tensor::col_vector(u.row(i)))?;
        total += ju.frobenius_norm();
    }
    let n = x.rows() as f64;
    Ok((total / n, p.r.iter().sum::<f64>() / n))
}

/// Train on `n = 2, m = 10, σ = 0.05, N = 5000` and report the learned
/// manifold's isometry and residual.
pub fn manifold_learning(seed: u64, epochs: usize) -> Result<(ManifoldFit, CheckResult)> {
    let sigma = 0.05;
    let spec = SyntheticManifoldSpec::linear(2, 10, sigma);
    let data = gen_synthetic(&spec, 5000, seed)?;
    let arch = Architecture {
        ambient_dim: 10,
        latent_dim: 2,
        encoder_hidden: vec![64, 64],
        discriminator_hidden: vec![64, 32],
        hidden_activation: Activation::Tanh,
        decoder_output: Activation::Identity,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    let model = AAEModel::new(&arch, &mut rng)?;
    let cfg = AAETrainConfig { epochs, batch_size: 64, lr: 1e-3, seed, ..AAETrainConfig::default() };
    let model = train_aae(model, &data.x, &cfg)?.model;
    let (ju, res) = manifold_statistics(&model, &data.x, &mut rng)?;
    let chi8 = std::f64::consts::SQRT_2 * (ln_gamma(4.5) - ln_gamma(4.0)).exp();
    let bound = 2.0 * sigma * chi8;
    let fit = ManifoldFit { mean_ju_norm: ju, mean_residual: res, residual_bound: bound };
    let passed = (0.9..=1.1).contains(&ju) && res <= bound;
    let check = CheckResult::new(
        "manifold_learning",
        passed,
        format!("mean |J u| = {ju:.4}, mean residual = {res:.4} (bound {bound:.4})"),
    );
    Ok((fit, check))
}
