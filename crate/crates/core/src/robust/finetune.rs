use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::boundary::solve_nu0;
use super::prior::{robust_prior, PriorForm};
use super::synth::synthesize;
use crate::aae::{AAEModel, AAETrainConfig, AAETrainer, EpochLog};
use crate::datasets::EvalSet;
use crate::error::{Error, Result};
use crate::likelihood::{project, LikelihoodModel};
use crate::numcore::Tensor;

/// Which inliers the automatic training radius is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSource {
    #[default]
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustConfig {
    /// Fixed training radius. When unset, `epsilon_fraction · mean ν₀`.
    pub epsilon: Option<f64>,
    pub epsilon_fraction: f64,
    pub epsilon_source: EpsilonSource,
    /// Rate of the exponential offset for synthesized outliers.
    pub rate: f64,
    pub lambda_r: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Densities and threshold are refit every this many epochs.
    pub refit_every: usize,
    pub prior: PriorForm,
}

impl Default for RobustConfig {
    fn default() -> Self {
        RobustConfig {
            epsilon: None,
            epsilon_fraction: 0.5,
            epsilon_source: EpsilonSource::Train,
            rate: 5.0,
            lambda_r: 0.001,
            epochs: 30,
            batch_size: 128,
            seed: 0,
            refit_every: 1,
            prior: PriorForm::Fractional,
        }
    }
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("epsilon {e} must be >= 0")));
            }
        }
        if !(self.epsilon_fraction >= 0.0 && self.epsilon_fraction.is_finite()) {
            return Err(Error::Config("epsilon_fraction must be >= 0".into()));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::Config(format!("rate {} must be > 0", self.rate)));
        }
        if !(self.lambda_r >= 0.0 && self.lambda_r.is_finite()) {
            return Err(Error::Config(format!("lambda_r {} must be >= 0", self.lambda_r)));
        }
        if self.batch_size == 0 || self.refit_every == 0 {
            return Err(Error::Config("batch_size and refit_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean boundary radius over the rows of `x`.
pub fn mean_nu0(model: &AAEModel, lm: &LikelihoodModel, x: &Tensor) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::Data("no samples to average the boundary radius over".into()));
    }
    let p = project(model, x)?;
    let mut total = 0.0;
    for i in 0..x.rows() {
        total += solve_nu0(lm, p.z.row(i))?.nu0;
    }
    Ok(total / x.rows() as f64)
}

/// Training radius for `cfg`: the fixed value, or a fraction of the mean
/// boundary radius over training or validation inliers.
pub fn training_epsilon(
    model: &AAEModel,
    lm: &LikelihoodModel,
    train: &Tensor,
    val: &EvalSet,
    cfg: &RobustConfig,
) -> Result<f64> {
    if let Some(e) = cfg.epsilon {
        return Ok(e);
    }
    let nu = match cfg.epsilon_source {
        EpsilonSource::Train => mean_nu0(model, lm, train)?,
        EpsilonSource::Validation => {
            let idx: Vec<usize> = (0..val.len()).filter(|&i| val.labels[i]).collect();
            mean_nu0(model, lm, &val.x.select_rows(&idx))?
        }
    };
    Ok(cfg.epsilon_fraction * nu)
}

fn recalibrate(model: &AAEModel, lm: &mut LikelihoodModel, train: &Tensor, val: &EvalSet) -> Result<f64> {
    lm.refit(model, train)?;
    let scores = lm.log_px(model, &val.x)?;
    lm.calibrate(&scores, &val.labels)
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub model: AAEModel,
    pub lm: LikelihoodModel,
    pub epsilon: f64,
    pub history: Vec<EpochLog>,
}

/// Robust fine-tuning of a pretrained autoencoder with a calibrated
/// likelihood model.
///
/// Each minibatch of training inliers yields a synthetic inlier batch and
/// a synthetic outlier batch. The discriminator and data-generator updates
/// use the synthetic inliers. The joint update of `f` and `g` adds
/// `λ_r · L_r` on the two synthetic batches to the autoencoder objective on
/// the clean minibatch. Densities and threshold are refit periodically and
/// once more at the end.
pub fn finetune_robust(
    model: AAEModel,
    mut lm: LikelihoodModel,
    train: &Tensor,
    val: &EvalSet,
    aae_cfg: &AAETrainConfig,
    cfg: &RobustConfig,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    lm.log_gamma()?;
    if train.rows() == 0 {
        return Err(Error::Data("empty training set".into()));
    }
    let epsilon = training_epsilon(&model, &lm, train, val, cfg)?;
    if cfg.epochs == 0 {
        return Ok(FinetuneOutcome { model, lm, epsilon, history: Vec::new() });
    }
    log::info!("robust fine-tuning with epsilon {epsilon:.4}");
    let trainer_cfg = AAETrainConfig { batch_size: cfg.batch_size, seed: cfg.seed, ..aae_cfg.clone() };
    let mut trainer = AAETrainer::new(model, trainer_cfg)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if epoch > 0 && epoch % cfg.refit_every == 0 {
            recalibrate(&trainer.model, &mut lm, train, val)?;
        }
        let mut idx: Vec<usize> = (0..train.rows()).collect();
        idx.shuffle(trainer.rng());
        let mut total = EpochLog { epoch, ..EpochLog::default() };
        let (mut batches, mut skipped) = (0usize, 0usize);
        for chunk in idx.chunks(cfg.batch_size) {
            let x = train.select_rows(chunk);
            let (current, rng) = trainer.model_and_rng();
            let synth = synthesize(current, &lm, &x, epsilon, cfg.rate, rng)?;
            skipped += synth.skipped;
            if synth.inliers.rows() == 0 {
                continue;
            }
            let mut log = trainer.adversarial_steps(&synth.inliers, epoch)?;
            let lm_ref = &lm;
            let (form, lambda_r) = (cfg.prior, cfg.lambda_r);
            let joint = trainer.joint_step(&x, epoch, |tape, f, g| {
                if lambda_r == 0.0 {
                    return Ok(None);
                }
                let si = lm_ref.log_px_var(f, g, tape.constant(synth.inliers.clone()));
                let so = lm_ref.log_px_var(f, g, tape.constant(synth.outliers.clone()));
                Ok(Some(robust_prior(form, si, so)?.scale(lambda_r)))
            })?;
            log.gen_latent = joint.gen_latent;
            log.isometry = joint.isometry;
            log.pseudoinverse = joint.pseudoinverse;
            log.recon = joint.recon;
            log.extra = joint.extra;
            for (acc, v) in [
                (&mut total.adv_data, log.adv_data),
                (&mut total.adv_latent, log.adv_latent),
                (&mut total.gen_data, log.gen_data),
                (&mut total.gen_latent, log.gen_latent),
                (&mut total.isometry, log.isometry),
                (&mut total.pseudoinverse, log.pseudoinverse),
                (&mut total.recon, log.recon),
                (&mut total.extra, log.extra),
            ] {
                *acc += v;
            }
            batches += 1;
        }
        if batches > 0 {
            let c = 1.0 / batches as f64;
            for v in [
                &mut total.adv_data,
                &mut total.adv_latent,
                &mut total.gen_data,
                &mut total.gen_latent,
                &mut total.isometry,
                &mut total.pseudoinverse,
                &mut total.recon,
                &mut total.extra,
            ] {
                *v *= c;
            }
        }
        if let Some(name) = total.non_finite() {
            return Err(Error::Diverged { epoch, loss: name });
        }
        log::info!(
            "robust epoch {epoch}: recon {:.4} prior {:.4} iso {:.4} skipped {skipped}",
            total.recon,
            total.extra,
            total.isometry
        );
        history.push(total);
    }
    let model = trainer.model;
    recalibrate(&model, &mut lm, train, val)?;
    Ok(FinetuneOutcome { model, lm, epsilon, history })
}
