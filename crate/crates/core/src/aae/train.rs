use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{
    discriminator_objective, generator_loss, loss_isometry_traced, loss_pseudoinverse_traced, prior_sample,
    recon_sq, unit_sphere,
};
use super::model::AAEModel;
use crate::error::{Error, Result};
use crate::numcore::{Activation, AdamState, Mlp, MlpVars, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AAETrainConfig {
    /// Weight of the isometry and pseudo-inverse priors.
    pub lambda_i: f64,
    /// Weight of the autoencoder terms against the adversarial ones.
    pub lambda_a: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Unit-sphere draws per sample for the Jacobian priors.
    pub sphere_samples: usize,
}

impl Default for AAETrainConfig {
    fn default() -> Self {
        AAETrainConfig { lambda_i: 1.0, lambda_a: 100.0, lr: 2e-4, batch_size: 128, epochs: 20, seed: 0, sphere_samples: 1 }
    }
}

impl AAETrainConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.lambda_i) || !finite_nonneg(self.lambda_a) {
            return Err(Error::Config("lambda_i and lambda_a must be >= 0".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be > 0", self.lr)));
        }
        if self.batch_size == 0 || self.sphere_samples == 0 {
            return Err(Error::Config("batch_size and sphere_samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean per-batch losses over one epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Objective ascended by `D_x`.
    pub adv_data: f64,
    /// Objective ascended by `D_z`.
    pub adv_latent: f64,
    pub gen_data: f64,
    pub gen_latent: f64,
    pub isometry: f64,
    pub pseudoinverse: f64,
    pub recon: f64,
    /// Extra term supplied to the joint step (the robust prior when fine-tuning).
    pub extra: f64,
}

impl EpochLog {
    fn add(&mut self, o: &EpochLog) {
        self.adv_data += o.adv_data;
        self.adv_latent += o.adv_latent;
        self.gen_data += o.gen_data;
        self.gen_latent += o.gen_latent;
        self.isometry += o.isometry;
        self.pseudoinverse += o.pseudoinverse;
        self.recon += o.recon;
        self.extra += o.extra;
    }

    fn scale(&mut self, c: f64) {
        for v in [
            &mut self.adv_data,
            &mut self.adv_latent,
            &mut self.gen_data,
            &mut self.gen_latent,
            &mut self.isometry,
            &mut self.pseudoinverse,
            &mut self.recon,
            &mut self.extra,
        ] {
            *v *= c;
        }
    }

    /// Name of the first non-finite entry, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("adv_data", self.adv_data),
            ("adv_latent", self.adv_latent),
            ("gen_data", self.gen_data),
            ("gen_latent", self.gen_latent),
            ("isometry", self.isometry),
            ("pseudoinverse", self.pseudoinverse),
            ("recon", self.recon),
            ("extra", self.extra),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// The model, one Adam state per network, and the random stream.
#[derive(Debug, Clone)]
pub struct AAETrainer {
    pub model: AAEModel,
    pub cfg: AAETrainConfig,
    adam_f: AdamState,
    adam_g: AdamState,
    adam_dx: AdamState,
    adam_dz: AdamState,
    rng: ChaCha8Rng,
}

fn adam_for(net: &Mlp, lr: f64) -> AdamState {
    AdamState::with_betas(&net.params(), lr, 0.5, 0.999, 1e-8)
}

fn step(adam: &mut AdamState, net: &mut Mlp, vars: &MlpVars<'_>, grads: &crate::numcore::Gradients) -> Result<()> {
    adam.step(net.params_mut(), &vars.grads(grads))
}

fn diverged(epoch: usize, loss: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::Diverged { epoch, loss },
        other => other,
    }
}

impl AAETrainer {
    pub fn new(model: AAEModel, cfg: AAETrainConfig) -> Result<Self> {
        cfg.validate()?;
        let lr = cfg.lr;
        Ok(AAETrainer {
            adam_f: adam_for(&model.f, lr),
            adam_g: adam_for(&model.g, lr),
            adam_dx: adam_for(&model.dx, lr),
            adam_dz: adam_for(&model.dz, lr),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            model,
            cfg,
        })
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// The current model alongside the random stream.
    pub fn model_and_rng(&mut self) -> (&AAEModel, &mut ChaCha8Rng) {
        (&self.model, &mut self.rng)
    }

    /// Discriminator and generator updates (a)–(c): `D_x` ascends, `f`
    /// descends its adversarial loss, `D_z` ascends.
    pub fn adversarial_steps(&mut self, x: &Tensor, epoch: usize) -> Result<EpochLog> {
        let (rows, n) = (x.rows(), self.model.latent_dim());
        let mut log = EpochLog::default();

        let prior = prior_sample(rows, n, &mut self.rng);
        {
            let tape = Tape::new();
            let dx = self.model.dx.register(&tape, true);
            let fake = tape.constant(self.model.f.forward(&prior).map_err(diverged(epoch, "decoder"))?);
            let obj = discriminator_objective(&dx, tape.constant(x.clone()), fake);
            log.adv_data = obj.item();
            let grads = tape.backward(obj.neg()).map_err(diverged(epoch, "adv_data"))?;
            step(&mut self.adam_dx, &mut self.model.dx, &dx, &grads)?;
        }

        let prior = prior_sample(rows, n, &mut self.rng);
        {
            let tape = Tape::new();
            let f = self.model.f.register(&tape, true);
            let dx = self.model.dx.register(&tape, false);
            let loss = generator_loss(&dx, f.forward(tape.constant(prior)));
            log.gen_data = loss.item();
            let grads = tape.backward(loss).map_err(diverged(epoch, "gen_data"))?;
            step(&mut self.adam_f, &mut self.model.f, &f, &grads)?;
        }

        let prior = prior_sample(rows, n, &mut self.rng);
        {
            let tape = Tape::new();
            let dz = self.model.dz.register(&tape, true);
            let fake = tape.constant(self.model.g.forward(x).map_err(diverged(epoch, "encoder"))?);
            let obj = discriminator_objective(&dz, tape.constant(prior), fake);
            log.adv_latent = obj.item();
            let grads = tape.backward(obj.neg()).map_err(diverged(epoch, "adv_latent"))?;
            step(&mut self.adam_dz, &mut self.model.dz, &dz, &grads)?;
        }
        Ok(log)
    }

    /// Joint update (d) of `f` and `g` on
    /// `λ_a (λ_I (L_I + L_P) + L_rec) − E log D_z(g(x))`, plus whatever
    /// `extra` adds (already weighted).
    pub fn joint_step<E>(&mut self, x: &Tensor, epoch: usize, extra: E) -> Result<EpochLog>
    where
        E: for<'t> FnOnce(&'t Tape, &MlpVars<'t>, &MlpVars<'t>) -> Result<Option<Var<'t>>>,
    {
        let (rows, n) = (x.rows(), self.model.latent_dim());
        let k = self.cfg.sphere_samples;
        let u_f: Vec<Tensor> = (0..k).map(|_| unit_sphere(rows, n, &mut self.rng)).collect();
        let u_g: Vec<Tensor> = (0..k).map(|_| unit_sphere(rows, n, &mut self.rng)).collect();
        let mut log = EpochLog::default();

        let tape = Tape::new();
        let f = self.model.f.register(&tape, true);
        let g = self.model.g.register(&tape, true);
        let dz = self.model.dz.register(&tape, false);
        let xv = tape.constant(x.clone());
        let g_tr = g.trace(xv);
        let f_tr = f.trace(g_tr.out);
        let recon = if self.model.f.output_activation() == Activation::Sigmoid {
            f_tr.out.bce_mean(x)
        } else {
            recon_sq(xv, f_tr.out)
        };
        let mut iso = loss_isometry_traced(&f, &f_tr, &u_f[0]);
        let mut pinv = loss_pseudoinverse_traced(&g, &g_tr, &u_g[0]);
        for i in 1..k {
            iso = iso.add(&loss_isometry_traced(&f, &f_tr, &u_f[i]));
            pinv = pinv.add(&loss_pseudoinverse_traced(&g, &g_tr, &u_g[i]));
        }
        let (iso, pinv) = (iso.scale(1.0 / k as f64), pinv.scale(1.0 / k as f64));
        let gen_latent = generator_loss(&dz, g_tr.out);
        let ae = iso.add(&pinv).scale(self.cfg.lambda_i).add(&recon).scale(self.cfg.lambda_a);
        let mut total = ae.add(&gen_latent);
        if let Some(e) = extra(&tape, &f, &g)? {
            log.extra = e.item();
            total = total.add(&e);
        }
        log.isometry = iso.item();
        log.pseudoinverse = pinv.item();
        log.recon = recon.item();
        log.gen_latent = gen_latent.item();
        let grads = tape.backward(total).map_err(diverged(epoch, "joint"))?;
        step(&mut self.adam_f, &mut self.model.f, &f, &grads)?;
        step(&mut self.adam_g, &mut self.model.g, &g, &grads)?;
        Ok(log)
    }

    /// One pass over `data` in shuffled minibatches.
    pub fn epoch(&mut self, data: &Tensor, epoch: usize) -> Result<EpochLog> {
        let mut idx: Vec<usize> = (0..data.rows()).collect();
        idx.shuffle(&mut self.rng);
        let mut total = EpochLog::default();
        let mut batches = 0;
        for chunk in idx.chunks(self.cfg.batch_size) {
            let x = data.select_rows(chunk);
            let mut log = self.adversarial_steps(&x, epoch)?;
            let joint = self.joint_step(&x, epoch, |_, _, _| Ok(None))?;
            log.gen_latent = joint.gen_latent;
            log.isometry = joint.isometry;
            log.pseudoinverse = joint.pseudoinverse;
            log.recon = joint.recon;
            total.add(&log);
            batches += 1;
        }
        total.scale(1.0 / batches.max(1) as f64);
        total.epoch = epoch;
        if let Some(name) = total.non_finite() {
            return Err(Error::Diverged { epoch, loss: name });
        }
        Ok(total)
    }
}

/// Trained model plus per-epoch loss history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AAEModel,
    pub history: Vec<EpochLog>,
}

/// Train `model` on the rows of `data` for `cfg.epochs` epochs.
pub fn train_aae(model: AAEModel, data: &Tensor, cfg: &AAETrainConfig) -> Result<TrainOutcome> {
    if data.rows() == 0 {
        return Err(Error::Data("empty training set".into()));
    }
    if data.cols() != model.ambient_dim() {
        return Err(Error::shape("train_aae", format!("data has {} columns, model expects {}", data.cols(), model.ambient_dim())));
    }
    let mut trainer = AAETrainer::new(model, cfg.clone())?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let log = trainer.epoch(data, epoch)?;
        log::info!(
            "aae epoch {epoch}: recon {:.4} iso {:.4} pinv {:.4} D_x {:.4} D_z {:.4} gen_x {:.4} gen_z {:.4}",
            log.recon,
            log.isometry,
            log.pseudoinverse,
            log.adv_data,
            log.adv_latent,
            log.gen_data,
            log.gen_latent
        );
        history.push(log);
    }
    Ok(TrainOutcome { model: trainer.model, history })
}
