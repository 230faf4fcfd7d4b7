//! Adversarial autoencoder with isometry priors.

mod losses;
mod model;
mod train;

pub use losses::{
    discriminator_objective, generator_loss, loss_adv_data, loss_adv_latent, loss_isometry, loss_isometry_traced,
    loss_pseudoinverse, loss_pseudoinverse_traced, loss_recon_ce, loss_recon_sq, prior_sample, unit_sphere, D_EPS,
};
pub use model::{AAEModel, Architecture, Checkpoint, CHECKPOINT_VERSION};
pub use train::{train_aae, AAETrainConfig, AAETrainer, EpochLog, TrainOutcome};
