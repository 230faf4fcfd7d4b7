//! Boundary solving, worst-case synthesis, the robust prior, fine-tuning
//! and the closed-form attack.

mod boundary;
mod finetune;
mod prior;
mod synth;

pub use boundary::{solve_boundary, solve_nu0, BoundaryResult, BoundaryStatus, SCAN_POINTS, SCAN_START};
pub use finetune::{finetune_robust, mean_nu0, training_epsilon, EpsilonSource, FinetuneOutcome, RobustConfig};
pub use prior::{loss_robust, loss_robust_additive, robust_prior, PriorForm};
pub use synth::{
    attack, displace, gen_inlier, gen_outlier, inlier_magnitude, normal_direction, normal_directions,
    outlier_magnitude, random_normal, synthesize, SynthBatch, DEGENERATE_RESIDUAL,
};
