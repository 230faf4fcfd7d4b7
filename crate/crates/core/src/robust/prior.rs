//! The likelihood-ratio prior on synthesized inliers and outliers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Var;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorForm {
    /// `log E[p(outlier)] − log E[p(inlier)]`.
    #[default]
    Fractional,
    /// `E[log p(outlier)] − E[log p(inlier)]`.
    Additive,
}

fn check<'t>(inlier: &Var<'t>, outlier: &Var<'t>) -> Result<()> {
    if inlier.dims().0 == 0 || outlier.dims().0 == 0 {
        return Err(Error::InvalidArgument("robust prior needs nonempty inlier and outlier batches".into()));
    }
    Ok(())
}

/// Log of the ratio of mean likelihoods, from log scores.
pub fn loss_robust<'t>(inlier_scores: Var<'t>, outlier_scores: Var<'t>) -> Result<Var<'t>> {
    check(&inlier_scores, &outlier_scores)?;
    Ok(outlier_scores.log_mean_exp().sub(&inlier_scores.log_mean_exp()))
}

/// Difference of mean log scores.
pub fn loss_robust_additive<'t>(inlier_scores: Var<'t>, outlier_scores: Var<'t>) -> Result<Var<'t>> {
    check(&inlier_scores, &outlier_scores)?;
    Ok(outlier_scores.mean().sub(&inlier_scores.mean()))
}

pub fn robust_prior<'t>(form: PriorForm, inlier_scores: Var<'t>, outlier_scores: Var<'t>) -> Result<Var<'t>> {
    match form {
        PriorForm::Fractional => loss_robust(inlier_scores, outlier_scores),
        PriorForm::Additive => loss_robust_additive(inlier_scores, outlier_scores),
    }
}
