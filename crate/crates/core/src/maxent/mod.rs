//! Maximum-entropy learners trained with BFGS.
//!
//! [`base`] fits a two-outcome (logistic) model to one label's degrees;
//! [`meta`] fits a softmax model mapping the stacked per-label predictions
//! to a full label distribution. Both minimize a Kullback-Leibler loss plus
//! a small L2 penalty on the weights.

pub mod base;
pub mod bfgs;
pub mod meta;

use serde::{Deserialize, Serialize};

pub use base::{predict_base, train_base, BaseModel, BinaryKlObjective};
pub use bfgs::{bfgs_minimize, FnObjective, Minimum, Objective};
pub use meta::{predict_meta, train_meta, MetaModel, SoftmaxKlObjective};

/// Targets are clipped into `[TARGET_CLIP, 1 - TARGET_CLIP]` inside the base loss.
pub const TARGET_CLIP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub l2_penalty: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            gradient_tolerance: 1e-6,
            max_iterations: 200,
            l2_penalty: 1e-6,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.gradient_tolerance > 0.0) || self.max_iterations == 0 || !(self.l2_penalty > 0.0)
        {
            return Err(crate::LdlError::InvalidArgument(format!(
                "optimizer settings must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `x ln x` with the `0 ln 0 = 0` convention.
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}
