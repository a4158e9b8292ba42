//! Two-step Laban-guided generation and the optimisation baselines.

mod adam;
mod baselines;
mod pipeline;
mod tags;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamParams, AdamState, ADAM_EPS};
pub use baselines::{raw_frame_update, RawFrameConfig};
pub use pipeline::{Baseline, GuidedRun, SamplingContext, StepLoss};
pub use tags::{make_target, tags_to_scale, Component, ScaleVector};

/// Embedding-optimisation hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub lr: f64,
    pub adam_betas: (f64, f64),
    /// Stability constant in the relative loss denominator.
    pub delta: f64,
    /// Adam updates per sampling step; 0 disables guidance.
    pub steps_per_t: usize,
    /// Keep Adam moments across sampling steps instead of resetting them.
    pub persist_adam: bool,
    /// Re-run the denoiser with the updated embedding before the DDIM step.
    pub recompute_eps: bool,
    /// A loss above this value is treated as divergence.
    pub max_loss: f64,
    /// Divergence once `|e - e0|` exceeds this multiple of `|e0|`.
    pub max_embedding_drift: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            adam_betas: (0.7, 0.9),
            delta: 1e-6,
            steps_per_t: 1,
            persist_adam: true,
            recompute_eps: true,
            max_loss: 1e9,
            max_embedding_drift: 5.0,
        }
    }
}

impl GuidanceConfig {
    pub fn adam(&self) -> AdamParams {
        AdamParams::new(self.lr, self.adam_betas)
    }

    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.adam_betas;
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be non-negative, got {}",
                self.lr
            )));
        }
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::InvalidConfig(format!(
                "Adam betas must lie in [0, 1), got ({b1}, {b2})"
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if !(self.max_loss > 0.0 && self.max_embedding_drift > 0.0) {
            return Err(Error::InvalidConfig(
                "divergence limits must be positive".into(),
            ));
        }
        Ok(())
    }
}
