use serde::{Deserialize, Serialize};

use super::{AdamParams, AdamState};
use crate::error::{Error, Result};
use crate::motion::{laban_loss_and_grad, LabanExtractor, LabanSeries, Motion};

/// Direct post-hoc optimisation of joint positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawFrameConfig {
    pub steps: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    pub delta: f64,
}

impl Default for RawFrameConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            lr: 0.05,
            betas: (0.7, 0.9),
            delta: 1e-6,
        }
    }
}

/// Adam on the positions of a finished sample against the relative Laban
/// loss, bypassing the diffusion model entirely.
pub fn raw_frame_update(
    x0: &Motion,
    target: &LabanSeries,
    baseline: &LabanSeries,
    extractor: &LabanExtractor,
    cfg: &RawFrameConfig,
) -> Result<Motion> {
    if !(cfg.lr.is_finite() && cfg.lr >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be non-negative, got {}",
            cfg.lr
        )));
    }
    let (n_frames, n_joints) = (x0.n_frames(), x0.n_joints());
    let mut x = x0.as_slice().to_vec();
    let mut state = AdamState::new(x.len());
    let hp = AdamParams::new(cfg.lr, cfg.betas);
    for step in 0..cfg.steps {
        let (loss, grad) = laban_loss_and_grad(
            extractor, &x, n_frames, n_joints, target, baseline, cfg.delta,
        )?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericInstability {
                step,
                t: 0,
                loss,
                lr: cfg.lr,
                reason: "non-finite loss".into(),
            });
        }
        state.update(&mut x, &grad, &hp)?;
    }
    Motion::from_layout(&x0.layout(), x)
}
