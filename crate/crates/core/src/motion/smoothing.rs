use serde::{Deserialize, Serialize};

use super::Motion;
use crate::error::{Error, Result};

/// Gaussian smoothing of joint trajectories, applied to positions before
/// differencing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub kernel_size: usize,
    pub sigma2: f64,
    pub enabled: bool,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            kernel_size: 11,
            sigma2: 10.0,
            enabled: true,
        }
    }
}

impl SmoothingConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "smoothing kernel size must be odd and positive, got {}",
                self.kernel_size
            )));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "smoothing sigma^2 must be positive, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }
}

/// Normalised Gaussian weights `w_i ∝ exp(-(i - h)^2 / (2 sigma^2))`,
/// `h = kernel_size / 2`.
pub fn gaussian_kernel(cfg: &SmoothingConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let half = (cfg.kernel_size / 2) as f64;
    let raw: Vec<f64> = (0..cfg.kernel_size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * cfg.sigma2)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Smooths every joint coordinate over time with replicate padding.
pub fn gaussian_smooth(motion: &Motion, cfg: &SmoothingConfig) -> Result<Motion> {
    if !cfg.enabled {
        cfg.validate()?;
        return Ok(motion.clone());
    }
    let kernel = gaussian_kernel(cfg)?;
    let out = smooth_columns(
        motion.as_slice(),
        motion.n_frames(),
        motion.n_joints() * 3,
        &kernel,
    );
    Motion::new(motion.fps(), motion.joint_names().to_vec(), out)
}

/// Convolves each of `width` interleaved columns of a frame-major buffer.
pub(crate) fn smooth_columns(
    data: &[f64],
    n_frames: usize,
    width: usize,
    kernel: &[f64],
) -> Vec<f64> {
    let half = kernel.len() / 2;
    let last = n_frames as isize - 1;
    let mut out = vec![0.0; data.len()];
    for t in 0..n_frames {
        let row = &mut out[t * width..(t + 1) * width];
        for (i, &w) in kernel.iter().enumerate() {
            let src = (t as isize + i as isize - half as isize).clamp(0, last) as usize;
            let src_row = &data[src * width..(src + 1) * width];
            for (o, &x) in row.iter_mut().zip(src_row) {
                *o += w * x;
            }
        }
    }
    out
}

/// Adjoint of [`smooth_columns`]: maps a gradient on the smoothed buffer to a
/// gradient on the raw buffer.
pub(crate) fn smooth_columns_adjoint(
    grad: &[f64],
    n_frames: usize,
    width: usize,
    kernel: &[f64],
) -> Vec<f64> {
    let half = kernel.len() / 2;
    let last = n_frames as isize - 1;
    let mut out = vec![0.0; grad.len()];
    for t in 0..n_frames {
        let g_row = &grad[t * width..(t + 1) * width];
        for (i, &w) in kernel.iter().enumerate() {
            let src = (t as isize + i as isize - half as isize).clamp(0, last) as usize;
            let dst = &mut out[src * width..(src + 1) * width];
            for (o, &g) in dst.iter_mut().zip(g_row) {
                *o += w * g;
            }
        }
    }
    out
}
