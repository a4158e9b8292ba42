use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-coordinate affine map between joint positions and the space the
/// diffusion process runs in: `position = mean + scale * latent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Normalizer {
    pub fn new(mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if mean.len() != scale.len() {
            return Err(Error::Dimension(format!(
                "normalizer mean has {} values, scale has {}",
                mean.len(),
                scale.len()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) || scale.iter().any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(Error::InvalidConfig(
                "normalizer needs finite means and positive scales".into(),
            ));
        }
        Ok(Self { mean, scale })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    /// Mean motion per coordinate and one spread per `(joint, axis)` column,
    /// pooled over frames and samples and floored at `floor`.
    pub fn fit(samples: &[&[f64]], n_frames: usize, width: usize, floor: f64) -> Result<Self> {
        let n = n_frames * width;
        if samples.is_empty() || samples.iter().any(|s| s.len() != n) {
            return Err(Error::Dataset(
                "normalizer needs equally shaped samples".into(),
            ));
        }
        let count = samples.len() as f64;
        let mut mean = vec![0.0; n];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(s.iter()) {
                *m += v / count;
            }
        }
        let mut var = vec![0.0; width];
        for s in samples {
            for (i, v) in s.iter().enumerate() {
                let d = v - mean[i];
                var[i % width] += d * d;
            }
        }
        let denom = count * n_frames as f64;
        let column: Vec<f64> = var.iter().map(|v| (v / denom).sqrt().max(floor)).collect();
        let scale = (0..n).map(|i| column[i % width]).collect();
        Self::new(mean, scale)
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn to_latent(&self, positions: &[f64]) -> Vec<f64> {
        positions
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((p, m), s)| (p - m) / s)
            .collect()
    }

    pub fn to_positions(&self, latent: &[f64]) -> Vec<f64> {
        latent
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((z, m), s)| m + s * z)
            .collect()
    }

    /// Pulls a gradient with respect to positions back to the latent space.
    pub fn grad_to_latent(&self, grad_positions: &[f64]) -> Vec<f64> {
        grad_positions
            .iter()
            .zip(&self.scale)
            .map(|(g, s)| g * s)
            .collect()
    }
}
