use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zero-mean Gaussian model of the latents: variance `eigvals[k]` along the
/// orthonormal row `basis[k]` and `residual_var` in every other direction.
/// Its posterior mean is the linear part of the toy denoiser's clean
/// estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    dim: usize,
    basis: Vec<Vec<f64>>,
    eigvals: Vec<f64>,
    residual_var: f64,
}

impl GaussianPrior {
    /// Isotropic unit variance; its posterior mean is `sqrt(ab_t) x_t`.
    pub fn unit(dim: usize) -> Self {
        Self {
            dim,
            basis: Vec::new(),
            eigvals: Vec::new(),
            residual_var: 1.0,
        }
    }

    pub fn new(
        dim: usize,
        basis: Vec<Vec<f64>>,
        eigvals: Vec<f64>,
        residual_var: f64,
    ) -> Result<Self> {
        let finite = |v: &f64| v.is_finite();
        if basis.len() != eigvals.len()
            || basis
                .iter()
                .any(|b| b.len() != dim || !b.iter().all(finite))
            || !eigvals.iter().all(|v| v.is_finite() && *v > 0.0)
            || !(residual_var.is_finite() && residual_var > 0.0)
        {
            return Err(Error::InvalidConfig(
                "Gaussian prior needs finite basis rows of the motion length and positive variances".into(),
            ));
        }
        Ok(Self {
            dim,
            basis,
            eigvals,
            residual_var,
        })
    }

    /// Keeps at most `max_rank` leading principal directions of `samples`
    /// (taken as zero-mean) and spreads the remaining variance evenly over
    /// the complement, floored at `min_var`.
    pub fn fit(samples: &[Vec<f64>], max_rank: usize, min_var: f64) -> Result<Self> {
        let n = samples.len();
        let dim = samples.first().map_or(0, Vec::len);
        if n == 0 || dim == 0 || samples.iter().any(|s| s.len() != dim) {
            return Err(Error::Dataset(
                "Gaussian prior needs equally shaped samples".into(),
            ));
        }
        let gram = DMatrix::from_fn(n, n, |i, j| {
            samples[i]
                .iter()
                .zip(&samples[j])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        });
        let total: f64 = (0..n).map(|i| gram[(i, i)]).sum();
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let rank = max_rank.min(dim.saturating_sub(1));
        let mut basis = Vec::new();
        let mut eigvals = Vec::new();
        for &k in order.iter().take(rank) {
            let mu = eig.eigenvalues[k];
            if !(mu > min_var) {
                break;
            }
            // Gram eigenvector v maps to the unit direction X^T v / sqrt(n mu).
            let norm = (n as f64 * mu).sqrt();
            let u: Vec<f64> = (0..dim)
                .map(|d| {
                    (0..n)
                        .map(|i| samples[i][d] * eig.eigenvectors[(i, k)])
                        .sum::<f64>()
                        / norm
                })
                .collect();
            basis.push(u);
            eigvals.push(mu);
        }
        let kept: f64 = eigvals.iter().sum();
        let residual_var = ((total - kept) / (dim - basis.len()) as f64).max(min_var);
        Self::new(dim, basis, eigvals, residual_var)
    }

    /// Re-runs the constructor checks, e.g. after deserialisation.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.dim, self.basis, self.eigvals, self.residual_var)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn residual_var(&self) -> f64 {
        self.residual_var
    }

    /// `L_t x` where `L_t = sqrt(ab) S (ab S + (1 - ab) I)^-1` and `S` is the
    /// prior covariance. `L_t` is symmetric, so this is also its transpose.
    pub fn apply(&self, alpha_bar: f64, x: &[f64]) -> Vec<f64> {
        let a = alpha_bar.sqrt();
        let s2 = 1.0 - alpha_bar;
        let gain = |var: f64| a * var / (alpha_bar * var + s2);
        let g_res = gain(self.residual_var);
        let mut out: Vec<f64> = x.iter().map(|v| g_res * v).collect();
        for (u, &lam) in self.basis.iter().zip(&self.eigvals) {
            let c = (gain(lam) - g_res) * u.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
            for (o, p) in out.iter_mut().zip(u) {
                *o += c * p;
            }
        }
        out
    }
}
