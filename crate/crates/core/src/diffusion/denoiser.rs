use serde::{Deserialize, Serialize};

use super::normalize::Normalizer;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::motion::MotionLayout;

/// The conditioning vector fed to a denoiser; the quantity optimised by
/// Laban guidance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEmbedding(Vec<f64>);

impl ConditionEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "condition embedding has non-finite values".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Vector-Jacobian product of a denoiser output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserVjp {
    pub x_t: Vec<f64>,
    pub embedding: Vec<f64>,
}

/// Joint positions of a diffusion-space sample.
pub fn to_positions(denoiser: &dyn Denoiser, latent: &[f64]) -> Vec<f64> {
    match denoiser.normalizer() {
        Some(n) => n.to_positions(latent),
        None => latent.to_vec(),
    }
}

/// Pulls a gradient with respect to positions back to the diffusion space.
pub fn grad_to_latent(denoiser: &dyn Denoiser, grad_positions: Vec<f64>) -> Vec<f64> {
    match denoiser.normalizer() {
        Some(n) => n.grad_to_latent(&grad_positions),
        None => grad_positions,
    }
}

/// An ε-prediction network `(x_t, t, e) -> eps_hat`.
///
/// Implementations must be deterministic and must provide exact
/// vector-Jacobian products with respect to both `x_t` and `e`.
pub trait Denoiser: Sync {
    /// Shape of the motions this denoiser produces.
    fn layout(&self) -> &MotionLayout;

    fn embed_dim(&self) -> usize;

    fn predict_eps(&self, x_t: &[f64], t: usize, e: &[f64]) -> Result<Vec<f64>>;

    /// Returns `(d/dx_t, d/de)` of `<upstream, predict_eps(x_t, t, e)>`.
    fn eps_vjp(&self, x_t: &[f64], t: usize, e: &[f64], upstream: &[f64]) -> Result<DenoiserVjp>;

    /// Map from the diffusion space to joint positions; `None` means the
    /// diffusion runs directly on positions.
    fn normalizer(&self) -> Option<&Normalizer> {
        None
    }

    fn condition_embedding(&self, condition_id: usize) -> Result<ConditionEmbedding>;
}

/// Exact gradient of `loss_fn(predict_eps(x_t, t, e))` with respect to `e`.
///
/// `loss_fn` receives the noise prediction and returns the scalar loss with
/// its gradient with respect to that prediction.
pub fn grad_wrt_embedding<F>(
    denoiser: &dyn Denoiser,
    loss_fn: F,
    x_t: &[f64],
    t: usize,
    e: &ConditionEmbedding,
) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let eps = denoiser.predict_eps(x_t, t, e.as_slice())?;
    let (loss, upstream) = loss_fn(&eps)?;
    if upstream.len() != eps.len() {
        return Err(Error::Contract(format!(
            "loss gradient has {} entries for a {}-dimensional denoiser output",
            upstream.len(),
            eps.len()
        )));
    }
    let vjp = denoiser.eps_vjp(x_t, t, e.as_slice(), &upstream)?;
    Ok((loss, vjp.embedding))
}

/// Denoiser that always predicts the noise consistent with a fixed clean
/// sample `x0*`, so DDIM sampling returns `x0*` from any starting noise.
/// It ignores the embedding.
#[derive(Debug, Clone)]
pub struct PinnedDenoiser {
    layout: MotionLayout,
    schedule: NoiseSchedule,
    target: Vec<f64>,
    n_conditions: usize,
    embed_dim: usize,
}

impl PinnedDenoiser {
    pub fn new(
        layout: MotionLayout,
        schedule: NoiseSchedule,
        target: Vec<f64>,
        n_conditions: usize,
        embed_dim: usize,
    ) -> Result<Self> {
        if target.len() != layout.flat_len() {
            return Err(Error::Dimension(format!(
                "pinned sample has {} values, layout needs {}",
                target.len(),
                layout.flat_len()
            )));
        }
        Ok(Self {
            layout,
            schedule,
            target,
            n_conditions,
            embed_dim,
        })
    }

    fn check(&self, x_t: &[f64], t: usize) -> Result<()> {
        self.schedule.check_t(t)?;
        if x_t.len() != self.target.len() {
            return Err(Error::Dimension(format!(
                "x_t has {} values, expected {}",
                x_t.len(),
                self.target.len()
            )));
        }
        Ok(())
    }
}

impl Denoiser for PinnedDenoiser {
    fn layout(&self) -> &MotionLayout {
        &self.layout
    }

    fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn predict_eps(&self, x_t: &[f64], t: usize, _e: &[f64]) -> Result<Vec<f64>> {
        self.check(x_t, t)?;
        let ab = self.schedule.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(x_t
            .iter()
            .zip(&self.target)
            .map(|(&x, &x0)| (x - a * x0) / b)
            .collect())
    }

    fn eps_vjp(&self, x_t: &[f64], t: usize, _e: &[f64], upstream: &[f64]) -> Result<DenoiserVjp> {
        self.check(x_t, t)?;
        let b = (1.0 - self.schedule.alpha_bar(t)).sqrt();
        Ok(DenoiserVjp {
            x_t: upstream.iter().map(|g| g / b).collect(),
            embedding: vec![0.0; self.embed_dim],
        })
    }

    fn condition_embedding(&self, condition_id: usize) -> Result<ConditionEmbedding> {
        if condition_id >= self.n_conditions {
            return Err(Error::UnknownCondition(condition_id));
        }
        ConditionEmbedding::new(vec![condition_id as f64; self.embed_dim])
    }
}
