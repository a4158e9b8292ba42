use serde::{Deserialize, Serialize};

use super::{AdamState, GuidanceConfig};
use crate::diffusion::{
    ddim_reconstruct, grad_to_latent, grad_wrt_embedding, predict_x0, sample_flat, to_positions,
    ConditionEmbedding, Denoiser, NoiseSchedule, StepIndices,
};
use crate::error::{Error, Result};
use crate::motion::{laban_loss_and_grad, LabanExtractor, LabanSeries, Motion};
use crate::rng::{normal_vec, seeded};

/// Everything a sampling run needs besides its embedding and noise.
#[derive(Clone, Copy)]
pub struct SamplingContext<'a> {
    pub denoiser: &'a dyn Denoiser,
    pub schedule: &'a NoiseSchedule,
    pub steps: &'a StepIndices,
    pub extractor: &'a LabanExtractor,
}

/// Step 1 artifacts, reused by Step 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub motion: Motion,
    pub series: LabanSeries,
    pub noise: Vec<f64>,
    pub embedding: ConditionEmbedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub step: usize,
    pub t: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidedRun {
    pub motion: Motion,
    /// Loss before the first update at every sampling step.
    pub losses: Vec<StepLoss>,
    pub embedding: ConditionEmbedding,
}

impl GuidedRun {
    /// `step,t,loss` CSV.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,t,loss\n");
        for l in &self.losses {
            out.push_str(&format!("{},{},{:e}\n", l.step, l.t, l.loss));
        }
        out
    }
}

impl<'a> SamplingContext<'a> {
    fn dim(&self) -> usize {
        self.denoiser.layout().flat_len()
    }

    fn finish(&self, x: Vec<f64>) -> Result<Motion> {
        Motion::from_layout(self.denoiser.layout(), to_positions(self.denoiser, &x))
    }

    /// Relative Laban loss of a diffusion-space clean estimate and its
    /// gradient in the same space.
    fn loss_at(
        &self,
        x0: &[f64],
        target: &LabanSeries,
        baseline: &LabanSeries,
        delta: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let layout = self.denoiser.layout();
        let (loss, g) = laban_loss_and_grad(
            self.extractor,
            &to_positions(self.denoiser, x0),
            layout.n_frames,
            layout.n_joints(),
            target,
            baseline,
            delta,
        )?;
        Ok((loss, grad_to_latent(self.denoiser, g)))
    }

    fn eps(&self, x: &[f64], t: usize, e: &ConditionEmbedding) -> Result<Vec<f64>> {
        let eps = self.denoiser.predict_eps(x, t, e.as_slice())?;
        crate::diffusion::check_eps(&eps, self.dim())?;
        Ok(eps)
    }

    /// Relative Laban loss of the clean estimate implied by `eps`, with the
    /// gradient taken with respect to `eps`.
    fn loss_through_x0(
        &self,
        x_t: &[f64],
        t: usize,
        eps: &[f64],
        target: &LabanSeries,
        baseline: &LabanSeries,
        delta: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let x0 = predict_x0(x_t, t, eps, self.schedule)?;
        let (loss, g_x0) = self.loss_at(&x0, target, baseline, delta)?;
        let ab = self.schedule.alpha_bar(t);
        let k = -(1.0 - ab).sqrt() / ab.sqrt();
        Ok((loss, g_x0.into_iter().map(|g| k * g).collect()))
    }

    /// Loss of the clean estimate the denoiser implies at `(x_t, t, e)`.
    pub fn embedding_loss(
        &self,
        x_t: &[f64],
        t: usize,
        e: &ConditionEmbedding,
        target: &LabanSeries,
        baseline: &LabanSeries,
        delta: f64,
    ) -> Result<f64> {
        let eps = self.eps(x_t, t, e)?;
        Ok(self
            .loss_through_x0(x_t, t, &eps, target, baseline, delta)?
            .0)
    }

    /// [`Self::embedding_loss`] and its exact gradient with respect to `e`.
    pub fn embedding_loss_grad(
        &self,
        x_t: &[f64],
        t: usize,
        e: &ConditionEmbedding,
        target: &LabanSeries,
        baseline: &LabanSeries,
        delta: f64,
    ) -> Result<(f64, Vec<f64>)> {
        grad_wrt_embedding(
            self.denoiser,
            |eps| self.loss_through_x0(x_t, t, eps, target, baseline, delta),
            x_t,
            t,
            e,
        )
    }

    /// Unguided sampling from a seeded noise draw, plus its feature series.
    pub fn generate_baseline(&self, condition_id: usize, seed: u64) -> Result<Baseline> {
        let embedding = self.denoiser.condition_embedding(condition_id)?;
        let noise = normal_vec(&mut seeded(seed), self.dim());
        let motion = self.finish(sample_flat(
            self.denoiser,
            &embedding,
            &noise,
            self.schedule,
            self.steps,
        )?)?;
        let series = self.extractor.series(&motion)?;
        Ok(Baseline {
            motion,
            series,
            noise,
            embedding,
        })
    }

    pub fn sample(&self, e: &ConditionEmbedding, z: &[f64]) -> Result<Motion> {
        self.finish(sample_flat(self.denoiser, e, z, self.schedule, self.steps)?)
    }

    /// Step 2: DDIM sampling from `z` while optimising the embedding with Adam
    /// against the relative Laban loss of each step's clean estimate.
    ///
    /// When the target equals the baseline series the baseline trajectory is
    /// already optimal and the unguided sample is returned unchanged.
    pub fn guided_sample(
        &self,
        e0: &ConditionEmbedding,
        z: &[f64],
        target: &LabanSeries,
        baseline: &LabanSeries,
        cfg: &GuidanceConfig,
    ) -> Result<GuidedRun> {
        cfg.validate()?;
        if e0.dim() != self.denoiser.embed_dim() {
            return Err(Error::Dimension(format!(
                "embedding has {} values, denoiser expects {}",
                e0.dim(),
                self.denoiser.embed_dim()
            )));
        }
        if target.values() == baseline.values() {
            return Ok(GuidedRun {
                motion: self.sample(e0, z)?,
                losses: Vec::new(),
                embedding: e0.clone(),
            });
        }
        let hp = cfg.adam();
        let norm0 = distance(e0.as_slice(), &vec![0.0; e0.dim()]).max(f64::MIN_POSITIVE);
        let mut e = e0.clone();
        let mut adam = AdamState::new(e.dim());
        let mut x = z.to_vec();
        let mut losses = Vec::with_capacity(self.steps.len());
        for (step, (t, t_prev)) in self.steps.pairs().enumerate() {
            if !cfg.persist_adam {
                adam = AdamState::new(e.dim());
            }
            let mut eps = self.eps(&x, t, &e)?;
            for k in 0..cfg.steps_per_t {
                let (loss, grad) =
                    self.embedding_loss_grad(&x, t, &e, target, baseline, cfg.delta)?;
                if k == 0 {
                    losses.push(StepLoss { step, t, loss });
                }
                let reason = if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    Some("non-finite loss".to_string())
                } else if loss > cfg.max_loss {
                    Some(format!("loss above {:e}", cfg.max_loss))
                } else {
                    None
                };
                if let Some(reason) = reason {
                    log::error!(
                        "guidance diverged at step {step} (t = {t}): {reason}, lr {}",
                        cfg.lr
                    );
                    return Err(Error::NumericInstability {
                        step,
                        t,
                        loss,
                        lr: cfg.lr,
                        reason,
                    });
                }
                adam.update(e.as_mut_slice(), &grad, &hp)?;
                let drift = distance(e.as_slice(), e0.as_slice()) / norm0;
                if drift > cfg.max_embedding_drift {
                    let reason = format!(
                        "embedding moved {drift:.2} times its initial norm (limit {})",
                        cfg.max_embedding_drift
                    );
                    log::error!(
                        "guidance diverged at step {step} (t = {t}): {reason}, lr {}",
                        cfg.lr
                    );
                    return Err(Error::NumericInstability {
                        step,
                        t,
                        loss,
                        lr: cfg.lr,
                        reason,
                    });
                }
            }
            if cfg.steps_per_t > 0 && cfg.recompute_eps {
                eps = self.eps(&x, t, &e)?;
            }
            let x0 = predict_x0(&x, t, &eps, self.schedule)?;
            x = ddim_reconstruct(&x0, &eps, t_prev, self.schedule);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericInstability {
                    step,
                    t,
                    loss: f64::NAN,
                    lr: cfg.lr,
                    reason: "non-finite sample".into(),
                });
            }
        }
        Ok(GuidedRun {
            motion: self.finish(x)?,
            losses,
            embedding: e,
        })
    }

    /// Classifier-guidance baseline: every step shifts the clean estimate by
    /// `-lambda * grad L(x0_hat)` before the DDIM reconstruction. The
    /// embedding is never modified.
    pub fn classifier_guided_sample(
        &self,
        e0: &ConditionEmbedding,
        z: &[f64],
        target: &LabanSeries,
        baseline: &LabanSeries,
        lambda: f64,
        delta: f64,
    ) -> Result<Motion> {
        if target.values() == baseline.values() {
            return self.sample(e0, z);
        }
        let mut x = z.to_vec();
        for (step, (t, t_prev)) in self.steps.pairs().enumerate() {
            let eps = self.eps(&x, t, e0)?;
            let mut x0 = predict_x0(&x, t, &eps, self.schedule)?;
            let (loss, g) = self.loss_at(&x0, target, baseline, delta)?;
            if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericInstability {
                    step,
                    t,
                    loss,
                    lr: lambda,
                    reason: "non-finite loss".into(),
                });
            }
            for (xi, gi) in x0.iter_mut().zip(&g) {
                *xi -= lambda * gi;
            }
            x = ddim_reconstruct(&x0, &eps, t_prev, self.schedule);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericInstability {
                    step,
                    t,
                    loss: f64::NAN,
                    lr: lambda,
                    reason: "non-finite sample".into(),
                });
            }
        }
        self.finish(x)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
