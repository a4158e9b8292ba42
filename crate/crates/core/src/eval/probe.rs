use serde::{Deserialize, Serialize};

use super::ChangeProbe;
use crate::error::{Error, Result};
use crate::guidance::{
    make_target, raw_frame_update, Baseline, Component, GuidanceConfig, RawFrameConfig,
    SamplingContext, ScaleVector,
};
use crate::motion::{laban_scalars, Motion};

/// Which controller produces the guided motions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Laban,
    RawFrame,
    Classifier,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Laban => "laban",
            Method::RawFrame => "raw-frame",
            Method::Classifier => "classifier",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "laban" => Ok(Method::Laban),
            "raw-frame" => Ok(Method::RawFrame),
            "classifier" => Ok(Method::Classifier),
            _ => Err(Error::InvalidConfig(format!(
                "unknown method `{s}` (expected laban, raw-frame or classifier)"
            ))),
        }
    }
}

/// Generates a baseline per cell and steers it toward a component's small
/// and large tags with the chosen method.
pub struct GuidanceProbe<'a> {
    pub ctx: SamplingContext<'a>,
    pub method: Method,
    pub guidance: GuidanceConfig,
    pub raw_frame: RawFrameConfig,
    /// Step size of the classifier-guidance baseline.
    pub lambda: f64,
    /// Compare the large-tag run with the unguided baseline instead of the
    /// small-tag run.
    pub against_baseline: bool,
}

impl GuidanceProbe<'_> {
    pub fn steer(&self, base: &Baseline, scale: &ScaleVector) -> Result<Motion> {
        let target = make_target(&base.series, scale);
        match self.method {
            Method::Laban => Ok(self
                .ctx
                .guided_sample(
                    &base.embedding,
                    &base.noise,
                    &target,
                    &base.series,
                    &self.guidance,
                )?
                .motion),
            Method::RawFrame => raw_frame_update(
                &base.motion,
                &target,
                &base.series,
                self.ctx.extractor,
                &self.raw_frame,
            ),
            Method::Classifier => self.ctx.classifier_guided_sample(
                &base.embedding,
                &base.noise,
                &target,
                &base.series,
                self.lambda,
                self.guidance.delta,
            ),
        }
    }

    fn scalars(&self, m: &Motion) -> Result<[f64; 4]> {
        Ok(laban_scalars(&self.ctx.extractor.series(m)?).to_array())
    }
}

impl ChangeProbe for GuidanceProbe<'_> {
    fn cell(&self, row: Component, condition_id: usize, seed: u64) -> Result<([f64; 4], [f64; 4])> {
        let base = self.ctx.generate_baseline(condition_id, seed)?;
        let (_, small, _, large) = row.tags();
        let large_run = self.steer(&base, &ScaleVector::IDENTITY.with(row, large)?)?;
        let initial = if self.against_baseline {
            self.scalars(&base.motion)?
        } else {
            self.scalars(&self.steer(&base, &ScaleVector::IDENTITY.with(row, small)?)?)?
        };
        Ok((initial, self.scalars(&large_run)?))
    }
}
