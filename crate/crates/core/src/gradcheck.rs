//! Central finite-difference checks of the two analytic gradients guidance
//! relies on: the Laban loss with respect to joint positions, and the loss
//! of the implied clean estimate with respect to the condition embedding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    forward_diffuse, sample_flat, to_positions, ConditionEmbedding, Denoiser, NoiseSchedule,
    StepIndices,
};
use crate::error::Result;
use crate::guidance::{make_target, SamplingContext, ScaleVector};
use crate::motion::{
    laban_loss, laban_loss_grad_motion, EndEffectorSet, LabanExtractor, Motion, SmoothingConfig,
};
use crate::rng::{derive_seed, normal_vec, seeded};

pub const MOTION_STEP: f64 = 1e-5;
pub const MOTION_TOLERANCE: f64 = 1e-4;
pub const EMBEDDING_STEP: f64 = 1e-4;
pub const EMBEDDING_TOLERANCE: f64 = 1e-3;

/// Entries smaller than this fraction of the largest gradient entry are
/// compared against that floor rather than their own magnitude.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub name: String,
    pub instances: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest relative error between `analytic` and central differences of `f`
/// around `x` with step `h`.
pub fn max_fd_error(
    analytic: &[f64],
    x: &[f64],
    h: f64,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let floor = RELATIVE_FLOOR * analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut p = x.to_vec();
    let mut worst = 0.0f64;
    for (i, &g) in analytic.iter().enumerate() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p)?;
        p[i] = orig - h;
        let down = f(&p)?;
        p[i] = orig;
        worst = worst.max(relative_error(g, (up - down) / (2.0 * h), floor));
    }
    Ok(worst)
}

fn random_scale(rng: &mut impl Rng) -> Result<ScaleVector> {
    ScaleVector::new(std::array::from_fn(|_| rng.random_range(0.5..2.0)))
}

/// Random 60-frame, 7-joint motions with positions drawn from N(0, 0.2^2);
/// smoothing alternates between the default and disabled.
pub fn check_motion_gradient(instances: usize, seed: u64) -> Result<GradCheck> {
    let names: Vec<String> = (0..7).map(|j| format!("j{j}")).collect();
    let effectors = EndEffectorSet::new(vec![1, 2, 3, 4, 5, 0], 7)?;
    let random_motion = |s: u64| -> Result<Motion> {
        let p = normal_vec(&mut seeded(s), 60 * 7 * 3)
            .into_iter()
            .map(|x| 0.2 * x)
            .collect();
        Motion::new(20.0, names.clone(), p)
    };
    let mut worst = 0.0f64;
    let mut coordinates = 0;
    for i in 0..instances as u64 {
        let smoothing = if i % 2 == 0 {
            SmoothingConfig::default()
        } else {
            SmoothingConfig::disabled()
        };
        let ex = LabanExtractor::new(effectors.clone(), smoothing)?;
        let motion = random_motion(derive_seed(seed, &[0, i]))?;
        let baseline = ex.series(&random_motion(derive_seed(seed, &[1, i]))?)?;
        let target = make_target(
            &baseline,
            &random_scale(&mut seeded(derive_seed(seed, &[2, i])))?,
        );
        let delta = 1e-6;
        let g = laban_loss_grad_motion(&motion, &target, &baseline, &effectors, &smoothing, delta)?;
        let err = max_fd_error(&g, motion.as_slice(), MOTION_STEP, |p| {
            let m = Motion::new(20.0, names.clone(), p.to_vec())?;
            laban_loss(&ex.series(&m)?, &target, &baseline, delta)
        })?;
        worst = worst.max(err);
        coordinates += g.len();
    }
    Ok(GradCheck {
        name: "laban loss w.r.t. motion".into(),
        instances,
        coordinates,
        max_rel_error: worst,
        tolerance: MOTION_TOLERANCE,
    })
}

/// Random timestep, noisy input and condition per instance. The baseline is
/// a short unguided sample of the condition, the target a random rescaling
/// of it, and the loss is that of the clean estimate at `(x_t, t, e)`.
pub fn check_embedding_gradient(
    denoiser: &dyn Denoiser,
    n_conditions: usize,
    schedule: &NoiseSchedule,
    extractor: &LabanExtractor,
    instances: usize,
    seed: u64,
) -> Result<GradCheck> {
    let steps = StepIndices::strided(schedule, schedule.n_steps.div_ceil(10).max(1))?;
    let ctx = SamplingContext {
        denoiser,
        schedule,
        steps: &steps,
        extractor,
    };
    let dim = denoiser.layout().flat_len();
    let delta = 1e-6;
    let mut worst = 0.0f64;
    let mut coordinates = 0;
    for i in 0..instances as u64 {
        let mut rng = seeded(derive_seed(seed, &[3, i]));
        let condition = rng.random_range(0..n_conditions.max(1));
        let e0 = denoiser.condition_embedding(condition)?;
        let x0 = sample_flat(denoiser, &e0, &normal_vec(&mut rng, dim), schedule, &steps)?;
        let baseline = extractor.series(&Motion::from_layout(
            denoiser.layout(),
            to_positions(denoiser, &x0),
        )?)?;
        let target = make_target(&baseline, &random_scale(&mut rng)?);
        let t = rng.random_range(1..=schedule.n_steps);
        let x_t = forward_diffuse(&x0, t, &normal_vec(&mut rng, dim), schedule)?;
        let e = ConditionEmbedding::new(
            e0.as_slice()
                .iter()
                .zip(normal_vec(&mut rng, e0.dim()))
                .map(|(a, b)| a + 0.1 * b)
                .collect(),
        )?;
        let (_, g) = ctx.embedding_loss_grad(&x_t, t, &e, &target, &baseline, delta)?;
        let err = max_fd_error(&g, e.as_slice(), EMBEDDING_STEP, |v| {
            ctx.embedding_loss(
                &x_t,
                t,
                &ConditionEmbedding::new(v.to_vec())?,
                &target,
                &baseline,
                delta,
            )
        })?;
        worst = worst.max(err);
        coordinates += g.len();
    }
    Ok(GradCheck {
        name: "clean-estimate loss w.r.t. embedding".into(),
        instances,
        coordinates,
        max_rel_error: worst,
        tolerance: EMBEDDING_TOLERANCE,
    })
}
