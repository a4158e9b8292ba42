use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cumulative signal coefficients `alpha_bar[t] = prod_{i <= t} (1 - beta_i)`
/// for `t = 0..=n_steps`, with `alpha_bar[0] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub n_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    alpha_bar: Vec<f64>,
}

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_MIN: f64 = 1e-4;
pub const DEFAULT_BETA_MAX: f64 = 2e-2;

impl Default for NoiseSchedule {
    fn default() -> Self {
        make_schedule(DEFAULT_STEPS, DEFAULT_BETA_MIN, DEFAULT_BETA_MAX)
            .expect("default schedule is valid")
    }
}

/// Linear beta schedule from `beta_min` to `beta_max` over `n_steps`.
pub fn make_schedule(n_steps: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if n_steps == 0 {
        return Err(Error::InvalidConfig(
            "schedule needs at least one step".into(),
        ));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "beta range must satisfy 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )));
    }
    let mut alpha_bar = Vec::with_capacity(n_steps + 1);
    alpha_bar.push(1.0);
    let mut acc = 1.0;
    for i in 0..n_steps {
        let beta = if n_steps == 1 {
            beta_min
        } else {
            beta_min + (beta_max - beta_min) * i as f64 / (n_steps - 1) as f64
        };
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    Ok(NoiseSchedule {
        n_steps,
        beta_min,
        beta_max,
        alpha_bar,
    })
}

impl NoiseSchedule {
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub(crate) fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.n_steps {
            return Err(Error::Step(format!(
                "timestep {t} outside 1..={}",
                self.n_steps
            )));
        }
        Ok(())
    }
}

/// A strictly decreasing list of timesteps from `n_steps` down to 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepIndices(Vec<usize>);

impl StepIndices {
    pub fn new(steps: Vec<usize>, schedule: &NoiseSchedule) -> Result<Self> {
        if steps.first() != Some(&schedule.n_steps) || steps.last() != Some(&0) || steps.len() < 2 {
            return Err(Error::Step(format!(
                "step indices must run from {} down to 0",
                schedule.n_steps
            )));
        }
        if steps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Step(
                "step indices must be strictly decreasing".into(),
            ));
        }
        Ok(Self(steps))
    }

    /// Every `stride`-th timestep: `n, n - stride, ..., 0`. The final gap is
    /// shortened when `stride` does not divide `n`.
    pub fn strided(schedule: &NoiseSchedule, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidConfig("step stride must be positive".into()));
        }
        let mut steps: Vec<usize> = (0..)
            .map(|i| schedule.n_steps as isize - (i * stride) as isize)
            .take_while(|&t| t > 0)
            .map(|t| t as usize)
            .collect();
        steps.push(0);
        Self::new(steps, schedule)
    }

    pub fn full(schedule: &NoiseSchedule) -> Self {
        Self::strided(schedule, 1).expect("unit stride is valid")
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Consecutive `(t, t_prev)` pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }

    /// Number of denoising steps.
    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
