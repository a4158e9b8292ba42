//! Run configuration: defaults, a flat `key = value` file, then command-line
//! overrides, in that order of precedence (last wins).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::{
    make_schedule, NoiseSchedule, StepIndices, TrainingConfig, DEFAULT_BETA_MAX, DEFAULT_BETA_MIN,
};
use crate::error::{Error, Result};
use crate::eval::Method;
use crate::guidance::{tags_to_scale, Component, GuidanceConfig, RawFrameConfig, ScaleVector};
use crate::motion::SmoothingConfig;

/// Every tunable of every command. Defaults follow the reference
/// hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub steps: usize,
    pub stride: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub lr: f64,
    pub betas: (f64, f64),
    pub delta: f64,
    pub k: usize,
    pub persist_adam: bool,
    pub recompute_eps: bool,
    pub max_loss: f64,
    pub max_drift: f64,
    pub lambda: f64,
    pub raw_steps: usize,
    pub raw_lr: f64,
    pub tags: Vec<String>,
    /// Explicit `component=value` overrides applied after the tags.
    pub scale: Vec<String>,
    pub method: Method,
    pub jobs: usize,
    pub against_baseline: bool,
    pub compare_smoothing: bool,
    pub smooth_kernel: usize,
    pub smooth_sigma2: f64,
    pub condition: usize,
    /// Evaluation conditions; empty means every condition of the model.
    pub conditions: Vec<usize>,
    pub repeats: usize,
    pub count: usize,
    pub jitter: bool,
    pub iterations: usize,
    pub batch_size: usize,
    pub train_lr: f64,
    pub hidden: usize,
    pub embed_dim: usize,
    pub instances: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = GuidanceConfig::default();
        let r = RawFrameConfig::default();
        let t = TrainingConfig::default();
        let sm = SmoothingConfig::default();
        Self {
            seed: 0,
            steps: 1000,
            stride: 1,
            beta_min: DEFAULT_BETA_MIN,
            beta_max: DEFAULT_BETA_MAX,
            lr: g.lr,
            betas: g.adam_betas,
            delta: g.delta,
            k: g.steps_per_t,
            persist_adam: g.persist_adam,
            recompute_eps: g.recompute_eps,
            max_loss: g.max_loss,
            max_drift: g.max_embedding_drift,
            lambda: 0.005,
            raw_steps: r.steps,
            raw_lr: r.lr,
            tags: Vec::new(),
            scale: Vec::new(),
            method: Method::Laban,
            jobs: 0,
            against_baseline: false,
            compare_smoothing: false,
            smooth_kernel: sm.kernel_size,
            smooth_sigma2: sm.sigma2,
            condition: 0,
            conditions: Vec::new(),
            repeats: 2,
            count: 20,
            jitter: true,
            iterations: t.iterations,
            batch_size: t.batch_size,
            train_lr: t.lr,
            hidden: t.hidden,
            embed_dim: t.embed_dim,
            instances: 10,
        }
    }
}

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::InvalidConfig(format!("`{key}`: cannot read `{value}` as {expected}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str, expected: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad(key, value, expected))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, value, "a boolean")),
    }
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl RunConfig {
    /// Names accepted by [`RunConfig::set`]; `-` and `_` are interchangeable.
    pub const KEYS: [&'static str; 35] = [
        "seed",
        "steps",
        "stride",
        "beta-min",
        "beta-max",
        "lr",
        "betas",
        "delta",
        "k",
        "persist-adam",
        "recompute-eps",
        "max-loss",
        "max-drift",
        "lambda",
        "raw-steps",
        "raw-lr",
        "tags",
        "scale",
        "method",
        "jobs",
        "against-baseline",
        "compare-smoothing",
        "smooth-kernel",
        "smooth-sigma2",
        "condition",
        "conditions",
        "repeats",
        "count",
        "jitter",
        "iterations",
        "batch-size",
        "train-lr",
        "hidden",
        "embed-dim",
        "instances",
    ];

    /// Sets one value from its textual form. `tags` and `scale` take
    /// comma-separated lists and append.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "seed" => self.seed = num(k, value, "an unsigned integer")?,
            "steps" => self.steps = num(k, value, "a step count")?,
            "stride" => self.stride = num(k, value, "a stride")?,
            "beta-min" => self.beta_min = num(k, value, "a number")?,
            "beta-max" => self.beta_max = num(k, value, "a number")?,
            "lr" => self.lr = num(k, value, "a number")?,
            "betas" => {
                let parts = list(value);
                if parts.len() != 2 {
                    return Err(bad(k, value, "two comma-separated numbers"));
                }
                self.betas = (
                    num(k, &parts[0], "a number")?,
                    num(k, &parts[1], "a number")?,
                );
            }
            "delta" => self.delta = num(k, value, "a number")?,
            "k" => self.k = num(k, value, "an update count")?,
            "persist-adam" => self.persist_adam = flag(k, value)?,
            "recompute-eps" => self.recompute_eps = flag(k, value)?,
            "max-loss" => self.max_loss = num(k, value, "a number")?,
            "max-drift" => self.max_drift = num(k, value, "a number")?,
            "lambda" => self.lambda = num(k, value, "a number")?,
            "raw-steps" => self.raw_steps = num(k, value, "a step count")?,
            "raw-lr" => self.raw_lr = num(k, value, "a number")?,
            "tags" => self.tags.extend(list(value)),
            "scale" => self.scale.extend(list(value)),
            "method" => self.method = Method::parse(value.trim())?,
            "jobs" => self.jobs = num(k, value, "a thread count")?,
            "against-baseline" => self.against_baseline = flag(k, value)?,
            "compare-smoothing" => self.compare_smoothing = flag(k, value)?,
            "smooth-kernel" => self.smooth_kernel = num(k, value, "an odd kernel size")?,
            "smooth-sigma2" => self.smooth_sigma2 = num(k, value, "a number")?,
            "condition" => self.condition = num(k, value, "a condition id")?,
            "conditions" => {
                self.conditions = list(value)
                    .iter()
                    .map(|v| num(k, v, "a list of condition ids"))
                    .collect::<Result<_>>()?
            }
            "repeats" => self.repeats = num(k, value, "a repeat count")?,
            "count" => self.count = num(k, value, "a record count")?,
            "jitter" => self.jitter = flag(k, value)?,
            "iterations" => self.iterations = num(k, value, "an iteration count")?,
            "batch-size" => self.batch_size = num(k, value, "a batch size")?,
            "train-lr" => self.train_lr = num(k, value, "a number")?,
            "hidden" => self.hidden = num(k, value, "a layer width")?,
            "embed-dim" => self.embed_dim = num(k, value, "an embedding size")?,
            "instances" => self.instances = num(k, value, "an instance count")?,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown configuration key `{key}`"
                )))
            }
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "{}:{}: expected `key = value`",
                    origin.display(),
                    n + 1
                ))
            })?;
            self.set(key, value).map_err(|e| {
                Error::InvalidConfig(format!(
                    "{}:{}: {}",
                    origin.display(),
                    n + 1,
                    strip_prefix(&e)
                ))
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config file {}: {e}", path.display()))
        })?;
        self.apply_text(&text, path)
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        make_schedule(self.steps, self.beta_min, self.beta_max)
    }

    pub fn step_indices(&self, schedule: &NoiseSchedule) -> Result<StepIndices> {
        StepIndices::strided(schedule, self.stride)
    }

    pub fn guidance(&self) -> Result<GuidanceConfig> {
        let g = GuidanceConfig {
            lr: self.lr,
            adam_betas: self.betas,
            delta: self.delta,
            steps_per_t: self.k,
            persist_adam: self.persist_adam,
            recompute_eps: self.recompute_eps,
            max_loss: self.max_loss,
            max_embedding_drift: self.max_drift,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn raw_frame(&self) -> RawFrameConfig {
        RawFrameConfig {
            steps: self.raw_steps,
            lr: self.raw_lr,
            betas: self.betas,
            delta: self.delta,
        }
    }

    pub fn smoothing(&self) -> Result<SmoothingConfig> {
        let s = SmoothingConfig {
            kernel_size: self.smooth_kernel,
            sigma2: self.smooth_sigma2,
            enabled: true,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            iterations: self.iterations,
            batch_size: self.batch_size,
            lr: self.train_lr,
            hidden: self.hidden,
            embed_dim: self.embed_dim,
            seed: self.seed,
            ..Default::default()
        }
    }

    /// Tags first, then explicit `component=value` entries, which win.
    pub fn scale_vector(&self) -> Result<ScaleVector> {
        let mut s = tags_to_scale(&self.tags)?;
        for entry in &self.scale {
            let (name, value) = entry.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("scale entry `{entry}` is not `component=value`"))
            })?;
            let component = Component::parse(name.trim())?;
            s = s.with(component, num("scale", value, "a positive number")?)?;
        }
        Ok(s)
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::InvalidConfig(m) => m.clone(),
        other => other.to_string(),
    }
}
