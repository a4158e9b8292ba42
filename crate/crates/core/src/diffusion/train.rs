use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::normalize::Normalizer;
use super::prior::GaussianPrior;
use super::schedule::NoiseSchedule;
use super::toy::{ToyDenoiser, ToyShape, TIME_FEATURES};
use crate::error::{Error, Result};
use crate::guidance::{AdamParams, AdamState};
use crate::motion::{Motion, MotionLayout};
use crate::rng::{normal_vec, seeded};

/// Labelled motions of a common shape.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    layout: MotionLayout,
    effectors: Vec<usize>,
    n_conditions: usize,
    samples: Vec<(Vec<f64>, usize)>,
}

impl TrainingSet {
    pub fn new(motions: Vec<(Motion, usize)>, effectors: Vec<usize>) -> Result<Self> {
        let first = motions
            .first()
            .ok_or_else(|| Error::Dataset("training set is empty".into()))?;
        let layout = first.0.layout();
        for (i, (m, _)) in motions.iter().enumerate() {
            if m.layout() != layout {
                return Err(Error::Dataset(format!(
                    "record {i} has {} frames x {} joints, expected {} x {}",
                    m.n_frames(),
                    m.n_joints(),
                    layout.n_frames,
                    layout.n_joints()
                )));
            }
        }
        let n_conditions = motions.iter().map(|(_, c)| c + 1).max().unwrap_or(0);
        Ok(Self {
            layout,
            effectors,
            n_conditions,
            samples: motions
                .into_iter()
                .map(|(m, c)| (m.into_flat(), c))
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_conditions(&self) -> usize {
        self.n_conditions
    }

    pub fn layout(&self) -> &MotionLayout {
        &self.layout
    }
}

/// Variance floor of the fitted Gaussian prior, in latent units.
pub const PRIOR_MIN_VAR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr` (cosine decay).
    pub lr_final_ratio: f64,
    pub hidden: usize,
    pub embed_dim: usize,
    /// Lower bound on the per-column position spread used for
    /// normalisation, in meters; 0 disables normalisation.
    pub norm_floor: f64,
    /// Principal directions kept by the Gaussian prior behind the linear
    /// part of the clean estimate; 0 keeps a unit prior.
    pub prior_rank: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            batch_size: 64,
            lr: 1e-3,
            lr_final_ratio: 0.01,
            hidden: 128,
            embed_dim: 16,
            norm_floor: 0.01,
            prior_rank: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub denoiser: ToyDenoiser,
    /// Mean minibatch ε-MSE of every iteration.
    pub losses: Vec<f64>,
}

/// Minibatch Adam on `E || eps_theta(x_t, t, c) - eps ||^2` with uniform
/// `t` and Gaussian `eps`, the embedding table trained jointly. Positions
/// are normalised per column before diffusion.
pub fn train_denoiser(
    set: &TrainingSet,
    schedule: &NoiseSchedule,
    cfg: &TrainingConfig,
) -> Result<TrainedModel> {
    if set.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.lr >= 0.0) {
        return Err(Error::InvalidConfig(
            "batch size and learning rate must be positive".into(),
        ));
    }
    let shape = ToyShape {
        hidden: cfg.hidden,
        embed_dim: cfg.embed_dim,
        n_conditions: set.n_conditions,
    };
    let dim = set.layout.flat_len();
    let normalizer = if cfg.norm_floor > 0.0 {
        let views: Vec<&[f64]> = set.samples.iter().map(|(x, _)| x.as_slice()).collect();
        Normalizer::fit(
            &views,
            set.layout.n_frames,
            set.layout.n_joints() * 3,
            cfg.norm_floor,
        )?
    } else {
        Normalizer::identity(dim)
    };
    let latents: Vec<Vec<f64>> = set
        .samples
        .iter()
        .map(|(x, _)| normalizer.to_latent(x))
        .collect();
    let mut model = ToyDenoiser::init(
        set.layout.clone(),
        set.effectors.clone(),
        schedule.clone(),
        shape,
        cfg.seed,
    )?
    .with_normalizer(normalizer)?;
    if cfg.prior_rank > 0 {
        model = model.with_prior(GaussianPrior::fit(&latents, cfg.prior_rank, PRIOR_MIN_VAR)?)?;
    }
    let mut states: Vec<AdamState> = model
        .params
        .tensors()
        .iter()
        .map(|t| AdamState::new(t.len()))
        .collect();
    let mut rng = seeded(cfg.seed ^ 0x7261_696E);
    let mut losses = Vec::with_capacity(cfg.iterations);
    let b = cfg.batch_size;

    for it in 0..cfg.iterations {
        let mut x = Array2::zeros((b, dim));
        let mut eps = Array2::zeros((b, dim));
        let mut e = Array2::zeros((b, cfg.embed_dim));
        let mut ts = Vec::with_capacity(b);
        let mut conds = Vec::with_capacity(b);
        for row in 0..b {
            let k = rng.random_range(0..set.samples.len());
            let (x0, c) = (&latents[k], &set.samples[k].1);
            let t = rng.random_range(1..=schedule.n_steps);
            let noise = normal_vec(&mut rng, dim);
            let ab = schedule.alpha_bar(t);
            let (a, sd) = (ab.sqrt(), (1.0 - ab).sqrt());
            for i in 0..dim {
                x[[row, i]] = a * x0[i] + sd * noise[i];
                eps[[row, i]] = noise[i];
            }
            e.row_mut(row).assign(&model.params.embeddings.row(*c));
            ts.push(t);
            conds.push(*c);
        }

        let cache = model.forward(x.view(), &ts, e.view());
        let pred = model.eps_from_clean(x.view(), &ts, &cache.clean);
        let diff = pred - &eps;
        let n = (b * dim) as f64;
        losses.push(diff.iter().map(|d| d * d).sum::<f64>() / n);

        let mut d_out = diff * (2.0 / n);
        for (row, &t) in ts.iter().enumerate() {
            let ab = schedule.alpha_bar(t);
            let k = -ab.sqrt();
            d_out.row_mut(row).mapv_inplace(|v| v * k);
        }
        let (mut grads, du) = model.backward(&cache, &d_out, dim + TIME_FEATURES);
        for (row, &c) in conds.iter().enumerate() {
            let mut target = grads.embeddings.row_mut(c);
            target += &du.slice(s![row, ..]);
        }

        let progress = it as f64 / cfg.iterations.max(1) as f64;
        let lr_final = cfg.lr * cfg.lr_final_ratio;
        let lr =
            lr_final + 0.5 * (cfg.lr - lr_final) * (1.0 + (std::f64::consts::PI * progress).cos());
        let hp = AdamParams::new(lr, (0.9, 0.999));
        for ((p, g), st) in model
            .params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(&mut states)
        {
            st.update(p, g, &hp)?;
        }
    }
    Ok(TrainedModel {
        denoiser: model,
        losses,
    })
}

/// Mean ε-prediction MSE over `draws` fixed random `(sample, t, eps)` triples.
pub fn eps_mse(denoiser: &ToyDenoiser, set: &TrainingSet, seed: u64, draws: usize) -> Result<f64> {
    use super::denoiser::Denoiser;
    let mut rng = seeded(seed);
    let schedule = denoiser.schedule();
    let mut total = 0.0;
    let dim = set.layout.flat_len();
    for _ in 0..draws {
        let (x0, c) = &set.samples[rng.random_range(0..set.samples.len())];
        let t = rng.random_range(1..=schedule.n_steps);
        let noise = normal_vec(&mut rng, dim);
        let x0 = denoiser.normalizer_ref().to_latent(x0);
        let xt = super::ddim::forward_diffuse(&x0, t, &noise, schedule)?;
        let e = denoiser.condition_embedding(*c)?;
        let pred = denoiser.predict_eps(&xt, t, e.as_slice())?;
        total += pred
            .iter()
            .zip(&noise)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / dim as f64;
    }
    Ok(total / draws as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("j{j}")).collect()
    }

    fn wave(phase: f64, amp: f64) -> Motion {
        let p = (0..8)
            .flat_map(|t| {
                let x = amp * (0.6 * t as f64 + phase).sin();
                [x, 0.5, -x, 0.2 * x, 1.0, 0.0]
            })
            .collect();
        Motion::new(20.0, names(2), p).unwrap()
    }

    fn quick(iterations: usize) -> TrainingConfig {
        TrainingConfig {
            iterations,
            batch_size: 16,
            lr: 3e-3,
            hidden: 32,
            embed_dim: 4,
            ..Default::default()
        }
    }

    #[test]
    fn heterogeneous_shapes_are_rejected() {
        let short = Motion::new(20.0, names(2), vec![0.0; 5 * 6]).unwrap();
        let err = TrainingSet::new(vec![(wave(0.0, 0.3), 0), (short, 1)], vec![0]).unwrap_err();
        assert!(matches!(err, Error::Dataset(_)));
    }

    #[test]
    fn zero_iterations_return_initialisation() {
        let set = TrainingSet::new(vec![(wave(0.0, 0.3), 0)], vec![0]).unwrap();
        let s = NoiseSchedule::default();
        let cfg = quick(0);
        let trained = train_denoiser(&set, &s, &cfg).unwrap();
        let init = ToyDenoiser::init(
            set.layout().clone(),
            vec![0],
            s,
            ToyShape {
                hidden: 32,
                embed_dim: 4,
                n_conditions: 1,
            },
            cfg.seed,
        )
        .unwrap();
        assert_eq!(trained.denoiser.params(), init.params());
    }

    #[test]
    fn training_is_reproducible() {
        let set =
            TrainingSet::new(vec![(wave(0.0, 0.3), 0), (wave(1.0, 0.1), 1)], vec![0]).unwrap();
        let s = NoiseSchedule::default();
        let a = train_denoiser(&set, &s, &quick(20)).unwrap();
        let b = train_denoiser(&set, &s, &quick(20)).unwrap();
        assert_eq!(a.denoiser, b.denoiser);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn overfits_a_single_sample() {
        let set = TrainingSet::new(vec![(wave(0.3, 0.3), 0)], vec![0]).unwrap();
        let s = NoiseSchedule::default();
        let trained = train_denoiser(&set, &s, &quick(5000)).unwrap();
        let tail = &trained.losses[trained.losses.len() - 500..];
        let loss = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!(loss < 1e-3, "training loss {loss}");
    }

    #[test]
    fn training_halves_held_out_error() {
        let set_of = |offset: f64| {
            let motions = (0..12)
                .map(|i| {
                    (
                        wave(0.5 * i as f64 + offset, 0.1 + 0.05 * (i % 3) as f64),
                        i % 3,
                    )
                })
                .collect();
            TrainingSet::new(motions, vec![0]).unwrap()
        };
        let (train, held_out) = (set_of(0.0), set_of(0.25));
        let s = NoiseSchedule::default();
        let init = TrainingConfig {
            prior_rank: 0,
            ..quick(0)
        };
        let before = eps_mse(
            &train_denoiser(&train, &s, &init).unwrap().denoiser,
            &held_out,
            7,
            300,
        )
        .unwrap();
        let after = eps_mse(
            &train_denoiser(&train, &s, &quick(600)).unwrap().denoiser,
            &held_out,
            7,
            300,
        )
        .unwrap();
        assert!(after < 0.5 * before, "before {before}, after {after}");
    }

    #[test]
    fn fitted_prior_beats_unit_prior_at_initialisation() {
        let motions = (0..12)
            .map(|i| (wave(0.5 * i as f64, 0.1 + 0.05 * (i % 3) as f64), i % 3))
            .collect();
        let set = TrainingSet::new(motions, vec![0]).unwrap();
        let s = NoiseSchedule::default();
        let unit = TrainingConfig {
            prior_rank: 0,
            ..quick(0)
        };
        let plain = eps_mse(
            &train_denoiser(&set, &s, &unit).unwrap().denoiser,
            &set,
            7,
            300,
        )
        .unwrap();
        let fitted = eps_mse(
            &train_denoiser(&set, &s, &quick(0)).unwrap().denoiser,
            &set,
            7,
            300,
        )
        .unwrap();
        assert!(fitted < 0.5 * plain, "unit {plain}, fitted {fitted}");
    }
}
