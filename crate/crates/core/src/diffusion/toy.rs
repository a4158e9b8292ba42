//! Small fully connected denoiser with a learned condition-embedding table.
//!
//! The network reads `[x_t | time features | e]` through two SiLU hidden
//! layers and emits `f`. The clean estimate is `n = L_t x_t + sqrt(1 - ab_t) f`
//! where `L_t x_t` is the posterior mean under a Gaussian prior fitted to the
//! training latents, so the network only learns the non-Gaussian
//! correction. The ε-prediction follows analytically,
//! `eps_hat = (x_t - sqrt(ab_t) n) / sqrt(1 - ab_t)`, and the ε-MSE weight on
//! `f` is `ab_t <= 1`. A unit prior gives `L_t = sqrt(ab_t) I`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::denoiser::{ConditionEmbedding, Denoiser, DenoiserVjp};
use super::normalize::Normalizer;
use super::prior::GaussianPrior;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::motion::MotionLayout;
use crate::rng::seeded;

pub const TIME_FREQUENCIES: usize = 8;
pub const TIME_FEATURES: usize = 2 * TIME_FREQUENCIES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyShape {
    pub hidden: usize,
    pub embed_dim: usize,
    pub n_conditions: usize,
}

impl Default for ToyShape {
    fn default() -> Self {
        Self {
            hidden: 128,
            embed_dim: 16,
            n_conditions: 1,
        }
    }
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
    pub embeddings: Array2<f64>,
}

impl ToyParams {
    fn zeros_like(other: &ToyParams) -> Self {
        Self {
            w1: Array2::zeros(other.w1.raw_dim()),
            b1: Array1::zeros(other.b1.raw_dim()),
            w2: Array2::zeros(other.w2.raw_dim()),
            b2: Array1::zeros(other.b2.raw_dim()),
            w3: Array2::zeros(other.w3.raw_dim()),
            b3: Array1::zeros(other.b3.raw_dim()),
            embeddings: Array2::zeros(other.embeddings.raw_dim()),
        }
    }

    pub fn tensors(&self) -> [&[f64]; 7] {
        fn v(a: Option<&[f64]>) -> &[f64] {
            a.expect("parameters are contiguous")
        }
        [
            v(self.w1.as_slice()),
            v(self.b1.as_slice()),
            v(self.w2.as_slice()),
            v(self.b2.as_slice()),
            v(self.w3.as_slice()),
            v(self.b3.as_slice()),
            v(self.embeddings.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        fn v(a: Option<&mut [f64]>) -> &mut [f64] {
            a.expect("parameters are contiguous")
        }
        [
            v(self.w1.as_slice_mut()),
            v(self.b1.as_slice_mut()),
            v(self.w2.as_slice_mut()),
            v(self.b2.as_slice_mut()),
            v(self.w3.as_slice_mut()),
            v(self.b3.as_slice_mut()),
            v(self.embeddings.as_slice_mut()),
        ]
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    layout: MotionLayout,
    effectors: Vec<usize>,
    schedule: NoiseSchedule,
    shape: ToyShape,
    normalizer: Normalizer,
    prior: GaussianPrior,
    pub(crate) params: ToyParams,
}

/// Activations of one batched forward pass.
pub(crate) struct ToyCache {
    u: Array2<f64>,
    z1: Array2<f64>,
    h1: Array2<f64>,
    z2: Array2<f64>,
    h2: Array2<f64>,
    pub(crate) clean: Array2<f64>,
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

/// Sinusoidal features of `t / n_steps` at frequencies `pi * 2^k`.
pub fn time_features(t: usize, n_steps: usize) -> [f64; TIME_FEATURES] {
    let tau = t as f64 / n_steps as f64;
    let mut out = [0.0; TIME_FEATURES];
    for k in 0..TIME_FREQUENCIES {
        let w = std::f64::consts::PI * (1u32 << k) as f64;
        out[2 * k] = (w * tau).sin();
        out[2 * k + 1] = (w * tau).cos();
    }
    out
}

impl ToyDenoiser {
    /// Seeded initialisation. Each input group (motion, time, embedding) of
    /// the first layer gets its own fan-in scaling so the short embedding is
    /// not drowned out by the long motion vector.
    pub fn init(
        layout: MotionLayout,
        effectors: Vec<usize>,
        schedule: NoiseSchedule,
        shape: ToyShape,
        seed: u64,
    ) -> Result<Self> {
        if shape.hidden == 0 || shape.embed_dim == 0 || shape.n_conditions == 0 {
            return Err(Error::InvalidConfig(format!(
                "degenerate network shape {shape:?}"
            )));
        }
        let dim = layout.flat_len();
        let n_in = dim + TIME_FEATURES + shape.embed_dim;
        let h = shape.hidden;
        let mut rng = seeded(seed);
        let normal = |std: f64| {
            let d = Normal::new(0.0, std).expect("positive std");
            move |rng: &mut crate::rng::SeededRng| d.sample(rng)
        };

        let mut w1 = Array2::zeros((h, n_in));
        let groups = [
            (0, dim),
            (dim, dim + TIME_FEATURES),
            (dim + TIME_FEATURES, n_in),
        ];
        for (lo, hi) in groups {
            let draw = normal(1.0 / ((hi - lo) as f64).sqrt());
            for v in w1.slice_mut(s![.., lo..hi]).iter_mut() {
                *v = draw(&mut rng);
            }
        }
        let mut fill = |shape: (usize, usize), std: f64| {
            let draw = normal(std);
            Array2::from_shape_simple_fn(shape, || draw(&mut rng))
        };
        let w2 = fill((h, h), 1.0 / (h as f64).sqrt());
        let w3 = fill((dim, h), 0.1 / (h as f64).sqrt());
        let embeddings = fill((shape.n_conditions, shape.embed_dim), 1.0);
        Ok(Self {
            normalizer: Normalizer::identity(dim),
            prior: GaussianPrior::unit(dim),
            layout,
            effectors,
            schedule,
            shape,
            params: ToyParams {
                w1,
                b1: Array1::zeros(h),
                w2,
                b2: Array1::zeros(h),
                w3,
                b3: Array1::zeros(dim),
                embeddings,
            },
        })
    }

    pub fn from_parts(
        layout: MotionLayout,
        effectors: Vec<usize>,
        schedule: NoiseSchedule,
        shape: ToyShape,
        normalizer: Normalizer,
        prior: GaussianPrior,
        params: ToyParams,
    ) -> Result<Self> {
        let dim = layout.flat_len();
        let n_in = dim + TIME_FEATURES + shape.embed_dim;
        let ok = params.w1.dim() == (shape.hidden, n_in)
            && params.b1.len() == shape.hidden
            && params.w2.dim() == (shape.hidden, shape.hidden)
            && params.b2.len() == shape.hidden
            && params.w3.dim() == (dim, shape.hidden)
            && params.b3.len() == dim
            && params.embeddings.dim() == (shape.n_conditions, shape.embed_dim)
            && normalizer.len() == dim
            && prior.dim() == dim;
        if !ok {
            return Err(Error::Dimension(format!(
                "network tensors do not match shape {shape:?} for {dim}-dimensional motions"
            )));
        }
        Ok(Self {
            layout,
            effectors,
            schedule,
            shape,
            normalizer,
            prior,
            params,
        })
    }

    /// Replaces the position normalizer; the network then works in its
    /// latent space.
    pub fn with_normalizer(mut self, normalizer: Normalizer) -> Result<Self> {
        if normalizer.len() != self.layout.flat_len() {
            return Err(Error::Dimension(format!(
                "normalizer covers {} values, motions have {}",
                normalizer.len(),
                self.layout.flat_len()
            )));
        }
        self.normalizer = normalizer;
        Ok(self)
    }

    /// Replaces the Gaussian prior behind the linear part of the clean
    /// estimate.
    pub fn with_prior(mut self, prior: GaussianPrior) -> Result<Self> {
        if prior.dim() != self.layout.flat_len() {
            return Err(Error::Dimension(format!(
                "prior covers {} values, motions have {}",
                prior.dim(),
                self.layout.flat_len()
            )));
        }
        self.prior = prior;
        Ok(self)
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    pub fn shape(&self) -> ToyShape {
        self.shape
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn effectors(&self) -> &[usize] {
        &self.effectors
    }

    pub fn normalizer_ref(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn params(&self) -> &ToyParams {
        &self.params
    }

    fn n_in(&self) -> usize {
        self.layout.flat_len() + TIME_FEATURES + self.shape.embed_dim
    }

    fn check_inputs(&self, x_t: &[f64], t: usize, e: &[f64]) -> Result<()> {
        self.schedule.check_t(t)?;
        if x_t.len() != self.layout.flat_len() {
            return Err(Error::Dimension(format!(
                "x_t has {} values, expected {}",
                x_t.len(),
                self.layout.flat_len()
            )));
        }
        if e.len() != self.shape.embed_dim {
            return Err(Error::Dimension(format!(
                "embedding has {} values, expected {}",
                e.len(),
                self.shape.embed_dim
            )));
        }
        Ok(())
    }

    /// Batched forward pass; row `b` of the inputs is one sample.
    pub(crate) fn forward(&self, x: ArrayView2<f64>, ts: &[usize], e: ArrayView2<f64>) -> ToyCache {
        let (batch, dim) = x.dim();
        let mut u = Array2::zeros((batch, self.n_in()));
        u.slice_mut(s![.., ..dim]).assign(&x);
        for (b, &t) in ts.iter().enumerate() {
            let tf = time_features(t, self.schedule.n_steps);
            for (k, v) in tf.iter().enumerate() {
                u[[b, dim + k]] = *v;
            }
        }
        u.slice_mut(s![.., dim + TIME_FEATURES..]).assign(&e);

        let p = &self.params;
        let z1 = u.dot(&p.w1.t()) + &p.b1;
        let h1 = z1.mapv(silu);
        let z2 = h1.dot(&p.w2.t()) + &p.b2;
        let h2 = z2.mapv(silu);
        let mut clean = h2.dot(&p.w3.t()) + &p.b3;
        for (b, &t) in ts.iter().enumerate() {
            let ab = self.schedule.alpha_bar(t);
            let lin = self.prior.apply(ab, &x.row(b).to_vec());
            for (c, l) in clean.row_mut(b).iter_mut().zip(lin) {
                *c = l + (1.0 - ab).sqrt() * *c;
            }
        }
        ToyCache {
            u,
            z1,
            h1,
            z2,
            h2,
            clean,
        }
    }

    /// ε-prediction from the clean estimate, row by row.
    pub(crate) fn eps_from_clean(
        &self,
        x: ArrayView2<f64>,
        ts: &[usize],
        clean: &Array2<f64>,
    ) -> Array2<f64> {
        let mut eps = Array2::zeros(x.raw_dim());
        for (b, &t) in ts.iter().enumerate() {
            let ab = self.schedule.alpha_bar(t);
            let (a, s) = (ab.sqrt(), (1.0 - ab).sqrt());
            for ((o, &xi), &ni) in eps.row_mut(b).iter_mut().zip(x.row(b)).zip(clean.row(b)) {
                *o = (xi - a * ni) / s;
            }
        }
        eps
    }

    /// Backward pass from a gradient on the network output `f`. Returns the
    /// parameter gradients (embedding rows left zero) and the gradient on the
    /// network input `u`, restricted to columns `input_from..`.
    pub(crate) fn backward(
        &self,
        cache: &ToyCache,
        d_out: &Array2<f64>,
        input_from: usize,
    ) -> (ToyParams, Array2<f64>) {
        let p = &self.params;
        let mut g = ToyParams::zeros_like(p);
        g.w3 = d_out.t().dot(&cache.h2);
        g.b3 = d_out.sum_axis(Axis(0));
        let mut dz2 = d_out.dot(&p.w3);
        dz2.zip_mut_with(&cache.z2, |d, &z| *d *= silu_grad(z));
        g.w2 = dz2.t().dot(&cache.h1);
        g.b2 = dz2.sum_axis(Axis(0));
        let mut dz1 = dz2.dot(&p.w2);
        dz1.zip_mut_with(&cache.z1, |d, &z| *d *= silu_grad(z));
        g.w1 = dz1.t().dot(&cache.u);
        g.b1 = dz1.sum_axis(Axis(0));
        let du = dz1.dot(&p.w1.slice(s![.., input_from..]));
        (g, du)
    }

    /// The x0-estimate the network produces for a single input.
    pub fn predict_clean(&self, x_t: &[f64], t: usize, e: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(x_t, t, e)?;
        let x = ArrayView2::from_shape((1, x_t.len()), x_t).expect("row view");
        let ev = ArrayView2::from_shape((1, e.len()), e).expect("row view");
        Ok(self.forward(x, &[t], ev).clean.into_raw_vec_and_offset().0)
    }
}

impl Denoiser for ToyDenoiser {
    fn layout(&self) -> &MotionLayout {
        &self.layout
    }

    fn embed_dim(&self) -> usize {
        self.shape.embed_dim
    }

    fn predict_eps(&self, x_t: &[f64], t: usize, e: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(x_t, t, e)?;
        let x = ArrayView2::from_shape((1, x_t.len()), x_t).expect("row view");
        let ev = ArrayView2::from_shape((1, e.len()), e).expect("row view");
        let cache = self.forward(x, &[t], ev);
        Ok(self
            .eps_from_clean(x, &[t], &cache.clean)
            .into_raw_vec_and_offset()
            .0)
    }

    fn eps_vjp(&self, x_t: &[f64], t: usize, e: &[f64], upstream: &[f64]) -> Result<DenoiserVjp> {
        self.check_inputs(x_t, t, e)?;
        if upstream.len() != x_t.len() {
            return Err(Error::Dimension(format!(
                "upstream gradient has {} values, expected {}",
                upstream.len(),
                x_t.len()
            )));
        }
        let dim = x_t.len();
        let x = ArrayView2::from_shape((1, dim), x_t).expect("row view");
        let ev = ArrayView2::from_shape((1, e.len()), e).expect("row view");
        let cache = self.forward(x, &[t], ev);
        let ab = self.schedule.alpha_bar(t);
        let (a, s) = (ab.sqrt(), (1.0 - ab).sqrt());
        let d_out = Array2::from_shape_fn((1, dim), |(_, i)| -a * upstream[i]);
        let (_, du) = self.backward(&cache, &d_out, 0);
        let mut dx: Vec<f64> = du.slice(s![0, ..dim]).to_vec();
        let lin = self.prior.apply(ab, upstream);
        for ((d, u), l) in dx.iter_mut().zip(upstream).zip(lin) {
            *d += (u - a * l) / s;
        }
        let de = du.slice(s![0, dim + TIME_FEATURES..]).to_vec();
        Ok(DenoiserVjp {
            x_t: dx,
            embedding: de,
        })
    }

    fn normalizer(&self) -> Option<&Normalizer> {
        Some(&self.normalizer)
    }

    fn condition_embedding(&self, condition_id: usize) -> Result<ConditionEmbedding> {
        if condition_id >= self.shape.n_conditions {
            return Err(Error::UnknownCondition(condition_id));
        }
        ConditionEmbedding::new(self.params.embeddings.row(condition_id).to_vec())
    }
}
