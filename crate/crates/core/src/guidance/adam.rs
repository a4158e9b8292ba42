use serde::{Deserialize, Serialize};

use super::GuidanceConfig;
use crate::error::{Error, Result};

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn new(lr: f64, (beta1, beta2): (f64, f64)) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: ADAM_EPS,
        }
    }
}

/// Per-parameter first and second moments plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], hp: &AdamParams) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "Adam state has {} entries, params {} and gradient {}",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.step += 1;
        let c1 = 1.0 - hp.beta1.powi(self.step as i32);
        let c2 = 1.0 - hp.beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
            *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
        Ok(())
    }
}

/// Functional form: returns the updated parameters and state.
pub fn adam_step(
    state: &AdamState,
    grad: &[f64],
    params: &[f64],
    cfg: &GuidanceConfig,
) -> Result<(Vec<f64>, AdamState)> {
    let mut state = state.clone();
    let mut params = params.to_vec();
    state.update(&mut params, grad, &cfg.adam())?;
    Ok((params, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, seeded};

    #[test]
    fn zero_gradient_leaves_params() {
        let cfg = GuidanceConfig::default();
        let (p, s) = adam_step(&AdamState::new(3), &[0.0; 3], &[1.0, -2.0, 3.0], &cfg).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(s.steps_taken(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = GuidanceConfig::default();
        let (p, _) = adam_step(&AdamState::new(1), &[2.0], &[0.0], &cfg).unwrap();
        // m_hat = g, v_hat = g^2, so the step is -lr * g / (|g| + eps).
        let expected = -0.005 * 2.0 / (2.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] + 0.005).abs() < 1e-10);
    }

    /// Hand-rolled scalar Adam written from the textbook recursion.
    fn reference_trace(grads: &[Vec<f64>], p0: &[f64], lr: f64, b1: f64, b2: f64) -> Vec<f64> {
        let mut p = p0.to_vec();
        let mut m = vec![0.0; p.len()];
        let mut v = vec![0.0; p.len()];
        for (k, g) in grads.iter().enumerate() {
            let t = (k + 1) as f64;
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - b1.powf(t));
                let vh = v[i] / (1.0 - b2.powf(t));
                p[i] -= lr * mh / (vh.sqrt() + 1e-8);
            }
        }
        p
    }

    #[test]
    fn two_constant_steps_match_reference() {
        let cfg = GuidanceConfig::default();
        let mut state = AdamState::new(2);
        let mut p = vec![0.1, 0.2];
        for _ in 0..2 {
            let (np, ns) = adam_step(&state, &[1.5, -0.25], &p, &cfg).unwrap();
            p = np;
            state = ns;
        }
        let r = reference_trace(
            &[vec![1.5, -0.25], vec![1.5, -0.25]],
            &[0.1, 0.2],
            0.005,
            0.7,
            0.9,
        );
        assert!((p[0] - r[0]).abs() < 1e-15 && (p[1] - r[1]).abs() < 1e-15);
    }

    #[test]
    fn hundred_step_trace_matches_reference() {
        let grads: Vec<Vec<f64>> = (0..100).map(|k| normal_vec(&mut seeded(k), 4)).collect();
        let p0 = vec![0.3, -0.1, 0.0, 2.0];
        let hp = AdamParams::new(0.005, (0.7, 0.9));
        let mut state = AdamState::new(4);
        let mut p = p0.clone();
        for g in &grads {
            state.update(&mut p, g, &hp).unwrap();
        }
        let r = reference_trace(&grads, &p0, 0.005, 0.7, 0.9);
        for (a, b) in p.iter().zip(&r) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch() {
        let cfg = GuidanceConfig::default();
        assert!(adam_step(&AdamState::new(2), &[1.0], &[0.0, 0.0], &cfg).is_err());
    }
}
