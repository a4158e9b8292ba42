use super::denoiser::{to_positions, ConditionEmbedding, Denoiser};
use super::schedule::{NoiseSchedule, StepIndices};
use crate::error::{Error, Result};
use crate::motion::Motion;

fn same_len(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "{what}: lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps`.
pub fn forward_diffuse(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    schedule.check_t(t)?;
    same_len(x0, eps, "forward diffusion")?;
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(&x, &e)| a * x + b * e).collect())
}

/// Clean-sample estimate `(x_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t)`.
pub fn predict_x0(
    x_t: &[f64],
    t: usize,
    eps_hat: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    schedule.check_t(t)?;
    same_len(x_t, eps_hat, "x0 prediction")?;
    Ok(predict_x0_unchecked(x_t, schedule.alpha_bar(t), eps_hat))
}

pub(crate) fn predict_x0_unchecked(x_t: &[f64], alpha_bar: f64, eps_hat: &[f64]) -> Vec<f64> {
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    x_t.iter()
        .zip(eps_hat)
        .map(|(&x, &e)| (x - b * e) / a)
        .collect()
}

/// `sqrt(ab_prev) x0_hat + sqrt(1 - ab_prev) eps_hat`: the deterministic
/// (eta = 0) DDIM reconstruction at `t_prev`.
pub fn ddim_reconstruct(
    x0_hat: &[f64],
    eps_hat: &[f64],
    t_prev: usize,
    schedule: &NoiseSchedule,
) -> Vec<f64> {
    let ab = schedule.alpha_bar(t_prev);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    x0_hat
        .iter()
        .zip(eps_hat)
        .map(|(&x, &e)| a * x + b * e)
        .collect()
}

/// One deterministic DDIM step from `t` to `t_prev < t`.
pub fn ddim_step(
    x_t: &[f64],
    t: usize,
    t_prev: usize,
    eps_hat: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    if t_prev >= t {
        return Err(Error::Step(format!(
            "t_prev = {t_prev} must be below t = {t}"
        )));
    }
    let x0 = predict_x0(x_t, t, eps_hat, schedule)?;
    Ok(ddim_reconstruct(&x0, eps_hat, t_prev, schedule))
}

pub(crate) fn check_eps(eps: &[f64], expected: usize) -> Result<()> {
    if eps.len() != expected {
        return Err(Error::Dimension(format!(
            "denoiser returned {} values, expected {expected}",
            eps.len()
        )));
    }
    Ok(())
}

/// Plain DDIM sampling from `z = x_T` along `steps`; returns the final
/// diffusion-space vector.
pub fn sample_flat(
    denoiser: &dyn Denoiser,
    e: &ConditionEmbedding,
    z: &[f64],
    schedule: &NoiseSchedule,
    steps: &StepIndices,
) -> Result<Vec<f64>> {
    let dim = denoiser.layout().flat_len();
    if z.len() != dim {
        return Err(Error::Dimension(format!(
            "initial noise has {} values, expected {dim}",
            z.len()
        )));
    }
    let mut x = z.to_vec();
    for (t, t_prev) in steps.pairs() {
        let eps = denoiser.predict_eps(&x, t, e.as_slice())?;
        check_eps(&eps, dim)?;
        x = ddim_step(&x, t, t_prev, &eps, schedule)?;
    }
    Ok(x)
}

/// Unguided DDIM sampling; the result is a deterministic function of
/// `(denoiser, e, z, steps)`.
pub fn sample(
    denoiser: &dyn Denoiser,
    e: &ConditionEmbedding,
    z: &[f64],
    schedule: &NoiseSchedule,
    steps: &StepIndices,
) -> Result<Motion> {
    let x = sample_flat(denoiser, e, z, schedule, steps)?;
    Motion::from_layout(denoiser.layout(), to_positions(denoiser, &x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::denoiser::PinnedDenoiser;
    use crate::diffusion::make_schedule;
    use crate::motion::MotionLayout;
    use crate::rng::{normal_vec, seeded};

    #[test]
    fn forward_diffusion_values() {
        let s = make_schedule(2, 0.1, 0.1).unwrap();
        // alpha_bar(2) = 0.81
        let x = forward_diffuse(&[1.0], 2, &[1.0], &s).unwrap();
        assert!((x[0] - (0.9 + 0.19f64.sqrt())).abs() < 1e-15);
        assert!((x[0] - 1.33589).abs() < 1e-5);
        let x = forward_diffuse(&[2.0, -1.0], 2, &[0.0, 0.0], &s).unwrap();
        assert!((x[0] - 1.8).abs() < 1e-15 && (x[1] + 0.9).abs() < 1e-15);
        assert!(forward_diffuse(&[1.0], 0, &[1.0], &s).is_err());
        assert!(forward_diffuse(&[1.0, 2.0], 1, &[1.0], &s).is_err());
    }

    #[test]
    fn unit_alpha_bar_is_identity() {
        let x = predict_x0_unchecked(&[0.3, -0.7], 1.0, &[5.0, 6.0]);
        assert_eq!(x, vec![0.3, -0.7]);
    }

    #[test]
    fn predict_x0_values() {
        // alpha_bar = 0.25 with n = 1, beta = 0.75.
        let s = make_schedule(1, 0.75, 0.75).unwrap();
        let x = predict_x0(&[1.0], 1, &[1.0], &s).unwrap();
        assert!((x[0] - (1.0 - 0.75f64.sqrt()) / 0.5).abs() < 1e-15);
        assert!((x[0] - 0.26795).abs() < 1e-5);
    }

    #[test]
    fn forward_then_predict_is_identity() {
        let s = NoiseSchedule::default();
        let x0 = normal_vec(&mut seeded(1), 50);
        let eps = normal_vec(&mut seeded(2), 50);
        for t in [1, 10, 500, 999, 1000] {
            let xt = forward_diffuse(&x0, t, &eps, &s).unwrap();
            let back = predict_x0(&xt, t, &eps, &s).unwrap();
            let scale = 1.0 / s.alpha_bar(t).sqrt();
            for (a, b) in back.iter().zip(&x0) {
                assert!(
                    (a - b).abs() < 1e-14 * scale.max(1.0) * 10.0,
                    "t={t}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn step_to_zero_returns_x0_estimate() {
        let s = NoiseSchedule::default();
        let xt = normal_vec(&mut seeded(3), 8);
        let eps = normal_vec(&mut seeded(4), 8);
        assert_eq!(
            ddim_step(&xt, 40, 0, &eps, &s).unwrap(),
            predict_x0(&xt, 40, &eps, &s).unwrap()
        );
        assert!(ddim_step(&xt, 40, 40, &eps, &s).is_err());
    }

    #[test]
    fn zero_noise_step_rescales() {
        let s = NoiseSchedule::default();
        let xt = normal_vec(&mut seeded(5), 8);
        let out = ddim_step(&xt, 300, 200, &[0.0; 8], &s).unwrap();
        let ratio = s.alpha_bar(200).sqrt() / s.alpha_bar(300).sqrt();
        for (a, b) in out.iter().zip(&xt) {
            assert!((a - ratio * b).abs() < 1e-13);
        }
    }

    #[test]
    fn consistent_noise_round_trip() {
        let s = NoiseSchedule::default();
        let x0 = normal_vec(&mut seeded(6), 30);
        let eps = normal_vec(&mut seeded(7), 30);
        for t in [5, 250, 1000] {
            let xt = forward_diffuse(&x0, t, &eps, &s).unwrap();
            let back = ddim_step(&xt, t, 0, &eps, &s).unwrap();
            for (a, b) in back.iter().zip(&x0) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    fn layout() -> MotionLayout {
        MotionLayout {
            fps: 20.0,
            joint_names: vec!["a".into(), "b".into()],
            n_frames: 5,
        }
    }

    #[test]
    fn pinned_denoiser_sampling_recovers_target() {
        let s = NoiseSchedule::default();
        let target = normal_vec(&mut seeded(8), 30);
        let d = PinnedDenoiser::new(layout(), s.clone(), target.clone(), 4, 2).unwrap();
        let e = d.condition_embedding(0).unwrap();
        for seed in 0..3 {
            let z = normal_vec(&mut seeded(100 + seed), 30);
            for steps in [StepIndices::full(&s), StepIndices::strided(&s, 50).unwrap()] {
                let m = sample(&d, &e, &z, &s, &steps).unwrap();
                for (a, b) in m.as_slice().iter().zip(&target) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_single_step_is_x0_prediction() {
        let s = NoiseSchedule::default();
        let target = normal_vec(&mut seeded(9), 30);
        let d = PinnedDenoiser::new(layout(), s.clone(), target, 4, 2).unwrap();
        let e = d.condition_embedding(1).unwrap();
        let z = normal_vec(&mut seeded(10), 30);
        let steps = StepIndices::strided(&s, 100).unwrap();
        let a = sample(&d, &e, &z, &s, &steps).unwrap();
        let b = sample(&d, &e, &z, &s, &steps).unwrap();
        assert_eq!(a, b);

        let one = StepIndices::new(vec![1000, 0], &s).unwrap();
        let m = sample(&d, &e, &z, &s, &one).unwrap();
        let eps = d.predict_eps(&z, 1000, e.as_slice()).unwrap();
        assert_eq!(
            m.as_slice(),
            predict_x0(&z, 1000, &eps, &s).unwrap().as_slice()
        );

        assert!(sample(&d, &e, &z[..10], &s, &steps).is_err());
    }
}
