use super::features::{check_loss_inputs, norm, LabanExtractor};
use super::smoothing::smooth_columns_adjoint;
use super::{EndEffectorSet, LabanSeries, Motion, SmoothingConfig};
use crate::error::{Error, Result};

/// Gradient of the relative Laban loss with respect to every joint
/// coordinate, flattened like [`Motion::as_slice`].
pub fn laban_loss_grad_motion(
    motion: &Motion,
    target: &LabanSeries,
    baseline: &LabanSeries,
    effectors: &EndEffectorSet,
    smoothing: &SmoothingConfig,
    delta: f64,
) -> Result<Vec<f64>> {
    let extractor = LabanExtractor::new(effectors.clone(), *smoothing)?;
    let (_, grad) = laban_loss_and_grad(
        &extractor,
        motion.as_slice(),
        motion.n_frames(),
        motion.n_joints(),
        target,
        baseline,
        delta,
    )?;
    Ok(grad)
}

/// Loss value and its gradient for a flat, frame-major position buffer.
///
/// Reverse pass: loss -> channels -> (v, a, j, extents) -> smoothed
/// positions -> raw positions. Bounding-box extents route their gradient to
/// the single extremal joint (lowest index on ties).
pub fn laban_loss_and_grad(
    extractor: &LabanExtractor,
    positions: &[f64],
    n_frames: usize,
    n_joints: usize,
    target: &LabanSeries,
    baseline: &LabanSeries,
    delta: f64,
) -> Result<(f64, Vec<f64>)> {
    if positions.len() != n_frames * n_joints * 3 {
        return Err(Error::Dimension(format!(
            "expected {} position values, got {}",
            n_frames * n_joints * 3,
            positions.len()
        )));
    }
    let fwd = extractor.forward(positions, n_frames, n_joints)?;
    check_loss_inputs(&fwd.series, target, baseline, delta)?;

    let mut loss = 0.0;
    let mut d_channel = vec![[0.0; 4]; n_frames];
    for t in 0..n_frames {
        let (c, tg, b) = (
            fwd.series.values()[t],
            target.values()[t],
            baseline.values()[t],
        );
        for i in 0..4 {
            let denom = b[i] + delta;
            let r = (c[i] - tg[i]) / denom;
            loss += r * r;
            d_channel[t][i] = 2.0 * r / denom;
        }
    }

    let width = n_joints * 3;
    let mut gv = vec![0.0; fwd.velocity.len()];
    let mut ga = vec![0.0; fwd.acceleration.len()];
    let mut gj = vec![0.0; fwd.jerk.len()];
    for (t, d) in d_channel.iter().enumerate() {
        for &k in extractor.effectors().indices() {
            let i = (t * n_joints + k) * 3;
            if t >= 1 {
                for c in 0..3 {
                    gv[i + c] += 2.0 * fwd.velocity[i + c] * d[0];
                }
            }
            if t >= 2 {
                let a = [
                    fwd.acceleration[i],
                    fwd.acceleration[i + 1],
                    fwd.acceleration[i + 2],
                ];
                let n = norm(a);
                if n > 0.0 {
                    for c in 0..3 {
                        ga[i + c] += a[c] / n * d[1];
                    }
                }
            }
            if t >= 3 {
                let j = [fwd.jerk[i], fwd.jerk[i + 1], fwd.jerk[i + 2]];
                let n = norm(j);
                if n > 0.0 {
                    for c in 0..3 {
                        gj[i + c] += j[c] / n * d[2];
                    }
                }
            }
        }
    }

    // j_t = a_t - a_{t-1} (t >= 3), a_t = v_t - v_{t-1} (t >= 2),
    // v_t = s_t - s_{t-1} (t >= 1).
    for t in (3..n_frames).rev() {
        for c in 0..width {
            let g = gj[t * width + c];
            ga[t * width + c] += g;
            ga[(t - 1) * width + c] -= g;
        }
    }
    for t in (2..n_frames).rev() {
        for c in 0..width {
            let g = ga[t * width + c];
            gv[t * width + c] += g;
            gv[(t - 1) * width + c] -= g;
        }
    }
    let mut gs = vec![0.0; positions.len()];
    for t in (1..n_frames).rev() {
        for c in 0..width {
            let g = gv[t * width + c];
            gs[t * width + c] += g;
            gs[(t - 1) * width + c] -= g;
        }
    }

    for t in 0..n_frames {
        let dv = d_channel[t][3];
        if dv == 0.0 {
            continue;
        }
        let ext = fwd.extents[t];
        for axis in 0..3 {
            let others: f64 = (0..3).filter(|&o| o != axis).map(|o| ext[o]).product();
            let (lo, hi) = fwd.extremal[t][axis];
            gs[(t * n_joints + hi) * 3 + axis] += dv * others;
            gs[(t * n_joints + lo) * 3 + axis] -= dv * others;
        }
    }

    let grad = match extractor.kernel() {
        Some(k) => smooth_columns_adjoint(&gs, n_frames, width, k),
        None => gs,
    };
    Ok((loss, grad))
}
