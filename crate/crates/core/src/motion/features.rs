use serde::{Deserialize, Serialize};

use super::kinematics::differences;
use super::smoothing::{gaussian_kernel, smooth_columns};
use super::{EndEffectorSet, Motion, SmoothingConfig, MIN_FRAMES};
use crate::error::{Error, Result};

pub const CHANNEL_NAMES: [&str; 4] = ["weight", "time", "flow", "shape"];

pub(crate) fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Per-frame `[Weight, Time, Flow, Shape]` series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabanSeries {
    values: Vec<[f64; 4]>,
}

impl LabanSeries {
    pub fn new(values: Vec<[f64; 4]>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension("Laban series is empty".into()));
        }
        Ok(Self { values })
    }

    pub fn n_frames(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[[f64; 4]] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[c]).collect()
    }

    /// `frame,weight,time,flow,shape` CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,weight,time,flow,shape\n");
        for (t, v) in self.values.iter().enumerate() {
            out.push_str(&format!(
                "{t},{:e},{:e},{:e},{:e}\n",
                v[0], v[1], v[2], v[3]
            ));
        }
        out
    }
}

/// Max-over-time Laban components, used for reporting only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabanScalars {
    pub weight: f64,
    pub time: f64,
    pub flow: f64,
    pub shape: f64,
}

impl LabanScalars {
    pub fn to_array(self) -> [f64; 4] {
        [self.weight, self.time, self.flow, self.shape]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            weight: a[0],
            time: a[1],
            flow: a[2],
            shape: a[3],
        }
    }
}

pub fn laban_scalars(series: &LabanSeries) -> LabanScalars {
    let mut m = series.values[0];
    for v in &series.values[1..] {
        for c in 0..4 {
            m[c] = m[c].max(v[c]);
        }
    }
    LabanScalars::from_array(m)
}

/// Relative Laban loss: `sum ((candidate - target) / (baseline + delta))^2`
/// over every frame and channel.
pub fn laban_loss(
    candidate: &LabanSeries,
    target: &LabanSeries,
    baseline: &LabanSeries,
    delta: f64,
) -> Result<f64> {
    check_loss_inputs(candidate, target, baseline, delta)?;
    let mut total = 0.0;
    for ((c, t), b) in candidate
        .values
        .iter()
        .zip(&target.values)
        .zip(&baseline.values)
    {
        for i in 0..4 {
            let r = (c[i] - t[i]) / (b[i] + delta);
            total += r * r;
        }
    }
    Ok(total)
}

pub(crate) fn check_loss_inputs(
    candidate: &LabanSeries,
    target: &LabanSeries,
    baseline: &LabanSeries,
    delta: f64,
) -> Result<()> {
    if !(delta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "loss delta must be positive, got {delta}"
        )));
    }
    let n = candidate.n_frames();
    if target.n_frames() != n || baseline.n_frames() != n {
        return Err(Error::Dimension(format!(
            "Laban series lengths differ: candidate {n}, target {}, baseline {}",
            target.n_frames(),
            baseline.n_frames()
        )));
    }
    Ok(())
}

/// Feature series of a motion, smoothed per `smoothing`.
pub fn laban_series(
    motion: &Motion,
    effectors: &EndEffectorSet,
    smoothing: &SmoothingConfig,
) -> Result<LabanSeries> {
    let extractor = LabanExtractor::new(effectors.clone(), *smoothing)?;
    extractor.series(motion)
}

/// End-effector set and smoothing bundled with a precomputed kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabanExtractor {
    effectors: EndEffectorSet,
    smoothing: SmoothingConfig,
    kernel: Option<Vec<f64>>,
}

/// Intermediate buffers of one forward pass, kept for the adjoint.
pub(crate) struct Forward {
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
    pub jerk: Vec<f64>,
    /// Per frame and axis: (argmin joint, argmax joint).
    pub extremal: Vec<[(usize, usize); 3]>,
    pub extents: Vec<[f64; 3]>,
    pub series: LabanSeries,
}

impl LabanExtractor {
    pub fn new(effectors: EndEffectorSet, smoothing: SmoothingConfig) -> Result<Self> {
        smoothing.validate()?;
        let kernel = if smoothing.enabled {
            Some(gaussian_kernel(&smoothing)?)
        } else {
            None
        };
        Ok(Self {
            effectors,
            smoothing,
            kernel,
        })
    }

    pub fn effectors(&self) -> &EndEffectorSet {
        &self.effectors
    }

    pub fn smoothing(&self) -> &SmoothingConfig {
        &self.smoothing
    }

    pub(crate) fn kernel(&self) -> Option<&[f64]> {
        self.kernel.as_deref()
    }

    pub fn series(&self, motion: &Motion) -> Result<LabanSeries> {
        Ok(self
            .forward(motion.as_slice(), motion.n_frames(), motion.n_joints())?
            .series)
    }

    pub(crate) fn forward(
        &self,
        positions: &[f64],
        n_frames: usize,
        n_joints: usize,
    ) -> Result<Forward> {
        if n_frames < MIN_FRAMES {
            return Err(Error::MotionTooShort {
                frames: n_frames,
                min: MIN_FRAMES,
            });
        }
        self.effectors.check(n_joints)?;
        let width = n_joints * 3;
        let smoothed = match &self.kernel {
            Some(k) => smooth_columns(positions, n_frames, width, k),
            None => positions.to_vec(),
        };
        let (velocity, acceleration, jerk) = differences(&smoothed, n_frames, width);

        let vec3 = |buf: &[f64], i: usize| [buf[i], buf[i + 1], buf[i + 2]];
        let mut values = Vec::with_capacity(n_frames);
        let mut extremal = Vec::with_capacity(n_frames);
        let mut extents = Vec::with_capacity(n_frames);
        for t in 0..n_frames {
            let (mut e, mut a, mut j) = (0.0, 0.0, 0.0);
            for &k in self.effectors.indices() {
                let i = (t * n_joints + k) * 3;
                let v = vec3(&velocity, i);
                e += v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                a += norm(vec3(&acceleration, i));
                j += norm(vec3(&jerk, i));
            }
            let mut arg = [(0usize, 0usize); 3];
            let mut ext = [0.0; 3];
            for c in 0..3 {
                let coord = |k: usize| smoothed[(t * n_joints + k) * 3 + c];
                let (mut lo, mut hi) = (0usize, 0usize);
                for k in 1..n_joints {
                    if coord(k) < coord(lo) {
                        lo = k;
                    }
                    if coord(k) > coord(hi) {
                        hi = k;
                    }
                }
                arg[c] = (lo, hi);
                ext[c] = coord(hi) - coord(lo);
            }
            values.push([e, a, j, ext[0] * ext[1] * ext[2]]);
            extremal.push(arg);
            extents.push(ext);
        }
        Ok(Forward {
            velocity,
            acceleration,
            jerk,
            extremal,
            extents,
            series: LabanSeries { values },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, seeded};
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("j{j}")).collect()
    }

    /// Brute-force feature oracle: straight loops over frames and joints with
    /// zero-padded backward differences.
    pub(crate) fn oracle_series(m: &Motion, effectors: &[usize]) -> Vec<[f64; 4]> {
        let n = m.n_frames();
        let nj = m.n_joints();
        let p = |t: usize, k: usize| m.position(t, k);
        let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let vel = |t: usize, k: usize| {
            if t >= 1 {
                sub(p(t, k), p(t - 1, k))
            } else {
                [0.0; 3]
            }
        };
        let acc = |t: usize, k: usize| {
            if t >= 2 {
                sub(vel(t, k), vel(t - 1, k))
            } else {
                [0.0; 3]
            }
        };
        let jrk = |t: usize, k: usize| {
            if t >= 3 {
                sub(acc(t, k), acc(t - 1, k))
            } else {
                [0.0; 3]
            }
        };
        let norm2 = |v: [f64; 3]| v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let mut out = Vec::new();
        for t in 0..n {
            let mut row = [0.0; 4];
            for &k in effectors {
                row[0] += norm2(vel(t, k));
                row[1] += norm2(acc(t, k)).sqrt();
                row[2] += norm2(jrk(t, k)).sqrt();
            }
            let mut vol = 1.0;
            for c in 0..3 {
                let xs: Vec<f64> = (0..nj).map(|k| p(t, k)[c]).collect();
                let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
                vol *= hi - lo;
            }
            row[3] = vol;
            out.push(row);
        }
        out
    }

    fn random_motion(seed: u64, frames: usize, joints: usize) -> Motion {
        let p = normal_vec(&mut seeded(seed), frames * joints * 3)
            .into_iter()
            .map(|x| 0.3 * x)
            .collect();
        Motion::new(20.0, names(joints), p).unwrap()
    }

    #[test]
    fn stationary_skeleton_has_only_volume() {
        // Extents 0.4 x 1.6 x 0.2 m.
        let pose = vec![[0.0, 0.0, 0.0], [0.4, 1.6, 0.2], [0.1, 0.8, 0.05]];
        let frames = vec![pose; 10];
        let m = Motion::from_frames(20.0, names(3), &frames).unwrap();
        let fx = EndEffectorSet::all(3);
        let s = laban_series(&m, &fx, &SmoothingConfig::default()).unwrap();
        for v in s.values() {
            assert_eq!(v[0], 0.0);
            assert_eq!(v[1], 0.0);
            assert_eq!(v[2], 0.0);
            assert!((v[3] - 0.128).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_velocity_effector() {
        let frames: Vec<Vec<[f64; 3]>> = (0..12)
            .map(|t| {
                vec![
                    [0.02 * t as f64, 1.0, 0.0],
                    [0.0, 0.0, 0.0],
                    [0.5, 1.5, 0.3],
                ]
            })
            .collect();
        let m = Motion::from_frames(20.0, names(3), &frames).unwrap();
        let fx = EndEffectorSet::new(vec![0], 3).unwrap();
        let s = laban_series(&m, &fx, &SmoothingConfig::disabled()).unwrap();
        for t in 3..12 {
            let v = s.values()[t];
            assert!((v[0] - 4e-4).abs() < 1e-15);
            assert!(v[1].abs() < 1e-15);
            assert!(v[2].abs() < 1e-15);
        }
    }

    #[test]
    fn matches_brute_force_oracle() {
        let m = random_motion(11, 60, 7);
        let fx = EndEffectorSet::new(vec![0, 1, 2, 3, 4, 5], 7).unwrap();
        let s = laban_series(&m, &fx, &SmoothingConfig::disabled()).unwrap();
        let o = oracle_series(&m, fx.indices());
        for (a, b) in s.values().iter().zip(&o) {
            for c in 0..4 {
                assert!((a[c] - b[c]).abs() < 1e-9, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn scalars_take_per_channel_max() {
        let s = LabanSeries::new(vec![
            [0.0, 5.0, 1.0, 2.0],
            [1.0, 4.0, 1.0, 2.0],
            [3.0, 0.0, 9.0, 2.0],
            [2.0, 1.0, 1.0, 2.5],
        ])
        .unwrap();
        assert_eq!(laban_scalars(&s).to_array(), [3.0, 5.0, 9.0, 2.5]);
        let zero = LabanSeries::new(vec![[0.0; 4]; 3]).unwrap();
        assert_eq!(laban_scalars(&zero).to_array(), [0.0; 4]);
        assert!(LabanSeries::new(vec![]).is_err());
    }

    #[test]
    fn scalars_match_naive_max_loop() {
        let vals = normal_vec(&mut seeded(5), 40 * 4);
        let rows: Vec<[f64; 4]> = vals.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
        let got = laban_scalars(&LabanSeries::new(rows.clone()).unwrap()).to_array();
        for c in 0..4 {
            let mut best = rows[0][c];
            for r in &rows {
                if r[c] > best {
                    best = r[c];
                }
            }
            assert_eq!(got[c], best);
        }
    }

    #[test]
    fn loss_values() {
        let one = LabanSeries::new(vec![[1.0; 4]]).unwrap();
        let two = LabanSeries::new(vec![[2.0; 4]]).unwrap();
        assert_eq!(laban_loss(&two, &two, &one, 1e-6).unwrap(), 0.0);
        let l = laban_loss(&two, &one, &one, 1e-15).unwrap();
        assert!((l - 4.0).abs() < 1e-12);
        let short = LabanSeries::new(vec![[1.0; 4]; 2]).unwrap();
        assert!(matches!(
            laban_loss(&two, &short, &one, 1e-6),
            Err(Error::Dimension(_))
        ));
        assert!(laban_loss(&two, &one, &one, 0.0).is_err());
    }

    #[test]
    fn loss_matches_loop_oracle() {
        let draw = |seed| {
            let v = normal_vec(&mut seeded(seed), 30 * 4);
            LabanSeries::new(
                v.chunks(4)
                    .map(|c| [c[0].abs(), c[1].abs(), c[2].abs(), c[3].abs()])
                    .collect(),
            )
            .unwrap()
        };
        let (c, t, b) = (draw(1), draw(2), draw(3));
        let mut expected = 0.0;
        for f in 0..30 {
            for i in 0..4 {
                let r = (c.values()[f][i] - t.values()[f][i]) / (b.values()[f][i] + 1e-6);
                expected += r * r;
            }
        }
        let got = laban_loss(&c, &t, &b, 1e-6).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn csv_has_header_and_one_row_per_frame() {
        let s = LabanSeries::new(vec![[1.0, 2.0, 3.0, 4.0]; 3]).unwrap();
        let csv = s.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "frame,weight,time,flow,shape");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("1,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn invariances_and_scaling(seed in 0u64..1000, offset in -3.0f64..3.0, scale in 0.3f64..3.0) {
            let m = random_motion(seed, 16, 4);
            let fx = EndEffectorSet::new(vec![0, 2, 3], 4).unwrap();
            let sm = SmoothingConfig::default();
            let base = laban_series(&m, &fx, &sm).unwrap();

            // Non-negativity.
            for v in base.values() {
                prop_assert!(v.iter().all(|&x| x >= 0.0));
            }

            // Translation invariance.
            let shifted = laban_series(&m.map_positions(|x| x + offset).unwrap(), &fx, &sm).unwrap();
            for (a, b) in base.values().iter().zip(shifted.values()) {
                for c in 0..4 {
                    prop_assert!((a[c] - b[c]).abs() <= 1e-9 * (1.0 + a[c].abs()));
                }
            }

            // Uniform scaling about the origin: E ~ c^2, A and J ~ c, V ~ c^3.
            let scaled = laban_series(&m.map_positions(|x| x * scale).unwrap(), &fx, &sm).unwrap();
            for (a, b) in base.values().iter().zip(scaled.values()).skip(3) {
                prop_assert!((b[0] - scale * scale * a[0]).abs() <= 1e-9 * (1.0 + b[0]));
                prop_assert!((b[1] - scale * a[1]).abs() <= 1e-9 * (1.0 + b[1]));
                prop_assert!((b[2] - scale * a[2]).abs() <= 1e-9 * (1.0 + b[2]));
                prop_assert!((b[3] - scale.powi(3) * a[3]).abs() <= 1e-9 * (1.0 + b[3]));
            }
        }

        #[test]
        fn volume_scales_about_frame_centroid(seed in 0u64..1000, scale in 0.3f64..3.0) {
            let m = random_motion(seed, 12, 5);
            let nj = 5;
            let mut p = m.as_slice().to_vec();
            for t in 0..12 {
                for c in 0..3 {
                    let mean: f64 = (0..nj).map(|k| p[(t * nj + k) * 3 + c]).sum::<f64>() / nj as f64;
                    for k in 0..nj {
                        let i = (t * nj + k) * 3 + c;
                        p[i] = mean + scale * (p[i] - mean);
                    }
                }
            }
            let scaled = Motion::new(20.0, names(nj), p).unwrap();
            let fx = EndEffectorSet::all(nj);
            let sm = SmoothingConfig::default();
            let a = laban_series(&m, &fx, &sm).unwrap();
            let b = laban_series(&scaled, &fx, &sm).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((y[3] - scale.powi(3) * x[3]).abs() <= 1e-9 * (1.0 + y[3]));
            }
        }
    }
}
