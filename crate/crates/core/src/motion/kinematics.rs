use super::{Motion, MIN_FRAMES};
use crate::error::{Error, Result};

/// First, second and third backward differences of joint positions, per
/// frame. Units are per frame, not per second.
///
/// Frames where a derivative is not yet defined are zero: `v[0]`,
/// `a[0..2]` and `j[0..3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicsSeries {
    pub n_frames: usize,
    pub n_joints: usize,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
    pub jerk: Vec<f64>,
}

impl KinematicsSeries {
    fn at(buf: &[f64], n_joints: usize, frame: usize, joint: usize) -> [f64; 3] {
        let i = (frame * n_joints + joint) * 3;
        [buf[i], buf[i + 1], buf[i + 2]]
    }

    pub fn velocity_at(&self, frame: usize, joint: usize) -> [f64; 3] {
        Self::at(&self.velocity, self.n_joints, frame, joint)
    }

    pub fn acceleration_at(&self, frame: usize, joint: usize) -> [f64; 3] {
        Self::at(&self.acceleration, self.n_joints, frame, joint)
    }

    pub fn jerk_at(&self, frame: usize, joint: usize) -> [f64; 3] {
        Self::at(&self.jerk, self.n_joints, frame, joint)
    }
}

/// Finite-difference kinematics of the motion as given (no smoothing).
pub fn kinematics(motion: &Motion) -> Result<KinematicsSeries> {
    let n_frames = motion.n_frames();
    if n_frames < MIN_FRAMES {
        return Err(Error::MotionTooShort {
            frames: n_frames,
            min: MIN_FRAMES,
        });
    }
    let n_joints = motion.n_joints();
    let (velocity, acceleration, jerk) = differences(motion.as_slice(), n_frames, n_joints * 3);
    Ok(KinematicsSeries {
        n_frames,
        n_joints,
        velocity,
        acceleration,
        jerk,
    })
}

/// Returns `(v, a, j)` for a frame-major buffer of `width` columns.
pub(crate) fn differences(
    x: &[f64],
    n_frames: usize,
    width: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let diff = |src: &[f64], first: usize| {
        let mut out = vec![0.0; src.len()];
        for t in first..n_frames {
            for c in 0..width {
                out[t * width + c] = src[t * width + c] - src[(t - 1) * width + c];
            }
        }
        out
    };
    let v = diff(x, 1);
    let a = diff(&v, 2);
    let j = diff(&a, 3);
    (v, a, j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_joint(xs: impl Iterator<Item = f64>) -> Motion {
        let p = xs.flat_map(|x| [x, 1.0, -2.0]).collect();
        Motion::new(20.0, vec!["root".into()], p).unwrap()
    }

    #[test]
    fn constant_positions_have_zero_derivatives() {
        let k = kinematics(&one_joint(std::iter::repeat_n(0.5, 10))).unwrap();
        assert!(k
            .velocity
            .iter()
            .chain(&k.acceleration)
            .chain(&k.jerk)
            .all(|&v| v == 0.0));
    }

    #[test]
    fn linear_motion() {
        let k = kinematics(&one_joint((0..10).map(|t| 0.02 * t as f64))).unwrap();
        assert_eq!(k.velocity_at(0, 0)[0], 0.0);
        for t in 1..10 {
            assert!((k.velocity_at(t, 0)[0] - 0.02).abs() < 1e-15);
            assert_eq!(k.velocity_at(t, 0)[1], 0.0);
        }
        for t in 2..10 {
            assert!(k.acceleration_at(t, 0)[0].abs() < 1e-15);
        }
        for t in 3..10 {
            assert!(k.jerk_at(t, 0)[0].abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_motion_telescopes() {
        let k = kinematics(&one_joint((0..12).map(|t| (t * t) as f64))).unwrap();
        for t in 1..12 {
            assert_eq!(k.velocity_at(t, 0)[0], (2 * t - 1) as f64);
        }
        assert_eq!(k.acceleration_at(0, 0)[0], 0.0);
        assert_eq!(k.acceleration_at(1, 0)[0], 0.0);
        for t in 2..12 {
            assert_eq!(k.acceleration_at(t, 0)[0], 2.0);
        }
        for t in 0..12 {
            assert_eq!(k.jerk_at(t, 0)[0], 0.0);
        }
    }

    #[test]
    fn cubic_jerk_is_padded_then_constant() {
        let k = kinematics(&one_joint((0..8).map(|t| (t * t * t) as f64))).unwrap();
        let jerk: Vec<f64> = (0..8).map(|t| k.jerk_at(t, 0)[0]).collect();
        assert_eq!(jerk, vec![0.0, 0.0, 0.0, 6.0, 6.0, 6.0, 6.0, 6.0]);
    }
}
