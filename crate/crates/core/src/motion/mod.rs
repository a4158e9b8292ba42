//! Motion representation and the differentiable Laban feature pipeline.

mod features;
mod gradient;
mod kinematics;
mod smoothing;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use features::{
    laban_loss, laban_scalars, laban_series, LabanExtractor, LabanScalars, LabanSeries,
    CHANNEL_NAMES,
};
pub use gradient::{laban_loss_and_grad, laban_loss_grad_motion};
pub use kinematics::{kinematics, KinematicsSeries};
pub use smoothing::{gaussian_kernel, gaussian_smooth, SmoothingConfig};

/// Minimum number of frames: velocity, acceleration and jerk each need one
/// more frame than the previous derivative.
pub const MIN_FRAMES: usize = 4;

/// Frame count, rate and skeleton of a motion, without the positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionLayout {
    pub fps: f64,
    pub joint_names: Vec<String>,
    pub n_frames: usize,
}

impl MotionLayout {
    pub fn n_joints(&self) -> usize {
        self.joint_names.len()
    }

    /// Length of the flattened `T x J x 3` position vector.
    pub fn flat_len(&self) -> usize {
        self.n_frames * self.n_joints() * 3
    }
}

/// A fixed-rate sequence of 3D joint positions in meters.
///
/// Positions are stored flat, frame-major: index `(t * J + j) * 3 + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    fps: f64,
    joint_names: Vec<String>,
    positions: Vec<f64>,
}

impl Motion {
    pub fn new(fps: f64, joint_names: Vec<String>, positions: Vec<f64>) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidMotion(format!(
                "fps must be positive, got {fps}"
            )));
        }
        let n_joints = joint_names.len();
        if n_joints == 0 {
            return Err(Error::InvalidMotion("skeleton has no joints".into()));
        }
        if !positions.len().is_multiple_of(n_joints * 3) {
            return Err(Error::Dimension(format!(
                "{} position values do not divide into frames of {} joints",
                positions.len(),
                n_joints
            )));
        }
        let n_frames = positions.len() / (n_joints * 3);
        if n_frames < MIN_FRAMES {
            return Err(Error::MotionTooShort {
                frames: n_frames,
                min: MIN_FRAMES,
            });
        }
        if let Some(i) = positions.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMotion(format!(
                "non-finite position at frame {}, joint {}",
                i / (n_joints * 3),
                (i / 3) % n_joints
            )));
        }
        Ok(Self {
            fps,
            joint_names,
            positions,
        })
    }

    /// Builds a motion from per-frame, per-joint `[x, y, z]` triples.
    pub fn from_frames(
        fps: f64,
        joint_names: Vec<String>,
        frames: &[Vec<[f64; 3]>],
    ) -> Result<Self> {
        let n_joints = joint_names.len();
        if let Some((t, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != n_joints) {
            return Err(Error::Dimension(format!(
                "frame {t} has {} joints, expected {n_joints}",
                f.len()
            )));
        }
        let positions = frames.iter().flatten().flatten().copied().collect();
        Self::new(fps, joint_names, positions)
    }

    pub fn from_layout(layout: &MotionLayout, positions: Vec<f64>) -> Result<Self> {
        if positions.len() != layout.flat_len() {
            return Err(Error::Dimension(format!(
                "expected {} position values, got {}",
                layout.flat_len(),
                positions.len()
            )));
        }
        Self::new(layout.fps, layout.joint_names.clone(), positions)
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn n_frames(&self) -> usize {
        self.positions.len() / (self.n_joints() * 3)
    }

    pub fn n_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn layout(&self) -> MotionLayout {
        MotionLayout {
            fps: self.fps,
            joint_names: self.joint_names.clone(),
            n_frames: self.n_frames(),
        }
    }

    /// Flattened positions, frame-major.
    pub fn as_slice(&self) -> &[f64] {
        &self.positions
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.positions
    }

    pub fn position(&self, frame: usize, joint: usize) -> [f64; 3] {
        let i = (frame * self.n_joints() + joint) * 3;
        [
            self.positions[i],
            self.positions[i + 1],
            self.positions[i + 2],
        ]
    }

    pub fn frames(&self) -> Vec<Vec<[f64; 3]>> {
        (0..self.n_frames())
            .map(|t| (0..self.n_joints()).map(|j| self.position(t, j)).collect())
            .collect()
    }

    /// Returns a copy with every coordinate mapped through `f`.
    pub fn map_positions(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.fps,
            self.joint_names.clone(),
            self.positions.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MotionFile {
            fps: self.fps,
            joint_names: self.joint_names.clone(),
            frames: self.frames(),
        })
        .expect("motion serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let file: MotionFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Self::from_frames(file.fps, file.joint_names, &file.frames).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|m| Error::parse(path, m))
    }
}

/// On-disk motion schema: `{fps, joint_names, frames: [[[x, y, z], ...], ...]}`.
#[derive(Serialize, Deserialize)]
struct MotionFile {
    fps: f64,
    joint_names: Vec<String>,
    frames: Vec<Vec<[f64; 3]>>,
}

/// Joints over which the Weight, Time and Flow sums run. Unit masses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndEffectorSet {
    indices: Vec<usize>,
}

impl EndEffectorSet {
    pub fn new(indices: Vec<usize>, n_joints: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidConfig("end-effector set is empty".into()));
        }
        let mut seen = vec![false; n_joints];
        for &i in &indices {
            if i >= n_joints {
                return Err(Error::InvalidConfig(format!(
                    "end-effector index {i} out of range for {n_joints} joints"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate end-effector index {i}"
                )));
            }
        }
        Ok(Self { indices })
    }

    /// Every joint of an `n_joints` skeleton.
    pub fn all(n_joints: usize) -> Self {
        Self {
            indices: (0..n_joints).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub(crate) fn check(&self, n_joints: usize) -> Result<()> {
        match self.indices.iter().find(|&&i| i >= n_joints) {
            Some(i) => Err(Error::InvalidConfig(format!(
                "end-effector index {i} out of range for {n_joints} joints"
            ))),
            None => Ok(()),
        }
    }
}
