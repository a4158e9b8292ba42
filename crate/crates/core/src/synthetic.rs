//! Procedural, labelled motion corpus for the toy denoiser.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::motion::{EndEffectorSet, Motion, MIN_FRAMES};
use crate::rng::{derive_seed, seeded};

/// Standard deviation of the positional jitter, in meters.
pub const JITTER_STD: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    pub joint_names: Vec<String>,
    pub effector_indices: Vec<usize>,
}

impl Default for SkeletonSpec {
    fn default() -> Self {
        let names = [
            "root",
            "head",
            "left_hand",
            "right_hand",
            "left_foot",
            "right_foot",
            "pelvis",
        ];
        Self {
            joint_names: names.iter().map(|s| s.to_string()).collect(),
            effector_indices: vec![1, 2, 3, 4, 5, 0],
        }
    }
}

impl SkeletonSpec {
    pub fn validate(&self) -> Result<()> {
        let mut names: Vec<&String> = self.joint_names.iter().collect();
        names.sort();
        names.dedup();
        if names.len() != self.joint_names.len() {
            return Err(Error::InvalidConfig(
                "skeleton joint names must be unique".into(),
            ));
        }
        self.effectors().map(|_| ())
    }

    pub fn effectors(&self) -> Result<EndEffectorSet> {
        EndEffectorSet::new(self.effector_indices.clone(), self.joint_names.len())
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.joint_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidConfig(format!("skeleton has no `{name}` joint")))
    }
}

/// Parameters of one sinusoidal motion family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionFamily {
    pub family_id: String,
    /// Limb frequency in Hz.
    pub omega: f64,
    /// Limb swing amplitude in meters.
    pub amplitude: f64,
    /// Lateral hand spread in meters.
    pub spread: f64,
    /// Vertical root bounce in meters.
    pub bounce: f64,
    /// Phase offsets of `[left_hand, right_hand, left_foot, right_foot]`.
    pub phases: [f64; 4],
}

impl MotionFamily {
    pub fn validate(&self) -> Result<()> {
        let p = [self.omega, self.amplitude, self.spread, self.bounce];
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || self.phases.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "family `{}` needs finite non-negative parameters",
                self.family_id
            )));
        }
        Ok(())
    }

    /// Alternating limbs: opposite hand and foot swing together.
    fn with_phase(&self, phi: f64) -> Self {
        Self {
            phases: [phi, phi + PI, phi + PI, phi],
            ..self.clone()
        }
    }
}

/// Sinusoidal limbs around a bouncing root, plus optional seeded jitter.
///
/// Limb displacements are linear in `amplitude` and the root displacement is
/// linear in `bounce`.
pub fn gen_motion(
    skeleton: &SkeletonSpec,
    family: &MotionFamily,
    n_frames: usize,
    fps: f64,
    seed: u64,
    jitter: bool,
) -> Result<Motion> {
    skeleton.validate()?;
    family.validate()?;
    if n_frames < MIN_FRAMES {
        return Err(Error::MotionTooShort {
            frames: n_frames,
            min: MIN_FRAMES,
        });
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "fps must be positive, got {fps}"
        )));
    }
    let idx = |name| skeleton.index(name);
    let (root, head, lh, rh, lf, rf, pelvis) = (
        idx("root")?,
        idx("head")?,
        idx("left_hand")?,
        idx("right_hand")?,
        idx("left_foot")?,
        idx("right_foot")?,
        idx("pelvis")?,
    );
    let n_joints = skeleton.joint_names.len();
    let (a, r) = (family.amplitude, family.spread);
    let mut positions = vec![0.0; n_frames * n_joints * 3];
    for t in 0..n_frames {
        let base = 2.0 * PI * family.omega * t as f64 / fps;
        let th = |k: usize| base + family.phases[k];
        let o = [0.0, 1.0 + family.bounce * base.sin(), 0.0];
        let mut put = |j: usize, d: [f64; 3]| {
            for c in 0..3 {
                positions[(t * n_joints + j) * 3 + c] = o[c] + d[c];
            }
        };
        put(root, [0.0; 3]);
        put(pelvis, [0.0, -0.1, 0.0]);
        put(head, [0.0, 0.55, 0.0]);
        put(
            lh,
            [
                -(r + a * th(0).sin()),
                0.3 + 0.5 * a * th(0).cos(),
                0.1 + 0.5 * a * th(0).sin(),
            ],
        );
        put(
            rh,
            [
                r + a * th(1).sin(),
                0.3 + 0.5 * a * th(1).cos(),
                0.1 + 0.5 * a * th(1).sin(),
            ],
        );
        put(
            lf,
            [
                -0.15,
                -0.95 + 0.3 * a * (1.0 - th(2).cos()),
                -0.05 + a * th(2).sin(),
            ],
        );
        put(
            rf,
            [
                0.15,
                -0.95 + 0.3 * a * (1.0 - th(3).cos()),
                0.05 + a * th(3).sin(),
            ],
        );
    }
    if jitter {
        let mut rng = seeded(seed);
        let noise = Normal::new(0.0, JITTER_STD).expect("positive std");
        for p in &mut positions {
            *p += noise.sample(&mut rng);
        }
    }
    Motion::new(fps, skeleton.joint_names.clone(), positions)
}

/// One family together with the number of motions drawn from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCount {
    pub family: MotionFamily,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub skeleton: SkeletonSpec,
    /// Condition id of every record is the index of its entry here.
    pub families: Vec<FamilyCount>,
    pub n_frames: usize,
    pub fps: f64,
    pub jitter: bool,
}

impl DatasetSpec {
    /// Three energy levels times a 2 x 2 grid of frequency and spread, giving
    /// twelve conditions.
    pub fn default_with_count(count: usize) -> Self {
        let mut families = Vec::new();
        for (level, a) in [("low", 0.05), ("mid", 0.15), ("high", 0.30)] {
            for omega in [0.5, 1.0] {
                for spread in [0.2, 0.5] {
                    families.push(FamilyCount {
                        family: MotionFamily {
                            family_id: format!("{level}-w{omega}-r{spread}"),
                            omega,
                            amplitude: a,
                            spread,
                            bounce: 0.5 * a,
                            phases: [0.0, PI, PI, 0.0],
                        },
                        count,
                    });
                }
            }
        }
        Self {
            skeleton: SkeletonSpec::default(),
            families,
            n_frames: 60,
            fps: 20.0,
            jitter: true,
        }
    }
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self::default_with_count(20)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub condition_id: usize,
    pub family: String,
    pub params: MotionFamily,
    pub fps: f64,
    pub positions: Vec<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub skeleton: SkeletonSpec,
    pub families: Vec<FamilyCount>,
    pub n_frames: usize,
    pub fps: f64,
    pub jitter: bool,
    pub master_seed: u64,
    pub n_records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub motions: Vec<(Motion, usize)>,
}

impl Dataset {
    pub fn effectors(&self) -> Result<EndEffectorSet> {
        self.meta.skeleton.effectors()
    }

    pub fn n_conditions(&self) -> usize {
        self.meta.families.len()
    }
}

/// Generates every record of `spec`; record `i` of entry `c` uses a random
/// global phase and jitter drawn from `derive_seed(master, [c, i])`.
pub fn gen_dataset(spec: &DatasetSpec, master_seed: u64) -> Result<(Dataset, Vec<DatasetRecord>)> {
    spec.skeleton.validate()?;
    if spec.families.is_empty() {
        return Err(Error::InvalidConfig(
            "dataset needs at least one family".into(),
        ));
    }
    let mut motions = Vec::new();
    let mut records = Vec::new();
    for (c, fc) in spec.families.iter().enumerate() {
        if fc.count == 0 {
            return Err(Error::InvalidConfig(format!(
                "family `{}` has a zero record count",
                fc.family.family_id
            )));
        }
        for i in 0..fc.count {
            let seed = derive_seed(master_seed, &[c as u64, i as u64]);
            let phi = seeded(seed ^ 0x5048_4153).random_range(0.0..2.0 * PI);
            let family = fc.family.with_phase(phi);
            let m = gen_motion(
                &spec.skeleton,
                &family,
                spec.n_frames,
                spec.fps,
                seed,
                spec.jitter,
            )?;
            records.push(DatasetRecord {
                condition_id: c,
                family: family.family_id.clone(),
                params: family,
                fps: spec.fps,
                positions: m.frames(),
            });
            motions.push((m, c));
        }
    }
    let meta = DatasetMeta {
        skeleton: spec.skeleton.clone(),
        families: spec.families.clone(),
        n_frames: spec.n_frames,
        fps: spec.fps,
        jitter: spec.jitter,
        master_seed,
        n_records: motions.len(),
    };
    Ok((Dataset { meta, motions }, records))
}

/// Sidecar metadata path: `corpus.jsonl` -> `corpus.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Writes one JSON record per line plus the metadata sidecar.
pub fn write_dataset(path: &Path, meta: &DatasetMeta, records: &[DatasetRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialisation cannot fail"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())?;
    let meta_json = serde_json::to_string_pretty(meta).expect("metadata serialisation cannot fail");
    write_atomic(&meta_path(path), meta_json.as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mpath = meta_path(path);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let meta: DatasetMeta =
        serde_json::from_str(&text).map_err(|e| Error::parse(&mpath, e.to_string()))?;
    meta.skeleton.validate()?;
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut motions = Vec::new();
    for (n, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", n + 1)))?;
        if rec.condition_id >= meta.families.len() {
            return Err(Error::parse(
                path,
                format!(
                    "line {}: condition_id {} has no family",
                    n + 1,
                    rec.condition_id
                ),
            ));
        }
        let m = Motion::from_frames(rec.fps, meta.skeleton.joint_names.clone(), &rec.positions)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", n + 1)))?;
        motions.push((m, rec.condition_id));
    }
    if motions.is_empty() {
        return Err(Error::Dataset(format!(
            "{} contains no records",
            path.display()
        )));
    }
    Ok(Dataset { meta, motions })
}
