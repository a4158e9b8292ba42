//! Self-describing JSON checkpoint for [`ToyDenoiser`].

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::normalize::Normalizer;
use super::prior::GaussianPrior;
use super::schedule::{make_schedule, NoiseSchedule};
use super::toy::{ToyDenoiser, ToyParams, ToyShape};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::motion::MotionLayout;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ScheduleSpec {
    n_steps: usize,
    beta_min: f64,
    beta_max: f64,
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    kind: String,
    skeleton: MotionLayout,
    effectors: Vec<usize>,
    schedule: ScheduleSpec,
    network: ToyShape,
    normalizer: Normalizer,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    w3: Tensor,
    b3: Tensor,
    embeddings: Tensor,
    prior: GaussianPrior,
}

fn t2(a: &Array2<f64>) -> Tensor {
    Tensor {
        shape: a.shape().to_vec(),
        data: a.iter().copied().collect(),
    }
}

fn t1(a: &Array1<f64>) -> Tensor {
    Tensor {
        shape: vec![a.len()],
        data: a.to_vec(),
    }
}

fn a2(t: Tensor, name: &str) -> std::result::Result<Array2<f64>, String> {
    match t.shape[..] {
        [r, c] => Array2::from_shape_vec((r, c), t.data).map_err(|e| format!("tensor {name}: {e}")),
        _ => Err(format!(
            "tensor {name}: expected 2 dimensions, got {:?}",
            t.shape
        )),
    }
}

fn a1(t: Tensor, name: &str) -> std::result::Result<Array1<f64>, String> {
    match t.shape[..] {
        [n] if n == t.data.len() => Ok(Array1::from(t.data)),
        _ => Err(format!("tensor {name}: bad shape {:?}", t.shape)),
    }
}

pub fn checkpoint_to_json(model: &ToyDenoiser) -> String {
    let s = model.schedule();
    let p = model.params();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        kind: "toy-mlp-denoiser".into(),
        skeleton: super::Denoiser::layout(model).clone(),
        effectors: model.effectors().to_vec(),
        schedule: ScheduleSpec {
            n_steps: s.n_steps,
            beta_min: s.beta_min,
            beta_max: s.beta_max,
        },
        network: model.shape(),
        normalizer: model.normalizer_ref().clone(),
        w1: t2(&p.w1),
        b1: t1(&p.b1),
        w2: t2(&p.w2),
        b2: t1(&p.b2),
        w3: t2(&p.w3),
        b3: t1(&p.b3),
        embeddings: t2(&p.embeddings),
        prior: model.prior().clone(),
    };
    serde_json::to_string(&file).expect("checkpoint serialisation cannot fail")
}

pub fn checkpoint_from_json(text: &str) -> std::result::Result<ToyDenoiser, String> {
    let f: CheckpointFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if f.version != CHECKPOINT_VERSION {
        return Err(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            f.version
        ));
    }
    let schedule: NoiseSchedule =
        make_schedule(f.schedule.n_steps, f.schedule.beta_min, f.schedule.beta_max)
            .map_err(|e| e.to_string())?;
    let params = ToyParams {
        w1: a2(f.w1, "w1")?,
        b1: a1(f.b1, "b1")?,
        w2: a2(f.w2, "w2")?,
        b2: a1(f.b2, "b2")?,
        w3: a2(f.w3, "w3")?,
        b3: a1(f.b3, "b3")?,
        embeddings: a2(f.embeddings, "embeddings")?,
    };
    ToyDenoiser::from_parts(
        f.skeleton,
        f.effectors,
        schedule,
        f.network,
        f.normalizer,
        f.prior.validated().map_err(|e| e.to_string())?,
        params,
    )
    .map_err(|e| e.to_string())
}

pub fn save_checkpoint(model: &ToyDenoiser, path: &Path) -> Result<()> {
    write_atomic(path, checkpoint_to_json(model).as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<ToyDenoiser> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_json(&text).map_err(|m| Error::parse(path, m))
}
