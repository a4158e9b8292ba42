//! Command bodies. Each takes a fully layered [`RunConfig`], validates its
//! inputs before doing any work and writes every artifact atomically.
//! Nothing time- or host-dependent is written, so reruns are byte-identical.

use std::path::Path;

use serde::Serialize;

use super::config::RunConfig;
use crate::diffusion::{
    load_checkpoint, save_checkpoint, train_denoiser, Denoiser, ToyDenoiser, TrainingSet,
};
use crate::error::{Error, Result};
use crate::eval::{change_matrix, compare_tc_fc, EvalConfig, EvalReport, GuidanceProbe, Method};
use crate::gradcheck::{check_embedding_gradient, check_motion_gradient, GradCheck};
use crate::guidance::{make_target, Component, SamplingContext};
use crate::io::write_atomic;
use crate::motion::{
    gaussian_smooth, kinematics, laban_scalars, EndEffectorSet, KinematicsSeries, LabanExtractor,
    LabanSeries, Motion, SmoothingConfig, CHANNEL_NAMES,
};
use crate::synthetic::{
    gen_dataset, load_dataset, meta_path, write_dataset, DatasetSpec, SkeletonSpec,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data always serialises");
    s.push('\n');
    s
}

fn fmt4(v: [f64; 4]) -> String {
    CHANNEL_NAMES
        .iter()
        .zip(v)
        .map(|(n, x)| format!("{n} {x:.6}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn load_model(path: &Path) -> Result<ToyDenoiser> {
    require_file(path, "checkpoint")?;
    load_checkpoint(path)
}

fn extractor_for(model: &ToyDenoiser, cfg: &RunConfig) -> Result<LabanExtractor> {
    let effectors = EndEffectorSet::new(model.effectors().to_vec(), model.layout().n_joints())?;
    LabanExtractor::new(effectors, cfg.smoothing()?)
}

fn check_condition(model: &ToyDenoiser, c: usize) -> Result<()> {
    if c < model.shape().n_conditions {
        Ok(())
    } else {
        Err(Error::UnknownCondition(c))
    }
}

#[derive(Serialize)]
struct SamplingInfo {
    n_steps: usize,
    stride: usize,
    sampling_steps: usize,
}

/// Generates the synthetic corpus (`out` plus its `.meta.json` sidecar).
pub fn dataset(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut spec = DatasetSpec::default_with_count(cfg.count);
    spec.jitter = cfg.jitter;
    let (ds, records) = gen_dataset(&spec, cfg.seed)?;
    write_dataset(out, &ds.meta, &records)?;
    println!(
        "wrote {} motions over {} conditions to {}",
        records.len(),
        ds.n_conditions(),
        out.display()
    );
    Ok(())
}

/// Trains a denoiser on a corpus and writes its checkpoint.
pub fn train(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<()> {
    require_file(dataset, "dataset")?;
    require_file(&meta_path(dataset), "dataset metadata")?;
    let ds = load_dataset(dataset)?;
    let set = TrainingSet::new(ds.motions, ds.meta.skeleton.effector_indices.clone())?;
    let schedule = cfg.schedule()?;
    log::info!(
        "training on {} motions for {} iterations",
        set.len(),
        cfg.iterations
    );
    let trained = train_denoiser(&set, &schedule, &cfg.training())?;
    save_checkpoint(&trained.denoiser, out)?;
    let tail = &trained.losses[trained.losses.len().saturating_sub(100)..];
    if tail.is_empty() {
        println!("wrote untrained checkpoint to {}", out.display());
    } else {
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        println!(
            "trained {} iterations, final eps-MSE {mean:.5}; wrote {}",
            trained.losses.len(),
            out.display()
        );
    }
    Ok(())
}

/// Samples one unguided motion.
pub fn generate(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    check_condition(&model, cfg.condition)?;
    let extractor = extractor_for(&model, cfg)?;
    let steps = cfg.step_indices(model.schedule())?;
    let ctx = SamplingContext {
        denoiser: &model,
        schedule: model.schedule(),
        steps: &steps,
        extractor: &extractor,
    };
    let base = ctx.generate_baseline(cfg.condition, cfg.seed)?;
    write_text(out, &base.motion.to_json())?;
    println!("scalars: {}", fmt4(laban_scalars(&base.series).to_array()));
    Ok(())
}

#[derive(Serialize)]
struct GuideManifest<'a> {
    command: &'static str,
    version: &'static str,
    checkpoint: String,
    sampling: SamplingInfo,
    condition: usize,
    seed: u64,
    scale: [f64; 4],
    peak_ratios: [f64; 4],
    final_loss: Option<f64>,
    config: &'a RunConfig,
}

/// Two-step guided generation. The baseline artifacts are written before
/// the guided run starts so they survive a divergence. Returns the peak
/// ratios.
pub fn guide(cfg: &RunConfig, checkpoint: &Path, out_dir: &Path) -> Result<[f64; 4]> {
    let scale = cfg.scale_vector()?;
    let guidance = cfg.guidance()?;
    let model = load_model(checkpoint)?;
    check_condition(&model, cfg.condition)?;
    let extractor = extractor_for(&model, cfg)?;
    let steps = cfg.step_indices(model.schedule())?;
    let ctx = SamplingContext {
        denoiser: &model,
        schedule: model.schedule(),
        steps: &steps,
        extractor: &extractor,
    };

    let base = ctx.generate_baseline(cfg.condition, cfg.seed)?;
    write_text(&out_dir.join("baseline.json"), &base.motion.to_json())?;
    write_text(&out_dir.join("baseline_laban.csv"), &base.series.to_csv())?;

    let target = make_target(&base.series, &scale);
    let run = ctx.guided_sample(
        &base.embedding,
        &base.noise,
        &target,
        &base.series,
        &guidance,
    )?;
    let cmp = compare_tc_fc(&base.motion, &run.motion, &extractor)?;
    write_text(&out_dir.join("guided.json"), &run.motion.to_json())?;
    write_text(&out_dir.join("guided_laban.csv"), &cmp.fc.to_csv())?;
    write_text(&out_dir.join("loss.csv"), &run.loss_csv())?;
    write_text(&out_dir.join("tc_fc.csv"), &cmp.to_csv())?;
    let manifest = GuideManifest {
        command: "guide",
        version: VERSION,
        checkpoint: checkpoint.display().to_string(),
        sampling: SamplingInfo {
            n_steps: model.schedule().n_steps,
            stride: cfg.stride,
            sampling_steps: steps.len(),
        },
        condition: cfg.condition,
        seed: cfg.seed,
        scale: scale.values(),
        peak_ratios: cmp.peak_ratios,
        final_loss: run.losses.last().map(|l| l.loss),
        config: cfg,
    };
    write_text(&out_dir.join("manifest.json"), &to_json(&manifest))?;
    println!("scale: {}", fmt4(scale.values()));
    println!("peak ratios (guided / baseline): {}", fmt4(cmp.peak_ratios));
    println!("wrote {}", out_dir.display());
    Ok(cmp.peak_ratios)
}

fn joint_index(motion: &Motion, name: &str) -> Result<usize> {
    motion
        .joint_names()
        .iter()
        .position(|n| n == name)
        .or_else(|| name.parse().ok().filter(|&i| i < motion.n_joints()))
        .ok_or_else(|| Error::InvalidConfig(format!("motion has no joint `{name}`")))
}

/// Named joints, else the default skeleton's effectors when the motion uses
/// its joint names, else every joint.
fn analysis_effectors(motion: &Motion, names: &[String]) -> Result<EndEffectorSet> {
    if !names.is_empty() {
        let idx = names
            .iter()
            .map(|n| joint_index(motion, n))
            .collect::<Result<Vec<_>>>()?;
        return EndEffectorSet::new(idx, motion.n_joints());
    }
    let sk = SkeletonSpec::default();
    let idx: Option<Vec<usize>> = sk
        .effector_indices
        .iter()
        .map(|&i| {
            motion
                .joint_names()
                .iter()
                .position(|n| *n == sk.joint_names[i])
        })
        .collect();
    match idx {
        Some(idx) => EndEffectorSet::new(idx, motion.n_joints()),
        None => Ok(EndEffectorSet::all(motion.n_joints())),
    }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

struct Columns {
    kin: KinematicsSeries,
    series: LabanSeries,
}

impl Columns {
    fn cells(&self, frame: usize, joint: usize) -> [f64; 7] {
        let f = self.series.values()[frame];
        [
            norm(self.kin.velocity_at(frame, joint)),
            norm(self.kin.acceleration_at(frame, joint)),
            norm(self.kin.jerk_at(frame, joint)),
            f[0],
            f[1],
            f[2],
            f[3],
        ]
    }

    fn mean_jerk(&self, n_frames: usize, joint: usize) -> f64 {
        (0..n_frames)
            .map(|f| norm(self.kin.jerk_at(f, joint)))
            .sum::<f64>()
            / n_frames as f64
    }
}

const ANALYSIS_COLUMNS: [&str; 7] = [
    "speed",
    "acceleration",
    "jerk",
    "weight",
    "time",
    "flow",
    "shape",
];

/// Per-frame kinematics of one joint and the Laban series, on smoothed
/// positions and optionally also on raw ones.
pub fn analyze(
    cfg: &RunConfig,
    motion_path: &Path,
    out: Option<&Path>,
    joint: Option<&str>,
    effector_names: &[String],
) -> Result<()> {
    require_file(motion_path, "motion")?;
    let motion = Motion::load(motion_path)?;
    let j = match joint {
        Some(name) => joint_index(&motion, name)?,
        None => joint_index(&motion, "root").unwrap_or(0),
    };
    let effectors = analysis_effectors(&motion, effector_names)?;
    let smoothing = cfg.smoothing()?;
    let smooth = Columns {
        kin: kinematics(&gaussian_smooth(&motion, &smoothing)?)?,
        series: LabanExtractor::new(effectors.clone(), smoothing)?.series(&motion)?,
    };
    let raw = if cfg.compare_smoothing {
        Some(Columns {
            kin: kinematics(&motion)?,
            series: LabanExtractor::new(effectors, SmoothingConfig::disabled())?.series(&motion)?,
        })
    } else {
        None
    };

    let mut csv = String::from("frame");
    for c in ANALYSIS_COLUMNS {
        csv.push_str(&format!(",{c}"));
    }
    if raw.is_some() {
        for c in ANALYSIS_COLUMNS {
            csv.push_str(&format!(",raw_{c}"));
        }
    }
    csv.push('\n');
    for f in 0..motion.n_frames() {
        csv.push_str(&f.to_string());
        let mut cells = smooth.cells(f, j).to_vec();
        if let Some(r) = &raw {
            cells.extend(r.cells(f, j));
        }
        for v in cells {
            csv.push_str(&format!(",{v:?}"));
        }
        csv.push('\n');
    }
    match out {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }

    // Summary goes to stderr when the CSV itself is on stdout.
    let report = |line: String| {
        if out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    };
    let name = &motion.joint_names()[j];
    report(format!(
        "scalars: {}",
        fmt4(laban_scalars(&smooth.series).to_array())
    ));
    let sj = smooth.mean_jerk(motion.n_frames(), j);
    report(format!("mean |jerk| of {name}: {sj:.6}"));
    if let Some(r) = &raw {
        report(format!(
            "raw scalars: {}",
            fmt4(laban_scalars(&r.series).to_array())
        ));
        let rj = r.mean_jerk(motion.n_frames(), j);
        report(format!(
            "raw mean |jerk| of {name}: {rj:.6} ({:.2}x smoothed)",
            rj / sj
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalManifest<'a> {
    command: &'static str,
    version: &'static str,
    checkpoint: String,
    sampling: SamplingInfo,
    method: &'static str,
    conditions: &'a [usize],
    repeats: usize,
    seed: u64,
    config: &'a RunConfig,
}

/// Relative-change matrix for one method; writes `change_matrix.csv`,
/// `report.json` and `manifest.json`. Returns the diagonality.
pub fn eval(cfg: &RunConfig, checkpoint: &Path, out_dir: &Path) -> Result<f64> {
    let guidance = cfg.guidance()?;
    let model = load_model(checkpoint)?;
    let conditions: Vec<usize> = if cfg.conditions.is_empty() {
        (0..model.shape().n_conditions).collect()
    } else {
        cfg.conditions.clone()
    };
    for &c in &conditions {
        check_condition(&model, c)?;
    }
    let extractor = extractor_for(&model, cfg)?;
    let steps = cfg.step_indices(model.schedule())?;
    let probe = GuidanceProbe {
        ctx: SamplingContext {
            denoiser: &model,
            schedule: model.schedule(),
            steps: &steps,
            extractor: &extractor,
        },
        method: cfg.method,
        guidance,
        raw_frame: cfg.raw_frame(),
        lambda: cfg.lambda,
        against_baseline: cfg.against_baseline,
    };
    let ecfg = EvalConfig {
        condition_ids: conditions.clone(),
        repeats: cfg.repeats,
        master_seed: cfg.seed,
        jobs: cfg.jobs,
    };
    log::info!(
        "evaluating {} over {} conditions x {} repeats",
        cfg.method.name(),
        conditions.len(),
        cfg.repeats
    );
    let m = change_matrix(&probe, &ecfg)?;
    let report = EvalReport::new(cfg.method.name(), cfg.against_baseline, &m)?;
    write_text(&out_dir.join("change_matrix.csv"), &m.to_csv())?;
    write_text(&out_dir.join("report.json"), &to_json(&report))?;
    let manifest = EvalManifest {
        command: "eval",
        version: VERSION,
        checkpoint: checkpoint.display().to_string(),
        sampling: SamplingInfo {
            n_steps: model.schedule().n_steps,
            stride: cfg.stride,
            sampling_steps: steps.len(),
        },
        method: cfg.method.name(),
        conditions: &conditions,
        repeats: cfg.repeats,
        seed: cfg.seed,
        config: cfg,
    };
    write_text(&out_dir.join("manifest.json"), &to_json(&manifest))?;
    println!(
        "{} change matrix (rows: targeted, columns: measured)",
        cfg.method.name()
    );
    print!("{}", m.display_mean());
    println!(
        "diagonality {:.4} over {} runs ({} skipped)",
        report.diagonality, m.n_runs, m.skipped
    );
    if m.single_run {
        log::warn!("some row has a single run; its std is not informative");
    }
    Ok(report.diagonality)
}

fn print_check(r: &GradCheck) {
    println!(
        "{} {}: max relative error {:.3e} (tolerance {:.0e}, {} instances, {} coordinates)",
        if r.passed() { "PASS" } else { "FAIL" },
        r.name,
        r.max_rel_error,
        r.tolerance,
        r.instances,
        r.coordinates
    );
}

/// Finite-difference checks of both analytic gradients.
pub fn gradcheck(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let model = match checkpoint {
        Some(path) => load_model(path)?,
        None => {
            let (ds, _) = gen_dataset(&DatasetSpec::default_with_count(1), cfg.seed)?;
            let set = TrainingSet::new(ds.motions, ds.meta.skeleton.effector_indices.clone())?;
            let training = crate::diffusion::TrainingConfig {
                iterations: 0,
                ..cfg.training()
            };
            train_denoiser(&set, &cfg.schedule()?, &training)?.denoiser
        }
    };
    let extractor = extractor_for(&model, cfg)?;
    let motion = check_motion_gradient(cfg.instances, cfg.seed)?;
    print_check(&motion);
    let embedding = check_embedding_gradient(
        &model,
        model.shape().n_conditions,
        model.schedule(),
        &extractor,
        cfg.instances,
        cfg.seed,
    )?;
    print_check(&embedding);
    if motion.passed() && embedding.passed() {
        Ok(())
    } else {
        Err(Error::Contract(
            "analytic gradient disagrees with finite differences".into(),
        ))
    }
}

/// Settings the demo starts from: a 10-condition, 2-seed evaluation grid
/// sampled with stride 4 (250 steps).
pub fn demo_preset(c: &mut RunConfig) {
    c.stride = 4;
    c.conditions = (0..10).collect();
    c.repeats = 2;
}

#[derive(Serialize)]
struct DemoSummary {
    laban_diagonality: f64,
    classifier_diagonality: f64,
    weight_peak_ratio: f64,
}

/// Corpus, training, a full-schedule `weight=1.5` guided run and the Laban
/// and classifier evaluations, all under `out_dir`.
pub fn demo(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let corpus = out_dir.join("corpus.jsonl");
    let ckpt = out_dir.join("model.json");
    dataset(cfg, &corpus)?;
    train(cfg, &corpus, &ckpt)?;

    // One guided run is cheap enough for every timestep, which gives
    // the optimiser its full update budget.
    let g = RunConfig {
        stride: 1,
        tags: Vec::new(),
        scale: vec![format!("{}=1.5", Component::Weight.name())],
        ..cfg.clone()
    };
    let weight_peak_ratio = guide(&g, &ckpt, &out_dir.join("guide"))?[Component::Weight.index()];

    let mut diag = [0.0; 2];
    for (d, method) in diag.iter_mut().zip([Method::Laban, Method::Classifier]) {
        let e = RunConfig {
            method,
            ..cfg.clone()
        };
        *d = eval(&e, &ckpt, &out_dir.join(format!("eval-{}", method.name())))?;
    }
    let summary = DemoSummary {
        laban_diagonality: diag[0],
        classifier_diagonality: diag[1],
        weight_peak_ratio,
    };
    write_text(&out_dir.join("demo.json"), &to_json(&summary))?;
    println!(
        "demo: laban diagonality {:.4}, classifier diagonality {:.4}, weight peak ratio {:.4}",
        diag[0], diag[1], weight_peak_ratio
    );
    Ok(())
}
