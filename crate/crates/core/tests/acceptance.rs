//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.
//!
//! The end-to-end criteria share one `demo` run in a temporary directory.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use laban_guide::diffusion::{
    ddim_step, forward_diffuse, load_checkpoint, sample, Denoiser, NoiseSchedule, PinnedDenoiser,
    StepIndices,
};
use laban_guide::eval::diagonality;
use laban_guide::gradcheck::{check_embedding_gradient, check_motion_gradient};
use laban_guide::motion::{
    gaussian_smooth, kinematics, laban_series, EndEffectorSet, LabanExtractor, Motion,
    MotionLayout, SmoothingConfig,
};
use laban_guide::rng::{normal_vec, seeded};
use laban_guide::synthetic::{gen_motion, DatasetSpec};
use rand::Rng;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_laban-guide");

type Verdict = Result<String, String>;

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .unwrap_or_else(|e| panic!("cannot launch {BIN}: {e}"))
}

fn run_ok(args: &[&str]) -> Result<Output, String> {
    let out = run(args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`{}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_json(path: &Path) -> Result<Value, String> {
    serde_json::from_slice(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn s(p: &Path) -> &str {
    p.to_str().expect("temporary paths are UTF-8")
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Published change matrices and diagonalities.
const TABLE: [(&str, [[f64; 4]; 4], f64); 4] = [
    (
        "laban",
        [
            [3.081, 0.323, 0.023, 0.163],
            [0.357, 0.418, 0.081, 0.098],
            [0.065, 0.029, 0.379, -0.032],
            [-0.044, -0.040, -0.012, 1.613],
        ],
        0.978,
    ),
    (
        "prompt-editing",
        [
            [0.791, 0.394, 0.272, 0.246],
            [0.235, 0.065, 0.005, 0.017],
            [0.055, -0.101, -0.117, -0.005],
            [0.620, 0.265, 0.175, 0.180],
        ],
        0.445,
    ),
    (
        "raw-frame",
        [
            [3.084, 0.539, -0.003, 0.209],
            [-0.085, 0.179, 0.018, -0.040],
            [0.011, 0.044, 0.476, 0.014],
            [-0.023, -0.018, -0.000, 1.606],
        ],
        0.973,
    ),
    (
        "classifier",
        [
            [0.510, 0.232, 0.150, 0.072],
            [0.048, 0.047, 0.044, 0.011],
            [0.040, 0.039, 0.043, 0.009],
            [0.030, 0.016, 0.017, 0.322],
        ],
        0.802,
    ),
];

fn diagonality_reproduction() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, m, published) in TABLE {
        let d = diagonality(&m).map_err(|e| e.to_string())?;
        ok &= (d - published).abs() <= 0.002;
        parts.push(format!("{name} {d:.4} vs {published}"));
    }
    check(ok, parts.join(", "))
}

fn gradient_suite(demo: &Demo) -> Verdict {
    let motion = check_motion_gradient(10, 2024).map_err(|e| e.to_string())?;
    let model = load_checkpoint(&demo.checkpoint).map_err(|e| e.to_string())?;
    let fx = EndEffectorSet::new(model.effectors().to_vec(), model.layout().n_joints())
        .map_err(|e| e.to_string())?;
    let ex = LabanExtractor::new(fx, SmoothingConfig::default()).map_err(|e| e.to_string())?;
    let emb = check_embedding_gradient(
        &model,
        model.shape().n_conditions,
        model.schedule(),
        &ex,
        10,
        2024,
    )
    .map_err(|e| e.to_string())?;
    check(
        motion.passed() && emb.passed() && motion.max_rel_error < 1e-4 && emb.max_rel_error < 1e-3,
        format!(
            "motion path {:.2e} (< 1e-4), embedding path {:.2e} (< 1e-3), 10 instances each",
            motion.max_rel_error, emb.max_rel_error
        ),
    )
}

/// Straight-loop features: zero-padded backward differences, squared speed,
/// acceleration and jerk norms summed over effectors, bounding-box volume
/// over all joints.
fn oracle(m: &Motion, effectors: &[usize]) -> Vec<[f64; 4]> {
    let d = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let v = |t: usize, k: usize| {
        if t == 0 {
            [0.0; 3]
        } else {
            d(m.position(t, k), m.position(t - 1, k))
        }
    };
    let a = |t: usize, k: usize| {
        if t < 2 {
            [0.0; 3]
        } else {
            d(v(t, k), v(t - 1, k))
        }
    };
    let j = |t: usize, k: usize| {
        if t < 3 {
            [0.0; 3]
        } else {
            d(a(t, k), a(t - 1, k))
        }
    };
    let sq = |x: [f64; 3]| x.iter().map(|c| c * c).sum::<f64>();
    (0..m.n_frames())
        .map(|t| {
            let mut row = [0.0; 4];
            for &k in effectors {
                row[0] += sq(v(t, k));
                row[1] += sq(a(t, k)).sqrt();
                row[2] += sq(j(t, k)).sqrt();
            }
            row[3] = (0..3)
                .map(|c| {
                    let xs = (0..m.n_joints()).map(|k| m.position(t, k)[c]);
                    xs.clone().fold(f64::MIN, f64::max) - xs.fold(f64::MAX, f64::min)
                })
                .product();
            row
        })
        .collect()
}

fn laban_oracle() -> Verdict {
    let mut rng = seeded(77);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let frames = rng.random_range(4..80);
        let joints = rng.random_range(1..10);
        let names: Vec<String> = (0..joints).map(|k| format!("j{k}")).collect();
        let scale = rng.random_range(0.01..2.0);
        let p = normal_vec(&mut rng, frames * joints * 3)
            .into_iter()
            .map(|x| scale * x)
            .collect();
        let m = Motion::new(20.0, names, p).map_err(|e| e.to_string())?;
        let fx: Vec<usize> = (0..joints).filter(|k| (k + i) % 3 != 1).collect();
        let fx = if fx.is_empty() { vec![0] } else { fx };
        let set = EndEffectorSet::new(fx.clone(), joints).map_err(|e| e.to_string())?;
        let got =
            laban_series(&m, &set, &SmoothingConfig::disabled()).map_err(|e| e.to_string())?;
        for (a, b) in got.values().iter().zip(oracle(&m, &fx)) {
            for c in 0..4 {
                worst = worst.max((a[c] - b[c]).abs());
            }
        }
    }
    check(
        worst <= 1e-9,
        format!("max abs difference {worst:.2e} over 100 motions (<= 1e-9)"),
    )
}

fn ddim_inversion() -> Verdict {
    let sched = NoiseSchedule::default();
    let mut rng = seeded(5);
    let mut round_trip = 0.0f64;
    for t in [1, 10, 250, 500, 999, 1000] {
        let x0 = normal_vec(&mut rng, 420);
        let eps = normal_vec(&mut rng, 420);
        let xt = forward_diffuse(&x0, t, &eps, &sched).map_err(|e| e.to_string())?;
        let back = ddim_step(&xt, t, 0, &eps, &sched).map_err(|e| e.to_string())?;
        round_trip = round_trip.max(
            back.iter()
                .zip(&x0)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }
    let layout = MotionLayout {
        fps: 20.0,
        joint_names: (0..7).map(|k| format!("j{k}")).collect(),
        n_frames: 60,
    };
    let target = normal_vec(&mut rng, layout.flat_len());
    let d = PinnedDenoiser::new(layout, sched.clone(), target.clone(), 1, 4)
        .map_err(|e| e.to_string())?;
    let e = d.condition_embedding(0).map_err(|e| e.to_string())?;
    let mut pinned = 0.0f64;
    for k in 0..5 {
        let z = normal_vec(&mut seeded(900 + k), target.len());
        let m =
            sample(&d, &e, &z, &sched, &StepIndices::full(&sched)).map_err(|e| e.to_string())?;
        pinned = pinned.max(
            m.as_slice()
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }
    check(
        round_trip <= 1e-9 && pinned <= 1e-6,
        format!("consistent-noise round trip {round_trip:.2e} (<= 1e-9), pinned sampling {pinned:.2e} over 5 draws (<= 1e-6)"),
    )
}

fn identity_fixed_point(demo: &Demo) -> Verdict {
    let start = Instant::now();
    for seed in 0..5 {
        let dir = demo.root.join(format!("identity-{seed}"));
        let seed = seed.to_string();
        run_ok(&[
            "guide",
            "--checkpoint",
            s(&demo.checkpoint),
            "--stride",
            "20",
            "--seed",
            &seed,
            "--out-dir",
            s(&dir),
        ])?;
        for (a, b) in [
            ("baseline.json", "guided.json"),
            ("baseline_laban.csv", "guided_laban.csv"),
        ] {
            if read(&dir.join(a))? != read(&dir.join(b))? {
                return Err(format!("seed {seed}: {b} differs from {a}"));
            }
        }
    }
    Ok(format!(
        "guided output byte-identical to baseline for 5 seeds at 50 steps ({:.1} s)",
        start.elapsed().as_secs_f64()
    ))
}

fn controllability(demo: &Demo) -> Verdict {
    let laban = read_json(&demo.root.join("eval-laban/report.json"))?;
    let classifier = read_json(&demo.root.join("eval-classifier/report.json"))?;
    let m = |r: &Value, i: usize| r["matrix_mean"][i][i].as_f64().unwrap_or(f64::NAN);
    let d = |r: &Value| r["diagonality"].as_f64().unwrap_or(f64::NAN);
    let runs = laban["n_runs"].as_u64().unwrap_or(0);
    let (w, sh, dl, dc) = (m(&laban, 0), m(&laban, 3), d(&laban), d(&classifier));
    check(
        w > 0.0 && sh > 0.0 && dl >= 0.5 && dl > dc && runs == 80,
        format!(
            "weight diag {w:.4} > 0, shape diag {sh:.4} > 0, diagonality {dl:.4} >= 0.5 and > classifier {dc:.4} \
             ({runs} runs; demo {:.0} s)",
            demo.seconds
        ),
    )
}

fn smoothing_ablation(root: &Path) -> Verdict {
    let spec = DatasetSpec::default_with_count(1);
    let mut worst = f64::INFINITY;
    for (c, fc) in spec.families.iter().enumerate() {
        let m = gen_motion(
            &spec.skeleton,
            &fc.family,
            spec.n_frames,
            spec.fps,
            31 + c as u64,
            true,
        )
        .map_err(|e| e.to_string())?;
        let mean_jerk = |m: &Motion| -> Result<f64, String> {
            let k = kinematics(m).map_err(|e| e.to_string())?;
            let mut total = 0.0;
            for t in 0..m.n_frames() {
                for j in 0..m.n_joints() {
                    total += k.jerk_at(t, j).iter().map(|x| x * x).sum::<f64>().sqrt();
                }
            }
            Ok(total / (m.n_frames() * m.n_joints()) as f64)
        };
        let smooth = gaussian_smooth(&m, &SmoothingConfig::default()).map_err(|e| e.to_string())?;
        worst = worst.min(mean_jerk(&m)? / mean_jerk(&smooth)?);
    }
    // Same comparison through `analyze` on the root joint of one motion.
    let m = gen_motion(
        &spec.skeleton,
        &spec.families[0].family,
        spec.n_frames,
        spec.fps,
        3,
        true,
    )
    .map_err(|e| e.to_string())?;
    let path = root.join("jittered.json");
    std::fs::write(&path, m.to_json()).map_err(|e| e.to_string())?;
    let csv = root.join("jittered.csv");
    run_ok(&["analyze", s(&path), "--compare-smoothing", "--out", s(&csv)])?;
    let text = String::from_utf8(read(&csv)?).map_err(|e| e.to_string())?;
    let header: Vec<&str> = text.lines().next().unwrap_or("").split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (Some(js), Some(jr)) = (col("jerk"), col("raw_jerk")) else {
        return Err("analyze CSV lacks jerk columns".into());
    };
    let (mut ss, mut sr) = (0.0, 0.0);
    for line in text.lines().skip(1) {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.parse().unwrap_or(f64::NAN))
            .collect();
        ss += cells[js];
        sr += cells[jr];
    }
    let cli_ratio = sr / ss;
    check(
        worst >= 2.0 && cli_ratio >= 2.0,
        format!("unsmoothed / smoothed mean |jerk| >= {worst:.1}x over 12 families, {cli_ratio:.1}x via analyze (>= 2)"),
    )
}

fn failure_mode(demo: &Demo) -> Verdict {
    let start = Instant::now();
    let dir = demo.root.join("lr5");
    let out = run(&[
        "guide",
        "--checkpoint",
        s(&demo.checkpoint),
        "--stride",
        "20",
        "--lr",
        "5.0",
        "--scale",
        "weight=1.5",
        "--out-dir",
        s(&dir),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let diag = stderr
        .lines()
        .find(|l| l.starts_with("error:"))
        .unwrap_or("")
        .to_string();
    check(
        out.status.code() == Some(3)
            && diag.contains("sampling step")
            && !dir.join("guided.json").exists(),
        format!(
            "exit {:?} in {:.1} s, diagnostic `{diag}`",
            out.status.code(),
            start.elapsed().as_secs_f64()
        ),
    )
}

/// Runs `args` twice into `a` and `b` (substituted for `{}`) and compares
/// every file produced.
fn twice(root: &Path, name: &str, args: &[&str]) -> Result<usize, String> {
    let mut dirs = Vec::new();
    for k in 0..2 {
        let dir = root.join(format!("{name}-{k}"));
        let d = s(&dir).to_string();
        let argv: Vec<String> = args.iter().map(|a| a.replace("{}", &d)).collect();
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        run_ok(&argv)?;
        dirs.push(dir);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dirs[0])
        .map_err(|e| e.to_string())?
        .map(|e| e.map(|e| e.path()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    files.sort();
    for f in &files {
        let other = dirs[1].join(f.file_name().expect("directory entries have names"));
        let (x, y) = (read(f)?, read(&other)?);
        // Manifests echo the output path; compare them with it masked.
        let mask = |b: Vec<u8>, d: &Path| String::from_utf8_lossy(&b).replace(s(d), "<dir>");
        if mask(x, &dirs[0]) != mask(y, &dirs[1]) {
            return Err(format!("{name}: {} differs between reruns", f.display()));
        }
    }
    Ok(files.len())
}

fn determinism(demo: &Demo) -> Verdict {
    let r = &demo.root;
    let ck = s(&demo.checkpoint);
    let corpus = s(&demo.corpus);
    let mut n = 0;
    n += twice(
        r,
        "dataset",
        &["dataset", "--out", "{}/corpus.jsonl", "--count", "3"],
    )?;
    n += twice(
        r,
        "train",
        &[
            "train",
            "--dataset",
            corpus,
            "--out",
            "{}/model.json",
            "--iterations",
            "200",
        ],
    )?;
    n += twice(
        r,
        "generate",
        &[
            "generate",
            "--checkpoint",
            ck,
            "--stride",
            "20",
            "--seed",
            "9",
            "--out",
            "{}/m.json",
        ],
    )?;
    n += twice(
        r,
        "guide",
        &[
            "guide",
            "--checkpoint",
            ck,
            "--stride",
            "20",
            "--seed",
            "4",
            "--tags",
            "Strong,Far",
            "--out-dir",
            "{}",
        ],
    )?;
    n += twice(
        r,
        "analyze",
        &[
            "analyze",
            s(&demo.root.join("guide/guided.json")),
            "--compare-smoothing",
            "--out",
            "{}/a.csv",
        ],
    )?;
    n += twice(
        r,
        "eval",
        &[
            "eval",
            "--checkpoint",
            ck,
            "--stride",
            "20",
            "--conditions",
            "1,7",
            "--repeats",
            "1",
            "--out-dir",
            "{}",
        ],
    )?;
    // Job count must not change the report.
    let dir = r.join("eval-jobs");
    run_ok(&[
        "eval",
        "--checkpoint",
        ck,
        "--stride",
        "20",
        "--conditions",
        "1,7",
        "--repeats",
        "1",
        "--jobs",
        "3",
        "--out-dir",
        s(&dir),
    ])?;
    if read(&dir.join("report.json"))? != read(&r.join("eval-0/report.json"))? {
        return Err("eval report depends on --jobs".into());
    }
    // The demo corpus regenerates byte for byte.
    let again = r.join("corpus-again.jsonl");
    run_ok(&["dataset", "--out", s(&again)])?;
    if read(&again)? != read(&demo.corpus)? {
        return Err("dataset rerun differs from the demo corpus".into());
    }
    Ok(format!(
        "{n} files identical across reruns of dataset, train, generate, guide, analyze and eval"
    ))
}

struct Demo {
    root: PathBuf,
    checkpoint: PathBuf,
    corpus: PathBuf,
    seconds: f64,
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path().to_path_buf();
    let start = Instant::now();
    let demo_dir = root.join("demo");
    let demo = match run_ok(&["demo", "--out-dir", s(&demo_dir)]) {
        Ok(_) => Some(Demo {
            checkpoint: demo_dir.join("model.json"),
            corpus: demo_dir.join("corpus.jsonl"),
            root: demo_dir,
            seconds: start.elapsed().as_secs_f64(),
        }),
        Err(e) => {
            println!("demo run failed: {e}");
            None
        }
    };

    let needs_demo = |f: fn(&Demo) -> Verdict| -> Verdict {
        match &demo {
            Some(d) => f(d),
            None => Err("demo run failed".into()),
        }
    };
    let results: Vec<(&str, Verdict)> = vec![
        ("diagonality reproduction", diagonality_reproduction()),
        ("gradient suite", needs_demo(gradient_suite)),
        ("laban oracle equivalence", laban_oracle()),
        ("ddim inversion", ddim_inversion()),
        (
            "identity-scale fixed point",
            needs_demo(identity_fixed_point),
        ),
        ("end-to-end controllability", needs_demo(controllability)),
        ("smoothing ablation", smoothing_ablation(&root)),
        ("failure-mode surfacing", needs_demo(failure_mode)),
        ("determinism", needs_demo(determinism)),
    ];

    let mut failed = 0;
    for (name, verdict) in &results {
        match verdict {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.0} s)",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
