//! Controllability evaluation: relative-change matrices, diagonality, a
//! diversity proxy and side-by-side feature exports.

mod probe;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::Component;
use crate::motion::{laban_scalars, LabanExtractor, LabanSeries, Motion, CHANNEL_NAMES};
use crate::rng::derive_seed;

pub use probe::{GuidanceProbe, Method};

/// Scalars at or below this value are treated as degenerate baselines.
pub const DEGENERATE_FLOOR: f64 = 1e-8;

/// Component-wise `(f_large - f_small) / f_small`.
pub fn relative_change(f_small: [f64; 4], f_large: [f64; 4]) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for i in 0..4 {
        if !(f_small[i] > DEGENERATE_FLOOR) {
            return Err(Error::DegenerateBaseline(format!(
                "{} scalar {:e} is not above {DEGENERATE_FLOOR:e}",
                CHANNEL_NAMES[i], f_small[i]
            )));
        }
        out[i] = (f_large[i] - f_small[i]) / f_small[i];
    }
    Ok(out)
}

/// `sum_i A_ii^2 / sum_ij A_ij^2`.
pub fn diagonality(a: &[[f64; 4]; 4]) -> Result<f64> {
    let total: f64 = a.iter().flatten().map(|v| v * v).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Evaluation(
            "diagonality is undefined for a zero or non-finite matrix".into(),
        ));
    }
    Ok((0..4).map(|i| a[i][i] * a[i][i]).sum::<f64>() / total)
}

/// Mean pairwise Euclidean distance between flattened motions.
pub fn diversity_proxy(motions: &[Motion]) -> Result<f64> {
    if motions.len() < 2 {
        return Err(Error::Evaluation(
            "diversity needs at least two motions".into(),
        ));
    }
    let n = motions[0].as_slice().len();
    if motions.iter().any(|m| m.as_slice().len() != n) {
        return Err(Error::Dimension("motions differ in shape".into()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..motions.len() {
        for j in i + 1..motions.len() {
            let d2: f64 = motions[i]
                .as_slice()
                .iter()
                .zip(motions[j].as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += d2.sqrt();
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Evaluation scalars for one `(row, condition, repeat)` cell.
pub trait ChangeProbe: Sync {
    /// Returns `(f_initial, f_final)` for the targeted component.
    fn cell(&self, row: Component, condition_id: usize, seed: u64) -> Result<([f64; 4], [f64; 4])>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub condition_ids: Vec<usize>,
    pub repeats: usize,
    pub master_seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
}

/// Rows are targeted components, columns measured components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeMatrix {
    pub mean: [[f64; 4]; 4],
    /// Population standard deviation; 0 for single-run rows.
    pub std: [[f64; 4]; 4],
    /// Valid runs over all rows.
    pub n_runs: usize,
    pub row_runs: [usize; 4],
    /// Cells dropped for a degenerate baseline.
    pub skipped: usize,
    /// Some row has a single run, so its std carries no information.
    pub single_run: bool,
}

impl ChangeMatrix {
    pub fn diagonality(&self) -> Result<f64> {
        diagonality(&self.mean)
    }

    /// One row per targeted component: four mean then four std columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for suffix in ["mean", "std"] {
            for name in CHANNEL_NAMES {
                out.push_str(&format!(",{name}_{suffix}"));
            }
        }
        out.push('\n');
        for c in Component::ALL {
            out.push_str(c.name());
            for v in self.mean[c.index()].iter().chain(&self.std[c.index()]) {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
        out
    }

    /// Pretty-printed 4x4 mean matrix.
    pub fn display_mean(&self) -> String {
        let mut out = format!("{:>8}", "");
        for name in CHANNEL_NAMES {
            out.push_str(&format!("{name:>10}"));
        }
        out.push('\n');
        for c in Component::ALL {
            out.push_str(&format!("{:>8}", c.name()));
            for v in self.mean[c.index()] {
                out.push_str(&format!("{v:>10.4}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs every cell of the 4-row evaluation grid and aggregates the relative
/// changes. Cell seeds are `derive_seed(master, [row, condition, repeat])`,
/// so the result does not depend on `jobs`.
pub fn change_matrix(probe: &dyn ChangeProbe, cfg: &EvalConfig) -> Result<ChangeMatrix> {
    if cfg.condition_ids.is_empty() || cfg.repeats == 0 {
        return Err(Error::InvalidConfig(
            "evaluation needs at least one condition and one repeat".into(),
        ));
    }
    let mut cells = Vec::new();
    for row in Component::ALL {
        for &c in &cfg.condition_ids {
            for r in 0..cfg.repeats {
                let seed = derive_seed(cfg.master_seed, &[row.index() as u64, c as u64, r as u64]);
                cells.push((row, c, seed));
            }
        }
    }
    let run = |&(row, c, seed): &(Component, usize, u64)| -> Result<Option<[f64; 4]>> {
        let (fi, ff) = probe.cell(row, c, seed)?;
        match relative_change(fi, ff) {
            Ok(rc) => Ok(Some(rc)),
            Err(Error::DegenerateBaseline(msg)) => {
                log::warn!("skipping {} row, condition {c}: {msg}", row.name());
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    let results: Vec<Result<Option<[f64; 4]>>> = if cfg.jobs == 1 {
        cells.iter().map(run).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run).collect())
    };

    let mut rows: [Vec<[f64; 4]>; 4] = Default::default();
    let mut skipped = 0;
    for ((row, _, _), res) in cells.iter().zip(results) {
        match res? {
            Some(rc) => rows[row.index()].push(rc),
            None => skipped += 1,
        }
    }
    let mut m = ChangeMatrix {
        mean: [[0.0; 4]; 4],
        std: [[0.0; 4]; 4],
        n_runs: 0,
        row_runs: [0; 4],
        skipped,
        single_run: false,
    };
    for (r, runs) in rows.iter().enumerate() {
        if runs.is_empty() {
            return Err(Error::Evaluation(format!(
                "every cell of the {} row has a degenerate baseline",
                Component::ALL[r].name()
            )));
        }
        let n = runs.len() as f64;
        for c in 0..4 {
            let mean = runs.iter().map(|v| v[c]).sum::<f64>() / n;
            let var = runs
                .iter()
                .map(|v| (v[c] - mean) * (v[c] - mean))
                .sum::<f64>()
                / n;
            m.mean[r][c] = mean;
            m.std[r][c] = var.sqrt();
        }
        m.row_runs[r] = runs.len();
        m.n_runs += runs.len();
        m.single_run |= runs.len() == 1;
    }
    Ok(m)
}

/// JSON evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub against_baseline: bool,
    pub matrix_mean: [[f64; 4]; 4],
    pub matrix_std: [[f64; 4]; 4],
    pub diagonality: f64,
    pub n_runs: usize,
    pub row_runs: [usize; 4],
    pub skipped: usize,
    pub single_run: bool,
}

impl EvalReport {
    pub fn new(method: &str, against_baseline: bool, m: &ChangeMatrix) -> Result<Self> {
        Ok(Self {
            method: method.to_string(),
            against_baseline,
            matrix_mean: m.mean,
            matrix_std: m.std,
            diagonality: m.diagonality()?,
            n_runs: m.n_runs,
            row_runs: m.row_runs,
            skipped: m.skipped,
            single_run: m.single_run,
        })
    }
}

/// Baseline and guided feature series of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TcFcComparison {
    pub tc: LabanSeries,
    pub fc: LabanSeries,
    /// `max_t fc / max_t tc` per channel; 1 where both peaks are equal.
    pub peak_ratios: [f64; 4],
}

impl TcFcComparison {
    /// Long-format CSV `frame,channel,tc_value,fc_value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,channel,tc_value,fc_value\n");
        for (f, (a, b)) in self.tc.values().iter().zip(self.fc.values()).enumerate() {
            for c in 0..4 {
                out.push_str(&format!("{f},{},{:?},{:?}\n", CHANNEL_NAMES[c], a[c], b[c]));
            }
        }
        out
    }
}

pub fn compare_tc_fc(
    baseline: &Motion,
    guided: &Motion,
    extractor: &LabanExtractor,
) -> Result<TcFcComparison> {
    if baseline.layout() != guided.layout() {
        return Err(Error::Dimension(format!(
            "baseline has {} frames x {} joints, guided has {} x {}",
            baseline.n_frames(),
            baseline.n_joints(),
            guided.n_frames(),
            guided.n_joints()
        )));
    }
    let tc = extractor.series(baseline)?;
    let fc = extractor.series(guided)?;
    let (pt, pf) = (laban_scalars(&tc).to_array(), laban_scalars(&fc).to_array());
    let mut peak_ratios = [1.0; 4];
    for c in 0..4 {
        if pt[c] != pf[c] {
            peak_ratios[c] = pf[c] / pt[c];
        }
    }
    Ok(TcFcComparison {
        tc,
        fc,
        peak_ratios,
    })
}
