//! Desk-scale numerical experiments: stagnation, error growth of recursive,
//! pairwise and dot-product sums, Horner evaluation, the random-bit sweep,
//! gradient descent, and the decimal π demo.
//!
//! Streams: the inputs of trial `t` come from `derive_stream(seed, t)` and are
//! shared by every mode, so modes are compared on identical data. Rounding
//! bits for mode `m`, grid index `a` (an `n` or `r` position) and trial `t`
//! come from `derive_stream(seed, 1 << 63 | m << 48 | a << 32 | t)`.
//! Results never depend on the number of threads.

mod experiments;
mod pi;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use crate::entropy::{derive_stream, Xoroshiro128Plus};
use crate::error::{Error, Result};
use crate::format::FloatFormat;
use crate::real::{rational_to_f64, WorkingReal};
use crate::rounding::{Intermediate, Rounding};

pub use pi::{run_pi_demo, PiDemoReport};

pub const CSV_HEADER: &str = "mode,n,r,trial,final,exact,abs_err,rel_err";

const ROUNDING_TAG: u64 = 1 << 63;

/// Rounding stream for mode `m`, grid index `a`, trial `t`.
pub fn rounding_stream(seed: u64, m: usize, a: usize, t: u32) -> Xoroshiro128Plus {
    let id = ROUNDING_TAG | ((m as u64 & 0x7FFF) << 48) | ((a as u64 & 0xFFFF) << 32) | t as u64;
    derive_stream(seed, id)
}

/// Input stream for trial `t`.
pub fn input_stream(seed: u64, t: u32) -> Xoroshiro128Plus {
    derive_stream(seed, t as u64)
}

/// `⌈log2(n) / 2⌉`.
pub fn heuristic_r(n: u64) -> u32 {
    let log2 = 64 - n.max(1).leading_zeros() - u32::from(n.is_power_of_two());
    log2.div_ceil(2)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Addends {
    /// Uniform on (0, 1), rounded to nearest into the format.
    Uniform,
    Constant(WorkingReal),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    /// `acc ← round(acc + delta)`, `n` times.
    Stagnation { acc0: WorkingReal, delta: WorkingReal },
    /// Recursive summation, recorded at each `n` of the grid.
    SumGrowth { addends: Addends },
    /// Balanced-tree summation.
    Pairwise { addends: Addends },
    /// Inner product, one rounding after each multiply and each add.
    Dot,
    /// Degree-`n` polynomial at `point`.
    Horner { point: WorkingReal },
    /// Recursive summation of `n` addends for each `r` in the grid
    /// (`r = 0` is the intermediate rounding alone). Ignores `modes`.
    RSweep { r_grid: Vec<u32>, intermediate: Intermediate },
    /// Gradient descent on `½‖w − w*‖²` for `n` iterations from `w = 0`.
    Gd { dim: usize, step: WorkingReal },
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Stagnation { .. } => "stagnation",
            ExperimentKind::SumGrowth { .. } => "sum_growth",
            ExperimentKind::Pairwise { .. } => "pairwise",
            ExperimentKind::Dot => "dot",
            ExperimentKind::Horner { .. } => "horner",
            ExperimentKind::RSweep { .. } => "r_sweep",
            ExperimentKind::Gd { .. } => "gd",
        }
    }

    fn fits_slope(&self) -> bool {
        matches!(
            self,
            ExperimentKind::SumGrowth { .. }
                | ExperimentKind::Pairwise { .. }
                | ExperimentKind::Dot
                | ExperimentKind::Horner { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub fmt: FloatFormat,
    pub modes: Vec<Rounding>,
    /// Problem sizes; single-size experiments use the first entry.
    pub n_grid: Vec<u64>,
    pub trials: u32,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, fmt: FloatFormat, modes: Vec<Rounding>, n_grid: Vec<u64>) -> Self {
        ExperimentSpec {
            kind,
            fmt,
            modes,
            n_grid,
            trials: 1,
            seed: 0,
            threads: None,
        }
    }

    pub fn with_trials(mut self, trials: u32) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Contract("trials must be at least 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::Contract("problem sizes must be at least 1".into()));
        }
        if self.trials > u32::MAX >> 1 || self.n_grid.len() > 0xFFFF {
            return Err(Error::Capacity("too many trials or grid points".into()));
        }
        match &self.kind {
            ExperimentKind::RSweep { r_grid, .. } => {
                if r_grid.is_empty() || r_grid.len() > 0xFFFF {
                    return Err(Error::Contract("r grid must be non-empty".into()));
                }
            }
            ExperimentKind::Gd { dim, .. } if *dim == 0 => {
                return Err(Error::Contract("dimension must be at least 1".into()));
            }
            _ if self.modes.is_empty() => {
                return Err(Error::Contract("at least one rounding mode is required".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub mode: String,
    pub n: u64,
    pub r: Option<u32>,
    pub trial: u32,
    pub final_value: WorkingReal,
    pub exact: WorkingReal,
    pub abs_err: f64,
    pub rel_err: f64,
}

impl Row {
    fn new(mode: String, n: u64, r: Option<u32>, trial: u32, final_value: WorkingReal, exact: WorkingReal) -> Row {
        let diff = (&final_value - &exact).abs();
        let abs_err = diff.to_f64();
        let rel_err = if diff.is_zero() {
            0.0
        } else if exact.is_zero() {
            f64::INFINITY
        } else {
            rational_to_f64(&(diff.to_rational() / exact.abs().to_rational()))
        };
        Row { mode, n, r, trial, final_value, exact, abs_err, rel_err }
    }

    fn csv(&self, out: &mut String) {
        let r = self.r.map(|r| r.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6e},{:.6e}",
            self.mode,
            self.n,
            r,
            self.trial,
            self.final_value.to_hex_float(0),
            self.exact.to_hex_float(0),
            self.abs_err,
            self.rel_err
        );
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mode: String,
    pub n: u64,
    pub r: Option<u32>,
    pub trials: usize,
    pub median_rel_err: f64,
    pub mean_rel_err: f64,
    pub std_rel_err: f64,
    pub mean_final: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub kind: String,
    pub format: String,
    pub seed: u64,
    pub rows: Vec<Row>,
    pub summary: Vec<Summary>,
    /// Least-squares slope of ln(median rel_err) against ln(n), per mode.
    pub slopes: BTreeMap<String, Option<f64>>,
    /// Experiment-specific results.
    pub extra: serde_json::Map<String, Value>,
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            row.csv(&mut out);
        }
        out
    }

    pub fn summary_json(&self) -> Value {
        let mut v = json!({
            "kind": self.kind,
            "format": self.format,
            "seed": self.seed,
            "summary": self.summary,
            "slopes": self.slopes,
        });
        v.as_object_mut().expect("object").extend(self.extra.clone());
        v
    }

    pub fn summary_for(&self, mode: &str, n: u64, r: Option<u32>) -> Option<&Summary> {
        self.summary.iter().find(|s| s.mode == mode && s.n == n && s.r == r)
    }

    pub fn median(&self, mode: &str, n: u64) -> Option<f64> {
        self.summary.iter().find(|s| s.mode == mode && s.n == n).map(|s| s.median_rel_err)
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn summarize(rows: &[Row]) -> Vec<Summary> {
    let mut out: Vec<Summary> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (&rows[start].mode, rows[start].n, rows[start].r);
        let mut end = start;
        while end < rows.len() && (&rows[end].mode, rows[end].n, rows[end].r) == key {
            end += 1;
        }
        let group = &rows[start..end];
        let mut errs: Vec<f64> = group.iter().map(|r| r.rel_err).collect();
        let count = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / count;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / count;
        out.push(Summary {
            mode: key.0.clone(),
            n: key.1,
            r: key.2,
            trials: group.len(),
            median_rel_err: median(&mut errs),
            mean_rel_err: mean,
            std_rel_err: var.sqrt(),
            mean_final: group.iter().map(|r| r.final_value.to_f64()).sum::<f64>() / count,
        });
        start = end;
    }
    out
}

fn slopes(summary: &[Summary]) -> BTreeMap<String, Option<f64>> {
    let mut by_mode: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for s in summary {
        by_mode
            .entry(s.mode.clone())
            .or_default()
            .push(((s.n as f64).ln(), s.median_rel_err.ln()));
    }
    by_mode.into_iter().map(|(m, pts)| (m, fit_slope(&pts))).collect()
}

/// Run an experiment. Rows are ordered by mode, grid point, then trial.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let run = || experiments::run(spec);
    let (rows, extra) = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::Io(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let summary = summarize(&rows);
    let slopes = if spec.kind.fits_slope() && spec.n_grid.len() >= 2 {
        slopes(&summary)
    } else {
        BTreeMap::new()
    };
    Ok(ExperimentResult {
        kind: spec.kind.name().to_string(),
        format: spec.fmt.name().to_string(),
        seed: spec.seed,
        rows,
        summary,
        slopes,
        extra,
    })
}
