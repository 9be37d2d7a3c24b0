//! File-based distributed evaluation.
//!
//! A job directory holds `manifest.json` and one `row_<k>.dat` per
//! interpolation point. Workers fill in the rows of their range, skipping
//! rows that are already present and valid; merge reads every row back,
//! interpolates and runs the holdout check.
//!
//! Row file layout:
//!
//! ```text
//! ROW <k> <deg_X> <precision>
//! C R ...        real part of the point
//! C R ...        imaginary part
//! R ...          deg_X coefficient records, X^{deg_X-1} first
//! ```

use std::fs;
use std::io::{self, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    check_holdout, choose_points, evaluate_row, interpolation_phase, pilot_run, points_needed, BivariatePolynomial,
    EngineError, EngineOptions, EvalRow, InterpolationPlan,
};
use crate::modfunc::FunctionFamily;
use crate::numerics::{BigComplex, BigReal};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum JobError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("row {k}: {msg}")]
    Row { k: usize, msg: String },
    #[error("missing or corrupt rows: {0:?}")]
    MissingRows(Vec<usize>),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> JobError + '_ {
    move |source| JobError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobManifest {
    pub version: u32,
    pub family: FunctionFamily,
    pub deg_j: usize,
    pub precision: u32,
    pub sparse: bool,
    /// Total number of interpolation points.
    pub points: usize,
    /// Point ranges, one per worker; together they partition `0..points`.
    pub ranges: Vec<Range<usize>>,
    pub job_dir: PathBuf,
}

impl JobManifest {
    /// Splits the points of a plan into `workers` contiguous ranges.
    pub fn new(
        family: FunctionFamily,
        deg_j: usize,
        precision: u32,
        sparse: bool,
        workers: usize,
        job_dir: &Path,
    ) -> Result<Self, JobError> {
        if workers == 0 {
            return Err(JobError::Manifest("need at least one worker".into()));
        }
        let points = points_needed(deg_j, sparse);
        let ranges = (0..workers)
            .map(|w| (w * points / workers)..((w + 1) * points / workers))
            .collect();
        let m = JobManifest {
            version: MANIFEST_VERSION,
            family,
            deg_j,
            precision,
            sparse,
            points,
            ranges,
            job_dir: job_dir.to_path_buf(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), JobError> {
        let bad = |msg: String| Err(JobError::Manifest(msg));
        if self.version != MANIFEST_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        self.family.validated().map_err(|e| JobError::Manifest(e.to_string()))?;
        if self.points != points_needed(self.deg_j, self.sparse) {
            return bad(format!("{} points do not fit deg_j {}", self.points, self.deg_j));
        }
        let mut next = 0;
        for r in &self.ranges {
            if r.start != next || r.end < r.start {
                return bad(format!("ranges do not partition 0..{}: {:?}", self.points, self.ranges));
            }
            next = r.end;
        }
        if next != self.points {
            return bad(format!("ranges do not partition 0..{}: {:?}", self.points, self.ranges));
        }
        Ok(())
    }

    pub fn path(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_FILE)
    }

    pub fn load(dir: &Path) -> Result<Self, JobError> {
        let path = Self::path(dir);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let m: JobManifest = serde_json::from_str(&text).map_err(|e| JobError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<(), JobError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let text = serde_json::to_string_pretty(self).map_err(|e| JobError::Manifest(e.to_string()))?;
        write_atomically(&Self::path(dir), text.as_bytes())
    }

    pub fn plan(&self) -> Result<InterpolationPlan, JobError> {
        let plan = choose_points(&self.family, self.deg_j, self.precision, self.sparse)?;
        if plan.points.len() != self.points {
            return Err(JobError::Manifest(format!(
                "plan has {} points, manifest {}",
                plan.points.len(),
                self.points
            )));
        }
        Ok(plan)
    }
}

/// Builds a manifest the way `compute` would choose its first attempt: the
/// base degree from the family (or the override) and the precision from a
/// pilot run (or the override).
pub fn prepare_job(
    family: &FunctionFamily,
    options: &EngineOptions,
    workers: usize,
    job_dir: &Path,
) -> Result<JobManifest, JobError> {
    let family = family.validated().map_err(EngineError::from)?;
    let deg_j = options.deg_j_override.or(family.profile().deg_j_known).ok_or_else(|| {
        JobError::Manifest(format!("{family} has no known base degree; pass a degree override"))
    })?;
    let precision = match options.precision_override {
        Some(p) => p,
        None => pilot_run(&family, deg_j, options.safety, options.sparse)?.production_precision,
    };
    JobManifest::new(family, deg_j, precision, options.sparse, workers, job_dir)
}

pub fn row_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("row_{k}.dat"))
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), JobError> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn row_to_string(row: &EvalRow, precision: u32) -> String {
    let mut s = format!("ROW {} {} {}\n", row.k, row.values.len(), precision);
    for line in row.point.to_records() {
        s.push_str(&line);
        s.push('\n');
    }
    for v in &row.values {
        s.push_str(&v.to_record());
        s.push('\n');
    }
    s
}

/// Parses a row file, returning the row and its precision.
pub fn parse_row(text: &str) -> Result<(EvalRow, u32), String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty row file")?;
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    let [tag, k, deg_x, prec] = fields[..] else {
        return Err(format!("bad header `{header}`"));
    };
    if tag != "ROW" {
        return Err(format!("bad header `{header}`"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad number `{s}` in header"));
    let (k, deg_x, prec) = (num(k)?, num(deg_x)?, num(prec)? as u32);
    let re = lines.next().ok_or("missing point record")?;
    let im = lines.next().ok_or("missing point record")?;
    let point = BigComplex::from_records(re, im).map_err(|e| e.to_string())?;
    let values = (0..deg_x)
        .map(|_| {
            let l = lines.next().ok_or("truncated row")?;
            let v = BigReal::from_record(l).map_err(|e| e.to_string())?;
            if v.prec() != prec {
                return Err(format!("record precision {} in a {prec}-bit row", v.prec()));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>, String>>()?;
    if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
        return Err(format!("trailing content `{extra}`"));
    }
    Ok((EvalRow { k, point, values }, prec))
}

/// Reads row `k` and checks it against the plan.
pub fn load_row(dir: &Path, plan: &InterpolationPlan, k: usize) -> Result<EvalRow, JobError> {
    let path = row_path(dir, k);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let (row, prec) = parse_row(&text).map_err(|msg| JobError::Row { k, msg })?;
    let bad = |msg: &str| Err(JobError::Row { k, msg: msg.to_string() });
    if row.k != k {
        return bad("index does not match file name");
    }
    if prec != plan.precision {
        return bad("precision differs from manifest");
    }
    if row.values.len() != plan.deg_x() {
        return bad("wrong number of coefficients");
    }
    if row.point != plan.points[k].z() {
        return bad("point differs from plan");
    }
    Ok(row)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerReport {
    pub computed: Vec<usize>,
    pub skipped: Vec<usize>,
}

/// Evaluates the rows of range `worker`, skipping valid existing rows.
pub fn run_worker(dir: &Path, manifest: &JobManifest, worker: usize) -> Result<WorkerReport, JobError> {
    let range = manifest
        .ranges
        .get(worker)
        .cloned()
        .ok_or_else(|| JobError::Manifest(format!("no worker {worker} among {}", manifest.ranges.len())))?;
    let plan = manifest.plan()?;
    let results = range
        .into_par_iter()
        .map(|k| {
            if row_path(dir, k).exists() {
                match load_row(dir, &plan, k) {
                    Ok(_) => return Ok((k, false)),
                    Err(e) => warn!("recomputing row {k}: {e}"),
                }
            }
            let row = evaluate_row(&plan, k)?;
            write_atomically(&row_path(dir, k), row_to_string(&row, plan.precision).as_bytes())?;
            Ok((k, true))
        })
        .collect::<Result<Vec<_>, JobError>>()?;
    let mut report = WorkerReport::default();
    for (k, computed) in results {
        if computed {
            report.computed.push(k);
        } else {
            report.skipped.push(k);
        }
    }
    info!("worker {worker}: {} rows computed, {} skipped", report.computed.len(), report.skipped.len());
    Ok(report)
}

/// Reads all rows, interpolates, rounds and checks the holdout residual.
/// Returns the polynomial and the residual's `log2`.
pub fn merge(dir: &Path, manifest: &JobManifest) -> Result<(BivariatePolynomial, f64), JobError> {
    let plan = manifest.plan()?;
    let loaded: Vec<Result<EvalRow, JobError>> =
        (0..plan.points.len()).into_par_iter().map(|k| load_row(dir, &plan, k)).collect();
    let missing: Vec<usize> = loaded
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.as_ref().err().map(|e| {
            warn!("{e}");
            k
        }))
        .collect();
    if !missing.is_empty() {
        return Err(JobError::MissingRows(missing));
    }
    let rows: Vec<EvalRow> = loaded.into_iter().map(Result::unwrap).collect();
    let poly = interpolation_phase(&plan, &rows)?;
    let holdout = check_holdout(&manifest.family, &poly, manifest.precision)?;
    Ok((poly, holdout))
}
