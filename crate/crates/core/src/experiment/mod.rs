//! Seeded experiment matrices, CSV output and summaries.

mod config;
mod summary;

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, GridSpec, MobilityParams};
pub use summary::{summarize, summarize_file, Summary, SummaryRow};

use crate::baselines::SchemeId;
use crate::mobility::run_mobility_experiment;
use crate::network::{derive_coefficients, NetworkInstance, Physics};
use crate::seeding::{derive_seed, substream};
use crate::solver::{solve, Solution, SolverSettings};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One CSV row. Optional fields are empty when the run failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scheme: SchemeId,
    pub n_d: usize,
    pub n_b: usize,
    pub rep: usize,
    pub seed: u64,
    pub instance_hash: String,
    /// Mobility frame, 0 for stationary runs.
    pub frame: usize,
    pub r_min: Option<f64>,
    pub wall_ms: Option<f64>,
    pub generations: Option<usize>,
    pub evals: Option<usize>,
    pub converged: Option<bool>,
    pub error: String,
}

impl RunRecord {
    fn new(
        scheme: SchemeId,
        (n_d, n_b, rep, seed): (usize, usize, usize, u64),
        hash: u64,
        frame: usize,
        outcome: &crate::Result<Solution>,
    ) -> Self {
        let mut rec = Self {
            scheme,
            n_d,
            n_b,
            rep,
            seed,
            instance_hash: format!("{hash:016x}"),
            frame,
            r_min: None,
            wall_ms: None,
            generations: None,
            evals: None,
            converged: None,
            error: String::new(),
        };
        match outcome {
            Ok(sol) => {
                rec.r_min = Some(sol.r_min);
                rec.wall_ms = Some(sol.wall_ms);
                rec.generations = sol.generations;
                rec.evals = Some(sol.evals);
                rec.converged = Some(sol.converged);
            }
            Err(e) => rec.error = e.to_string(),
        }
        rec
    }

    pub fn failed(&self) -> bool {
        !self.error.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOutput {
    pub records: Vec<RunRecord>,
    pub failures: usize,
}

/// `(n_d, n_b, rep, seed)` for every cell and repetition, in sorted order.
fn jobs(grids: &[GridSpec], cfg: &ExperimentConfig) -> Vec<(usize, usize, usize, u64)> {
    let mut cells: Vec<(usize, usize)> = grids.iter().flat_map(|g| g.cells()).collect();
    cells.sort_unstable();
    cells.dedup();
    cells
        .into_iter()
        .flat_map(|(d, b)| (0..cfg.repetitions).map(move |r| (d, b, r, derive_seed(cfg.master_seed, d, b, r))))
        .collect()
}

fn schemes_for(cfg: &ExperimentConfig, n_d: usize) -> Vec<SchemeId> {
    let mut schemes = cfg.schemes.clone();
    schemes.sort_unstable();
    schemes.dedup();
    schemes.retain(|&s| {
        let keep = s != SchemeId::Exhaustive || n_d <= cfg.max_exhaustive;
        if !keep {
            log::info!("skipping exhaustive search at n_d = {n_d}");
        }
        keep
    });
    schemes
}

fn run_jobs<F>(cfg: &ExperimentConfig, jobs: Vec<(usize, usize, usize, u64)>, f: F) -> MatrixOutput
where
    F: Fn((usize, usize, usize, u64)) -> Vec<RunRecord> + Sync,
{
    let chunks: Vec<Vec<RunRecord>> = if cfg.deterministic {
        jobs.into_iter().map(&f).collect()
    } else {
        jobs.into_par_iter().map(&f).collect()
    };
    let records: Vec<RunRecord> = chunks.into_iter().flatten().collect();
    let failures = records.iter().filter(|r| r.failed()).count();
    MatrixOutput { records, failures }
}

/// The stationary instance behind `seed`.
pub fn stationary_instance(physics: &Physics, n_d: usize, n_b: usize, seed: u64) -> NetworkInstance {
    NetworkInstance::sample(physics, n_d, n_b, &mut substream(seed, 0))
}

/// One instance per (n_d, n_b, rep), shared by every scheme.
pub fn run_stationary_matrix(cfg: &ExperimentConfig) -> MatrixOutput {
    let settings = cfg.settings();
    run_jobs(cfg, jobs(&cfg.stationary_grid, cfg), |job| {
        let (n_d, n_b, rep, seed) = job;
        let inst = stationary_instance(&cfg.physics, n_d, n_b, seed);
        let hash = inst.fingerprint();
        let coef = derive_coefficients(&inst);
        schemes_for(cfg, n_d)
            .into_iter()
            .map(|scheme| {
                let outcome = coef.clone().and_then(|c| solve(scheme, &c, cfg.physics.frame, &settings, seed, &[]));
                if let Err(e) = &outcome {
                    log::warn!("{scheme} failed at n_d={n_d} n_b={n_b} rep={rep}: {e}");
                }
                log::debug!("{scheme} n_d={n_d} n_b={n_b} rep={rep} done");
                RunRecord::new(scheme, job, hash, 0, &outcome)
            })
            .collect()
    })
}

pub fn run_mobility_matrix(cfg: &ExperimentConfig) -> MatrixOutput {
    let settings: SolverSettings = cfg.settings();
    run_jobs(cfg, jobs(&cfg.mobility_grid, cfg), |job| {
        let (n_d, n_b, _, seed) = job;
        let setup = cfg.mobility_setup(n_d, n_b);
        schemes_for(cfg, n_d)
            .into_iter()
            .flat_map(|scheme| match run_mobility_experiment(&setup, scheme, &settings, seed) {
                Ok(frames) => frames
                    .iter()
                    .map(|f| RunRecord::new(scheme, job, f.instance_hash, f.frame, &f.outcome))
                    .collect::<Vec<_>>(),
                Err(e) => vec![RunRecord::new(scheme, job, 0, 0, &Err(e))],
            })
            .collect()
    })
}

/// Sidecar path for timings in deterministic mode: `out.csv` becomes
/// `out.timing.csv`.
pub fn timing_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.timing.csv"))
}

#[derive(Serialize)]
struct TimingRow {
    scheme: SchemeId,
    n_d: usize,
    n_b: usize,
    rep: usize,
    frame: usize,
    wall_ms: Option<f64>,
}

/// Writes `records` after the config echo. In deterministic mode wall
/// times are blanked in the main file and written to [`timing_path`].
pub fn write_records(out: &Path, cfg: &ExperimentConfig, records: &[RunRecord]) -> Result<(), ExperimentError> {
    let mut file = std::fs::File::create(out)?;
    file.write_all(cfg.echo().as_bytes())?;
    let mut w = csv::Writer::from_writer(file);
    for rec in records {
        if cfg.deterministic {
            w.serialize(RunRecord { wall_ms: None, ..rec.clone() })?;
        } else {
            w.serialize(rec)?;
        }
    }
    w.flush()?;
    if cfg.deterministic {
        let mut t = csv::Writer::from_path(timing_path(out))?;
        for r in records {
            t.serialize(TimingRow {
                scheme: r.scheme,
                n_d: r.n_d,
                n_b: r.n_b,
                rep: r.rep,
                frame: r.frame,
                wall_ms: r.wall_ms,
            })?;
        }
        t.flush()?;
    }
    Ok(())
}

/// Reads records, skipping `#` lines. Returns the parsed rows and the
/// number of malformed ones.
pub fn read_records(path: &Path) -> Result<(Vec<RunRecord>, usize), ExperimentError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_path(path)?;
    let mut records = Vec::new();
    let mut malformed = 0;
    for row in r.deserialize::<RunRecord>() {
        match row {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::warn!("skipping malformed row: {e}");
                malformed += 1;
            }
        }
    }
    Ok((records, malformed))
}
