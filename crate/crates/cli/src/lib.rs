//! Config-driven experiment runner: executes task lists against one domain
//! and potential and writes reproducible report bundles.

pub mod catalog;
pub mod compare;
pub mod config;
pub mod error;
pub mod report;
pub mod tasks;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use hardyheat_core::linalg::BandedSym;
use rayon::prelude::*;
use serde_json::{json, Value};

pub use config::ExperimentConfig;
pub use error::CliError;
pub use report::Status;

use report::{to_canonical_json, to_value, write_summary, TaskOutcome};
use tasks::{execute, Context};

pub const RNG_NAME: &str = "ChaCha8Rng";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub dry_run: bool,
    pub jobs: Option<usize>,
    pub dump_matrices: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub status: Status,
    pub out_dir: Option<PathBuf>,
    pub tasks: Vec<(String, Status)>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn dump_matrix(path: &Path, m: &BandedSym) -> Result<(), CliError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(CliError::io(path))?);
    for (i, j, v) in m.triplets() {
        writeln!(f, "{i} {j} {}", report::fmt_number(v)).map_err(CliError::io(path))?;
    }
    f.flush().map_err(CliError::io(path))
}

/// Validates the config and, unless `dry_run`, executes every task and
/// writes `report.json`, `summary.csv`, `tasks/<id>.csv` and the
/// `run_info.json` sidecar into the output directory.
pub fn run(config_path: &Path, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(o) = &opts.out {
        cfg.output = o.clone();
    }
    if opts.dry_run {
        return Ok(RunSummary { status: Status::Pass, out_dir: None, tasks: Vec::new() });
    }
    let started = unix_seconds();
    let clock = Instant::now();
    let ctx = Context::new(&cfg, cfg.seed).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
    let out_dir = cfg.output.clone();
    fs::create_dir_all(out_dir.join("tasks")).map_err(CliError::io(&out_dir))?;

    if opts.dump_matrices {
        let base = ctx.base().map_err(|source| CliError::Task { id: "matrices".into(), source })?;
        let dir = out_dir.join("matrices");
        fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        dump_matrix(&dir.join("stiffness.coo"), &base.form.stiffness)?;
        dump_matrix(&dir.join("potential.coo"), &base.form.potential)?;
        dump_matrix(&dir.join("mass.coo"), &base.form.mass)?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(1).max(1))
        .build()
        .map_err(|e| CliError::ConfigInvalid(format!("jobs: {e}")))?;
    let results: Vec<Result<(TaskOutcome, f64), CliError>> = pool.install(|| {
        cfg.tasks
            .par_iter()
            .enumerate()
            .map(|(i, task)| {
                let id = task.id(i);
                let t0 = Instant::now();
                let outcome = execute(&ctx, task, &id).map_err(|source| CliError::Task { id: id.clone(), source })?;
                Ok((outcome, t0.elapsed().as_secs_f64()))
            })
            .collect()
    });
    let mut outcomes = Vec::with_capacity(results.len());
    let mut timings = BTreeMap::new();
    for r in results {
        let (o, secs) = r?;
        timings.insert(o.id.clone(), secs);
        outcomes.push(o);
    }

    let status = outcomes.iter().map(TaskOutcome::status).max().unwrap_or(Status::Pass);
    let mut config_echo = to_value(&cfg);
    if let Value::Object(m) = &mut config_echo {
        m.remove("output");
    }
    let report = json!({
        "schema_version": config::SCHEMA_VERSION,
        "id": cfg.id,
        "generator": { "name": "hardyheat", "version": env!("CARGO_PKG_VERSION") },
        "rng": { "algorithm": RNG_NAME, "seed": cfg.seed },
        "config": config_echo,
        "tasks": outcomes.iter().map(TaskOutcome::to_json).collect::<Vec<_>>(),
        "status": status,
        "exit_code": status.exit_code(),
    });
    let report_path = out_dir.join("report.json");
    fs::write(&report_path, to_canonical_json(&report)).map_err(CliError::io(&report_path))?;
    write_summary(&out_dir.join("summary.csv"), &outcomes)?;
    for o in &outcomes {
        o.table.write(&out_dir.join("tasks").join(format!("{}.csv", o.id)))?;
    }
    let info = json!({
        "started_unix": started,
        "finished_unix": unix_seconds(),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "task_seconds": timings,
        "jobs": opts.jobs.unwrap_or(1),
        "config_path": config_path.display().to_string(),
    });
    let info_path = out_dir.join("run_info.json");
    fs::write(&info_path, to_canonical_json(&info)).map_err(CliError::io(&info_path))?;

    Ok(RunSummary {
        status,
        out_dir: Some(out_dir),
        tasks: outcomes.iter().map(|o| (o.id.clone(), o.status())).collect(),
    })
}
