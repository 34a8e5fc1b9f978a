use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use momenta::analysis::{RunSummary, SeedAggregate};
use momenta::{aggregate_seeds, run, validate_params, RunInputs, RunRecord};

use crate::config::Loaded;

/// Gradient-norm threshold used for the batch's seed aggregate.
pub const GRAD_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Serialize)]
pub struct BatchSummary {
    pub config_hash: String,
    /// The effective config after overrides, in canonical form.
    pub config: Value,
    pub seeds: Vec<u64>,
    pub diverged: usize,
    pub runs: Vec<RunFile>,
    pub aggregate: Option<SeedAggregate>,
}

#[derive(Debug, Serialize)]
pub struct RunFile {
    pub csv: String,
    #[serde(flatten)]
    pub summary: RunSummary,
}

/// Per-seed file name. The hash prefix lets `momenta rates` refuse to mix
/// batches without needing the summary.
pub fn csv_name(hash: &str, seed: u64) -> String {
    format!("{}-seed{seed}.csv", &hash[..16])
}

pub fn write_csv(path: &Path, record: &RunRecord) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    if record.rows.is_empty() {
        w.write_record(momenta::analysis::CSV_COLUMNS)?;
    }
    for row in &record.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Run every seed, write one CSV each plus `summary.json`, and return the
/// summary. The seed list must already be resolved into the config.
pub fn run_batch(loaded: &Loaded, out: &Path, jobs: usize) -> Result<BatchSummary> {
    let cfg = &loaded.config;
    let seeds = cfg.seeds.clone().unwrap_or_else(|| vec![0]);
    let hash = loaded.hash();
    let objective = loaded.objective()?;
    validate_params(&cfg.params, cfg.horizon)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let records: Vec<(PathBuf, RunRecord)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let oracle = loaded.oracle(objective.clone(), seed)?;
                let block = loaded.block(seed)?;
                let record = run(&RunInputs {
                    objective: objective.as_ref(),
                    oracle: oracle.as_ref(),
                    block: block.as_ref(),
                    params: &cfg.params,
                    w0: cfg.w0.clone(),
                    v0: cfg.v0.clone(),
                    horizon: cfg.horizon,
                    seed,
                    config_hash: hash.clone(),
                })?;
                let path = out.join(csv_name(&hash, seed));
                write_csv(&path, &record)?;
                Ok((path, record))
            })
            .collect::<Result<_>>()
    })?;

    let plain: Vec<RunRecord> = records.iter().map(|(_, r)| r.clone()).collect();
    let summary = BatchSummary {
        config_hash: hash,
        config: loaded.canonical.clone(),
        seeds,
        diverged: plain.iter().filter(|r| r.diverged()).count(),
        runs: records
            .iter()
            .map(|(p, r)| RunFile {
                csv: p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                summary: r.summary(),
            })
            .collect(),
        aggregate: aggregate_seeds(&plain, GRAD_THRESHOLD).ok(),
    };
    let path = out.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(summary)
}
