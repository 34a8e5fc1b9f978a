use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use momenta::analysis::RateAggregate;
use momenta::{aggregate_rates_with_unfit, fit_rate, Metric, MetricRow, RateEstimate, RunRecord};

#[derive(Debug, Serialize)]
pub struct SeedRate {
    pub seed: u64,
    pub file: String,
    pub estimate: Option<RateEstimate>,
    /// Why no estimate was produced.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RatesOutput {
    pub config_hash: String,
    pub metric: Metric,
    pub target_lambda: f64,
    pub per_seed: Vec<SeedRate>,
    pub aggregate: RateAggregate,
}

/// `<hash16>-seed<N>.csv`
fn parse_name(name: &str) -> Option<(String, u64)> {
    let stem = name.strip_suffix(".csv")?;
    let (hash, seed) = stem.split_once("-seed")?;
    Some((hash.to_string(), seed.parse().ok()?))
}

fn read_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

/// Divergence steps recorded in a batch's `summary.json`, keyed by seed.
fn divergences(dir: &Path) -> BTreeMap<u64, u64> {
    let Ok(text) = fs::read_to_string(dir.join("summary.json")) else {
        return BTreeMap::new();
    };
    let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) else {
        return BTreeMap::new();
    };
    v["runs"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|r| Some((r["seed"].as_u64()?, r["divergence_step"].as_u64()?)))
        .collect()
}

pub fn rates(dir: &Path, metric: Metric, target_lambda: f64, tail_fraction: f64) -> Result<RatesOutput> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".csv") {
            let (hash, seed) =
                parse_name(&name).ok_or_else(|| anyhow!("{name}: expected <hash>-seed<N>.csv"))?;
            files.push((seed, hash, name));
        }
    }
    if files.is_empty() {
        bail!("no run CSVs in {}", dir.display());
    }
    files.sort();
    let hash = files[0].1.clone();
    if let Some((_, other, name)) = files.iter().find(|f| f.1 != hash) {
        bail!("mixed config hashes: {hash} vs {other} ({name})");
    }
    let diverged = divergences(dir);

    let per_seed: Vec<SeedRate> = files
        .into_iter()
        .map(|(seed, hash, name)| {
            let rows = read_rows(&dir.join(&name))?;
            let record = RunRecord {
                config_hash: hash,
                seed,
                rows,
                divergence_step: diverged.get(&seed).copied(),
                lyapunov_violations: 0,
                last_lyapunov_violation: None,
            };
            record.check_rows()?;
            let (estimate, error) = if let Some(t) = record.divergence_step {
                (None, Some(format!("diverged at step {t}")))
            } else {
                match fit_rate(&record, metric, tail_fraction, target_lambda) {
                    Ok(e) => (Some(e), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            };
            Ok(SeedRate {
                seed,
                file: name,
                estimate,
                error,
            })
        })
        .collect::<Result<_>>()?;

    let fitted: Vec<RateEstimate> = per_seed.iter().filter_map(|s| s.estimate.clone()).collect();
    let aggregate = aggregate_rates_with_unfit(&fitted, per_seed.len() - fitted.len());
    Ok(RatesOutput {
        config_hash: hash,
        metric,
        target_lambda,
        per_seed,
        aggregate,
    })
}
