use anyhow::{anyhow, bail, Result};
use rand::Rng;
use serde::Serialize;

use momenta::block::UnbiasednessCheck;
use momenta::oracles::oracle_schedules;
use momenta::rng::{stream_rng, Stream};
use momenta::schedules::check_power_law_conditions;
use momenta::{audit_oracle, validate_params, verify_block_unbiasedness};
use momenta::{ConditionReport, ConditionSet, OracleAudit, Schedule};

use crate::config::Loaded;

#[derive(Debug, Serialize)]
pub struct CheckOutput {
    pub schedule: ConditionReport,
    /// Parameter box constraints; `None` when a hard bound failed.
    pub parameters: Option<ConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter_error: Option<String>,
    pub pass: bool,
}

fn decay(s: &Option<Schedule>, what: &str) -> Result<f64> {
    match s {
        Some(s) => s
            .power_law_decay()
            .ok_or_else(|| anyhow!("{what} must be a constant or pure power law to read its exponent")),
        None => bail!("{what} is required for this condition set"),
    }
}

/// Condition set and exponents: explicit `check` entries win, otherwise
/// they are read off the oracle (difference oracles imply KWB, biased
/// oracles the general set, everything else RM).
pub fn resolve_set(loaded: &Loaded, flag: Option<ConditionSet>) -> Result<(ConditionSet, f64, f64)> {
    let cfg = &loaded.config;
    let spec = cfg.check.clone().unwrap_or_default();
    let kind = cfg.oracle.get("kind").and_then(|k| k.as_str()).unwrap_or("");
    let set = flag.or(spec.condition_set).unwrap_or(match kind {
        "spsa" | "blum_fd" => ConditionSet::KieferWolfowitzBlum,
        "biased_additive" => ConditionSet::General,
        _ => ConditionSet::RobbinsMonro,
    });
    let (bias, noise, increment) = oracle_schedules(&cfg.oracle);
    let gamma = match (spec.gamma, set) {
        (Some(g), _) => g,
        (None, ConditionSet::RobbinsMonro) => 0.0,
        (None, ConditionSet::KieferWolfowitzBlum) => decay(&increment, "oracle increment")?,
        (None, ConditionSet::General) => decay(&bias, "oracle bias_scale")?,
    };
    let delta = match (spec.delta, set) {
        (Some(d), _) => d,
        (None, ConditionSet::General) => -decay(&noise, "oracle noise_scale")?,
        _ => 0.0,
    };
    Ok((set, gamma, delta))
}

pub fn check(loaded: &Loaded, flag: Option<ConditionSet>) -> Result<CheckOutput> {
    let (set, gamma, delta) = resolve_set(loaded, flag)?;
    let p = loaded
        .config
        .params
        .alpha
        .power_law_decay()
        .ok_or_else(|| anyhow!("at /params/alpha: the checker needs a constant or pure power-law step size"))?;
    let schedule = check_power_law_conditions(p, gamma, delta, set)?;
    let (parameters, parameter_error) = match validate_params(&loaded.config.params, loaded.config.horizon) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let pass = schedule.all_satisfied() && parameter_error.is_none();
    Ok(CheckOutput {
        schedule,
        parameters,
        parameter_error,
        pass,
    })
}

/// Audit the configured oracle at `points` random `(w, t)` pairs around
/// `w0`, with `t` drawn from the first `min(horizon, 1000)` steps.
pub fn oracle_check(loaded: &Loaded, points: usize, replications: usize, seed: u64) -> Result<Vec<OracleAudit>> {
    let obj = loaded.objective()?;
    let oracle = loaded.oracle(obj, seed)?;
    let w0 = &loaded.config.w0;
    let t_max = loaded.config.horizon.clamp(1, 1000);
    (0..points as u64)
        .map(|i| {
            let mut rng = stream_rng(seed, Stream::Sampling, i, 0);
            let w: Vec<f64> = w0.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect();
            let t = rng.random_range(0..t_max);
            Ok(audit_oracle(oracle.as_ref(), &w, t, replications)?)
        })
        .collect()
}

/// Monte-Carlo unbiasedness of the configured block policy applied to
/// `grad J(w0)` (all ones if that gradient vanishes).
pub fn block_check(loaded: &Loaded, replications: usize, seed: u64) -> Result<UnbiasednessCheck> {
    let obj = loaded.objective()?;
    let policy = loaded.block(seed)?;
    let mut h = obj.gradient(&loaded.config.w0);
    if h.iter().all(|x| *x == 0.0) {
        h.iter_mut().for_each(|x| *x = 1.0);
    }
    Ok(verify_block_unbiasedness(policy.as_ref(), &h, replications)?)
}
