//! Trajectory records, power-law rate fitting and multi-seed aggregation.
//!
//! "Almost surely" cannot be observed on a finite batch of seeds. The
//! aggregate here reports how many seeds clear fixed thresholds; treat it as
//! a proxy, not a proof.

use serde::{Deserialize, Serialize};

use crate::error::{MomentaError, Result};

/// One metric row; field names double as the CSV header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub t: u64,
    #[serde(rename = "J_theta")]
    pub j_theta: f64,
    pub grad_norm: f64,
    pub v_norm_sq: f64,
    pub lyapunov: f64,
    pub running_min_grad: f64,
    pub alpha: f64,
}

pub const CSV_COLUMNS: [&str; 7] = [
    "t",
    "J_theta",
    "grad_norm",
    "v_norm_sq",
    "lyapunov",
    "running_min_grad",
    "alpha",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    /// Step at which the state became non-finite, if it did.
    pub divergence_step: Option<u64>,
    /// Steps where the Lyapunov value increased.
    pub lyapunov_violations: usize,
    pub last_lyapunov_violation: Option<u64>,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        self.divergence_step.is_some()
    }

    pub fn terminal(&self) -> Option<&MetricRow> {
        self.rows.last()
    }

    /// Rows must start at 0 and increase by one.
    pub fn check_rows(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if r.t != i as u64 {
                return Err(MomentaError::InvalidArgument(format!(
                    "row {i} has t = {} (rows must be 0, 1, 2, ...)",
                    r.t
                )));
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            diverged: self.diverged(),
            divergence_step: self.divergence_step,
            rows: self.rows.len(),
            terminal: self.terminal().copied(),
            lyapunov_violations: self.lyapunov_violations,
            last_lyapunov_violation: self.last_lyapunov_violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seed: u64,
    pub diverged: bool,
    pub divergence_step: Option<u64>,
    pub rows: usize,
    pub terminal: Option<MetricRow>,
    pub lyapunov_violations: usize,
    pub last_lyapunov_violation: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "J_theta")]
    JTheta,
    #[serde(rename = "grad_norm_sq")]
    GradNormSq,
}

impl Metric {
    pub fn of(self, row: &MetricRow) -> f64 {
        match self {
            Metric::JTheta => row.j_theta,
            Metric::GradNormSq => row.grad_norm * row.grad_norm,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = MomentaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "J_theta" | "j_theta" => Ok(Metric::JTheta),
            "grad_norm_sq" => Ok(Metric::GradNormSq),
            _ => Err(MomentaError::InvalidArgument(format!(
                "unknown metric '{s}' (expected J_theta or grad_norm_sq)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateClass {
    ORateConsistent,
    Inconsistent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub fitted_exponent: f64,
    pub window: (u64, u64),
    pub r_squared: f64,
    /// Share of the linear-fit residual removed by adding a quadratic term
    /// in `log t`; large values mean the decay is not a power law.
    pub curvature: f64,
    pub floor_fraction: f64,
    pub target_lambda: f64,
    pub classification: RateClass,
}

pub const RATE_FLOOR: f64 = 1e-30;
pub const RATE_TOLERANCE: f64 = 0.1;
pub const MIN_FIT_ROWS: usize = 100;

fn lstsq_poly(x: &[f64], y: &[f64], degree: usize) -> (Vec<f64>, f64) {
    // normal equations on centred x; degree <= 2 keeps them well conditioned
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let m = degree + 1;
    let mut ata = vec![vec![0.0; m]; m];
    let mut aty = vec![0.0; m];
    for (&xi, &yi) in x.iter().zip(y) {
        let z = xi - xm;
        let pows: Vec<f64> = (0..m).map(|k| z.powi(k as i32)).collect();
        for r in 0..m {
            aty[r] += pows[r] * yi;
            for c in 0..m {
                ata[r][c] += pows[r] * pows[c];
            }
        }
    }
    // Gaussian elimination with partial pivoting
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&a, &b| ata[a][col].abs().total_cmp(&ata[b][col].abs()))
            .unwrap();
        ata.swap(col, piv);
        aty.swap(col, piv);
        let (top, rest) = ata.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for (k, row) in rest.iter_mut().enumerate() {
            let f = if pivot_row[col] != 0.0 { row[col] / pivot_row[col] } else { 0.0 };
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            aty[col + 1 + k] -= f * aty[col];
        }
    }
    let mut coef = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|c| ata[r][c] * coef[c]).sum();
        coef[r] = if ata[r][r] != 0.0 { (aty[r] - s) / ata[r][r] } else { 0.0 };
    }
    let sse = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let z = xi - xm;
            let fit: f64 = coef.iter().enumerate().map(|(k, c)| c * z.powi(k as i32)).sum();
            (yi - fit).powi(2)
        })
        .sum();
    (coef, sse)
}

/// Least-squares slope of `log(metric + floor)` against `log(t + 1)` over
/// the last `tail_fraction` of the record (never starting before
/// `max(10, 0.2 H)`), classified against `target_lambda`.
pub fn fit_rate(
    record: &RunRecord,
    metric: Metric,
    tail_fraction: f64,
    target_lambda: f64,
) -> Result<RateEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 0.9) {
        return Err(MomentaError::InvalidArgument(format!(
            "tail_fraction must lie in (0, 0.9], got {tail_fraction}"
        )));
    }
    let rows = &record.rows;
    if rows.len() < MIN_FIT_ROWS {
        return Err(MomentaError::InvalidArgument(format!(
            "need at least {MIN_FIT_ROWS} rows to fit a rate, got {}",
            rows.len()
        )));
    }
    let horizon = rows.last().map(|r| r.t).unwrap_or(0);
    let h = horizon as f64;
    let t_start = ((1.0 - tail_fraction) * h)
        .ceil()
        .max(10.0)
        .max((0.2 * h).ceil()) as u64;
    let window: Vec<&MetricRow> = rows.iter().filter(|r| r.t >= t_start).collect();
    if window.len() < 3 {
        return Err(MomentaError::InvalidArgument("fit window has fewer than 3 rows".into()));
    }
    let x: Vec<f64> = window.iter().map(|r| ((r.t + 1) as f64).ln()).collect();
    let vals: Vec<f64> = window.iter().map(|r| metric.of(r)).collect();
    let y: Vec<f64> = vals.iter().map(|m| (m + RATE_FLOOR).ln()).collect();
    let floor_fraction =
        vals.iter().filter(|&&m| m <= 10.0 * RATE_FLOOR).count() as f64 / vals.len() as f64;

    let ym = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    let (lin, sse_lin) = lstsq_poly(&x, &y, 1);
    let (_, sse_quad) = lstsq_poly(&x, &y, 2);
    let slope = lin[1];
    let r_squared = if sst > 0.0 { 1.0 - sse_lin / sst } else { 1.0 };
    let r_squared_quad = if sst > 0.0 { 1.0 - sse_quad / sst } else { 1.0 };
    let curvature = if sse_lin > 0.0 { (sse_lin - sse_quad) / sse_lin } else { 0.0 };

    let bent = sst > 0.0
        && sse_lin > 1e-3 * sst
        && curvature > 0.5
        && r_squared_quad > 0.9;
    let classification = if floor_fraction > 0.5 {
        RateClass::Inconclusive
    } else if bent {
        RateClass::Inconsistent
    } else if slope <= -target_lambda + RATE_TOLERANCE {
        RateClass::ORateConsistent
    } else {
        RateClass::Inconsistent
    };
    Ok(RateEstimate {
        fitted_exponent: slope,
        window: (t_start, horizon),
        r_squared,
        curvature,
        floor_fraction,
        target_lambda,
        classification,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Quantiles {
    /// Linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self {
            min: v[0],
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub diverged: bool,
    pub terminal_j: Option<f64>,
    /// `min_{tau <= H} |grad J(theta_tau)|`
    pub running_min_grad: Option<f64>,
    /// Minimum over the last half of the run; the finite-horizon stand-in
    /// for `liminf`.
    pub tail_min_grad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub config_hash: String,
    pub seeds: usize,
    pub diverged: usize,
    pub threshold: f64,
    pub per_seed: Vec<SeedResult>,
    pub terminal_j: Option<Quantiles>,
    pub running_min_grad: Option<Quantiles>,
    pub tail_min_grad: Option<Quantiles>,
    /// Fraction of non-diverged seeds with running-min grad norm below
    /// `threshold`.
    pub fraction_running_min_below: f64,
    pub fraction_tail_min_below: f64,
}

pub fn aggregate_seeds(records: &[RunRecord], threshold: f64) -> Result<SeedAggregate> {
    let first = records
        .first()
        .ok_or_else(|| MomentaError::InvalidArgument("no records to aggregate".into()))?;
    if let Some(r) = records.iter().find(|r| r.config_hash != first.config_hash) {
        return Err(MomentaError::InvalidArgument(format!(
            "mixed config hashes: {} vs {}",
            first.config_hash, r.config_hash
        )));
    }
    let mut per_seed: Vec<SeedResult> = records
        .iter()
        .map(|r| {
            let ok = !r.diverged() && !r.rows.is_empty();
            let tail_start = r.rows.len() / 2;
            SeedResult {
                seed: r.seed,
                diverged: r.diverged(),
                terminal_j: ok.then(|| r.rows[r.rows.len() - 1].j_theta),
                running_min_grad: ok.then(|| r.rows[r.rows.len() - 1].running_min_grad),
                tail_min_grad: ok.then(|| {
                    r.rows[tail_start..]
                        .iter()
                        .map(|row| row.grad_norm)
                        .fold(f64::INFINITY, f64::min)
                }),
            }
        })
        .collect();
    per_seed.sort_by_key(|s| s.seed);
    let collect = |f: fn(&SeedResult) -> Option<f64>| -> Vec<f64> {
        per_seed.iter().filter_map(f).collect()
    };
    let terminal = collect(|s| s.terminal_j);
    let running = collect(|s| s.running_min_grad);
    let tail = collect(|s| s.tail_min_grad);
    let frac = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().filter(|&&x| x < threshold).count() as f64 / v.len() as f64
        }
    };
    Ok(SeedAggregate {
        config_hash: first.config_hash.clone(),
        seeds: records.len(),
        diverged: per_seed.iter().filter(|s| s.diverged).count(),
        threshold,
        terminal_j: Quantiles::of(&terminal),
        running_min_grad: Quantiles::of(&running),
        tail_min_grad: Quantiles::of(&tail),
        fraction_running_min_below: frac(&running),
        fraction_tail_min_below: frac(&tail),
        per_seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateAggregate {
    pub seeds: usize,
    pub consistent: usize,
    pub inconclusive: usize,
    pub median_exponent: Option<f64>,
    pub classification: RateClass,
}

/// Cross-seed verdict: consistent when at least 90% of seeds are.
pub fn aggregate_rates(estimates: &[RateEstimate]) -> RateAggregate {
    aggregate_rates_with_unfit(estimates, 0)
}

/// As [`aggregate_rates`], with `unfit` extra seeds that produced no
/// estimate (diverged or too short) counted as inconclusive.
pub fn aggregate_rates_with_unfit(estimates: &[RateEstimate], unfit: usize) -> RateAggregate {
    let n = estimates.len() + unfit;
    let count = |c: RateClass| estimates.iter().filter(|e| e.classification == c).count();
    let consistent = count(RateClass::ORateConsistent);
    let inconclusive = count(RateClass::Inconclusive) + unfit;
    let exps: Vec<f64> = estimates.iter().map(|e| e.fitted_exponent).collect();
    let classification = if n == 0 || 2 * inconclusive > n {
        RateClass::Inconclusive
    } else if 10 * consistent >= 9 * n {
        RateClass::ORateConsistent
    } else {
        RateClass::Inconsistent
    };
    RateAggregate {
        seeds: n,
        consistent,
        inconclusive,
        median_exponent: Quantiles::of(&exps).map(|q| q.median),
        classification,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(metric: impl Fn(u64) -> f64, horizon: u64) -> RunRecord {
        let mut run_min = f64::INFINITY;
        let rows = (0..=horizon)
            .map(|t| {
                let j = metric(t);
                let g = (2.0 * j).sqrt();
                run_min = run_min.min(g);
                MetricRow {
                    t,
                    j_theta: j,
                    grad_norm: g,
                    v_norm_sq: 0.0,
                    lyapunov: j,
                    running_min_grad: run_min,
                    alpha: 0.1,
                }
            })
            .collect();
        RunRecord {
            config_hash: "h".into(),
            seed: 0,
            rows,
            divergence_step: None,
            lyapunov_violations: 0,
            last_lyapunov_violation: None,
        }
    }

    #[test]
    fn gd_harmonic_steps_decay_like_one_over_t() {
        // J_t = 0.5 prod (1 - 0.5/(tau+1))^2
        let mut j = vec![0.5];
        for tau in 0..10_000u64 {
            let f = 1.0 - 0.5 / (tau + 1) as f64;
            let last = *j.last().unwrap();
            j.push(last * f * f);
        }
        let r = record(|t| j[t as usize], 10_000);
        let est = fit_rate(&r, Metric::JTheta, 0.5, 0.9).unwrap();
        assert!((-1.2..=-0.8).contains(&est.fitted_exponent), "{est:?}");
        assert_eq!(est.classification, RateClass::ORateConsistent);
    }

    #[test]
    fn flat_metric_has_zero_slope() {
        let est = fit_rate(&record(|_| 3.0, 1000), Metric::JTheta, 0.5, 0.5).unwrap();
        assert!(est.fitted_exponent.abs() < 1e-12);
        assert_eq!(est.classification, RateClass::Inconsistent);
    }

    #[test]
    fn geometric_decay_is_flagged() {
        let est = fit_rate(&record(|t| 0.9f64.powi(t as i32), 200), Metric::JTheta, 0.8, 0.5)
            .unwrap();
        assert_eq!(est.classification, RateClass::Inconsistent, "{est:?}");
    }

    #[test]
    fn converged_to_zero_is_inconclusive() {
        let est = fit_rate(&record(|t| if t < 100 { 1.0 } else { 0.0 }, 1000), Metric::JTheta, 0.5, 0.5)
            .unwrap();
        assert_eq!(est.classification, RateClass::Inconclusive);
    }

    #[test]
    fn window_respects_lower_bound() {
        let est = fit_rate(&record(|t| 1.0 / (t + 1) as f64, 1000), Metric::JTheta, 0.9, 0.5).unwrap();
        assert_eq!(est.window, (200, 1000));
    }

    #[test]
    fn rescaling_shifts_slope_negligibly() {
        let a = fit_rate(&record(|t| (t as f64 + 1.0).powf(-0.7), 5000), Metric::JTheta, 0.5, 0.5)
            .unwrap();
        let b = fit_rate(&record(|t| 10.0 * (t as f64 + 1.0).powf(-0.7), 5000), Metric::JTheta, 0.5, 0.5)
            .unwrap();
        assert!((a.fitted_exponent - b.fitted_exponent).abs() < 1e-3);
    }

    #[test]
    fn single_record_quantiles_collapse() {
        let agg = aggregate_seeds(&[record(|t| 1.0 / (t + 1) as f64, 100)], 1e-1).unwrap();
        let q = agg.terminal_j.unwrap();
        assert_eq!(q.min, q.max);
        assert_eq!(q.median, 1.0 / 101.0);
    }

    #[test]
    fn diverged_records_are_excluded() {
        let mut bad = record(|_| 1.0, 100);
        bad.seed = 1;
        bad.divergence_step = Some(50);
        let agg = aggregate_seeds(&[record(|_| 2.0, 100), bad], 1.0).unwrap();
        assert_eq!(agg.diverged, 1);
        assert_eq!(agg.terminal_j.unwrap().max, 2.0);
    }

    #[test]
    fn mixed_hashes_rejected() {
        let mut other = record(|_| 1.0, 100);
        other.config_hash = "other".into();
        assert!(aggregate_seeds(&[record(|_| 1.0, 100), other], 1.0).is_err());
    }

    #[test]
    fn permutation_invariant() {
        let mut recs: Vec<RunRecord> = (0..4)
            .map(|s| {
                let mut r = record(move |t| (s as f64 + 1.0) / (t + 1) as f64, 100);
                r.seed = s;
                r
            })
            .collect();
        let a = aggregate_seeds(&recs, 0.1).unwrap();
        recs.reverse();
        assert_eq!(a, aggregate_seeds(&recs, 0.1).unwrap());
    }
}
