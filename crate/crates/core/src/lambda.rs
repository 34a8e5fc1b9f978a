//! The λ-recursion behind the "synthetic step size" reparameterization of
//! heavy ball:
//!
//! ```text
//! lambda_{t+1} = lambda_t / mu_t - 1,     eta_t = (1 + lambda_{t+1}) alpha_t
//! ```
//!
//! With strictly decreasing momentum λ blows up; with strictly increasing
//! momentum `1 + λ` eventually turns negative and stays negative, so η is
//! not a valid step size. Both behaviours are checked here numerically.

use serde::{Deserialize, Serialize};

use crate::error::{MomentaError, Result};
use crate::schedules::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Constant,
    Mixed,
}

/// Classify a sequence, treating steps within `1e-12 (1 + |x|)` as flat.
pub fn monotonicity(xs: &[f64]) -> Monotonicity {
    let (mut up, mut down) = (false, false);
    for w in xs.windows(2) {
        let d = w[1] - w[0];
        if d.abs() <= 1e-12 * (1.0 + w[0].abs()) {
            continue;
        }
        if d > 0.0 {
            up = true;
        } else {
            down = true;
        }
    }
    match (up, down) {
        (false, false) => Monotonicity::Constant,
        (true, false) => Monotonicity::Increasing,
        (false, true) => Monotonicity::Decreasing,
        _ => Monotonicity::Mixed,
    }
}

/// Strict monotonicity, no tolerance.
fn strictly(xs: &[f64], up: bool) -> bool {
    xs.windows(2).all(|w| if up { w[1] > w[0] } else { w[1] < w[0] })
}

/// Strict monotonicity of a schedule up to floating-point saturation: a
/// schedule converging to its limit eventually rounds to it, so ties are
/// allowed only within rounding distance of its final value.
fn strictly_schedule(xs: &[f64], up: bool) -> bool {
    let last = xs[xs.len() - 1];
    xs.len() >= 2
        && xs[0] != last
        && xs.windows(2).all(|w| {
            let moved = if up { w[1] > w[0] } else { w[1] < w[0] };
            moved || (w[0] == w[1] && (w[0] - last).abs() <= 1e-14 * (1.0 + last.abs()))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTrace {
    /// `lambda_0 ..= lambda_{H+1}`
    pub lambda: Vec<f64>,
    /// `eta_0 ..= eta_H`
    pub eta: Vec<f64>,
    pub mu: Schedule,
    pub alpha: Schedule,
    /// First `t` with `1 + lambda_{t+1} < 0`.
    pub first_negative_eta_index: Option<u64>,
    /// Over `lambda_0 ..= lambda_H`.
    pub monotonicity: Monotonicity,
}

impl LambdaTrace {
    /// Error if any synthetic step size is negative.
    pub fn require_nonnegative_eta(&self) -> Result<()> {
        match self.first_negative_eta_index {
            Some(t) => Err(MomentaError::NegativeSyntheticStep { t, eta: self.eta[t as usize] }),
            None => Ok(()),
        }
    }
}

/// `lambda_0 = mu_0 / (1 - mu_0)`, the choice that makes `lambda_1 = lambda_0`.
pub fn default_lambda0(mu: &Schedule) -> f64 {
    let m = mu.eval(0);
    m / (1.0 - m)
}

fn momentum(mu: &Schedule, t: u64) -> Result<f64> {
    let m = mu.eval(t);
    if m > 0.0 && m < 1.0 {
        Ok(m)
    } else {
        Err(MomentaError::Hypothesis(format!("mu_t must lie in (0, 1), got {m} at t = {t}")))
    }
}

pub fn iterate_lambda(
    mu: &Schedule,
    alpha: &Schedule,
    lambda0: f64,
    horizon: u64,
) -> Result<LambdaTrace> {
    if horizon < 1 {
        return Err(MomentaError::InvalidArgument("horizon must be >= 1".into()));
    }
    let mut lambda = Vec::with_capacity(horizon as usize + 2);
    lambda.push(lambda0);
    let mut eta = Vec::with_capacity(horizon as usize + 1);
    let mut first_negative = None;
    for t in 0..=horizon {
        let next = lambda[t as usize] / momentum(mu, t)? - 1.0;
        lambda.push(next);
        eta.push((1.0 + next) * alpha.eval(t));
        if first_negative.is_none() && 1.0 + next < 0.0 {
            first_negative = Some(t);
        }
    }
    let monotonicity = monotonicity(&lambda[..=horizon as usize]);
    Ok(LambdaTrace {
        lambda,
        eta,
        mu: mu.clone(),
        alpha: alpha.clone(),
        first_negative_eta_index: first_negative,
        monotonicity,
    })
}

/// Closed-form `lambda_t` from `(lambda_0, lambda_1)` via the differences
/// `d_t = lambda_t - lambda_{t-1}`:
///
/// ```text
/// d_{n+1} = [prod_{tau=1}^{n} 1/mu_tau] d_1
///         + sum_{tau=1}^{n} [prod_{s=tau+1}^{n} 1/mu_s] (1/mu_tau - 1/mu_{tau-1}) lambda_{tau-1}
/// lambda_t = lambda_1 + sum_{n=2}^{t} d_n
/// ```
///
/// Each `d_{n+1}` is summed from scratch, so the cost is quadratic in `t`.
/// It agrees with [`iterate_lambda`] when `lambda_1 = lambda_0 / mu_0 - 1`.
pub fn closed_form_lambda(mu: &Schedule, lambda0: f64, lambda1: f64, t: u64) -> Result<f64> {
    if t == 0 {
        return Ok(lambda0);
    }
    let inv: Vec<f64> = (0..t).map(|s| momentum(mu, s).map(|m| 1.0 / m)).collect::<Result<_>>()?;
    let mut lambda = vec![lambda0, lambda1];
    let d1 = lambda1 - lambda0;
    for n in 1..t as usize {
        let mut tail = 1.0; // prod_{s=tau+1}^{n} 1/mu_s
        let mut sum = 0.0;
        for tau in (1..=n).rev() {
            sum += tail * (inv[tau] - inv[tau - 1]) * lambda[tau - 1];
            tail *= inv[tau];
        }
        let d_next = tail * d1 + sum;
        lambda.push(lambda[n] + d_next);
    }
    Ok(lambda[t as usize])
}

pub const LEMMA_A1_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaA1Report {
    /// μ strictly decreasing and inside (0, 1) over the horizon.
    pub hypothesis_ok: bool,
    pub lambda0: f64,
    pub threshold: f64,
    /// First `t` with `lambda_t > threshold`.
    pub first_index: Option<u64>,
    /// `lambda_{t+1} > lambda_t` for every iterated `t >= 1`.
    pub strictly_increasing: bool,
    /// Index at which the geometric lower bound
    /// `lambda_2 + (lambda_2 - lambda_1) sum_{k=1}^{t-1} (1/mu_2)^k` passes
    /// the threshold, which caps `first_index`.
    pub bound_index: Option<u64>,
    pub lambda: Vec<f64>,
}

/// Iterate from `lambda_0 = mu_0 / (1 - mu_0)` until λ exceeds `threshold`
/// or the horizon runs out.
pub fn verify_lemma_a1(mu: &Schedule, threshold: f64, horizon: u64) -> Result<LemmaA1Report> {
    let mus: Vec<f64> = (0..=horizon).map(|t| mu.eval(t)).collect();
    let in_range = mus.iter().all(|&m| m > 0.0 && m < 1.0);
    let hypothesis_ok = in_range && strictly_schedule(&mus, false);
    let lambda0 = default_lambda0(mu);
    let mut lambda = vec![lambda0];
    let mut first_index = (lambda0 > threshold).then_some(0);
    if in_range {
        for t in 0..horizon {
            if first_index.is_some() {
                break;
            }
            let next = lambda[t as usize] / mus[t as usize] - 1.0;
            lambda.push(next);
            if next > threshold {
                first_index = Some(t + 1);
            }
        }
    }
    let strictly_increasing = lambda.len() < 3 || strictly(&lambda[1..], true);
    let bound_index = if in_range && horizon >= 2 {
        let l1 = lambda0 / mus[0] - 1.0;
        let l2 = l1 / mus[1] - 1.0;
        let r = 1.0 / mus[2];
        let d2 = l2 - l1;
        if d2 > 0.0 {
            // lambda_{t+1} >= l2 + d2 (r + ... + r^{t-1})
            let (mut t, mut sum, mut pow) = (1u64, 0.0, 1.0);
            let mut found = (l2 > threshold).then_some(2);
            while found.is_none() && t < 100_000 {
                t += 1;
                pow *= r;
                sum += pow;
                if l2 + d2 * sum > threshold {
                    found = Some(t + 1);
                }
            }
            found
        } else {
            None
        }
    } else {
        None
    };
    Ok(LemmaA1Report {
        hypothesis_ok,
        lambda0,
        threshold,
        first_index,
        strictly_increasing,
        bound_index,
        lambda,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaA2Report {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu_bar: f64,
    /// `3 + log_{1/mu_bar} (lambda_1 / (lambda_1 - lambda_2))`
    pub t0_bound: f64,
    /// First `t` with `1 + lambda_t < 0`.
    pub t_first: Option<u64>,
    pub within_bound: bool,
    /// `1 + lambda_t < 0` for every `t >= t_first` up to the horizon.
    pub absorbing: bool,
    /// `lambda_{t+1} < lambda_t` whenever `t >= 1` and `lambda_t > 0`.
    pub descending_while_positive: bool,
    pub lambda: Vec<f64>,
}

/// Requires μ strictly increasing over the horizon with `sup mu < 1`, and
/// `lambda_1 > lambda_2`, `lambda_1 > 0`. The divergent product of `1/mu_t`
/// that the lemma also assumes is automatic when `sup mu < 1`.
pub fn verify_lemma_a2(mu: &Schedule, lambda0: Option<f64>, horizon: u64) -> Result<LemmaA2Report> {
    if horizon < 3 {
        return Err(MomentaError::InvalidArgument("horizon must be >= 3".into()));
    }
    let mus: Vec<f64> = (0..=horizon).map(|t| momentum(mu, t)).collect::<Result<_>>()?;
    if !strictly_schedule(&mus, true) {
        return Err(MomentaError::Hypothesis("mu must be strictly increasing".into()));
    }
    let mu_bar = mu.bounds().sup.max(mus[horizon as usize]);
    if !(mu_bar < 1.0) {
        return Err(MomentaError::Hypothesis(format!(
            "mu must be bounded above by some mu_bar < 1 (sup = {mu_bar})"
        )));
    }
    let lambda0 = lambda0.unwrap_or_else(|| default_lambda0(mu));
    let mut lambda = vec![lambda0];
    for t in 0..horizon as usize {
        lambda.push(lambda[t] / mus[t] - 1.0);
    }
    let (l1, l2) = (lambda[1], lambda[2]);
    if !(l1 > 0.0 && l1 > l2) {
        return Err(MomentaError::Hypothesis(format!(
            "need lambda_1 > 0 and lambda_1 > lambda_2 (lambda_1 = {l1}, lambda_2 = {l2})"
        )));
    }
    let t0_bound = 3.0 + (l1 / (l1 - l2)).ln() / (1.0 / mu_bar).ln();
    let t_first = lambda.iter().position(|l| 1.0 + l < 0.0).map(|i| i as u64);
    let absorbing = t_first.is_some_and(|tf| lambda[tf as usize..].iter().all(|l| 1.0 + l < 0.0));
    let descending_while_positive = lambda[1..].windows(2).all(|w| w[0] <= 0.0 || w[1] < w[0]);
    Ok(LemmaA2Report {
        lambda0,
        lambda1: l1,
        lambda2: l2,
        mu_bar,
        t0_bound,
        within_bound: t_first.is_some_and(|tf| tf as f64 <= t0_bound.ceil()),
        t_first,
        absorbing,
        descending_while_positive,
        lambda,
    })
}
