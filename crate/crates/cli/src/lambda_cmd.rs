use std::io::Write;

use anyhow::{bail, Result};
use serde::Serialize;

use momenta::lambda::{default_lambda0, iterate_lambda, monotonicity, verify_lemma_a1, verify_lemma_a2, Monotonicity};
use momenta::{MomentaError, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    /// `"A1"`, `"A2"`, `"fixed point"`, or `"none"` for non-monotone μ.
    pub lemma: String,
    pub hypothesis_ok: bool,
    /// A1: first index with λ above the threshold. A2: first index with
    /// `1 + λ < 0`.
    pub t_first: Option<u64>,
    /// A1: index where the geometric lower bound crosses the threshold.
    /// A2: the analytic bound on `t_first`.
    pub t0_bound: Option<f64>,
    pub lambda0: f64,
    pub horizon: u64,
}

/// One row per `t = 0..=horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaRow {
    pub t: u64,
    pub lambda: f64,
    pub eta: f64,
    pub one_plus_lambda: f64,
}

pub struct LambdaOutput {
    pub verdict: Verdict,
    pub rows: Vec<LambdaRow>,
}

pub fn analyze(
    mu: &Schedule,
    alpha: &Schedule,
    lambda0: Option<f64>,
    horizon: u64,
    threshold: f64,
) -> Result<LambdaOutput> {
    mu.validate()?;
    alpha.validate()?;
    if horizon < 3 {
        bail!("horizon must be >= 3");
    }
    let mus = mu.values(horizon);
    let shape = monotonicity(&mus);
    let l0 = lambda0.unwrap_or_else(|| default_lambda0(mu));
    let mut verdict = Verdict {
        lemma: String::new(),
        hypothesis_ok: false,
        t_first: None,
        t0_bound: None,
        lambda0: l0,
        horizon,
    };
    let lambda: Vec<f64> = match shape {
        Monotonicity::Decreasing => {
            if lambda0.is_some_and(|l| l != default_lambda0(mu)) {
                bail!("for decreasing mu the analysis fixes lambda0 = mu0 / (1 - mu0)");
            }
            let r = verify_lemma_a1(mu, threshold, horizon)?;
            verdict.lemma = "A1".into();
            verdict.hypothesis_ok = r.hypothesis_ok && r.strictly_increasing;
            verdict.t_first = r.first_index;
            verdict.t0_bound = r.bound_index.map(|b| b as f64);
            iterate_lambda(mu, alpha, l0, horizon)?.lambda
        }
        Monotonicity::Increasing => {
            verdict.lemma = "A2".into();
            match verify_lemma_a2(mu, lambda0, horizon) {
                Ok(r) => {
                    verdict.hypothesis_ok = true;
                    verdict.t_first = r.t_first;
                    verdict.t0_bound = Some(r.t0_bound);
                }
                Err(MomentaError::Hypothesis(_)) => {}
                Err(e) => return Err(e.into()),
            }
            iterate_lambda(mu, alpha, l0, horizon)?.lambda
        }
        Monotonicity::Constant => {
            // Closed form: iterating a repelling fixed point only amplifies
            // rounding error.
            let m = mus[0];
            if !(m > 0.0 && m < 1.0) {
                bail!("mu must lie in (0, 1), got {m}");
            }
            let fixed = m / (1.0 - m);
            verdict.lemma = "fixed point".into();
            verdict.hypothesis_ok = (l0 - fixed).abs() <= 1e-12 * fixed.max(1.0);
            let gap = if verdict.hypothesis_ok { 0.0 } else { l0 - fixed };
            (0..=horizon + 1).map(|t| fixed + gap * m.powf(-(t as f64))).collect()
        }
        Monotonicity::Mixed => {
            verdict.lemma = "none".into();
            iterate_lambda(mu, alpha, l0, horizon)?.lambda
        }
    };
    let rows = (0..=horizon)
        .map(|t| {
            let i = t as usize;
            LambdaRow {
                t,
                lambda: lambda[i],
                eta: (1.0 + lambda[i + 1]) * alpha.eval(t),
                one_plus_lambda: 1.0 + lambda[i],
            }
        })
        .collect();
    Ok(LambdaOutput { verdict, rows })
}

pub fn write_rows<W: Write>(w: W, rows: &[LambdaRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
