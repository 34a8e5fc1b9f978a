//! The unified momentum iteration
//!
//! ```text
//! w+ = w + a_t v - b_t alpha_t h
//! v+ = mu_t v - alpha_t h
//! theta = w - eps_t v
//! ```
//!
//! with `h` an oracle draw at `w_t` (not `theta_t`). Heavy ball, Nesterov and
//! plain SGD are presets. The transformed variable `u = w + k v` with
//! `k_t = a_t / (1 - mu_t)` obeys
//!
//! ```text
//! u+ = u + delta_t mu_t v - (b_t + k_{t+1}) alpha_t h,    delta_t = k_{t+1} - k_t
//! ```
//!
//! which [`u_recursion_residual`] checks step by step.

use serde::{Deserialize, Serialize};

use crate::analysis::{MetricRow, RunRecord};
use crate::block::BlockPolicy;
use crate::error::{MomentaError, Result};
use crate::objectives::{norm, norm_sq, Objective};
use crate::oracles::GradientOracle;
use crate::schedules::{ConditionReport, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `eps = 0, a = mu, b = 1`
    Shb,
    /// `eps = mu_t, a = mu_{t+1} mu_t, b = 1 + mu_{t+1}`
    Snag,
    /// `mu = 0` plus the heavy-ball mapping
    Sgd,
    #[default]
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnifiedParams {
    #[serde(default)]
    pub preset: Preset,
    pub alpha: Schedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Schedule>,
}

/// Scalars in effect at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCoefficients {
    pub alpha: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub eps: f64,
}

impl StepCoefficients {
    /// `k_t = a_t / (1 - mu_t)`
    pub fn k(&self) -> f64 {
        self.a / (1.0 - self.mu)
    }
}

impl UnifiedParams {
    pub fn shb(mu: Schedule, alpha: Schedule) -> Self {
        Self::preset(Preset::Shb, Some(mu), alpha)
    }

    pub fn snag(mu: Schedule, alpha: Schedule) -> Self {
        Self::preset(Preset::Snag, Some(mu), alpha)
    }

    pub fn sgd(alpha: Schedule) -> Self {
        Self::preset(Preset::Sgd, None, alpha)
    }

    pub fn custom(a: Schedule, b: Schedule, eps: Schedule, mu: Schedule, alpha: Schedule) -> Self {
        Self {
            preset: Preset::Custom,
            alpha,
            mu: Some(mu),
            a: Some(a),
            b: Some(b),
            eps: Some(eps),
        }
    }

    fn preset(preset: Preset, mu: Option<Schedule>, alpha: Schedule) -> Self {
        Self {
            preset,
            alpha,
            mu,
            a: None,
            b: None,
            eps: None,
        }
    }

    /// Each preset fixes `a`, `b`, `eps` (and `sgd` fixes `mu`); supplying
    /// them as well is an error rather than a silent override.
    pub fn check_shape(&self) -> Result<()> {
        let given = |s: &Option<Schedule>| s.is_some();
        let fixed = given(&self.a) || given(&self.b) || given(&self.eps);
        let err = |m: &str| Err(MomentaError::InvalidArgument(m.to_string()));
        match self.preset {
            Preset::Shb | Preset::Snag if fixed => {
                err("presets shb/snag fix a, b and eps; remove them or use preset custom")
            }
            Preset::Shb | Preset::Snag if self.mu.is_none() => err("presets shb/snag need mu"),
            Preset::Sgd if fixed || self.mu.as_ref().is_some_and(|m| !m.is_zero()) => {
                err("preset sgd fixes mu = 0, a = 0, b = 1, eps = 0")
            }
            Preset::Custom if !(self.mu.is_some() && fixed && self.a.is_some() && self.b.is_some() && self.eps.is_some()) => {
                err("preset custom needs a, b, eps, mu and alpha")
            }
            _ => {
                for s in [&self.mu, &self.a, &self.b, &self.eps].into_iter().flatten() {
                    s.validate()?;
                }
                self.alpha.validate()
            }
        }
    }

    fn mu_at(&self, t: u64) -> f64 {
        self.mu.as_ref().map_or(0.0, |m| m.eval(t))
    }

    /// Coefficients at step `t`. Nesterov reads `mu_{t+1}`, which requires a
    /// predictable schedule (all built-in kinds are).
    pub fn coefficients(&self, t: u64) -> Result<StepCoefficients> {
        let alpha = self.alpha.eval(t);
        let mu = self.mu_at(t);
        let c = match self.preset {
            Preset::Shb => StepCoefficients { alpha, mu, a: mu, b: 1.0, eps: 0.0 },
            Preset::Sgd => StepCoefficients { alpha, mu: 0.0, a: 0.0, b: 1.0, eps: 0.0 },
            Preset::Snag => {
                let next = self.mu_at(t + 1);
                StepCoefficients { alpha, mu, a: next * mu, b: 1.0 + next, eps: mu }
            }
            Preset::Custom => {
                let get = |s: &Option<Schedule>, name: &str| {
                    s.as_ref().map(|s| s.eval(t)).ok_or_else(|| {
                        MomentaError::InvalidArgument(format!("custom preset is missing {name}"))
                    })
                };
                StepCoefficients {
                    alpha,
                    mu,
                    a: get(&self.a, "a")?,
                    b: get(&self.b, "b")?,
                    eps: get(&self.eps, "eps")?,
                }
            }
        };
        Ok(c)
    }

    /// Analytic `(inf, sup)` of `a`, `b`, `|eps|`, `mu` over all `t`.
    fn analytic_bounds(&self) -> [(f64, f64); 4] {
        let mu = self.mu.as_ref().map_or((0.0, 0.0), |m| {
            let b = m.bounds();
            (b.inf, b.sup)
        });
        let of = |s: &Option<Schedule>| {
            s.as_ref().map_or((0.0, 0.0), |s| {
                let b = s.bounds();
                (b.inf, b.sup)
            })
        };
        match self.preset {
            Preset::Shb => [mu, (1.0, 1.0), (0.0, 0.0), mu],
            Preset::Sgd => [(0.0, 0.0), (1.0, 1.0), (0.0, 0.0), (0.0, 0.0)],
            Preset::Snag => {
                let abs = mu.0.abs().max(mu.1.abs());
                let a_inf = if mu.0 >= 0.0 { mu.0 * mu.0 } else { -abs * abs };
                [(a_inf, mu.1 * mu.1), (1.0 + mu.0, 1.0 + mu.1), (0.0, abs), mu]
            }
            Preset::Custom => {
                let e = of(&self.eps);
                [of(&self.a), of(&self.b), (0.0, e.0.abs().max(e.1.abs())), mu]
            }
        }
    }
}

pub const PARAMETER_BOUNDS: &str = "parameter_bounds";
pub const MU_BELOW_ONE: &str = "mu_bounded_away_from_one";
pub const MU_NONNEGATIVE: &str = "mu_nonnegative";
pub const A_BOUNDED: &str = "a_bounded";
pub const B_BOUNDED: &str = "b_bounded";
pub const EPS_BOUNDED: &str = "eps_bounded";
pub const K_IN_RANGE: &str = "k_in_range";
pub const B_PLUS_K_IN_RANGE: &str = "b_plus_k_in_range";
pub const DELTA_VANISHES: &str = "delta_vanishes";

fn hard(bound: &'static str, detail: String) -> MomentaError {
    MomentaError::ParamBound { bound, detail }
}

/// Check the box constraints
///
/// ```text
/// 0 <= a_t <= a_bar,  0 < b_lo <= b_t <= b_bar,  0 <= mu_t <= mu_bar < 1,  |eps_t| <= eps_bar
/// ```
///
/// at every `t <= horizon` and analytically over all `t`, plus
/// `k_t in [0, k_bar]`, `b_t + k_{t+1} in [b_lo, b_bar + k_bar]` and a
/// vanishing trend of `|delta_t|` over the last 10% of the horizon.
///
/// Observed `mu_t >= 1`, `b_t <= 0`, `a_t < 0` and a momentum schedule whose
/// supremum reaches 1 are hard errors; the rest is reported.
pub fn validate_params(p: &UnifiedParams, horizon: u64) -> Result<ConditionReport> {
    if horizon < 1 {
        return Err(MomentaError::InvalidArgument("horizon must be >= 1".into()));
    }
    p.check_shape()?;
    let coeffs = (0..=horizon + 1)
        .map(|t| p.coefficients(t))
        .collect::<Result<Vec<_>>>()?;
    for (t, c) in coeffs.iter().enumerate() {
        if !(c.mu < 1.0) {
            return Err(hard(
                "mu bounded away from 1",
                format!("mu_t = {} at t = {t}; momentum must satisfy mu_t <= mu_bar < 1", c.mu),
            ));
        }
        if !(c.b > 0.0) {
            return Err(hard("b > 0", format!("b_t = {} at t = {t}", c.b)));
        }
        if !(c.a >= 0.0) {
            return Err(hard("a >= 0", format!("a_t = {} at t = {t}", c.a)));
        }
        if !(c.alpha.is_finite() && c.eps.is_finite()) {
            return Err(hard("finite parameters", format!("non-finite alpha or eps at t = {t}")));
        }
    }
    let [a_an, b_an, eps_an, mu_an] = p.analytic_bounds();
    let fold = |f: fn(&StepCoefficients) -> f64| {
        coeffs.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        })
    };
    let mu_obs = fold(|c| c.mu);
    let mu_bar = mu_obs.1.max(mu_an.1);
    if mu_bar >= 1.0 {
        return Err(hard(
            "mu bounded away from 1",
            format!("sup_t mu_t = {mu_bar}; momentum must satisfy mu_t <= mu_bar < 1"),
        ));
    }
    let mu_lo = mu_obs.0.min(mu_an.0);
    let a_obs = fold(|c| c.a);
    let (a_lo, a_bar) = (a_obs.0.min(a_an.0), a_obs.1.max(a_an.1));
    let b_obs = fold(|c| c.b);
    let (b_lo, b_bar) = (b_obs.0.min(b_an.0), b_obs.1.max(b_an.1));
    let eps_bar = fold(|c| c.eps.abs()).1.max(eps_an.1);
    let k_bar = a_bar / (1.0 - mu_bar);

    let mut r = ConditionReport::new(PARAMETER_BOUNDS);
    r.push(MU_BELOW_ONE, true, 1.0 - mu_bar).detail = Some(format!("mu_bar = {mu_bar}"));
    r.push(MU_NONNEGATIVE, mu_lo >= 0.0, mu_lo).detail = Some(format!("inf mu = {mu_lo}"));
    r.push(A_BOUNDED, a_lo >= 0.0 && a_bar.is_finite(), a_lo).detail =
        Some(format!("a in [{a_lo}, {a_bar}]"));
    r.push(B_BOUNDED, b_lo > 0.0 && b_bar.is_finite(), b_lo).detail =
        Some(format!("b in [{b_lo}, {b_bar}]"));
    r.push(EPS_BOUNDED, eps_bar.is_finite(), 0.0).detail = Some(format!("eps_bar = {eps_bar}"));

    let ks: Vec<f64> = coeffs.iter().map(StepCoefficients::k).collect();
    let k_max = ks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let k_min = ks.iter().copied().fold(f64::INFINITY, f64::min);
    let k_ok = k_min >= 0.0 && k_max <= k_bar * (1.0 + 1e-12);
    r.push(K_IN_RANGE, k_ok, k_bar - k_max).detail =
        Some(format!("k in [{k_min}, {k_max}], k_bar = {k_bar}"));
    let bk: Vec<f64> = (0..=horizon as usize).map(|t| coeffs[t].b + ks[t + 1]).collect();
    let bk_max = bk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bk_min = bk.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = b_bar + k_bar;
    let bk_ok = bk_min >= b_lo * (1.0 - 1e-12) && bk_max <= hi * (1.0 + 1e-12);
    r.push(B_PLUS_K_IN_RANGE, bk_ok, hi - bk_max).detail =
        Some(format!("b + k_next in [{bk_min}, {bk_max}], allowed [{b_lo}, {hi}]"));

    let deltas: Vec<f64> = (0..=horizon as usize).map(|t| (ks[t + 1] - ks[t]).abs()).collect();
    let (ok, margin, detail) = delta_trend(&deltas);
    r.push(DELTA_VANISHES, ok, margin).detail = Some(detail);
    Ok(r)
}

/// `|delta_t|` vanishes if its maximum over the last 10% is negligible or
/// at most half its maximum over the first 10%.
fn delta_trend(deltas: &[f64]) -> (bool, f64, String) {
    let n = deltas.len();
    let w = (n / 10).max(1);
    let head = deltas[..w].iter().copied().fold(0.0, f64::max);
    let tail = deltas[n - w..].iter().copied().fold(0.0, f64::max);
    let detail = format!("max |delta| head = {head:e}, tail = {tail:e}");
    if tail <= 1e-12 {
        (true, 1.0, detail)
    } else if head > 0.0 {
        let ratio = tail / head;
        (ratio <= 0.5, 1.0 - ratio, detail)
    } else {
        (false, -1.0, detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedState {
    pub t: u64,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    /// `w - eps_t v`
    pub theta: Vec<f64>,
    /// `w + k_t v`
    pub u: Vec<f64>,
    pub k: f64,
    /// `k_{t+1} - k_t`
    pub delta: f64,
    /// `J(u) + |v|^2`
    pub lyapunov: f64,
}

impl UnifiedState {
    /// State at `t = 0`; `v0` defaults to zero so `theta_0 = w_0`.
    pub fn new(
        w0: Vec<f64>,
        v0: Option<Vec<f64>>,
        p: &UnifiedParams,
        obj: &dyn Objective,
    ) -> Result<Self> {
        let d = obj.dim();
        let v0 = v0.unwrap_or_else(|| vec![0.0; d]);
        for len in [w0.len(), v0.len()] {
            if len != d {
                return Err(MomentaError::Dimension { expected: d, got: len });
            }
        }
        Self::at(0, w0, v0, p, obj)
    }

    /// Fill in the derived fields for `(t, w, v)`.
    pub fn at(t: u64, w: Vec<f64>, v: Vec<f64>, p: &UnifiedParams, obj: &dyn Objective) -> Result<Self> {
        let c = p.coefficients(t)?;
        let k = c.k();
        let delta = p.coefficients(t + 1)?.k() - k;
        let theta: Vec<f64> = w.iter().zip(&v).map(|(w, v)| w - c.eps * v).collect();
        let u: Vec<f64> = w.iter().zip(&v).map(|(w, v)| w + k * v).collect();
        let lyapunov = obj.value(&u) + norm_sq(&v);
        let finite = lyapunov.is_finite() && theta.iter().chain(&u).all(|x| x.is_finite());
        if !finite {
            return Err(MomentaError::Divergence { t });
        }
        Ok(Self { t, w, v, theta, u, k, delta, lyapunov })
    }
}

/// One step of the unified update with oracle output `h`. Non-finite
/// results come back as [`MomentaError::Divergence`].
pub fn unified_step(
    state: &UnifiedState,
    p: &UnifiedParams,
    h: &[f64],
    obj: &dyn Objective,
) -> Result<UnifiedState> {
    if h.len() != state.w.len() {
        return Err(MomentaError::Dimension { expected: state.w.len(), got: h.len() });
    }
    let c = p.coefficients(state.t)?;
    let mut w = Vec::with_capacity(h.len());
    let mut v = Vec::with_capacity(h.len());
    for ((wi, vi), hi) in state.w.iter().zip(&state.v).zip(h) {
        w.push(wi + c.a * vi - c.b * c.alpha * hi);
        v.push(c.mu * vi - c.alpha * hi);
    }
    if !w.iter().chain(&v).all(|x| x.is_finite()) {
        return Err(MomentaError::Divergence { t: state.t + 1 });
    }
    UnifiedState::at(state.t + 1, w, v, p, obj)
}

/// `|u_{t+1} - (u_t + delta_t mu_t v_t - (b_t + k_{t+1}) alpha_t h)|`,
/// where `u_{t+1}` is the one stored in `next`.
pub fn u_recursion_residual(
    state: &UnifiedState,
    next: &UnifiedState,
    p: &UnifiedParams,
    h: &[f64],
) -> Result<f64> {
    let c = p.coefficients(state.t)?;
    let k_next = p.coefficients(state.t + 1)?.k();
    let delta = k_next - state.k;
    let diff: Vec<f64> = (0..h.len())
        .map(|i| {
            let via = state.u[i] + delta * c.mu * state.v[i] - (c.b + k_next) * c.alpha * h[i];
            next.u[i] - via
        })
        .collect();
    Ok(norm(&diff))
}

type Mat2 = [[f64; 2]; 2];

fn mul(x: &Mat2, y: &Mat2) -> Mat2 {
    let mut z = [[0.0; 2]; 2];
    for (i, row) in z.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = x[i][0] * y[0][j] + x[i][1] * y[1][j];
        }
    }
    z
}

fn max_abs_diff(x: &Mat2, y: &Mat2) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            m = m.max((x[i][j] - y[i][j]).abs());
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenResiduals {
    /// `|Z^-1 A Z - Lambda|_max`
    pub decoupling: f64,
    /// `|Z^-1 Z - I|_max`
    pub inverse: f64,
}

/// Scalar representatives of the iteration matrix `A = [[1, a], [0, mu]]`,
/// its eigenvector matrix `Z = [[1, -k], [0, 1]]`, `Z^-1 = [[1, k], [0, 1]]`
/// and `Lambda = diag(1, mu)`.
pub fn eigen_residuals(a: f64, mu: f64) -> Result<EigenResiduals> {
    if !(mu < 1.0) {
        return Err(hard("mu bounded away from 1", format!("mu = {mu}; Z is undefined at mu = 1")));
    }
    let k = a / (1.0 - mu);
    let m_a = [[1.0, a], [0.0, mu]];
    let z = [[1.0, -k], [0.0, 1.0]];
    let z_inv = [[1.0, k], [0.0, 1.0]];
    let lambda = [[1.0, 0.0], [0.0, mu]];
    Ok(EigenResiduals {
        decoupling: max_abs_diff(&mul(&z_inv, &mul(&m_a, &z)), &lambda),
        inverse: max_abs_diff(&mul(&z_inv, &z), &[[1.0, 0.0], [0.0, 1.0]]),
    })
}

pub fn eigen_decoupling_check(p: &UnifiedParams, t: u64) -> Result<f64> {
    let c = p.coefficients(t)?;
    Ok(eigen_residuals(c.a, c.mu)?.decoupling)
}

/// Everything a single trajectory needs. The oracle and block policy carry
/// their own seeds; `seed` is recorded alongside the metrics.
pub struct RunInputs<'a> {
    pub objective: &'a dyn Objective,
    pub oracle: &'a dyn GradientOracle,
    pub block: &'a dyn BlockPolicy,
    pub params: &'a UnifiedParams,
    pub w0: Vec<f64>,
    pub v0: Option<Vec<f64>>,
    pub horizon: u64,
    pub seed: u64,
    pub config_hash: String,
}

fn row(state: &UnifiedState, obj: &dyn Objective, alpha: f64, running_min: &mut f64) -> MetricRow {
    let g = norm(&obj.gradient(&state.theta));
    *running_min = running_min.min(g);
    MetricRow {
        t: state.t,
        j_theta: obj.value(&state.theta),
        grad_norm: g,
        v_norm_sq: norm_sq(&state.v),
        lyapunov: state.lyapunov,
        running_min_grad: *running_min,
        alpha,
    }
}

/// Iterate the unified update for `horizon` steps, emitting `horizon + 1`
/// rows unless the trajectory diverges first. Each step draws the block
/// selection, queries the oracle at `w_t` on that support and rescales.
pub fn run(inputs: &RunInputs) -> Result<RunRecord> {
    let RunInputs { objective: obj, oracle, block, params: p, .. } = *inputs;
    validate_params(p, inputs.horizon)?;
    let d = obj.dim();
    let mut record = RunRecord {
        config_hash: inputs.config_hash.clone(),
        seed: inputs.seed,
        rows: Vec::with_capacity(inputs.horizon as usize + 1),
        divergence_step: None,
        lyapunov_violations: 0,
        last_lyapunov_violation: None,
    };
    let mut state = match UnifiedState::new(inputs.w0.clone(), inputs.v0.clone(), p, obj) {
        Ok(s) => s,
        Err(MomentaError::Divergence { t }) => {
            record.divergence_step = Some(t);
            return Ok(record);
        }
        Err(e) => return Err(e),
    };
    let mut running_min = f64::INFINITY;
    record.rows.push(row(&state, obj, p.alpha.eval(0), &mut running_min));
    for t in 0..inputs.horizon {
        let sel = block.draw(d, t, 0)?;
        let support = (!sel.is_full()).then(|| sel.support());
        let step = oracle
            .sample_on(&state.w, t, 0, support.as_deref())
            .and_then(|h| sel.apply(&h))
            .and_then(|h| unified_step(&state, p, &h, obj));
        let next = match step {
            Ok(s) => s,
            Err(MomentaError::Divergence { .. } | MomentaError::NonFiniteValue { .. }) => {
                record.divergence_step = Some(t + 1);
                break;
            }
            Err(e) => return Err(e),
        };
        if next.lyapunov > state.lyapunov + 1e-12 * (1.0 + state.lyapunov.abs()) {
            record.lyapunov_violations += 1;
            record.last_lyapunov_violation = Some(t + 1);
        }
        state = next;
        let r = row(&state, obj, p.alpha.eval(state.t), &mut running_min);
        if !(r.j_theta.is_finite() && r.grad_norm.is_finite()) {
            record.divergence_step = Some(state.t);
            break;
        }
        record.rows.push(r);
    }
    Ok(record)
}

/// Direct heavy-ball recursion `theta+ = theta + mu_t (theta - theta_prev) - alpha_t h`
/// from `theta_{-1} = theta_0`, for a given sequence of oracle outputs.
pub fn heavy_ball_reference(
    theta0: &[f64],
    mu: &Schedule,
    alpha: &Schedule,
    hs: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let mut out = vec![theta0.to_vec()];
    let mut prev = theta0.to_vec();
    for (t, h) in hs.iter().enumerate() {
        let (m, a) = (mu.eval(t as u64), alpha.eval(t as u64));
        let cur = out.last().unwrap().clone();
        let next: Vec<f64> = (0..cur.len())
            .map(|i| cur[i] + m * (cur[i] - prev[i]) - a * h[i])
            .collect();
        prev = cur;
        out.push(next);
    }
    out
}

/// Nesterov in velocity form, `v+ = mu_t v - alpha_t h`, `theta+ = theta + v+`,
/// where `h` approximates the gradient at the look-ahead point
/// `theta_t + mu_t v_t`. Returns `(theta_t, look-ahead_t)` for each `t`.
pub fn nesterov_reference(
    theta0: &[f64],
    mu: &Schedule,
    alpha: &Schedule,
    hs: &[Vec<f64>],
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let d = theta0.len();
    let mut theta = theta0.to_vec();
    let mut v = vec![0.0; d];
    let mut out = Vec::with_capacity(hs.len() + 1);
    for t in 0..=hs.len() {
        let m = mu.eval(t as u64);
        let look: Vec<f64> = (0..d).map(|i| theta[i] + m * v[i]).collect();
        out.push((theta.clone(), look));
        if t == hs.len() {
            break;
        }
        let a = alpha.eval(t as u64);
        for i in 0..d {
            v[i] = m * v[i] - a * hs[t][i];
            theta[i] += v[i];
        }
    }
    out
}
