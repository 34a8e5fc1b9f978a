//! Stochastic gradient oracles and Monte-Carlo audits of their declared
//! bias/variance envelopes.
//!
//! An oracle answers a query point `w` at step `t` with a random vector `h`
//! whose conditional mean is `z = grad J(w) + x` (bias `x`) and whose
//! fluctuation `zeta = h - z` has zero mean. Each oracle declares `B_t` and
//! `M_t` such that
//!
//! ```text
//! |x|            <= B_t (1 + |grad J(w)|)
//! E |zeta|^2     <= M_t^2 (1 + J(w))
//! ```
//!
//! and [`audit_oracle`] checks both by simulation.
//!
//! Draws are keyed on `(seed, t, replication)`, so two calls with the same
//! key return the same vector regardless of call order.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{MomentaError, Result};
use crate::objectives::{norm, Objective};
use crate::registry::{parse_params, Registry};
use crate::rng::{stream_rng, Stream};
use crate::schedules::Schedule;

/// Declared envelope constants at one `(w, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// `B_t`
    pub bias: f64,
    /// `M_t`
    pub variance: f64,
}

pub trait GradientOracle: Send + Sync + fmt::Debug {
    fn kind(&self) -> &'static str;

    fn objective(&self) -> &Arc<dyn Objective>;

    fn dim(&self) -> usize {
        self.objective().dim()
    }

    /// Draw `h_{t+1}` at `w`.
    fn sample(&self, w: &[f64], t: u64, replication: u64) -> Result<Vec<f64>> {
        self.sample_on(w, t, replication, None)
    }

    /// Draw `h_{t+1}` restricted to `support`; coordinates outside it come
    /// back as zero. Finite-difference oracles only perturb and evaluate
    /// along the support.
    fn sample_on(
        &self,
        w: &[f64],
        t: u64,
        replication: u64,
        support: Option<&[bool]>,
    ) -> Result<Vec<f64>>;

    fn envelope(&self, w: &[f64], t: u64) -> Envelope;

    /// Objective evaluations per full call (0 for gradient-based oracles).
    fn evaluations_per_call(&self) -> usize;
}

fn check_point(w: &[f64], d: usize) -> Result<()> {
    if w.len() != d {
        return Err(MomentaError::Dimension {
            expected: d,
            got: w.len(),
        });
    }
    Ok(())
}

fn finite_value(obj: &dyn Objective, point: &[f64]) -> Result<f64> {
    let v = obj.value(point);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(MomentaError::NonFiniteValue {
            point: point.to_vec(),
        })
    }
}

fn finite_gradient(obj: &dyn Objective, point: &[f64]) -> Result<Vec<f64>> {
    let g = obj.gradient(point);
    if g.iter().all(|x| x.is_finite()) {
        Ok(g)
    } else {
        Err(MomentaError::NonFiniteValue {
            point: point.to_vec(),
        })
    }
}

fn restrict(mut h: Vec<f64>, support: Option<&[bool]>) -> Vec<f64> {
    if let Some(s) = support {
        for (x, keep) in h.iter_mut().zip(s) {
            if !keep {
                *x = 0.0;
            }
        }
    }
    h
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn excess_value(obj: &dyn Objective, w: &[f64]) -> f64 {
    (obj.value(w) - obj.j_star()).max(0.0)
}

/// `h = grad J(w)`.
#[derive(Debug, Clone)]
pub struct ExactOracle {
    objective: Arc<dyn Objective>,
}

impl ExactOracle {
    pub fn new(objective: Arc<dyn Objective>) -> Self {
        Self { objective }
    }
}

impl GradientOracle for ExactOracle {
    fn kind(&self) -> &'static str {
        "exact"
    }

    fn objective(&self) -> &Arc<dyn Objective> {
        &self.objective
    }

    fn sample_on(&self, w: &[f64], _t: u64, _rep: u64, support: Option<&[bool]>) -> Result<Vec<f64>> {
        check_point(w, self.dim())?;
        Ok(restrict(finite_gradient(self.objective.as_ref(), w)?, support))
    }

    fn envelope(&self, _w: &[f64], _t: u64) -> Envelope {
        Envelope {
            bias: 0.0,
            variance: 0.0,
        }
    }

    fn evaluations_per_call(&self) -> usize {
        0
    }
}

/// `h = grad J(w) + zeta`, `zeta ~ N(0, (M_t^2 / d) I)` so `E|zeta|^2 = M_t^2`.
#[derive(Debug, Clone)]
pub struct AdditiveNoiseOracle {
    objective: Arc<dyn Objective>,
    noise_scale: Schedule,
    seed: u64,
}

impl AdditiveNoiseOracle {
    pub fn new(objective: Arc<dyn Objective>, noise_scale: Schedule, seed: u64) -> Self {
        Self {
            objective,
            noise_scale,
            seed,
        }
    }
}

impl GradientOracle for AdditiveNoiseOracle {
    fn kind(&self) -> &'static str {
        "additive_noise"
    }

    fn objective(&self) -> &Arc<dyn Objective> {
        &self.objective
    }

    fn sample_on(&self, w: &[f64], t: u64, rep: u64, support: Option<&[bool]>) -> Result<Vec<f64>> {
        let d = self.dim();
        check_point(w, d)?;
        let mut h = finite_gradient(self.objective.as_ref(), w)?;
        let sigma = self.noise_scale.eval(t) / (d as f64).sqrt();
        let mut rng = stream_rng(self.seed, Stream::Oracle, t, rep);
        for x in h.iter_mut() {
            *x += sigma * gaussian(&mut rng);
        }
        Ok(restrict(h, support))
    }

    fn envelope(&self, _w: &[f64], t: u64) -> Envelope {
        Envelope {
            bias: 0.0,
            variance: self.noise_scale.eval(t).abs(),
        }
    }

    fn evaluations_per_call(&self) -> usize {
        0
    }
}

/// Additive noise plus a drift along a fixed unit `direction` with norm
/// `bias_ratio * B_t * (1 + |grad J(w)|)`; `bias_ratio = 1` sits exactly on
/// the bias envelope.
#[derive(Debug, Clone)]
pub struct BiasedAdditiveOracle {
    objective: Arc<dyn Objective>,
    noise_scale: Schedule,
    bias_scale: Schedule,
    bias_ratio: f64,
    direction: Vec<f64>,
    seed: u64,
}

impl BiasedAdditiveOracle {
    pub fn new(
        objective: Arc<dyn Objective>,
        noise_scale: Schedule,
        bias_scale: Schedule,
        bias_ratio: f64,
        direction: Option<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        let d = objective.dim();
        if !(0.0..=1.0).contains(&bias_ratio) {
            return Err(MomentaError::InvalidOracle(format!(
                "bias_ratio must lie in [0, 1], got {bias_ratio}"
            )));
        }
        let direction = direction.unwrap_or_else(|| vec![1.0; d]);
        if direction.len() != d {
            return Err(MomentaError::Dimension {
                expected: d,
                got: direction.len(),
            });
        }
        let n = norm(&direction);
        if !(n > 0.0) || !n.is_finite() {
            return Err(MomentaError::InvalidOracle("bias direction must be non-zero".into()));
        }
        Ok(Self {
            objective,
            noise_scale,
            bias_scale,
            bias_ratio,
            direction: direction.iter().map(|x| x / n).collect(),
            seed,
        })
    }
}

impl GradientOracle for BiasedAdditiveOracle {
    fn kind(&self) -> &'static str {
        "biased_additive"
    }

    fn objective(&self) -> &Arc<dyn Objective> {
        &self.objective
    }

    fn sample_on(&self, w: &[f64], t: u64, rep: u64, support: Option<&[bool]>) -> Result<Vec<f64>> {
        let d = self.dim();
        check_point(w, d)?;
        let mut h = finite_gradient(self.objective.as_ref(), w)?;
        let drift = self.bias_ratio * self.bias_scale.eval(t).abs() * (1.0 + norm(&h));
        let sigma = self.noise_scale.eval(t) / (d as f64).sqrt();
        let mut rng = stream_rng(self.seed, Stream::Oracle, t, rep);
        for (x, u) in h.iter_mut().zip(&self.direction) {
            *x += drift * u + sigma * gaussian(&mut rng);
        }
        Ok(restrict(h, support))
    }

    fn envelope(&self, _w: &[f64], t: u64) -> Envelope {
        Envelope {
            bias: self.bias_scale.eval(t).abs(),
            variance: self.noise_scale.eval(t).abs(),
        }
    }

    fn evaluations_per_call(&self) -> usize {
        0
    }
}

/// Two-point simultaneous-perturbation estimate for one perturbation:
///
/// ```text
/// h_i = ([J(w + c D) + xi_plus_i] - [J(w - c D) - xi_minus_i]) / (2 c D_i)
/// ```
///
/// Components with `D_i = 0` are left at zero.
pub fn spsa_estimate(
    obj: &dyn Objective,
    w: &[f64],
    increment: f64,
    delta: &[f64],
    xi_plus: &[f64],
    xi_minus: &[f64],
) -> Result<Vec<f64>> {
    let plus: Vec<f64> = w.iter().zip(delta).map(|(x, s)| x + increment * s).collect();
    let minus: Vec<f64> = w.iter().zip(delta).map(|(x, s)| x - increment * s).collect();
    let j_plus = finite_value(obj, &plus)?;
    let j_minus = finite_value(obj, &minus)?;
    Ok(delta
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if s == 0.0 {
                0.0
            } else {
                ((j_plus + xi_plus[i]) - (j_minus - xi_minus[i])) / (2.0 * increment * s)
            }
        })
        .collect())
}

/// SPSA with Rademacher perturbations and per-component Gaussian measurement
/// noise of standard deviation `measurement_noise`.
#[derive(Debug, Clone)]
pub struct SpsaOracle {
    objective: Arc<dyn Objective>,
    increment: Schedule,
    measurement_noise: f64,
    seed: u64,
}

impl SpsaOracle {
    pub fn new(
        objective: Arc<dyn Objective>,
        increment: Schedule,
        measurement_noise: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(measurement_noise >= 0.0) || !measurement_noise.is_finite() {
            return Err(MomentaError::InvalidOracle(format!(
                "measurement_noise must be finite and >= 0, got {measurement_noise}"
            )));
        }
        Ok(Self {
            objective,
            increment,
            measurement_noise,
            seed,
        })
    }

    fn increment_at(&self, t: u64) -> Result<f64> {
        let c = self.increment.eval(t);
        if c > 0.0 && c.is_finite() {
            Ok(c)
        } else {
            Err(MomentaError::InvalidOracle(format!("increment c_t must be > 0, got {c} at t = {t}")))
        }
    }
}

impl GradientOracle for SpsaOracle {
    fn kind(&self) -> &'static str {
        "spsa"
    }

    fn objective(&self) -> &Arc<dyn Objective> {
        &self.objective
    }

    fn sample_on(&self, w: &[f64], t: u64, rep: u64, support: Option<&[bool]>) -> Result<Vec<f64>> {
        let d = self.dim();
        check_point(w, d)?;
        let c = self.increment_at(t)?;
        let mut rng = stream_rng(self.seed, Stream::Oracle, t, rep);
        let delta: Vec<f64> = (0..d)
            .map(|i| {
                let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                match support {
                    Some(mask) if !mask[i] => 0.0,
                    _ => s,
                }
            })
            .collect();
        let sigma = self.measurement_noise;
        let xi_plus: Vec<f64> = (0..d).map(|_| sigma * gaussian(&mut rng)).collect();
        let xi_minus: Vec<f64> = (0..d).map(|_| sigma * gaussian(&mut rng)).collect();
        spsa_estimate(self.objective.as_ref(), w, c, &delta, &xi_plus, &xi_minus)
    }

    /// `B_t = L d^{3/2} c_t / 2` and
    /// `M_t^2 = 4 L (d - 1) + L^2 d^3 c_t^2 / 2 + d sigma^2 / (2 c_t^2)`,
    /// from the two-sided quadratic bound on `J(w + cD) - J(w - cD)` and
    /// `|grad J|^2 <= 2 L (J - J*)`.
    fn envelope(&self, _w: &[f64], t: u64) -> Envelope {
        let d = self.dim() as f64;
        let l = self.objective.lipschitz();
        let c = self.increment.eval(t);
        let s2 = self.measurement_noise * self.measurement_noise;
        let m2 = 4.0 * l * (d - 1.0) + 0.5 * l * l * d.powi(3) * c * c + d * s2 / (2.0 * c * c);
        Envelope {
            bias: 0.5 * l * d.powf(1.5) * c,
            variance: m2.sqrt(),
        }
    }

    fn evaluations_per_call(&self) -> usize {
        2
    }
}

/// Forward differences along each coordinate: `d + 1` noisy evaluations,
/// with the base measurement `J(w) + xi_0` shared by every component.
#[derive(Debug, Clone)]
pub struct BlumOracle {
    objective: Arc<dyn Objective>,
    increment: Schedule,
    measurement_noise: f64,
    seed: u64,
}

impl BlumOracle {
    pub fn new(
        objective: Arc<dyn Objective>,
        increment: Schedule,
        measurement_noise: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(measurement_noise >= 0.0) || !measurement_noise.is_finite() {
            return Err(MomentaError::InvalidOracle(format!(
                "measurement_noise must be finite and >= 0, got {measurement_noise}"
            )));
        }
        Ok(Self {
            objective,
            increment,
            measurement_noise,
            seed,
        })
    }
}

impl GradientOracle for BlumOracle {
    fn kind(&self) -> &'static str {
        "blum_fd"
    }

    fn objective(&self) -> &Arc<dyn Objective> {
        &self.objective
    }

    fn sample_on(&self, w: &[f64], t: u64, rep: u64, support: Option<&[bool]>) -> Result<Vec<f64>> {
        let d = self.dim();
        check_point(w, d)?;
        let c = self.increment.eval(t);
        if !(c > 0.0) || !c.is_finite() {
            return Err(MomentaError::InvalidOracle(format!(
                "increment c_t must be > 0, got {c} at t = {t}"
            )));
        }
        let obj = self.objective.as_ref();
        let mut rng = stream_rng(self.seed, Stream::Oracle, t, rep);
        let sigma = self.measurement_noise;
        let base = finite_value(obj, w)? + sigma * gaussian(&mut rng);
        let mut probe = w.to_vec();
        let mut h = vec![0.0; d];
        for i in 0..d {
            let noise = sigma * gaussian(&mut rng);
            if support.is_some_and(|s| !s[i]) {
                continue;
            }
            probe[i] = w[i] + c;
            h[i] = (finite_value(obj, &probe)? + noise - base) / c;
            probe[i] = w[i];
        }
        Ok(h)
    }

    /// `B_t = sqrt(d) L c_t / 2`, `M_t^2 = 2 d sigma^2 / c_t^2`.
    fn envelope(&self, _w: &[f64], t: u64) -> Envelope {
        let d = self.dim() as f64;
        let c = self.increment.eval(t);
        let l = self.objective.lipschitz();
        Envelope {
            bias: 0.5 * d.sqrt() * l * c,
            variance: (2.0 * d).sqrt() * self.measurement_noise / c,
        }
    }

    fn evaluations_per_call(&self) -> usize {
        self.dim() + 1
    }
}

/// Monte-Carlo estimate of an oracle's bias and conditional variance at a
/// fixed `(w, t)`, compared with its declared envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAudit {
    pub kind: String,
    pub t: u64,
    pub estimated_bias_norm: f64,
    pub bias_bound: f64,
    pub bias_standard_error: f64,
    pub estimated_cond_variance: f64,
    pub variance_bound: f64,
    pub variance_standard_error: f64,
    pub replications: usize,
    pub pass: bool,
}

pub const MIN_AUDIT_REPLICATIONS: usize = 1000;

pub fn audit_oracle(
    oracle: &dyn GradientOracle,
    w: &[f64],
    t: u64,
    replications: usize,
) -> Result<OracleAudit> {
    if replications < MIN_AUDIT_REPLICATIONS {
        return Err(MomentaError::InvalidArgument(format!(
            "audit needs at least {MIN_AUDIT_REPLICATIONS} replications, got {replications}"
        )));
    }
    let d = oracle.dim();
    check_point(w, d)?;
    let samples = (0..replications)
        .map(|k| oracle.sample(w, t, k as u64))
        .collect::<Result<Vec<_>>>()?;
    let n = replications as f64;
    let mut mean = vec![0.0; d];
    for h in &samples {
        for (m, x) in mean.iter_mut().zip(h) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let spreads: Vec<f64> = samples
        .iter()
        .map(|h| h.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum())
        .collect();
    let variance = spreads.iter().sum::<f64>() / (n - 1.0);
    let spread_mean = spreads.iter().sum::<f64>() / n;
    let spread_sd =
        (spreads.iter().map(|s| (s - spread_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();

    let obj = oracle.objective();
    let grad = finite_gradient(obj.as_ref(), w)?;
    let bias: Vec<f64> = mean.iter().zip(&grad).map(|(m, g)| m - g).collect();
    let env = oracle.envelope(w, t);
    let bias_norm = norm(&bias);
    let bias_bound = env.bias * (1.0 + norm(&grad));
    let bias_se = (variance / n).sqrt();
    let variance_bound = env.variance * env.variance * (1.0 + excess_value(obj.as_ref(), w));
    let variance_se = spread_sd / n.sqrt();
    // the slack absorbs rounding in the Monte-Carlo mean
    let slack = 1e-12 * (1.0 + norm(&grad));
    let pass = bias_norm <= bias_bound + 3.0 * bias_se + slack
        && variance <= variance_bound + 3.0 * variance_se + slack * slack;
    Ok(OracleAudit {
        kind: oracle.kind().to_string(),
        t,
        estimated_bias_norm: bias_norm,
        bias_bound,
        bias_standard_error: bias_se,
        estimated_cond_variance: variance,
        variance_bound,
        variance_standard_error: variance_se,
        replications,
        pass,
    })
}

/// Build context for oracle factories: the objective the oracle queries and
/// the seed its draws are keyed on.
#[derive(Debug, Clone)]
pub struct OracleContext {
    pub objective: Arc<dyn Objective>,
    pub seed: u64,
}

pub type OracleRegistry = Registry<OracleContext, Arc<dyn GradientOracle>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExactParams {
    #[allow(dead_code)]
    kind: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseParams {
    #[allow(dead_code)]
    kind: String,
    noise_scale: Schedule,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BiasedParams {
    #[allow(dead_code)]
    kind: String,
    noise_scale: Schedule,
    bias_scale: Schedule,
    #[serde(default = "unit")]
    bias_ratio: f64,
    #[serde(default)]
    direction: Option<Vec<f64>>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DifferenceParams {
    #[allow(dead_code)]
    kind: String,
    increment: Schedule,
    #[serde(default)]
    measurement_noise: f64,
}

fn validated(s: Schedule) -> Result<Schedule> {
    s.validate()?;
    Ok(s)
}

/// Built-in oracles, selected by the `"kind"` field of a spec.
pub fn oracle_registry() -> OracleRegistry {
    let mut r: OracleRegistry = Registry::new("oracle", "kind");
    r.register("exact", |v, ctx| {
        let _: ExactParams = parse_params(v, MomentaError::InvalidOracle)?;
        Ok(Arc::new(ExactOracle::new(ctx.objective.clone())))
    })
    .register("additive_noise", |v, ctx| {
        let p: NoiseParams = parse_params(v, MomentaError::InvalidOracle)?;
        Ok(Arc::new(AdditiveNoiseOracle::new(
            ctx.objective.clone(),
            validated(p.noise_scale)?,
            ctx.seed,
        )))
    })
    .register("biased_additive", |v, ctx| {
        let p: BiasedParams = parse_params(v, MomentaError::InvalidOracle)?;
        Ok(Arc::new(BiasedAdditiveOracle::new(
            ctx.objective.clone(),
            validated(p.noise_scale)?,
            validated(p.bias_scale)?,
            p.bias_ratio,
            p.direction,
            ctx.seed,
        )?))
    })
    .register("spsa", |v, ctx| {
        let p: DifferenceParams = parse_params(v, MomentaError::InvalidOracle)?;
        Ok(Arc::new(SpsaOracle::new(
            ctx.objective.clone(),
            validated(p.increment)?,
            p.measurement_noise,
            ctx.seed,
        )?))
    })
    .register("blum_fd", |v, ctx| {
        let p: DifferenceParams = parse_params(v, MomentaError::InvalidOracle)?;
        Ok(Arc::new(BlumOracle::new(
            ctx.objective.clone(),
            validated(p.increment)?,
            p.measurement_noise,
            ctx.seed,
        )?))
    });
    r
}

/// Extract `(schedule for B_t, schedule for M_t, increment)` from an oracle
/// spec without building it; used by the summability checker.
pub fn oracle_schedules(spec: &Value) -> (Option<Schedule>, Option<Schedule>, Option<Schedule>) {
    let get = |key: &str| {
        spec.get(key)
            .and_then(|v| serde_json::from_value::<Schedule>(v.clone()).ok())
    };
    (get("bias_scale"), get("noise_scale"), get("increment"))
}
