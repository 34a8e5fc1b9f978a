//! Block-coordinate updating: draw a subset `S_t` of coordinates, then mask
//! and rescale the oracle output so its conditional mean is unchanged.
//!
//! Coordinates are 0-indexed here; reports and the CLI print them 1-indexed.
//! The selection for step `t` is drawn before the oracle is consulted so
//! finite-difference oracles can restrict their perturbation to `S_t`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MomentaError, Result};
use crate::registry::{parse_params, Registry};
use crate::rng::{stream_rng, Stream};
use crate::schedules::Schedule;

/// Per-coordinate multipliers for one step. A zero weight means the
/// coordinate is outside `S_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    weights: Vec<f64>,
    full: bool,
}

impl Selection {
    pub fn full(d: usize) -> Self {
        Self {
            weights: vec![1.0; d],
            full: true,
        }
    }

    /// `d e_kappa`.
    pub fn single(d: usize, kappa: usize) -> Result<Self> {
        Self::multi(d, &[kappa])
    }

    /// `(d / N) sum_n e_{kappa_n}`; a repeated index accumulates weight.
    pub fn multi(d: usize, draws: &[usize]) -> Result<Self> {
        if draws.is_empty() {
            return Err(MomentaError::InvalidBlockPolicy("need at least one draw".into()));
        }
        let scale = d as f64 / draws.len() as f64;
        let mut weights = vec![0.0; d];
        for &k in draws {
            if k >= d {
                return Err(MomentaError::InvalidBlockPolicy(format!(
                    "coordinate {} out of range 1..={d}",
                    k + 1
                )));
            }
            weights[k] += scale;
        }
        Ok(Self {
            weights,
            full: false,
        })
    }

    /// `(1 / rho) mask`.
    pub fn bernoulli(mask: &[bool], rho: f64) -> Result<Self> {
        check_rate(rho)?;
        Ok(Self {
            weights: mask.iter().map(|&m| if m { 1.0 / rho } else { 0.0 }).collect(),
            full: false,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_full(&self) -> bool {
        self.full
    }

    pub fn support(&self) -> Vec<bool> {
        self.weights.iter().map(|&w| w != 0.0).collect()
    }

    pub fn apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.weights.len() {
            return Err(MomentaError::Dimension {
                expected: self.weights.len(),
                got: h.len(),
            });
        }
        if self.full {
            return Ok(h.to_vec());
        }
        Ok(h.iter().zip(&self.weights).map(|(x, w)| x * w).collect())
    }
}

fn check_rate(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(MomentaError::InvalidBlockPolicy(format!(
            "success rate must lie in (0, 1], got {rho}"
        )))
    }
}

pub trait BlockPolicy: Send + Sync + fmt::Debug {
    fn kind(&self) -> &'static str;

    fn draw(&self, d: usize, t: u64, replication: u64) -> Result<Selection>;

    /// Every possible selection at step `t` with its probability. Only
    /// intended for small `d`; errors when the outcome space exceeds
    /// `limit` entries.
    fn outcomes(&self, d: usize, t: u64, limit: usize) -> Result<Vec<(f64, Selection)>>;
}

fn too_many(n: f64, limit: usize) -> Result<()> {
    if n > limit as f64 {
        Err(MomentaError::InvalidArgument(format!(
            "outcome space of size {n} exceeds limit {limit}"
        )))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct FullBlock;

impl BlockPolicy for FullBlock {
    fn kind(&self) -> &'static str {
        "full"
    }

    fn draw(&self, d: usize, _t: u64, _rep: u64) -> Result<Selection> {
        Ok(Selection::full(d))
    }

    fn outcomes(&self, d: usize, _t: u64, _limit: usize) -> Result<Vec<(f64, Selection)>> {
        Ok(vec![(1.0, Selection::full(d))])
    }
}

#[derive(Debug, Clone)]
pub struct SingleCoordinate {
    seed: u64,
}

impl SingleCoordinate {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl BlockPolicy for SingleCoordinate {
    fn kind(&self) -> &'static str {
        "single_coordinate"
    }

    fn draw(&self, d: usize, t: u64, rep: u64) -> Result<Selection> {
        let mut rng = stream_rng(self.seed, Stream::Block, t, rep);
        Selection::single(d, rng.random_range(0..d))
    }

    fn outcomes(&self, d: usize, _t: u64, limit: usize) -> Result<Vec<(f64, Selection)>> {
        too_many(d as f64, limit)?;
        let p = 1.0 / d as f64;
        (0..d).map(|k| Ok((p, Selection::single(d, k)?))).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MultiCoordinate {
    n_draws: usize,
    seed: u64,
}

impl MultiCoordinate {
    pub fn new(n_draws: usize, seed: u64) -> Result<Self> {
        if n_draws == 0 {
            return Err(MomentaError::InvalidBlockPolicy("n_draws must be >= 1".into()));
        }
        Ok(Self { n_draws, seed })
    }
}

impl BlockPolicy for MultiCoordinate {
    fn kind(&self) -> &'static str {
        "multi_coordinate"
    }

    fn draw(&self, d: usize, t: u64, rep: u64) -> Result<Selection> {
        let mut rng = stream_rng(self.seed, Stream::Block, t, rep);
        let draws: Vec<usize> = (0..self.n_draws).map(|_| rng.random_range(0..d)).collect();
        Selection::multi(d, &draws)
    }

    fn outcomes(&self, d: usize, _t: u64, limit: usize) -> Result<Vec<(f64, Selection)>> {
        let n = self.n_draws;
        too_many((d as f64).powi(n as i32), limit)?;
        let total = d.pow(n as u32);
        let p = 1.0 / total as f64;
        (0..total)
            .map(|mut code| {
                let draws: Vec<usize> = (0..n)
                    .map(|_| {
                        let k = code % d;
                        code /= d;
                        k
                    })
                    .collect();
                Ok((p, Selection::multi(d, &draws)?))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BernoulliBlock {
    success_rate: Schedule,
    seed: u64,
}

impl BernoulliBlock {
    /// Requires `inf_t rho_t > 0`.
    pub fn new(success_rate: Schedule, seed: u64) -> Result<Self> {
        success_rate.validate()?;
        let b = success_rate.bounds();
        if !(b.inf > 0.0) {
            return Err(MomentaError::InvalidBlockPolicy(format!(
                "success rate must be bounded away from 0 (inf = {})",
                b.inf
            )));
        }
        Ok(Self { success_rate, seed })
    }

    fn rate(&self, t: u64) -> Result<f64> {
        let rho = self.success_rate.eval(t);
        check_rate(rho)?;
        Ok(rho)
    }
}

impl BlockPolicy for BernoulliBlock {
    fn kind(&self) -> &'static str {
        "bernoulli"
    }

    fn draw(&self, d: usize, t: u64, rep: u64) -> Result<Selection> {
        let rho = self.rate(t)?;
        let mut rng = stream_rng(self.seed, Stream::Block, t, rep);
        let mask: Vec<bool> = (0..d).map(|_| rng.random::<f64>() < rho).collect();
        Selection::bernoulli(&mask, rho)
    }

    fn outcomes(&self, d: usize, t: u64, limit: usize) -> Result<Vec<(f64, Selection)>> {
        too_many(2f64.powi(d as i32), limit)?;
        let rho = self.rate(t)?;
        (0..1usize << d)
            .map(|bits| {
                let mask: Vec<bool> = (0..d).map(|i| bits >> i & 1 == 1).collect();
                let on = mask.iter().filter(|&&m| m).count() as i32;
                let p = rho.powi(on) * (1.0 - rho).powi(d as i32 - on);
                Ok((p, Selection::bernoulli(&mask, rho)?))
            })
            .collect()
    }
}

/// Draw the step-`t` selection and apply it to `h`.
pub fn apply_block(
    policy: &dyn BlockPolicy,
    h: &[f64],
    t: u64,
    replication: u64,
) -> Result<Vec<f64>> {
    policy.draw(h.len(), t, replication)?.apply(h)
}

/// Exact `E[apply_block(h)]` by enumeration (small `d` only).
pub fn exact_block_mean(policy: &dyn BlockPolicy, h: &[f64], t: u64) -> Result<Vec<f64>> {
    let mut mean = vec![0.0; h.len()];
    for (p, sel) in policy.outcomes(h.len(), t, 1 << 16)? {
        for (m, x) in mean.iter_mut().zip(sel.apply(h)?) {
            *m += p * x;
        }
    }
    Ok(mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessCheck {
    pub kind: String,
    /// `|mean(apply_block(h)) - h|`
    pub deviation: f64,
    pub standard_error: f64,
    pub replications: usize,
    pub pass: bool,
}

pub const MIN_BLOCK_REPLICATIONS: usize = 10_000;

/// Monte-Carlo check of `E[apply_block(h)] = h` at step 0; passes when the
/// deviation is within 4 standard errors.
pub fn verify_block_unbiasedness(
    policy: &dyn BlockPolicy,
    h: &[f64],
    replications: usize,
) -> Result<UnbiasednessCheck> {
    if replications < MIN_BLOCK_REPLICATIONS {
        return Err(MomentaError::InvalidArgument(format!(
            "need at least {MIN_BLOCK_REPLICATIONS} replications, got {replications}"
        )));
    }
    let d = h.len();
    let n = replications as f64;
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    for k in 0..replications {
        let y = apply_block(policy, h, 0, k as u64)?;
        for i in 0..d {
            sum[i] += y[i];
            sum_sq[i] += y[i] * y[i];
        }
    }
    let mut dev_sq = 0.0;
    let mut var_trace = 0.0;
    for i in 0..d {
        let m = sum[i] / n;
        dev_sq += (m - h[i]).powi(2);
        var_trace += ((sum_sq[i] - n * m * m) / (n - 1.0)).max(0.0);
    }
    let deviation = dev_sq.sqrt();
    let standard_error = (var_trace / n).sqrt();
    Ok(UnbiasednessCheck {
        kind: policy.kind().to_string(),
        deviation,
        standard_error,
        replications,
        pass: deviation <= 4.0 * standard_error,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct BlockContext {
    pub seed: u64,
}

pub type BlockRegistry = Registry<BlockContext, std::sync::Arc<dyn BlockPolicy>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FullParams {
    #[allow(dead_code)]
    kind: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiParams {
    #[allow(dead_code)]
    kind: String,
    n_draws: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BernoulliParams {
    #[allow(dead_code)]
    kind: String,
    success_rate: Schedule,
}

/// Built-in policies, selected by the `"kind"` field of a spec.
pub fn block_registry() -> BlockRegistry {
    use std::sync::Arc;
    let mut r: BlockRegistry = Registry::new("block policy", "kind");
    r.register("full", |v, _| {
        let _: FullParams = parse_params(v, MomentaError::InvalidBlockPolicy)?;
        Ok(Arc::new(FullBlock))
    })
    .register("single_coordinate", |v, ctx| {
        let _: FullParams = parse_params(v, MomentaError::InvalidBlockPolicy)?;
        Ok(Arc::new(SingleCoordinate::new(ctx.seed)))
    })
    .register("multi_coordinate", |v, ctx| {
        let p: MultiParams = parse_params(v, MomentaError::InvalidBlockPolicy)?;
        Ok(Arc::new(MultiCoordinate::new(p.n_draws, ctx.seed)?))
    })
    .register("bernoulli", |v, ctx| {
        let p: BernoulliParams = parse_params(v, MomentaError::InvalidBlockPolicy)?;
        Ok(Arc::new(BernoulliBlock::new(p.success_rate, ctx.seed)?))
    });
    r
}
