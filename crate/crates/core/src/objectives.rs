//! Test objectives with known structure: smoothness constant `L`, optional
//! PL constant `K`, minimum value (always 0 for the built-ins) and distance to
//! the minimizer set.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::Rng;
use serde::Deserialize;
use serde_json::Value;

use crate::error::{MomentaError, Result};
use crate::registry::{parse_params, Registry};
use crate::rng::{stream_rng, Stream};

pub trait Objective: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn value(&self, theta: &[f64]) -> f64;

    fn gradient(&self, theta: &[f64]) -> Vec<f64>;

    /// Global Lipschitz constant of the gradient.
    fn lipschitz(&self) -> f64;

    /// `K` with `|grad J|^2 >= K (J - J*)`, when known.
    fn pl_constant(&self) -> Option<f64> {
        None
    }

    fn j_star(&self) -> f64 {
        0.0
    }

    /// Distance from `theta` to the set of global minimizers.
    fn distance_to_minimizers(&self, _theta: &[f64]) -> Option<f64> {
        None
    }

    /// Envelope `eta` with `rho(theta) <= eta(J(theta))` near the minimizers.
    fn nsc_envelope(&self, _j: f64) -> Option<f64> {
        None
    }

    /// Half-width of the box used when sampling points for property checks.
    fn sampling_box(&self) -> f64 {
        10.0
    }
}

pub fn norm(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

pub fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `J(theta) = 1/2 sum_i diag_i theta_i^2`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    diag: Vec<f64>,
}

pub fn make_quadratic(diag: &[f64]) -> Result<Quadratic> {
    if diag.is_empty() {
        return Err(MomentaError::InvalidObjective("quadratic needs at least one entry".into()));
    }
    if let Some(bad) = diag.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
        return Err(MomentaError::InvalidObjective(format!(
            "quadratic diagonal entries must be positive and finite, got {bad}"
        )));
    }
    Ok(Quadratic {
        diag: diag.to_vec(),
    })
}

impl Quadratic {
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    fn min_eig(&self) -> f64 {
        self.diag.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Objective for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        0.5 * self.diag.iter().zip(theta).map(|(d, x)| d * x * x).sum::<f64>()
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.diag.iter().zip(theta).map(|(d, x)| d * x).collect()
    }

    fn lipschitz(&self) -> f64 {
        self.diag.iter().copied().fold(0.0, f64::max)
    }

    // |D theta|^2 >= 2 lambda_min J
    fn pl_constant(&self) -> Option<f64> {
        Some(2.0 * self.min_eig())
    }

    fn distance_to_minimizers(&self, theta: &[f64]) -> Option<f64> {
        Some(norm(theta))
    }

    fn nsc_envelope(&self, j: f64) -> Option<f64> {
        Some((2.0 * j.max(0.0) / self.min_eig()).sqrt())
    }
}

/// Certified lower bound on `J'(x)^2 / J(x)` for `J = x^2 + 3 sin^2 x` over
/// `[-10, 10] \ {0}`; a grid with spacing 5e-6 gives a minimum of 0.35106 near
/// `x = -2.2017`.
pub const PL_NONCONVEX_K: f64 = 0.35;

/// `J(x) = x^2 + 3 sin^2(x)`: nonconvex, PL, single minimizer at 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlNonconvex1d;

pub fn make_pl_nonconvex_1d() -> PlNonconvex1d {
    PlNonconvex1d
}

impl Objective for PlNonconvex1d {
    fn name(&self) -> &str {
        "pl_nonconvex_1d"
    }

    fn dim(&self) -> usize {
        1
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let x = theta[0];
        let s = x.sin();
        x * x + 3.0 * s * s
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let x = theta[0];
        vec![2.0 * x + 3.0 * (2.0 * x).sin()]
    }

    // J'' = 2 + 6 cos 2x ranges over [-4, 8]
    fn lipschitz(&self) -> f64 {
        8.0
    }

    fn pl_constant(&self) -> Option<f64> {
        Some(PL_NONCONVEX_K)
    }

    fn distance_to_minimizers(&self, theta: &[f64]) -> Option<f64> {
        Some(theta[0].abs())
    }

    // J >= x^2
    fn nsc_envelope(&self, j: f64) -> Option<f64> {
        Some(j.max(0.0).sqrt())
    }
}

/// Separable double well with flat tails:
/// `J(theta) = sum_i r(theta_i)^2`, `r(x) = (x^2 - 1) / (x^2 + 1)`.
///
/// Minimizers at `(+-1, ..., +-1)` with `J* = 0`. The origin is a stationary
/// point with `J = d`, and the gradient vanishes in the tails, so neither PL
/// nor KL' holds.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWell {
    dim: usize,
}

pub fn make_double_well(dim: usize) -> Result<DoubleWell> {
    if dim == 0 {
        return Err(MomentaError::InvalidObjective("double_well needs dim >= 1".into()));
    }
    Ok(DoubleWell { dim })
}

impl Objective for DoubleWell {
    fn name(&self) -> &str {
        "double_well"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .map(|x| {
                let r = (x * x - 1.0) / (x * x + 1.0);
                r * r
            })
            .sum()
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .map(|x| {
                let q = x * x + 1.0;
                let r = (x * x - 1.0) / q;
                2.0 * r * 4.0 * x / (q * q)
            })
            .collect()
    }

    // sup |J''| is attained at the origin, where J'' = -8
    fn lipschitz(&self) -> f64 {
        8.0
    }

    fn distance_to_minimizers(&self, theta: &[f64]) -> Option<f64> {
        Some(
            theta
                .iter()
                .map(|x| (x.abs() - 1.0).powi(2))
                .sum::<f64>()
                .sqrt(),
        )
    }
}

/// Piecewise quadratic whose curvature jumps across each axis:
/// `J(theta) = 1/2 sum_i diag_i (1 + asymmetry * sign(theta_i)) theta_i^2`.
///
/// The gradient is Lipschitz but not differentiable at the origin, which is
/// where symmetric difference quotients carry a bias linear in the increment.
#[derive(Debug, Clone)]
pub struct KinkedQuadratic {
    diag: Vec<f64>,
    asymmetry: f64,
}

pub fn make_kinked_quadratic(diag: &[f64], asymmetry: f64) -> Result<KinkedQuadratic> {
    make_quadratic(diag)?;
    if !(0.0..1.0).contains(&asymmetry) {
        return Err(MomentaError::InvalidObjective(format!(
            "asymmetry must lie in [0, 1), got {asymmetry}"
        )));
    }
    Ok(KinkedQuadratic {
        diag: diag.to_vec(),
        asymmetry,
    })
}

impl KinkedQuadratic {
    fn curvature(&self, i: usize, x: f64) -> f64 {
        let side = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.diag[i] * (1.0 + self.asymmetry * side)
    }
}

impl Objective for KinkedQuadratic {
    fn name(&self) -> &str {
        "kinked_quadratic"
    }

    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .enumerate()
            .map(|(i, x)| 0.5 * self.curvature(i, *x) * x * x)
            .sum()
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(i, x)| self.curvature(i, *x) * x)
            .collect()
    }

    fn lipschitz(&self) -> f64 {
        self.diag.iter().copied().fold(0.0, f64::max) * (1.0 + self.asymmetry)
    }

    fn pl_constant(&self) -> Option<f64> {
        Some(2.0 * self.diag.iter().copied().fold(f64::INFINITY, f64::min) * (1.0 - self.asymmetry))
    }

    fn distance_to_minimizers(&self, theta: &[f64]) -> Option<f64> {
        Some(norm(theta))
    }
}

/// Wraps an objective and counts value/gradient calls.
#[derive(Debug)]
pub struct CountingObjective<O> {
    inner: O,
    values: AtomicUsize,
    gradients: AtomicUsize,
}

impl<O: Objective> CountingObjective<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            values: AtomicUsize::new(0),
            gradients: AtomicUsize::new(0),
        }
    }

    pub fn value_calls(&self) -> usize {
        self.values.load(Ordering::Relaxed)
    }

    pub fn gradient_calls(&self) -> usize {
        self.gradients.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.values.store(0, Ordering::Relaxed);
        self.gradients.store(0, Ordering::Relaxed);
    }
}

impl<O: Objective> Objective for CountingObjective<O> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, theta: &[f64]) -> f64 {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.inner.value(theta)
    }
    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient(theta)
    }
    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }
    fn pl_constant(&self) -> Option<f64> {
        self.inner.pl_constant()
    }
    fn j_star(&self) -> f64 {
        self.inner.j_star()
    }
    fn distance_to_minimizers(&self, theta: &[f64]) -> Option<f64> {
        self.inner.distance_to_minimizers(theta)
    }
    fn nsc_envelope(&self, j: f64) -> Option<f64> {
        self.inner.nsc_envelope(j)
    }
    fn sampling_box(&self) -> f64 {
        self.inner.sampling_box()
    }
}

/// Outcome of [`verify_descent_lemma`].
#[derive(Debug, Clone, PartialEq)]
pub struct DescentCheck {
    pub passed: bool,
    pub samples: usize,
    /// First `(theta, phi, excess)` where the quadratic upper bound failed.
    pub first_violation: Option<(Vec<f64>, Vec<f64>, f64)>,
}

/// Sample `(theta, phi)` uniformly from the objective's sampling box and check
/// `J(theta + phi) <= J(theta) + <grad J(theta), phi> + L/2 |phi|^2` up to
/// `1e-10 (1 + |J(theta)|)`.
pub fn verify_descent_lemma(obj: &dyn Objective, samples: usize, seed: u64) -> Result<DescentCheck> {
    if samples == 0 {
        return Err(MomentaError::InvalidArgument("samples must be >= 1".into()));
    }
    let d = obj.dim();
    let half = obj.sampling_box();
    let l = obj.lipschitz();
    for i in 0..samples {
        let mut rng = stream_rng(seed, Stream::Sampling, i as u64, 0);
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-half..half)).collect();
        let phi: Vec<f64> = (0..d).map(|_| rng.random_range(-half..half)).collect();
        let j = obj.value(&theta);
        let moved: Vec<f64> = theta.iter().zip(&phi).map(|(a, b)| a + b).collect();
        let bound = j + dot(&obj.gradient(&theta), &phi) + 0.5 * l * norm_sq(&phi);
        let excess = obj.value(&moved) - bound;
        if excess > 1e-10 * (1.0 + j.abs()) {
            return Ok(DescentCheck {
                passed: false,
                samples: i + 1,
                first_violation: Some((theta, phi, excess)),
            });
        }
    }
    Ok(DescentCheck {
        passed: true,
        samples,
        first_violation: None,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticParams {
    #[allow(dead_code)]
    name: String,
    diag: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedOnly {
    #[allow(dead_code)]
    name: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DoubleWellParams {
    #[allow(dead_code)]
    name: String,
    dim: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KinkedParams {
    #[allow(dead_code)]
    name: String,
    diag: Vec<f64>,
    asymmetry: f64,
}

pub type ObjectiveRegistry = Registry<(), Arc<dyn Objective>>;

/// Built-in objectives, selected by the `"name"` field of a spec.
pub fn objective_registry() -> ObjectiveRegistry {
    let mut r: ObjectiveRegistry = Registry::new("objective", "name");
    r.register("quadratic", |v: &Value, _| {
        let p: QuadraticParams = parse_params(v, MomentaError::InvalidObjective)?;
        Ok(Arc::new(make_quadratic(&p.diag)?))
    })
    .register("pl_nonconvex_1d", |v: &Value, _| {
        let _: NamedOnly = parse_params(v, MomentaError::InvalidObjective)?;
        Ok(Arc::new(make_pl_nonconvex_1d()))
    })
    .register("double_well", |v: &Value, _| {
        let p: DoubleWellParams = parse_params(v, MomentaError::InvalidObjective)?;
        Ok(Arc::new(make_double_well(p.dim)?))
    })
    .register("kinked_quadratic", |v: &Value, _| {
        let p: KinkedParams = parse_params(v, MomentaError::InvalidObjective)?;
        Ok(Arc::new(make_kinked_quadratic(&p.diag, p.asymmetry)?))
    });
    r
}
