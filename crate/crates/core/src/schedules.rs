//! Scalar sequences (step sizes, momentum, increments, envelopes) and the
//! summability checks that gate convergence.
//!
//! Every schedule is a pure function of the step index. Power laws are
//! evaluated at `t + shift` (default shift 1) so that negative exponents stay
//! finite at `t = 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MomentaError, Result};
use crate::rng::{stream_rng, Stream};

fn one() -> f64 {
    1.0
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

/// A deterministic (or seed-addressed) scalar sequence.
///
/// `seeded_random` draws `m_t` uniformly from `[coefficient - spread,
/// coefficient + spread]` using a generator keyed on `(seed, t)`, and returns
/// `offset + m_t * (t + shift)^exponent`. Because the draw is keyed on `t`
/// alone, `value_at(t + 1)` is available at step `t` (the sequence is
/// predictable) and evaluation order never matters.
///
/// A `table` queried past its end repeats its last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant {
        coefficient: f64,
    },
    PowerLaw {
        coefficient: f64,
        exponent: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        offset: f64,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        shift: f64,
    },
    Geometric {
        coefficient: f64,
        ratio: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        offset: f64,
    },
    Table {
        table: Vec<f64>,
    },
    SeededRandom {
        coefficient: f64,
        #[serde(default)]
        spread: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        exponent: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        offset: f64,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        shift: f64,
        seed: u64,
    },
}

/// Infimum and supremum of a schedule over all `t >= 0`. Either end may be
/// infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub inf: f64,
    pub sup: f64,
}

impl Bounds {
    fn of(a: f64, b: f64) -> Self {
        Bounds {
            inf: a.min(b),
            sup: a.max(b),
        }
    }
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule::Constant { coefficient: value }
    }

    /// `coefficient * (t + 1)^exponent`.
    pub fn power_law(coefficient: f64, exponent: f64) -> Self {
        Schedule::PowerLaw {
            coefficient,
            exponent,
            offset: 0.0,
            shift: 1.0,
        }
    }

    pub fn shifted_power_law(coefficient: f64, exponent: f64, offset: f64, shift: f64) -> Self {
        Schedule::PowerLaw {
            coefficient,
            exponent,
            offset,
            shift,
        }
    }

    /// `offset + coefficient * ratio^t`.
    pub fn geometric(coefficient: f64, ratio: f64, offset: f64) -> Self {
        Schedule::Geometric {
            coefficient,
            ratio,
            offset,
        }
    }

    pub fn table(values: Vec<f64>) -> Self {
        Schedule::Table { table: values }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MomentaError::InvalidSchedule(msg));
        let finite = |name: &str, x: f64| -> Result<()> {
            if x.is_finite() {
                Ok(())
            } else {
                Err(MomentaError::InvalidSchedule(format!("{name} must be finite, got {x}")))
            }
        };
        match self {
            Schedule::Constant { coefficient } => finite("coefficient", *coefficient),
            Schedule::PowerLaw {
                coefficient,
                exponent,
                offset,
                shift,
            } => {
                finite("coefficient", *coefficient)?;
                finite("exponent", *exponent)?;
                finite("offset", *offset)?;
                finite("shift", *shift)?;
                if *shift <= 0.0 {
                    return bad(format!("power_law shift must be > 0, got {shift}"));
                }
                Ok(())
            }
            Schedule::Geometric {
                coefficient,
                ratio,
                offset,
            } => {
                finite("coefficient", *coefficient)?;
                finite("ratio", *ratio)?;
                finite("offset", *offset)?;
                if *ratio <= 0.0 {
                    return bad(format!("geometric ratio must be > 0, got {ratio}"));
                }
                Ok(())
            }
            Schedule::Table { table } => {
                if table.is_empty() {
                    return bad("table must contain at least one value".into());
                }
                for (i, x) in table.iter().enumerate() {
                    finite(&format!("table[{i}]"), *x)?;
                }
                Ok(())
            }
            Schedule::SeededRandom {
                coefficient,
                spread,
                exponent,
                offset,
                shift,
                ..
            } => {
                finite("coefficient", *coefficient)?;
                finite("spread", *spread)?;
                finite("exponent", *exponent)?;
                finite("offset", *offset)?;
                finite("shift", *shift)?;
                if *spread < 0.0 {
                    return bad(format!("spread must be >= 0, got {spread}"));
                }
                if *shift <= 0.0 {
                    return bad(format!("shift must be > 0, got {shift}"));
                }
                Ok(())
            }
        }
    }

    /// Value at step `t`.
    pub fn eval(&self, t: u64) -> f64 {
        match self {
            Schedule::Constant { coefficient } => *coefficient,
            Schedule::PowerLaw {
                coefficient,
                exponent,
                offset,
                shift,
            } => offset + coefficient * (t as f64 + shift).powf(*exponent),
            Schedule::Geometric {
                coefficient,
                ratio,
                offset,
            } => offset + coefficient * ratio.powf(t as f64),
            Schedule::Table { table } => {
                let i = (t as usize).min(table.len() - 1);
                table[i]
            }
            Schedule::SeededRandom {
                coefficient,
                spread,
                exponent,
                offset,
                shift,
                seed,
            } => {
                let u: f64 = stream_rng(*seed, Stream::Schedule, t, 0).random();
                let m = coefficient + spread * (2.0 * u - 1.0);
                offset + m * (t as f64 + shift).powf(*exponent)
            }
        }
    }

    pub fn values(&self, horizon: u64) -> Vec<f64> {
        (0..=horizon).map(|t| self.eval(t)).collect()
    }

    /// Analytic infimum/supremum over all `t >= 0`.
    pub fn bounds(&self) -> Bounds {
        match self {
            Schedule::Constant { coefficient } => Bounds::of(*coefficient, *coefficient),
            Schedule::PowerLaw {
                coefficient,
                exponent,
                offset,
                shift,
            } => {
                let first = offset + coefficient * shift.powf(*exponent);
                if *exponent == 0.0 || *coefficient == 0.0 {
                    Bounds::of(first, first)
                } else if *exponent < 0.0 {
                    Bounds::of(first, *offset)
                } else if *coefficient > 0.0 {
                    Bounds {
                        inf: first,
                        sup: f64::INFINITY,
                    }
                } else {
                    Bounds {
                        inf: f64::NEG_INFINITY,
                        sup: first,
                    }
                }
            }
            Schedule::Geometric {
                coefficient,
                ratio,
                offset,
            } => {
                let first = offset + coefficient;
                if *ratio == 1.0 || *coefficient == 0.0 {
                    Bounds::of(first, first)
                } else if *ratio < 1.0 {
                    Bounds::of(first, *offset)
                } else if *coefficient > 0.0 {
                    Bounds {
                        inf: first,
                        sup: f64::INFINITY,
                    }
                } else {
                    Bounds {
                        inf: f64::NEG_INFINITY,
                        sup: first,
                    }
                }
            }
            Schedule::Table { table } => Bounds {
                inf: table.iter().copied().fold(f64::INFINITY, f64::min),
                sup: table.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            },
            Schedule::SeededRandom {
                coefficient,
                spread,
                exponent,
                offset,
                shift,
                ..
            } => {
                let lo = coefficient - spread;
                let hi = coefficient + spread;
                if *exponent == 0.0 {
                    Bounds::of(offset + lo, offset + hi)
                } else if *exponent < 0.0 {
                    // the factor (t + shift)^exponent sweeps (0, shift^exponent]
                    let g = shift.powf(*exponent);
                    Bounds {
                        inf: offset + (lo * g).min(0.0),
                        sup: offset + (hi * g).max(0.0),
                    }
                } else {
                    let g = shift.powf(*exponent);
                    Bounds {
                        inf: if lo >= 0.0 { offset + lo * g } else { f64::NEG_INFINITY },
                        sup: if hi <= 0.0 { offset + hi * g } else { f64::INFINITY },
                    }
                }
            }
        }
    }

    /// Decay exponent `p` when the schedule is a pure power law
    /// `c * (t + shift)^(-p)` without offset.
    pub fn power_law_decay(&self) -> Option<f64> {
        match self {
            Schedule::PowerLaw {
                exponent, offset, ..
            } if *offset == 0.0 => Some(-exponent),
            Schedule::Constant { .. } => Some(0.0),
            _ => None,
        }
    }

    /// True if the schedule is identically zero.
    pub fn is_zero(&self) -> bool {
        let b = self.bounds();
        b.inf == 0.0 && b.sup == 0.0
    }
}

/// One named condition in a [`ConditionReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub name: String,
    pub satisfied: bool,
    /// Exponent slack for analytic checks, or the numeric quantity a check
    /// compares against its threshold.
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial_sum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition_set: String,
    pub entries: Vec<ConditionEntry>,
}

impl ConditionReport {
    pub fn new(condition_set: impl Into<String>) -> Self {
        Self {
            condition_set: condition_set.into(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, satisfied: bool, margin: f64) -> &mut ConditionEntry {
        self.entries.push(ConditionEntry {
            name: name.to_string(),
            satisfied,
            margin,
            partial_sum: None,
            detail: None,
        });
        self.entries.last_mut().expect("just pushed")
    }

    pub fn all_satisfied(&self) -> bool {
        self.entries.iter().all(|e| e.satisfied)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionSet {
    /// Robbins-Monro: square-summable, non-summable step sizes.
    #[serde(rename = "RM")]
    RobbinsMonro,
    /// Kiefer-Wolfowitz-Blum: RM plus the increment conditions.
    #[serde(rename = "KWB")]
    KieferWolfowitzBlum,
    /// Biased / growing-variance oracle conditions plus non-summable steps.
    #[serde(rename = "Theorem21")]
    General,
}

impl std::str::FromStr for ConditionSet {
    type Err = MomentaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RM" | "rm" => Ok(ConditionSet::RobbinsMonro),
            "KWB" | "kwb" => Ok(ConditionSet::KieferWolfowitzBlum),
            "Theorem21" | "theorem21" | "general" => Ok(ConditionSet::General),
            other => Err(MomentaError::InvalidArgument(format!(
                "unknown condition set '{other}' (expected RM, KWB or Theorem21)"
            ))),
        }
    }
}

impl ConditionSet {
    pub fn label(self) -> &'static str {
        match self {
            ConditionSet::RobbinsMonro => "RM",
            ConditionSet::KieferWolfowitzBlum => "KWB",
            ConditionSet::General => "Theorem21",
        }
    }
}

pub const SUM_ALPHA_SQ: &str = "sum_alpha_sq_finite";
pub const SUM_ALPHA: &str = "sum_alpha_diverges";
pub const SUM_ALPHA_B: &str = "sum_alpha_b_finite";
pub const SUM_ALPHA_SQ_M_SQ: &str = "sum_alpha_sq_m_sq_finite";
pub const SUM_ALPHA_C: &str = "sum_alpha_c_finite";
pub const SUM_ALPHA_SQ_OVER_C_SQ: &str = "sum_alpha_sq_over_c_sq_finite";

/// Analytic p-series test for `alpha_t ~ (t+1)^(-p_alpha)`.
///
/// `gamma` is the decay exponent of the bias envelope `B_t` (for `General`)
/// or of the increment `c_t` (for `KWB`, where `B_t = O(c_t)` and
/// `M_t = O(1/c_t)`). `delta` is the growth exponent of `M_t` and is only used
/// by `General`. A series `sum (t+1)^(-q)` converges iff `q > 1`; each entry's
/// margin is `q - 1`, except the divergence entry whose margin is `1 - p_alpha`.
pub fn check_power_law_conditions(
    p_alpha: f64,
    gamma: f64,
    delta: f64,
    set: ConditionSet,
) -> Result<ConditionReport> {
    for (name, x) in [("p_alpha", p_alpha), ("gamma", gamma), ("delta", delta)] {
        if !x.is_finite() {
            return Err(MomentaError::InvalidArgument(format!("{name} must be finite, got {x}")));
        }
    }
    if p_alpha < 0.0 {
        return Err(MomentaError::InvalidArgument(format!(
            "p_alpha = {p_alpha} < 0: growing step sizes are not supported"
        )));
    }
    let mut report = ConditionReport::new(set.label());
    let summable = |report: &mut ConditionReport, name: &str, q: f64| {
        let margin = q - 1.0;
        report.push(name, margin > 0.0, margin);
    };
    summable(&mut report, SUM_ALPHA_SQ, 2.0 * p_alpha);
    match set {
        ConditionSet::RobbinsMonro => {}
        ConditionSet::General => {
            summable(&mut report, SUM_ALPHA_B, p_alpha + gamma);
            summable(&mut report, SUM_ALPHA_SQ_M_SQ, 2.0 * p_alpha - 2.0 * delta);
        }
        ConditionSet::KieferWolfowitzBlum => {
            summable(&mut report, SUM_ALPHA_C, p_alpha + gamma);
            summable(&mut report, SUM_ALPHA_SQ_OVER_C_SQ, 2.0 * p_alpha - 2.0 * gamma);
        }
    }
    let margin = 1.0 - p_alpha;
    report.push(SUM_ALPHA, margin >= 0.0, margin);
    Ok(report)
}

/// Growth ratio below which a partial-sum sequence counts as plateauing.
pub const TREND_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesTrend {
    Divergent,
    Convergent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendReport {
    pub trend: SeriesTrend,
    pub partial_sum: f64,
    /// `(S(n) - S(n/2)) / (S(n/2) - S(n/4))`; at least 1 for `q <= 1`
    /// power-law terms and `2^(1-q) < 1` otherwise.
    pub growth_ratio: f64,
}

/// Classify the partial sums of non-negative `terms` by comparing the mass in
/// the last two dyadic blocks.
pub fn classify_partial_sums(terms: &[f64]) -> TrendReport {
    let n = terms.len();
    let sum = |a: usize, b: usize| terms[a..b].iter().sum::<f64>();
    let partial_sum = sum(0, n);
    let late = sum(n / 2, n);
    let early = sum(n / 4, n / 2);
    let growth_ratio = if early > 0.0 {
        late / early
    } else if late > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let trend = if growth_ratio >= TREND_THRESHOLD {
        SeriesTrend::Divergent
    } else {
        SeriesTrend::Convergent
    };
    TrendReport {
        trend,
        partial_sum,
        growth_ratio,
    }
}

/// Numeric check of the synthetic-step-size conditions over `[0, horizon]`:
/// `eta` decreasing, `sum eta` diverging, `sum eta^2` finite and
/// `sum eta_t / sum_{tau < t} eta_tau` diverging.
pub fn check_sebbouh_conditions(eta: &Schedule, horizon: u64) -> Result<ConditionReport> {
    if horizon < 2 {
        return Err(MomentaError::InvalidArgument(format!(
            "horizon must be >= 2, got {horizon}"
        )));
    }
    let values = eta.values(horizon);
    if let Some((t, &v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(MomentaError::NegativeSyntheticStep { t: t as u64, eta: v });
    }

    let mut report = ConditionReport::new("Sebbouh");

    let min_drop = values
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::INFINITY, f64::min);
    report.push("eta_decreasing", min_drop >= 0.0, min_drop);

    let linear = classify_partial_sums(&values);
    let e = report.push(
        "sum_eta_diverges",
        linear.trend == SeriesTrend::Divergent,
        linear.growth_ratio - TREND_THRESHOLD,
    );
    e.partial_sum = Some(linear.partial_sum);

    let squares: Vec<f64> = values.iter().map(|v| v * v).collect();
    let sq = classify_partial_sums(&squares);
    let e = report.push(
        "sum_eta_sq_finite",
        sq.trend == SeriesTrend::Convergent,
        TREND_THRESHOLD - sq.growth_ratio,
    );
    e.partial_sum = Some(sq.partial_sum);
    if sq.trend == SeriesTrend::Divergent {
        e.detail = Some("partial sums of eta^2 keep growing (divergence trend)".into());
    }

    let mut prefix = 0.0;
    let mut relative = Vec::with_capacity(values.len());
    for (t, v) in values.iter().enumerate() {
        if t >= 1 {
            relative.push(v / prefix);
        }
        prefix += v;
    }
    let rel = classify_partial_sums(&relative);
    let e = report.push(
        "sum_eta_over_prefix_diverges",
        rel.trend == SeriesTrend::Divergent,
        rel.growth_ratio - TREND_THRESHOLD,
    );
    e.partial_sum = Some(rel.partial_sum);

    Ok(report)
}
