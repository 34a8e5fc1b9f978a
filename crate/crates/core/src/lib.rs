//! Unified momentum-based stochastic optimization.
//!
//! One update rule covers heavy ball, Nesterov and plain SGD. Around it sit
//! schedule condition checks, biased gradient oracles (including SPSA),
//! block-coordinate masking, rate diagnostics, and an analyzer for the
//! λ-recursion of the synthetic-step-size reparameterization.
//!
//! Objectives, oracles and block policies are trait objects built by name
//! from JSON specs through the registries in [`objectives`], [`oracles`] and
//! [`block`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod block;
pub mod error;
pub mod lambda;
pub mod objectives;
pub mod oracles;
pub mod registry;
pub mod rng;
pub mod schedules;
pub mod unified;

pub use analysis::{aggregate_rates, aggregate_rates_with_unfit, aggregate_seeds, fit_rate, Metric, MetricRow, RateClass, RateEstimate, RunRecord};
pub use block::{apply_block, block_registry, verify_block_unbiasedness, BlockPolicy, Selection};
pub use error::{MomentaError, Result};
pub use objectives::{objective_registry, Objective};
pub use oracles::{audit_oracle, oracle_registry, GradientOracle, OracleAudit};
pub use schedules::{ConditionReport, ConditionSet, Schedule};
pub use unified::{run, unified_step, validate_params, Preset, RunInputs, UnifiedParams, UnifiedState};
