//! Observational learning in a duopoly with Poisson arrivals, costly search
//! and posted prices: belief dynamics, Monte Carlo absorption statistics,
//! mixed-strategy price dispersion, welfare and search subsidies.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beliefs;
pub mod commands;
pub mod config;
pub mod engine;
pub mod equilibrium;
pub mod error;
pub mod estimators;
pub mod output;
pub mod params;
pub mod rng;
pub mod welfare;

pub use beliefs::{
    action_likelihoods, bayes_update_action, bayes_update_review, cascade_bounds,
    consumer_decision, eta_star, immediate_herd, posterior_down, posterior_up, Belief,
    CascadeBounds, Decision, Herd,
};
pub use engine::{simulate_run, AbsorbedSide, RunConfig, RunOutcome, TrueState};
pub use equilibrium::{
    calvo_stationary, mix_solve, CalvoReport, MixedStrategy, PriceGrid, SolveReport,
};
pub use error::{Error, Result};
pub use estimators::{
    estimate_absorption, estimate_profits, exact_small_chain, sweep, AbsorptionReport, ChainResult,
    MCStats, ProfitEstimate,
};
pub use params::{AbsorptionRule, BoundaryVariant, Firm, ModelParams, Side, State};
pub use welfare::{
    per_arrival_welfare, pigouvian_subsidy, value_function_solve, welfare_gap_decompose,
    SubsidySchedule, WelfareDecomposition, WelfareValue,
};

pub const VERSION: &str = concat!("cascade ", env!("CARGO_PKG_VERSION"));
