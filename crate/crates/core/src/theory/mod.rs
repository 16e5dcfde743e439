//! Bayesian linear model with a random feature map, used to measure how
//! estimation error scales under greedy variance-maximizing design versus
//! random design.

mod bandit;
mod experiment;

pub use bandit::{LinearBanditState, Policy};
pub use experiment::{
    fit_slope, run_policy, scaling_experiment, spearman, write_theory_csv, ErrorRow, ScalingConfig,
    ScalingReport, THEORY_CSV_HEADER,
};
