//! Contributor strategies, expected utilities, deviation sweeps and round
//! simulations.

pub mod rounds;
pub mod stats;
pub mod strategy;
pub mod sweep;
pub mod utility;
pub mod welfare;

pub use rounds::{
    adversarial_budget_balance, truthful_rounds, BudgetBalanceCheck, RoundRecord, RoundsSummary,
};
pub use stats::{Estimate, Moments};
pub use strategy::{CollectRule, MeanLaw, ReportRule, Strategy};
pub use sweep::{
    concavity_check, icc_sweep, ConcavityCheck, DeviationEntry, DeviationGrid, DeviationReport,
    MuGrid,
};
pub use utility::{
    simulate_utility, utility_closed_form, worst_case_utility, UtilityEstimate, UtilityMethod,
    WorstCase,
};
pub use welfare::{
    profit_at_truthful, simulate_profile_welfare, welfare_at_truthful, welfare_bound_check,
    ProfileWelfare,
};
