//! Envy-free pricing for buyers with ordered (monotone) clean-data values.
//!
//! A posted pricing curve and an envy-free per-buyer scheme achieve the same
//! optimal revenue: any curve induces an envy-free scheme through the buyers'
//! own choices, and [`scheme_to_curve`] turns any envy-free scheme into a
//! step curve that earns at least as much. The exact solver enumerates
//! allocations and prices each one with a difference-constraint system.

mod constraints;
mod curve;
mod scheme;
mod solver;

pub use constraints::{optimal_ef_prices, DifferenceConstraints};
pub use curve::{curve_revenue, purchase, PricingCurve};
pub use scheme::{scheme_to_curve, EnvyFreeScheme};
pub use solver::{
    poi_solve, profit_search, profit_search_tables, rev_opt, ExactPricer, OrderedItemPricer,
    ProfitPoint, ProfitSearchResult, DEFAULT_ENUMERATION_CAP,
};

/// Absolute tolerance for every price comparison.
pub const MONEY_TOL: f64 = 1e-9;
