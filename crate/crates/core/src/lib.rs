//! Broker-mediated data marketplace: buyer valuations, welfare and profit
//! baselines, envy-free pricing, the two-collector payment mechanism, and
//! simulation tools for checking its incentive properties.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cli;
pub mod config;
pub mod error;
pub mod exec;
pub mod mechanism;
pub mod pipeline;
pub mod pricing;
pub mod quadrature;
pub mod report;
pub mod simulation;
pub mod valuations;

pub use error::{Error, Result};
pub use exec::Execution;

#[cfg(test)]
pub(crate) mod testing {
    use crate::mechanism::{welfare_inputs, Mechanism};
    use crate::valuations::{ErrorValuation, MarketConfig, Valuation};

    pub fn market_with_costs(costs: Vec<f64>) -> MarketConfig {
        let eq1: Valuation = ErrorValuation::ExpQuadratic { a: 1.0 }.into();
        MarketConfig::from_valuations([eq1.clone(), eq1], costs, 1.0).unwrap()
    }

    pub fn two_buyer_market() -> MarketConfig {
        market_with_costs(vec![0.1, 0.2, 0.5])
    }

    pub fn mechanism_for(market: &MarketConfig) -> Mechanism {
        let baseline = crate::baseline::welfare_opt(market).unwrap();
        Mechanism::new(welfare_inputs(market, &baseline).unwrap(), market).unwrap()
    }

    pub fn two_buyer_mechanism() -> Mechanism {
        mechanism_for(&two_buyer_market())
    }

    /// The two-buyer market with the cheapest collector's cost replaced.
    pub fn scaled_cost_mechanism(c1: f64) -> Mechanism {
        mechanism_for(&market_with_costs(vec![c1, 0.2, 0.5]))
    }
}
