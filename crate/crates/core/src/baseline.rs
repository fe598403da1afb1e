//! Welfare-optimal baseline with non-strategic contributors: all data is
//! collected by the cheapest contributor and every buyer receives all of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::quadrature::Quadrature;
use crate::valuations::MarketConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareBaseline {
    pub n_opt: usize,
    pub opt: f64,
    /// `table[k]` is `Σ_j v_j(N) − c_1 N` for `N = k + 1`.
    pub table: Vec<f64>,
    /// The maximizer sits on the upper end of the searched range.
    pub at_search_boundary: bool,
}

/// Largest total collection worth searching: total buyer value is at most
/// `|B|`, so collecting more than `|B| / c_1` points can never pay off.
pub fn search_bound(n_buyers: usize, c1: f64) -> Result<usize> {
    if !(c1 > 0.0) {
        return Err(Error::config("costs", "cheapest cost must be > 0"));
    }
    let bound = (n_buyers as f64 / c1 - 1e-9).ceil();
    Ok((bound as usize).max(1))
}

pub fn welfare_opt(market: &MarketConfig) -> Result<WelfareBaseline> {
    welfare_opt_with(market, &Quadrature::default(), Execution::default())
}

pub fn welfare_opt_with(
    market: &MarketConfig,
    quad: &Quadrature,
    exec: Execution,
) -> Result<WelfareBaseline> {
    let c1 = market.costs[0];
    let n_max = search_bound(market.buyers.len(), c1)?;
    let columns = exec.map_slice(&market.buyers, |b| {
        b.valuation.table(n_max, market.sigma2, quad)
    });
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    let table: Vec<f64> = (1..=n_max)
        .map(|n| columns.iter().map(|col| col[n]).sum::<f64>() - c1 * n as f64)
        .collect();
    let (best, opt) = table
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let at_search_boundary = best + 1 == n_max && n_max > 1;
    if at_search_boundary {
        log::warn!("welfare maximizer N={n_max} is at the search boundary; range may be truncated");
    }
    Ok(WelfareBaseline {
        n_opt: best + 1,
        opt,
        table,
        at_search_boundary,
    })
}

/// Ceiling on the welfare of any equilibrium with truthful reporting:
/// `OPT − (c_2 − c_1)`.
pub fn welfare_upper_bound(baseline: &WelfareBaseline, c1: f64, c2: f64) -> f64 {
    baseline.opt - (c2 - c1)
}
