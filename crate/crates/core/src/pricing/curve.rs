use serde::{Deserialize, Serialize};

use super::MONEY_TOL;
use crate::error::{Error, Result};

/// Posted prices `q(m)` for `m = 0..=N`, with `q(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRepr", into = "CurveRepr")]
pub struct PricingCurve {
    q: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveRepr {
    #[serde(rename = "N")]
    n: usize,
    q: Vec<f64>,
}

impl TryFrom<CurveRepr> for PricingCurve {
    type Error = Error;
    fn try_from(r: CurveRepr) -> Result<Self> {
        if r.q.len() != r.n + 1 {
            return Err(Error::config(
                "q",
                format!("expected {} prices for N={}", r.n + 1, r.n),
            ));
        }
        PricingCurve::new(r.q)
    }
}

impl From<PricingCurve> for CurveRepr {
    fn from(c: PricingCurve) -> Self {
        CurveRepr {
            n: c.max_quantity(),
            q: c.q,
        }
    }
}

impl PricingCurve {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        match q.first() {
            Some(&0.0) => {}
            _ => {
                return Err(Error::config(
                    "q",
                    "a pricing curve must start with q(0) = 0",
                ))
            }
        }
        if q.iter().any(|p| !p.is_finite()) {
            return Err(Error::config("q", "prices must be finite"));
        }
        let curve = PricingCurve { q };
        if !curve.is_non_decreasing() {
            log::debug!("pricing curve is not non-decreasing");
        }
        Ok(curve)
    }

    /// The curve posting price 0 for every quantity up to `n`.
    pub fn free(n: usize) -> Self {
        PricingCurve {
            q: vec![0.0; n + 1],
        }
    }

    pub fn max_quantity(&self) -> usize {
        self.q.len() - 1
    }

    pub fn prices(&self) -> &[f64] {
        &self.q
    }

    pub fn price(&self, m: usize) -> f64 {
        self.q[m]
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.q.windows(2).all(|w| w[1] >= w[0] - MONEY_TOL)
    }
}

/// Quantity a utility-maximizing buyer takes from `curve`: the largest `m`
/// whose utility `v(m) − q(m)` is within tolerance of the best.
///
/// `table` must hold values for at least `0..=N`.
pub fn purchase(table: &[f64], curve: &PricingCurve) -> usize {
    let n = curve.max_quantity();
    assert!(
        table.len() > n,
        "value table shorter than the pricing curve"
    );
    let utility = |m: usize| table[m] - curve.q[m];
    let best = (0..=n).map(utility).fold(f64::NEG_INFINITY, f64::max);
    (0..=n)
        .rev()
        .find(|&m| utility(m) >= best - MONEY_TOL)
        .unwrap_or(0)
}

/// Total revenue when every buyer purchases from `curve`.
pub fn curve_revenue(tables: &[Vec<f64>], curve: &PricingCurve) -> f64 {
    tables.iter().map(|t| curve.q[purchase(t, curve)]).sum()
}
