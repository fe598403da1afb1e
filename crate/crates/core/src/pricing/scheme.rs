use serde::{Deserialize, Serialize};

use super::{PricingCurve, MONEY_TOL};
use crate::error::{Error, Result};

/// Per-buyer dataset sizes and prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvyFreeScheme {
    #[serde(rename = "alloc")]
    pub allocations: Vec<usize>,
    #[serde(rename = "price")]
    pub prices: Vec<f64>,
}

impl EnvyFreeScheme {
    pub fn revenue(&self) -> f64 {
        self.prices.iter().sum()
    }

    /// Individual rationality: `v_j(m_j) − p_j >= 0` for every buyer.
    pub fn check_irb(&self, tables: &[Vec<f64>], tol: f64) -> Result<()> {
        self.check_shape(tables)?;
        for (j, (&m, &p)) in self.allocations.iter().zip(&self.prices).enumerate() {
            if tables[j][m] - p < -tol {
                return Err(Error::NotEnvyFree(format!(
                    "IRB: buyer {j} pays {p} for value {}",
                    tables[j][m]
                )));
            }
        }
        Ok(())
    }

    /// Envy-freeness: no buyer prefers another buyer's (size, price) pair.
    pub fn check_efb(&self, tables: &[Vec<f64>], tol: f64) -> Result<()> {
        self.check_shape(tables)?;
        for (j, table) in tables.iter().enumerate() {
            let own = table[self.allocations[j]] - self.prices[j];
            for (k, (&mk, &pk)) in self.allocations.iter().zip(&self.prices).enumerate() {
                if table[mk] - pk > own + tol {
                    return Err(Error::NotEnvyFree(format!(
                        "EFB: buyer {j} envies buyer {k}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_shape(&self, tables: &[Vec<f64>]) -> Result<()> {
        if self.allocations.len() != tables.len() || self.prices.len() != tables.len() {
            return Err(Error::NotEnvyFree(
                "shape: one (size, price) pair per buyer".into(),
            ));
        }
        if let Some(j) = (0..tables.len()).find(|&j| self.allocations[j] >= tables[j].len()) {
            return Err(Error::NotEnvyFree(format!(
                "shape: allocation of buyer {j} exceeds its value table"
            )));
        }
        Ok(())
    }
}

/// Step curve that charges each buyer's scheme price on the quantity band
/// ending at her allocation, so that every buyer weakly prefers a quantity at
/// least as large as her allocation and revenue does not drop.
pub fn scheme_to_curve(
    scheme: &EnvyFreeScheme,
    tables: &[Vec<f64>],
    n: usize,
) -> Result<PricingCurve> {
    scheme.check_irb(tables, MONEY_TOL)?;
    scheme.check_efb(tables, MONEY_TOL)?;
    if scheme.allocations.iter().any(|&m| m > n) {
        return Err(Error::NotEnvyFree(format!(
            "shape: allocation exceeds N={n}"
        )));
    }
    let mut order: Vec<usize> = (0..scheme.allocations.len()).collect();
    order.sort_by_key(|&j| (scheme.allocations[j], j));
    let mut q = vec![0.0; n + 1];
    let mut next = 0;
    for (m, slot) in q.iter_mut().enumerate().skip(1) {
        while next + 1 < order.len() && scheme.allocations[order[next]] < m {
            next += 1;
        }
        *slot = scheme.prices[order[next]];
    }
    PricingCurve::new(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::{curve_revenue, optimal_ef_prices};
    use proptest::prelude::*;

    fn pair() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.4, 0.6], vec![0.0, 0.9, 1.0]]
    }

    #[test]
    fn step_curve_examples() {
        let tables = vec![vec![0.0, 0.3, 0.5], vec![0.0, 0.35, 0.9]];
        let s = EnvyFreeScheme {
            allocations: vec![1, 2],
            prices: vec![0.3, 0.5],
        };
        assert_eq!(
            scheme_to_curve(&s, &tables, 2).unwrap().prices(),
            &[0.0, 0.3, 0.5]
        );
        let s = EnvyFreeScheme {
            allocations: vec![2, 2],
            prices: vec![0.6, 0.6],
        };
        let c = scheme_to_curve(&s, &pair(), 2).unwrap();
        assert_eq!(c.prices(), &[0.0, 0.6, 0.6]);
        assert!((curve_revenue(&pair(), &c) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn rejects_schemes_with_envy() {
        let s = EnvyFreeScheme {
            allocations: vec![1, 2],
            prices: vec![0.4, 0.9],
        };
        assert!(matches!(
            scheme_to_curve(&s, &pair(), 2),
            Err(Error::NotEnvyFree(_))
        ));
        let s = EnvyFreeScheme {
            allocations: vec![2, 2],
            prices: vec![0.7, 0.7],
        };
        assert!(s.check_irb(&pair(), MONEY_TOL).is_err());
    }

    fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
        (1usize..=4, 1usize..=6).prop_flat_map(|(b, n)| {
            let table = proptest::collection::vec(0.0f64..0.3, n).prop_map(|steps| {
                let mut t = vec![0.0];
                for s in steps {
                    t.push((t.last().unwrap() + s).min(1.0));
                }
                t
            });
            (
                proptest::collection::vec(table, b),
                proptest::collection::vec(0..=n, b),
            )
        })
    }

    proptest! {
        #[test]
        fn curve_revenue_dominates_scheme_revenue((tables, alloc) in instance()) {
            // Random envy-free schemes: optimal prices of random allocations.
            if let Some(prices) = optimal_ef_prices(&tables, &alloc) {
                let n = tables[0].len() - 1;
                let scheme = EnvyFreeScheme { allocations: alloc, prices };
                let curve = scheme_to_curve(&scheme, &tables, n).unwrap();
                prop_assert!(curve.is_non_decreasing() || scheme.prices.iter().any(|&p| p < 0.0));
                prop_assert!(curve_revenue(&tables, &curve) >= scheme.revenue() - 1e-9);
            }
        }
    }
}
