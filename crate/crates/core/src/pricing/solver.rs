use serde::{Deserialize, Serialize};

use super::{
    curve_revenue, optimal_ef_prices, purchase, scheme_to_curve, EnvyFreeScheme, PricingCurve,
};
use crate::baseline::search_bound;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::quadrature::Quadrature;
use crate::valuations::MarketConfig;

/// Default allocation-space budget: five buyers with `N <= 20`.
pub const DEFAULT_ENUMERATION_CAP: u128 = 21u128.pow(5);

fn enumeration_size(n: usize, buyers: usize) -> u128 {
    (0..buyers).fold(1u128, |acc, _| acc.saturating_mul(n as u128 + 1))
}

/// Revenue-optimal envy-free scheme with at most `n` points per buyer, by
/// exhaustive enumeration of `{0..n}^|B|` allocations. Ties go to the first
/// allocation in lexicographic order (buyer 0 most significant).
pub fn rev_opt(
    tables: &[Vec<f64>],
    n: usize,
    cap: u128,
    exec: Execution,
) -> Result<(EnvyFreeScheme, f64)> {
    if let Some(j) = tables.iter().position(|t| t.len() <= n) {
        return Err(Error::Domain(format!(
            "value table of buyer {j} does not cover N={n}"
        )));
    }
    let b = tables.len();
    let size = enumeration_size(n, b);
    if size > cap {
        return Err(Error::SizeBudget { size, cap });
    }
    let decode = |mut idx: usize| {
        let mut alloc = vec![0; b];
        for slot in alloc.iter_mut().rev() {
            *slot = idx % (n + 1);
            idx /= n + 1;
        }
        alloc
    };
    let (best, _) = exec
        .argmax_by_index(size as usize, |idx| {
            optimal_ef_prices(tables, &decode(idx)).map(|p| p.iter().sum())
        })
        .expect("the all-zero allocation is always envy-free");
    let allocations = decode(best);
    let prices = optimal_ef_prices(tables, &allocations).expect("feasible by construction");
    let scheme = EnvyFreeScheme {
        allocations,
        prices,
    };
    let revenue = scheme.revenue();
    Ok((scheme, revenue))
}

/// An ordered-item pricing algorithm: returns a curve whose revenue is within
/// `|B|·O(epsilon)` of the optimal curve revenue.
pub trait OrderedItemPricer: Sync {
    fn solve(&self, tables: &[Vec<f64>], n: usize, epsilon: f64) -> Result<PricingCurve>;
}

/// Exact pricer (`epsilon` is irrelevant): optimal envy-free scheme turned
/// into its step curve.
#[derive(Debug, Clone, Copy)]
pub struct ExactPricer {
    pub cap: u128,
    pub exec: Execution,
}

impl Default for ExactPricer {
    fn default() -> Self {
        ExactPricer {
            cap: DEFAULT_ENUMERATION_CAP,
            exec: Execution::default(),
        }
    }
}

impl OrderedItemPricer for ExactPricer {
    fn solve(&self, tables: &[Vec<f64>], n: usize, _epsilon: f64) -> Result<PricingCurve> {
        if n == 0 {
            return Ok(PricingCurve::free(0));
        }
        let (scheme, _) = rev_opt(tables, n, self.cap, self.exec)?;
        scheme_to_curve(&scheme, tables, n)
    }
}

pub fn poi_solve(tables: &[Vec<f64>], n: usize, epsilon: f64) -> Result<PricingCurve> {
    ExactPricer::default().solve(tables, n, epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitPoint {
    pub n: usize,
    pub revenue: f64,
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitSearchResult {
    pub n_plus: usize,
    pub curve: PricingCurve,
    pub allocations: Vec<usize>,
    pub prices: Vec<f64>,
    /// `Σ_j p⁺_j − c_1 N⁺`.
    pub profit: f64,
    pub revenue_by_n: Vec<ProfitPoint>,
    /// No searched collection amount yields positive profit.
    pub unprofitable: bool,
}

impl ProfitSearchResult {
    pub fn scheme(&self) -> EnvyFreeScheme {
        EnvyFreeScheme {
            allocations: self.allocations.clone(),
            prices: self.prices.clone(),
        }
    }
}

/// Profit-maximizing collection amount with a posted pricing curve for every
/// candidate `N` in `1..=ceil(|B| / c_1)`.
pub fn profit_search(market: &MarketConfig, epsilon: f64) -> Result<ProfitSearchResult> {
    let n_max = search_bound(market.buyers.len(), market.costs[0])?;
    let tables = market.value_tables(n_max, &Quadrature::default())?;
    profit_search_tables(
        &tables,
        market.costs[0],
        n_max,
        &ExactPricer::default(),
        epsilon,
        Execution::default(),
    )
}

/// [`profit_search`] over explicit value tables (each covering `0..=n_max`).
pub fn profit_search_tables(
    tables: &[Vec<f64>],
    c1: f64,
    n_max: usize,
    pricer: &dyn OrderedItemPricer,
    epsilon: f64,
    exec: Execution,
) -> Result<ProfitSearchResult> {
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    if n_max == 0 {
        return Err(Error::Domain("profit search needs N_max >= 1".into()));
    }
    let curves = exec.map_indexed(n_max, |k| pricer.solve(tables, k + 1, epsilon));
    let curves = curves.into_iter().collect::<Result<Vec<_>>>()?;
    let revenue_by_n: Vec<ProfitPoint> = curves
        .iter()
        .enumerate()
        .map(|(k, curve)| {
            let revenue = curve_revenue(tables, curve);
            ProfitPoint {
                n: k + 1,
                revenue,
                profit: revenue - c1 * (k + 1) as f64,
            }
        })
        .collect();
    let best = revenue_by_n.iter().enumerate().fold(0, |bi, (i, p)| {
        if p.profit > revenue_by_n[bi].profit {
            i
        } else {
            bi
        }
    });
    let curve = curves[best].clone();
    let allocations: Vec<usize> = tables.iter().map(|t| purchase(t, &curve)).collect();
    let prices: Vec<f64> = allocations.iter().map(|&m| curve.price(m)).collect();
    let n_plus = best + 1;
    let profit = prices.iter().sum::<f64>() - c1 * n_plus as f64;
    Ok(ProfitSearchResult {
        n_plus,
        curve,
        allocations,
        prices,
        profit,
        unprofitable: profit <= 0.0,
        revenue_by_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuations::{MarketConfig, Valuation};

    fn pair() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.4, 0.6], vec![0.0, 0.9, 1.0]]
    }

    /// Brute-force oracle: all allocation vectors, prices from the pairwise
    /// constraints solved by repeated tightening.
    fn brute(tables: &[Vec<f64>], n: usize) -> f64 {
        let b = tables.len();
        let mut best = f64::NEG_INFINITY;
        let total = (n + 1).pow(b as u32);
        for idx in 0..total {
            let alloc: Vec<usize> = (0..b)
                .map(|j| idx / (n + 1).pow((b - 1 - j) as u32) % (n + 1))
                .collect();
            let mut p: Vec<f64> = (0..b).map(|j| tables[j][alloc[j]]).collect();
            let mut feasible = false;
            for _ in 0..=b + 1 {
                let mut changed = false;
                for j in 0..b {
                    for k in 0..b {
                        let cap = p[k] + tables[j][alloc[j]] - tables[j][alloc[k]];
                        if cap < p[j] - 1e-12 {
                            p[j] = cap;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    feasible = true;
                    break;
                }
            }
            if feasible {
                best = best.max(p.iter().sum());
            }
        }
        best
    }

    #[test]
    fn rev_opt_examples() {
        let (s, r) = rev_opt(&pair(), 2, DEFAULT_ENUMERATION_CAP, Execution::Sequential).unwrap();
        assert_eq!(s.allocations, vec![2, 2]);
        assert!((s.prices[0] - 0.6).abs() < 1e-12 && (s.prices[1] - 0.6).abs() < 1e-12);
        assert!((r - 1.2).abs() < 1e-12 && (brute(&pair(), 2) - 1.2).abs() < 1e-12);

        let (s, r) = rev_opt(&pair(), 1, DEFAULT_ENUMERATION_CAP, Execution::Sequential).unwrap();
        assert_eq!(s.allocations, vec![0, 1]);
        assert!((s.prices[0]).abs() < 1e-12 && (s.prices[1] - 0.9).abs() < 1e-12);
        assert!((r - 0.9).abs() < 1e-12 && (brute(&pair(), 1) - 0.9).abs() < 1e-12);

        let (_, r) = rev_opt(&pair(), 0, DEFAULT_ENUMERATION_CAP, Execution::Sequential).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn size_budget_is_enforced() {
        let tables = vec![vec![0.0; 21]; 6];
        let err = rev_opt(&tables, 20, DEFAULT_ENUMERATION_CAP, Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::SizeBudget { .. }));
    }

    #[test]
    fn poi_solve_examples() {
        let c = poi_solve(&pair(), 2, 0.0).unwrap();
        assert_eq!(c.prices(), &[0.0, 0.6, 0.6]);
        assert!((curve_revenue(&pair(), &c) - 1.2).abs() < 1e-12);
        assert_eq!(poi_solve(&pair(), 0, 0.0).unwrap().prices(), &[0.0]);
    }

    #[test]
    fn profit_search_examples() {
        let clamp =
            |t: &[f64], n: usize| (0..=n).map(|m| t[m.min(t.len() - 1)]).collect::<Vec<_>>();
        let market = MarketConfig::from_valuations(
            pair().into_iter().map(Valuation::IidTable),
            vec![0.1, 0.2],
            1.0,
        )
        .unwrap();
        let r = profit_search(&market, 0.0).unwrap();
        assert_eq!(r.n_plus, 2);
        assert_eq!(r.allocations, vec![2, 2]);
        assert!((r.profit - 1.0).abs() < 1e-12);
        assert!((r.revenue_by_n[0].profit - 0.8).abs() < 1e-12);
        assert_eq!(r.revenue_by_n.len(), 20);
        let extended: Vec<Vec<f64>> = pair().iter().map(|t| clamp(t, 5)).collect();
        assert!((brute(&extended, 5) - 1.2).abs() < 1e-12);

        let one = MarketConfig::from_valuations(
            [Valuation::IidTable(vec![0.0, 1.0])],
            vec![0.3, 0.4],
            1.0,
        )
        .unwrap();
        let r = profit_search(&one, 0.0).unwrap();
        assert_eq!((r.n_plus, r.allocations.clone()), (1, vec![1]));
        assert!((r.prices[0] - 1.0).abs() < 1e-12 && (r.profit - 0.7).abs() < 1e-12);
        assert!(!r.unprofitable);

        let pricey = MarketConfig::from_valuations(
            [Valuation::IidTable(vec![0.0, 1.0])],
            vec![1.5, 2.0],
            1.0,
        )
        .unwrap();
        let r = profit_search(&pricey, 0.0).unwrap();
        assert!(r.unprofitable && r.profit <= 0.0);
        assert_eq!(r.n_plus, 1);
    }

    #[test]
    fn profit_search_is_reproducible() {
        let tables = vec![
            vec![0.0, 0.2, 0.5, 0.7, 0.7],
            vec![0.0, 0.6, 0.65, 0.9, 1.0],
            vec![0.0, 0.1, 0.3, 0.31, 0.8],
        ];
        let run = |exec| {
            let pricer = ExactPricer {
                cap: DEFAULT_ENUMERATION_CAP,
                exec,
            };
            profit_search_tables(&tables, 0.05, 4, &pricer, 0.0, exec).unwrap()
        };
        let a = run(Execution::Sequential);
        let b = run(Execution::Parallel);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a, run(Execution::Parallel));
    }
}
