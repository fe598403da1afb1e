//! The two-collector mechanism: the cheapest contributor collects all but one
//! point, the second cheapest collects one, and prices and payments are
//! corrected by the squared discrepancy between the two reported means.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::WelfareBaseline;
use crate::error::{Error, Result};
use crate::exec::derive_seed;
use crate::pricing::{ProfitSearchResult, MONEY_TOL};
use crate::valuations::MarketConfig;

/// Targets fed to the mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismInputs {
    /// Target welfare or profit.
    pub opt_tilde: f64,
    /// Total amount of data to collect.
    pub n_tilde: usize,
    /// Points sold to each buyer.
    pub sell: Vec<usize>,
    /// Expected price charged to each buyer.
    pub exp_price: Vec<f64>,
}

impl MechanismInputs {
    pub fn validate(&self, market: &MarketConfig) -> Result<()> {
        let nb = market.buyers.len();
        if self.sell.len() != nb || self.exp_price.len() != nb {
            return Err(Error::Mechanism(format!(
                "expected one sell/price entry per buyer ({nb})"
            )));
        }
        if self.n_tilde < 2 {
            return Err(Error::Mechanism(format!(
                "total collection {} < 2: the mechanism needs two collectors",
                self.n_tilde
            )));
        }
        if let Some(j) = self.sell.iter().position(|&m| m > self.n_tilde) {
            return Err(Error::Mechanism(format!(
                "buyer {j} is sold more than N={}",
                self.n_tilde
            )));
        }
        let gap = self.consistency_gap(market.costs[0]);
        if gap.abs() > MONEY_TOL {
            return Err(Error::Mechanism(format!(
                "Σ expected prices must equal target + c_1·N (off by {gap:e})"
            )));
        }
        Ok(())
    }

    /// `Σ_j p̃_j − (ÕPT + c_1 N)`; zero for well-formed inputs.
    pub fn consistency_gap(&self, c1: f64) -> f64 {
        self.exp_price.iter().sum::<f64>() - (self.opt_tilde + c1 * self.n_tilde as f64)
    }
}

/// Welfare instantiation: every buyer receives all `N^OPT` points at her
/// clean-data value.
pub fn welfare_inputs(
    market: &MarketConfig,
    baseline: &WelfareBaseline,
) -> Result<MechanismInputs> {
    welfare_inputs_with(market, baseline, &crate::quadrature::Quadrature::default())
}

/// [`welfare_inputs`] with an explicit quadrature rule; use the same rule
/// that produced the baseline so the targets stay consistent.
pub fn welfare_inputs_with(
    market: &MarketConfig,
    baseline: &WelfareBaseline,
    quad: &crate::quadrature::Quadrature,
) -> Result<MechanismInputs> {
    let n = baseline.n_opt;
    if n < 2 {
        return Err(Error::Mechanism(format!(
            "N^OPT = {n} < 2: the mechanism needs two collectors"
        )));
    }
    let exp_price = market
        .buyers
        .iter()
        .map(|b| b.valuation.iid_value(n, market.sigma2, quad))
        .collect::<Result<Vec<_>>>()?;
    Ok(MechanismInputs {
        opt_tilde: baseline.opt,
        n_tilde: n,
        sell: vec![n; market.buyers.len()],
        exp_price,
    })
}

/// Profit instantiation from the posted-curve search.
pub fn profit_inputs(
    market: &MarketConfig,
    search: &ProfitSearchResult,
) -> Result<MechanismInputs> {
    if search.n_plus < 2 {
        return Err(Error::Mechanism(format!(
            "N⁺ = {} < 2: the mechanism needs two collectors",
            search.n_plus
        )));
    }
    let c1 = market.costs[0];
    Ok(MechanismInputs {
        opt_tilde: search.prices.iter().sum::<f64>() - c1 * search.n_plus as f64,
        n_tilde: search.n_plus,
        sell: search.allocations.clone(),
        exp_price: search.prices.clone(),
    })
}

/// Requested collection amount per contributor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requests {
    pub amounts: Vec<usize>,
}

impl Requests {
    /// Amount the other collector was asked for: `N − ñ_i` for `i ∈ {0, 1}`.
    pub fn other(&self, i: usize) -> usize {
        self.amounts[1 - i]
    }
}

pub fn make_requests(inputs: &MechanismInputs, n_contributors: usize) -> Result<Requests> {
    if n_contributors < 2 {
        return Err(Error::Mechanism(
            "at least two contributors required".into(),
        ));
    }
    if inputs.n_tilde < 2 {
        return Err(Error::Mechanism("total collection must be >= 2".into()));
    }
    let mut amounts = vec![0; n_contributors];
    amounts[0] = inputs.n_tilde - 1;
    amounts[1] = 1;
    Ok(Requests { amounts })
}

/// One dataset per contributor, in contributor order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub datasets: Vec<Vec<f64>>,
}

impl Submission {
    pub fn pooled(&self) -> Vec<f64> {
        self.datasets.iter().flatten().copied().collect()
    }
}

/// Sample mean with the empty-dataset convention `μ̂(∅) = 0`.
pub fn sample_mean(data: &[f64]) -> f64 {
    if data.is_empty() {
        0.0
    } else {
        data.iter().sum::<f64>() / data.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub datasets: Vec<Vec<f64>>,
    /// Some buyer asked for more points than were pooled and got the whole pool.
    pub short: bool,
}

/// Gives buyer `j` a uniformly random subset of `sell[j]` pooled points,
/// drawn without replacement and independently across buyers.
pub fn allocate(pool: &[f64], sell: &[usize], seed: u64) -> Allocation {
    let mut short = false;
    let datasets = sell
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            if m >= pool.len() {
                short |= m > pool.len();
                return pool.to_vec();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[j as u64]));
            rand::seq::index::sample(&mut rng, pool.len(), m)
                .into_iter()
                .map(|k| pool[k])
                .collect()
        })
        .collect();
    Allocation { datasets, short }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub buyer_datasets: Vec<Vec<f64>>,
    pub prices: Vec<f64>,
    pub payments: Vec<f64>,
    /// `μ̂(X'_1) − μ̂(X'_2)`.
    pub discrepancy: f64,
    /// `|X'_i| = ñ_i` for the two collectors.
    pub compliance: [bool; 2],
    /// A collector submitted nothing and its mean was taken as 0.
    pub degenerate: bool,
    pub short: bool,
    /// `Σ payments − Σ prices`.
    pub bb_residual: f64,
}

/// The mechanism bound to a market.
#[derive(Debug, Clone)]
pub struct Mechanism {
    inputs: MechanismInputs,
    market: MarketConfig,
    requests: Requests,
    penalty: [f64; 2],
    penalty_scale: f64,
}

impl Mechanism {
    pub fn new(inputs: MechanismInputs, market: &MarketConfig) -> Result<Self> {
        market.validate()?;
        inputs.validate(market)?;
        let requests = make_requests(&inputs, market.costs.len())?;
        let mut mech = Mechanism {
            inputs,
            market: market.clone(),
            requests,
            penalty: [0.0; 2],
            penalty_scale: 1.0,
        };
        mech.set_penalties();
        Ok(mech)
    }

    /// Scales both penalty coefficients; a debugging knob for negative
    /// controls, 1.0 in normal operation.
    pub fn with_penalty_scale(mut self, scale: f64) -> Self {
        self.penalty_scale = scale;
        self.set_penalties();
        self
    }

    fn set_penalties(&mut self) {
        for i in 0..2 {
            let n = self.requests.amounts[i] as f64;
            self.penalty[i] =
                self.penalty_scale * self.market.costs[i] * n * n / self.market.sigma2;
        }
    }

    pub fn inputs(&self) -> &MechanismInputs {
        &self.inputs
    }

    pub fn market(&self) -> &MarketConfig {
        &self.market
    }

    pub fn requests(&self) -> &Requests {
        &self.requests
    }

    pub fn penalty_scale(&self) -> f64 {
        self.penalty_scale
    }

    /// Penalty coefficient `d_i = c_i ñ_i² / σ²` (times the debug scale).
    pub fn penalty(&self, i: usize) -> f64 {
        self.penalty[i]
    }

    fn compliance(&self, sub: &Submission) -> [bool; 2] {
        [0, 1].map(|i| sub.datasets.get(i).map_or(0, Vec::len) == self.requests.amounts[i])
    }

    fn discrepancy(&self, sub: &Submission) -> f64 {
        let mean = |i: usize| sub.datasets.get(i).map_or(0.0, |d| sample_mean(d));
        mean(0) - mean(1)
    }

    /// Variance credit `d_i σ² / ñ_{−i} + d_i σ² / ñ_i`, equal to
    /// `d_i · E[Δ²]` under truthful play.
    fn variance_credit(&self, i: usize) -> f64 {
        let s2 = self.market.sigma2;
        let own = self.requests.amounts[i] as f64;
        let other = self.requests.other(i) as f64;
        self.penalty[i] * (s2 / other + s2 / own)
    }

    /// Compliance-gated part of collector `i`'s payment.
    pub(crate) fn payment_base(&self, i: usize) -> f64 {
        let c = &self.market.costs;
        let own = self.requests.amounts[i] as f64;
        let share = own / self.inputs.n_tilde as f64;
        (self.inputs.opt_tilde + c[0] - c[1]) * share + c[i] * own + self.variance_credit(i)
    }

    pub fn buyer_price(&self, j: usize, sub: &Submission) -> f64 {
        let nb = self.market.buyers.len() as f64;
        let ok = self.compliance(sub);
        let delta2 = self.discrepancy(sub).powi(2);
        (0..2)
            .map(|i| {
                let share = self.requests.amounts[i] as f64 / self.inputs.n_tilde as f64;
                let gated = if ok[i] {
                    self.inputs.exp_price[j] * share + self.variance_credit(i) / nb
                } else {
                    0.0
                };
                gated - self.penalty[i] / nb * delta2
            })
            .sum()
    }

    pub fn contributor_payment(&self, i: usize, sub: &Submission) -> f64 {
        if i >= 2 {
            return 0.0;
        }
        let gated = if self.compliance(sub)[i] {
            self.payment_base(i)
        } else {
            0.0
        };
        gated - self.penalty[i] * self.discrepancy(sub).powi(2)
    }

    pub fn run_round(&self, sub: &Submission, seed: u64) -> RoundOutcome {
        let allocation = allocate(&sub.pooled(), &self.inputs.sell, seed);
        let prices: Vec<f64> = (0..self.market.buyers.len())
            .map(|j| self.buyer_price(j, sub))
            .collect();
        let payments: Vec<f64> = (0..self.market.costs.len())
            .map(|i| self.contributor_payment(i, sub))
            .collect();
        let bb_residual = payments.iter().sum::<f64>() - prices.iter().sum::<f64>();
        let degenerate = (0..2).any(|i| sub.datasets.get(i).is_none_or(|d| d.is_empty()));
        RoundOutcome {
            buyer_datasets: allocation.datasets,
            prices,
            payments,
            discrepancy: self.discrepancy(sub),
            compliance: self.compliance(sub),
            degenerate,
            short: allocation.short,
            bb_residual,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuations::{ErrorValuation, Valuation};
    use proptest::prelude::*;

    const OPT: f64 = 1.432_993_161_855_452;
    const V2: f64 = 0.816_496_580_927_726;

    fn two_buyer() -> MarketConfig {
        let eq1: Valuation = ErrorValuation::ExpQuadratic { a: 1.0 }.into();
        MarketConfig::from_valuations([eq1.clone(), eq1], vec![0.1, 0.2, 0.5], 1.0).unwrap()
    }

    fn two_buyer_mech() -> Mechanism {
        let market = two_buyer();
        let inputs =
            welfare_inputs(&market, &crate::baseline::welfare_opt(&market).unwrap()).unwrap();
        Mechanism::new(inputs, &market).unwrap()
    }

    fn sub(a: &[f64], b: &[f64]) -> Submission {
        Submission {
            datasets: vec![a.to_vec(), b.to_vec(), vec![]],
        }
    }

    #[test]
    fn welfare_inputs_example() {
        let m = two_buyer_mech();
        let inp = m.inputs();
        assert_eq!((inp.n_tilde, inp.sell.clone()), (2, vec![2, 2]));
        assert!(inp.exp_price.iter().all(|&p| (p - V2).abs() < 1e-12));
        assert!((inp.opt_tilde - OPT).abs() < 1e-12);
        assert!((inp.exp_price.iter().sum::<f64>() - 0.1 * 2.0 - OPT).abs() < 1e-12);
    }

    #[test]
    fn welfare_inputs_reject_single_point() {
        let one = ErrorValuation::PiecewiseLinear {
            knots: vec![(0.0, 1.0)],
        };
        let market = MarketConfig::from_valuations([one.into()], vec![0.3, 0.4], 1.0).unwrap();
        let b = crate::baseline::welfare_opt(&market).unwrap();
        assert!(matches!(
            welfare_inputs(&market, &b),
            Err(Error::Mechanism(_))
        ));
    }

    #[test]
    fn profit_inputs_example() {
        let tables = [vec![0.0, 0.4, 0.6], vec![0.0, 0.9, 1.0]];
        let market = MarketConfig::from_valuations(
            tables.iter().cloned().map(Valuation::IidTable),
            vec![0.1, 0.2],
            1.0,
        )
        .unwrap();
        let search = crate::pricing::profit_search(&market, 0.0).unwrap();
        let inp = profit_inputs(&market, &search).unwrap();
        assert_eq!((inp.n_tilde, inp.sell.clone()), (2, vec![2, 2]));
        assert!((inp.opt_tilde - 1.0).abs() < 1e-12);
        assert!(inp.consistency_gap(0.1).abs() < 1e-12);
        assert!(Mechanism::new(inp, &market).is_ok());

        let mut short = search.clone();
        short.n_plus = 1;
        assert!(profit_inputs(&market, &short).is_err());
    }

    #[test]
    fn requests_examples() {
        let inp = |n| MechanismInputs {
            opt_tilde: 0.0,
            n_tilde: n,
            sell: vec![],
            exp_price: vec![],
        };
        assert_eq!(make_requests(&inp(5), 3).unwrap().amounts, vec![4, 1, 0]);
        assert_eq!(make_requests(&inp(2), 2).unwrap().amounts, vec![1, 1]);
        assert_eq!(
            make_requests(&inp(10), 5).unwrap().amounts,
            vec![9, 1, 0, 0, 0]
        );
        assert!(make_requests(&inp(3), 1).is_err());
    }

    #[test]
    fn allocation_examples() {
        let a = allocate(&[1.0, 3.0], &[2, 2], 9);
        assert_eq!(a.datasets, vec![vec![1.0, 3.0], vec![1.0, 3.0]]);
        assert!(!a.short);
        let x = allocate(&[1.0, 3.0], &[1, 1], 42);
        assert_eq!(x, allocate(&[1.0, 3.0], &[1, 1], 42));
        assert!(x.datasets.iter().all(|d| d.len() == 1));
        let s = allocate(&[1.0], &[3], 0);
        assert!(s.short && s.datasets[0] == vec![1.0]);
    }

    #[test]
    fn allocation_frequencies_match_binomial_oracle() {
        let pool = [0.0, 1.0, 2.0, 3.0, 4.0];
        let trials = 10_000;
        let mut hits = [0usize; 5];
        for seed in 0..trials {
            for &x in &allocate(&pool, &[3], seed).datasets[0] {
                hits[x as usize] += 1;
            }
        }
        // Each point lands in a 3-of-5 subset with probability 3/5.
        let p = 0.6;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for h in hits {
            assert!((h as f64 - trials as f64 * p).abs() < 3.0 * sd, "{hits:?}");
        }
    }

    #[test]
    fn buyer_price_examples() {
        let m = two_buyer_mech();
        assert_eq!(m.requests().amounts, vec![1, 1, 0]);
        assert!((m.penalty(0) - 0.1).abs() < 1e-15 && (m.penalty(1) - 0.2).abs() < 1e-15);
        let p = m.buyer_price(0, &sub(&[0.4], &[0.4]));
        assert!((p - (V2 + 0.3)).abs() < 1e-12, "{p}");
        // Δ² = 2
        let p = m.buyer_price(1, &sub(&[2f64.sqrt()], &[0.0]));
        assert!((p - V2).abs() < 1e-12, "{p}");
        assert_eq!(m.buyer_price(0, &sub(&[1.0, 1.0], &[1.0, 1.0])), 0.0);
    }

    #[test]
    fn contributor_payment_examples() {
        let m = two_buyer_mech();
        let s = sub(&[0.7], &[0.7]);
        let pi = m.contributor_payment(0, &s);
        assert!((pi - ((OPT - 0.1) / 2.0 + 0.3)).abs() < 1e-12);
        assert!((pi - 0.966_496_58).abs() < 1e-8);
        // Truthful payment minus cost is the profit share (OPT + c1 − c2)/N.
        let share = m.payment_base(0) - m.variance_credit(0) - 0.1;
        assert!((share - (OPT + 0.1 - 0.2) / 2.0).abs() < 1e-12 && share >= 0.0);
        assert_eq!(m.contributor_payment(2, &s), 0.0);
    }

    #[test]
    fn round_with_non_compliant_second_collector_is_flagged() {
        let m = two_buyer_mech();
        let out = m.run_round(&sub(&[0.3], &[0.1, 0.2]), 1);
        assert_eq!(out.compliance, [true, false]);
        // Off-path residual: Σπ − Σp = I_1·(c_1 − c_2)·ñ_1/N with I_2 = 0.
        assert!(
            (out.bb_residual - (0.1 - 0.2) * 0.5).abs() < 1e-12,
            "{}",
            out.bb_residual
        );
        let empty = m.run_round(&sub(&[], &[0.2]), 1);
        assert!(empty.degenerate);
    }

    #[test]
    fn zero_sale_configuration_keeps_only_penalty_paths() {
        let market = two_buyer();
        let inputs = MechanismInputs {
            opt_tilde: -0.1 * 3.0,
            n_tilde: 3,
            sell: vec![0, 0],
            exp_price: vec![0.0, 0.0],
        };
        let m = Mechanism::new(inputs, &market).unwrap();
        let s = sub(&[1.0, 2.0], &[0.5]);
        let delta2: f64 = (1.5f64 - 0.5).powi(2);
        let expected: f64 = (0..2)
            .map(|i| (m.variance_credit(i) - m.penalty(i) * delta2) / 2.0)
            .sum();
        assert!((m.buyer_price(0, &s) - expected).abs() < 1e-12);
        let out = m.run_round(&s, 3);
        assert!(out.buyer_datasets.iter().all(Vec::is_empty));
        assert!(out.bb_residual.abs() < 1e-12);
    }

    #[test]
    fn inconsistent_inputs_rejected() {
        let market = two_buyer();
        let inputs = MechanismInputs {
            opt_tilde: 1.0,
            n_tilde: 2,
            sell: vec![2, 2],
            exp_price: vec![0.5, 0.5],
        };
        assert!(matches!(
            Mechanism::new(inputs, &market),
            Err(Error::Mechanism(_))
        ));
    }

    #[test]
    fn stationarity_identity() {
        let m = two_buyer_mech();
        for i in 0..2 {
            let n = m.requests().amounts[i] as f64;
            let c = m.market().costs[i];
            assert!((m.market().sigma() * (m.penalty(i) / c).sqrt() - n).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn budget_balance_on_compliant_submissions(
            n in 2usize..8,
            mu1 in -10.0f64..10.0,
            mu2 in -10.0f64..10.0,
            noise in proptest::collection::vec(-3.0f64..3.0, 8),
        ) {
            let market = two_buyer();
            let q = crate::quadrature::Quadrature::default();
            let price = market.buyers[0].valuation.iid_value(n, 1.0, &q).unwrap();
            let inputs = MechanismInputs {
                opt_tilde: 2.0 * price - 0.1 * n as f64,
                n_tilde: n,
                sell: vec![n, n - 1],
                exp_price: vec![price, price],
            };
            let m = Mechanism::new(inputs, &market).unwrap();
            let a: Vec<f64> = noise[..n - 1].iter().map(|z| mu1 + z).collect();
            let out = m.run_round(&sub(&a, &[mu2 + noise[7]]), 5);
            prop_assert!(out.bb_residual.abs() < 1e-9);
        }

        #[test]
        fn prices_depend_only_on_sizes_and_means(shift in -2.0f64..2.0, spread in 0.0f64..3.0) {
            let m = two_buyer_mech();
            let wide = Submission { datasets: vec![vec![shift - spread, shift + spread], vec![0.25], vec![]] };
            let tight = Submission { datasets: vec![vec![shift, shift], vec![0.25], vec![]] };
            prop_assert!((m.buyer_price(1, &wide) - m.buyer_price(1, &tight)).abs() < 1e-12);
            prop_assert!((m.contributor_payment(0, &wide) - m.contributor_payment(0, &tight)).abs() < 1e-12);
        }
    }
}
