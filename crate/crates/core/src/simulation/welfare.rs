//! Welfare and profit of the mechanism, exactly on the truthful path and by
//! simulation for unilateral deviations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::stats::{batches, Moments};
use super::strategy::Strategy;
use super::sweep::SE_MULTIPLIER;
use crate::error::Result;
use crate::exec::{derive_seed, Execution};
use crate::mechanism::{allocate, Mechanism, Submission};
use crate::quadrature::Quadrature;

/// Cost of the truthful profile: `c_1 (N − 1) + c_2`.
fn truthful_cost(mech: &Mechanism) -> f64 {
    let c = &mech.market().costs;
    let r = &mech.requests().amounts;
    c[0] * r[0] as f64 + c[1] * r[1] as f64
}

/// `Σ_j v_j(m̃_j) − c_1 (N − 1) − c_2`. Truthful data is i.i.d., so every
/// buyer realises her clean-data value.
pub fn welfare_at_truthful(mech: &Mechanism, quad: &Quadrature) -> Result<f64> {
    let market = mech.market();
    let mut value = 0.0;
    for (b, &m) in market.buyers.iter().zip(&mech.inputs().sell) {
        if m > 0 {
            value += b.valuation.iid_value(m, market.sigma2, quad)?;
        }
    }
    Ok(value - truthful_cost(mech))
}

/// `Σ_j p̃_j − c_1 (N − 1) − c_2`, using that expected prices equal the
/// targets on the truthful path.
pub fn profit_at_truthful(mech: &Mechanism) -> f64 {
    mech.inputs().exp_price.iter().sum::<f64>() - truthful_cost(mech)
}

/// Simulated welfare when contributor `i` plays `strategy`, the other
/// collector is truthful and the remaining contributors stay idle.
pub fn simulate_profile_welfare(
    mech: &Mechanism,
    i: usize,
    strategy: &Strategy,
    mu: f64,
    reps: usize,
    seed: u64,
) -> Moments {
    let market = mech.market();
    let sigma = market.sigma();
    let req = &mech.requests().amounts;
    let normal = Normal::new(mu, sigma).expect("sigma > 0");
    let mut total = Moments::default();
    for (b, size) in batches(reps) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b as u64]));
        for _ in 0..size {
            let mut datasets: Vec<Vec<f64>> = vec![Vec::new(); market.costs.len()];
            let mut cost = 0.0;
            for k in 0..2 {
                if k != i {
                    datasets[k] = (0..req[k]).map(|_| normal.sample(&mut rng)).collect();
                    cost += market.costs[k] * req[k] as f64;
                }
            }
            let (n, own) = strategy.play(req[i], mu, sigma, &mut rng);
            cost += market.costs[i] * n as f64;
            datasets[i] = own;
            let pool = Submission { datasets }.pooled();
            let alloc = allocate(&pool, &mech.inputs().sell, rng.random());
            let value: f64 = market
                .buyers
                .iter()
                .zip(&alloc.datasets)
                .map(|(b, d)| b.valuation.realized_value(d, mu))
                .sum();
            total.push(value - cost);
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileWelfare {
    pub contributor: usize,
    pub label: String,
    /// Minimum over the grid of the simulated welfare.
    pub welfare: f64,
    pub worst_mu: f64,
    pub std_err: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Checks that no (deviation, truthful) profile has welfare, taken as the
/// minimum over `mu_grid`, above `bound` beyond statistical tolerance.
pub fn welfare_bound_check(
    mech: &Mechanism,
    profiles: &[(usize, Strategy)],
    mu_grid: &[f64],
    bound: f64,
    reps: usize,
    seed: u64,
    exec: Execution,
) -> Vec<ProfileWelfare> {
    let indexed: Vec<(usize, &(usize, Strategy))> = profiles.iter().enumerate().collect();
    exec.map_slice(&indexed, |&(k, (i, s))| {
        let invariant = {
            let n = s.collect.amount(mech.requests().amounts[*i]);
            let law = s.report.mean_law(n, mech.market().sigma2);
            law.tracks_mu || law.count == 0
        };
        let grid = if invariant { &mu_grid[..1] } else { mu_grid };
        let (mut welfare, mut worst_mu, mut std_err) = (f64::INFINITY, 0.0, 0.0);
        for (t, &mu) in grid.iter().enumerate() {
            let m = simulate_profile_welfare(
                mech,
                *i,
                s,
                mu,
                reps,
                derive_seed(seed, &[k as u64, t as u64]),
            );
            if m.mean() < welfare {
                (welfare, worst_mu, std_err) = (m.mean(), mu, m.std_err());
            }
        }
        ProfileWelfare {
            contributor: *i,
            label: s.label(),
            welfare,
            worst_mu,
            std_err,
            bound,
            pass: welfare <= bound + SE_MULTIPLIER * std_err + 1e-9,
        }
    })
}
