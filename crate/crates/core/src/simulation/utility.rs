//! Expected contributor utility `E[π_i] − c_i n_i` against a truthful
//! opponent, in closed form and by seeded Monte Carlo.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::stats::{batches, Moments};
use super::strategy::Strategy;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, Execution};
use crate::mechanism::{Mechanism, Submission};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub mu: f64,
    pub closed_form: Option<f64>,
}

fn check_contributor(mech: &Mechanism, i: usize) -> Result<()> {
    let n = mech.market().costs.len();
    if i >= n {
        return Err(Error::Domain(format!(
            "contributor {i} out of range (have {n})"
        )));
    }
    Ok(())
}

/// Exact expected utility of contributor `i` playing `strategy` when the true
/// mean is `mu` and the other collector is truthful.
///
/// Uses `E[(A − B)²] = (E A − E B)² + Var A + Var B` with `A` the submitted
/// mean of `i` and `B ~ N(μ, σ²/ñ_{−i})` the opponent's sample mean.
pub fn utility_closed_form(
    mech: &Mechanism,
    i: usize,
    strategy: &Strategy,
    mu: f64,
) -> Result<f64> {
    check_contributor(mech, i)?;
    let market = mech.market();
    let requested = mech.requests().amounts[i];
    let n = strategy.collect.amount(requested);
    let cost = market.costs[i] * n as f64;
    if i >= 2 {
        return Ok(-cost);
    }
    let law = strategy.report.mean_law(n, market.sigma2);
    let other_var = market.sigma2 / mech.requests().other(i) as f64;
    let bias = law.mean(mu) - mu;
    let expected_sq_gap = bias * bias + law.variance + other_var;
    let gated = if law.count == requested {
        mech.payment_base(i)
    } else {
        0.0
    };
    Ok(gated - mech.penalty(i) * expected_sq_gap - cost)
}

/// Monte Carlo estimate of the same utility with `reps` independent rounds.
/// Deterministic for a given seed under either execution mode.
pub fn simulate_utility(
    mech: &Mechanism,
    i: usize,
    strategy: &Strategy,
    mu: f64,
    reps: usize,
    seed: u64,
    exec: Execution,
) -> Result<UtilityEstimate> {
    check_contributor(mech, i)?;
    if reps == 0 {
        return Err(Error::Domain("reps must be >= 1".into()));
    }
    let market = mech.market();
    let sigma = market.sigma();
    let requests = mech.requests();
    let chunks = batches(reps);
    let parts = exec.map_slice(&chunks, |&(b, size)| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b as u64]));
        let normal = Normal::new(mu, sigma).expect("sigma > 0");
        let mut m = Moments::default();
        for _ in 0..size {
            let mut datasets: Vec<Vec<f64>> = vec![Vec::new(); market.costs.len()];
            let (n, own) = strategy.play(requests.amounts[i], mu, sigma, &mut rng);
            if i < 2 {
                let other = 1 - i;
                datasets[other] = (0..requests.amounts[other])
                    .map(|_| normal.sample(&mut rng))
                    .collect();
            }
            datasets[i] = own;
            let sub = Submission { datasets };
            m.push(mech.contributor_payment(i, &sub) - market.costs[i] * n as f64);
        }
        m
    });
    let total = parts.iter().fold(Moments::default(), |acc, p| acc.merge(p));
    Ok(UtilityEstimate {
        mean: total.mean(),
        std_err: total.std_err(),
        mu,
        closed_form: Some(utility_closed_form(mech, i, strategy, mu)?),
    })
}

/// How utilities are evaluated in sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum UtilityMethod {
    ClosedForm,
    MonteCarlo { reps: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub utility: f64,
    pub mu: f64,
    /// Zero for closed-form evaluations.
    pub std_err: f64,
}

/// Whether the submitted mean moves one-for-one with `μ`, which makes the
/// expected utility independent of `μ`.
pub fn is_mu_invariant(mech: &Mechanism, i: usize, strategy: &Strategy) -> bool {
    let n = strategy
        .collect
        .amount(mech.requests().amounts.get(i).copied().unwrap_or(0));
    i >= 2 || strategy.report.mean_law(n, mech.market().sigma2).tracks_mu
}

/// Minimum expected utility over `mu_grid` (the unknown-mean infimum at grid
/// resolution). `seed_tag` distinguishes independent Monte Carlo streams.
pub fn worst_case_utility(
    mech: &Mechanism,
    i: usize,
    strategy: &Strategy,
    mu_grid: &[f64],
    method: UtilityMethod,
    seed_tag: u64,
) -> Result<WorstCase> {
    if mu_grid.is_empty() {
        return Err(Error::Domain("mu grid must be non-empty".into()));
    }
    let grid: &[f64] = if is_mu_invariant(mech, i, strategy) {
        &mu_grid[..1]
    } else {
        mu_grid
    };
    let mut worst: Option<WorstCase> = None;
    for (k, &mu) in grid.iter().enumerate() {
        let here = match method {
            UtilityMethod::ClosedForm => WorstCase {
                utility: utility_closed_form(mech, i, strategy, mu)?,
                mu,
                std_err: 0.0,
            },
            UtilityMethod::MonteCarlo { reps, seed } => {
                let est = simulate_utility(
                    mech,
                    i,
                    strategy,
                    mu,
                    reps,
                    derive_seed(seed, &[seed_tag, k as u64]),
                    Execution::Sequential,
                )?;
                WorstCase {
                    utility: est.mean,
                    mu,
                    std_err: est.std_err,
                }
            }
        };
        if worst.is_none_or(|w| here.utility < w.utility) {
            worst = Some(here);
        }
    }
    Ok(worst.expect("grid is non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::strategy::{CollectRule, ReportRule};
    use crate::testing::two_buyer_mechanism;

    const OPT: f64 = 1.432_993_161_855_452;

    #[test]
    fn truthful_utility_is_profit_share() {
        let m = two_buyer_mechanism();
        for i in 0..2 {
            for mu in [-3.0, 0.0, 4.2] {
                let u = utility_closed_form(&m, i, &Strategy::truthful(), mu).unwrap();
                assert!((u - (OPT + 0.1 - 0.2) / 2.0).abs() < 1e-12, "i={i} u={u}");
            }
        }
        assert!(
            (utility_closed_form(&m, 0, &Strategy::truthful(), 0.0).unwrap() - 0.666_496_58).abs()
                < 1e-8
        );
    }

    #[test]
    fn fabrication_closed_form() {
        let m = two_buyer_mechanism();
        let truthful = utility_closed_form(&m, 0, &Strategy::truthful(), 0.0).unwrap();
        let fab = |mu0: f64| {
            Strategy::new(
                CollectRule::Fixed { n: 0 },
                ReportRule::FabricateNormal { mu0, count: 1 },
            )
        };
        // Same law as honest data at μ0 = μ, but nothing was collected.
        let at = utility_closed_form(&m, 0, &fab(1.5), 1.5).unwrap();
        assert!((at - (truthful + 0.1)).abs() < 1e-12);
        let off = utility_closed_form(&m, 0, &fab(1.5), 3.5).unwrap();
        assert!((off - (truthful + 0.1 - 0.1 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn shift_costs_d_times_b_squared() {
        let m = two_buyer_mechanism();
        let truthful = utility_closed_form(&m, 1, &Strategy::truthful(), 0.0).unwrap();
        let s = Strategy::new(CollectRule::Identity, ReportRule::ShiftMean { b: 0.5 });
        let u = utility_closed_form(&m, 1, &s, 2.0).unwrap();
        assert!((u - (truthful - 0.2 * 0.25)).abs() < 1e-12);
    }

    #[test]
    fn non_collectors_only_pay_costs() {
        let m = two_buyer_mechanism();
        assert_eq!(
            utility_closed_form(&m, 2, &Strategy::truthful(), 0.0).unwrap(),
            0.0
        );
        let s = Strategy::new(CollectRule::Fixed { n: 3 }, ReportRule::Identity);
        assert!((utility_closed_form(&m, 2, &s, 0.0).unwrap() + 1.5).abs() < 1e-12);
        assert!(utility_closed_form(&m, 3, &s, 0.0).is_err());
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let m = two_buyer_mechanism();
        let cases = [
            (0, Strategy::truthful()),
            (
                1,
                Strategy::new(CollectRule::Identity, ReportRule::TruncateTo { count: 0 }),
            ),
            (
                0,
                Strategy::new(
                    CollectRule::Fixed { n: 3 },
                    ReportRule::ReplaceWithMeanCopies { count: 1 },
                ),
            ),
            (
                1,
                Strategy::new(
                    CollectRule::Fixed { n: 0 },
                    ReportRule::FabricateNormal { mu0: 0.5, count: 1 },
                ),
            ),
        ];
        for (k, (i, s)) in cases.iter().enumerate() {
            let est = simulate_utility(&m, *i, s, 0.3, 100_000, 7 + k as u64, Execution::default())
                .unwrap();
            let cf = est.closed_form.unwrap();
            assert!(
                (est.mean - cf).abs() < 3.0 * est.std_err.max(1e-12),
                "{s:?}: {} vs {cf} ± {}",
                est.mean,
                est.std_err
            );
        }
    }

    #[test]
    fn simulation_is_deterministic_across_execution_modes() {
        let m = two_buyer_mechanism();
        let s = Strategy::new(CollectRule::Identity, ReportRule::ShiftMean { b: 0.1 });
        let a = simulate_utility(&m, 0, &s, 0.0, 5_500, 3, Execution::Sequential).unwrap();
        let b = simulate_utility(&m, 0, &s, 0.0, 5_500, 3, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn worst_case_examples() {
        let m = two_buyer_mechanism();
        let grid: Vec<f64> = (-5..=5).map(f64::from).collect();
        let w = worst_case_utility(
            &m,
            0,
            &Strategy::truthful(),
            &grid,
            UtilityMethod::ClosedForm,
            0,
        )
        .unwrap();
        assert!((w.utility - (OPT - 0.1) / 2.0).abs() < 1e-12);
        let fab = Strategy::new(
            CollectRule::Fixed { n: 0 },
            ReportRule::FabricateNormal { mu0: 0.0, count: 1 },
        );
        let w = worst_case_utility(&m, 0, &fab, &grid, UtilityMethod::ClosedForm, 0).unwrap();
        assert_eq!(w.mu.abs(), 5.0);
        assert!((w.utility - ((OPT - 0.1) / 2.0 + 0.1 - 0.1 * 25.0)).abs() < 1e-12);
        let single = worst_case_utility(
            &m,
            0,
            &fab,
            &[1.0],
            UtilityMethod::MonteCarlo {
                reps: 2_000,
                seed: 4,
            },
            9,
        )
        .unwrap();
        let direct = simulate_utility(
            &m,
            0,
            &fab,
            1.0,
            2_000,
            derive_seed(4, &[9, 0]),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(single.utility, direct.mean);
    }
}
