//! The batch pipelines behind each command. Every function is a pure
//! function of the configuration (and the negative-control penalty scale).

use serde::Serialize;

use crate::baseline::{search_bound, welfare_opt_with, welfare_upper_bound, WelfareBaseline};
use crate::config::{Objective, RunConfig};
use crate::error::Result;
use crate::exec::{derive_seed, Execution};
use crate::mechanism::{profit_inputs, welfare_inputs_with, Mechanism, MechanismInputs};
use crate::pricing::{profit_search_tables, ExactPricer, ProfitSearchResult, MONEY_TOL};
use crate::quadrature::Quadrature;
use crate::simulation::{
    adversarial_budget_balance, icc_sweep, profit_at_truthful, simulate_utility, truthful_rounds,
    welfare_at_truthful, welfare_bound_check, BudgetBalanceCheck, DeviationReport, RoundRecord,
    RoundsSummary, Strategy, UtilityMethod,
};

/// Seed tags separating the independent random streams of one run.
mod stream {
    pub const ROUNDS: u64 = 1;
    pub const BUDGET: u64 = 2;
    pub const IRC: u64 = 3;
    pub const WELFARE: u64 = 4;
}

/// Half-width of the uniform range for adversarial submitted means.
pub const ADVERSARIAL_MEAN_RANGE: f64 = 10.0;
pub const SE_MULTIPLIER: f64 = 3.0;

pub struct Pipeline<'a> {
    pub cfg: &'a RunConfig,
    pub quad: Quadrature,
    pub exec: Execution,
    pub penalty_scale: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineResult {
    pub search_bound: usize,
    pub baseline: WelfareBaseline,
    pub welfare_upper_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PriceResult {
    pub search_bound: usize,
    pub search: ProfitSearchResult,
    /// `None` when the search picks fewer than two points.
    pub profit_at_truthful: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MechanismSummary {
    pub inputs: MechanismInputs,
    pub requests: Vec<usize>,
    pub penalties: [f64; 2],
    pub penalty_scale: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub mechanism: MechanismSummary,
    pub broker_absorbs_residual: bool,
    pub rounds: RoundsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, target: f64, tolerance: f64, pass: bool) -> Self {
        Check {
            name: name.into(),
            value,
            target,
            tolerance,
            pass,
            detail: String::new(),
        }
    }

    fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }

    fn equal(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Check::new(
            name,
            value,
            target,
            tolerance,
            (value - target).abs() <= tolerance,
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyResult {
    pub mechanism: MechanismSummary,
    pub checks: Vec<Check>,
    pub failures: usize,
    pub pass: bool,
}

/// Upper-tail standard normal quantile, by bisection on `erfc`.
pub fn normal_upper_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 0.5 * libm::erfc(mid / std::f64::consts::SQRT_2) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// z-threshold keeping the chance of any false alarm among `count`
/// one-sided tests at 1%, and never below the per-test multiplier.
pub fn familywise_threshold(count: usize) -> f64 {
    normal_upper_quantile(0.01 / count.max(1) as f64).max(SE_MULTIPLIER)
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        Pipeline {
            cfg,
            quad: Quadrature::new(cfg.file.quadrature_nodes),
            exec: Execution::default(),
            penalty_scale: 1.0,
        }
    }

    pub fn with_penalty_scale(mut self, scale: f64) -> Self {
        self.penalty_scale = scale;
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    fn seed(&self, tag: u64) -> u64 {
        derive_seed(self.cfg.file.seed, &[tag])
    }

    pub fn baseline(&self) -> Result<BaselineResult> {
        let m = &self.cfg.market;
        let baseline = welfare_opt_with(m, &self.quad, self.exec)?;
        Ok(BaselineResult {
            search_bound: search_bound(m.buyers.len(), m.costs[0])?,
            welfare_upper_bound: welfare_upper_bound(&baseline, m.costs[0], m.costs[1]),
            baseline,
        })
    }

    pub fn price(&self) -> Result<PriceResult> {
        let m = &self.cfg.market;
        let n_max = search_bound(m.buyers.len(), m.costs[0])?;
        let tables = m.value_tables(n_max, &self.quad)?;
        let pricer = ExactPricer {
            cap: self.cfg.file.max_enumeration,
            exec: self.exec,
        };
        let search = profit_search_tables(
            &tables,
            m.costs[0],
            n_max,
            &pricer,
            self.cfg.file.epsilon,
            self.exec,
        )?;
        let profit_at_truthful = match profit_inputs(m, &search) {
            Ok(inputs) => Some(profit_at_truthful(&Mechanism::new(inputs, m)?)),
            Err(_) => None,
        };
        Ok(PriceResult {
            search_bound: n_max,
            search,
            profit_at_truthful,
        })
    }

    /// The mechanism for the configured objective, plus the benchmark its
    /// truthful welfare or profit should equal.
    pub fn mechanism(&self) -> Result<(Mechanism, f64)> {
        let m = &self.cfg.market;
        let (inputs, benchmark) = match self.cfg.file.objective {
            Objective::Welfare => {
                let b = welfare_opt_with(m, &self.quad, self.exec)?;
                (welfare_inputs_with(m, &b, &self.quad)?, b.opt)
            }
            Objective::Profit => {
                let p = self.price()?;
                (profit_inputs(m, &p.search)?, p.search.profit)
            }
        };
        let mech = Mechanism::new(inputs, m)?.with_penalty_scale(self.penalty_scale);
        Ok((mech, benchmark))
    }

    fn summary(mech: &Mechanism) -> MechanismSummary {
        MechanismSummary {
            inputs: mech.inputs().clone(),
            requests: mech.requests().amounts.clone(),
            penalties: [mech.penalty(0), mech.penalty(1)],
            penalty_scale: mech.penalty_scale(),
        }
    }

    pub fn run(&self) -> Result<(RunResult, Vec<RoundRecord>)> {
        let (mech, _) = self.mechanism()?;
        let mut rounds = truthful_rounds(
            &mech,
            self.cfg.file.mu,
            self.cfg.file.reps,
            self.seed(stream::ROUNDS),
            true,
            self.exec,
        );
        let records = std::mem::take(&mut rounds.records);
        Ok((
            RunResult {
                mechanism: Self::summary(&mech),
                broker_absorbs_residual: self.cfg.file.broker_absorbs_residual,
                rounds,
            },
            records,
        ))
    }

    pub fn budget_balance(&self, mech: &Mechanism) -> BudgetBalanceCheck {
        adversarial_budget_balance(
            mech,
            self.cfg.file.bb_rounds,
            ADVERSARIAL_MEAN_RANGE,
            self.seed(stream::BUDGET),
            self.exec,
        )
    }

    pub fn verify(&self) -> Result<VerifyResult> {
        let f = &self.cfg.file;
        let m = &self.cfg.market;
        let (c1, c2) = (m.costs[0], m.costs[1]);
        let (mech, benchmark) = self.mechanism()?;
        let inputs = mech.inputs();
        let n = inputs.n_tilde as f64;
        let mut checks = Vec::new();

        let bb = self.budget_balance(&mech);
        checks.push(
            Check::new(
                "budget_balance",
                bb.max_abs_residual,
                0.0,
                bb.tolerance,
                bb.pass,
            )
            .detail(format!(
                "{} compliant rounds, submitted means uniform on ±{ADVERSARIAL_MEAN_RANGE}",
                bb.rounds
            )),
        );

        let rounds = truthful_rounds(
            &mech,
            f.mu,
            f.reps,
            self.seed(stream::ROUNDS),
            false,
            self.exec,
        );
        checks.push(Check::new(
            "run_round.bb_residual",
            rounds.max_abs_residual,
            0.0,
            MONEY_TOL,
            rounds.max_abs_residual < MONEY_TOL,
        ));

        for i in 0..2 {
            let target = (inputs.opt_tilde + c1 - c2) * mech.requests().amounts[i] as f64 / n;
            let est = simulate_utility(
                &mech,
                i,
                &Strategy::truthful(),
                f.mu,
                f.reps,
                derive_seed(self.seed(stream::IRC), &[i as u64]),
                self.exec,
            )?;
            let tol = SE_MULTIPLIER * est.std_err;
            checks.push(
                Check::equal(format!("irc.contributor_{}", i + 1), est.mean, target, tol)
                    .detail(format!("std_err {:e}", est.std_err)),
            );
            checks.push(Check::new(
                format!("irc.contributor_{}.nonnegative", i + 1),
                target,
                0.0,
                0.0,
                target >= 0.0,
            ));
        }

        for (j, b) in m.buyers.iter().enumerate() {
            let price = rounds.prices[j];
            let tol = SE_MULTIPLIER * price.std_err;
            checks.push(
                Check::equal(
                    format!("irb.expected_price.buyer_{}", b.id),
                    price.mean,
                    inputs.exp_price[j],
                    tol,
                )
                .detail(format!("std_err {:e}", price.std_err)),
            );
            let u = rounds.buyer_utility[j];
            checks.push(
                Check::new(
                    format!("irb.buyer_utility.buyer_{}", b.id),
                    u.mean,
                    0.0,
                    SE_MULTIPLIER * u.std_err,
                    u.mean >= -SE_MULTIPLIER * u.std_err,
                )
                .detail(format!("std_err {:e}", u.std_err)),
            );
        }

        for i in 0..2 {
            let stationary = m.sigma() * (mech.penalty(i) / m.costs[i]).sqrt();
            checks.push(Check::equal(
                format!("d_coefficient_identity.contributor_{}", i + 1),
                stationary,
                mech.requests().amounts[i] as f64,
                MONEY_TOL,
            ));
        }

        let bound = benchmark - (c2 - c1);
        match f.objective {
            Objective::Welfare => {
                let w = welfare_at_truthful(&mech, &self.quad)?;
                checks.push(
                    Check::equal("welfare_at_truthful", w, bound, MONEY_TOL)
                        .detail("OPT - (c_2 - c_1)"),
                );
                checks.push(Check::new(
                    "welfare_upper_bound",
                    w,
                    bound,
                    MONEY_TOL,
                    w <= bound + MONEY_TOL,
                ));
                checks.push(Check::equal(
                    "welfare_at_truthful.monte_carlo",
                    rounds.welfare.mean,
                    w,
                    SE_MULTIPLIER * rounds.welfare.std_err,
                ));
                checks.extend(self.deviation_welfare(&mech, bound));
            }
            Objective::Profit => {
                let p = profit_at_truthful(&mech);
                checks.push(
                    Check::equal("profit_at_truthful", p, bound, MONEY_TOL)
                        .detail("OPT_profit - (c_2 - c_1)"),
                );
                checks.push(Check::equal(
                    "profit_at_truthful.monte_carlo",
                    rounds.profit.mean,
                    p,
                    SE_MULTIPLIER * rounds.profit.std_err,
                ));
                checks.push(self.efb_at_truthful(&mech)?);
            }
        }

        let failures = checks.iter().filter(|c| !c.pass).count();
        Ok(VerifyResult {
            mechanism: Self::summary(&mech),
            checks,
            failures,
            pass: failures == 0,
        })
    }

    /// Largest envy `v_j(m̃_k) − p̃_k − (v_j(m̃_j) − p̃_j)` over buyer pairs.
    fn efb_at_truthful(&self, mech: &Mechanism) -> Result<Check> {
        let m = &self.cfg.market;
        let inputs = mech.inputs();
        let tables = m.value_tables(inputs.n_tilde, &self.quad)?;
        let mut envy = f64::NEG_INFINITY;
        for (j, t) in tables.iter().enumerate() {
            let own = t[inputs.sell[j]] - inputs.exp_price[j];
            for k in 0..tables.len() {
                envy = envy.max(t[inputs.sell[k]] - inputs.exp_price[k] - own);
            }
        }
        Ok(Check::new(
            "efb_at_truthful",
            envy,
            0.0,
            MONEY_TOL,
            envy <= MONEY_TOL,
        ))
    }

    /// Simulated welfare of every (deviation, truthful) profile in the sweep
    /// grid against `bound`, with a family-wise 1% false-alarm rate.
    fn deviation_welfare(&self, mech: &Mechanism, bound: f64) -> Vec<Check> {
        let f = &self.cfg.file;
        let mus = f.mu_grid.values(self.cfg.market.sigma());
        let mut profiles = Vec::new();
        for i in 0..2 {
            profiles.extend(
                f.deviations
                    .strategies(mech.requests().amounts[i], self.cfg.market.sigma(), &mus)
                    .into_iter()
                    .map(|s| (i, s)),
            );
        }
        if profiles.is_empty() {
            return Vec::new();
        }
        let z = familywise_threshold(profiles.len());
        let out = welfare_bound_check(
            mech,
            &profiles,
            &mus,
            bound,
            f.welfare_reps,
            self.seed(stream::WELFARE),
            self.exec,
        );
        let worst = out
            .iter()
            .map(|p| (p.welfare - bound) / p.std_err.max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        let excess = out
            .iter()
            .map(|p| p.welfare - bound - z * p.std_err)
            .fold(f64::NEG_INFINITY, f64::max);
        vec![Check::new(
            "welfare_upper_bound.deviations",
            excess,
            0.0,
            MONEY_TOL,
            excess <= MONEY_TOL,
        )
        .detail(format!(
            "{} profiles; largest standardized excess {worst:.2} vs family-wise threshold {z:.2}",
            out.len()
        ))]
    }

    pub fn sweep(&self) -> Result<DeviationReport> {
        let (mech, _) = self.mechanism()?;
        icc_sweep(
            &mech,
            &self.cfg.file.deviations,
            &self.cfg.file.mu_grid,
            UtilityMethod::ClosedForm,
            self.exec,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upper_quantile() {
        assert!((normal_upper_quantile(0.001_349_898_031_630_094_6) - 3.0).abs() < 1e-9);
        assert!((normal_upper_quantile(0.5)).abs() < 1e-12);
    }
}
