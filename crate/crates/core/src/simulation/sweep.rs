//! Unilateral deviation sweeps against the truthful profile.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::strategy::{CollectRule, ReportRule, Strategy};
use super::utility::{utility_closed_form, worst_case_utility, UtilityMethod};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mechanism::Mechanism;

pub const CLOSED_FORM_TOL: f64 = 1e-9;
pub const SE_MULTIPLIER: f64 = 3.0;

pub const SCOPE_NOTE: &str =
    "Certifies unilateral deviations from the truthful profile within the \
parametric families listed (collection fractions and fixed counts; identity, shift, scale, \
repeat, truncate, mean-copy and fabrication reports), with the infimum over the unknown mean \
taken on the listed grid. Arbitrary measurable reporting rules are not enumerated.";

/// Uniform grid of candidate true means, in units of σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuGrid {
    pub points: usize,
    pub half_width_sigmas: f64,
}

impl Default for MuGrid {
    fn default() -> Self {
        MuGrid {
            points: 21,
            half_width_sigmas: 5.0,
        }
    }
}

impl MuGrid {
    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::config("mu_grid.points", "must be >= 1"));
        }
        if !(self.half_width_sigmas.is_finite() && self.half_width_sigmas >= 0.0) {
            return Err(Error::config(
                "mu_grid.half_width_sigmas",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }

    pub fn values(&self, sigma: f64) -> Vec<f64> {
        let h = self.half_width_sigmas * sigma;
        if self.points == 1 {
            return vec![0.0];
        }
        let step = 2.0 * h / (self.points - 1) as f64;
        (0..self.points).map(|k| -h + step * k as f64).collect()
    }
}

/// Parameters of the deviation families; shifts are in units of σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviationGrid {
    pub fractions: Vec<f64>,
    pub shifts: Vec<f64>,
    pub scales: Vec<f64>,
    /// Offsets applied to the requested count for collection and report
    /// sizes; negative results are skipped.
    pub count_offsets: Vec<i64>,
    pub fabrication: bool,
    pub cap_per_contributor: usize,
}

impl Default for DeviationGrid {
    fn default() -> Self {
        DeviationGrid {
            fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25],
            shifts: vec![0.1, -0.1, 0.5, -0.5, 1.0, -1.0],
            scales: vec![0.0, 0.5, 2.0],
            count_offsets: vec![-2, -1, 0, 1, 2],
            fabrication: true,
            cap_per_contributor: 1000,
        }
    }
}

fn offset(base: usize, k: i64) -> Option<usize> {
    usize::try_from(base as i64 + k).ok()
}

impl DeviationGrid {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::config(
                "deviations.fractions",
                "must be finite and >= 0",
            ));
        }
        if self
            .shifts
            .iter()
            .chain(&self.scales)
            .any(|x| !x.is_finite())
        {
            return Err(Error::config(
                "deviations",
                "shifts and scales must be finite",
            ));
        }
        if self.cap_per_contributor == 0 {
            return Err(Error::config(
                "deviations.cap_per_contributor",
                "must be >= 1",
            ));
        }
        Ok(())
    }

    /// All deviations for a contributor asked for `requested` points,
    /// excluding the truthful strategy itself, deduplicated, in a fixed
    /// order and truncated to the cap.
    pub fn strategies(&self, requested: usize, sigma: f64, mu_grid: &[f64]) -> Vec<Strategy> {
        let mut collects: Vec<CollectRule> = self
            .fractions
            .iter()
            .map(|&rho| CollectRule::Fraction { rho })
            .collect();
        collects.extend(
            self.count_offsets
                .iter()
                .filter(|&&k| k != 0)
                .filter_map(|&k| offset(requested, k))
                .map(|n| CollectRule::Fixed { n }),
        );
        let counts: Vec<usize> = self
            .count_offsets
            .iter()
            .filter_map(|&k| offset(requested, k))
            .collect();

        let mut reports = vec![ReportRule::Identity];
        reports.extend(
            self.shifts
                .iter()
                .filter(|&&b| b != 0.0)
                .map(|&b| ReportRule::ShiftMean { b: b * sigma }),
        );
        reports.extend(
            self.scales
                .iter()
                .filter(|&&g| g != 1.0)
                .map(|&gamma| ReportRule::ScaleAroundMean { gamma }),
        );
        for &count in &counts {
            reports.push(ReportRule::RepeatSampleMean { count });
            reports.push(ReportRule::ReplaceWithMeanCopies { count });
            reports.push(ReportRule::TruncateTo { count });
        }

        let mut out: Vec<Strategy> = Vec::new();
        let mut push = |s: Strategy| {
            if s != Strategy::truthful() && !out.contains(&s) {
                out.push(s);
            }
        };
        for c in &collects {
            for r in &reports {
                push(Strategy::new(c.clone(), r.clone()));
            }
        }
        if self.fabrication {
            for &count in &counts {
                for &mu0 in mu_grid {
                    push(Strategy::new(
                        CollectRule::Fixed { n: 0 },
                        ReportRule::FabricateNormal { mu0, count },
                    ));
                }
            }
        }
        out.truncate(self.cap_per_contributor);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEntry {
    pub contributor: usize,
    pub strategy: Strategy,
    pub label: String,
    pub worst_utility: f64,
    pub worst_mu: f64,
    pub truthful_utility: f64,
    /// Truthful minus worst-case deviant utility.
    pub margin: f64,
    /// Combined standard error; zero on the closed-form path.
    pub std_err: f64,
    pub pass: bool,
}

/// Collected-amount check: with an exact-count, mean-preserving report the
/// utility as a function of the collected amount must peak at the request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityCheck {
    pub contributor: usize,
    pub requested: usize,
    pub utilities: Vec<f64>,
    pub argmax: usize,
    /// `σ·sqrt(d_i/c_i)`, the continuous maximiser.
    pub stationary_point: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub scope: String,
    pub method: UtilityMethod,
    pub mu_grid: Vec<f64>,
    pub entries: Vec<DeviationEntry>,
    pub concavity: Vec<ConcavityCheck>,
    pub deviations_per_contributor: Vec<usize>,
    pub failures: usize,
    pub pass: bool,
}

pub fn concavity_check(mech: &Mechanism, i: usize) -> Result<ConcavityCheck> {
    let requested = mech.requests().amounts[i];
    let market = mech.market();
    let utilities = (1..=2 * requested)
        .map(|n| {
            let s = Strategy::new(
                CollectRule::Fixed { n },
                ReportRule::ReplaceWithMeanCopies { count: requested },
            );
            utility_closed_form(mech, i, &s, 0.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    let argmax = utilities
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, &u)| {
            if u > best.1 {
                (k, u)
            } else {
                best
            }
        })
        .0
        + 1;
    let stationary_point = market.sigma() * (mech.penalty(i) / market.costs[i]).sqrt();
    let pass =
        argmax == requested && (stationary_point - requested as f64).abs() <= CLOSED_FORM_TOL;
    Ok(ConcavityCheck {
        contributor: i,
        requested,
        utilities,
        argmax,
        stationary_point,
        pass,
    })
}

pub fn icc_sweep(
    mech: &Mechanism,
    grid: &DeviationGrid,
    mu_grid: &MuGrid,
    method: UtilityMethod,
    exec: Execution,
) -> Result<DeviationReport> {
    grid.validate()?;
    mu_grid.validate()?;
    let sigma = mech.market().sigma();
    let mus = mu_grid.values(sigma);

    let mut tasks: Vec<(usize, Strategy)> = Vec::new();
    let mut per_contributor = Vec::new();
    for i in 0..2 {
        let list = grid.strategies(mech.requests().amounts[i], sigma, &mus);
        per_contributor.push(list.len());
        tasks.extend(list.into_iter().map(|s| (i, s)));
    }
    let truthful = [
        worst_case_utility(mech, 0, &Strategy::truthful(), &mus, method, u64::MAX)?,
        worst_case_utility(mech, 1, &Strategy::truthful(), &mus, method, u64::MAX - 1)?,
    ];

    let indexed: Vec<(usize, &(usize, Strategy))> = tasks.iter().enumerate().collect();
    let entries = exec
        .map_slice(&indexed, |&(k, (i, s))| -> Result<DeviationEntry> {
            let worst = worst_case_utility(mech, *i, s, &mus, method, k as u64)?;
            let t = truthful[*i];
            let margin = t.utility - worst.utility;
            let std_err = t.std_err.hypot(worst.std_err);
            let pass = match method {
                UtilityMethod::ClosedForm => margin >= -CLOSED_FORM_TOL,
                UtilityMethod::MonteCarlo { .. } => margin >= -SE_MULTIPLIER * std_err,
            };
            Ok(DeviationEntry {
                contributor: *i,
                label: s.label(),
                strategy: s.clone(),
                worst_utility: worst.utility,
                worst_mu: worst.mu,
                truthful_utility: t.utility,
                margin,
                std_err,
                pass,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let concavity = (0..2)
        .map(|i| concavity_check(mech, i))
        .collect::<Result<Vec<_>>>()?;
    let failures =
        entries.iter().filter(|e| !e.pass).count() + concavity.iter().filter(|c| !c.pass).count();
    Ok(DeviationReport {
        scope: SCOPE_NOTE.to_string(),
        method,
        mu_grid: mus,
        entries,
        concavity,
        deviations_per_contributor: per_contributor,
        failures,
        pass: failures == 0,
    })
}

impl DeviationReport {
    pub fn failing(&self) -> impl Iterator<Item = &DeviationEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }

    /// Plain-text table, one line per deviation.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.scope);
        let _ = writeln!(
            s,
            "# mu grid: {} points on [{}, {}]",
            self.mu_grid.len(),
            self.mu_grid.first().copied().unwrap_or(0.0),
            self.mu_grid.last().copied().unwrap_or(0.0)
        );
        let _ = writeln!(
            s,
            "{:<3} {:<64} {:>14} {:>8} {:>14} {:>14} {:>10} verdict",
            "i", "strategy", "worst_utility", "worst_mu", "truthful", "margin", "std_err"
        );
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{:<3} {:<64} {:>14.9} {:>8.3} {:>14.9} {:>14.9} {:>10.2e} {}",
                e.contributor + 1,
                e.label,
                e.worst_utility,
                e.worst_mu,
                e.truthful_utility,
                e.margin,
                e.std_err,
                if e.pass { "pass" } else { "FAIL" }
            );
        }
        for c in &self.concavity {
            let _ = writeln!(
                s,
                "concavity contributor {}: requested {} argmax {} stationary point {:.12} {}",
                c.contributor + 1,
                c.requested,
                c.argmax,
                c.stationary_point,
                if c.pass { "pass" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            s,
            "deviations per contributor: {:?}; failures: {}; overall: {}",
            self.deviations_per_contributor,
            self.failures,
            if self.pass { "pass" } else { "FAIL" }
        );
        s
    }
}
