use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::mechanism::sample_mean;

/// How many points a contributor actually collects given her request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CollectRule {
    Identity,
    Fixed {
        n: usize,
    },
    /// `round(rho · requested)`.
    Fraction {
        rho: f64,
    },
}

impl CollectRule {
    pub fn amount(&self, requested: usize) -> usize {
        match *self {
            CollectRule::Identity => requested,
            CollectRule::Fixed { n } => n,
            CollectRule::Fraction { rho } => (rho.max(0.0) * requested as f64).round() as usize,
        }
    }
}

/// What a contributor submits given the data she collected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ReportRule {
    Identity,
    /// Ignore the collected data and submit `count` draws from `N(mu0, σ²)`.
    FabricateNormal {
        mu0: f64,
        count: usize,
    },
    /// Add `b` to every point.
    ShiftMean {
        b: f64,
    },
    /// Stretch the points around their mean by `gamma`.
    ScaleAroundMean {
        gamma: f64,
    },
    /// Cycle the collected points up to `count` entries, recentred on the
    /// collected mean.
    RepeatSampleMean {
        count: usize,
    },
    /// Submit the first `count` collected points.
    TruncateTo {
        count: usize,
    },
    /// Submit `count` copies of the collected mean.
    ReplaceWithMeanCopies {
        count: usize,
    },
}

/// Gaussian law of the submitted sample mean `A`: `E[A] = offset`, plus
/// `μ` when `tracks_mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanLaw {
    pub count: usize,
    pub tracks_mu: bool,
    pub offset: f64,
    pub variance: f64,
}

impl MeanLaw {
    const EMPTY: MeanLaw = MeanLaw {
        count: 0,
        tracks_mu: false,
        offset: 0.0,
        variance: 0.0,
    };

    fn collected(count: usize, n: usize, sigma2: f64) -> MeanLaw {
        if n == 0 {
            // μ̂(∅) = 0: whatever is built from no data is centred at 0.
            return MeanLaw {
                count,
                ..Self::EMPTY
            };
        }
        MeanLaw {
            count,
            tracks_mu: true,
            offset: 0.0,
            variance: sigma2 / n as f64,
        }
    }

    pub fn mean(&self, mu: f64) -> f64 {
        if self.tracks_mu {
            mu + self.offset
        } else {
            self.offset
        }
    }
}

impl ReportRule {
    pub fn apply<R: Rng + ?Sized>(&self, collected: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
        let mean = sample_mean(collected);
        match *self {
            ReportRule::Identity => collected.to_vec(),
            ReportRule::FabricateNormal { mu0, count } => {
                let normal = Normal::new(mu0, sigma).expect("sigma is finite and positive");
                (0..count).map(|_| normal.sample(rng)).collect()
            }
            ReportRule::ShiftMean { b } => collected.iter().map(|x| x + b).collect(),
            ReportRule::ScaleAroundMean { gamma } => collected
                .iter()
                .map(|x| mean + gamma * (x - mean))
                .collect(),
            ReportRule::RepeatSampleMean { count } => {
                if collected.is_empty() {
                    return vec![0.0; count];
                }
                let cycled: Vec<f64> = collected.iter().cycle().take(count).copied().collect();
                let shift = mean - sample_mean(&cycled);
                cycled.into_iter().map(|x| x + shift).collect()
            }
            ReportRule::TruncateTo { count } => collected.iter().take(count).copied().collect(),
            ReportRule::ReplaceWithMeanCopies { count } => vec![mean; count],
        }
    }

    /// Law of the submitted mean when `n` points are collected from
    /// `N(μ, σ²)`.
    pub fn mean_law(&self, n: usize, sigma2: f64) -> MeanLaw {
        match *self {
            ReportRule::Identity | ReportRule::ScaleAroundMean { .. } => {
                MeanLaw::collected(n, n, sigma2)
            }
            ReportRule::ShiftMean { b } => {
                let law = MeanLaw::collected(n, n, sigma2);
                if n == 0 {
                    law
                } else {
                    MeanLaw { offset: b, ..law }
                }
            }
            ReportRule::FabricateNormal { mu0, count } => {
                if count == 0 {
                    MeanLaw::EMPTY
                } else {
                    MeanLaw {
                        count,
                        tracks_mu: false,
                        offset: mu0,
                        variance: sigma2 / count as f64,
                    }
                }
            }
            ReportRule::RepeatSampleMean { count }
            | ReportRule::ReplaceWithMeanCopies { count } => {
                if count == 0 {
                    MeanLaw::EMPTY
                } else {
                    MeanLaw::collected(count, n, sigma2)
                }
            }
            ReportRule::TruncateTo { count } => {
                let k = count.min(n);
                MeanLaw::collected(k, k, sigma2)
            }
        }
    }
}

/// A contributor's (collection, reporting) rule pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub collect: CollectRule,
    pub report: ReportRule,
}

impl Strategy {
    /// Collect what was requested and submit it unaltered.
    pub fn truthful() -> Self {
        Strategy {
            collect: CollectRule::Identity,
            report: ReportRule::Identity,
        }
    }

    pub fn new(collect: CollectRule, report: ReportRule) -> Self {
        Strategy { collect, report }
    }

    /// Submitted dataset for `requested` points, drawing fresh data from
    /// `N(mu, σ²)`. Returns `(collected count, submission)`.
    pub fn play<R: Rng + ?Sized>(
        &self,
        requested: usize,
        mu: f64,
        sigma: f64,
        rng: &mut R,
    ) -> (usize, Vec<f64>) {
        let n = self.collect.amount(requested);
        let normal = Normal::new(mu, sigma).expect("sigma is finite and positive");
        let collected: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
        (n, self.report.apply(&collected, sigma, rng))
    }

    pub fn label(&self) -> String {
        let c = match self.collect {
            CollectRule::Identity => "collect=identity".to_string(),
            CollectRule::Fixed { n } => format!("collect=fixed({n})"),
            CollectRule::Fraction { rho } => format!("collect=fraction({rho})"),
        };
        let r = match self.report {
            ReportRule::Identity => "report=identity".to_string(),
            ReportRule::FabricateNormal { mu0, count } => {
                format!("report=fabricate(mu0={mu0},count={count})")
            }
            ReportRule::ShiftMean { b } => format!("report=shift({b})"),
            ReportRule::ScaleAroundMean { gamma } => format!("report=scale({gamma})"),
            ReportRule::RepeatSampleMean { count } => format!("report=repeat({count})"),
            ReportRule::TruncateTo { count } => format!("report=truncate({count})"),
            ReportRule::ReplaceWithMeanCopies { count } => format!("report=mean_copies({count})"),
        };
        format!("{c} {r}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn collection_rules() {
        assert_eq!(CollectRule::Identity.amount(4), 4);
        assert_eq!(CollectRule::Fixed { n: 2 }.amount(4), 2);
        assert_eq!(CollectRule::Fraction { rho: 0.75 }.amount(5), 4);
        assert_eq!(CollectRule::Fraction { rho: 0.0 }.amount(5), 0);
        assert_eq!(CollectRule::Fraction { rho: 1.25 }.amount(4), 5);
    }

    #[test]
    fn reports_preserve_the_advertised_count_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = [1.0, 2.0, 6.0];
        let mean = 3.0;
        let check =
            |rule: ReportRule, count: usize, expect_mean: Option<f64>, rng: &mut ChaCha8Rng| {
                let out = rule.apply(&data, 1.0, rng);
                assert_eq!(out.len(), count, "{rule:?}");
                if let Some(m) = expect_mean {
                    assert!((sample_mean(&out) - m).abs() < 1e-12, "{rule:?}");
                }
            };
        check(ReportRule::Identity, 3, Some(mean), &mut rng);
        check(ReportRule::ShiftMean { b: 0.5 }, 3, Some(3.5), &mut rng);
        check(
            ReportRule::ScaleAroundMean { gamma: 3.0 },
            3,
            Some(mean),
            &mut rng,
        );
        check(
            ReportRule::RepeatSampleMean { count: 5 },
            5,
            Some(mean),
            &mut rng,
        );
        check(
            ReportRule::ReplaceWithMeanCopies { count: 2 },
            2,
            Some(mean),
            &mut rng,
        );
        check(ReportRule::TruncateTo { count: 2 }, 2, Some(1.5), &mut rng);
        check(ReportRule::TruncateTo { count: 9 }, 3, Some(mean), &mut rng);
        check(
            ReportRule::FabricateNormal { mu0: 4.0, count: 7 },
            7,
            None,
            &mut rng,
        );
        assert_eq!(
            ReportRule::ReplaceWithMeanCopies { count: 2 }.apply(&[], 1.0, &mut rng),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn mean_laws() {
        let law = ReportRule::ShiftMean { b: 0.5 }.mean_law(4, 2.0);
        assert_eq!((law.count, law.mean(1.0), law.variance), (4, 1.5, 0.5));
        let law = ReportRule::FabricateNormal {
            mu0: -1.0,
            count: 2,
        }
        .mean_law(0, 2.0);
        assert_eq!((law.count, law.mean(3.0), law.variance), (2, -1.0, 1.0));
        let law = ReportRule::Identity.mean_law(0, 2.0);
        assert_eq!((law.count, law.mean(3.0), law.variance), (0, 0.0, 0.0));
        let law = ReportRule::ReplaceWithMeanCopies { count: 3 }.mean_law(0, 2.0);
        assert_eq!((law.count, law.mean(3.0), law.variance), (3, 0.0, 0.0));
        let law = ReportRule::TruncateTo { count: 1 }.mean_law(4, 2.0);
        assert_eq!((law.count, law.variance), (1, 2.0));
    }

    #[test]
    fn strategy_json() {
        let s = Strategy::new(
            CollectRule::Fraction { rho: 0.5 },
            ReportRule::ShiftMean { b: 0.1 },
        );
        let js = serde_json::to_string(&s).unwrap();
        assert_eq!(
            js,
            r#"{"collect":{"rule":"fraction","rho":0.5},"report":{"rule":"shift_mean","b":0.1}}"#
        );
        assert_eq!(serde_json::from_str::<Strategy>(&js).unwrap(), s);
    }
}
