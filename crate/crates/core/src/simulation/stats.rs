use serde::{Deserialize, Serialize};

/// Running first and second moments of a sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(mut self, other: &Moments) -> Moments {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Standard error of the mean (population variance over `count`).
    pub fn std_err(&self) -> f64 {
        let n = self.count as f64;
        let mean = self.mean();
        ((self.sum_sq / n - mean * mean).max(0.0) / n).sqrt()
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean(),
            std_err: self.std_err(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    /// `|mean − target| <= k · std_err`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_err
    }
}

/// Replications per independently seeded batch.
pub const BATCH: usize = 1_000;

/// Splits `reps` into `(batch index, size)` chunks of at most [`BATCH`].
pub fn batches(reps: usize) -> Vec<(usize, usize)> {
    (0..reps.div_ceil(BATCH))
        .map(|b| (b, BATCH.min(reps - b * BATCH)))
        .collect()
}
