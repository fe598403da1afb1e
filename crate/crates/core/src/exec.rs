//! Execution strategy for the data-parallel inner loops (N-sweeps, allocation
//! enumeration, Monte Carlo batches, deviation sweeps).
//!
//! Every parallel path produces results in index order, so reductions are
//! performed sequentially over an ordered `Vec` and outputs are bit-identical
//! to the sequential path regardless of thread scheduling. Without the
//! `parallel` feature, [`Execution::Parallel`] silently runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Maps `f` over `0..len`, returning results in index order.
    pub fn map_indexed<R, F>(self, len: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
            _ => (0..len).map(f).collect(),
        }
    }

    /// Maps `f` over a slice, returning results in slice order.
    pub fn map_slice<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Index of the maximum of `f(i)` over `0..len`, ties resolved toward the
    /// smallest index. `None` values are skipped.
    pub fn argmax_by_index<F>(self, len: usize, f: F) -> Option<(usize, f64)>
    where
        F: Fn(usize) -> Option<f64> + Sync + Send,
    {
        let pick = |a: Option<(usize, f64)>, b: Option<(usize, f64)>| match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    Some(b)
                } else {
                    Some(a)
                }
            }
        };
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..len)
                    .into_par_iter()
                    .map(|i| f(i).map(|v| (i, v)))
                    .reduce(|| None, pick)
            }
            _ => (0..len).map(|i| f(i).map(|v| (i, v))).fold(None, pick),
        }
    }
}

/// SplitMix64 finalizer; derives independent child seeds from a master seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = master;
    for &tag in tags {
        state = splitmix(state ^ splitmix(tag.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    splitmix(state)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
