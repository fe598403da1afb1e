//! Gaussian quadrature rules for expectations of `f(|X|)` with `X ~ Normal(0, s²)`.
//!
//! Smooth integrands use Gauss–Hermite. Integrands with kinks or jumps (the
//! piecewise valuation families) are integrated piece by piece against the
//! half-normal density with Gauss–Legendre, which keeps full accuracy across
//! the breakpoints.

use std::f64::consts::{PI, SQRT_2};

pub const DEFAULT_NODES: usize = 64;

/// Nodes and weights of an `n`-point rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss–Hermite rule for the weight `exp(-x²)` on the real line.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1, "quadrature needs at least one node");
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^(-1/4)
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // Orthonormal Hermite recurrence.
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    Rule { nodes, weights }
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    Rule { nodes, weights }
}

/// Precomputed rules used to evaluate `E[f(|X|)]`, `X ~ Normal(0, s²)`.
#[derive(Debug, Clone)]
pub struct Quadrature {
    hermite: Rule,
    legendre: Rule,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self::new(DEFAULT_NODES)
    }
}

impl Quadrature {
    pub fn new(nodes: usize) -> Self {
        Quadrature {
            hermite: gauss_hermite(nodes),
            legendre: gauss_legendre(nodes),
        }
    }

    pub fn nodes(&self) -> usize {
        self.hermite.nodes.len()
    }

    /// `E[f(|X|)]` for smooth `f` via Gauss–Hermite.
    pub fn expect_abs_smooth(&self, s: f64, f: impl Fn(f64) -> f64) -> f64 {
        let total: f64 = self
            .hermite
            .nodes
            .iter()
            .zip(&self.hermite.weights)
            .map(|(&x, &w)| w * f((SQRT_2 * s * x).abs()))
            .sum();
        total / PI.sqrt()
    }

    /// `E[f(|X|)]` for `f` that is smooth between the sorted positive
    /// `breakpoints` and constant (`tail`) beyond the last one.
    pub fn expect_abs_piecewise(
        &self,
        s: f64,
        breakpoints: &[f64],
        tail: f64,
        f: impl Fn(f64) -> f64,
    ) -> f64 {
        let density = |e: f64| {
            let z = e / s;
            2.0 * (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt())
        };
        let mut total = 0.0;
        let mut lo = 0.0;
        for &hi in breakpoints.iter().filter(|&&b| b > 0.0) {
            if hi <= lo {
                continue;
            }
            let (mid, half) = (0.5 * (hi + lo), 0.5 * (hi - lo));
            total += half
                * self
                    .legendre
                    .nodes
                    .iter()
                    .zip(&self.legendre.weights)
                    .map(|(&x, &w)| {
                        let e = mid + half * x;
                        w * f(e) * density(e)
                    })
                    .sum::<f64>();
            lo = hi;
        }
        // P(|X| > lo) = erfc(lo / (s √2))
        total + tail * libm::erfc(lo / (s * SQRT_2))
    }
}
