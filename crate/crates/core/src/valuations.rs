//! Buyer valuations: error-based valuations `v(e)` and the clean-data value
//! `E[v(|X|)]`, `X ~ Normal(0, σ²/m)`, induced by buying `m` i.i.d. samples.
//!
//! The estimation error of the sample mean does not depend on the true mean,
//! so the clean-data value is a function of `σ²/m` alone.

use std::f64::consts::SQRT_2;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Quadrature;

/// Monotonicity slack when validating computed value tables.
const MONOTONE_SLACK: f64 = 1e-12;

fn default_quadrature() -> &'static Quadrature {
    static QUAD: OnceLock<Quadrature> = OnceLock::new();
    QUAD.get_or_init(Quadrature::default)
}

/// A decreasing function from estimation error to value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ValuationRepr", into = "ValuationRepr")]
pub enum ErrorValuation {
    /// `exp(-e² / (2a²))`.
    ExpQuadratic { a: f64 },
    /// `1` if `e <= t`, else `0`.
    Threshold { t: f64 },
    /// Linear interpolation through `(error, value)` knots sorted by error,
    /// clamped to the end values outside the knot range.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    /// Values on the uniform grid `e_k = k * step`, interpolated linearly and
    /// clamped beyond the grid.
    Tabulated { step: f64, values: Vec<f64> },
}

impl ErrorValuation {
    pub fn validate(&self) -> Result<()> {
        let unit = |field: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(field, format!("value {v} outside [0, 1]")))
            }
        };
        match self {
            ErrorValuation::ExpQuadratic { a } => {
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(Error::config("a", "scale must be finite and > 0"));
                }
            }
            ErrorValuation::Threshold { t } => {
                if !(*t > 0.0) {
                    return Err(Error::config("t", "error bound must be > 0"));
                }
            }
            ErrorValuation::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return Err(Error::config("knots", "at least one knot required"));
                }
                if knots[0].0 < 0.0 {
                    return Err(Error::config("knots", "errors must be >= 0"));
                }
                for w in knots.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(Error::config("knots", "errors must be strictly increasing"));
                    }
                    if w[1].1 > w[0].1 {
                        return Err(Error::config("knots", "values must be non-increasing"));
                    }
                }
                for &(_, v) in knots {
                    unit("knots", v)?;
                }
            }
            ErrorValuation::Tabulated { step, values } => {
                if !(*step > 0.0) {
                    return Err(Error::config("step", "grid step must be > 0"));
                }
                if values.is_empty() {
                    return Err(Error::config("values", "at least one grid value required"));
                }
                if values.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::config("values", "values must be non-increasing"));
                }
                for &v in values {
                    unit("values", v)?;
                }
            }
        }
        Ok(())
    }

    /// Value of achieving estimation error `e`.
    pub fn error_value(&self, e: f64) -> Result<f64> {
        if !(e >= 0.0) {
            return Err(Error::Domain(format!("error must be >= 0, got {e}")));
        }
        Ok(self.eval(e))
    }

    fn eval(&self, e: f64) -> f64 {
        match self {
            ErrorValuation::ExpQuadratic { a } => (-e * e / (2.0 * a * a)).exp(),
            ErrorValuation::Threshold { t } => {
                if e <= *t {
                    1.0
                } else {
                    0.0
                }
            }
            ErrorValuation::PiecewiseLinear { knots } => interpolate(knots.iter().copied(), e),
            ErrorValuation::Tabulated { step, values } => interpolate(
                values
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| (k as f64 * step, v)),
                e,
            ),
        }
    }

    /// Points where the valuation has a kink or jump, plus its own length
    /// scale for smooth families, so quadrature panels resolve its shape.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            ErrorValuation::ExpQuadratic { a } => {
                [0.25, 0.5, 1.0, 2.0, 4.0].map(|k| k * a).to_vec()
            }
            ErrorValuation::Threshold { t } => vec![*t],
            ErrorValuation::PiecewiseLinear { knots } => knots.iter().map(|k| k.0).collect(),
            ErrorValuation::Tabulated { step, values } => {
                (0..values.len()).map(|k| k as f64 * step).collect()
            }
        }
    }

    /// Closed-form clean-data value, for the families that admit one.
    pub fn closed_form_iid(&self, m: usize, sigma2: f64) -> Option<f64> {
        let var = sigma2 / m as f64;
        match self {
            ErrorValuation::ExpQuadratic { a } => Some((1.0 + var / (a * a)).powf(-0.5)),
            // P(|X| <= t) = Φ(t/s) − Φ(−t/s)
            ErrorValuation::Threshold { t } => Some(libm::erf(t / (var.sqrt() * SQRT_2))),
            _ => None,
        }
    }

    /// Clean-data value of `m >= 1` samples, by quadrature regardless of
    /// whether a closed form exists.
    pub fn iid_value_quadrature(&self, m: usize, sigma2: f64, quad: &Quadrature) -> Result<f64> {
        check_samples(m, sigma2)?;
        let s = (sigma2 / m as f64).sqrt();
        // Beyond CUTOFF·s the half-normal mass is below 1e-32.
        const CUTOFF: f64 = 12.0;
        let end = CUTOFF * s;
        let mut breaks: Vec<f64> = self
            .breakpoints()
            .into_iter()
            .chain([0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0].map(|k| k * s))
            .filter(|&b| b > 0.0 && b < end)
            .collect();
        breaks.push(end);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let value = quad.expect_abs_piecewise(s, &breaks, self.eval(end), |e| self.eval(e));
        Ok(value.clamp(0.0, 1.0))
    }

    /// Clean-data value of `m >= 1` samples; closed form when available.
    pub fn iid_value_with(&self, m: usize, sigma2: f64, quad: &Quadrature) -> Result<f64> {
        check_samples(m, sigma2)?;
        match self.closed_form_iid(m, sigma2) {
            Some(v) => Ok(v),
            None => self.iid_value_quadrature(m, sigma2, quad),
        }
    }

    pub fn iid_value(&self, m: usize, sigma2: f64) -> Result<f64> {
        self.iid_value_with(m, sigma2, default_quadrature())
    }
}

fn check_samples(m: usize, sigma2: f64) -> Result<()> {
    if m == 0 {
        return Err(Error::Domain("sample count must be >= 1".into()));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("variance must be > 0, got {sigma2}")));
    }
    Ok(())
}

fn interpolate(points: impl Iterator<Item = (f64, f64)>, e: f64) -> f64 {
    let mut prev: Option<(f64, f64)> = None;
    for (x, v) in points {
        match prev {
            None if e <= x => return v,
            Some((x0, v0)) if e <= x => return v0 + (v - v0) * (e - x0) / (x - x0),
            _ => {}
        }
        prev = Some((x, v));
    }
    prev.map_or(0.0, |p| p.1)
}

/// Free-function form of [`ErrorValuation::error_value`].
pub fn error_value(v: &ErrorValuation, e: f64) -> Result<f64> {
    v.error_value(e)
}

/// Free-function form of [`ErrorValuation::iid_value`].
pub fn iid_value(v: &ErrorValuation, m: usize, sigma2: f64) -> Result<f64> {
    v.iid_value(m, sigma2)
}

/// Clean-data values for `m = 0..=n_max`; entry 0 is the no-data value 0.
pub fn iid_value_table(v: &ErrorValuation, n_max: usize, sigma2: f64) -> Result<Vec<f64>> {
    Valuation::Error(v.clone()).table(n_max, sigma2, default_quadrature())
}

/// How a buyer values data: through an error valuation, or directly as a
/// table of clean-data values indexed by sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ValuationRepr", into = "ValuationRepr")]
pub enum Valuation {
    Error(ErrorValuation),
    /// `values[m]` is the value of `m` samples; `values[0] == 0`. Quantities
    /// past the end take the last entry.
    IidTable(Vec<f64>),
}

impl Valuation {
    pub fn validate(&self) -> Result<()> {
        match self {
            Valuation::Error(v) => v.validate(),
            Valuation::IidTable(values) => {
                if values.first() != Some(&0.0) {
                    return Err(Error::config("values", "iid table must start with 0"));
                }
                if values.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::config("values", "iid table must be non-decreasing"));
                }
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::config(
                        "values",
                        "iid table values must lie in [0, 1]",
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn iid_value(&self, m: usize, sigma2: f64, quad: &Quadrature) -> Result<f64> {
        match self {
            Valuation::Error(v) => v.iid_value_with(m, sigma2, quad),
            Valuation::IidTable(values) => {
                if m == 0 {
                    return Err(Error::Domain("sample count must be >= 1".into()));
                }
                Ok(values[m.min(values.len() - 1)])
            }
        }
    }

    /// Values for `m = 0..=n_max` with entry 0 fixed at 0. Fails if the
    /// computed table is not non-decreasing.
    pub fn table(&self, n_max: usize, sigma2: f64, quad: &Quadrature) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n_max + 1);
        out.push(0.0);
        for m in 1..=n_max {
            out.push(self.iid_value(m, sigma2, quad)?);
        }
        if let Some(m) = out.windows(2).position(|w| w[1] < w[0] - MONOTONE_SLACK) {
            return Err(Error::Domain(format!(
                "clean-data value decreases between m={m} and m={}",
                m + 1
            )));
        }
        Ok(out)
    }

    /// Ex post value of a concrete dataset when the true mean is `mu`.
    pub fn realized_value(&self, dataset: &[f64], mu: f64) -> f64 {
        match self {
            Valuation::Error(_) if dataset.is_empty() => 0.0,
            Valuation::Error(v) => {
                let mean = dataset.iter().sum::<f64>() / dataset.len() as f64;
                v.eval((mean - mu).abs())
            }
            Valuation::IidTable(values) => values[dataset.len().min(values.len() - 1)],
        }
    }
}

impl From<ErrorValuation> for Valuation {
    fn from(v: ErrorValuation) -> Self {
        Valuation::Error(v)
    }
}

/// Flat tagged form shared by both valuation types in config files,
/// e.g. `{"family":"exp_quadratic","a":1.0}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum ValuationRepr {
    ExpQuadratic { a: f64 },
    Threshold { t: f64 },
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    Tabulated { step: f64, values: Vec<f64> },
    IidTable { values: Vec<f64> },
}

impl TryFrom<ValuationRepr> for Valuation {
    type Error = Error;
    fn try_from(r: ValuationRepr) -> Result<Self> {
        let v = match r {
            ValuationRepr::ExpQuadratic { a } => ErrorValuation::ExpQuadratic { a }.into(),
            ValuationRepr::Threshold { t } => ErrorValuation::Threshold { t }.into(),
            ValuationRepr::PiecewiseLinear { knots } => {
                ErrorValuation::PiecewiseLinear { knots }.into()
            }
            ValuationRepr::Tabulated { step, values } => {
                ErrorValuation::Tabulated { step, values }.into()
            }
            ValuationRepr::IidTable { values } => Valuation::IidTable(values),
        };
        v.validate()?;
        Ok(v)
    }
}

impl From<Valuation> for ValuationRepr {
    fn from(v: Valuation) -> Self {
        match v {
            Valuation::Error(e) => e.into(),
            Valuation::IidTable(values) => ValuationRepr::IidTable { values },
        }
    }
}

impl TryFrom<ValuationRepr> for ErrorValuation {
    type Error = Error;
    fn try_from(r: ValuationRepr) -> Result<Self> {
        match Valuation::try_from(r)? {
            Valuation::Error(e) => Ok(e),
            Valuation::IidTable(_) => Err(Error::config(
                "family",
                "iid_table is not an error valuation",
            )),
        }
    }
}

impl From<ErrorValuation> for ValuationRepr {
    fn from(v: ErrorValuation) -> Self {
        match v {
            ErrorValuation::ExpQuadratic { a } => ValuationRepr::ExpQuadratic { a },
            ErrorValuation::Threshold { t } => ValuationRepr::Threshold { t },
            ErrorValuation::PiecewiseLinear { knots } => ValuationRepr::PiecewiseLinear { knots },
            ErrorValuation::Tabulated { step, values } => ValuationRepr::Tabulated { step, values },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Buyer {
    pub id: usize,
    pub valuation: Valuation,
}

/// Buyers, per-sample contributor costs sorted ascending, and the sampling
/// variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub buyers: Vec<Buyer>,
    pub costs: Vec<f64>,
    pub sigma2: f64,
}

impl MarketConfig {
    pub fn new(buyers: Vec<Buyer>, costs: Vec<f64>, sigma2: f64) -> Result<Self> {
        let market = MarketConfig {
            buyers,
            costs,
            sigma2,
        };
        market.validate()?;
        Ok(market)
    }

    /// Builds a market whose buyers carry ids `0..n`.
    pub fn from_valuations(
        valuations: impl IntoIterator<Item = Valuation>,
        costs: Vec<f64>,
        sigma2: f64,
    ) -> Result<Self> {
        let buyers = valuations
            .into_iter()
            .enumerate()
            .map(|(id, valuation)| Buyer { id, valuation })
            .collect();
        Self::new(buyers, costs, sigma2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::config("sigma2", "variance must be finite and > 0"));
        }
        if self.buyers.is_empty() {
            return Err(Error::config("buyers", "at least one buyer required"));
        }
        if self.costs.len() < 2 {
            return Err(Error::config("costs", "at least two contributors required"));
        }
        if self.costs.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::config("costs", "costs must be finite and > 0"));
        }
        if self.costs.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::config(
                "costs",
                "costs must be sorted non-decreasing",
            ));
        }
        let mut ids: Vec<usize> = self.buyers.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("buyers.id", "buyer ids must be unique"));
        }
        for (k, b) in self.buyers.iter().enumerate() {
            b.valuation.validate().map_err(|e| match e {
                Error::Config { field, reason } => {
                    Error::config(format!("buyers[{k}].valuation.{field}"), reason)
                }
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// Clean-data value tables `0..=n_max` for every buyer, in buyer order.
    pub fn value_tables(&self, n_max: usize, quad: &Quadrature) -> Result<Vec<Vec<f64>>> {
        self.buyers
            .iter()
            .map(|b| b.valuation.table(n_max, self.sigma2, quad))
            .collect()
    }
}
