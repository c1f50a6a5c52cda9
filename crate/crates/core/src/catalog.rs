//! Sigmoid mean functions μ(x, β) for growth and dose-response curves.
//!
//! Every family shares the (b, c, d, e) parameterization: `b` is the
//! steepness, `c` and `d` the asymptotes, `e` the location of the curve on
//! the x axis. The five-parameter log-logistic adds an asymmetry exponent `f`.
//! Increasing curves have `b < 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of a sigmoid curve. `f` is fixed at 1 for four-parameter families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    #[serde(default = "one")]
    pub f: f64,
}

fn one() -> f64 {
    1.0
}

impl CurveParams {
    pub fn new(b: f64, c: f64, d: f64, e: f64, f: f64) -> Self {
        Self { b, c, d, e, f }
    }

    /// Four-parameter curve (f = 1).
    pub fn four(b: f64, c: f64, d: f64, e: f64) -> Self {
        Self::new(b, c, d, e, 1.0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.e > 0.0) || !self.e.is_finite() {
            return Err(Error::Domain(format!("e must be positive, got {}", self.e)));
        }
        if !(self.f > 0.0) || !self.f.is_finite() {
            return Err(Error::Domain(format!("f must be positive, got {}", self.f)));
        }
        if !(self.b.is_finite() && self.c.is_finite() && self.d.is_finite()) {
            return Err(Error::Domain("curve parameters must be finite".into()));
        }
        Ok(())
    }
}

/// The curve families available to the fitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CurveFamily {
    #[serde(rename = "log-logistic-5")]
    LogLogistic5,
    #[serde(rename = "log-logistic-4")]
    LogLogistic4,
    /// Weibull type 1: c + (d − c)·exp(−exp(b(log x − log e))).
    #[serde(rename = "weibull-1")]
    Weibull1,
    /// Gompertz: c + (d − c)·exp(−exp(b(x − e))).
    #[serde(rename = "gompertz")]
    Gompertz,
}

pub const ALL_FAMILIES: [CurveFamily; 4] = [
    CurveFamily::LogLogistic5,
    CurveFamily::LogLogistic4,
    CurveFamily::Weibull1,
    CurveFamily::Gompertz,
];

impl fmt::Display for CurveFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CurveFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_FAMILIES
            .iter()
            .copied()
            .find(|fam| fam.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown model `{s}` (expected one of: {})",
                    ALL_FAMILIES.map(|f| f.name()).join(", ")
                ))
            })
    }
}

/// Numerically stable log(1 + exp(t)).
fn softplus(t: f64) -> f64 {
    if t > 35.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

impl CurveFamily {
    pub fn name(&self) -> &'static str {
        match self {
            CurveFamily::LogLogistic5 => "log-logistic-5",
            CurveFamily::LogLogistic4 => "log-logistic-4",
            CurveFamily::Weibull1 => "weibull-1",
            CurveFamily::Gompertz => "gompertz",
        }
    }

    /// Number of free curve parameters p.
    pub fn arity(&self) -> usize {
        match self {
            CurveFamily::LogLogistic5 => 5,
            _ => 4,
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            CurveFamily::LogLogistic5 => &["b", "c", "d", "e", "f"],
            _ => &["b", "c", "d", "e"],
        }
    }

    /// Box constraints per curve parameter, in `param_names` order.
    /// Bounds on `e` and `f` are exclusive.
    pub fn param_bounds(&self) -> Vec<(f64, f64)> {
        let inf = f64::INFINITY;
        let mut bounds = vec![(-inf, inf), (-inf, inf), (-inf, inf), (0.0, inf)];
        if *self == CurveFamily::LogLogistic5 {
            bounds.push((0.0, inf));
        }
        bounds
    }

    pub fn params_to_beta(&self, p: &CurveParams) -> Vec<f64> {
        let mut beta = vec![p.b, p.c, p.d, p.e];
        if *self == CurveFamily::LogLogistic5 {
            beta.push(p.f);
        }
        beta
    }

    pub fn beta_to_params(&self, beta: &[f64]) -> CurveParams {
        debug_assert_eq!(beta.len(), self.arity());
        let f = if *self == CurveFamily::LogLogistic5 {
            beta[4]
        } else {
            1.0
        };
        CurveParams::new(beta[0], beta[1], beta[2], beta[3], f)
    }

    /// Curve value at x. Errors if x ≤ 0 or the parameters leave their bounds.
    pub fn eval(&self, x: f64, p: &CurveParams) -> Result<f64> {
        check_x(x)?;
        p.validate()?;
        Ok(self.eval_unchecked(x, p))
    }

    pub(crate) fn eval_unchecked(&self, x: f64, p: &CurveParams) -> f64 {
        let shape = self.shape(x, p);
        p.c + (p.d - p.c) * shape
    }

    /// The [0, 1] shape factor multiplying (d − c).
    fn shape(&self, x: f64, p: &CurveParams) -> f64 {
        match self {
            CurveFamily::LogLogistic5 | CurveFamily::LogLogistic4 => {
                let f = if *self == CurveFamily::LogLogistic4 { 1.0 } else { p.f };
                let t = p.b * (x.ln() - p.e.ln());
                (-f * softplus(t)).exp()
            }
            CurveFamily::Weibull1 => {
                let t = p.b * (x.ln() - p.e.ln());
                (-t.exp()).exp()
            }
            CurveFamily::Gompertz => {
                let t = p.b * (x - p.e);
                (-t.exp()).exp()
            }
        }
    }

    /// Analytic gradient ∂μ/∂β in `param_names` order.
    pub fn grad(&self, x: f64, p: &CurveParams) -> Result<Vec<f64>> {
        check_x(x)?;
        p.validate()?;
        let mut out = vec![0.0; self.arity()];
        self.grad_into(x, p, &mut out);
        Ok(out)
    }

    pub(crate) fn grad_into(&self, x: f64, p: &CurveParams, out: &mut [f64]) {
        let range = p.d - p.c;
        match self {
            CurveFamily::LogLogistic5 | CurveFamily::LogLogistic4 => {
                let f = if *self == CurveFamily::LogLogistic4 { 1.0 } else { p.f };
                let lx = x.ln() - p.e.ln();
                let t = p.b * lx;
                let sp = softplus(t);
                let shape = (-f * sp).exp();
                // q·(1+q)^(−f−1), evaluated in log space
                let core = (t - (f + 1.0) * sp).exp();
                out[0] = -range * f * core * lx;
                out[1] = 1.0 - shape;
                out[2] = shape;
                out[3] = range * f * p.b * core / p.e;
                if *self == CurveFamily::LogLogistic5 {
                    out[4] = -range * sp * shape;
                }
            }
            CurveFamily::Weibull1 => {
                let lx = x.ln() - p.e.ln();
                let q = (p.b * lx).exp();
                let shape = (-q).exp();
                out[0] = -range * shape * q * lx;
                out[1] = 1.0 - shape;
                out[2] = shape;
                out[3] = range * shape * q * p.b / p.e;
            }
            CurveFamily::Gompertz => {
                let dx = x - p.e;
                let q = (p.b * dx).exp();
                let shape = (-q).exp();
                out[0] = -range * shape * q * dx;
                out[1] = 1.0 - shape;
                out[2] = shape;
                out[3] = range * shape * q * p.b;
            }
        }
    }

    /// Heuristic starting values for a fit.
    ///
    /// `c₀ = min y`, `d₀ = 1.05·max y`, `e₀` is the first x at which the data
    /// cross `(c₀ + d₀)/2` (linear interpolation), `b₀` is the slope of the
    /// linearized responses against log x (x for Gompertz), `f₀ = 1`.
    pub fn self_start(&self, xs: &[f64], ys: &[f64]) -> Result<CurveParams> {
        let p = self.arity();
        if xs.len() != ys.len() {
            return Err(Error::DegenerateData(format!(
                "{} x values but {} y values",
                xs.len(),
                ys.len()
            )));
        }
        let mut distinct: Vec<f64> = xs.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < p {
            return Err(Error::DegenerateData(format!(
                "need at least {p} distinct x values, got {}",
                distinct.len()
            )));
        }
        if let Some(bad) = xs.iter().find(|x| !(**x > 0.0)) {
            return Err(Error::Domain(format!("x must be positive, got {bad}")));
        }
        let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(y_max > y_min) {
            return Err(Error::DegenerateData("responses are constant".into()));
        }

        let c0 = y_min;
        let d0 = 1.05 * y_max;
        let mid = 0.5 * (c0 + d0);
        let increasing = ys[ys.len() - 1] >= ys[0];

        // Linearize: log((d−y)/(y−c)) for log-logistic, log(−log((y−c)/(d−c))) otherwise.
        let mut lin_x = Vec::new();
        let mut lin_y = Vec::new();
        for (&x, &y) in xs.iter().zip(ys) {
            if !(y > c0 && y < d0) {
                continue;
            }
            let z = match self {
                CurveFamily::LogLogistic5 | CurveFamily::LogLogistic4 => ((d0 - y) / (y - c0)).ln(),
                CurveFamily::Weibull1 | CurveFamily::Gompertz => {
                    (-((y - c0) / (d0 - c0)).ln()).ln()
                }
            };
            let u = match self {
                CurveFamily::Gompertz => x,
                _ => x.ln(),
            };
            if z.is_finite() {
                lin_x.push(u);
                lin_y.push(z);
            }
        }
        let fallback_b = if increasing { -1.0 } else { 1.0 };
        let (b0, intercept) = match simple_regression(&lin_x, &lin_y) {
            Some((slope, icpt)) if slope.is_finite() && slope != 0.0 => (slope, Some(icpt)),
            _ => (fallback_b, None),
        };

        let e0 = half_crossing(xs, ys, mid)
            .or_else(|| {
                intercept.map(|a| match self {
                    CurveFamily::Gompertz => -a / b0,
                    _ => (-a / b0).exp(),
                })
            })
            .filter(|e| e.is_finite() && *e > 0.0)
            .unwrap_or_else(|| distinct[distinct.len() / 2]);

        Ok(CurveParams::new(b0, c0, d0, e0, 1.0))
    }
}

fn check_x(x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("x must be positive and finite, got {x}")));
    }
    Ok(())
}

/// First x where the series crosses `level`, by linear interpolation.
fn half_crossing(xs: &[f64], ys: &[f64], level: f64) -> Option<f64> {
    for i in 0..xs.len().saturating_sub(1) {
        let (y0, y1) = (ys[i] - level, ys[i + 1] - level);
        if y0 == 0.0 {
            return Some(xs[i]);
        }
        if y0 * y1 < 0.0 || y1 == 0.0 {
            let t = y0 / (y0 - y1);
            return Some(xs[i] + t * (xs[i + 1] - xs[i]));
        }
    }
    None
}

/// Ordinary least squares line; returns (slope, intercept).
fn simple_regression(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}
