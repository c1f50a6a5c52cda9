//! Estimative predictive densities and fitted/forecast curves.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::catalog::CurveFamily;
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::model::Theta;
use crate::numeric::simpson;
use crate::scoring::Objective;

/// Normal predictive density N(μ(z; β̂), σ̂²) at a future design point z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDensity {
    pub z_design: f64,
    pub theta_hat: Theta,
    pub kind: Objective,
    pub mean: f64,
    pub sd: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl PredictiveDensity {
    pub fn pdf(&self, z: f64) -> f64 {
        let u = (z - self.mean) / self.sd;
        (-0.5 * u * u).exp() / (self.sd * (2.0 * PI).sqrt())
    }

    /// Simpson integral of the tabulated density.
    pub fn integral(&self) -> f64 {
        if self.grid.len() < 2 {
            return 0.0;
        }
        simpson(&self.density, self.grid[1] - self.grid[0])
    }
}

pub const DENSITY_GRID_POINTS: usize = 2001;

/// Plug-in density at `z_design` tabulated on μ ± 10σ̂.
pub fn estimative_density(fit: &FitResult, z_design: f64) -> Result<PredictiveDensity> {
    estimative_density_with(fit.family, &fit.theta, fit.estimator, z_design)
}

pub fn estimative_density_with(
    family: CurveFamily,
    theta: &Theta,
    kind: Objective,
    z_design: f64,
) -> Result<PredictiveDensity> {
    if !(z_design > 0.0) || !z_design.is_finite() {
        return Err(Error::Domain(format!("z_design must be positive, got {z_design}")));
    }
    theta.check(family)?;
    let mean = family.eval(z_design, &theta.params(family))?;
    let sd = theta.sigma2.sqrt();
    let n = DENSITY_GRID_POINTS;
    let step = 20.0 * sd / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| mean - 10.0 * sd + step * i as f64).collect();
    let mut out = PredictiveDensity {
        z_design,
        theta_hat: theta.clone(),
        kind,
        mean,
        sd,
        grid,
        density: Vec::new(),
    };
    out.density = out.grid.iter().map(|&z| out.pdf(z)).collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub days: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// First differences μ(x) − μ(x − 1); the first entry is μ(1).
    pub daily: Vec<f64>,
    pub inflection: f64,
    /// Day index with the largest daily value.
    pub peak_day: usize,
    /// Location of the maximum of dμ/dx on the continuous scale.
    pub peak_x: f64,
}

/// Fitted cumulative curve on days 1..=horizon, its daily differences, the
/// inflection parameter e and the peak of the daily curve.
pub fn forecast_curve(fit: &FitResult, horizon: usize) -> Result<Forecast> {
    let family = fit.family;
    let p = fit.params();
    let horizon = horizon.max(1);
    let days: Vec<f64> = (1..=horizon).map(|d| d as f64).collect();
    let cumulative = days
        .iter()
        .map(|&x| family.eval(x, &p))
        .collect::<Result<Vec<_>>>()?;
    let mut daily = Vec::with_capacity(horizon);
    daily.push(cumulative[0]);
    daily.extend(cumulative.windows(2).map(|w| w[1] - w[0]));
    let peak_day = daily
        .iter()
        .enumerate()
        .skip(1)
        .fold((1usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i + 1, v) } else { (bi, bv) })
        .0;
    let peak_x = slope_peak(family, &p, horizon as f64);
    Ok(Forecast {
        days,
        cumulative,
        daily,
        inflection: p.e,
        peak_day,
        peak_x,
    })
}

fn slope(family: CurveFamily, p: &crate::catalog::CurveParams, x: f64) -> f64 {
    let h = 1e-5 * x.max(1.0);
    (family.eval_unchecked(x + h, p) - family.eval_unchecked(x - h, p)) / (2.0 * h)
}

/// Coarse scan followed by golden-section refinement of dμ/dx on (0, upper].
fn slope_peak(family: CurveFamily, p: &crate::catalog::CurveParams, upper: f64) -> f64 {
    let upper = upper.max(p.e * 3.0);
    let steps = 4000;
    let h = upper / steps as f64;
    let (mut best_i, mut best_v) = (1, f64::NEG_INFINITY);
    for i in 1..=steps {
        let v = slope(family, p, i as f64 * h);
        if v > best_v {
            best_i = i;
            best_v = v;
        }
    }
    let (mut a, mut b) = ((best_i as f64 - 1.0) * h, (best_i as f64 + 1.0) * h);
    a = a.max(1e-3 * h);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if slope(family, p, x1) > slope(family, p, x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    0.5 * (a + b)
}
