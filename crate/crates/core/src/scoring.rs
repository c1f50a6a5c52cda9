//! Scoring-rule objectives for the normal nonlinear model: the log-score
//! (negative log-likelihood) and the Tsallis score, with analytic gradients
//! in θ = (β, σ²).
//!
//! For a normal density with residual r and variance v the per-observation
//! Tsallis score has the closed form
//!
//! ```text
//! S(y; θ) = (2πv)^(−α/2) · [ α/√γ − γ·exp(−α r² / (2v)) ],   α = γ − 1,
//! ```
//!
//! since ∫ f^γ dy = γ^(−1/2) (2πv)^(−α/2). The score tends to a constant as
//! |r| → ∞, which is where its robustness comes from.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RegressionModel, Theta};
use crate::numeric::pairwise_sum;

/// Robustness exponent of the Tsallis score. γ > 1 strictly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsallisConfig {
    gamma: f64,
}

impl TsallisConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gamma must be greater than 1, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Density power divergence index α = γ − 1.
    pub fn alpha(&self) -> f64 {
        self.gamma - 1.0
    }
}

impl Default for TsallisConfig {
    fn default() -> Self {
        Self { gamma: 1.5 }
    }
}

/// Which scoring rule a fit minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    LogScore,
    Tsallis(TsallisConfig),
}

impl Objective {
    pub fn tsallis(gamma: f64) -> Result<Self> {
        Ok(Objective::Tsallis(TsallisConfig::new(gamma)?))
    }

    /// α = γ − 1, zero for the log-score.
    pub fn alpha(&self) -> f64 {
        match self {
            Objective::LogScore => 0.0,
            Objective::Tsallis(cfg) => cfg.alpha(),
        }
    }

    /// Factor between the score gradient s and the normalized estimating
    /// function ψ = s / scale: γ(γ − 1) for Tsallis, 1 for the log-score.
    pub fn score_scale(&self) -> f64 {
        match self {
            Objective::LogScore => 1.0,
            Objective::Tsallis(cfg) => cfg.alpha() * cfg.gamma(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Objective::LogScore => "mle".to_string(),
            Objective::Tsallis(cfg) => format!("tsallis(gamma={})", cfg.gamma()),
        }
    }
}

/// Per-observation log-score −log f(y; θ).
pub fn log_score_obs(residual: f64, sigma2: f64) -> f64 {
    0.5 * (2.0 * PI * sigma2).ln() + residual * residual / (2.0 * sigma2)
}

/// Per-observation Tsallis score from its closed form.
pub fn tsallis_score_obs(residual: f64, sigma2: f64, cfg: &TsallisConfig) -> f64 {
    let (g, a) = (cfg.gamma(), cfg.alpha());
    let scale = (2.0 * PI * sigma2).powf(-0.5 * a);
    let w = (-a * residual * residual / (2.0 * sigma2)).exp();
    scale * (a / g.sqrt() - g * w)
}

pub fn score_obs(residual: f64, sigma2: f64, objective: &Objective) -> f64 {
    match objective {
        Objective::LogScore => log_score_obs(residual, sigma2),
        Objective::Tsallis(cfg) => tsallis_score_obs(residual, sigma2, cfg),
    }
}

/// Per-observation gradient factors: returns (g_mu, g_sigma2) such that
/// ∂S/∂β = g_mu · ∂μ/∂β and ∂S/∂σ² = g_sigma2.
pub fn score_obs_factors(residual: f64, sigma2: f64, objective: &Objective) -> (f64, f64) {
    let r = residual;
    let v = sigma2;
    match objective {
        Objective::LogScore => (-r / v, 0.5 / v - r * r / (2.0 * v * v)),
        Objective::Tsallis(cfg) => {
            let (g, a) = (cfg.gamma(), cfg.alpha());
            let scale = (2.0 * PI * v).powf(-0.5 * a);
            let w = (-a * r * r / (2.0 * v)).exp();
            let g_mu = -g * a * scale * r * w / v;
            let g_v = a * scale / (2.0 * v) * (g * w * (1.0 - r * r / v) - a / g.sqrt());
            (g_mu, g_v)
        }
    }
}

/// Total log-score −ℓ(θ) = (n/2)·log(2πσ²) + RSS/(2σ²).
pub fn log_score_total(model: &RegressionModel, theta: &Theta) -> Result<f64> {
    objective_total(model, theta, &Objective::LogScore)
}

/// Total Tsallis score Σ_i S(y_i; θ).
pub fn tsallis_score_total(
    model: &RegressionModel,
    theta: &Theta,
    cfg: &TsallisConfig,
) -> Result<f64> {
    objective_total(model, theta, &Objective::Tsallis(*cfg))
}

pub fn objective_total(model: &RegressionModel, theta: &Theta, objective: &Objective) -> Result<f64> {
    theta.check(model.family())?;
    Ok(total_unchecked(model, theta, objective))
}

pub(crate) fn total_unchecked(model: &RegressionModel, theta: &Theta, objective: &Objective) -> f64 {
    let terms: Vec<f64> = model
        .residuals(theta)
        .iter()
        .map(|&r| score_obs(r, theta.sigma2, objective))
        .collect();
    pairwise_sum(&terms)
}

/// Gradient of the total log-score in (β, σ²).
pub fn log_score_gradient(model: &RegressionModel, theta: &Theta) -> Result<Vec<f64>> {
    objective_gradient(model, theta, &Objective::LogScore)
}

/// Gradient s(θ) = Σ_i ∂S(y_i; θ)/∂θ of the total Tsallis score.
pub fn tsallis_score_gradient(
    model: &RegressionModel,
    theta: &Theta,
    cfg: &TsallisConfig,
) -> Result<Vec<f64>> {
    objective_gradient(model, theta, &Objective::Tsallis(*cfg))
}

pub fn objective_gradient(
    model: &RegressionModel,
    theta: &Theta,
    objective: &Objective,
) -> Result<Vec<f64>> {
    theta.check(model.family())?;
    Ok(gradient_unchecked(model, theta, objective))
}

pub(crate) fn gradient_unchecked(
    model: &RegressionModel,
    theta: &Theta,
    objective: &Objective,
) -> Vec<f64> {
    let family = model.family();
    let params = theta.params(family);
    let p = family.arity();
    let n = model.n();
    // Column-major per-observation contributions so each component is summed pairwise.
    let mut contrib = vec![0.0; (p + 1) * n];
    let mut dmu = vec![0.0; p];
    for (i, (&x, &y)) in model.xs().iter().zip(model.ys()).enumerate() {
        let r = y - family.eval_unchecked(x, &params);
        family.grad_into(x, &params, &mut dmu);
        let (g_mu, g_v) = score_obs_factors(r, theta.sigma2, objective);
        for k in 0..p {
            contrib[k * n + i] = g_mu * dmu[k];
        }
        contrib[p * n + i] = g_v;
    }
    contrib.chunks(n).map(pairwise_sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{CurveFamily, CurveParams};

    #[test]
    fn tsallis_rejects_gamma_at_or_below_one() {
        assert!(TsallisConfig::new(1.0).is_err());
        assert!(TsallisConfig::new(0.9).is_err());
        assert!(TsallisConfig::new(f64::NAN).is_err());
        assert!(TsallisConfig::new(1.0001).is_ok());
    }

    #[test]
    fn log_score_examples() {
        // y = μ with σ² = 1/(2π): both terms vanish.
        assert!(log_score_obs(0.0, 1.0 / (2.0 * PI)).abs() < 1e-15);
        let two = log_score_obs(1.0, 1.0) + log_score_obs(-1.0, 1.0);
        assert!((two - ((2.0 * PI).ln() + 1.0)).abs() < 1e-14);
        assert!((two - 2.8379).abs() < 1e-4);
    }

    #[test]
    fn tsallis_examples() {
        for g in [1.1, 1.5, 2.0, 3.0] {
            let cfg = TsallisConfig::new(g).unwrap();
            let s = tsallis_score_obs(0.0, 1.0 / (2.0 * PI), &cfg);
            assert!((s - (-g + (g - 1.0) / g.sqrt())).abs() < 1e-13);
            // far residual: only the integral term survives
            let far = tsallis_score_obs(1e4, 1.0, &cfg);
            let limit = (g - 1.0) / (g.sqrt() * (2.0 * PI).powf(0.5 * (g - 1.0)));
            assert!((far - limit).abs() < 1e-15);
        }
        let cfg = TsallisConfig::new(2.0).unwrap();
        let s = tsallis_score_obs(1.0, 1.0, &cfg);
        let expected = -2.0 * (2.0 * PI).powf(-0.5) * (-0.5f64).exp()
            + 1.0 / (2f64.sqrt() * (2.0 * PI).sqrt());
        assert!((s - expected).abs() < 1e-15);
        assert!((s - -0.2018).abs() < 1e-4);
    }

    #[test]
    fn zero_residual_contributes_no_beta_gradient() {
        let fam = CurveFamily::LogLogistic4;
        let p = CurveParams::four(-2.0, 0.0, 50.0, 10.0);
        let xs: Vec<f64> = (1..=8).map(|i| f64::from(i) * 3.0).collect();
        let mut ys: Vec<f64> = xs.iter().map(|&x| fam.eval(x, &p).unwrap()).collect();
        for (i, y) in ys.iter_mut().enumerate().skip(1) {
            *y += 0.3 * (i as f64).sin();
        }
        let model = RegressionModel::new(xs.clone(), ys.clone(), fam).unwrap();
        let theta = Theta::from_params(fam, &p, 0.5);
        let obj = Objective::tsallis(1.5).unwrap();
        let full = objective_gradient(&model, &theta, &obj).unwrap();
        // dropping the zero-residual observation leaves the β-block unchanged
        let rest = RegressionModel::new(xs[1..].to_vec(), ys[1..].to_vec(), fam).unwrap();
        let partial = objective_gradient(&rest, &theta, &obj).unwrap();
        for k in 0..4 {
            assert!((full[k] - partial[k]).abs() < 1e-14 * (1.0 + full[k].abs()));
        }
    }

    #[test]
    fn sigma2_gradient_zero_at_rss_over_n_for_log_score() {
        let fam = CurveFamily::LogLogistic4;
        let truth = CurveParams::four(-3.0, 1.0, 40.0, 12.0);
        let xs: Vec<f64> = (1..=25).map(f64::from).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| fam.eval(x, &truth).unwrap() + if i % 2 == 0 { 0.7 } else { -0.4 })
            .collect();
        let model = RegressionModel::new(xs, ys, fam).unwrap();
        let mut theta = Theta::from_params(fam, &truth, 1.0);
        theta.sigma2 = model.rss(&theta) / model.n() as f64;
        let g = log_score_gradient(&model, &theta).unwrap();
        assert!(g[4].abs() < 1e-12);
    }
}
