//! Influence functions and per-observation weights.
//!
//! Each influence function comes in two scalings. The proportional form drops
//! constants common to all y; the normalized form is K⁻¹ψ(y; θ) with
//! ψ = s/(γ(γ − 1)) and K the sensitivity matrix of the fitted design.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::CurveFamily;
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::inference::{gram_matrix, varsigma, xi, SigmaConvention};
use crate::model::{RegressionModel, Theta};
use crate::numeric::spd_inverse;
use crate::scoring::{score_obs_factors, Objective, TsallisConfig};

/// Describes the two scalings written next to influence curves.
pub const SCALING_NOTE: &str = "proportional: beta (y-mu)*dmu*exp(-alpha r^2/(2 sigma2)) (log-score: (y-mu)*dmu), \
sigma2 gamma*w*[sigma^-(gamma-3) - (gamma-1)/2*sigma^-(gamma-5)*r^2] - (gamma-1)/(sqrt(gamma)*sigma^(gamma-3)) with sigma the standard deviation \
(log-score: r^2 - sigma2); normalized: K^-1 psi with psi = s/(gamma(gamma-1)) and K averaged over the fitted design";

fn check_point(family: CurveFamily, x: f64, theta: &Theta) -> Result<(f64, Vec<f64>)> {
    theta.check(family)?;
    let p = theta.params(family);
    Ok((family.eval(x, &p)?, family.grad(x, &p)?))
}

/// β-direction influence in proportional form: (y − μ)·∂μ/∂β·w(y) with
/// w = exp(−α(y − μ)²/(2σ²)); the log-score has w ≡ 1.
pub fn influence_beta(
    family: CurveFamily,
    y: f64,
    x: f64,
    theta: &Theta,
    objective: &Objective,
) -> Result<Vec<f64>> {
    let (mu, dmu) = check_point(family, x, theta)?;
    let r = y - mu;
    let w = downweight(r, theta.sigma2, objective.alpha());
    Ok(dmu.iter().map(|g| r * g * w).collect())
}

/// σ²-direction influence in proportional form. For the Tsallis score, with
/// σ the standard deviation:
/// γ·w·[σ^{−(γ−3)} − ((γ−1)/2)·σ^{−(γ−5)}·r²] − (γ−1)/(√γ·σ^{γ−3}).
/// The log-score gives r² − σ².
pub fn influence_sigma2(
    family: CurveFamily,
    y: f64,
    x: f64,
    theta: &Theta,
    objective: &Objective,
) -> Result<f64> {
    let (mu, _) = check_point(family, x, theta)?;
    let r = y - mu;
    Ok(match objective {
        Objective::LogScore => r * r - theta.sigma2,
        Objective::Tsallis(cfg) => {
            let g = cfg.gamma();
            let s = theta.sigma2.sqrt();
            let w = downweight(r, theta.sigma2, cfg.alpha());
            g * w * (s.powf(-(g - 3.0)) - (g - 1.0) / 2.0 * s.powf(-(g - 5.0)) * r * r)
                - (g - 1.0) / (g.sqrt() * s.powf(g - 3.0))
        }
    })
}

fn downweight(r: f64, sigma2: f64, alpha: f64) -> f64 {
    (-alpha * r * r / (2.0 * sigma2)).exp()
}

/// Normalized influence K⁻¹ψ(y; θ) at design point x over all of θ = (β, σ²).
pub struct NormalizedInfluence {
    k_beta_inv: nalgebra::DMatrix<f64>,
    k_sigma2: f64,
    family: CurveFamily,
    theta: Theta,
    objective: Objective,
}

impl NormalizedInfluence {
    pub fn new(model: &RegressionModel, theta: &Theta, objective: &Objective) -> Result<Self> {
        theta.check(model.family())?;
        let a = objective.alpha();
        let conv = SigmaConvention::Variance;
        let gram = gram_matrix(model.family(), model.xs(), &theta.beta)?;
        let k_beta = gram * xi(a, theta.sigma2, conv);
        let k_beta_inv = spd_inverse(&k_beta).ok_or_else(|| {
            Error::SingularDesign("sensitivity β-block is not invertible".into())
        })?;
        Ok(Self {
            k_beta_inv,
            k_sigma2: varsigma(a, theta.sigma2, conv),
            family: model.family(),
            theta: theta.clone(),
            objective: *objective,
        })
    }

    pub fn at(&self, y: f64, x: f64) -> Result<Vec<f64>> {
        let (mu, dmu) = check_point(self.family, x, &self.theta)?;
        let (g_mu, g_v) = score_obs_factors(y - mu, self.theta.sigma2, &self.objective);
        let scale = self.objective.score_scale();
        // ψ points along −s so that a positive residual pulls β̃ up
        let psi_beta = nalgebra::DVector::from_iterator(dmu.len(), dmu.iter().map(|d| -g_mu * d / scale));
        let mut out: Vec<f64> = (&self.k_beta_inv * psi_beta).iter().copied().collect();
        out.push(-g_v / scale / self.k_sigma2);
        Ok(out)
    }
}

/// Grid of response values around μ(x) for tabulating influence curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Half-width in units of the fitted standard deviation.
    pub half_width_sd: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width_sd: 8.0,
            points: 401,
        }
    }
}

impl GridSpec {
    pub fn values(&self, center: f64, sd: f64) -> Vec<f64> {
        let n = self.points.max(2);
        let lo = center - self.half_width_sd * sd;
        let step = 2.0 * self.half_width_sd * sd / (n - 1) as f64;
        (0..n).map(|i| lo + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceCurve {
    pub parameter: String,
    pub x: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub normalized: Vec<f64>,
    pub sup_abs: f64,
    pub normalized_sup_abs: f64,
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Influence curves for every coordinate of θ at design point `x`, over a
/// grid of y centred on μ(x; θ̃).
pub fn influence_curves(
    model: &RegressionModel,
    fit: &FitResult,
    x: f64,
    grid: &GridSpec,
) -> Result<Vec<InfluenceCurve>> {
    let family = model.family();
    let theta = &fit.theta;
    let objective = fit.estimator;
    let (mu, _) = check_point(family, x, theta)?;
    let ys = grid.values(mu, theta.sigma2.sqrt());
    let norm = NormalizedInfluence::new(model, theta, &objective)?;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = ys
        .par_iter()
        .map(|&y| {
            let mut prop = influence_beta(family, y, x, theta, &objective)?;
            prop.push(influence_sigma2(family, y, x, theta, &objective)?);
            Ok((prop, norm.at(y, x)?))
        })
        .collect::<Result<_>>()?;
    Ok(fit
        .coordinate_names()
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let values: Vec<f64> = rows.iter().map(|r| r.0[k]).collect();
            let normalized: Vec<f64> = rows.iter().map(|r| r.1[k]).collect();
            InfluenceCurve {
                parameter: name.to_string(),
                x,
                grid: ys.clone(),
                sup_abs: sup_abs(&values),
                normalized_sup_abs: sup_abs(&normalized),
                values,
                normalized,
            }
        })
        .collect())
}

/// Per-observation downweights exp(−(γ − 1) r_i² / (2σ̃²)) at the fitted θ.
pub fn observation_weights(model: &RegressionModel, fit: &FitResult, cfg: &TsallisConfig) -> Vec<f64> {
    model
        .residuals(&fit.theta)
        .iter()
        .map(|&r| downweight(r, fit.theta.sigma2, cfg.alpha()))
        .collect()
}

/// Residual magnitude at which the weight falls to one half.
pub fn half_weight_residual(sigma2: f64, cfg: &TsallisConfig) -> f64 {
    (sigma2 * 2.0 / cfg.alpha() * 2f64.ln()).sqrt()
}
