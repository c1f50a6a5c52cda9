//! Sandwich inference for scoring-rule estimators.
//!
//! K (sensitivity) and J (variability) are per-observation averages for the
//! estimating function ψ = s / (γ(γ − 1)), i.e. the density power divergence
//! scale. Both are block diagonal in (β, σ²):
//!
//! ```text
//! K = diag( ξ_α · Ḡ ,  ς_α )
//! J = diag( ξ_2α · Ḡ , ς_2α − (α²/4) ξ_α² )
//! ξ_α = (2π)^(−α/2) (σ²)^(−(α+2)/2) (1+α)^(−3/2)
//! ς_α = ¼ (2π)^(−α/2) (σ²)^(−(α+4)/2) (2+α²) / (1+α)^(5/2)
//! ```
//!
//! with Ḡ = (1/n) Σ ∂μ_i/∂β ∂μ_i/∂βᵀ. At α = 0 both reduce to the Fisher
//! information of the normal model. The estimator's covariance is V/n with
//! V = K⁻¹ J K⁻ᵀ.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::catalog::CurveFamily;
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::mixture::{mixture_sf, MixtureMethod};
use crate::model::{RegressionModel, Theta};
use crate::numeric::{condition_number, spd_inverse};
use crate::scoring::{objective_gradient, objective_total, Objective};

/// How the σ-powers in ξ_α and ς_α are read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaConvention {
    /// Powers apply to the variance σ², with ξ_α² in J's σ² entry. This
    /// reading agrees with quadrature and Monte Carlo expectations.
    #[default]
    Variance,
    /// The displayed expressions taken at face value: σ is the standard
    /// deviation and J's σ² entry uses ξ_α unsquared. Kept for comparison.
    Literal,
}

impl SigmaConvention {
    fn base(&self, sigma2: f64) -> f64 {
        match self {
            SigmaConvention::Variance => sigma2,
            SigmaConvention::Literal => sigma2.sqrt(),
        }
    }
}

pub fn xi(alpha: f64, sigma2: f64, conv: SigmaConvention) -> f64 {
    (2.0 * PI).powf(-alpha / 2.0)
        * conv.base(sigma2).powf(-(alpha + 2.0) / 2.0)
        * (1.0 + alpha).powf(-1.5)
}

pub fn varsigma(alpha: f64, sigma2: f64, conv: SigmaConvention) -> f64 {
    0.25 * (2.0 * PI).powf(-alpha / 2.0)
        * conv.base(sigma2).powf(-(alpha + 4.0) / 2.0)
        * (2.0 + alpha * alpha)
        / (1.0 + alpha).powf(2.5)
}

/// σ² entry of J.
pub fn j_sigma2_entry(alpha: f64, sigma2: f64, conv: SigmaConvention) -> f64 {
    let x = xi(alpha, sigma2, conv);
    let correction = match conv {
        SigmaConvention::Variance => x * x,
        SigmaConvention::Literal => x,
    };
    varsigma(2.0 * alpha, sigma2, conv) - alpha * alpha / 4.0 * correction
}

/// Average Gram matrix (1/n) Σ ∂μ_i/∂β ∂μ_i/∂βᵀ over the design points.
pub fn gram_matrix(family: CurveFamily, xs: &[f64], beta: &[f64]) -> Result<DMatrix<f64>> {
    let p = family.arity();
    let params = family.beta_to_params(beta);
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut g = vec![0.0; p];
    for &x in xs {
        family.grad_into(x, &params, &mut g);
        let v = DVector::from_column_slice(&g);
        gram += &v * v.transpose();
    }
    gram /= xs.len() as f64;
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularDesign("non-finite curve gradient".into()));
    }
    if gram.clone().cholesky().is_none() || condition_number(&gram) > 1e15 {
        return Err(Error::SingularDesign(format!(
            "Gram matrix of ∂μ/∂β is rank-deficient (condition number {:.3e})",
            condition_number(&gram)
        )));
    }
    Ok(gram)
}

fn block(gram: &DMatrix<f64>, beta_factor: f64, sigma_entry: f64) -> DMatrix<f64> {
    let p = gram.nrows();
    let mut m = DMatrix::<f64>::zeros(p + 1, p + 1);
    m.view_mut((0, 0), (p, p)).copy_from(&(gram * beta_factor));
    m[(p, p)] = sigma_entry;
    m
}

/// Sensitivity matrix K(θ) over the full θ = (β, σ²).
pub fn sensitivity_k(
    model: &RegressionModel,
    theta: &Theta,
    objective: &Objective,
    conv: SigmaConvention,
) -> Result<DMatrix<f64>> {
    theta.check(model.family())?;
    let gram = gram_matrix(model.family(), model.xs(), &theta.beta)?;
    let a = objective.alpha();
    Ok(block(&gram, xi(a, theta.sigma2, conv), varsigma(a, theta.sigma2, conv)))
}

/// Variability matrix J(θ) over the full θ = (β, σ²).
pub fn variability_j(
    model: &RegressionModel,
    theta: &Theta,
    objective: &Objective,
    conv: SigmaConvention,
) -> Result<DMatrix<f64>> {
    theta.check(model.family())?;
    let gram = gram_matrix(model.family(), model.xs(), &theta.beta)?;
    let a = objective.alpha();
    Ok(block(
        &gram,
        xi(2.0 * a, theta.sigma2, conv),
        j_sigma2_entry(a, theta.sigma2, conv),
    ))
}

/// V = K⁻¹ J K⁻ᵀ.
pub fn sandwich_variance(k: &DMatrix<f64>, j: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k_inv = spd_inverse(k).ok_or_else(|| Error::SingularMatrix {
        what: "sensitivity matrix K".into(),
        condition: condition_number(k),
    })?;
    let v = &k_inv * j * k_inv.transpose();
    Ok((&v + v.transpose()) * 0.5)
}

fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
}

/// K, J, V and the Godambe information G = V⁻¹, restricted to the free
/// coordinates of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichMatrices {
    pub names: Vec<String>,
    pub k: Vec<Vec<f64>>,
    pub j: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub godambe: Vec<Vec<f64>>,
    pub convention: SigmaConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub n: usize,
    pub level: f64,
    pub matrices: SandwichMatrices,
    pub parameters: Vec<ParameterEstimate>,
}

impl InferenceReport {
    pub fn parameter(&self, name: &str) -> Option<&ParameterEstimate> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

pub(crate) struct FreeSandwich {
    pub k: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn free_sandwich(
    model: &RegressionModel,
    theta: &Theta,
    objective: &Objective,
    idx: &[usize],
    conv: SigmaConvention,
) -> Result<FreeSandwich> {
    let k = submatrix(&sensitivity_k(model, theta, objective, conv)?, idx);
    let j = submatrix(&variability_j(model, theta, objective, conv)?, idx);
    let v = sandwich_variance(&k, &j)?;
    Ok(FreeSandwich { k, j, v })
}

fn z_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level must be in (0, 1), got {level}")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Standard errors √(V_kk / n) and Wald intervals at `level` for every free
/// coordinate of the fit.
pub fn infer(
    model: &RegressionModel,
    fit: &FitResult,
    conv: SigmaConvention,
    level: f64,
) -> Result<InferenceReport> {
    let z = z_quantile(level)?;
    let idx = fit.free_indices();
    let fs = free_sandwich(model, &fit.theta, &fit.estimator, &idx, conv)?;
    let godambe = spd_inverse(&fs.v).ok_or_else(|| Error::SingularMatrix {
        what: "sandwich variance V".into(),
        condition: condition_number(&fs.v),
    })?;
    let names: Vec<String> = idx
        .iter()
        .map(|&i| fit.coordinate_names()[i].to_string())
        .collect();
    let full = fit.theta.to_vec();
    let n = model.n() as f64;
    let parameters = idx
        .iter()
        .enumerate()
        .map(|(r, &i)| {
            let se = (fs.v[(r, r)] / n).sqrt();
            ParameterEstimate {
                name: names[r].clone(),
                estimate: full[i],
                std_error: se,
                lower: full[i] - z * se,
                upper: full[i] + z * se,
            }
        })
        .collect();
    Ok(InferenceReport {
        n: model.n(),
        level,
        matrices: SandwichMatrices {
            names,
            k: to_rows(&fs.k),
            j: to_rows(&fs.j),
            v: to_rows(&fs.v),
            godambe: to_rows(&godambe),
            convention: conv,
        },
        parameters,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub parameters: Vec<ParameterEstimate>,
}

/// Wald test of θ = θ₀ over all free coordinates of the fit:
/// w = n (θ̃ − θ₀)ᵀ V(θ̃)⁻¹ (θ̃ − θ₀) ~ χ²_d.
pub fn wald_test(model: &RegressionModel, fit: &FitResult, null_theta: &Theta) -> Result<WaldReport> {
    wald_test_subset(model, fit, null_theta, &fit.free_indices())
}

/// Wald test restricted to the coordinates `idx` of θ (indices into (β, σ²)).
pub fn wald_test_subset(
    model: &RegressionModel,
    fit: &FitResult,
    null_theta: &Theta,
    idx: &[usize],
) -> Result<WaldReport> {
    let free = fit.free_indices();
    if idx.is_empty() || idx.iter().any(|i| !free.contains(i)) {
        return Err(Error::InvalidConfig("Wald test coordinates must be free parameters".into()));
    }
    let fs = free_sandwich(model, &fit.theta, &fit.estimator, &free, SigmaConvention::Variance)?;
    let pos: Vec<usize> = idx
        .iter()
        .map(|i| free.iter().position(|f| f == i).expect("checked above"))
        .collect();
    let v_sub = submatrix(&fs.v, &pos);
    let v_inv = spd_inverse(&v_sub).ok_or_else(|| Error::SingularMatrix {
        what: "sandwich variance V".into(),
        condition: condition_number(&v_sub),
    })?;
    let est = fit.theta.to_vec();
    let null = null_theta.to_vec();
    let diff = DVector::from_iterator(idx.len(), idx.iter().map(|&i| est[i] - null[i]));
    let n = model.n() as f64;
    let statistic = (n * diff.dot(&(&v_inv * &diff))).max(0.0);
    let dof = idx.len();
    let chi = ChiSquared::new(dof as f64).expect("positive dof");
    let z = z_quantile(0.95)?;
    let names = fit.coordinate_names();
    let parameters = idx
        .iter()
        .enumerate()
        .map(|(r, &i)| {
            let se = (v_sub[(r, r)] / n).sqrt();
            ParameterEstimate {
                name: names[i].to_string(),
                estimate: est[i],
                std_error: se,
                lower: est[i] - z * se,
                upper: est[i] + z * se,
            }
        })
        .collect();
    Ok(WaldReport {
        statistic,
        dof,
        p_value: chi.sf(statistic),
        parameters,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    /// W_S = 2{S(θ₀) − S(θ̃)}.
    pub statistic: f64,
    pub dof: usize,
    /// Eigenvalues of J K⁻¹ on the scale of the raw score.
    pub eigenvalues: Vec<f64>,
    pub p_value: f64,
    pub method: MixtureMethod,
    pub warnings: Vec<String>,
}

/// Matrices K_S = λK and J_S = λ²J for the raw score s = λψ.
fn score_scale_matrices(fs: &FreeSandwich, objective: &Objective) -> (DMatrix<f64>, DMatrix<f64>) {
    let lambda = objective.score_scale();
    (&fs.k * lambda, &fs.j * (lambda * lambda))
}

/// Eigenvalues of J K⁻¹, computed from the symmetric L⁻¹ J L⁻ᵀ with K = LLᵀ.
pub fn ratio_weights(k: &DMatrix<f64>, j: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = k.clone().cholesky().ok_or_else(|| Error::SingularMatrix {
        what: "sensitivity matrix K".into(),
        condition: condition_number(k),
    })?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or_else(|| Error::SingularMatrix {
        what: "Cholesky factor of K".into(),
        condition: condition_number(&l),
    })?;
    let m = &l_inv * j * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// Scoring-rule ratio statistic with its weighted χ² mixture calibration.
pub fn score_ratio_test(
    model: &RegressionModel,
    fit: &FitResult,
    null_theta: &Theta,
    method: &MixtureMethod,
) -> Result<RatioReport> {
    let objective = fit.estimator;
    let idx = fit.free_indices();
    let statistic = 2.0
        * (objective_total(model, null_theta, &objective)? - objective_total(model, &fit.theta, &objective)?);
    let fs = free_sandwich(model, &fit.theta, &objective, &idx, SigmaConvention::Variance)?;
    let (k_s, j_s) = score_scale_matrices(&fs, &objective);
    let mut warnings = Vec::new();
    let eigenvalues: Vec<f64> = ratio_weights(&k_s, &j_s)?
        .into_iter()
        .map(|e| {
            if e < -1e-10 {
                warnings.push(format!("negative eigenvalue {e:.3e} clamped to 0"));
            }
            e.max(0.0)
        })
        .collect();
    let p_value = mixture_sf(&eigenvalues, statistic, method);
    Ok(RatioReport {
        statistic,
        dof: idx.len(),
        eigenvalues,
        p_value,
        method: *method,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedRatioReport {
    /// A(θ₀)·W_S(θ₀).
    pub statistic: f64,
    pub unadjusted: f64,
    pub rescaling: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Rescaled ratio statistic A·W_S ~ χ²_d with
/// A = sᵀ J⁻¹ s / sᵀ K⁻¹ s, everything evaluated at the null value.
pub fn adjusted_score_ratio(
    model: &RegressionModel,
    fit: &FitResult,
    null_theta: &Theta,
) -> Result<AdjustedRatioReport> {
    let objective = fit.estimator;
    let idx = fit.free_indices();
    let grad = objective_gradient(model, null_theta, &objective)?;
    let s = DVector::from_iterator(idx.len(), idx.iter().map(|&i| grad[i]));
    let norm = s.norm();
    if norm <= 1e-10 {
        return Err(Error::UndefinedRescaling { norm });
    }
    let fs = free_sandwich(model, null_theta, &objective, &idx, SigmaConvention::Variance)?;
    let (k_s, j_s) = score_scale_matrices(&fs, &objective);
    let singular = |what: &str, m: &DMatrix<f64>| Error::SingularMatrix {
        what: what.into(),
        condition: condition_number(m),
    };
    let k_inv = spd_inverse(&k_s).ok_or_else(|| singular("K", &k_s))?;
    let j_inv = spd_inverse(&j_s).ok_or_else(|| singular("J", &j_s))?;
    let rescaling = s.dot(&(&j_inv * &s)) / s.dot(&(&k_inv * &s));
    let unadjusted = 2.0
        * (objective_total(model, null_theta, &objective)? - objective_total(model, &fit.theta, &objective)?);
    let statistic = rescaling * unadjusted;
    let chi = ChiSquared::new(idx.len() as f64).expect("positive dof");
    Ok(AdjustedRatioReport {
        statistic,
        unadjusted,
        rescaling,
        dof: idx.len(),
        p_value: chi.sf(statistic.max(0.0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fisher_limit_at_alpha_zero() {
        for s2 in [0.25, 1.0, 4.0] {
            assert!((xi(0.0, s2, SigmaConvention::Variance) - 1.0 / s2).abs() < 1e-14);
            assert!((varsigma(0.0, s2, SigmaConvention::Variance) - 0.5 / (s2 * s2)).abs() < 1e-14);
            assert_eq!(
                j_sigma2_entry(0.0, s2, SigmaConvention::Variance),
                varsigma(0.0, s2, SigmaConvention::Variance)
            );
        }
    }

    #[test]
    fn xi_at_alpha_one() {
        let v = xi(1.0, 1.0, SigmaConvention::Variance);
        assert!((v - (2.0 * PI).powf(-0.5) * 2f64.powf(-1.5)).abs() < 1e-15);
        assert!((v - 0.1410).abs() < 1e-4);
    }

    #[test]
    fn sandwich_examples() {
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0]));
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![8.0, 2.0]));
        let v = sandwich_variance(&k, &j).unwrap();
        assert!((v[(0, 0)] - 2.0).abs() < 1e-14 && (v[(1, 1)] - 0.5).abs() < 1e-14);
        assert_eq!(v[(0, 1)], 0.0);

        let k = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let v = sandwich_variance(&k, &k).unwrap();
        let k_inv = k.clone().try_inverse().unwrap();
        assert!((v - k_inv).abs().max() < 1e-14);
    }

    #[test]
    fn singular_k_reports_condition() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match sandwich_variance(&k, &k) {
            Err(Error::SingularMatrix { condition, .. }) => assert!(condition > 1e12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equal_matrices_give_unit_weights() {
        let k = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let w = ratio_weights(&k, &k).unwrap();
        assert!(w.iter().all(|v| (v - 1.0).abs() < 1e-12), "{w:?}");
    }

    #[test]
    fn literal_reading_goes_negative() {
        // the unsquared ξ_α makes J's σ² entry negative at γ = 2, σ² = 1
        assert!(j_sigma2_entry(1.0, 1.0, SigmaConvention::Literal) < 0.0);
        assert!(j_sigma2_entry(1.0, 1.0, SigmaConvention::Variance) > 0.0);
    }
}
