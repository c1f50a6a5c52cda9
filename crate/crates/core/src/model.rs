//! The nonlinear normal regression model y = μ(x, β) + ε, ε ~ N(0, σ²).

use serde::{Deserialize, Serialize};

use crate::catalog::{CurveFamily, CurveParams};
use crate::error::{Error, Result};

/// Full parameter vector θ = (β, σ²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    /// Curve parameters in the family's `param_names` order.
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

impl Theta {
    pub fn new(beta: Vec<f64>, sigma2: f64) -> Self {
        Self { beta, sigma2 }
    }

    pub fn from_params(family: CurveFamily, params: &CurveParams, sigma2: f64) -> Self {
        Self::new(family.params_to_beta(params), sigma2)
    }

    pub fn params(&self, family: CurveFamily) -> CurveParams {
        family.beta_to_params(&self.beta)
    }

    /// θ flattened as (β, σ²).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.sigma2);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let (beta, last) = v.split_at(v.len() - 1);
        Self::new(beta.to_vec(), last[0])
    }

    pub fn dim(&self) -> usize {
        self.beta.len() + 1
    }

    pub(crate) fn check(&self, family: CurveFamily) -> Result<()> {
        if self.beta.len() != family.arity() {
            return Err(Error::Domain(format!(
                "{} expects {} curve parameters, got {}",
                family,
                family.arity(),
                self.beta.len()
            )));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::Domain(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        let bounds = family.param_bounds();
        for ((name, v), (lo, hi)) in family.param_names().iter().zip(&self.beta).zip(bounds) {
            let inside = if lo == 0.0 { *v > lo } else { *v >= lo } && *v <= hi;
            if !inside || !v.is_finite() {
                return Err(Error::Domain(format!("{name} = {v} is out of bounds")));
            }
        }
        Ok(())
    }
}

/// Observations (x_i, y_i) with their mean-function family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    xs: Vec<f64>,
    ys: Vec<f64>,
    family: CurveFamily,
}

impl RegressionModel {
    /// Requires strictly increasing positive x and n ≥ p + 1.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, family: CurveFamily) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DegenerateData(format!(
                "{} x values but {} y values",
                xs.len(),
                ys.len()
            )));
        }
        let p = family.arity();
        if xs.len() < p + 1 {
            return Err(Error::DegenerateData(format!(
                "{family} needs at least {} observations, got {}",
                p + 1,
                xs.len()
            )));
        }
        if let Some(x) = xs.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
            return Err(Error::Domain(format!("x must be positive, got {x}")));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("x values must be strictly increasing".into()));
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::Domain("responses must be finite".into()));
        }
        Ok(Self { xs, ys, family })
    }

    /// Day-indexed model: x = 1, 2, …, n.
    pub fn from_days(ys: Vec<f64>, family: CurveFamily) -> Result<Self> {
        let xs = (1..=ys.len()).map(|i| i as f64).collect();
        Self::new(xs, ys, family)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn family(&self) -> CurveFamily {
        self.family
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    /// Same design, new responses.
    pub fn with_ys(&self, ys: Vec<f64>) -> Result<Self> {
        Self::new(self.xs.clone(), ys, self.family)
    }

    pub fn residuals(&self, theta: &Theta) -> Vec<f64> {
        let p = theta.params(self.family);
        self.xs
            .iter()
            .zip(&self.ys)
            .map(|(&x, &y)| y - self.family.eval_unchecked(x, &p))
            .collect()
    }

    pub fn rss(&self, theta: &Theta) -> f64 {
        crate::numeric::pairwise_sum(
            &self
                .residuals(theta)
                .iter()
                .map(|r| r * r)
                .collect::<Vec<_>>(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_designs() {
        let fam = CurveFamily::LogLogistic4;
        assert!(RegressionModel::new(vec![1.0, 2.0], vec![1.0, 2.0], fam).is_err());
        let xs = vec![1.0, 2.0, 2.0, 4.0, 5.0];
        assert!(RegressionModel::new(xs, vec![0.0; 5], fam).is_err());
        let xs = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        assert!(RegressionModel::new(xs, vec![0.0; 5], fam).is_err());
        assert!(RegressionModel::from_days(vec![1.0; 5], fam).is_ok());
    }

    #[test]
    fn theta_bounds() {
        let fam = CurveFamily::LogLogistic5;
        assert!(Theta::new(vec![-1.0, 0.0, 1.0, 2.0, 1.0], 1.0).check(fam).is_ok());
        assert!(Theta::new(vec![-1.0, 0.0, 1.0, 0.0, 1.0], 1.0).check(fam).is_err());
        assert!(Theta::new(vec![-1.0, 0.0, 1.0, 2.0, -1.0], 1.0).check(fam).is_err());
        assert!(Theta::new(vec![-1.0, 0.0, 1.0, 2.0, 1.0], 0.0).check(fam).is_err());
        assert!(Theta::new(vec![-1.0, 0.0, 1.0, 2.0], 1.0).check(fam).is_err());
    }
}
