//! Scoring-rule estimation: the Tsallis estimator θ̃ and the MLE θ̂.
//!
//! The optimizer works on an internal parameterization in which positivity is
//! structural: `e`, `f` and σ² enter through their logarithms and the
//! asymptotes are rescaled by the starting response range. For the log-score
//! σ² is profiled out (σ̂² = RSS/n) and only β is searched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{CurveFamily, CurveParams};
use crate::error::{Error, Result};
use crate::model::{RegressionModel, Theta};
use crate::optimize::{minimize, MinimizerSettings, Problem, TracePoint};
use crate::scoring::{
    gradient_unchecked, objective_total, score_obs, score_obs_factors, total_unchecked, Objective,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Iteration cap for the quasi-Newton stage.
    pub max_iter: usize,
    /// Relative gradient tolerance: ‖∇f‖∞ ≤ tol·(1 + |f|).
    pub tol: f64,
    pub simplex_iters: usize,
    pub newton_iters: usize,
    /// Extra starts perturbed by ±20% around the self-start values.
    pub multistart: usize,
    pub seed: u64,
    /// Optional fixed values over the full θ = (β, σ²); `None` means free.
    #[serde(default)]
    pub fixed: Vec<Option<f64>>,
    /// Constrain the fit to d ≥ c.
    #[serde(default)]
    pub monotone: bool,
    /// Overrides the self-start curve parameters.
    #[serde(default)]
    pub start: Option<CurveParams>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            tol: 1e-8,
            simplex_iters: 600,
            newton_iters: 3,
            multistart: 0,
            seed: 20200404,
            fixed: Vec::new(),
            monotone: false,
            start: None,
        }
    }
}

impl FitOptions {
    /// Fix coordinate `index` of θ = (β, σ²) at `value`.
    pub fn fix(mut self, dim: usize, index: usize, value: f64) -> Self {
        if self.fixed.len() != dim {
            self.fixed = vec![None; dim];
        }
        self.fixed[index] = Some(value);
        self
    }

    fn fixed_for(&self, dim: usize) -> Result<Vec<Option<f64>>> {
        if self.fixed.is_empty() {
            return Ok(vec![None; dim]);
        }
        if self.fixed.len() != dim {
            return Err(Error::InvalidConfig(format!(
                "fixed mask has {} entries, θ has {dim}",
                self.fixed.len()
            )));
        }
        Ok(self.fixed.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: CurveFamily,
    pub estimator: Objective,
    pub theta: Theta,
    /// Scoring rule at the optimum: −ℓ(θ̂) or the total Tsallis score.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Gradient norm of the minimized function in internal coordinates.
    pub gradient_norm: f64,
    pub tolerance: f64,
    pub n: usize,
    /// Fixed coordinates of θ; inference runs over the free ones.
    pub fixed: Vec<Option<f64>>,
    pub start: Theta,
    pub trace: Vec<TracePoint>,
}

impl FitResult {
    pub fn params(&self) -> CurveParams {
        self.theta.params(self.family)
    }

    /// Indices of the free coordinates of θ.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.theta.dim()).filter(|&i| self.fixed[i].is_none()).collect()
    }

    /// Names of θ's coordinates: the curve parameters followed by `sigma2`.
    pub fn coordinate_names(&self) -> Vec<&'static str> {
        let mut v = self.family.param_names().to_vec();
        v.push("sigma2");
        v
    }
}

#[derive(Debug, Clone, Copy)]
enum Coord {
    Linear(f64),
    Log,
}

impl Coord {
    fn to_internal(self, v: f64) -> f64 {
        match self {
            Coord::Linear(s) => v / s,
            Coord::Log => v.ln(),
        }
    }

    fn to_natural(self, z: f64) -> f64 {
        match self {
            Coord::Linear(s) => z * s,
            Coord::Log => z.exp(),
        }
    }

    /// dθ/dz at natural value `v`.
    fn jacobian(self, v: f64) -> f64 {
        match self {
            Coord::Linear(s) => s,
            Coord::Log => v,
        }
    }
}

struct FitProblem<'a> {
    model: &'a RegressionModel,
    objective: Objective,
    coords: Vec<Coord>,
    base: Vec<f64>,
    free: Vec<usize>,
    monotone: bool,
}

impl FitProblem<'_> {
    fn theta(&self, z: &[f64]) -> Vec<f64> {
        let mut full = self.base.clone();
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = self.coords[i].to_natural(z[k]);
        }
        full
    }

    fn internal(&self, full: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&i| self.coords[i].to_internal(full[i]))
            .collect()
    }

    fn admissible(&self, full: &[f64]) -> bool {
        if full.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let p = self.model.family().arity();
        if full[3] <= 0.0 || full[p] <= 0.0 || (p == 5 && full[4] <= 0.0) {
            return false;
        }
        !(self.monotone && full[2] < full[1])
    }
}

impl Problem for FitProblem<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        let full = self.theta(z);
        if !self.admissible(&full) {
            return f64::INFINITY;
        }
        let v = total_unchecked(self.model, &Theta::from_slice(&full), &self.objective);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let full = self.theta(z);
        let g = gradient_unchecked(self.model, &Theta::from_slice(&full), &self.objective);
        self.free
            .iter()
            .map(|&i| g[i] * self.coords[i].jacobian(full[i]))
            .collect()
    }

    /// Each residual y − μ carries an absolute rounding error of about
    /// ε·(|y| + |μ|), which moves the total by |∂S/∂μ| times that.
    fn value_noise(&self, z: &[f64]) -> f64 {
        let full = self.theta(z);
        let theta = Theta::from_slice(&full);
        let family = self.model.family();
        let params = theta.params(family);
        self.model
            .xs()
            .iter()
            .zip(self.model.ys())
            .map(|(&x, &y)| {
                let mu = family.eval_unchecked(x, &params);
                let r = y - mu;
                let (g_mu, _) = score_obs_factors(r, theta.sigma2, &self.objective);
                f64::EPSILON * (g_mu.abs() * (y.abs() + mu.abs()) + score_obs(r, theta.sigma2, &self.objective).abs())
            })
            .sum()
    }
}

/// Minimizes the chosen scoring rule. Returns `Error::NonConvergence`, which
/// carries the partial result and its trace, when the gradient test fails.
pub fn fit(model: &RegressionModel, objective: Objective, options: &FitOptions) -> Result<FitResult> {
    let family = model.family();
    let p = family.arity();
    let fixed = options.fixed_for(p + 1)?;
    if let Objective::Tsallis(cfg) = objective {
        // revalidate in case the config was deserialized
        crate::scoring::TsallisConfig::new(cfg.gamma())?;
    }

    let start_params = match options.start {
        Some(s) => s,
        None => family.self_start(model.xs(), model.ys())?,
    };
    let mut beta0 = family.params_to_beta(&start_params);
    for (k, b) in beta0.iter_mut().enumerate() {
        if let Some(v) = fixed[k] {
            *b = v;
        }
    }
    let probe = Theta::new(beta0.clone(), 1.0);
    let rss0 = model.rss(&probe);
    let mean_sq = model.ys().iter().map(|y| y * y).sum::<f64>() / model.n() as f64;
    let sigma2_0 = fixed[p].unwrap_or_else(|| (rss0 / model.n() as f64).max(1e-12 * mean_sq.max(1e-300)));

    let starts = multistart_points(&beta0, &fixed, options);
    let results: Vec<Result<FitResult>> = if starts.len() > 1 {
        starts
            .par_iter()
            .map(|b| fit_from(model, objective, options, &fixed, b, sigma2_0))
            .collect()
    } else {
        vec![fit_from(model, objective, options, &fixed, &starts[0], sigma2_0)]
    };

    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for r in results {
        match r {
            Ok(fr) => {
                best = Some(match best {
                    None => fr,
                    Some(cur) => pick_better(cur, fr),
                })
            }
            Err(e) => last_err = Some(e),
        }
    }
    let best = match best {
        Some(b) => b,
        None => return Err(last_err.expect("at least one start")),
    };
    if best.converged {
        Ok(best)
    } else {
        Err(Error::NonConvergence {
            iterations: best.iterations,
            gradient_norm: best.gradient_norm,
            partial: Box::new(best),
        })
    }
}

/// Maximum likelihood fit (log-score objective).
pub fn fit_mle(model: &RegressionModel, options: &FitOptions) -> Result<FitResult> {
    fit(model, Objective::LogScore, options)
}

fn pick_better(a: FitResult, b: FitResult) -> FitResult {
    // converged beats not converged, then lowest objective, then smallest ‖β‖
    if a.converged != b.converged {
        return if a.converged { a } else { b };
    }
    let diff = a.objective - b.objective;
    if diff.abs() <= 1e-10 {
        let na: f64 = a.theta.beta.iter().map(|v| v * v).sum();
        let nb: f64 = b.theta.beta.iter().map(|v| v * v).sum();
        if nb < na {
            b
        } else {
            a
        }
    } else if diff <= 0.0 {
        a
    } else {
        b
    }
}

fn multistart_points(beta0: &[f64], fixed: &[Option<f64>], options: &FitOptions) -> Vec<Vec<f64>> {
    let mut out = vec![beta0.to_vec()];
    for k in 0..options.multistart {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(k as u64 + 1);
        let b: Vec<f64> = beta0
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if fixed[i].is_some() {
                    v
                } else {
                    v * (1.0 + rng.random_range(-0.2..=0.2))
                }
            })
            .collect();
        out.push(b);
    }
    out
}

fn fit_from(
    model: &RegressionModel,
    objective: Objective,
    options: &FitOptions,
    fixed: &[Option<f64>],
    beta0: &[f64],
    sigma2_0: f64,
) -> Result<FitResult> {
    let family = model.family();
    let p = family.arity();
    let mut base = beta0.to_vec();
    base.push(sigma2_0);
    let start = Theta::from_slice(&base);
    start.check(family)?;

    let range = {
        let r = (base[2] - base[1]).abs();
        if r > 0.0 && r.is_finite() {
            r
        } else {
            base[2].abs().max(1.0)
        }
    };
    let mut coords = vec![Coord::Linear(1.0), Coord::Linear(range), Coord::Linear(range), Coord::Log];
    if p == 5 {
        coords.push(Coord::Log);
    }
    coords.push(Coord::Log);

    // The log-score profile: β-argmin does not depend on σ², so σ² is held at
    // its start value during the search and set to RSS/n afterwards.
    let profile_sigma2 = objective == Objective::LogScore && fixed[p].is_none();
    let free: Vec<usize> = (0..=p)
        .filter(|&i| fixed[i].is_none() && !(profile_sigma2 && i == p))
        .collect();
    if free.is_empty() {
        return Err(Error::InvalidConfig("every parameter is fixed".into()));
    }

    let problem = FitProblem {
        model,
        objective,
        coords,
        base: base.clone(),
        free,
        monotone: options.monotone,
    };
    let z0 = problem.internal(&base);
    let settings = MinimizerSettings {
        simplex_iters: options.simplex_iters,
        max_iter: options.max_iter,
        tol: options.tol,
        newton_iters: options.newton_iters,
    };
    let m = minimize(&problem, &z0, &settings);
    let mut full = problem.theta(&m.z);
    if profile_sigma2 {
        let th = Theta::from_slice(&full);
        full[p] = (model.rss(&th) / model.n() as f64).max(f64::MIN_POSITIVE);
    }
    let theta = Theta::from_slice(&full);
    let value = objective_total(model, &theta, &objective)?;

    Ok(FitResult {
        family,
        estimator: objective,
        theta,
        objective: value,
        converged: m.converged,
        iterations: m.iterations,
        gradient_norm: m.gradient_norm,
        tolerance: options.tol,
        n: model.n(),
        fixed: fixed.to_vec(),
        start,
        trace: m.trace,
    })
}
