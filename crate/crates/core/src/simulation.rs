//! Monte Carlo studies: the central/contaminated comparison of the MLE and
//! Tsallis predictors, Wald interval coverage, and null calibration of the
//! score-ratio statistics.
//!
//! Every replicate draws from its own ChaCha stream keyed by
//! (seed, study, replicate), so results do not depend on thread scheduling.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{CurveFamily, CurveParams};
use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions};
use crate::inference::{adjusted_score_ratio, infer, score_ratio_test, SigmaConvention};
use crate::mixture::MixtureMethod;
use crate::model::{RegressionModel, Theta};
use crate::scoring::Objective;

/// ε-contamination of the errors: (1 − ε)·N(0, σ²) + ε·N(Δ, σ²), Δ = shift_sd·σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contamination {
    pub epsilon: f64,
    pub shift_sd: f64,
}

impl Default for Contamination {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            shift_sd: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimScenario {
    pub family: CurveFamily,
    pub truth: CurveParams,
    pub sigma2: f64,
    /// Observations per replicate, at days 1..=n.
    pub n: usize,
    pub gamma: f64,
    pub contamination: Contamination,
    /// Prediction point; defaults to n + 1.
    pub z_design: Option<f64>,
    pub reps: usize,
    pub fit_options: FitOptions,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            family: CurveFamily::LogLogistic4,
            truth: CurveParams::four(-5.0, 0.0, 1000.0, 30.0),
            sigma2: 100.0,
            n: 60,
            gamma: 1.5,
            contamination: Contamination::default(),
            z_design: None,
            reps: 1000,
            fit_options: FitOptions::default(),
        }
    }
}

impl SimScenario {
    pub fn z(&self) -> f64 {
        self.z_design.unwrap_or(self.n as f64 + 1.0)
    }

    pub fn theta(&self) -> Theta {
        Theta::from_params(self.family, &self.truth, self.sigma2)
    }

    pub fn tsallis(&self) -> Result<Objective> {
        Objective::tsallis(self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        self.tsallis()?;
        self.theta().check(self.family)?;
        if self.n < self.family.arity() + 2 {
            return Err(Error::InvalidConfig(format!(
                "n = {} is too small for {}",
                self.n, self.family
            )));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be positive".into()));
        }
        let c = self.contamination;
        if !(0.0..1.0).contains(&c.epsilon) || !c.shift_sd.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "contamination needs 0 <= epsilon < 1 and a finite shift, got {c:?}"
            )));
        }
        if !(self.z() > 0.0) {
            return Err(Error::InvalidConfig("z_design must be positive".into()));
        }
        Ok(())
    }

    fn xs(&self) -> Vec<f64> {
        (1..=self.n).map(|i| i as f64).collect()
    }

    fn means(&self) -> Vec<f64> {
        self.xs()
            .iter()
            .map(|&x| self.family.eval_unchecked(x, &self.truth))
            .collect()
    }

    fn draw(&self, regime: Regime, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let sd = self.sigma2.sqrt();
        let noise = Normal::new(0.0, sd).expect("positive sd");
        let coin = Uniform::new(0.0, 1.0).expect("unit interval");
        let shift = self.contamination.shift_sd * sd;
        self.means()
            .into_iter()
            .map(|mu| {
                let e = noise.sample(rng);
                match regime {
                    Regime::Central => mu + e,
                    Regime::Contaminated => {
                        let hit = coin.sample(rng) < self.contamination.epsilon;
                        mu + e + if hit { shift } else { 0.0 }
                    }
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Central,
    Contaminated,
}

const STUDY_CENTRAL: u64 = 1;
const STUDY_CONTAMINATED: u64 = 2;
const STUDY_COVERAGE: u64 = 3;
const STUDY_RATIO: u64 = 4;

fn replicate_rng(seed: u64, study: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((study << 32) | rep as u64);
    rng
}

fn check_exclusions(regime: &str, excluded: usize, reps: usize) -> Result<()> {
    if excluded * 100 > reps {
        return Err(Error::ExcessiveExclusions {
            regime: regime.to_string(),
            excluded,
            reps,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme values within 1.5 IQR of the quartiles.
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub outliers: usize,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxplotSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let (q1, q3) = (quantile(&s, 0.25), quantile(&s, 0.75));
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = s.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence).collect();
        Some(Self {
            min: s[0],
            q1,
            median: quantile(&s, 0.5),
            q3,
            max: s[s.len() - 1],
            lower_whisker: inside.first().copied().unwrap_or(q1),
            upper_whisker: inside.last().copied().unwrap_or(q3),
            outliers: s.len() - inside.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Objective,
    pub included: usize,
    pub excluded: usize,
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    /// Monte Carlo standard error of the bias, sd/√included.
    pub mc_se: f64,
    pub boxplot: Option<BoxplotSummary>,
    pub values: Vec<f64>,
}

impl EstimatorSummary {
    fn new(estimator: Objective, outcomes: &[Option<f64>], target: f64) -> Self {
        let values: Vec<f64> = outcomes.iter().flatten().copied().collect();
        let m = values.len();
        let mean = if m > 0 { values.iter().sum::<f64>() / m as f64 } else { f64::NAN };
        let sd = if m > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt()
        } else {
            f64::NAN
        };
        Self {
            estimator,
            included: m,
            excluded: outcomes.len() - m,
            mean,
            bias: mean - target,
            sd,
            mc_se: sd / (m as f64).sqrt(),
            boxplot: BoxplotSummary::from_values(&values),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub n_reps: usize,
    /// True mean μ(z; β) being predicted.
    pub target: f64,
    pub mle: EstimatorSummary,
    pub tsallis: EstimatorSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: SimScenario,
    pub seed: u64,
    pub z_design: f64,
    pub contamination_scheme: String,
    pub regimes: Vec<RegimeReport>,
}

impl SimulationReport {
    pub fn regime(&self, regime: Regime) -> Option<&RegimeReport> {
        self.regimes.iter().find(|r| r.regime == regime)
    }
}

fn predicted_mean(model: &RegressionModel, objective: Objective, options: &FitOptions, z: f64) -> Option<f64> {
    let fr = fit(model, objective, options).ok()?;
    Some(fr.family.eval_unchecked(z, &fr.params()))
}

/// Fits both estimators on `reps` replicates of each regime and summarizes
/// their predictions of μ(z; β).
pub fn run_simulation(scenario: &SimScenario, seed: u64) -> Result<SimulationReport> {
    scenario.validate()?;
    let tsallis = scenario.tsallis()?;
    let z = scenario.z();
    let target = scenario.family.eval(z, &scenario.truth)?;
    let xs = scenario.xs();
    let mut regimes = Vec::new();
    for (regime, study) in [(Regime::Central, STUDY_CENTRAL), (Regime::Contaminated, STUDY_CONTAMINATED)] {
        let outcomes: Vec<(Option<f64>, Option<f64>)> = (0..scenario.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = replicate_rng(seed, study, rep);
                let ys = scenario.draw(regime, &mut rng);
                let Ok(model) = RegressionModel::new(xs.clone(), ys, scenario.family) else {
                    return (None, None);
                };
                (
                    predicted_mean(&model, Objective::LogScore, &scenario.fit_options, z),
                    predicted_mean(&model, tsallis, &scenario.fit_options, z),
                )
            })
            .collect();
        let mle: Vec<Option<f64>> = outcomes.iter().map(|o| o.0).collect();
        let ts: Vec<Option<f64>> = outcomes.iter().map(|o| o.1).collect();
        let report = RegimeReport {
            regime,
            n_reps: scenario.reps,
            target,
            mle: EstimatorSummary::new(Objective::LogScore, &mle, target),
            tsallis: EstimatorSummary::new(tsallis, &ts, target),
        };
        let label = format!("{regime:?}").to_lowercase();
        check_exclusions(&label, report.mle.excluded, scenario.reps)?;
        check_exclusions(&label, report.tsallis.excluded, scenario.reps)?;
        regimes.push(report);
    }
    let c = scenario.contamination;
    Ok(SimulationReport {
        scenario: scenario.clone(),
        seed,
        z_design: z,
        contamination_scheme: format!(
            "errors ~ (1-{eps})*N(0, sigma2) + {eps}*N({shift}*sigma, sigma2)",
            eps = c.epsilon,
            shift = c.shift_sd
        ),
        regimes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub scenario: SimScenario,
    pub seed: u64,
    pub level: f64,
    pub reps: usize,
    pub included: usize,
    pub excluded: usize,
    /// Fraction of included replicates whose interval covers the truth.
    pub coverage: BTreeMap<String, f64>,
}

/// Wald interval coverage of the Tsallis estimator under the central model.
pub fn coverage_study(scenario: &SimScenario, seed: u64, level: f64) -> Result<CoverageReport> {
    scenario.validate()?;
    let objective = scenario.tsallis()?;
    let truth = scenario.theta().to_vec();
    let xs = scenario.xs();
    let outcomes: Vec<Option<Vec<(String, bool)>>> = (0..scenario.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, STUDY_COVERAGE, rep);
            let ys = scenario.draw(Regime::Central, &mut rng);
            let model = RegressionModel::new(xs.clone(), ys, scenario.family).ok()?;
            let fr = fit(&model, objective, &scenario.fit_options).ok()?;
            let report = infer(&model, &fr, SigmaConvention::Variance, level).ok()?;
            let names = fr.coordinate_names();
            Some(
                report
                    .parameters
                    .iter()
                    .map(|p| {
                        let k = names.iter().position(|n| *n == p.name).expect("known name");
                        (p.name.clone(), p.lower <= truth[k] && truth[k] <= p.upper)
                    })
                    .collect(),
            )
        })
        .collect();
    let included: Vec<&Vec<(String, bool)>> = outcomes.iter().flatten().collect();
    let excluded = scenario.reps - included.len();
    check_exclusions("coverage", excluded, scenario.reps)?;
    let mut hits: BTreeMap<String, usize> = BTreeMap::new();
    for rep in &included {
        for (name, hit) in rep.iter() {
            *hits.entry(name.clone()).or_default() += usize::from(*hit);
        }
    }
    let coverage = hits
        .into_iter()
        .map(|(k, v)| (k, v as f64 / included.len() as f64))
        .collect();
    Ok(CoverageReport {
        scenario: scenario.clone(),
        seed,
        level,
        reps: scenario.reps,
        included: included.len(),
        excluded,
        coverage,
    })
}

/// Kolmogorov–Smirnov distance between a sample and Uniform(0, 1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut u = sample.to_vec();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &v)| ((i as f64 + 1.0) / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCalibrationReport {
    pub scenario: SimScenario,
    pub seed: u64,
    /// The single free coordinate; the rest of θ is held at the truth.
    pub parameter: String,
    pub reps: usize,
    pub included: usize,
    pub excluded: usize,
    /// KS distance of the unadjusted statistic against its eigenvalue mixture.
    pub ks_unadjusted: f64,
    /// KS distance of the adjusted statistic against χ²₁.
    pub ks_adjusted: f64,
    pub rejection_unadjusted: f64,
    pub rejection_adjusted: f64,
}

/// Null calibration of W_S and A·W_S at the true θ for a one-dimensional
/// slice through `parameter`, using probability integral transforms.
pub fn ratio_calibration(
    scenario: &SimScenario,
    seed: u64,
    parameter: &str,
    method: &MixtureMethod,
) -> Result<RatioCalibrationReport> {
    scenario.validate()?;
    let objective = scenario.tsallis()?;
    let family = scenario.family;
    let mut names = family.param_names().to_vec();
    names.push("sigma2");
    let k = names.iter().position(|n| *n == parameter).ok_or_else(|| {
        Error::InvalidConfig(format!("unknown parameter {parameter}; expected one of {names:?}"))
    })?;
    let null = scenario.theta();
    let truth = null.to_vec();
    let mut options = scenario.fit_options.clone();
    options.fixed = truth
        .iter()
        .enumerate()
        .map(|(i, &v)| if i == k { None } else { Some(v) })
        .collect();
    options.start = Some(scenario.truth);
    let xs = scenario.xs();
    let study = STUDY_RATIO + k as u64;
    let outcomes: Vec<Option<(f64, f64)>> = (0..scenario.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, study, rep);
            let ys = scenario.draw(Regime::Central, &mut rng);
            let model = RegressionModel::new(xs.clone(), ys, family).ok()?;
            let fr = fit(&model, objective, &options).ok()?;
            let raw = score_ratio_test(&model, &fr, &null, method).ok()?;
            let adj = adjusted_score_ratio(&model, &fr, &null).ok()?;
            Some((1.0 - raw.p_value, 1.0 - adj.p_value))
        })
        .collect();
    let kept: Vec<(f64, f64)> = outcomes.iter().flatten().copied().collect();
    let excluded = scenario.reps - kept.len();
    check_exclusions(&format!("ratio slice {parameter}"), excluded, scenario.reps)?;
    let raw: Vec<f64> = kept.iter().map(|p| p.0).collect();
    let adj: Vec<f64> = kept.iter().map(|p| p.1).collect();
    let reject = |u: &[f64]| u.iter().filter(|&&v| v > 0.95).count() as f64 / u.len() as f64;
    Ok(RatioCalibrationReport {
        scenario: scenario.clone(),
        seed,
        parameter: parameter.to_string(),
        reps: scenario.reps,
        included: kept.len(),
        excluded,
        ks_unadjusted: ks_uniform(&raw),
        ks_adjusted: ks_uniform(&adj),
        rejection_unadjusted: reject(&raw),
        rejection_adjusted: reject(&adj),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxplot_of_small_sample() {
        let b = BoxplotSummary::from_values(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        assert_eq!(b.upper_whisker, 4.0);
        assert_eq!(b.outliers, 1);
    }

    #[test]
    fn ks_of_perfect_grid() {
        let u: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_uniform(&u) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_recovers_mean() {
        let sc = SimScenario {
            sigma2: 1e-12,
            reps: 4,
            ..SimScenario::default()
        };
        let rep = run_simulation(&sc, 1).unwrap();
        for r in &rep.regimes {
            for est in [&r.mle, &r.tsallis] {
                assert!((est.bias / r.target).abs() <= 1e-3, "{:?} {}", r.regime, est.bias);
            }
        }
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let bad = SimScenario {
            gamma: 0.9,
            ..SimScenario::default()
        };
        assert!(matches!(run_simulation(&bad, 1), Err(Error::InvalidConfig(_))));
        let bad = SimScenario {
            reps: 0,
            ..SimScenario::default()
        };
        assert!(run_simulation(&bad, 1).is_err());
    }
}
