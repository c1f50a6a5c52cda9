//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so that every criterion prints its
//! verdict even when an earlier one fails. The process exits nonzero when a
//! gating criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use robustfit_core::catalog::ALL_FAMILIES;
use robustfit_core::diagnostics::{influence_beta, influence_sigma2};
use robustfit_core::inference::{sensitivity_k, variability_j};
use robustfit_core::scoring::{objective_gradient, objective_total, score_obs};
use robustfit_core::simulation::{coverage_study, ratio_calibration, Regime};
use robustfit_core::*;

const SEED: u64 = 20200404;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- oracles

/// Richardson-extrapolated central difference.
fn derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Central-difference gradient. Each coordinate is differenced on a ladder
/// of steps from 0.1 of its magnitude down by halves. A rung's error is taken
/// as the change to the next rung plus the roundoff bound 10·ε·|f|/h, and the
/// rung with the smallest error is kept.
fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let f0 = f(x).abs();
    (0..x.len())
        .map(|k| {
            let h0 = 0.1 * x[k].abs().max(1e-2);
            let steps: Vec<f64> = (0..30).map(|i| h0 / 2f64.powi(i)).collect();
            let seq: Vec<f64> = steps
                .iter()
                .map(|&h| {
                    derivative(
                        |t| {
                            let mut v = x.to_vec();
                            v[k] = t;
                            f(&v)
                        },
                        x[k],
                        h,
                    )
                })
                .collect();
            let err = |i: usize| (seq[i] - seq[i + 1]).abs() + 10.0 * f64::EPSILON * f0 / steps[i];
            let best = (0..seq.len() - 1).min_by(|&a, &b| err(a).total_cmp(&err(b))).unwrap();
            seq[best]
        })
        .collect()
}

fn normal_pdf(y: f64, mu: f64, v: f64) -> f64 {
    (-(y - mu).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
}

/// Trapezoid rule for ∫ f(y)^γ dy over μ ± 40σ; the integrand is smooth and
/// decays fast enough that the rule converges geometrically.
fn integral_of_power(mu: f64, v: f64, gamma: f64) -> f64 {
    let sd = v.sqrt();
    let h = sd / 40.0;
    let m: i32 = 1600;
    let mut acc = 0.0;
    for i in -m..=m {
        let y = mu + h * i as f64;
        let w = if i.abs() == m { 0.5 } else { 1.0 };
        acc += w * normal_pdf(y, mu, v).powf(gamma);
    }
    acc * h
}

fn score_by_quadrature(y: f64, mu: f64, v: f64, gamma: f64) -> f64 {
    (gamma - 1.0) * integral_of_power(mu, v, gamma) - gamma * normal_pdf(y, mu, v).powf(gamma - 1.0)
}

/// Estimating function (∂S/∂μ, ∂S/∂v)/(γ(γ − 1)) for one observation,
/// derived by hand from the closed-form score.
fn psi(y: f64, mu: f64, v: f64, gamma: f64) -> (f64, f64) {
    let a = gamma - 1.0;
    let r = y - mu;
    let c = (2.0 * PI * v).powf(-a / 2.0);
    let w = (-a * r * r / (2.0 * v)).exp();
    let s = c * (a / gamma.sqrt() - gamma * w);
    let d_mu = -c * gamma * a * r * w / v;
    let d_v = -a / (2.0 * v) * s - c * gamma * w * a * r * r / (2.0 * v * v);
    (d_mu / (a * gamma), d_v / (a * gamma))
}

/// Probabilists' Gauss–Hermite rule via Golub–Welsch.
fn gauss_hermite(m: usize) -> Vec<(f64, f64)> {
    let jac = DMatrix::from_fn(m, m, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = jac.symmetric_eigen();
    let mut rule: Vec<(f64, f64)> = (0..m)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

/// Expected Jacobian of ψ per unit of design, with y ~ N(μ, v):
/// (E ∂ψ_μ/∂μ, E ∂ψ_μ/∂v, E ∂ψ_v/∂v). ψ is the gradient of a minimized
/// score, so the result is positive definite.
fn k_entries_by_quadrature(v: f64, gamma: f64, rule: &[(f64, f64)]) -> (f64, f64, f64) {
    let mu = 0.0;
    let sd = v.sqrt();
    let (mut mm, mut mv, mut vv) = (0.0, 0.0, 0.0);
    for &(z, w) in rule {
        let y = mu + sd * z;
        mm += w * derivative(|m| psi(y, m, v, gamma).0, mu, 1e-2 * sd);
        mv += w * derivative(|s| psi(y, mu, s, gamma).0, v, 1e-2 * v);
        vv += w * derivative(|s| psi(y, mu, s, gamma).1, v, 1e-2 * v);
    }
    (mm, mv, vv)
}

fn j_entries_by_monte_carlo(v: f64, gamma: f64, draws: usize, seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = v.sqrt();
    let (mut mm, mut mv, mut vv) = (0.0, 0.0, 0.0);
    for _ in 0..draws {
        let z: f64 = StandardNormal.sample(&mut rng);
        let (a, b) = psi(sd * z, 0.0, v, gamma);
        mm += a * a;
        mv += a * b;
        vv += b * b;
    }
    let n = draws as f64;
    (mm / n, mv / n, vv / n)
}

/// Full (p+1)×(p+1) matrix from per-observation scalar expectations.
fn assemble(family: CurveFamily, xs: &[f64], p: &CurveParams, e: (f64, f64, f64)) -> DMatrix<f64> {
    let k = family.arity();
    let mut m = DMatrix::zeros(k + 1, k + 1);
    for &x in xs {
        let g = family.grad(x, p).unwrap();
        for i in 0..k {
            for j in 0..k {
                m[(i, j)] += e.0 * g[i] * g[j];
            }
            m[(i, k)] += e.1 * g[i];
            m[(k, i)] += e.1 * g[i];
        }
        m[(k, k)] += e.2;
    }
    m / xs.len() as f64
}

/// Largest entrywise error scaled by max(|b_ij|, √(b_ii b_jj)).
fn matrix_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            let scale = b[(i, j)].abs().max((b[(i, i)] * b[(j, j)]).abs().sqrt());
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs() / scale);
        }
    }
    worst
}

fn inf_norm_rel(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    num / den
}

// --------------------------------------------------------------- criteria

fn closed_form_score() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let mu = rng.random_range(-100.0..100.0);
        let v: f64 = 10f64.powf(rng.random_range(-2.0..2.0));
        let gamma = rng.random_range(1.01..3.0);
        let z: f64 = StandardNormal.sample(&mut rng);
        let y = mu + 3.0 * v.sqrt() * z;
        let cfg = Objective::tsallis(gamma).unwrap();
        let analytic = score_obs(y - mu, v, &cfg);
        let oracle = score_by_quadrature(y, mu, v, gamma);
        worst = worst.max((analytic - oracle).abs() / oracle.abs());
    }
    verdict(worst <= 1e-8, format!("max relative error {worst:.2e} over 200 draws (limit 1e-8)"))
}

fn random_params(family: CurveFamily, rng: &mut ChaCha8Rng) -> CurveParams {
    let b = match family {
        CurveFamily::Gompertz => -rng.random_range(0.03..0.3),
        _ => -rng.random_range(0.5..6.0),
    };
    let c = rng.random_range(-5.0..5.0);
    let d = rng.random_range(50.0..5000.0);
    let e = rng.random_range(10.0..50.0);
    let f = if family == CurveFamily::LogLogistic5 {
        rng.random_range(0.3..3.0)
    } else {
        1.0
    };
    CurveParams::new(b, c, d, e, f)
}

fn gradient_checks() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let (mut worst_curve, mut worst_obj): (f64, f64) = (0.0, 0.0);
    for family in ALL_FAMILIES {
        for _ in 0..100 {
            let p = random_params(family, &mut rng);
            let x = rng.random_range(1.0..80.0);
            let beta = family.params_to_beta(&p);
            let analytic = family.grad(x, &p).unwrap();
            let fd = fd_gradient(|b| family.eval(x, &family.beta_to_params(b)).unwrap(), &beta);
            worst_curve = worst_curve.max(inf_norm_rel(&analytic, &fd));

            let xs: Vec<f64> = (1..=30).map(f64::from).collect();
            let sd = rng.random_range(0.5..20.0);
            let ys: Vec<f64> = xs
                .iter()
                .map(|&x| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    family.eval(x, &p).unwrap() + sd * z
                })
                .collect();
            let model = RegressionModel::new(xs, ys, family).unwrap();
            let theta = Theta::from_params(family, &p, sd * sd * rng.random_range(0.5..2.0));
            let objectives = [Objective::LogScore, Objective::tsallis(rng.random_range(1.05..2.5)).unwrap()];
            for obj in objectives {
                let analytic = objective_gradient(&model, &theta, &obj).unwrap();
                let full = theta.to_vec();
                let fd = fd_gradient(|v| objective_total(&model, &Theta::from_slice(v), &obj).unwrap(), &full);
                worst_obj = worst_obj.max(inf_norm_rel(&analytic, &fd));
            }
        }
    }
    let pass = worst_curve <= 1e-6 && worst_obj <= 1e-6;
    verdict(
        pass,
        format!("curve gradients {worst_curve:.2e}, objective gradients {worst_obj:.2e} (limit 1e-6, ∞-norm relative)"),
    )
}

fn sandwich_oracle() -> Verdict {
    let family = CurveFamily::LogLogistic4;
    let p = CurveParams::four(-3.0, 0.0, 100.0, 20.0);
    let xs: Vec<f64> = (1..=40).map(f64::from).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| family.eval(x, &p).unwrap()).collect();
    let model = RegressionModel::new(xs.clone(), ys, family).unwrap();
    let rule = gauss_hermite(80);
    let mut worst = [(0.0f64, 0.0f64); 2];
    for (g_idx, gamma) in [1.1, 1.5, 2.0].into_iter().enumerate() {
        for (s_idx, v) in [0.25, 1.0, 4.0].into_iter().enumerate() {
            let obj = Objective::tsallis(gamma).unwrap();
            let theta = Theta::from_params(family, &p, v);
            let (mm, mv, vv) = k_entries_by_quadrature(v, gamma, &rule);
            let k_oracle = assemble(family, &xs, &p, (mm, mv, vv));
            let seed = SEED + 100 + (3 * g_idx + s_idx) as u64;
            let j_oracle = assemble(family, &xs, &p, j_entries_by_monte_carlo(v, gamma, 1_000_000, seed));
            for (c, conv) in [SigmaConvention::Variance, SigmaConvention::Literal].into_iter().enumerate() {
                let k = sensitivity_k(&model, &theta, &obj, conv).unwrap();
                let j = variability_j(&model, &theta, &obj, conv).unwrap();
                worst[c].0 = worst[c].0.max(matrix_rel_err(&k, &k_oracle));
                worst[c].1 = worst[c].1.max(matrix_rel_err(&j, &j_oracle));
            }
        }
    }
    let ok = |w: (f64, f64)| w.0 <= 1e-6 && w.1 <= 3e-2;
    verdict(
        ok(worst[0]) && !ok(worst[1]),
        format!(
            "selected convention: variance (K {:.2e}, J {:.2e}); literal reading K {:.2e}, J {:.2e} (limits 1e-6, 3e-2)",
            worst[0].0, worst[0].1, worst[1].0, worst[1].1
        ),
    )
}

fn scenario(reps: usize) -> SimScenario {
    SimScenario {
        reps,
        ..SimScenario::default()
    }
}

fn wald_coverage(report: &robustfit_core::simulation::CoverageReport) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["d", "e", "sigma2"] {
        let c = report.coverage[name];
        pass &= (0.93..=0.97).contains(&c);
        parts.push(format!("{name} {c:.4}"));
    }
    verdict(
        pass,
        format!(
            "coverage {} over {} fits (excluded {}), target [0.93, 0.97]",
            parts.join(", "),
            report.included,
            report.excluded
        ),
    )
}

fn ratio_verdict(reports: &[robustfit_core::simulation::RatioCalibrationReport]) -> Verdict {
    let pass = reports.iter().all(|r| r.ks_adjusted <= 0.03 && r.ks_unadjusted <= 0.03);
    let parts: Vec<String> = reports
        .iter()
        .map(|r| {
            format!(
                "{}: KS adjusted {:.4}, unadjusted {:.4}",
                r.parameter, r.ks_adjusted, r.ks_unadjusted
            )
        })
        .collect();
    verdict(pass, format!("{} (limit 0.03)", parts.join("; ")))
}

fn robustness_verdict(report: &SimulationReport) -> Verdict {
    let central = report.regime(Regime::Central).unwrap();
    let cont = report.regime(Regime::Contaminated).unwrap();
    let robust = cont.tsallis.bias.abs() < cont.mle.bias.abs();
    let se = (central.mle.mc_se.powi(2) + central.tsallis.mc_se.powi(2)).sqrt();
    let gap = (central.mle.bias - central.tsallis.bias).abs();
    verdict(
        robust && gap <= 2.0 * se,
        format!(
            "contaminated |bias| tsallis {:.4} vs mle {:.4}; central bias gap {:.4} vs 2 MC se {:.4}",
            cont.tsallis.bias.abs(),
            cont.mle.bias.abs(),
            gap,
            2.0 * se
        ),
    )
}

fn influence_boundedness() -> Verdict {
    let family = CurveFamily::LogLogistic4;
    let theta = Theta::from_params(family, &CurveParams::four(-3.0, 0.0, 100.0, 20.0), 4.0);
    let x = 18.0;
    let mu = family.eval(x, &theta.params(family)).unwrap();
    let sd = theta.sigma2.sqrt();
    let grid: Vec<f64> = (-5000..=5000).map(|i| mu + sd * i as f64 / 100.0).collect();
    let mut pass = true;
    let mut notes = Vec::new();
    for gamma in [1.1, 1.5, 2.0, 3.0] {
        let obj = Objective::tsallis(gamma).unwrap();
        let mut sup_beta: f64 = 0.0;
        let mut sup_s2: f64 = 0.0;
        for &y in &grid {
            let b = influence_beta(family, y, x, &theta, &obj).unwrap();
            sup_beta = sup_beta.max(b.iter().fold(0.0, |m, v: &f64| m.max(v.abs())));
            sup_s2 = sup_s2.max(influence_sigma2(family, y, x, &theta, &obj).unwrap().abs());
        }
        // limits at the grid edge: zero for β and −(γ−1)/(√γ σ^(γ−3)) for σ²
        let edge_beta = influence_beta(family, mu + 50.0 * sd, x, &theta, &obj).unwrap();
        let edge_s2 = influence_sigma2(family, mu + 50.0 * sd, x, &theta, &obj).unwrap();
        let limit_s2 = -(gamma - 1.0) / (gamma.sqrt() * sd.powf(gamma - 3.0));
        let beta_tail = edge_beta.iter().fold(0.0f64, |m, v| m.max(v.abs())) / sup_beta;
        let s2_tail = (edge_s2 - limit_s2).abs() / limit_s2.abs();
        let ok = sup_beta.is_finite() && sup_s2.is_finite() && beta_tail < 1e-6 && s2_tail < 1e-6;
        pass &= ok;
        notes.push(format!("γ={gamma}: sup β {sup_beta:.3e}, sup σ² {sup_s2:.3e}"));
    }
    let mle = |k: f64| {
        influence_beta(family, mu + k * sd, x, &theta, &Objective::LogScore)
            .unwrap()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let growth = mle(50.0) / mle(1.0);
    pass &= growth > 10.0;
    notes.push(format!("log-score growth ×{growth:.1}"));
    verdict(pass, notes.join("; "))
}

fn historical_snapshot() -> Verdict {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/italy_national_2020-04-04.csv");
    let series = load_csv(path, &LoadOptions::new(Layout::National, "deceduti")).unwrap();
    let model = series.to_model(CurveFamily::LogLogistic5).unwrap();
    let fr = match fit(&model, Objective::tsallis(1.5).unwrap(), &FitOptions::default()) {
        Ok(f) => f,
        Err(e) => return verdict(false, format!("fit failed: {e}")),
    };
    let p = fr.params();
    let e_ok = (35.0..=45.0).contains(&p.e);
    let d_dev = p.d / 29392.0 - 1.0;
    verdict(
        e_ok && d_dev.abs() <= 0.25,
        format!("e = {:.2} (target [35, 45]), d = {:.0} ({:+.1}% from 29392)", p.e, p.d, 100.0 * d_dev),
    )
}

// ----------------------------------------------------------------- runner

struct Runner {
    failures: Vec<String>,
}

impl Runner {
    fn run<T>(&mut self, id: &str, title: &str, budget: Duration, gating: bool, f: impl FnOnce() -> (Verdict, T)) -> T {
        let t0 = Instant::now();
        let (v, out) = f();
        let elapsed = t0.elapsed();
        let in_time = elapsed <= budget;
        let pass = v.pass && in_time;
        let status = match (pass, gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "NOTE",
        };
        println!(
            "criterion {id} [{status}] {title}: {} ({:.1}s, budget {}s)",
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if !pass && gating {
            self.failures.push(id.to_string());
        }
        out
    }
}

fn main() {
    // `cargo test -- --list` and filters from other harnesses
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut r = Runner { failures: Vec::new() };
    let secs = Duration::from_secs;

    r.run("1", "closed-form score vs quadrature", secs(10), true, || (closed_form_score(), ()));
    r.run("2", "analytic gradients vs finite differences", secs(30), true, || (gradient_checks(), ()));
    r.run("3", "sandwich matrices vs oracles", secs(300), true, || (sandwich_oracle(), ()));

    let coverage = r.run("4", "Wald interval coverage", secs(600), true, || {
        let rep = coverage_study(&scenario(2000), SEED, 0.95).unwrap();
        (wald_coverage(&rep), rep)
    });
    let ratio = r.run("5", "ratio statistic calibration", secs(600), true, || {
        let reps: Vec<_> = ["d", "e"]
            .iter()
            .map(|p| ratio_calibration(&scenario(2000), SEED, p, &MixtureMethod::default()).unwrap())
            .collect();
        (ratio_verdict(&reps), reps)
    });
    let sim = r.run("6", "robustness under contamination", secs(600), true, || {
        let rep = run_simulation(&scenario(1000), SEED).unwrap();
        (robustness_verdict(&rep), rep)
    });
    r.run("7", "influence boundedness", secs(5), true, || (influence_boundedness(), ()));
    r.run("8", "historical snapshot (non-gating)", secs(60), false, || (historical_snapshot(), ()));
    r.run("9", "determinism of criteria 4-6", secs(1800), true, || {
        let again_cov = coverage_study(&scenario(2000), SEED, 0.95).unwrap();
        let again_ratio: Vec<_> = ["d", "e"]
            .iter()
            .map(|p| ratio_calibration(&scenario(2000), SEED, p, &MixtureMethod::default()).unwrap())
            .collect();
        let again_sim = run_simulation(&scenario(1000), SEED).unwrap();
        let same = [
            to_json(&coverage) == to_json(&again_cov),
            to_json(&ratio) == to_json(&again_ratio),
            to_json(&sim) == to_json(&again_sim),
        ];
        let detail = format!("byte-identical JSON for coverage, ratio, simulation: {same:?}");
        (verdict(same.iter().all(|s| *s), detail), ())
    });

    if r.failures.is_empty() {
        println!("acceptance: all gating criteria passed");
    } else {
        println!("acceptance: failed criteria {}", r.failures.join(", "));
        std::process::exit(1);
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable report")
}
