//! Unconstrained minimizers: a Nelder–Mead warm-up, a BFGS refinement with a
//! strong-Wolfe line search, and a damped Newton polish on the analytic
//! gradient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub trait Problem {
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vec<f64>;

    /// Estimated rounding error of `value` at z. Decreases below this level
    /// cannot be resolved, which bounds what convergence can mean.
    fn value_noise(&self, _z: &[f64]) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simplex,
    QuasiNewton,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub stage: Stage,
    pub iteration: usize,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub z: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizerSettings {
    pub simplex_iters: usize,
    pub max_iter: usize,
    /// Converged when ‖∇f‖∞ ≤ tol·(1 + |f|).
    pub tol: f64,
    pub newton_iters: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn converged(g: &[f64], f: f64, tol: f64) -> bool {
    inf_norm(g) <= tol * (1.0 + f.abs())
}

pub fn minimize<P: Problem>(problem: &P, start: &[f64], settings: &MinimizerSettings) -> Minimum {
    let mut trace = Vec::new();
    let (z_nm, _) = nelder_mead(problem, start, settings.simplex_iters, &mut trace);
    let mut best = bfgs(problem, &z_nm, settings, &mut trace);
    if !best.converged || settings.newton_iters > 0 {
        best = newton_polish(problem, best, settings, &mut trace);
    }
    best.trace = trace;
    best
}

/// Adaptive Nelder–Mead (dimension-dependent coefficients).
pub fn nelder_mead<P: Problem>(
    problem: &P,
    start: &[f64],
    max_iter: usize,
    trace: &mut Vec<TracePoint>,
) -> (Vec<f64>, f64) {
    let n = start.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);

    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for k in 0..n {
        let mut v = start.to_vec();
        v[k] += if v[k].abs() > 1e-3 { 0.1 * v[k].abs().max(0.25) } else { 0.1 };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| problem.value(v)).collect();

    for iter in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        trace.push(TracePoint {
            stage: Stage::Simplex,
            iteration: iter,
            objective: values[0],
        });

        let spread = (values[n] - values[0]).abs();
        let size = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0, f64::max);
        if values[0].is_finite() && spread <= 1e-12 * (1.0 + values[0].abs()) && size < 1e-9 {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / nf)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = problem.value(&xr);
        if fr < values[0] {
            let xe = along(alpha * gamma);
            let fe = problem.value(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(alpha * rho);
            let fc = problem.value(&xc);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = problem.value(&xc);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink towards the best vertex
        for i in 1..=n {
            let v: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            values[i] = problem.value(&v);
            simplex[i] = v;
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    (simplex[best].clone(), values[best])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(z: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    z.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

struct LineSearchPoint {
    t: f64,
    f: f64,
    g: Vec<f64>,
}

/// Strong-Wolfe line search (bracketing followed by zoom).
fn wolfe_search<P: Problem>(
    problem: &P,
    z: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
) -> Option<LineSearchPoint> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let dg0 = dot(g0, d);
    if !(dg0 < 0.0) {
        return None;
    }
    let eval = |t: f64| {
        let zt = axpy(z, t, d);
        let f = problem.value(&zt);
        let g = if f.is_finite() { problem.gradient(&zt) } else { vec![f64::NAN; z.len()] };
        (f, g)
    };

    let mut t_prev = 0.0;
    let mut f_prev = f0;
    let mut dg_prev = dg0;
    let mut t = 1.0;
    for i in 0..40 {
        let (f, g) = eval(t);
        if !f.is_finite() {
            t = 0.5 * (t_prev + t);
            if t - t_prev < 1e-16 {
                return None;
            }
            continue;
        }
        let dg = dot(&g, d);
        if f > f0 + C1 * t * dg0 || (i > 0 && f >= f_prev) {
            return zoom(problem, z, f0, dg0, d, (t_prev, f_prev, dg_prev), (t, f, dg));
        }
        if dg.abs() <= -C2 * dg0 {
            return Some(LineSearchPoint { t, f, g });
        }
        if dg >= 0.0 {
            return zoom(problem, z, f0, dg0, d, (t, f, dg), (t_prev, f_prev, dg_prev));
        }
        t_prev = t;
        f_prev = f;
        dg_prev = dg;
        t *= 2.0;
    }
    None
}

fn zoom<P: Problem>(
    problem: &P,
    z: &[f64],
    f0: f64,
    dg0: f64,
    d: &[f64],
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
) -> Option<LineSearchPoint> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let mut best: Option<LineSearchPoint> = None;
    for _ in 0..60 {
        // cubic interpolation, safeguarded into the middle of the bracket
        let (t_lo, f_lo, g_lo) = lo;
        let (t_hi, f_hi, g_hi) = hi;
        let d1 = g_lo + g_hi - 3.0 * (f_lo - f_hi) / (t_lo - t_hi);
        let disc = d1 * d1 - g_lo * g_hi;
        let mut t = if disc >= 0.0 && t_hi != t_lo {
            let d2 = disc.sqrt() * (t_hi - t_lo).signum();
            t_hi - (t_hi - t_lo) * (g_hi + d2 - d1) / (g_hi - g_lo + 2.0 * d2)
        } else {
            0.5 * (t_lo + t_hi)
        };
        let (a, b) = if t_lo < t_hi { (t_lo, t_hi) } else { (t_hi, t_lo) };
        let margin = 0.1 * (b - a);
        if !t.is_finite() || t < a + margin || t > b - margin {
            t = 0.5 * (a + b);
        }
        if (b - a) < 1e-14 * (1.0 + b.abs()) {
            break;
        }
        let zt = axpy(z, t, d);
        let f = problem.value(&zt);
        if !f.is_finite() {
            hi = (t, f64::INFINITY, 0.0);
            continue;
        }
        let g = problem.gradient(&zt);
        let dg = dot(&g, d);
        if f > f0 + C1 * t * dg0 || f >= f_lo {
            hi = (t, f, dg);
        } else {
            if dg.abs() <= -C2 * dg0 {
                return Some(LineSearchPoint { t, f, g });
            }
            if dg * (t_hi - t_lo) >= 0.0 {
                hi = lo;
            }
            lo = (t, f, dg);
            best = Some(LineSearchPoint { t, f, g });
        }
    }
    // Accept any sufficient-decrease point found while zooming.
    best.filter(|p| p.f < f0)
}

pub fn bfgs<P: Problem>(
    problem: &P,
    start: &[f64],
    settings: &MinimizerSettings,
    trace: &mut Vec<TracePoint>,
) -> Minimum {
    let mut z = start.to_vec();
    let mut f = problem.value(&z);
    let mut g = problem.gradient(&z);
    let mut h = jacobi_inverse(problem, &z);
    let mut fresh = true;
    let mut iterations = 0;

    while iterations < settings.max_iter {
        if converged(&g, f, settings.tol) {
            break;
        }
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let d: Vec<f64> = (-(&h * &gv)).iter().copied().collect();
        let step = match wolfe_search(problem, &z, f, &g, &d) {
            Some(s) => s,
            None if !fresh => {
                h = jacobi_inverse(problem, &z);
                fresh = true;
                continue;
            }
            None => break,
        };
        let s: Vec<f64> = d.iter().map(|v| step.t * v).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        z = axpy(&z, 1.0, &s);
        let improved = step.f < f;
        f = step.f;
        g = step.g;
        trace.push(TracePoint {
            stage: Stage::QuasiNewton,
            iteration: iterations,
            objective: f,
        });
        if sy > 1e-300 {
            let sv = DVector::from_column_slice(&s);
            let yv = DVector::from_column_slice(&y);
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            h += (&sv * sv.transpose()) * (rho * rho * yhy + rho)
                - (&hy * sv.transpose() + &sv * hy.transpose()) * rho;
            fresh = false;
        }
        if !improved && !fresh {
            h = jacobi_inverse(problem, &z);
            fresh = true;
        }
    }

    Minimum {
        gradient_norm: inf_norm(&g),
        converged: converged(&g, f, settings.tol),
        z,
        value: f,
        iterations,
        trace: Vec::new(),
    }
}

/// Newton iterations with a central-difference Hessian of the analytic
/// gradient. Steps are accepted only if they do not increase the objective
/// beyond rounding level and reduce the gradient norm.
pub fn newton_polish<P: Problem>(
    problem: &P,
    start: Minimum,
    settings: &MinimizerSettings,
    trace: &mut Vec<TracePoint>,
) -> Minimum {
    let n = start.z.len();
    let mut cur = start;
    let mut g = problem.gradient(&cur.z);
    let budget = settings.newton_iters.max(if cur.converged { 0 } else { 200 });
    for it in 0..budget {
        let hess = fd_hessian(problem, &cur.z);
        let gv = DVector::from_column_slice(&g);
        // Jacobi-scaled Levenberg–Marquardt system, so weakly curved
        // coordinates are neither frozen by stiff ones nor lost to rounding
        let sc = hess.diagonal().map(|v| 1.0 / v.abs().max(1e-300).sqrt());
        let scaled = DMatrix::from_fn(n, n, |i, j| hess[(i, j)] * sc[i] * sc[j]);
        let sg = gv.component_mul(&sc);
        let mut lambda = 0.0;
        let mut accepted = false;
        for _ in 0..16 {
            let damped = &scaled + DMatrix::identity(n, n) * lambda;
            let Some(ch) = damped.cholesky() else {
                lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
                continue;
            };
            let step = ch.solve(&sg).component_mul(&sc);
            let z_new: Vec<f64> = cur.z.iter().zip(step.iter()).map(|(a, b)| a - b).collect();
            let f_new = problem.value(&z_new);
            if !f_new.is_finite() {
                lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
                continue;
            }
            let g_new = problem.gradient(&z_new);
            let slack = 1e-12 * (1.0 + cur.value.abs());
            let decreased = f_new < cur.value - slack;
            if decreased || (f_new <= cur.value + slack && inf_norm(&g_new) < inf_norm(&g)) {
                cur.z = z_new;
                cur.value = f_new;
                g = g_new;
                accepted = true;
                break;
            }
            lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
        }
        cur.iterations += 1;
        trace.push(TracePoint {
            stage: Stage::Newton,
            iteration: it + 1,
            objective: cur.value,
        });
        if !accepted {
            break;
        }
        if inf_norm(&g) <= 1e-3 * settings.tol * (1.0 + cur.value.abs()) {
            break;
        }
    }
    cur.gradient_norm = inf_norm(&g);
    // Otherwise accept when the predicted Newton decrease is below what the
    // objective can resolve.
    let floor = (1e-4 * settings.tol * (1.0 + cur.value.abs())).max(10.0 * problem.value_noise(&cur.z));
    cur.converged = converged(&g, cur.value, settings.tol)
        || newton_decrement(&fd_hessian(problem, &cur.z), &g).is_some_and(|d| d <= floor);
    cur
}

/// Inverse of the finite-difference Hessian's diagonal, used as the initial
/// BFGS inverse Hessian; falls back to the identity where the diagonal is
/// zero or non-finite.
fn jacobi_inverse<P: Problem>(problem: &P, z: &[f64]) -> DMatrix<f64> {
    let hess = fd_hessian(problem, z);
    let diag = hess.diagonal().map(|v| if v.is_finite() && v != 0.0 { 1.0 / v.abs() } else { 1.0 });
    DMatrix::from_diagonal(&diag)
}

/// Symmetrized central-difference Hessian of the analytic gradient. Each
/// column's step is shrunk until halving it no longer changes the column,
/// so sharply curved coordinates are differenced inside their quadratic
/// region.
pub fn fd_hessian<P: Problem>(problem: &P, z: &[f64]) -> DMatrix<f64> {
    let n = z.len();
    let column = |k: usize, h: f64| -> Vec<f64> {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[k] += h;
        zm[k] -= h;
        let (gp, gm) = (problem.gradient(&zp), problem.gradient(&zm));
        gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    };
    let mut hess = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let mut h = 1e-5 * z[k].abs().max(1.0);
        let mut col = column(k, h);
        for _ in 0..8 {
            let half = column(k, h / 2.0);
            let scale = inf_norm(&half);
            let diff = col.iter().zip(&half).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            // an all-zero column usually means the step left the region
            // where the gradient responds at all
            let settled = scale > 0.0 && diff <= 1e-3 * scale;
            col = half;
            h /= 2.0;
            if settled {
                break;
            }
            h /= 5.0;
            col = column(k, h);
        }
        for j in 0..n {
            hess[(j, k)] = col[j];
        }
    }
    (&hess + hess.transpose()) * 0.5
}

/// ½ gᵀH⁻¹g, the quadratic model's predicted decrease; `None` unless H is
/// positive definite.
pub fn newton_decrement(hess: &DMatrix<f64>, g: &[f64]) -> Option<f64> {
    let gv = DVector::from_column_slice(g);
    let ch = hess.clone().cholesky()?;
    let d = 0.5 * gv.dot(&ch.solve(&gv));
    d.is_finite().then_some(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Problem for Rosenbrock {
        fn value(&self, z: &[f64]) -> f64 {
            (1.0 - z[0]).powi(2) + 100.0 * (z[1] - z[0] * z[0]).powi(2)
        }
        fn gradient(&self, z: &[f64]) -> Vec<f64> {
            vec![
                -2.0 * (1.0 - z[0]) - 400.0 * z[0] * (z[1] - z[0] * z[0]),
                200.0 * (z[1] - z[0] * z[0]),
            ]
        }
    }

    #[test]
    fn rosenbrock_converges() {
        let settings = MinimizerSettings {
            simplex_iters: 50,
            max_iter: 500,
            tol: 1e-10,
            newton_iters: 3,
        };
        let m = minimize(&Rosenbrock, &[-1.2, 1.0], &settings);
        assert!(m.converged, "{m:?}");
        assert!((m.z[0] - 1.0).abs() < 1e-8 && (m.z[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn simplex_alone_gets_close() {
        let mut trace = Vec::new();
        let (z, f) = nelder_mead(&Rosenbrock, &[-1.2, 1.0], 2000, &mut trace);
        assert!(f < 1e-8, "{z:?} {f}");
        assert!(!trace.is_empty());
    }
}
