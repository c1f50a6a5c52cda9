//! Benchmark fixtures shared by the criterion benches.

use robustfit_core::{CurveFamily, CurveParams, RegressionModel};

/// Deterministic log-logistic data with a fixed zig-zag noise pattern.
pub fn synthetic_model(n: usize, family: CurveFamily) -> RegressionModel {
    let truth = CurveParams::new(-4.0, 0.0, 30_000.0, 40.0, 1.0);
    let pattern = [120.0, -80.0, 45.0, -150.0, 60.0, 10.0, -35.0];
    let ys = (1..=n)
        .map(|i| {
            family.eval(i as f64, &truth).expect("valid parameters") + pattern[i % pattern.len()]
        })
        .collect();
    RegressionModel::from_days(ys, family).expect("valid design")
}
