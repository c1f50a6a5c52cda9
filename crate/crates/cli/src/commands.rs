use std::path::Path;

use chrono::{NaiveDate, TimeDelta};
use robustfit_core::data::{to_cumulative, to_daily};
use robustfit_core::diagnostics::{
    half_weight_residual, influence_curves, observation_weights, GridSpec, SCALING_NOTE,
};
use robustfit_core::prediction::Forecast;
use robustfit_core::{
    estimative_density, fit as fit_curve, forecast_curve, infer, load_csv, CurveFamily, EpidemicSeries,
    FitOptions, Layout, LoadOptions, Objective, SeriesKind, SigmaConvention, SimScenario, TsallisConfig,
};
use serde::Serialize;

use crate::output::{
    read_fit, require_file, sibling, write_json, write_text, CliError, FitDocument, InputInfo, Metadata,
};
use crate::svg::{self, BoxStats, Mark, Panel, Series, PALETTE};
use crate::{ConventionArg, FitArgs, FormatArg, ObjectiveArg, TransformArg};
use crate::{DiagnoseArgs, PredictArgs, SimulateArgs, TableArgs};

fn validate_level(level: f64) -> Result<(), CliError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::invalid(format!("--level must be in (0, 1), got {level}")))
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn date_of(series: &EpidemicSeries, day: f64) -> Option<NaiveDate> {
    let base = *series.dates.first()?;
    let offset = (day - series.days[0]).round() as i64;
    base.checked_add_signed(TimeDelta::days(offset))
}

pub fn fit(a: &FitArgs) -> Result<(), CliError> {
    let family: CurveFamily = a.model.parse()?;
    let cfg = TsallisConfig::new(a.gamma)?;
    validate_level(a.level)?;
    if !(a.tol > 0.0) {
        return Err(CliError::invalid(format!("--tol must be positive, got {}", a.tol)));
    }
    if a.max_iter == 0 {
        return Err(CliError::invalid("--max-iter must be positive"));
    }
    require_file(&a.input, "input")?;

    let (layout, format) = match a.format {
        FormatArg::National => (Layout::National, "national"),
        FormatArg::Regional => (Layout::Regional, "regional"),
        FormatArg::Generic => (Layout::Generic, "generic"),
    };
    let mut load = LoadOptions::new(layout, &a.series);
    load.region = a.region.clone();
    load.allow_gaps = a.allow_gaps;
    load.kind = match (a.cumulative, a.daily) {
        (true, _) => Some(SeriesKind::Cumulative),
        (_, true) => Some(SeriesKind::Daily),
        _ => None,
    };
    let raw = load_csv(&a.input, &load)?;
    let rows = raw.len();
    let (series, transform) = match a.transform {
        TransformArg::None => (raw, "none"),
        TransformArg::Cumsum => (to_cumulative(&raw)?, "cumsum"),
        TransformArg::Daily => (to_daily(&raw)?, "daily"),
    };
    for w in &series.warnings {
        eprintln!("warning: {w}");
    }

    let objective = match a.objective {
        ObjectiveArg::Tsallis => Objective::Tsallis(cfg),
        ObjectiveArg::Mle => Objective::LogScore,
    };
    let convention = match a.sigma_convention {
        ConventionArg::Variance => SigmaConvention::Variance,
        ConventionArg::Literal => SigmaConvention::Literal,
    };
    let options = FitOptions {
        max_iter: a.max_iter,
        tol: a.tol,
        multistart: a.multistart,
        seed: a.seed,
        ..FitOptions::default()
    };

    let model = series.to_model(family)?;
    let result = fit_curve(&model, objective, &options)?;
    let (inference, inference_error) = match infer(&model, &result, convention, a.level) {
        Ok(r) => (Some(r), None),
        Err(e) => {
            eprintln!("warning: inference unavailable: {e}");
            (None, Some(e.to_string()))
        }
    };

    let mut metadata = Metadata::new("fit", a.seed);
    metadata.model = Some(family.name().into());
    metadata.objective = Some(objective.label());
    metadata.gamma = match objective {
        Objective::Tsallis(c) => Some(c.gamma()),
        Objective::LogScore => None,
    };
    metadata.sigma_convention = convention;
    metadata.level = Some(a.level);
    metadata.fit_options = Some(options);
    metadata.input = Some(InputInfo {
        path: a.input.display().to_string(),
        format: format.into(),
        series: a.series.clone(),
        region: a.region.clone(),
        kind_override: load.kind.map(|k| k.to_string()),
        transform: transform.into(),
        allow_gaps: a.allow_gaps,
        rows,
    });
    let doc = FitDocument {
        metadata,
        series,
        fit: result,
        inference,
        inference_error,
    };
    write_json(&a.out, &doc)?;

    if let Some(path) = &a.table {
        write_table(path, &[(doc.series.region.clone(), &doc)])?;
    }
    if a.plot.is_some() {
        let fc = forecast_curve(&doc.fit, plot_horizon(&doc))?;
        write_text(&sibling(&a.out, "", "svg"), &fit_panels(&doc, &fc))?;
    }
    println!(
        "fit {} ({}) on {} points: converged={} objective={}",
        family,
        doc.fit.estimator.label(),
        doc.fit.n,
        doc.fit.converged,
        doc.fit.objective
    );
    Ok(())
}

fn plot_horizon(doc: &FitDocument) -> usize {
    let last = doc.series.days.last().copied().unwrap_or(1.0);
    (2.0 * last).max(120.0) as usize
}

/// Three panels: full horizon, observed range and first differences.
fn fit_panels(doc: &FitDocument, fc: &Forecast) -> String {
    let s = &doc.series;
    let observed: Vec<(f64, f64)> = s.days.iter().copied().zip(s.values.iter().copied()).collect();
    let mut observed_daily = Vec::with_capacity(observed.len());
    for (i, &(x, y)) in observed.iter().enumerate() {
        let prev = if i == 0 { 0.0 } else { observed[i - 1].1 };
        observed_daily.push((x, y - prev));
    }
    let fitted: Vec<(f64, f64)> = fc.days.iter().copied().zip(fc.cumulative.iter().copied()).collect();
    let fitted_daily: Vec<(f64, f64)> = fc.days.iter().copied().zip(fc.daily.iter().copied()).collect();
    let label = format!("{} {}", s.region, s.series_name);
    let obs = |pts: Vec<(f64, f64)>| Series {
        label: "observed".into(),
        points: pts,
        mark: Mark::Points,
        color: PALETTE[1],
    };
    let line = |pts: Vec<(f64, f64)>| Series {
        label: format!("{} {}", doc.fit.family, doc.fit.estimator.label()),
        points: pts,
        mark: Mark::Line,
        color: PALETTE[0],
    };
    let last = s.days.last().copied().unwrap_or(1.0);
    let panels = [
        Panel {
            title: format!("{label}: {}", s.kind),
            x_label: "day".into(),
            y_label: s.kind.to_string(),
            series: vec![obs(observed.clone()), line(fitted.clone())],
            x_range: None,
        },
        Panel {
            title: format!("{label}: observed range"),
            x_label: "day".into(),
            y_label: s.kind.to_string(),
            series: vec![obs(observed), line(fitted)],
            x_range: Some((s.days[0].min(1.0), last)),
        },
        Panel {
            title: format!("{label}: first differences"),
            x_label: "day".into(),
            y_label: "per day".into(),
            series: vec![obs(observed_daily), line(fitted_daily)],
            x_range: None,
        },
    ];
    svg::panels(&panels)
}

#[derive(Serialize)]
struct PredictSummary {
    metadata: Metadata,
    horizon: usize,
    z_design: f64,
    density_mean: f64,
    density_sd: f64,
    density_integral: f64,
    inflection: f64,
    peak_day: usize,
    peak_date: Option<NaiveDate>,
    peak_x: f64,
    cumulative_at_horizon: f64,
}

pub fn predict(a: &PredictArgs) -> Result<(), CliError> {
    if a.horizon == 0 {
        return Err(CliError::invalid("--horizon must be positive"));
    }
    if let Some(z) = a.z {
        if !(z > 0.0) || !z.is_finite() {
            return Err(CliError::invalid(format!("--z must be positive, got {z}")));
        }
    }
    require_file(&a.fit, "fit document")?;
    let doc = read_fit(&a.fit)?;
    let last = doc.series.days.last().copied().unwrap_or(0.0);
    let z = a.z.unwrap_or(last + 1.0);

    let fc = forecast_curve(&doc.fit, a.horizon)?;
    let mut w = csv_writer(&a.out)?;
    w.write_record(["day", "date", "fitted", "fitted_daily", "observed"])?;
    for i in 0..fc.days.len() {
        let day = fc.days[i];
        let observed = doc
            .series
            .days
            .iter()
            .position(|d| *d == day)
            .map(|k| doc.series.values[k].to_string())
            .unwrap_or_default();
        w.write_record([
            day.to_string(),
            date_of(&doc.series, day).map(|d| d.to_string()).unwrap_or_default(),
            fc.cumulative[i].to_string(),
            fc.daily[i].to_string(),
            observed,
        ])?;
    }
    w.flush()?;

    let density = estimative_density(&doc.fit, z)?;
    let density_path = sibling(&a.out, "_density", "csv");
    let mut w = csv_writer(&density_path)?;
    w.write_record(["y", "density"])?;
    for (y, d) in density.grid.iter().zip(&density.density) {
        w.write_record([y.to_string(), d.to_string()])?;
    }
    w.flush()?;

    let summary = PredictSummary {
        metadata: Metadata::derived("predict", &doc),
        horizon: a.horizon,
        z_design: z,
        density_mean: density.mean,
        density_sd: density.sd,
        density_integral: density.integral(),
        inflection: fc.inflection,
        peak_day: fc.peak_day,
        peak_date: date_of(&doc.series, fc.peak_day as f64),
        peak_x: fc.peak_x,
        cumulative_at_horizon: *fc.cumulative.last().expect("horizon > 0"),
    };
    write_json(&sibling(&a.out, "_summary", "json"), &summary)?;

    if a.plot.is_some() {
        write_text(&sibling(&a.out, "", "svg"), &fit_panels(&doc, &fc))?;
        let panel = Panel {
            title: format!("predictive density at day {z}"),
            x_label: doc.series.series_name.clone(),
            y_label: "density".into(),
            series: vec![Series {
                label: doc.fit.estimator.label(),
                points: density.grid.iter().copied().zip(density.density.iter().copied()).collect(),
                mark: Mark::Line,
                color: PALETTE[0],
            }],
            x_range: None,
        };
        write_text(&sibling(&a.out, "_density", "svg"), &svg::panels(&[panel]))?;
    }
    println!(
        "forecast to day {}: peak day {}, predictive mean at z={} is {}",
        a.horizon, fc.peak_day, z, density.mean
    );
    Ok(())
}

#[derive(Serialize)]
struct CurveSummary {
    parameter: String,
    sup_abs: f64,
    normalized_sup_abs: f64,
}

#[derive(Serialize)]
struct DiagnoseSummary {
    metadata: Metadata,
    scaling: &'static str,
    x: f64,
    grid: GridSpec,
    weight_gamma: f64,
    half_weight_residual: f64,
    min_weight: f64,
    below_half_weight: usize,
    curves: Vec<CurveSummary>,
}

pub fn diagnose(a: &DiagnoseArgs) -> Result<(), CliError> {
    if !(a.half_width > 0.0) || !a.half_width.is_finite() {
        return Err(CliError::invalid(format!("--half-width must be positive, got {}", a.half_width)));
    }
    if a.points < 2 {
        return Err(CliError::invalid("--points must be at least 2"));
    }
    if let Some(g) = a.gamma {
        TsallisConfig::new(g)?;
    }
    if let Some(x) = a.x {
        if !(x > 0.0) || !x.is_finite() {
            return Err(CliError::invalid(format!("--x must be positive, got {x}")));
        }
    }
    require_file(&a.fit, "fit document")?;
    let doc = read_fit(&a.fit)?;
    let model = doc.series.to_model(doc.fit.family)?;
    let x = a.x.unwrap_or_else(|| doc.series.days.last().copied().unwrap_or(1.0));
    let grid = GridSpec {
        half_width_sd: a.half_width,
        points: a.points,
    };
    let curves = influence_curves(&model, &doc.fit, x, &grid)?;

    let mut w = csv_writer(&a.out)?;
    w.write_record(["parameter", "x", "y", "influence", "normalized"])?;
    for c in &curves {
        for i in 0..c.grid.len() {
            w.write_record([
                c.parameter.clone(),
                c.x.to_string(),
                c.grid[i].to_string(),
                c.values[i].to_string(),
                c.normalized[i].to_string(),
            ])?;
        }
    }
    w.flush()?;

    let cfg = match (a.gamma, doc.fit.estimator) {
        (Some(g), _) => TsallisConfig::new(g)?,
        (None, Objective::Tsallis(c)) => c,
        (None, Objective::LogScore) => TsallisConfig::default(),
    };
    let weights = observation_weights(&model, &doc.fit, &cfg);
    let residuals = model.residuals(&doc.fit.theta);
    let mut w = csv_writer(&sibling(&a.out, "_weights", "csv"))?;
    w.write_record(["day", "date", "observed", "fitted", "residual", "weight"])?;
    for i in 0..model.n() {
        let s = &doc.series;
        w.write_record([
            s.days[i].to_string(),
            s.dates[i].to_string(),
            s.values[i].to_string(),
            (s.values[i] - residuals[i]).to_string(),
            residuals[i].to_string(),
            weights[i].to_string(),
        ])?;
    }
    w.flush()?;

    let summary = DiagnoseSummary {
        metadata: Metadata::derived("diagnose", &doc),
        scaling: SCALING_NOTE,
        x,
        grid,
        weight_gamma: cfg.gamma(),
        half_weight_residual: half_weight_residual(doc.fit.theta.sigma2, &cfg),
        min_weight: weights.iter().copied().fold(1.0, f64::min),
        below_half_weight: weights.iter().filter(|w| **w < 0.5).count(),
        curves: curves
            .iter()
            .map(|c| CurveSummary {
                parameter: c.parameter.clone(),
                sup_abs: c.sup_abs,
                normalized_sup_abs: c.normalized_sup_abs,
            })
            .collect(),
    };
    write_json(&sibling(&a.out, "_summary", "json"), &summary)?;

    if a.plot.is_some() {
        let panels: Vec<Panel> = curves
            .iter()
            .map(|c| Panel {
                title: format!("influence on {} at x = {}", c.parameter, c.x),
                x_label: "y".into(),
                y_label: "normalized influence".into(),
                series: vec![Series {
                    label: doc.fit.estimator.label(),
                    points: c.grid.iter().copied().zip(c.normalized.iter().copied()).collect(),
                    mark: Mark::Line,
                    color: PALETTE[0],
                }],
                x_range: None,
            })
            .collect();
        write_text(&sibling(&a.out, "", "svg"), &svg::panels(&panels))?;
    }
    println!(
        "influence curves at x={} for {} parameters; {} of {} observations below half weight",
        x,
        curves.len(),
        summary.below_half_weight,
        model.n()
    );
    Ok(())
}

#[derive(Serialize)]
struct SimulateDocument {
    metadata: Metadata,
    report: robustfit_core::SimulationReport,
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut scenario = match &a.scenario {
        Some(path) => {
            require_file(path, "scenario")?;
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<SimScenario>(&text)
                .map_err(|e| CliError::new("json", format!("{}: {e}", path.display())))?
        }
        None => SimScenario::default(),
    };
    if let Some(reps) = a.reps {
        scenario.reps = reps;
    }
    scenario.validate()?;
    let report = robustfit_core::run_simulation(&scenario, a.seed)?;

    let mut metadata = Metadata::new("simulate", a.seed);
    metadata.model = Some(scenario.family.name().into());
    metadata.objective = Some(format!("mle vs {}", scenario.tsallis()?.label()));
    metadata.gamma = Some(scenario.gamma);
    let doc = SimulateDocument { metadata, report };
    write_json(&a.out, &doc)?;

    if a.plot.is_some() {
        let mut boxes = Vec::new();
        let mut target = None;
        for r in &doc.report.regimes {
            target = Some(r.target);
            let regime = serde_json::to_value(r.regime)?.as_str().unwrap_or_default().to_string();
            for (name, s) in [("mle", &r.mle), ("tsallis", &r.tsallis)] {
                if let Some(b) = &s.boxplot {
                    boxes.push(BoxStats {
                        label: format!("{regime} {name}"),
                        lower_whisker: b.lower_whisker,
                        q1: b.q1,
                        median: b.median,
                        q3: b.q3,
                        upper_whisker: b.upper_whisker,
                    });
                }
            }
        }
        let title = format!("predicted mean at z = {}", doc.report.z_design);
        write_text(&sibling(&a.out, "_boxplot", "svg"), &svg::boxplots(&title, &boxes, target))?;
    }
    for r in &doc.report.regimes {
        println!(
            "{:?}: target {:.3}, mle bias {:.4} (sd {:.4}), tsallis bias {:.4} (sd {:.4})",
            r.regime, r.target, r.mle.bias, r.mle.sd, r.tsallis.bias, r.tsallis.sd
        );
    }
    Ok(())
}

fn write_table(path: &Path, rows: &[(String, &FitDocument)]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["region", "e", "e_lower", "e_upper", "d", "d_lower", "d_upper"])?;
    for (label, doc) in rows {
        let inf = doc.inference.as_ref().ok_or_else(|| {
            CliError::new(
                "missing_inference",
                format!(
                    "fit for `{label}` has no inference: {}",
                    doc.inference_error.as_deref().unwrap_or("unknown reason")
                ),
            )
        })?;
        let (e, d) = match (inf.parameter("e"), inf.parameter("d")) {
            (Some(e), Some(d)) => (e, d),
            _ => return Err(CliError::invalid(format!("fit for `{label}` has e or d fixed"))),
        };
        w.write_record([
            label.clone(),
            e.estimate.to_string(),
            e.lower.to_string(),
            e.upper.to_string(),
            d.estimate.to_string(),
            d.lower.to_string(),
            d.upper.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn table(a: &TableArgs) -> Result<(), CliError> {
    if !a.labels.is_empty() && a.labels.len() != a.fits.len() {
        return Err(CliError::invalid(format!(
            "{} labels given for {} fits",
            a.labels.len(),
            a.fits.len()
        )));
    }
    for p in &a.fits {
        require_file(p, "fit document")?;
    }
    let docs = a.fits.iter().map(|p| read_fit(p)).collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<(String, &FitDocument)> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| (a.labels.get(i).cloned().unwrap_or_else(|| d.series.region.clone()), d))
        .collect();
    write_table(&a.out, &rows)?;
    println!("wrote {} rows to {}", rows.len(), a.out.display());
    Ok(())
}
