//! Epidemic time series from CSV.
//!
//! Three layouts are understood: the national and regional civil-protection
//! reports (date column `data`, region column `denominazione_regione`) and a
//! generic `date,value` file. Dates are read from the first ten characters of
//! the date field, so `2020-02-24T18:00:00` and `2020-02-24` both work.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::catalog::CurveFamily;
use crate::error::{Error, Result};
use crate::model::RegressionModel;

pub const DATE_COLUMN: &str = "data";
pub const REGION_COLUMN: &str = "denominazione_regione";
pub const NATIONAL: &str = "national";

/// Columns of the civil-protection reports that are running totals.
const CUMULATIVE_COLUMNS: &[&str] = &["deceduti", "totale_casi", "dimessi_guariti", "tamponi", "casi_testati"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    National,
    Regional,
    Generic,
}

impl FromStr for Layout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "national" => Ok(Layout::National),
            "regional" => Ok(Layout::Regional),
            "generic" => Ok(Layout::Generic),
            other => Err(Error::InvalidConfig(format!(
                "unknown CSV layout `{other}` (expected national, regional or generic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Cumulative,
    Daily,
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeriesKind::Cumulative => "cumulative",
            SeriesKind::Daily => "daily",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicSeries {
    pub dates: Vec<NaiveDate>,
    /// Day index, 1 at the first row; calendar-based when gaps are allowed.
    pub days: Vec<f64>,
    pub region: String,
    pub values: Vec<f64>,
    pub kind: SeriesKind,
    pub series_name: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub layout: Layout,
    /// Series column; `value` for the generic layout.
    pub column: String,
    pub region: Option<String>,
    /// Overrides the kind inferred from the column name.
    pub kind: Option<SeriesKind>,
    pub allow_gaps: bool,
}

impl LoadOptions {
    pub fn new(layout: Layout, column: &str) -> Self {
        Self {
            layout,
            column: column.to_string(),
            region: None,
            kind: None,
            allow_gaps: false,
        }
    }

    pub fn region(mut self, region: &str) -> Self {
        self.region = Some(region.to_string());
        self
    }

    fn resolved_kind(&self) -> SeriesKind {
        self.kind.unwrap_or(match self.layout {
            Layout::Generic => SeriesKind::Cumulative,
            _ if CUMULATIVE_COLUMNS.contains(&self.column.as_str()) => SeriesKind::Cumulative,
            _ => SeriesKind::Daily,
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<EpidemicSeries> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, options)
}

fn parse_date(field: &str, line: usize) -> Result<NaiveDate> {
    let head = field.trim().get(..10).unwrap_or(field.trim());
    NaiveDate::parse_from_str(head, "%Y-%m-%d").map_err(|e| Error::Parse {
        line,
        message: format!("bad date `{field}`: {e}"),
    })
}

/// Parses CSV bytes; identical input gives an identical series.
pub fn read_csv<R: Read>(reader: R, options: &LoadOptions) -> Result<EpidemicSeries> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::UnknownColumn {
            column: name.to_string(),
            available: headers.clone(),
        })
    };
    let date_col = match options.layout {
        Layout::Generic => find("date")?,
        _ => find(DATE_COLUMN)?,
    };
    let value_col = find(&options.column)?;
    let region_col = match options.layout {
        Layout::Regional => Some(find(REGION_COLUMN)?),
        _ => None,
    };

    // date -> summed value, for the selected region (or all regions)
    let mut rows: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    let mut seen_regions: Vec<String> = Vec::new();
    let mut matched = false;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if let Some(rc) = region_col {
            let name = record.get(rc).unwrap_or("").trim().to_string();
            let keep = options.region.as_ref().map_or(true, |r| *r == name);
            if !seen_regions.contains(&name) {
                seen_regions.push(name);
            }
            if !keep {
                continue;
            }
        }
        matched = true;
        let date = parse_date(record.get(date_col).unwrap_or(""), line)?;
        let raw = record.get(value_col).unwrap_or("").trim();
        let value: f64 = raw.parse().map_err(|_| Error::Parse {
            line,
            message: format!("non-numeric value `{raw}` in column `{}`", options.column),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("non-finite value `{raw}`"),
            });
        }
        if region_col.is_none() && rows.contains_key(&date) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate date {date}"),
            });
        }
        *rows.entry(date).or_insert(0.0) += value;
    }
    let region = match (&options.layout, &options.region) {
        (Layout::Regional, Some(r)) => {
            if !matched {
                return Err(Error::UnknownRegion {
                    region: r.clone(),
                    available: seen_regions,
                });
            }
            r.clone()
        }
        (Layout::Regional, None) => NATIONAL.to_string(),
        (_, Some(r)) => {
            return Err(Error::InvalidConfig(format!(
                "region `{r}` requested but the layout has no region column"
            )))
        }
        (_, None) => NATIONAL.to_string(),
    };
    if rows.is_empty() {
        return Err(Error::DegenerateData("no data rows".into()));
    }

    let dates: Vec<NaiveDate> = rows.keys().copied().collect();
    let values: Vec<f64> = rows.values().copied().collect();
    for w in dates.windows(2) {
        if (w[1] - w[0]).num_days() != 1 && !options.allow_gaps {
            return Err(Error::DateGap {
                before: w[0].to_string(),
                after: w[1].to_string(),
            });
        }
    }
    let days = dates
        .iter()
        .map(|d| (*d - dates[0]).num_days() as f64 + 1.0)
        .collect();
    let kind = options.resolved_kind();
    let mut series = EpidemicSeries {
        dates,
        days,
        region,
        values,
        kind,
        series_name: options.column.clone(),
        warnings: Vec::new(),
    };
    if kind == SeriesKind::Cumulative {
        series.warnings = decreasing_steps(&series);
    }
    Ok(series)
}

fn decreasing_steps(series: &EpidemicSeries) -> Vec<String> {
    series
        .values
        .windows(2)
        .zip(series.dates.iter().skip(1))
        .filter(|(w, _)| w[1] < w[0])
        .map(|(w, d)| format!("{d}: cumulative value decreases from {} to {}", w[0], w[1]))
        .collect()
}

fn expect_kind(series: &EpidemicSeries, expected: SeriesKind) -> Result<()> {
    if series.kind != expected {
        return Err(Error::KindMismatch {
            expected: expected.to_string(),
            found: series.kind.to_string(),
        });
    }
    Ok(())
}

/// Running sum of a daily series.
pub fn to_cumulative(series: &EpidemicSeries) -> Result<EpidemicSeries> {
    expect_kind(series, SeriesKind::Daily)?;
    let mut acc = 0.0;
    let values = series
        .values
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    let mut out = EpidemicSeries {
        values,
        kind: SeriesKind::Cumulative,
        warnings: Vec::new(),
        ..series.clone()
    };
    out.warnings = decreasing_steps(&out);
    Ok(out)
}

/// First differences of a cumulative series; the first entry is kept as is.
/// Negative differences are preserved and reported.
pub fn to_daily(series: &EpidemicSeries) -> Result<EpidemicSeries> {
    expect_kind(series, SeriesKind::Cumulative)?;
    let mut values = Vec::with_capacity(series.values.len());
    values.extend(series.values.first().copied());
    values.extend(series.values.windows(2).map(|w| w[1] - w[0]));
    let warnings = values
        .iter()
        .zip(&series.dates)
        .filter(|(v, _)| **v < 0.0)
        .map(|(v, d)| format!("{d}: negative daily value {v} (downward revision)"))
        .collect();
    Ok(EpidemicSeries {
        values,
        kind: SeriesKind::Daily,
        warnings,
        ..series.clone()
    })
}

impl EpidemicSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_model(&self, family: CurveFamily) -> Result<RegressionModel> {
        RegressionModel::new(self.days.clone(), self.values.clone(), family)
    }

    /// Normalized CSV: date, day, region, series, kind, value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["date", "day", "region", "series", "kind", "value"])
            .map_err(csv_err)?;
        for i in 0..self.len() {
            w.write_record([
                self.dates[i].to_string(),
                self.days[i].to_string(),
                self.region.clone(),
                self.series_name.clone(),
                self.kind.to_string(),
                self.values[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NATIONAL_CSV: &str = "data,stato,terapia_intensiva,deceduti\n\
2020-02-24T18:00:00,ITA,26,7\n\
2020-02-25T18:00:00,ITA,35,10\n\
2020-02-26T18:00:00,ITA,36,12\n";

    const REGIONAL_CSV: &str = "data,stato,codice_regione,denominazione_regione,terapia_intensiva,deceduti\n\
2020-02-24T18:00:00,ITA,3,Lombardia,19,6\n\
2020-02-24T18:00:00,ITA,5,Veneto,2,1\n\
2020-02-25T18:00:00,ITA,3,Lombardia,25,9\n\
2020-02-25T18:00:00,ITA,5,Veneto,3,1\n";

    fn daily(values: &[f64]) -> EpidemicSeries {
        let start = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        EpidemicSeries {
            dates: (0..values.len()).map(|i| start + chrono::Days::new(i as u64)).collect(),
            days: (1..=values.len()).map(|i| i as f64).collect(),
            region: NATIONAL.into(),
            values: values.to_vec(),
            kind: SeriesKind::Daily,
            series_name: "x".into(),
            warnings: Vec::new(),
        }
    }

    #[test]
    fn national_deaths() {
        let s = read_csv(NATIONAL_CSV.as_bytes(), &LoadOptions::new(Layout::National, "deceduti")).unwrap();
        assert_eq!(s.values, vec![7.0, 10.0, 12.0]);
        assert_eq!(s.days, vec![1.0, 2.0, 3.0]);
        assert_eq!(s.kind, SeriesKind::Cumulative);
        let icu = read_csv(NATIONAL_CSV.as_bytes(), &LoadOptions::new(Layout::National, "terapia_intensiva")).unwrap();
        assert_eq!(icu.kind, SeriesKind::Daily);
    }

    #[test]
    fn regional_filter_and_total() {
        let opts = LoadOptions::new(Layout::Regional, "deceduti").region("Lombardia");
        let s = read_csv(REGIONAL_CSV.as_bytes(), &opts).unwrap();
        assert_eq!(s.values, vec![6.0, 9.0]);
        assert_eq!(s.region, "Lombardia");
        let all = read_csv(REGIONAL_CSV.as_bytes(), &LoadOptions::new(Layout::Regional, "deceduti")).unwrap();
        assert_eq!(all.values, vec![7.0, 10.0]);
        let bad = read_csv(REGIONAL_CSV.as_bytes(), &LoadOptions::new(Layout::Regional, "deceduti").region("Molise"));
        match bad {
            Err(Error::UnknownRegion { available, .. }) => assert_eq!(available, vec!["Lombardia", "Veneto"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_name_the_problem() {
        let bad = "data,deceduti\n2020-02-24,7\n2020-02-25,ten\n";
        match read_csv(bad.as_bytes(), &LoadOptions::new(Layout::National, "deceduti")) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("ten"));
            }
            other => panic!("{other:?}"),
        }
        match read_csv(NATIONAL_CSV.as_bytes(), &LoadOptions::new(Layout::National, "morti")) {
            Err(Error::UnknownColumn { available, .. }) => assert!(available.contains(&"deceduti".to_string())),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gaps_need_opt_in() {
        let gap = "date,value\n2020-03-01,1\n2020-03-02,2\n2020-03-05,4\n";
        let mut opts = LoadOptions::new(Layout::Generic, "value");
        assert!(matches!(read_csv(gap.as_bytes(), &opts), Err(Error::DateGap { .. })));
        opts.allow_gaps = true;
        assert_eq!(read_csv(gap.as_bytes(), &opts).unwrap().days, vec![1.0, 2.0, 5.0]);
    }

    #[test]
    fn conversions() {
        let d = daily(&[1.0, 2.0, 3.0]);
        let c = to_cumulative(&d).unwrap();
        assert_eq!(c.values, vec![1.0, 3.0, 6.0]);
        assert_eq!(to_daily(&c).unwrap().values, d.values);
        assert!(matches!(to_daily(&d), Err(Error::KindMismatch { .. })));
        assert!(matches!(to_cumulative(&c), Err(Error::KindMismatch { .. })));

        let mut revised = c.clone();
        revised.values = vec![1.0, 5.0, 4.0];
        let back = to_daily(&revised).unwrap();
        assert_eq!(back.values, vec![1.0, 4.0, -1.0]);
        assert_eq!(back.warnings.len(), 1);
    }
}
