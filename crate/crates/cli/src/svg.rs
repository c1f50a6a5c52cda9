//! Minimal SVG output: line/point panels and boxplots.

use std::fmt::Write as _;

pub const PALETTE: [&str; 4] = ["#1f4e99", "#c0392b", "#2e8b57", "#7d3c98"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
    pub color: &'static str,
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Optional fixed x range.
    pub x_range: Option<(f64, f64)>,
}

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 44.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Compact tick label.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e6).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    (0..)
        .map(|k| (first + k) as f64 * step)
        .take_while(|t| *t <= hi + 1e-9 * span)
        .map(|t| if t.abs() < 1e-9 * step { 0.0 } else { t })
        .collect()
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 0.0 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

fn panel_svg(out: &mut String, panel: &Panel, ox: f64, oy: f64) {
    let all = panel.series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = panel.x_range.unwrap_or_else(|| bounds(all.clone().map(|p| p.0)));
    let visible = |p: &&(f64, f64)| p.0 >= x0 && p.0 <= x1;
    let (y0, y1) = bounds(all.filter(visible).map(|p| p.1));
    let pw = PANEL_W - MARGIN_L - MARGIN_R;
    let ph = PANEL_H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| ox + MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| oy + MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let _ = writeln!(
        out,
        r##"<rect x="{:.1}" y="{:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##,
        ox + MARGIN_L,
        oy + MARGIN_T
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
        ox + MARGIN_L + pw / 2.0,
        oy + 18.0,
        esc(&panel.title)
    );
    for t in ticks(x0, x1) {
        let _ = writeln!(
            out,
            r##"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="#444"/><text x="{0:.1}" y="{3:.1}" text-anchor="middle" font-size="10">{4}</text>"##,
            sx(t),
            oy + MARGIN_T + ph,
            oy + MARGIN_T + ph + 4.0,
            oy + MARGIN_T + ph + 15.0,
            fmt_num(t)
        );
    }
    for t in ticks(y0, y1) {
        let _ = writeln!(
            out,
            r##"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="#444"/><text x="{3:.1}" y="{4:.1}" text-anchor="end" font-size="10">{5}</text>"##,
            ox + MARGIN_L - 4.0,
            sy(t),
            ox + MARGIN_L,
            ox + MARGIN_L - 6.0,
            sy(t) + 3.0,
            fmt_num(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
        ox + MARGIN_L + pw / 2.0,
        oy + PANEL_H - 8.0,
        esc(&panel.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{0:.1}" y="{1:.1}" text-anchor="middle" font-size="11" transform="rotate(-90 {0:.1} {1:.1})">{2}</text>"#,
        ox + 14.0,
        oy + MARGIN_T + ph / 2.0,
        esc(&panel.y_label)
    );

    for (k, s) in panel.series.iter().enumerate() {
        let pts: Vec<&(f64, f64)> = s.points.iter().filter(|p| p.1.is_finite()).filter(visible).collect();
        match s.mark {
            Mark::Line => {
                let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.6" points="{}"/>"#,
                    s.color,
                    path.join(" ")
                );
            }
            Mark::Points => {
                for p in pts {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.2" fill="{}"/>"#,
                        sx(p.0),
                        sy(p.1),
                        s.color
                    );
                }
            }
        }
        let ly = oy + MARGIN_T + 14.0 + 14.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="3" fill="{}"/><text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#,
            ox + MARGIN_L + 8.0,
            ly - 4.0,
            s.color,
            ox + MARGIN_L + 22.0,
            ly,
            esc(&s.label)
        );
    }
}

fn document(width: f64, height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Panels laid out side by side.
pub fn panels(panels: &[Panel]) -> String {
    let mut body = String::new();
    for (i, p) in panels.iter().enumerate() {
        panel_svg(&mut body, p, i as f64 * PANEL_W, 0.0);
    }
    document(PANEL_W * panels.len().max(1) as f64, PANEL_H, &body)
}

#[derive(Debug, Clone)]
pub struct BoxStats {
    pub label: String,
    pub lower_whisker: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub upper_whisker: f64,
}

/// Vertical boxplots with an optional horizontal reference line.
pub fn boxplots(title: &str, boxes: &[BoxStats], reference: Option<f64>) -> String {
    let w = (MARGIN_L + MARGIN_R + 90.0 * boxes.len().max(1) as f64).max(260.0);
    let h = PANEL_H;
    let values = boxes
        .iter()
        .flat_map(|b| [b.lower_whisker, b.upper_whisker])
        .chain(reference);
    let (y0, y1) = bounds(values);
    let ph = h - MARGIN_T - MARGIN_B;
    let sy = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;
    let mut body = String::new();
    let _ = writeln!(
        body,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        w / 2.0,
        esc(title)
    );
    for t in ticks(y0, y1) {
        let _ = writeln!(
            body,
            r##"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="#444"/><text x="{3:.1}" y="{4:.1}" text-anchor="end" font-size="10">{5}</text>"##,
            MARGIN_L - 4.0,
            sy(t),
            MARGIN_L,
            MARGIN_L - 6.0,
            sy(t) + 3.0,
            fmt_num(t)
        );
    }
    if let Some(r) = reference {
        let _ = writeln!(
            body,
            r##"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
            MARGIN_L,
            sy(r),
            w - MARGIN_R
        );
    }
    for (i, b) in boxes.iter().enumerate() {
        let cx = MARGIN_L + 45.0 + 90.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            body,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="{color}"/>"#,
            sy(b.upper_whisker),
            sy(b.lower_whisker)
        );
        let _ = writeln!(
            body,
            r#"<rect x="{:.1}" y="{:.1}" width="40" height="{:.1}" fill="white" stroke="{color}"/>"#,
            cx - 20.0,
            sy(b.q3),
            (sy(b.q1) - sy(b.q3)).max(0.5)
        );
        let _ = writeln!(
            body,
            r#"<line x1="{0:.1}" y1="{2:.1}" x2="{1:.1}" y2="{2:.1}" stroke="{color}" stroke-width="2"/>"#,
            cx - 20.0,
            cx + 20.0,
            sy(b.median)
        );
        // one word per line keeps neighbouring labels apart
        for (k, word) in b.label.split_whitespace().enumerate() {
            let _ = writeln!(
                body,
                r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
                h - 26.0 + 12.0 * k as f64,
                esc(word)
            );
        }
    }
    document(w, h, &body)
}
