//! Standalone SVG line charts of report CSVs.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureOptions {
    pub title: String,
    pub log_y: bool,
    pub width: f64,
    pub height: f64,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            title: String::new(),
            log_y: false,
            width: 800.0,
            height: 500.0,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Reads series from a report CSV. `#` lines are skipped. With a `method`
/// column, rows are grouped by method in order of first appearance and the
/// `mean_objective` column is plotted against `t`; otherwise the second
/// column is plotted against the first.
pub fn read_series(text: &str) -> Result<Vec<Series>> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let bad = |msg: String| Error::InvalidParameter { name: "report", reason: msg };
    let (label_col, x_col, y_col) = match col("method") {
        Some(m) => (
            Some(m),
            col("t").ok_or_else(|| bad("missing `t` column".into()))?,
            col("mean_objective").ok_or_else(|| bad("missing `mean_objective` column".into()))?,
        ),
        None if headers.len() >= 2 => (None, 0, 1),
        None => return Err(Error::EmptyReport),
    };
    let default_label = headers.get(y_col).unwrap_or("y").to_string();
    let mut out: Vec<Series> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            s.trim().parse().map_err(|_| bad(format!("bad number `{s}`")))
        };
        let (x, y) = (num(x_col)?, num(y_col)?);
        let label = label_col.map_or(default_label.clone(), |c| rec.get(c).unwrap_or("").to_string());
        match out.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((x, y)),
            None => out.push(Series {
                label,
                points: vec![(x, y)],
            }),
        }
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

/// Renders series as a line chart. With `log_y`, nonpositive values are not drawn.
pub fn emit_figure(series: &[Series], opts: &FigureOptions) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::EmptyReport);
    }
    let ty = |y: f64| if opts.log_y { y.log10() } else { y };
    let visible = |p: &&(f64, f64)| p.0.is_finite() && p.1.is_finite() && (!opts.log_y || p.1 > 0.0);
    let pts = || series.iter().flat_map(|s| s.points.iter().filter(visible));
    if pts().next().is_none() {
        return Err(Error::EmptyReport);
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(ty(y));
        y1 = y1.max(ty(y));
    }
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        let pad = if y0 == 0.0 { 1.0 } else { 0.1 * y0.abs() };
        y0 -= pad;
        y1 += pad;
    }
    let (w, h) = (opts.width, opts.height);
    let (left, right, top, bottom) = (80.0, 20.0, 40.0, 50.0);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| top + (1.0 - (ty(y) - y0) / (y1 - y0)) * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if !opts.title.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            w / 2.0,
            escape(&opts.title)
        );
    }
    let (ax0, ax1, ay0, ay1) = (left, w - right, top, h - bottom);
    let _ = writeln!(
        svg,
        r#"<path d="M{ax0},{ay0} L{ax0},{ay1} L{ax1},{ay1}" fill="none" stroke="black"/>"#
    );
    for j in 0..=4 {
        let x = x0 + (x1 - x0) * j as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(x),
            ay1 + 18.0,
            tick_label(x)
        );
        let yv = y0 + (y1 - y0) * j as f64 / 4.0;
        let label = if opts.log_y { tick_label(10f64.powf(yv)) } else { tick_label(yv) };
        let ypix = top + (1.0 - j as f64 / 4.0) * (h - top - bottom);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#,
            ax0 - 6.0,
            ypix + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">iteration</text>"#,
        (ax0 + ax1) / 2.0,
        h - 10.0
    );
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .filter(visible)
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if !coords.is_empty() {
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                coords.join(" ")
            );
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = ax1 - 230.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
