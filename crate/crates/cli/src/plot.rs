//! SVG line charts rendered from CSV columns.

use crate::config::PlotSpec;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("csv has no column `{0}`")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("no plottable rows")]
    Empty,
}

/// Per distinct x (ascending): mean, lower and upper quartile of y.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Trailing window mean; `window <= 1` is the identity.
pub fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..v.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            v[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

pub fn read_series(csv_text: &str, x: &str, y: &str) -> Result<Series, PlotError> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = r.headers().map_err(|e| PlotError::Csv(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PlotError::MissingColumn(name.to_string()))
    };
    let (xi, yi) = (col(x)?, col(y)?);
    let mut points: Vec<(f64, f64)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| PlotError::Csv(e.to_string()))?;
        let parse = |i: usize| rec.get(i).and_then(|v| v.parse::<f64>().ok());
        if let (Some(a), Some(b)) = (parse(xi), parse(yi)) {
            if a.is_finite() && b.is_finite() {
                points.push((a, b));
            }
        }
    }
    if points.is_empty() {
        return Err(PlotError::Empty);
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut s = Series {
        x: Vec::new(),
        mean: Vec::new(),
        q1: Vec::new(),
        q3: Vec::new(),
    };
    let mut i = 0;
    while i < points.len() {
        let x0 = points[i].0;
        let mut ys: Vec<f64> = points[i..].iter().take_while(|p| p.0 == x0).map(|p| p.1).collect();
        i += ys.len();
        ys.sort_by(f64::total_cmp);
        s.x.push(x0);
        s.mean.push(ys.iter().sum::<f64>() / ys.len() as f64);
        s.q1.push(quantile(&ys, 0.25));
        s.q3.push(quantile(&ys, 0.75));
    }
    Ok(s)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

fn span(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

fn path_d(xs: &[f64], ys: &[f64], sx: &dyn Fn(f64) -> f64, sy: &dyn Fn(f64) -> f64) -> String {
    let mut d = String::new();
    for (k, (x, y)) in xs.iter().zip(ys).enumerate() {
        let _ = write!(d, "{}{:.2},{:.2}", if k == 0 { "M" } else { " L" }, sx(*x), sy(*y));
    }
    d
}

/// Chart of the smoothed mean; with `iqr` also the smoothed quartile
/// edges and a shaded band between them.
pub fn render(series: &Series, spec: &PlotSpec) -> String {
    let mean = moving_average(&series.mean, spec.window);
    let q1 = moving_average(&series.q1, spec.window);
    let q3 = moving_average(&series.q3, spec.window);
    let (x0, x1) = span(series.x.iter().copied());
    let ys: Vec<f64> = if spec.iqr {
        mean.iter().chain(&q1).chain(&q3).copied().collect()
    } else {
        mean.clone()
    };
    let (y0, y1) = span(ys.into_iter());
    let sx = move |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = move |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    if !spec.title.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
            W / 2.0,
            escape(&spec.title)
        );
    }
    let _ = writeln!(
        out,
        r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - PAD,
        W - PAD,
        H - PAD
    );
    let _ = writeln!(
        out,
        r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#,
        H - PAD
    );
    for (v, x, y, anchor) in [(x0, PAD, H - PAD + 18.0, "start"), (x1, W - PAD, H - PAD + 18.0, "end")] {
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="11">{}</text>"#,
            fmt_tick(v)
        );
    }
    for (v, y) in [(y0, H - PAD), (y1, PAD)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}" text-anchor="end" font-size="11">{}</text>"#,
            PAD - 4.0,
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 10.0,
        escape(&spec.x)
    );
    if spec.iqr {
        let mut pts: Vec<String> = series
            .x
            .iter()
            .zip(&q3)
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        pts.extend(
            series
                .x
                .iter()
                .zip(&q1)
                .rev()
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))),
        );
        let _ = writeln!(
            out,
            r#"<polygon class="iqr-band" points="{}" fill="steelblue" fill-opacity="0.2" stroke="none"/>"#,
            pts.join(" ")
        );
        for (class, v) in [("q1", &q1), ("q3", &q3)] {
            let _ = writeln!(
                out,
                r#"<path class="{class}" d="{}" fill="none" stroke="steelblue" stroke-opacity="0.5"/>"#,
                path_d(&series.x, v, &sx, &sy)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<path class="mean" d="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        path_d(&series.x, &mean, &sx, &sy)
    );
    let legend = if spec.window > 1 {
        format!("{} (moving average, W={})", spec.y, spec.window)
    } else {
        spec.y.clone()
    };
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" fill="steelblue">{}</text>"#,
        PAD + 8.0,
        PAD + 14.0,
        escape(&legend)
    );
    out.push_str("</svg>\n");
    out
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn plot_csv(csv_text: &str, spec: &PlotSpec) -> Result<String, PlotError> {
    Ok(render(&read_series(csv_text, &spec.x, &spec.y)?, spec))
}
