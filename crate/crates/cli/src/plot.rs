//! Metric-versus-training-size line chart as standalone SVG.

use std::fmt::Write as _;
use std::path::Path;

use poolal_core::decimal;
use poolal_core::metrics::auc;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug)]
pub enum PlotError {
    NoSeries,
    EmptySeries(String),
    UnequalLengths,
    NonFinite(String),
    Io(std::io::Error),
}

impl std::fmt::Display for PlotError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NoSeries => write!(f, "nothing to plot"),
            Self::EmptySeries(name) => write!(f, "series {name} is empty"),
            Self::UnequalLengths => write!(f, "all series must have the same length"),
            Self::NonFinite(name) => write!(f, "series {name} contains a non-finite value"),
            Self::Io(e) => write!(f, "cannot write plot: {e}"),
        }
    }
}

impl std::error::Error for PlotError {}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub values: Vec<f64>,
}

/// One chart: the first value of every series sits at `first_size` training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub metric_name: String,
    pub first_size: usize,
    pub series: Vec<PlotSeries>,
}

/// Legend label shared with the summary table, so both show the same AUC text.
pub fn legend_label(method: &str, auc_value: f64) -> String {
    format!("{} (AUC={})", method.to_uppercase(), decimal::format(auc_value))
}

impl PlotSpec {
    fn check(&self) -> Result<usize, PlotError> {
        let first = self.series.first().ok_or(PlotError::NoSeries)?;
        let len = first.values.len();
        for s in &self.series {
            if s.values.is_empty() {
                return Err(PlotError::EmptySeries(s.name.clone()));
            }
            if s.values.len() != len {
                return Err(PlotError::UnequalLengths);
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(PlotError::NonFinite(s.name.clone()));
            }
        }
        Ok(len)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_svg(spec: &PlotSpec) -> Result<String, PlotError> {
    let len = spec.check()?;
    let all = spec.series.iter().flat_map(|s| s.values.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (y_lo, y_hi) = padded(lo, hi);
    let x_first = spec.first_size as f64;
    let x_last = (spec.first_size + len - 1) as f64;
    let (x_lo, x_hi) = if len > 1 { (x_first, x_last) } else { (x_first - 1.0, x_first + 1.0) };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    for t in 0..=TICKS {
        let frac = t as f64 / TICKS as f64;
        let yv = y_lo + frac * (y_hi - y_lo);
        let y = py(yv);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            format_tick(yv, y_hi - y_lo)
        );
    }
    let span = (x_hi - x_lo) as usize;
    let step = span.div_ceil(10).max(1);
    let mut xv = x_lo as usize;
    while xv as f64 <= x_hi {
        let x = px(xv as f64);
        let base = TOP + plot_h;
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{base:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{xv}</text>"#,
            base + 5.0,
            base + 20.0
        );
        xv += step;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">number of training samples</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&spec.metric_name)
    );

    for (k, s) in spec.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<(f64, f64)> =
            s.values.iter().enumerate().map(|(i, &v)| (px(x_first + i as f64), py(v))).collect();
        if points.len() == 1 {
            let (x, y) = points[0];
            let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#);
        } else {
            let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                coords.join(" ")
            );
        }
        let area = auc(&s.values).unwrap_or(0.0);
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(&legend_label(&s.name, area))
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn format_tick(v: f64, range: f64) -> String {
    let digits = (2.0 - range.log10().floor()).clamp(0.0, 10.0) as usize;
    let text = format!("{v:.digits$}");
    if text.trim_start_matches('-').trim_matches(|c| c == '0' || c == '.').is_empty() {
        "0".to_owned()
    } else {
        text
    }
}

pub fn emit_plot(spec: &PlotSpec, path: impl AsRef<Path>) -> Result<(), PlotError> {
    let svg = render_svg(spec)?;
    std::fs::write(path, svg).map_err(PlotError::Io)
}
