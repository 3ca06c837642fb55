//! Self-contained SVG rendering of survival curves: step functions, shaded
//! confidence bands, and a number-at-risk block under the axis.
//!
//! The renderer is deliberately hand-rolled. Plotting crates pull in heavy
//! dependency trees and none of them promise byte-identical output across
//! versions, which the pipeline needs so report runs can be diffed. Every
//! coordinate goes through one fixed-precision formatter and element order is
//! a pure function of the input, so identical input gives identical bytes.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::survival::KmCurve;

/// One curve to draw. The step function is 1 before `times[0]` and constant
/// between entries, matching the product-limit estimator's shape.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    /// Event times, ascending, in axis units.
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    /// Subjects still at risk at each axis tick; must match the tick count.
    pub at_risk: Vec<usize>,
}

impl PlotSeries {
    /// Extracts the drawable pieces of a fitted curve. `ticks` become the
    /// at-risk sampling times and must be the ticks later passed in the
    /// [`PlotConfig`].
    pub fn from_km(label: impl Into<String>, curve: &KmCurve, ticks: &[f64]) -> PlotSeries {
        PlotSeries {
            label: label.into(),
            times: curve.points.iter().map(|p| p.time).collect(),
            survival: curve.points.iter().map(|p| p.survival).collect(),
            ci_lower: curve.points.iter().map(|p| p.ci_lower).collect(),
            ci_upper: curve.points.iter().map(|p| p.ci_upper).collect(),
            at_risk: ticks.iter().map(|&t| curve.at_risk_at(t)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotConfig {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Axis tick positions, strictly ascending. The first and last tick set
    /// the visible x range; curves are truncated at the last tick.
    pub x_ticks: Vec<f64>,
    /// Lower bound of the y axis, for zoomed views of high-survival cohorts.
    /// Must lie in [0, 1).
    pub y_min: f64,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig {
            title: String::new(),
            x_label: "Years since index mammogram".into(),
            y_label: "Event-free probability".into(),
            x_ticks: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            y_min: 0.0,
        }
    }
}

// Fixed geometry, in SVG user units. The at-risk block grows with the series
// count; everything else is constant so output diffs stay small.
const PLOT_LEFT: f64 = 70.0;
const PLOT_TOP: f64 = 50.0;
const PLOT_WIDTH: f64 = 460.0;
const PLOT_HEIGHT: f64 = 360.0;
const CANVAS_WIDTH: f64 = 720.0;
const AT_RISK_TOP: f64 = PLOT_TOP + PLOT_HEIGHT + 64.0;
const AT_RISK_ROW_HEIGHT: f64 = 20.0;

/// Line colors in series order, chosen to stay distinguishable in grayscale.
const PALETTE: [&str; 6] = [
    "#1f6fb2", "#d95f02", "#1b9e77", "#d62728", "#7570b3", "#66a61e",
];

/// Fixed-precision coordinate formatting. One hundredth of a user unit is
/// far below visual resolution, and a single shared formatter is what makes
/// the output byte-stable.
fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

/// Tick labels drop a fractional part that is exactly zero.
fn tick_label(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{:.0}", v.round())
    } else {
        format!("{v:.1}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

/// Renders the curves as a standalone SVG document.
///
/// Series draw in input order, and the legend and at-risk rows follow the
/// same order, so callers control stratum ordering by how they sort the
/// slice. Confidence bands are clamped to the probability window before
/// mapping to pixels, never truncated in data space.
pub fn km_plot_svg(series: &[PlotSeries], config: &PlotConfig) -> Result<String> {
    validate(series, config)?;

    let x_min = config.x_ticks[0];
    let x_max = *config.x_ticks.last().unwrap();
    let y_min = config.y_min;

    let x_px = |t: f64| PLOT_LEFT + (t.clamp(x_min, x_max) - x_min) / (x_max - x_min) * PLOT_WIDTH;
    let y_px = |s: f64| {
        let s = s.clamp(y_min.max(0.0), 1.0);
        PLOT_TOP + (1.0 - (s - y_min) / (1.0 - y_min)) * PLOT_HEIGHT
    };

    let height = AT_RISK_TOP + AT_RISK_ROW_HEIGHT * (series.len() + 1) as f64 + 16.0;
    let mut svg = String::new();
    let w = &mut svg;

    writeln!(
        w,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{cw}\" height=\"{h}\" \
         viewBox=\"0 0 {cw} {h}\" font-family=\"Helvetica, Arial, sans-serif\">",
        cw = fmt2(CANVAS_WIDTH),
        h = fmt2(height)
    )
    .unwrap();
    writeln!(
        w,
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>",
        fmt2(CANVAS_WIDTH),
        fmt2(height)
    )
    .unwrap();
    writeln!(
        w,
        "<clipPath id=\"plot-area\"><rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/></clipPath>",
        fmt2(PLOT_LEFT),
        fmt2(PLOT_TOP),
        fmt2(PLOT_WIDTH),
        fmt2(PLOT_HEIGHT)
    )
    .unwrap();

    if !config.title.is_empty() {
        writeln!(
            w,
            "<text x=\"{}\" y=\"28.00\" text-anchor=\"middle\" font-size=\"15\" \
             font-weight=\"bold\">{}</text>",
            fmt2(PLOT_LEFT + PLOT_WIDTH / 2.0),
            xml_escape(&config.title)
        )
        .unwrap();
    }

    // Horizontal grid and y tick labels, four divisions of the window.
    for i in 0..=4 {
        let s = y_min + (1.0 - y_min) * f64::from(i) / 4.0;
        let y = y_px(s);
        writeln!(
            w,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>",
            fmt2(PLOT_LEFT),
            fmt2(PLOT_LEFT + PLOT_WIDTH),
            y = fmt2(y)
        )
        .unwrap();
        writeln!(
            w,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{:.2}</text>",
            fmt2(PLOT_LEFT - 8.0),
            fmt2(y + 4.0),
            s
        )
        .unwrap();
    }

    // X ticks and labels.
    let axis_y = PLOT_TOP + PLOT_HEIGHT;
    for &t in &config.x_ticks {
        let x = x_px(t);
        writeln!(
            w,
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>",
            fmt2(axis_y),
            fmt2(axis_y + 5.0),
            x = fmt2(x)
        )
        .unwrap();
        writeln!(
            w,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
            fmt2(x),
            fmt2(axis_y + 20.0),
            tick_label(t)
        )
        .unwrap();
    }

    // Axis frame.
    writeln!(
        w,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>",
        fmt2(PLOT_LEFT),
        fmt2(PLOT_TOP),
        fmt2(PLOT_WIDTH),
        fmt2(PLOT_HEIGHT)
    )
    .unwrap();

    if !config.x_label.is_empty() {
        writeln!(
            w,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
            fmt2(PLOT_LEFT + PLOT_WIDTH / 2.0),
            fmt2(axis_y + 42.0),
            xml_escape(&config.x_label)
        )
        .unwrap();
    }
    if !config.y_label.is_empty() {
        writeln!(
            w,
            "<text x=\"20.00\" y=\"{mid}\" text-anchor=\"middle\" font-size=\"12\" \
             transform=\"rotate(-90 20.00 {mid})\">{}</text>",
            xml_escape(&config.y_label),
            mid = fmt2(PLOT_TOP + PLOT_HEIGHT / 2.0)
        )
        .unwrap();
    }

    // Confidence bands first so every curve draws on top of every band.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper = step_vertices(&s.times, &s.ci_upper, x_min, x_max, &x_px, &y_px);
        let mut lower = step_vertices(&s.times, &s.ci_lower, x_min, x_max, &x_px, &y_px);
        lower.reverse();
        let points: Vec<String> = upper
            .into_iter()
            .chain(lower)
            .map(|(x, y)| format!("{},{}", fmt2(x), fmt2(y)))
            .collect();
        writeln!(
            w,
            "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\" \
             clip-path=\"url(#plot-area)\"/>",
            points.join(" ")
        )
        .unwrap();
    }

    // Step curves.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let vertices = step_vertices(&s.times, &s.survival, x_min, x_max, &x_px, &y_px);
        let mut d = String::new();
        for (j, (x, y)) in vertices.iter().enumerate() {
            let op = if j == 0 { 'M' } else { 'L' };
            write!(d, "{op}{} {} ", fmt2(*x), fmt2(*y)).unwrap();
        }
        writeln!(
            w,
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" \
             clip-path=\"url(#plot-area)\"/>",
            d.trim_end()
        )
        .unwrap();
    }

    // Legend, to the right of the plot, in series order.
    let legend_x = PLOT_LEFT + PLOT_WIDTH + 24.0;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = PLOT_TOP + 14.0 + 22.0 * i as f64;
        writeln!(
            w,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2.5\"/>",
            fmt2(legend_x),
            fmt2(legend_x + 20.0),
            y = fmt2(y)
        )
        .unwrap();
        writeln!(
            w,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>",
            fmt2(legend_x + 26.0),
            fmt2(y + 4.0),
            xml_escape(&s.label)
        )
        .unwrap();
    }

    // Number-at-risk block.
    writeln!(
        w,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" font-weight=\"bold\">Number at risk</text>",
        fmt2(8.0),
        fmt2(AT_RISK_TOP)
    )
    .unwrap();
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = AT_RISK_TOP + AT_RISK_ROW_HEIGHT * (i + 1) as f64;
        writeln!(
            w,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{}</text>",
            fmt2(8.0),
            fmt2(y),
            xml_escape(&s.label)
        )
        .unwrap();
        for (&t, &n) in config.x_ticks.iter().zip(&s.at_risk) {
            writeln!(
                w,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{n}</text>",
                fmt2(x_px(t)),
                fmt2(y)
            )
            .unwrap();
        }
    }

    writeln!(w, "</svg>").unwrap();
    Ok(svg)
}

/// Pixel vertices of a left-continuous step function that is 1 until the
/// first time, truncated to the visible x range.
fn step_vertices(
    times: &[f64],
    values: &[f64],
    x_min: f64,
    x_max: f64,
    x_px: &impl Fn(f64) -> f64,
    y_px: &impl Fn(f64) -> f64,
) -> Vec<(f64, f64)> {
    let mut vertices = vec![(x_px(x_min), y_px(1.0))];
    let mut last = 1.0;
    for (&t, &v) in times.iter().zip(values) {
        if t > x_max {
            break;
        }
        vertices.push((x_px(t), y_px(last)));
        vertices.push((x_px(t), y_px(v)));
        last = v;
    }
    vertices.push((x_px(x_max), y_px(last)));
    vertices
}

fn validate(series: &[PlotSeries], config: &PlotConfig) -> Result<()> {
    if series.is_empty() {
        return Err(Error::InvalidInput("plot requires at least one series".into()));
    }
    if config.x_ticks.len() < 2 {
        return Err(Error::InvalidInput("plot requires at least two x ticks".into()));
    }
    if config.x_ticks.windows(2).any(|w| !(w[1] > w[0])) || config.x_ticks.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("x ticks must be finite and strictly ascending".into()));
    }
    if !(0.0..1.0).contains(&config.y_min) {
        return Err(Error::InvalidInput(format!(
            "y_min must lie in [0, 1), got {}",
            config.y_min
        )));
    }
    for s in series {
        let n = s.times.len();
        if s.survival.len() != n || s.ci_lower.len() != n || s.ci_upper.len() != n {
            return Err(Error::InvalidInput(format!(
                "series '{}' has mismatched lengths: {} times, {} survival, {} ci_lower, {} ci_upper",
                s.label,
                n,
                s.survival.len(),
                s.ci_lower.len(),
                s.ci_upper.len()
            )));
        }
        if s.at_risk.len() != config.x_ticks.len() {
            return Err(Error::InvalidInput(format!(
                "series '{}' has {} at-risk counts for {} ticks",
                s.label,
                s.at_risk.len(),
                config.x_ticks.len()
            )));
        }
        if s.times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput(format!(
                "series '{}' times must be ascending",
                s.label
            )));
        }
        let all_finite = s
            .times
            .iter()
            .chain(&s.survival)
            .chain(&s.ci_lower)
            .chain(&s.ci_upper)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidInput(format!(
                "series '{}' contains a non-finite value",
                s.label
            )));
        }
    }
    Ok(())
}
