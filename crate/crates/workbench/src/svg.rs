//! Minimal deterministic SVG plots: line/scatter series and heatmaps.
//!
//! Output depends only on the input (fixed layout, fixed number formatting), so
//! identical data produce byte-identical documents.

use std::fmt::Write;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SvgError {
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("nothing to plot: {0}")]
    Empty(String),
    #[error("heatmap has {got} values, expected {expected}")]
    Shape { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStyle {
    /// Polyline through the points, plus markers when there are few points.
    Line,
    /// Markers only.
    Markers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub style: SeriesStyle,
    pub series: Vec<Series>,
}

/// Values on a regular `ny x nx` grid, row-major with row 0 at the bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_ticks: Vec<f64>,
    pub y_ticks: Vec<f64>,
    pub values: Vec<f64>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const MAX_MARKERS: usize = 60;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Fixed-precision number for coordinates.
fn c(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn tick_label(v: f64, step: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().max(step.abs());
    if !(1e-3..1e5).contains(&mag) {
        return format!("{v:.2e}");
    }
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.decimals$}");
    if s.starts_with("-0") && s.trim_start_matches(['-', '0', '.']).is_empty() {
        "0".into()
    } else {
        s
    }
}

/// Range padded for degenerate data.
fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 0.5 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn nice_step(range: f64, target: usize) -> f64 {
    let raw = range / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let step = nice_step(hi - lo, 5);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), step)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"12\">",
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        c((LEFT + WIDTH - RIGHT) / 2.0),
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, x_ticks: bool, y_ticks: bool) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        "<g class=\"axes\" stroke=\"black\" fill=\"none\"><rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/></g>",
        c(x0),
        c(y0),
        c(x1 - x0),
        c(y1 - y0)
    );
    if x_ticks {
        let (tx, step) = ticks(f.x.0, f.x.1);
        for v in tx {
            let p = f.px(v);
            let _ = writeln!(
                out,
                "<line x1=\"{p}\" y1=\"{y1}\" x2=\"{p}\" y2=\"{y2}\" stroke=\"black\"/>\
                 <text x=\"{p}\" y=\"{ty}\" text-anchor=\"middle\">{}</text>",
                tick_label(v, step),
                p = c(p),
                y1 = c(y1),
                y2 = c(y1 + 5.0),
                ty = c(y1 + 19.0)
            );
        }
    }
    if y_ticks {
        let (ty, step) = ticks(f.y.0, f.y.1);
        for v in ty {
            let p = f.py(v);
            let _ = writeln!(
                out,
                "<line x1=\"{x1}\" y1=\"{p}\" x2=\"{x0}\" y2=\"{p}\" stroke=\"black\"/>\
                 <text x=\"{tx}\" y=\"{ty}\" text-anchor=\"end\">{}</text>",
                tick_label(v, step),
                p = c(p),
                x0 = c(x0),
                x1 = c(x0 - 5.0),
                tx = c(x0 - 8.0),
                ty = c(p + 4.0)
            );
        }
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        c((x0 + x1) / 2.0),
        c(HEIGHT - 15.0),
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"20\" y=\"{y}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {y})\">{}</text>",
        escape(y_label),
        y = c((y0 + y1) / 2.0)
    );
}

pub fn series_svg(plot: &SeriesPlot) -> Result<String, SvgError> {
    if plot.series.iter().all(|s| s.points.is_empty()) {
        return Err(SvgError::Empty(plot.title.clone()));
    }
    for s in &plot.series {
        if s.points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(SvgError::NonFinite(format!("series `{}`", s.label)));
        }
    }
    let all = || plot.series.iter().flat_map(|s| s.points.iter());
    let frame = Frame { x: bounds(all().map(|p| p.0)), y: bounds(all().map(|p| p.1)) };
    let mut out = String::new();
    header(&mut out, &plot.title);
    axes(&mut out, &frame, &plot.x_label, &plot.y_label, true, true);
    for (k, s) in plot.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(out, "<g class=\"series\" data-label=\"{}\">", escape(&s.label));
        if plot.style == SeriesStyle::Line && s.points.len() >= 2 {
            let pts: Vec<String> =
                s.points.iter().map(|&(x, y)| format!("{},{}", c(frame.px(x)), c(frame.py(y)))).collect();
            let _ = writeln!(
                out,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
                pts.join(" ")
            );
        }
        if plot.style == SeriesStyle::Markers || s.points.len() <= MAX_MARKERS {
            for &(x, y) in &s.points {
                let _ = writeln!(
                    out,
                    "<circle class=\"marker\" cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{color}\"/>",
                    c(frame.px(x)),
                    c(frame.py(y))
                );
            }
        }
        let _ = writeln!(out, "</g>");
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            out,
            "<g class=\"legend\"><line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>\
             <text x=\"{}\" y=\"{}\">{}</text></g>",
            c(lx),
            c(lx + 20.0),
            c(lx + 26.0),
            c(ly + 4.0),
            escape(&s.label),
            ly = c(ly)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Piecewise-linear interpolation through a perceptually ordered palette.
fn color(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

pub fn heatmap_svg(h: &Heatmap) -> Result<String, SvgError> {
    let (nx, ny) = (h.x_ticks.len(), h.y_ticks.len());
    if nx == 0 || ny == 0 {
        return Err(SvgError::Empty(h.title.clone()));
    }
    if h.values.len() != nx * ny {
        return Err(SvgError::Shape { got: h.values.len(), expected: nx * ny });
    }
    if h.values.iter().chain(&h.x_ticks).chain(&h.y_ticks).any(|v| !v.is_finite()) {
        return Err(SvgError::NonFinite(format!("heatmap `{}`", h.title)));
    }
    let (lo, hi) = bounds(h.values.iter().copied());
    let frame = Frame { x: (0.0, nx as f64), y: (0.0, ny as f64) };
    let mut out = String::new();
    header(&mut out, &h.title);
    let (cw, ch) = (frame.px(1.0) - frame.px(0.0), frame.py(0.0) - frame.py(1.0));
    let _ = writeln!(out, "<g class=\"cells\">");
    for j in 0..ny {
        for i in 0..nx {
            let v = h.values[j * nx + i];
            let _ = writeln!(
                out,
                "<rect class=\"cell\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                c(frame.px(i as f64)),
                c(frame.py(j as f64 + 1.0)),
                c(cw),
                c(ch),
                color((v - lo) / (hi - lo))
            );
        }
    }
    let _ = writeln!(out, "</g>");
    axes(&mut out, &frame, &h.x_label, &h.y_label, false, false);
    // Label at most ~8 ticks per axis, centred on their cells.
    let stride = |n: usize| n.div_ceil(8).max(1);
    let step_of = |t: &[f64]| if t.len() > 1 { (t[1] - t[0]).abs().max(f64::MIN_POSITIVE) } else { 1.0 };
    let (sx, sy) = (step_of(&h.x_ticks), step_of(&h.y_ticks));
    for i in (0..nx).step_by(stride(nx)) {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            c(frame.px(i as f64 + 0.5)),
            c(HEIGHT - BOTTOM + 18.0),
            tick_label(h.x_ticks[i], sx)
        );
    }
    for j in (0..ny).step_by(stride(ny)) {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            c(LEFT - 8.0),
            c(frame.py(j as f64 + 0.5) + 4.0),
            tick_label(h.y_ticks[j], sy)
        );
    }
    // Color bar.
    let (bx, bw, steps) = (WIDTH - RIGHT + 30.0, 18.0, 32);
    let bh = (HEIGHT - TOP - BOTTOM) / steps as f64;
    let _ = writeln!(out, "<g class=\"colorbar\">");
    for k in 0..steps {
        let _ = writeln!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
            c(bx),
            c(HEIGHT - BOTTOM - bh * (k + 1) as f64),
            c(bw),
            c(bh + 0.5),
            color((k as f64 + 0.5) / steps as f64)
        );
    }
    let span = (hi - lo).abs();
    for (v, y) in [(lo, HEIGHT - BOTTOM), (hi, TOP)] {
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\">{}</text>", c(bx + bw + 6.0), c(y + 4.0), tick_label(v, span / 10.0));
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    Ok(out)
}
