//! Minimal self-contained SVG figures: scatter, bars, heatmap and line plots.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

#[derive(Clone, Debug, Default)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Embedded as a comment when set; leave empty for reproducible output.
    pub timestamp: Option<String>,
}

impl Figure {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), timestamp: None }
    }

    pub fn with_timestamp(mut self, ts: Option<String>) -> Self {
        self.timestamp = ts;
        self
    }
}

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub color: String,
}

impl Series {
    pub fn new(name: &str, x: Vec<f64>, y: Vec<f64>, color: &str) -> Self {
        Self { name: name.into(), x, y, color: color.into() }
    }
}

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn extent(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in v.filter(|x| x.is_finite()) {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Axes {
    x: (f64, f64),
    y: (f64, f64),
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }
    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }
}

fn header(fig: &Figure) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    if let Some(ts) = &fig.timestamp {
        let _ = writeln!(s, "<!-- generated {} -->", escape(ts));
    }
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>", W / 2.0, escape(&fig.title));
    s
}

fn frame(s: &mut String, fig: &Figure, ax: &Axes) {
    let (x0, x1, y0, y1) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(s, "<rect x=\"{x0}\" y=\"{y0}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>", x1 - x0, y1 - y0);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = ax.x.0 + f * (ax.x.1 - ax.x.0);
        let yv = ax.y.0 + f * (ax.y.1 - ax.y.0);
        let (px, py) = (ax.px(xv), ax.py(yv));
        let _ = writeln!(s, "<line x1=\"{px:.2}\" y1=\"{y1}\" x2=\"{px:.2}\" y2=\"{}\" stroke=\"black\"/>", y1 + 5.0);
        let _ = writeln!(s, "<text x=\"{px:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>", y1 + 18.0, tick(xv));
        let _ = writeln!(s, "<line x1=\"{}\" y1=\"{py:.2}\" x2=\"{x0}\" y2=\"{py:.2}\" stroke=\"black\"/>", x0 - 5.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", x0 - 8.0, py + 4.0, tick(yv));
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 15.0, escape(&fig.x_label));
    let _ = writeln!(
        s,
        "<text x=\"15\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(&fig.y_label)
    );
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn legend(s: &mut String, series: &[Series]) {
    for (i, se) in series.iter().enumerate().filter(|(_, se)| !se.name.is_empty()) {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let x = W - MARGIN - 130.0;
        let _ = writeln!(s, "<rect x=\"{x}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>", y - 9.0, se.color);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{y}\">{}</text>", x + 14.0, escape(&se.name));
    }
}

/// Scatter plot; `sizes` optionally holds one radius scale in [0, 1] per
/// point of every series.
pub fn scatter(fig: &Figure, series: &[Series], sizes: Option<&[Vec<f64>]>) -> String {
    let ax = Axes {
        x: extent(series.iter().flat_map(|s| s.x.iter().copied())),
        y: extent(series.iter().flat_map(|s| s.y.iter().copied())),
    };
    let mut s = header(fig);
    frame(&mut s, fig, &ax);
    for (k, se) in series.iter().enumerate() {
        for (i, (&x, &y)) in se.x.iter().zip(&se.y).enumerate() {
            if !(x.is_finite() && y.is_finite()) {
                continue;
            }
            let r = sizes.and_then(|v| v.get(k)).and_then(|v| v.get(i)).map_or(3.0, |v| 1.0 + 5.0 * v.clamp(0.0, 1.0));
            let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r:.2}\" fill=\"{}\" fill-opacity=\"0.8\"/>", ax.px(x), ax.py(y), se.color);
        }
    }
    legend(&mut s, series);
    s.push_str("</svg>\n");
    s
}

/// Connected line plot.
pub fn lines(fig: &Figure, series: &[Series]) -> String {
    let ax = Axes {
        x: extent(series.iter().flat_map(|s| s.x.iter().copied())),
        y: extent(series.iter().flat_map(|s| s.y.iter().copied())),
    };
    let mut s = header(fig);
    frame(&mut s, fig, &ax);
    for se in series {
        let pts: Vec<String> = se
            .x
            .iter()
            .zip(&se.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", ax.px(x), ax.py(y)))
            .collect();
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>", pts.join(" "), se.color);
    }
    legend(&mut s, series);
    s.push_str("</svg>\n");
    s
}

/// Bar chart over bin edges (`edges.len() == counts.len() + 1`).
pub fn histogram(fig: &Figure, edges: &[f64], counts: &[f64]) -> String {
    let ax = Axes { x: extent(edges.iter().copied()), y: (0.0, counts.iter().copied().fold(0.0, f64::max).max(1e-300) * 1.05) };
    let mut s = header(fig);
    frame(&mut s, fig, &ax);
    for (i, &c) in counts.iter().enumerate() {
        if i + 1 >= edges.len() || c <= 0.0 {
            continue;
        }
        let (xa, xb) = (ax.px(edges[i]), ax.px(edges[i + 1]));
        let (ya, yb) = (ax.py(c), ax.py(0.0));
        let _ = writeln!(s, "<rect x=\"{xa:.2}\" y=\"{ya:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#1f77b4\"/>", (xb - xa).max(0.5), yb - ya);
    }
    s.push_str("</svg>\n");
    s
}

/// Blue-white-red colour for `v` in [-1, 1].
fn diverging(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let (r, g, b) = if v >= 0.0 {
        (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
    } else {
        (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Square heatmap of a row-major `n x n` matrix with a symmetric colour scale.
pub fn heatmap(fig: &Figure, n: usize, data: &[f64]) -> String {
    let mut s = header(fig);
    let side = (H - 2.0 * MARGIN).min(W - 2.0 * MARGIN);
    let cell = side / n.max(1) as f64;
    let scale = data.iter().map(|v| v.abs()).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    for j in 0..n {
        for k in 0..n {
            let v = data[j * n + k] / scale;
            let _ = writeln!(
                s,
                "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"{}\"/>",
                MARGIN + k as f64 * cell,
                MARGIN + j as f64 * cell,
                cell + 0.05,
                cell + 0.05,
                diverging(v)
            );
        }
    }
    let _ = writeln!(s, "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{side}\" height=\"{side}\" fill=\"none\" stroke=\"black\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">colour range +/- {}</text>", MARGIN + side + 10.0, MARGIN + 12.0, tick(scale));
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", MARGIN + side / 2.0, H - 25.0, escape(&fig.x_label));
    s.push_str("</svg>\n");
    s
}
