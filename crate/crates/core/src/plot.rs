//! Minimal standalone SVG plots: scatter, line and heatmap. Output depends only
//! on the data, so identical inputs give byte-identical files.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Range { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            let pad = lo.abs().max(1.0) * 0.05;
            return Range {
                lo: lo - pad,
                hi: hi + pad,
            };
        }
        let pad = (hi - lo) * 0.03;
        Range {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn map(&self, v: f64, a: f64, b: f64) -> f64 {
        a + (v - self.lo) / (self.hi - self.lo) * (b - a)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).collect()
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

struct Frame {
    x: Range,
    y: Range,
    svg: String,
}

impl Frame {
    fn new(title: &str, x_label: &str, y_label: &str, x: Range, y: Range) -> Self {
        let mut svg = String::new();
        writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        )
        .unwrap();
        writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        writeln!(
            svg,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            esc(title)
        )
        .unwrap();
        let mut f = Frame { x, y, svg };
        f.axes(x_label, y_label);
        f
    }

    fn px(&self, v: f64) -> f64 {
        self.x.map(v, MARGIN_L, WIDTH - MARGIN_R)
    }

    fn py(&self, v: f64) -> f64 {
        self.y.map(v, HEIGHT - MARGIN_B, MARGIN_T)
    }

    fn axes(&mut self, x_label: &str, y_label: &str) {
        let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
        let (y0, y1) = (HEIGHT - MARGIN_B, MARGIN_T);
        writeln!(
            self.svg,
            r##"<rect x="{x0}" y="{y1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
            x1 - x0,
            y0 - y1
        )
        .unwrap();
        for t in self.x.ticks() {
            let p = self.px(t);
            writeln!(
                self.svg,
                r##"<line x1="{p:.2}" y1="{y0}" x2="{p:.2}" y2="{:.1}" stroke="#333"/><text x="{p:.2}" y="{:.1}" text-anchor="middle">{}</text>"##,
                y0 + 5.0,
                y0 + 18.0,
                fmt_tick(t)
            )
            .unwrap();
        }
        for t in self.y.ticks() {
            let p = self.py(t);
            writeln!(
                self.svg,
                r##"<line x1="{:.1}" y1="{p:.2}" x2="{x0}" y2="{p:.2}" stroke="#333"/><text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"##,
                x0 - 5.0,
                x0 - 8.0,
                p + 4.0,
                fmt_tick(t)
            )
            .unwrap();
        }
        writeln!(
            self.svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 15.0,
            esc(x_label)
        )
        .unwrap();
        writeln!(
            self.svg,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            esc(y_label)
        )
        .unwrap();
    }

    /// Shaded vertical band per marked x value (e.g. divergent sweep points).
    fn marks(&mut self, xs: &[f64], width: f64) {
        for &x in xs {
            let a = self.px(x - width / 2.0).max(MARGIN_L);
            let b = self.px(x + width / 2.0).min(WIDTH - MARGIN_R);
            writeln!(
                self.svg,
                r##"<rect x="{a:.2}" y="{MARGIN_T}" width="{:.2}" height="{:.1}" fill="#f4c7c3" opacity="0.6"/>"##,
                (b - a).max(1.0),
                HEIGHT - MARGIN_B - MARGIN_T
            )
            .unwrap();
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

/// One named set of points.
#[derive(Debug, Clone, Default)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }
}

fn ranges(series: &[Series], extra_x: &[f64]) -> (Range, Range) {
    let x = Range::of(
        series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .chain(extra_x.iter().copied()),
    );
    let y = Range::of(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    (x, y)
}

fn legend(svg: &mut String, series: &[Series]) {
    if series.len() < 2 {
        return;
    }
    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_T + 14.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN_R - 150.0;
        writeln!(
            svg,
            r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{y:.1}">{}</text>"#,
            y - 9.0,
            PALETTE[i % PALETTE.len()],
            x + 15.0,
            esc(&s.name)
        )
        .unwrap();
    }
}

/// Scatter plot; `marks` shades vertical bands of width `mark_width` at those x values.
pub fn scatter(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    marks: &[f64],
    mark_width: f64,
) -> String {
    let (xr, yr) = ranges(series, marks);
    let mut f = Frame::new(title, x_label, y_label, xr, yr);
    f.marks(marks, mark_width);
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        for &(x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            writeln!(
                f.svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="1.2" fill="{colour}"/>"#,
                f.px(x),
                f.py(y)
            )
            .unwrap();
        }
    }
    legend(&mut f.svg, series);
    f.finish()
}

/// Line plot; non-finite points break the line.
pub fn line(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (xr, yr) = ranges(series, &[]);
    let mut f = Frame::new(title, x_label, y_label, xr, yr);
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let mut segment = String::new();
        let flush = |seg: &mut String, svg: &mut String| {
            if !seg.is_empty() {
                writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#,
                    seg.trim_end()
                )
                .unwrap();
                seg.clear();
            }
        };
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                write!(segment, "{:.2},{:.2} ", f.px(x), f.py(y)).unwrap();
            } else {
                flush(&mut segment, &mut f.svg);
            }
        }
        flush(&mut segment, &mut f.svg);
    }
    legend(&mut f.svg, series);
    f.finish()
}

/// Heatmap of `values[i][j]` at `(xs[i], ys[j])`; non-finite cells are drawn grey.
pub fn heatmap(
    title: &str,
    x_label: &str,
    y_label: &str,
    xs: &[f64],
    ys: &[f64],
    values: &[Vec<f64>],
) -> String {
    let xr = Range::of(xs.iter().copied());
    let yr = Range::of(ys.iter().copied());
    let mut f = Frame::new(title, x_label, y_label, xr, yr);
    let vr = Range::of(values.iter().flatten().copied());
    let cw = (WIDTH - MARGIN_L - MARGIN_R) / xs.len().max(1) as f64;
    let ch = (HEIGHT - MARGIN_T - MARGIN_B) / ys.len().max(1) as f64;
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let v = values[i][j];
            let fill = if v.is_finite() {
                let u = vr.map(v, 0.0, 1.0).clamp(0.0, 1.0);
                let r = (255.0 * u) as u8;
                let b = (255.0 * (1.0 - u)) as u8;
                format!("#{r:02x}40{b:02x}")
            } else {
                "#999999".to_string()
            };
            writeln!(
                f.svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                f.px(x) - cw / 2.0,
                f.py(y) - ch / 2.0,
                cw + 0.05,
                ch + 0.05
            )
            .unwrap();
        }
    }
    f.finish()
}
