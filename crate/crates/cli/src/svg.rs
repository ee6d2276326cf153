//! Static SVG figures of samples drawn on a planar frame.

use std::fmt::Write;

use balsam::Sample;
use nalgebra::DMatrix;

const CANVAS: f64 = 520.0;
const MARGIN: f64 = 20.0;
const TITLE_HEIGHT: f64 = 24.0;

/// Maps frame coordinates to pixels, with `y` pointing up.
struct Layout {
    x0: f64,
    y0: f64,
    scale: f64,
    cell: f64,
}

impl Layout {
    fn new(coords: &DMatrix<f64>) -> Self {
        let xs: Vec<f64> = coords.column(0).iter().copied().collect();
        let ys: Vec<f64> = coords.column(1).iter().copied().collect();
        let (x0, x1) = bounds(&xs);
        let (y0, y1) = bounds(&ys);
        let step = min_step(&xs).min(min_step(&ys));
        let span = (x1 - x0).max(y1 - y0) + step;
        let scale = (CANVAS - 2.0 * MARGIN) / span;
        Self {
            x0: x0 - step / 2.0,
            y0: y1 + step / 2.0,
            scale,
            cell: step * scale,
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            MARGIN + (x - self.x0) * self.scale,
            TITLE_HEIGHT + MARGIN + (self.y0 - y) * self.scale,
        )
    }
}

fn bounds(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Smallest gap between distinct values, 1 when all values coincide.
fn min_step(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let step = s
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 1e-12)
        .fold(f64::INFINITY, f64::min);
    if step.is_finite() {
        step
    } else {
        1.0
    }
}

fn header(title: &str) -> String {
    let height = CANVAS + TITLE_HEIGHT;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{height}" viewBox="0 0 {CANVAS} {height}">"#
    )
    .unwrap();
    writeln!(out, "<title>{}</title>", escape(title)).unwrap();
    writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##).unwrap();
    writeln!(
        out,
        r##"<text x="{MARGIN}" y="{:.0}" font-family="sans-serif" font-size="14" fill="#222222">{}</text>"##,
        TITLE_HEIGHT - 6.0,
        escape(title)
    )
    .unwrap();
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn sampled_points(out: &mut String, layout: &Layout, coords: &DMatrix<f64>, sample: &Sample, fill: &str) {
    let r = (0.32 * layout.cell).max(1.5);
    for &k in sample.units() {
        let (x, y) = layout.px(coords[(k, 0)], coords[(k, 1)]);
        writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}"/>"#).unwrap();
    }
}

/// Every unit as a small grey dot, sampled units as larger red dots.
pub fn scatter(coords: &DMatrix<f64>, sample: &Sample, title: &str) -> String {
    let layout = Layout::new(coords);
    let mut out = header(title);
    let r = (0.12 * layout.cell).max(0.6);
    out.push_str(r##"<g fill="#b0b0b0">"##);
    out.push('\n');
    for k in 0..coords.nrows() {
        let (x, y) = layout.px(coords[(k, 0)], coords[(k, 1)]);
        writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}"/>"#).unwrap();
    }
    out.push_str("</g>\n");
    sampled_points(&mut out, &layout, coords, sample, "#c0392b");
    out.push_str("</svg>\n");
    out
}

/// Fill colour of the `i`-th cell, spreading hues by the golden angle.
fn cell_colour(i: usize) -> String {
    let hue = (i as f64 * 137.507_764) % 360.0;
    let lightness = [0.72, 0.82, 0.64][i % 3];
    let (r, g, b) = hsl_to_rgb(hue, 0.6, lightness);
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn hsl_to_rgb(hue: f64, saturation: f64, lightness: f64) -> (u8, u8, u8) {
    let c = (1.0 - (2.0 * lightness - 1.0).abs()) * saturation;
    let h = hue / 60.0;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = lightness - c / 2.0;
    let byte = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (byte(r), byte(g), byte(b))
}

/// Units coloured by the Voronoi cell of their nearest sampled unit.
pub fn voronoi(coords: &DMatrix<f64>, sample: &Sample, cell_of: &[usize], title: &str) -> String {
    let layout = Layout::new(coords);
    let mut out = header(title);
    let side = layout.cell;
    for (k, &cell) in cell_of.iter().enumerate() {
        let (x, y) = layout.px(coords[(k, 0)], coords[(k, 1)]);
        writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{side:.2}" height="{side:.2}" fill="{}"/>"#,
            x - side / 2.0,
            y - side / 2.0,
            cell_colour(cell)
        )
        .unwrap();
    }
    sampled_points(&mut out, &layout, coords, sample, "#111111");
    out.push_str("</svg>\n");
    out
}
