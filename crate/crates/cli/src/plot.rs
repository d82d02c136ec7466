//! Minimal static SVG line charts.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub enum Style {
    Line,
    Dashed,
    Steps,
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            style: Style::Line,
        }
    }

    pub fn dashed(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            style: Style::Dashed,
        }
    }

    pub fn steps(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            style: Style::Steps,
        }
    }
}

pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|p| p.0.is_finite() && p.1.is_finite())
    {
        b = (b.0.min(*x), b.1.max(*x), b.2.min(*y), b.3.max(*y));
    }
    if !b.0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if b.1 == b.0 {
        b.1 = b.0 + 1.0;
    }
    if b.3 == b.2 {
        b = (b.0, b.1, b.2 - 0.5, b.3 + 0.5);
    }
    let pad = 0.05 * (b.3 - b.2);
    (b.0, b.1, b.2 - pad, b.3 + pad)
}

fn draw_panel(svg: &mut String, panel: &Panel, top: f64) {
    let (x0, x1, y0, y1) = bounds(&panel.series);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| top + MARGIN + (1.0 - (y - y0) / (y1 - y0)) * plot_h;
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{:.2}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##,
        top + MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        top + MARGIN / 2.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
        WIDTH / 2.0,
        top + HEIGHT - 12.0,
        escape(&panel.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {:.2})">{}</text>"#,
        top + HEIGHT / 2.0,
        top + HEIGHT / 2.0,
        escape(&panel.y_label)
    );
    for j in 0..=4 {
        let fx = x0 + (x1 - x0) * j as f64 / 4.0;
        let fy = y0 + (y1 - y0) * j as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
            sx(fx),
            top + HEIGHT - MARGIN + 14.0,
            tick(fx)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#,
            MARGIN - 4.0,
            sy(fy) + 3.0,
            tick(fy)
        );
    }
    for (j, s) in panel.series.iter().enumerate() {
        let color = PALETTE[j % PALETTE.len()];
        let mut d = String::new();
        let mut prev: Option<(f64, f64)> = None;
        for &(x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let (px, py) = (sx(x), sy(y));
            match (prev, &s.style) {
                (None, _) => {
                    let _ = write!(d, "M{px:.2},{py:.2}");
                }
                (Some(_), Style::Steps) => {
                    let _ = write!(d, " H{px:.2} V{py:.2}");
                }
                _ => {
                    let _ = write!(d, " L{px:.2},{py:.2}");
                }
            }
            prev = Some((px, py));
        }
        let dash = if matches!(s.style, Style::Dashed) {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let _ = writeln!(
            svg,
            r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.4"{dash}/>"#
        );
        let ly = top + MARGIN + 14.0 + 14.0 * j as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="11" fill="{color}" text-anchor="end">{}</text>"#,
            WIDTH - MARGIN - 6.0,
            escape(&s.label)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render panels stacked vertically.
pub fn render(panels: &[Panel]) -> String {
    let total = HEIGHT * panels.len() as f64;
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{total}" viewBox="0 0 {WIDTH} {total}" font-family="sans-serif">"#
    );
    svg.push('\n');
    svg.push_str(&format!(r#"<rect width="{WIDTH}" height="{total}" fill="white"/>"#));
    svg.push('\n');
    for (j, p) in panels.iter().enumerate() {
        draw_panel(&mut svg, p, HEIGHT * j as f64);
    }
    svg.push_str("</svg>\n");
    svg
}
