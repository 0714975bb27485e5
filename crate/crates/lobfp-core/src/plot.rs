//! Minimal SVG quick-look plots: line charts, density overlays, heatmaps
//! and quiver fields. These are convenience artifacts; all numeric outputs
//! go to JSON/CSV and nothing downstream consumes the SVGs.

use crate::grid::Grid2D;
use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 50.0;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn finite_bounds(series: &[Series]) -> Option<(f64, f64, f64, f64)> {
    let mut b: Option<(f64, f64, f64, f64)> = None;
    for s in series {
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            b = Some(match b {
                None => (x, x, y, y),
                Some((x0, x1, y0, y1)) => (x0.min(x), x1.max(x), y0.min(y), y1.max(y)),
            });
        }
    }
    b
}

/// Multi-series line plot.
pub fn line_plot(title: &str, x_label: &str, series: &[Series]) -> String {
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="{W}" height="{H}" fill="white"/><text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );
    if let Some((x0, x1, y0, y1)) = finite_bounds(series) {
        let xs = (x1 - x0).max(1e-12);
        let ys = (y1 - y0).max(1e-12);
        let px = |x: f64| MARGIN + (x - x0) / xs * (W - 2.0 * MARGIN);
        let py = |y: f64| H - MARGIN - (y - y0) / ys * (H - 2.0 * MARGIN);
        // axes
        let _ = write!(
            svg,
            r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
            m = MARGIN,
            b = H - MARGIN,
            r = W - MARGIN,
            t = MARGIN
        );
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 12.0,
            xml_escape(x_label)
        );
        for (tx, v) in [(x0, x0), (x1, x1)] {
            let _ = write!(
                svg,
                r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{v:.3}</text>"#,
                px(tx),
                H - MARGIN + 16.0
            );
        }
        for (ty, v) in [(y0, y0), (y1, y1)] {
            let _ = write!(
                svg,
                r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{v:.3}</text>"#,
                MARGIN - 6.0,
                py(ty) + 4.0
            );
        }
        for (si, s) in series.iter().enumerate() {
            let mut path = String::new();
            let mut first = true;
            for &(x, y) in &s.points {
                if !x.is_finite() || !y.is_finite() {
                    first = true;
                    continue;
                }
                let _ = write!(
                    path,
                    "{}{:.2},{:.2} ",
                    if first { "M" } else { "L" },
                    px(x),
                    py(y)
                );
                first = false;
            }
            let _ = write!(
                svg,
                r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                path.trim(),
                s.color
            );
            let _ = write!(
                svg,
                r#"<text x="{}" y="{}" font-size="11" fill="{}">{}</text>"#,
                W - MARGIN - 120.0,
                MARGIN + 16.0 * (si as f64 + 1.0),
                s.color,
                xml_escape(s.label)
            );
        }
    }
    svg.push_str("</svg>");
    svg
}

/// Heatmap of a 2D grid (level plot); undefined cells are left white.
pub fn heatmap(title: &str, grid: &Grid2D) -> String {
    let (nx, ny) = (grid.nx(), grid.ny());
    let vals: Vec<f64> = grid
        .values
        .iter()
        .flatten()
        .filter_map(|v| *v)
        .filter(|v| v.is_finite())
        .collect();
    let (lo, hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = (hi - lo).max(1e-12);
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="{W}" height="{H}" fill="white"/><text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );
    let cw = (W - 2.0 * MARGIN) / nx as f64;
    let ch = (H - 2.0 * MARGIN) / ny as f64;
    for i in 0..nx {
        for j in 0..ny {
            if let Some(v) = grid.values[i][j] {
                let t = ((v - lo) / span).clamp(0.0, 1.0);
                let r = (255.0 * t) as u8;
                let b = (255.0 * (1.0 - t)) as u8;
                let g = (128.0 * (1.0 - (2.0 * t - 1.0).abs())) as u8;
                let _ = write!(
                    svg,
                    r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="rgb({r},{g},{b})"/>"#,
                    MARGIN + i as f64 * cw,
                    H - MARGIN - (j as f64 + 1.0) * ch,
                    cw + 0.5,
                    ch + 0.5
                );
            }
        }
    }
    svg.push_str("</svg>");
    svg
}

/// Arrow plot of a vector field given on a common grid.
pub fn quiver(title: &str, fx: &Grid2D, fy: &Grid2D) -> String {
    let (nx, ny) = (fx.nx(), fx.ny());
    let mut maxmag = 1e-12f64;
    for i in 0..nx {
        for j in 0..ny {
            if let (Some(a), Some(b)) = (fx.values[i][j], fy.values[i][j]) {
                maxmag = maxmag.max((a * a + b * b).sqrt());
            }
        }
    }
    let cw = (W - 2.0 * MARGIN) / nx as f64;
    let ch = (H - 2.0 * MARGIN) / ny as f64;
    let scale = 0.9 * cw.min(ch) / maxmag;
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="{W}" height="{H}" fill="white"/><text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );
    for i in 0..nx {
        for j in 0..ny {
            if let (Some(a), Some(b)) = (fx.values[i][j], fy.values[i][j]) {
                let cx = MARGIN + (i as f64 + 0.5) * cw;
                let cy = H - MARGIN - (j as f64 + 0.5) * ch;
                let ex = cx + a * scale;
                let ey = cy - b * scale;
                let _ = write!(
                    svg,
                    r#"<line x1="{cx:.1}" y1="{cy:.1}" x2="{ex:.1}" y2="{ey:.1}" stroke="steelblue" stroke-width="1"/><circle cx="{ex:.1}" cy="{ey:.1}" r="1.2" fill="steelblue"/>"#
                );
            }
        }
    }
    svg.push_str("</svg>");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_emit_valid_looking_svg() {
        let s = line_plot(
            "drift",
            "x",
            &[Series {
                label: "f",
                color: "crimson",
                points: vec![(0.0, 0.5), (1.0, 0.0), (2.0, -0.5)],
            }],
        );
        assert!(s.starts_with("<svg") && s.ends_with("</svg>"));
        assert!(s.contains("crimson"));
        let mut g = Grid2D::uniform(4, 4, 4.0, 4.0);
        for i in 0..4 {
            for j in 0..4 {
                g.values[i][j] = Some((i + j) as f64);
            }
        }
        let h = heatmap("u", &g);
        assert!(h.contains("rect"));
        let q = quiver("field", &g, &g);
        assert!(q.contains("line"));
    }
}
