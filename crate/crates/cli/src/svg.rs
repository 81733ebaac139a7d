//! Minimal standalone SVG line charts with a shaded ±sd band.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use debias_core::data::write_atomic;

/// One curve: `(x, mean, sd)` points in drawing order.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64, f64)>,
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 48.0;
const TICKS: usize = 5;

/// Renders `series` to SVG text. Output depends only on the input values.
pub fn render_svg(series: &Series) -> Result<String> {
    if series.points.len() < 2 {
        bail!("`{}`: a line chart needs at least 2 points, got {}", series.title, series.points.len());
    }
    if let Some(i) = series
        .points
        .iter()
        .position(|&(x, m, s)| !(x.is_finite() && m.is_finite() && s.is_finite()))
    {
        bail!("`{}`: point {i} is not finite: {:?}", series.title, series.points[i]);
    }

    let (x_lo, x_hi) = bounds(series.points.iter().map(|p| p.0));
    let (y_lo, y_hi) = bounds(series.points.iter().flat_map(|&(_, m, s)| [m - s.abs(), m + s.abs()]));
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| MARGIN_TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(&series.title)
    );

    // Axes and ticks.
    let (left, right, top, bottom) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT, MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        w,
        r#"<path d="M{left:.2},{top:.2} L{left:.2},{bottom:.2} L{right:.2},{bottom:.2}" fill="none" stroke="black"/>"#
    );
    for k in 0..=TICKS {
        let t = k as f64 / TICKS as f64;
        let (xv, yv) = (x_lo + t * (x_hi - x_lo), y_lo + t * (y_hi - y_lo));
        let (x, y) = (px(xv), py(yv));
        let _ = writeln!(
            w,
            r#"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            bottom + 4.0,
            bottom + 16.0,
            tick_label(xv)
        );
        let _ = writeln!(
            w,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 4.0,
            left - 6.0,
            y + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 10.0,
        escape(&series.x_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="16" y="{0:.2}" text-anchor="middle" transform="rotate(-90 16 {0:.2})">{1}</text>"#,
        (top + bottom) / 2.0,
        escape(&series.y_label)
    );

    // ±sd band: upper edge left to right, lower edge back.
    let mut band = String::new();
    for &(x, m, s) in &series.points {
        let _ = write!(band, "{:.2},{:.2} ", px(x), py(m + s.abs()));
    }
    for &(x, m, s) in series.points.iter().rev() {
        let _ = write!(band, "{:.2},{:.2} ", px(x), py(m - s.abs()));
    }
    let _ = writeln!(w, r#"<polygon points="{}" fill="steelblue" fill-opacity="0.25" stroke="none"/>"#, band.trim_end());

    let line: Vec<String> = series.points.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m))).collect();
    let _ = writeln!(
        w,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        line.join(" ")
    );
    let _ = writeln!(w, "</svg>");
    Ok(out)
}

/// Renders `series` and writes it to `path` atomically.
pub fn emit_svg_line_chart(series: &Series, path: &Path) -> Result<()> {
    let text = render_svg(series)?;
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

/// Data range padded so flat series still get a visible extent.
fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn tick_label(v: f64) -> String {
    // Avoid printing "-0.000".
    let s = format!("{v:.3}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0.000".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: Vec<(f64, f64, f64)>) -> Series {
        Series {
            title: "AP vs λ".into(),
            x_label: "lambda".into(),
            y_label: "AP".into(),
            points,
        }
    }

    #[test]
    fn two_points_make_one_polyline() {
        let svg = render_svg(&series(vec![(0.0, 0.5, 0.1), (1.0, 0.7, 0.0)])).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<polygon").count(), 1);
    }

    #[test]
    fn rendering_is_byte_deterministic() {
        let s = series(vec![(0.01, 0.9, 0.02), (0.02, 0.8, 0.03), (0.03, 0.85, 0.0)]);
        assert_eq!(render_svg(&s).unwrap(), render_svg(&s).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
        emit_svg_line_chart(&s, &a).unwrap();
        emit_svg_line_chart(&s, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn rejects_nan_and_short_series() {
        assert!(render_svg(&series(vec![(0.0, f64::NAN, 0.0), (1.0, 0.0, 0.0)])).is_err());
        assert!(render_svg(&series(vec![(0.0, 0.0, 0.0)])).is_err());
        assert!(render_svg(&series(vec![])).is_err());
    }

    #[test]
    fn flat_series_still_renders() {
        let svg = render_svg(&series(vec![(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)])).unwrap();
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
