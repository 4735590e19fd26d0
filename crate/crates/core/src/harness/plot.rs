//! Static SVG path plots.

use std::fmt::Write;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;

/// Renders x-y paths on a shared, equal-aspect frame with a legend.
pub fn paths_svg(title: &str, series: &[Series]) -> String {
    let all = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let map = |x: f64, y: f64| (MARGIN + (x - x0) * scale, SIZE - MARGIN - (y - y0) * scale);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{title}</text>"#);
    let (ax, ay) = map(x0, y0);
    let _ = writeln!(
        svg,
        r##"<rect x="{ax:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#ccc"/>"##,
        ay - (y1 - y0) * scale,
        (x1 - x0) * scale,
        (y1 - y0) * scale
    );
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| {
                let (px, py) = map(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            s.color,
            pts.join(" ")
        );
        let ly = SIZE - MARGIN + 16.0;
        let lx = MARGIN + 130.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{lx}" y="{ly}" font-family="sans-serif" font-size="12" fill="{}">{}</text>"#,
            s.color, s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_series() {
        let svg = paths_svg(
            "demo",
            &[
                Series { label: "a", color: "black", points: vec![(0.0, 0.0), (1.0, 1.0)] },
                Series { label: "b", color: "red", points: vec![(0.0, 1.0), (f64::NAN, 0.0)] },
            ],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(!svg.contains("NaN"));
    }
}
