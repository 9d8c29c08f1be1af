//! Minimal standalone SVG charts.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const PANEL: f64 = 260.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

pub struct Panel<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub series: Vec<Series<'a>>,
    /// Vertical marker at this x, if any.
    pub marker: Option<(f64, &'a str)>,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Stacks line-chart panels vertically.
pub fn line_panels(panels: &[Panel]) -> String {
    let height = PANEL * panels.len() as f64;
    let mut svg = header(height);
    for (i, p) in panels.iter().enumerate() {
        let top = i as f64 * PANEL;
        let (x0, x1) = bounds(p.series.iter().flat_map(|s| s.points.iter().map(|q| q.0)));
        let (y0, y1) = bounds(p.series.iter().flat_map(|s| s.points.iter().map(|q| q.1)));
        let (left, right, ptop, bottom) = (MARGIN + 10.0, WIDTH - MARGIN, top + 30.0, top + PANEL - 40.0);
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
        let sy = |y: f64| bottom - (y - y0) / (y1 - y0) * (bottom - ptop);
        axes(
            &mut svg,
            p.title,
            p.x_label,
            (left, right, ptop, bottom),
            (x0, x1, y0, y1),
        );
        for (k, s) in p.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = ptop + 14.0 * k as f64;
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{color}" text-anchor="end">{}</text>"#,
                right - 4.0,
                ly + 10.0,
                s.label
            );
        }
        if let Some((x, label)) = p.marker {
            let _ = writeln!(
                svg,
                r##"<line x1="{0:.2}" x2="{0:.2}" y1="{ptop:.2}" y2="{bottom:.2}" stroke="#555" stroke-dasharray="4 3"/><text x="{1:.2}" y="{2:.2}" font-size="11">{label}</text>"##,
                sx(x),
                sx(x) + 4.0,
                ptop + 12.0
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Vertical bars on a `[0, 1]` axis.
pub fn bar_chart(title: &str, bars: &[(&str, f64)]) -> String {
    let mut svg = header(PANEL + 40.0);
    let (left, right, top, bottom) = (MARGIN + 10.0, WIDTH - MARGIN, 30.0, PANEL);
    axes(&mut svg, title, "", (left, right, top, bottom), (0.0, 1.0, 0.0, 1.0));
    let slot = (right - left) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = v.clamp(0.0, 1.0) * (bottom - top);
        let x = left + slot * (i as f64 + 0.25);
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{}"/>"#,
            bottom - h,
            slot * 0.5,
            COLORS[i % COLORS.len()]
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{label} ({v:.3})</text>"#,
            x + slot * 0.25,
            bottom + 18.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn header(height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn axes(svg: &mut String, title: &str, x_label: &str, frame: (f64, f64, f64, f64), range: (f64, f64, f64, f64)) {
    let (left, right, top, bottom) = frame;
    let (x0, x1, y0, y1) = range;
    let _ = writeln!(
        svg,
        r##"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333"/>"##,
        right - left,
        bottom - top
    );
    let _ = writeln!(
        svg,
        r#"<text x="{left:.2}" y="{:.2}" font-size="14">{title}</text>"#,
        top - 8.0
    );
    for (v, y) in [(y0, bottom), (y1, top)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
            left - 4.0,
            y + 4.0,
            tick(v)
        );
    }
    if !x_label.is_empty() {
        for (v, x, anchor) in [(x0, left, "start"), (x1, right, "end")] {
            let _ = writeln!(
                svg,
                r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="{anchor}">{}</text>"#,
                bottom + 14.0,
                tick(v)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{x_label}</text>"#,
            (left + right) / 2.0,
            bottom + 28.0
        );
    }
}

fn tick(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e6 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let svg = line_panels(&[Panel {
            title: "score",
            x_label: "episode",
            series: vec![Series {
                label: "score",
                points: vec![(1.0, -1.0), (2.0, 0.5)],
            }],
            marker: Some((1.5, "diverged")),
        }]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        let bars = bar_chart("accuracy", &[("dqn", 0.8), ("sdl", 0.1)]);
        assert_eq!(bars.matches("<rect").count(), 4);
    }

    #[test]
    fn empty_series_still_render() {
        let svg = line_panels(&[Panel {
            title: "t",
            x_label: "x",
            series: vec![],
            marker: None,
        }]);
        assert!(svg.contains("</svg>"));
    }
}
