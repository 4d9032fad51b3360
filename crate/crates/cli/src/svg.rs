//! Minimal log-log line charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return None;
    }
    let (lo, hi) = (lo.log10().floor(), hi.log10().ceil());
    Some(if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) })
}

/// Renders the positive points of each series on log-log axes.
pub fn loglog_chart(title: &str, x_label: &str, series: &[Series]) -> String {
    let positive = |&(x, y): &(f64, f64)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite();
    let pts = || series.iter().flat_map(|s| s.points.iter().copied().filter(positive));
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0).unwrap();
    let (Some((x0, x1)), Some((y0, y1))) = (bounds(pts().map(|p| p.0)), bounds(pts().map(|p| p.1))) else {
        out.push_str("</svg>\n");
        return out;
    };
    let sx = |x: f64| PAD + (x.log10() - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y.log10() - y0) / (y1 - y0) * (H - 2.0 * PAD);
    writeln!(
        out,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    )
    .unwrap();
    for e in x0 as i32..=x1 as i32 {
        let x = sx(10f64.powi(e));
        writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{PAD}" x2="{x:.1}" y2="{:.1}" stroke="gray" stroke-width="0.3"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{e}</text>"#,
            H - PAD,
            H - PAD + 16.0
        )
        .unwrap();
    }
    for e in y0 as i32..=y1 as i32 {
        let y = sy(10f64.powi(e));
        writeln!(
            out,
            r#"<line x1="{PAD}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="gray" stroke-width="0.3"/><text x="{:.1}" y="{:.1}" text-anchor="end">1e{e}</text>"#,
            W - PAD,
            PAD - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 16.0).unwrap();
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|p| positive(p))
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        if path.is_empty() {
            continue;
        }
        writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        )
        .unwrap();
        for p in &path {
            let (cx, cy) = p.split_once(',').unwrap();
            writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#).unwrap();
        }
        let ly = PAD + 14.0 + 16.0 * k as f64;
        writeln!(
            out,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{}</text>"#,
            PAD + 8.0,
            s.name
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_contains_each_series() {
        let svg = loglog_chart(
            "t",
            "dx",
            &[
                Series {
                    name: "Nv",
                    points: vec![(0.1, 1.0), (0.05, 1.1)],
                },
                Series {
                    name: "NyT",
                    points: vec![(0.1, 1e-2), (0.05, 2.5e-3), (0.02, -1.0)],
                },
            ],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 4);
    }

    #[test]
    fn empty_chart_is_valid() {
        let svg = loglog_chart("t", "x", &[]);
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
