//! Static SVG line plots: one mean line per label with a ±1 std band.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::csvio::SweepRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Mean return across seeds and the standard deviation over all of their
/// episodes, per point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub point: f64,
    pub mean: f64,
    pub std: f64,
}

/// Groups rows by label and point. Per-seed moments are combined by the
/// law of total variance, weighting seeds by their episode counts.
pub fn bands(rows: &[SweepRow]) -> BTreeMap<String, Vec<Band>> {
    let mut grouped: BTreeMap<String, BTreeMap<u64, Vec<&SweepRow>>> = BTreeMap::new();
    for r in rows {
        grouped
            .entry(r.label.clone())
            .or_default()
            .entry(r.point.to_bits())
            .or_default()
            .push(r);
    }
    grouped
        .into_iter()
        .map(|(label, points)| {
            let mut series: Vec<Band> = points
                .into_values()
                .map(|rs| {
                    let n: f64 = rs.iter().map(|r| r.episodes as f64).sum();
                    let mean = rs.iter().map(|r| r.episodes as f64 * r.mean).sum::<f64>() / n;
                    let second = rs
                        .iter()
                        .map(|r| r.episodes as f64 * (r.std * r.std + r.mean * r.mean))
                        .sum::<f64>()
                        / n;
                    Band {
                        point: rs[0].point,
                        mean,
                        std: (second - mean * mean).max(0.0).sqrt(),
                    }
                })
                .collect();
            series.sort_by(|a, b| a.point.total_cmp(&b.point));
            (label, series)
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Renders the sweep as a standalone SVG document.
pub fn sweep_svg(rows: &[SweepRow], title: &str) -> String {
    let series = bands(rows);
    let all = || series.values().flatten();
    let (x0, x1) = range(all().map(|b| b.point));
    let (y0, y1) = range(all().flat_map(|b| [b.mean - b.std, b.mean + b.std]));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let axis = rows.first().map(|r| r.axis.as_str()).unwrap_or("");

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{left},{top} L{left},{bottom} L{right},{bottom}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.3}</text>"#,
            sx(fx),
            bottom + 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{fy:.1}</text>"#,
            left - 6.0,
            sy(fy) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0,
        escape(axis)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">return</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, (label, bands)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let upper = bands.iter().map(|b| format!("{:.2},{:.2}", sx(b.point), sy(b.mean + b.std)));
        let lower = bands.iter().rev().map(|b| format!("{:.2},{:.2}", sx(b.point), sy(b.mean - b.std)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = bands
            .iter()
            .map(|b| format!("{:.2},{:.2}", sx(b.point), sy(b.mean)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            right - 90.0,
            right - 70.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            right - 64.0,
            ly + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
