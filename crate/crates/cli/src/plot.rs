//! Minimal SVG line plots: per series, the median over replicates with the
//! interquartile range shaded.

use std::collections::BTreeMap;
use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Linearly interpolated quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub x: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Quartiles of the finite replicates at each x.
pub fn summarize(points: &[(f64, f64)]) -> Vec<Summary> {
    let mut by_x: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for &(x, y) in points {
        if y.is_finite() {
            by_x.entry(x.to_bits()).or_insert_with(|| (x, Vec::new())).1.push(y);
        }
    }
    let mut out: Vec<Summary> = by_x
        .into_values()
        .map(|(x, mut ys)| {
            ys.sort_by(f64::total_cmp);
            Summary {
                x,
                q1: quantile(&ys, 0.25),
                median: quantile(&ys, 0.5),
                q3: quantile(&ys, 0.75),
            }
        })
        .collect();
    out.sort_by(|a, b| a.x.total_cmp(&b.x));
    out
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    while t <= hi + step * 1e-9 {
        ticks.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One SVG with a line per series. The x axis is logarithmic when every x
/// is positive and they span at least a factor 10.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<Summary>)]) -> String {
    let all: Vec<&Summary> = series.iter().flat_map(|(_, s)| s).collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, escape(title));
    if all.is_empty() {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#, WIDTH / 2.0, HEIGHT / 2.0);
        svg.push_str("</svg>\n");
        return svg;
    }
    let (xmin, xmax) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.x), b.max(s.x)));
    let log_x = xmin > 0.0 && xmax / xmin >= 10.0;
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let (xa, xb) = if tx(xmax) > tx(xmin) { (tx(xmin), tx(xmax)) } else { (tx(xmin) - 1.0, tx(xmin) + 1.0) };
    let (mut ya, mut yb) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.q1), b.max(s.q3)));
    if yb - ya < 1e-12 {
        ya -= 0.5;
        yb += 0.5;
    }
    let pad = 0.05 * (yb - ya);
    let (ya, yb) = (ya - pad, yb + pad);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |x: f64| LEFT + (tx(x) - xa) / (xb - xa) * pw;
    let py = |y: f64| TOP + (1.0 - (y - ya) / (yb - ya)) * ph;

    // axes and ticks
    let _ = writeln!(svg, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
    let mut xs: Vec<f64> = all.iter().map(|s| s.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let x_ticks = if xs.len() <= 8 { xs } else { nice_ticks(xmin, xmax) };
    for x in x_ticks {
        let xp = px(x);
        let _ = writeln!(svg, r##"<line x1="{xp:.1}" y1="{}" x2="{xp:.1}" y2="{}" stroke="#444"/>"##, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(svg, r#"<text x="{xp:.1}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, fmt_tick(x));
    }
    for y in nice_ticks(ya, yb) {
        let yp = py(y);
        let _ = writeln!(svg, r##"<line x1="{}" y1="{yp:.1}" x2="{}" y2="{yp:.1}" stroke="#ddd"/>"##, LEFT, LEFT + pw);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, yp + 4.0, fmt_tick(y));
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 18.0,
        escape(x_label),
        if log_x { " (log scale)" } else { "" }
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(y_label)
    );

    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if pts.is_empty() {
            continue;
        }
        let band: Vec<String> = pts
            .iter()
            .map(|s| format!("{:.1},{:.1}", px(s.x), py(s.q3)))
            .chain(pts.iter().rev().map(|s| format!("{:.1},{:.1}", px(s.x), py(s.q1))))
            .collect();
        let _ = writeln!(svg, r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = pts.iter().map(|s| format!("{:.1},{:.1}", px(s.x), py(s.median))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        for s in pts {
            let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(s.x), py(s.median));
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.75), 3.25);
        assert_eq!(quantile(&[7.0], 0.25), 7.0);
    }

    #[test]
    fn summaries_group_by_x_and_skip_nan() {
        let s = summarize(&[(10.0, 1.0), (100.0, 0.0), (10.0, 3.0), (10.0, f64::NAN), (100.0, 1.0)]);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0], Summary { x: 10.0, q1: 1.5, median: 2.0, q3: 2.5 });
        assert_eq!(s[1].median, 0.5);
    }

    #[test]
    fn svg_has_one_band_and_line_per_series() {
        let a = summarize(&[(100.0, 0.5), (1000.0, 0.8), (10000.0, 0.9)]);
        let b = summarize(&[(100.0, 0.4), (1000.0, 0.6)]);
        let svg = line_plot("ARI", "n", "ARI", &[("a<1>".into(), a), ("b".into(), b)]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("log scale"));
        assert!(svg.contains("a&lt;1&gt;"));
    }

    #[test]
    fn empty_plot_says_so() {
        assert!(line_plot("t", "x", "y", &[]).contains("no data"));
    }
}
