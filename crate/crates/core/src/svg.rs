//! Minimal SVG plots for analysis reports: one box plot per metric and a
//! radar chart of the aggregated scores. Coordinates are printed with two
//! decimals so the output is byte-stable.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::stats::{MetricReport, StatsReport};

const W: f64 = 480.0;
const H: f64 = 320.0;
const MARGIN: f64 = 48.0;

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{w:.0}" height="{h:.0}" fill="white"/>"#);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Box plot of subject means per condition.
pub fn box_plot(m: &MetricReport) -> String {
    let mut out = String::new();
    header(&mut out, W, H);
    let lo = m.boxes.iter().map(|b| b.min).fold(f64::INFINITY, f64::min).min(0.0);
    let mut hi = m.boxes.iter().map(|b| b.max).fold(f64::NEG_INFINITY, f64::max);
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        hi = lo + 1.0;
    }
    let plot_h = H - 2.0 * MARGIN;
    let y = |v: f64| H - MARGIN - (v - lo) / (hi - lo) * plot_h;
    let title = if m.unit.is_empty() { m.metric.clone() } else { format!("{} [{}]", m.metric, m.unit) };
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="20.00" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(&title)
    );
    let _ = writeln!(
        out,
        r#"<line x1="{m:.2}" y1="{:.2}" x2="{m:.2}" y2="{:.2}" stroke="black"/>"#,
        MARGIN,
        H - MARGIN,
        m = MARGIN
    );
    for (v, label) in [(lo, lo), (hi, hi)] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.2}</text>"#,
            MARGIN - 4.0,
            y(v) + 4.0,
            label
        );
    }
    let n = m.boxes.len().max(1) as f64;
    let slot = (W - 2.0 * MARGIN) / n;
    for (i, b) in m.boxes.iter().enumerate() {
        let cx = MARGIN + slot * (i as f64 + 0.5);
        let half = slot * 0.25;
        let _ = writeln!(out, r#"<g class="box" data-condition="{}">"#, escape(&b.condition));
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.min),
            y(b.max)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#cfe0f3" stroke="black"/>"##,
            cx - half,
            y(b.q3),
            2.0 * half,
            y(b.q1) - y(b.q3)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{my:.2}" x2="{:.2}" y2="{my:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half,
            my = y(b.median)
        );
        let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{:.2}" r="3.00" fill="black"/>"#, y(b.mean));
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            H - MARGIN + 16.0,
            escape(&b.condition)
        );
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

/// Radar chart with one polygon per condition.
pub fn radar_chart(report: &StatsReport) -> String {
    const SIZE: f64 = 420.0;
    const COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let mut out = String::new();
    header(&mut out, SIZE, SIZE);
    let c = SIZE / 2.0;
    let radius = SIZE / 2.0 - 60.0;
    let axes = report.radar_axes.len().max(1);
    let max = report.radar.iter().flat_map(|r| r.scores.iter().copied()).max().unwrap_or(0).max(1) as f64;
    let point = |i: usize, frac: f64| {
        let a = -PI / 2.0 + 2.0 * PI * i as f64 / axes as f64;
        (c + radius * frac * a.cos(), c + radius * frac * a.sin())
    };
    for (i, name) in report.radar_axes.iter().enumerate() {
        let (x, y) = point(i, 1.0);
        let (tx, ty) = point(i, 1.12);
        let _ = writeln!(out, r##"<line x1="{c:.2}" y1="{c:.2}" x2="{x:.2}" y2="{y:.2}" stroke="#999999"/>"##);
        let _ = writeln!(out, r#"<text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, ty + 4.0, escape(name));
    }
    for (k, row) in report.radar.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = row
            .scores
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (x, y) = point(i, *s as f64 / max);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polygon data-condition="{}" points="{}" fill="{color}" fill-opacity="0.15" stroke="{color}"/>"#,
            escape(&row.condition),
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="12.00" y="{:.2}" fill="{color}">{} ({})</text>"#,
            18.0 + 14.0 * k as f64,
            escape(&row.condition),
            row.total
        );
    }
    out.push_str("</svg>\n");
    out
}
