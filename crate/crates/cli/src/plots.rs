//! Static SVG renderings of the evaluation data files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

/// Decades shown on the violin plot's vertical axis.
const LOG_RANGE: (f64, f64) = (-6.0, 2.0);
const KDE_BANDWIDTH: f64 = 0.35;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// White (0) to dark blue (1).
fn shade(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let r = (255.0 - 222.0 * v).round() as u8;
    let g = (255.0 - 175.0 * v).round() as u8;
    let b = (255.0 - 95.0 * v).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Model × world grid of values in [0, 1] (explanation score, or pass rate
/// when no explanation was scored). Empty cells are grey.
pub fn heatmap_svg(values: &BTreeMap<(String, String), Option<f64>>) -> String {
    let models: BTreeSet<&str> = values.keys().map(|(m, _)| m.as_str()).collect();
    let worlds: BTreeSet<&str> = values.keys().map(|(_, w)| w.as_str()).collect();
    let (cell, left, top) = (56.0, 150.0, 120.0);
    let width = left + cell * worlds.len() as f64 + 20.0;
    let height = top + cell * models.len() as f64 + 20.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    for (j, world) in worlds.iter().enumerate() {
        let x = left + cell * (j as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" transform="rotate(-45 {x} {})">{}</text>"#,
            top - 8.0,
            top - 8.0,
            escape(world)
        );
    }
    for (i, model) in models.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(out, r#"<text x="8" y="{}">{}</text>"#, y + cell / 2.0 + 4.0, escape(model));
        for (j, world) in worlds.iter().enumerate() {
            let x = left + cell * j as f64;
            let value = values.get(&(model.to_string(), world.to_string())).copied().flatten();
            let (fill, label) = match value {
                Some(v) => (shade(v), format!("{v:.2}")),
                None => ("#dddddd".to_string(), "n/a".to_string()),
            };
            let ink = if value.is_some_and(|v| v > 0.6) { "white" } else { "black" };
            let _ = writeln!(
                out,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"/><text x="{}" y="{}" text-anchor="middle" fill="{ink}">{label}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn kde(points: &[f64], at: f64) -> f64 {
    let norm = 1.0 / (points.len() as f64 * KDE_BANDWIDTH * (2.0 * std::f64::consts::PI).sqrt());
    points
        .iter()
        .map(|p| (-0.5 * ((at - p) / KDE_BANDWIDTH).powi(2)).exp())
        .sum::<f64>()
        * norm
}

/// Per-world distribution of log10 normalized MSE. Infinite values are drawn
/// as crosses above the axis; the dashed line marks the pass threshold.
pub fn violin_svg(spread: &BTreeMap<String, Vec<f64>>) -> String {
    let (col, left, top, plot_h) = (80.0, 60.0, 30.0, 320.0);
    let width = left + col * spread.len() as f64 + 20.0;
    let height = top + plot_h + 110.0;
    let (lo, hi) = LOG_RANGE;
    let y_of = |v: f64| top + plot_h * (hi - v.clamp(lo, hi)) / (hi - lo);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let mut decade = lo;
    while decade <= hi {
        let y = y_of(decade);
        let _ = writeln!(
            out,
            r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#eeeeee"/><text x="{}" y="{}" text-anchor="end">1e{decade}</text>"##,
            width - 20.0,
            left - 6.0,
            y + 4.0
        );
        decade += 1.0;
    }
    let threshold = y_of(0.1f64.log10());
    let _ = writeln!(
        out,
        r#"<line x1="{left}" y1="{threshold}" x2="{}" y2="{threshold}" stroke="red" stroke-dasharray="4 3"/>"#,
        width - 20.0
    );
    for (j, (world, values)) in spread.iter().enumerate() {
        let cx = left + col * (j as f64 + 0.5);
        let finite: Vec<f64> = values
            .iter()
            .filter(|v| v.is_finite())
            .map(|v| v.max(f64::MIN_POSITIVE).log10().clamp(lo, hi))
            .collect();
        if finite.len() > 1 {
            let steps = 80;
            let samples: Vec<(f64, f64)> = (0..=steps)
                .map(|k| {
                    let v = lo + (hi - lo) * k as f64 / steps as f64;
                    (v, kde(&finite, v))
                })
                .collect();
            let peak = samples.iter().map(|s| s.1).fold(0.0, f64::max).max(1e-12);
            let half = col * 0.42;
            let mut path = String::new();
            for (k, (v, d)) in samples.iter().enumerate() {
                let _ = write!(path, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, cx + half * d / peak, y_of(*v));
            }
            for (v, d) in samples.iter().rev() {
                let _ = write!(path, "L{:.2},{:.2} ", cx - half * d / peak, y_of(*v));
            }
            let _ = writeln!(out, r##"<path d="{}Z" fill="#9ecae1" stroke="#3182bd"/>"##, path.trim_end());
        }
        for v in &finite {
            let _ = writeln!(out, r#"<circle cx="{cx}" cy="{:.2}" r="2.5" fill="black"/>"#, y_of(*v));
        }
        let infinite = values.len() - finite.len();
        if infinite > 0 {
            let _ = writeln!(
                out,
                r#"<text x="{cx}" y="{}" text-anchor="middle">× {infinite}</text>"#,
                top - 10.0
            );
        }
        let base = top + plot_h + 14.0;
        let _ = writeln!(
            out,
            r#"<text x="{cx}" y="{base}" transform="rotate(45 {cx} {base})">{}</text>"#,
            escape(world)
        );
    }
    out.push_str("</svg>\n");
    out
}
