//! Standalone SVG line charts.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

/// One line of a chart; non-finite values leave gaps.
#[derive(Debug, Clone, Copy)]
pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders equal-length series on shared axes. `shade` greys out the first
/// `shade` steps (the lookback).
pub fn svg_chart(title: &str, series: &[Series], shade: Option<usize>) -> Result<String> {
    let len = series.first().map_or(0, |s| s.values.len());
    if len == 0 {
        return Err(Error::Data("cannot plot an empty series".into()));
    }
    if let Some(s) = series.iter().find(|s| s.values.len() != len) {
        return Err(Error::Dimension(format!(
            "series '{}' has {} points, expected {len}",
            s.label,
            s.values.len()
        )));
    }
    let finite = series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return Err(Error::Data("series contain no finite values".into()));
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let step = if len > 1 { plot_w / (len - 1) as f64 } else { 0.0 };
    let x = |i: usize| MARGIN + i as f64 * step;
    let y = |v: f64| MARGIN + (hi - v) / (hi - lo) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    if let Some(k) = shade.filter(|&k| k > 0) {
        let end = x(k.min(len) - 1);
        let _ = writeln!(
            out,
            r##"<rect x="{MARGIN:.2}" y="{MARGIN:.2}" width="{:.2}" height="{plot_h:.2}" fill="#000000" fill-opacity="0.06"/>"##,
            end - MARGIN
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        MARGIN / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<polyline points="{MARGIN:.2},{MARGIN:.2} {MARGIN:.2},{:.2} {:.2},{:.2}" fill="none" stroke="black" stroke-width="1"/>"#,
        HEIGHT - MARGIN,
        WIDTH - MARGIN,
        HEIGHT - MARGIN
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.3}</text>"#,
            MARGIN - 4.0,
            y(v) + 3.0
        );
    }
    for (si, s) in series.iter().enumerate() {
        let colour = PALETTE[si % PALETTE.len()];
        let mut segment: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, out: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                    seg.join(" ")
                );
            }
            seg.clear();
        };
        for (i, v) in s.values.iter().enumerate() {
            if v.is_finite() {
                segment.push(format!("{:.2},{:.2}", x(i), y(*v)));
            } else {
                flush(&mut segment, &mut out);
            }
        }
        flush(&mut segment, &mut out);
        let ly = MARGIN + 14.0 * si as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
            WIDTH - MARGIN - 120.0,
            WIDTH - MARGIN - 100.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{}</text>"#,
            WIDTH - MARGIN - 95.0,
            ly + 4.0,
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Ground truth over lookback and horizon against a horizon-only prediction.
pub fn prediction_chart(title: &str, lookback: &[f64], truth: &[f64], prediction: &[f64]) -> Result<String> {
    if truth.len() != prediction.len() {
        return Err(Error::Dimension(format!(
            "truth has {} steps, prediction {}",
            truth.len(),
            prediction.len()
        )));
    }
    let gt: Vec<f64> = lookback.iter().chain(truth).copied().collect();
    let pred: Vec<f64> = std::iter::repeat_n(f64::NAN, lookback.len().saturating_sub(1))
        .chain(lookback.last().copied())
        .chain(prediction.iter().copied())
        .collect();
    svg_chart(
        title,
        &[
            Series {
                label: "GroundTruth",
                values: &gt,
            },
            Series {
                label: "Prediction",
                values: &pred,
            },
        ],
        Some(lookback.len()),
    )
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
