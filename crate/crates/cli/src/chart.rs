//! Grouped bar charts of held-out gains as SVG markup.
//!
//! Output depends only on the input values, so identical reports give
//! byte-identical files. Every bar is a `rect` of class `bar` carrying its
//! value in `data-value`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub label: String,
    pub value: f64,
    pub sem: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarGroup {
    pub label: String,
    pub bars: Vec<Bar>,
    /// Pairs of bar indices whose difference is significant.
    pub marks: Vec<(usize, usize)>,
}

const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];
const BAR_W: f64 = 28.0;
const GROUP_GAP: f64 = 36.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 48.0;
const PLOT_H: f64 = 240.0;
const BOTTOM: f64 = 96.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Vertical scale mapping values to y coordinates.
struct Scale {
    lo: f64,
    hi: f64,
}

impl Scale {
    fn y(&self, v: f64) -> f64 {
        TOP + (self.hi - v) / (self.hi - self.lo) * PLOT_H
    }
}

pub fn render_svg(title: &str, y_label: &str, groups: &[BarGroup]) -> Result<String> {
    if groups.is_empty() || groups.iter().all(|g| g.bars.is_empty()) {
        return Err(CliError::EmptyChart);
    }
    let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for b in groups.iter().flat_map(|g| &g.bars) {
        let (v, s) = (finite(b.value), finite(b.sem).abs());
        lo = lo.min(v - s);
        hi = hi.max(v + s);
    }
    if hi - lo <= 0.0 {
        hi = lo + 1.0;
    }
    // Headroom for significance marks.
    let span = hi - lo;
    let scale = Scale { lo, hi: hi + 0.15 * span };

    let mut series: Vec<&str> = Vec::new();
    for b in groups.iter().flat_map(|g| &g.bars) {
        if !series.contains(&b.label.as_str()) {
            series.push(&b.label);
        }
    }
    let color = |label: &str| PALETTE[series.iter().position(|s| *s == label).unwrap_or(0) % PALETTE.len()];

    let group_w: Vec<f64> = groups.iter().map(|g| g.bars.len() as f64 * BAR_W).collect();
    let plot_w: f64 = group_w.iter().sum::<f64>() + GROUP_GAP * (groups.len() as f64 + 1.0);
    let width = LEFT + plot_w + RIGHT;
    let height = TOP + PLOT_H + BOTTOM;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + PLOT_H / 2.0,
        esc(y_label)
    );

    // Axis with five ticks.
    let _ = writeln!(s, r#"<line x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{:.2}" stroke="black"/>"#, TOP + PLOT_H);
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = scale.y(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.3}" x2="{LEFT:.2}" y2="{y:.3}" stroke="black"/>"#, LEFT - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.3}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, tick(v));
    }
    let zero = scale.y(0.0);
    let _ = writeln!(
        s,
        r#"<line class="zero" x1="{LEFT:.2}" y1="{zero:.3}" x2="{:.2}" y2="{zero:.3}" stroke="gray"/>"#,
        LEFT + plot_w
    );

    let mut x = LEFT + GROUP_GAP;
    for (g, w) in groups.iter().zip(&group_w) {
        let mut centers = Vec::with_capacity(g.bars.len());
        for (i, b) in g.bars.iter().enumerate() {
            let bx = x + i as f64 * BAR_W;
            let v = finite(b.value);
            let yv = scale.y(v);
            let (top, h) = if v >= 0.0 { (yv, zero - yv) } else { (zero, yv - zero) };
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-series="{}" data-value="{:.9e}" x="{bx:.3}" y="{top:.3}" width="{:.3}" height="{h:.6}" fill="{}"><title>{}: {:.6}</title></rect>"#,
                esc(&b.label),
                v,
                BAR_W - 4.0,
                color(&b.label),
                esc(&b.label),
                v
            );
            let cx = bx + (BAR_W - 4.0) / 2.0;
            centers.push((cx, v + finite(b.sem).abs()));
            let sem = finite(b.sem).abs();
            if sem > 0.0 {
                let (y1, y2) = (scale.y(v - sem), scale.y(v + sem));
                let _ = writeln!(s, r#"<line class="sem" x1="{cx:.3}" y1="{y1:.3}" x2="{cx:.3}" y2="{y2:.3}" stroke="black"/>"#);
                for yy in [y1, y2] {
                    let _ = writeln!(s, r#"<line x1="{:.3}" y1="{yy:.3}" x2="{:.3}" y2="{yy:.3}" stroke="black"/>"#, cx - 4.0, cx + 4.0);
                }
            }
        }
        for (k, &(a, b)) in g.marks.iter().enumerate() {
            let (Some(&(xa, ta)), Some(&(xb, tb))) = (centers.get(a), centers.get(b)) else { continue };
            let y = scale.y(ta.max(tb).max(0.0)) - 8.0 - 12.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<path class="mark" d="M {xa:.3} {:.3} V {y:.3} H {xb:.3} V {:.3}" fill="none" stroke="black"/>"#,
                y + 4.0,
                y + 4.0
            );
            let _ = writeln!(s, r#"<text class="star" x="{:.3}" y="{:.3}" text-anchor="middle">*</text>"#, (xa + xb) / 2.0, y - 1.0);
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x + w / 2.0 - 2.0,
            TOP + PLOT_H + 18.0,
            esc(&g.label)
        );
        x += w + GROUP_GAP;
    }

    // Legend.
    let mut lx = LEFT;
    let ly = TOP + PLOT_H + 44.0;
    for label in &series {
        let _ = writeln!(s, r#"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="{}"/>"#, ly - 9.0, color(label));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 14.0, esc(label));
        lx += 24.0 + 7.0 * label.chars().count() as f64;
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.01 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| CliError::output(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(values: &[f64]) -> BarGroup {
        BarGroup {
            label: "g".into(),
            bars: values
                .iter()
                .enumerate()
                .map(|(i, &v)| Bar { label: format!("m{i}"), value: v, sem: 0.0 })
                .collect(),
            marks: vec![(0, 1)],
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(render_svg("t", "y", &[]), Err(CliError::EmptyChart)));
    }

    #[test]
    fn markup_is_escaped_and_stable() {
        let mut g = group(&[0.1, -0.05]);
        g.label = "a<b".into();
        let svg = render_svg("x & y", "gain", &[g.clone()]).unwrap();
        assert!(svg.contains("a&lt;b") && svg.contains("x &amp; y"));
        assert_eq!(svg, render_svg("x & y", "gain", &[g]).unwrap());
        assert_eq!(svg.matches("class=\"star\"").count(), 1);
    }
}
