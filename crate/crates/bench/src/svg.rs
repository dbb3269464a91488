//! Minimal hand-written SVG line plots with shaded bands.

use std::fmt::Write as _;

use crate::report::CurvePoint;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Scale {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Scale {
    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn band(p: &CurvePoint) -> f64 {
    if p.half_width.is_finite() {
        p.half_width
    } else {
        0.0
    }
}

/// One polyline per series (a vertex per iteration) over a polygon for its
/// confidence band.
pub fn line_plot(title: &str, series: &[(&str, &[CurvePoint])]) -> String {
    let points = series.iter().flat_map(|(_, c)| c.iter()).filter(|p| p.mean.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.iteration as f64);
        x1 = x1.max(p.iteration as f64);
        y0 = y0.min(p.mean - band(p));
        y1 = y1.max(p.mean + band(p));
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        let pad = y0.abs().max(1.0) * 0.05;
        y0 -= pad;
        y1 += pad;
    }
    let sc = Scale { x0, x1, y0, y1 };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );
    let (bx, by) = (LEFT, HEIGHT - BOTTOM);
    let _ = writeln!(
        s,
        r#"<path d="M{bx},{TOP} L{bx},{by} L{},{by}" fill="none" stroke="black" stroke-width="1"/>"#,
        WIDTH - RIGHT
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            sc.x(xv),
            by + 18.0,
            xv.round()
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{:.4}</text>"#,
            bx - 6.0,
            sc.y(yv) + 4.0,
            yv
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">iteration</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 10.0
    );

    for (k, (name, curve)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let finite: Vec<&CurvePoint> = curve.iter().filter(|p| p.mean.is_finite()).collect();
        if !finite.is_empty() {
            let upper = finite.iter().map(|p| format!("{:.2},{:.2}", sc.x(p.iteration as f64), sc.y(p.mean + band(p))));
            let lower =
                finite.iter().rev().map(|p| format!("{:.2},{:.2}", sc.x(p.iteration as f64), sc.y(p.mean - band(p))));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                s,
                r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                poly.join(" ")
            );
            let line: Vec<String> =
                finite.iter().map(|p| format!("{:.2},{:.2}", sc.x(p.iteration as f64), sc.y(p.mean))).collect();
            let _ = writeln!(
                s,
                r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                line.join(" ")
            );
        }
        let ly = TOP + 20.0 * k as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
