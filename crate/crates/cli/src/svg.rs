//! Minimal static SVG line charts.

use std::fmt::Write;

use chrono::NaiveDate;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 320.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 28.0;
const BOTTOM: f64 = 28.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Series against the row index, with inclusive row ranges in `shade`
/// drawn as grey bands. Undefined values break the line.
pub fn line_chart(
    title: &str,
    dates: &[NaiveDate],
    series: &[(&str, &[Option<f64>])],
    shade: &[(usize, usize)],
) -> String {
    let len = dates.len().max(1);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in series.iter().flat_map(|(_, s)| s.iter().flatten()) {
        if v.is_finite() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 1.0, hi + 1.0);
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |t: usize| LEFT + pw * t as f64 / (len.max(2) - 1) as f64;
    let sy = |v: f64| TOP + ph * (hi - v) / (hi - lo);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    for &(s, e) in shade {
        if s >= len {
            continue;
        }
        let (x0, x1) = (sx(s), sx(e.min(len - 1)));
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.2}" y="{TOP}" width="{:.2}" height="{ph}" fill="#bbbbbb" fill-opacity="0.4"/>"##,
            (x1 - x0).max(1.0)
        );
    }
    if lo < 0.0 && hi > 0.0 {
        let y = sy(0.0);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" x2="{:.2}" y1="{y:.2}" y2="{y:.2}" stroke="#888888" stroke-dasharray="3,3"/>"##,
            LEFT + pw
        );
    }
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333333"/>"##
    );
    for (k, (name, values)) in series.iter().enumerate() {
        let mut d = String::new();
        let mut pen = false;
        for (t, v) in values.iter().enumerate().take(len) {
            match v.filter(|v| v.is_finite()) {
                Some(v) => {
                    let _ = write!(d, "{}{:.2},{:.2} ", if pen { "L" } else { "M" }, sx(t), sy(v));
                    pen = true;
                }
                None => pen = false,
            }
        }
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1"/>"#,
            d.trim_end()
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}">{}</text>"#,
            LEFT + 8.0 + 140.0 * k as f64,
            TOP + 14.0,
            escape(name)
        );
    }
    let _ = writeln!(out, r#"<text x="{LEFT}" y="18" font-size="13">{}</text>"#, escape(title));
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{hi:.2}</text>"#,
        LEFT - 4.0,
        TOP + 4.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{lo:.2}</text>"#,
        LEFT - 4.0,
        TOP + ph
    );
    if let (Some(first), Some(last)) = (dates.first(), dates.last()) {
        let y = HEIGHT - 10.0;
        let _ = writeln!(out, r#"<text x="{LEFT}" y="{y}">{first}</text>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{y}" text-anchor="end">{last}</text>"#,
            LEFT + pw
        );
    }
    out.push_str("</svg>\n");
    out
}
