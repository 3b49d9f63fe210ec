//! Dependency-free SVG figures. Every figure comes with a sidecar CSV of the
//! plotted numbers, and both carry the run metadata as comments.

mod contour;
mod forest;

use std::fmt::Write as _;

pub use contour::{contour_csv, contour_points_csv, contour_svg, marching_squares, Segment};
pub use forest::{forest_csv, forest_svg, ForestRow};

/// Fixed-precision coordinate, so output is byte-stable.
pub(crate) fn c(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

pub(crate) fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub(crate) fn svg_open(width: f64, height: f64, meta: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = c(width),
        h = c(height)
    );
    for line in meta {
        let _ = writeln!(s, "<!-- {} -->", line.replace("--", "- -"));
    }
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    s
}

pub(crate) fn csv_header(meta: &[String]) -> String {
    meta.iter().map(|l| format!("# {l}\n")).collect()
}

/// Round tick step giving roughly `target` ticks over `span`.
pub(crate) fn nice_step(span: f64, target: usize) -> f64 {
    if !(span > 0.0) {
        return 1.0;
    }
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    step * mag
}

pub(crate) fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let step = nice_step(hi - lo, target);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step + 1e-9).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

pub(crate) fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(fmt_tick(0.6000000000000001), "0.6");
        assert_eq!(fmt_tick(-0.0), "0");
        assert_eq!(ticks(-3.2, 4.1, 4), vec![-2.0, 0.0, 2.0, 4.0]);
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
        assert_eq!(c(-0.001), "0.00");
    }
}
