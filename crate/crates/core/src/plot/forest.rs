use std::fmt::Write as _;

use super::{c, csv_header, escape, fmt_tick, svg_open, ticks};

/// One interval on the forest plot.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestRow {
    pub outcome: String,
    pub method: String,
    pub point: f64,
    pub low: f64,
    pub high: f64,
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Intervals grouped by outcome with a reference line at zero. Methods are
/// colored in order of first appearance.
pub fn forest_svg(rows: &[ForestRow], meta: &[String]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut outcomes: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        if !outcomes.contains(&r.outcome.as_str()) {
            outcomes.push(&r.outcome);
        }
    }
    let (left, right, top, row_h) = (150.0, 30.0, 40.0, 18.0);
    let plot_w = 420.0;
    let group_gap = 10.0;
    let n_lines = rows.len() as f64;
    let plot_h = n_lines * row_h + outcomes.len() as f64 * group_gap;
    let height = top + plot_h + 70.0;
    let width = left + plot_w + right;

    let lo = rows.iter().map(|r| r.low).fold(0.0f64, f64::min);
    let hi = rows.iter().map(|r| r.high).fold(0.0f64, f64::max);
    let pad = 0.05 * (hi - lo).max(1e-9);
    let (lo, hi) = (lo - pad, hi + pad);
    let x = |v: f64| left + (v - lo) / (hi - lo) * plot_w;

    let mut s = svg_open(width, height, meta);
    let y0 = top;
    let y1 = top + plot_h;
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        c(left),
        c(y1),
        c(left + plot_w),
        c(y1)
    );
    for t in ticks(lo, hi, 6) {
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="black"/><text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            c(y1),
            c(y1 + 5.0),
            c(y1 + 18.0),
            fmt_tick(t),
            x = c(x(t))
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="gray" stroke-dasharray="4 3"/>"#,
        c(y0),
        c(y1),
        x = c(x(0.0))
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">Effect estimate (95% CI)</text>"#,
        c(left + plot_w / 2.0),
        c(y1 + 36.0)
    );

    let mut y = top;
    for outcome in &outcomes {
        y += group_gap;
        let group: Vec<&ForestRow> = rows.iter().filter(|r| r.outcome == *outcome).collect();
        let mid = y + group.len() as f64 * row_h / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            c(left - 10.0),
            c(mid + 4.0),
            escape(outcome)
        );
        for r in group {
            let color = PALETTE[methods.iter().position(|m| *m == r.method).unwrap_or(0) % PALETTE.len()];
            let yc = y + row_h / 2.0;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{yc}" x2="{}" y2="{yc}" stroke="{color}" stroke-width="2"/><rect x="{}" y="{}" width="6" height="6" fill="{color}"/>"#,
                c(x(r.low)),
                c(x(r.high)),
                c(x(r.point) - 3.0),
                c(yc - 3.0),
                yc = c(yc)
            );
            y += row_h;
        }
    }

    let mut lx = left;
    let ly = height - 12.0;
    for (i, m) in methods.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            c(lx),
            c(ly - 9.0),
            c(lx + 14.0),
            c(ly),
            escape(m)
        );
        lx += 20.0 + 7.0 * m.len() as f64;
    }
    s.push_str("</svg>\n");
    s
}

pub fn forest_csv(rows: &[ForestRow], meta: &[String]) -> String {
    let mut s = csv_header(meta);
    s.push_str("outcome,method,point,ci_low,ci_high\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.outcome, r.method, r.point, r.low, r.high);
    }
    s
}
