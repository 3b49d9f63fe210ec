use std::fmt::Write as _;

use super::{c, csv_header, escape, fmt_tick, svg_open, ticks};
use crate::sensitivity::ContourGrid;

/// A contour piece in data coordinates.
pub type Segment = ((f64, f64), (f64, f64));

/// Iso-lines of `values` at `level`. `values[i][j]` sits at `(xs[j], ys[i])`.
/// Saddle cells are split by the cell-centre average.
pub fn marching_squares(xs: &[f64], ys: &[f64], values: &[Vec<f64>], level: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    let lerp = |a: f64, b: f64, fa: f64, fb: f64| {
        if fb == fa {
            0.5 * (a + b)
        } else {
            a + (level - fa) / (fb - fa) * (b - a)
        }
    };
    for i in 0..ys.len().saturating_sub(1) {
        for j in 0..xs.len().saturating_sub(1) {
            // corners: 0 bottom-left, 1 bottom-right, 2 top-right, 3 top-left
            let f = [values[i][j], values[i][j + 1], values[i + 1][j + 1], values[i + 1][j]];
            let (x0, x1, y0, y1) = (xs[j], xs[j + 1], ys[i], ys[i + 1]);
            let idx = f
                .iter()
                .enumerate()
                .fold(0u8, |acc, (k, &v)| acc | (u8::from(v >= level) << k));
            if idx == 0 || idx == 15 {
                continue;
            }
            let bottom = (lerp(x0, x1, f[0], f[1]), y0);
            let right = (x1, lerp(y0, y1, f[1], f[2]));
            let top = (lerp(x0, x1, f[3], f[2]), y1);
            let left = (x0, lerp(y0, y1, f[0], f[3]));
            let centre_high = (f[0] + f[1] + f[2] + f[3]) / 4.0 >= level;
            let segs: &[(_, _)] = match idx {
                1 | 14 => &[(left, bottom)],
                2 | 13 => &[(bottom, right)],
                3 | 12 => &[(left, right)],
                4 | 11 => &[(right, top)],
                6 | 9 => &[(bottom, top)],
                7 | 8 => &[(left, top)],
                5 if centre_high => &[(left, top), (bottom, right)],
                5 => &[(left, bottom), (right, top)],
                10 if centre_high => &[(left, bottom), (right, top)],
                10 => &[(left, top), (bottom, right)],
                _ => unreachable!(),
            };
            out.extend_from_slice(segs);
        }
    }
    out
}

fn levels(grid: &ContourGrid) -> Vec<f64> {
    let max = grid
        .bias
        .iter()
        .flatten()
        .fold(0.0f64, |m, b| m.max(b.abs()));
    if grid.degenerate || grid.killer_level == 0.0 {
        return ticks(0.0, max, 5).into_iter().filter(|&v| v > 0.0 && v < max).collect();
    }
    [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0]
        .iter()
        .map(|f| f * grid.killer_level)
        .filter(|&v| v < max)
        .collect()
}

/// Bias contour with the killer region shaded and benchmarks marked.
/// Filled markers push toward the killer region, hollow ones away from it.
pub fn contour_svg(grid: &ContourGrid, title: &str, meta: &[String]) -> String {
    let (left, top, pw, ph) = (60.0, 40.0, 420.0, 360.0);
    let width = left + pw + 130.0;
    let height = top + ph + 50.0;
    let r2_max = *grid.r2_axis.last().unwrap_or(&1.0);
    let x = |v: f64| left + v / r2_max * pw;
    let y = |v: f64| top + ph - v * ph;

    let mut s = svg_open(width, height, meta);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        c(left + pw / 2.0),
        c(top - 16.0),
        escape(title)
    );

    // Killer cells: each grid point owns the cell around it, clipped to the
    // axes. |bias| grows with rho^2, so each column's killer cells are a run
    // reaching the top edge.
    let (nr, nc) = (grid.rho2_axis.len(), grid.r2_axis.len());
    let half = |axis: &[f64], k: usize, up: bool| -> f64 {
        let n = axis.len();
        if up {
            if k + 1 < n {
                0.5 * (axis[k] + axis[k + 1])
            } else {
                axis[k]
            }
        } else if k > 0 {
            0.5 * (axis[k - 1] + axis[k])
        } else {
            axis[k]
        }
    };
    let mut shade = String::new();
    for j in 0..nc {
        if let Some(i) = (0..nr).find(|&i| grid.killer[i][j]) {
            let (xa, xb) = (half(&grid.r2_axis, j, false), half(&grid.r2_axis, j, true));
            let ya = half(&grid.rho2_axis, i, false);
            let _ = write!(
                shade,
                "M{} {}H{}V{}H{}Z",
                c(x(xa)),
                c(y(ya)),
                c(x(xb)),
                c(y(1.0)),
                c(x(xa))
            );
        }
    }
    if !shade.is_empty() {
        let _ = writeln!(s, r##"<path d="{shade}" fill="#e8a0a0" fill-opacity="0.6" stroke="none"/>"##);
    }

    let abs: Vec<Vec<f64>> = grid
        .bias
        .iter()
        .map(|row| row.iter().map(|b| b.abs()).collect())
        .collect();
    for level in levels(grid) {
        let segs = marching_squares(&grid.r2_axis, &grid.rho2_axis, &abs, level);
        if segs.is_empty() {
            continue;
        }
        let mut d = String::new();
        for ((xa, ya), (xb, yb)) in &segs {
            let _ = write!(d, "M{} {}L{} {}", c(x(*xa)), c(y(*ya)), c(x(*xb)), c(y(*yb)));
        }
        let bold = (level - grid.killer_level).abs() < 1e-12 * level.max(1.0);
        let _ = writeln!(
            s,
            r#"<path d="{d}" fill="none" stroke="{}" stroke-width="{}"/>"#,
            if bold { "#b00000" } else { "#555555" },
            if bold { "2" } else { "1" }
        );
        // |bias| is monotone along the diagonal, so labels placed where each
        // line crosses it never collide.
        let end = segs
            .iter()
            .flat_map(|(a, b)| [*a, *b])
            .min_by(|a, b| (a.0 / r2_max - a.1).abs().total_cmp(&(b.0 / r2_max - b.1).abs()))
            .unwrap();
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" fill="{}">{}</text>"#,
            c(x(end.0) + 3.0),
            c(y(end.1) - 3.0),
            if bold { "#b00000" } else { "#555555" },
            fmt_tick(level)
        );
    }

    let _ = writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        c(left),
        c(top),
        c(pw),
        c(ph)
    );
    for t in ticks(0.0, r2_max, 5) {
        let _ = writeln!(
            s,
            r#"<line x1="{xv}" y1="{}" x2="{xv}" y2="{}" stroke="black"/><text x="{xv}" y="{}" text-anchor="middle">{}</text>"#,
            c(top + ph),
            c(top + ph + 5.0),
            c(top + ph + 18.0),
            fmt_tick(t),
            xv = c(x(t))
        );
    }
    for t in ticks(0.0, 1.0, 5) {
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{yv}" x2="{}" y2="{yv}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{}</text>"#,
            c(left - 5.0),
            c(left),
            c(left - 8.0),
            c(y(t) + 4.0),
            fmt_tick(t),
            yv = c(y(t))
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">R² (weight error)</text>"#,
        c(left + pw / 2.0),
        c(top + ph + 38.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">ρ² (weight error, effect error)</text>"#,
        c(18.0),
        c(top + ph / 2.0),
        c(18.0),
        c(top + ph / 2.0)
    );

    for p in &grid.benchmark_points {
        if p.r2 > r2_max || !p.r2.is_finite() {
            continue;
        }
        let fill = if p.same_direction { "black" } else { "white" };
        let _ = writeln!(
            s,
            r#"<circle cx="{}" cy="{}" r="3.5" fill="{fill}" stroke="black"/><text x="{}" y="{}" font-size="10">{}</text>"#,
            c(x(p.r2)),
            c(y(p.rho2)),
            c(x(p.r2) + 5.0),
            c(y(p.rho2) - 4.0),
            escape(&p.label)
        );
    }

    let lx = left + pw + 12.0;
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="12" height="12" fill="#e8a0a0"/><text x="{}" y="{}" font-size="10">killer region</text>"##,
        c(lx),
        c(top),
        c(lx + 16.0),
        c(top + 10.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="10">bound = {}</text>"#,
        c(lx),
        c(top + 30.0),
        fmt_tick(grid.target_bound)
    );
    if grid.degenerate {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10">bound is zero: degenerate</text>"#,
            c(lx),
            c(top + 46.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grid in long format with metadata comments.
pub fn contour_csv(grid: &ContourGrid, meta: &[String]) -> String {
    let mut s = csv_header(meta);
    s.push_str(&grid.to_csv());
    s
}

pub fn contour_points_csv(grid: &ContourGrid, meta: &[String]) -> String {
    let mut s = csv_header(meta);
    s.push_str("covariate,r2,rho2,same_direction,plotted\n");
    let r2_max = *grid.r2_axis.last().unwrap_or(&1.0);
    for p in &grid.benchmark_points {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            p.label,
            p.r2,
            p.rho2,
            p.same_direction,
            p.r2 <= r2_max && p.r2.is_finite()
        );
    }
    s
}
