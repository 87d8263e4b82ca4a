//! Scatter plot of paired log-likelihoods, written as plain SVG.

use std::fmt::Write;

const SIZE: f64 = 600.0;
const PAD: f64 = 0.05;

/// Points `(x, y)` on common axes padded by 5% of the data range, with a red
/// `y = x` reference line. Non-finite points are skipped.
pub fn scatter(points: &[(f64, f64)], x_label: &str, y_label: &str) -> String {
    let finite: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (mut lo, mut hi) = finite
        .iter()
        .flat_map(|(x, y)| [*x, *y])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = PAD * (hi - lo);
    lo -= pad;
    hi += pad;
    let sx = |v: f64| (v - lo) / (hi - lo) * SIZE;
    let sy = |v: f64| SIZE - (v - lo) / (hi - lo) * SIZE;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>"#).unwrap();
    writeln!(
        s,
        r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="red" stroke-width="1"/>"#,
        sx(lo),
        sy(lo),
        sx(hi),
        sy(hi)
    )
    .unwrap();
    for (x, y) in &finite {
        writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="black"/>"#, sx(*x), sy(*y)).unwrap();
    }
    writeln!(s, r#"<text x="300" y="592" text-anchor="middle" font-size="12">{x_label}</text>"#).unwrap();
    writeln!(
        s,
        r#"<text x="12" y="300" text-anchor="middle" font-size="12" transform="rotate(-90 12 300)">{y_label}</text>"#
    )
    .unwrap();
    writeln!(s, r#"<text x="6" y="14" font-size="10">[{lo:.2}, {hi:.2}]</text>"#).unwrap();
    s.push_str("</svg>\n");
    s
}
