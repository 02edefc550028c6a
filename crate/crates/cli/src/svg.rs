//! Static SVG 1.1 plots.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 56.0;

pub struct Series<'a> {
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    pub color: &'a str,
}

pub struct Marker {
    pub x: f64,
    pub y: f64,
    pub color: &'static str,
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line plot with optional horizontal reference line and point markers.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], hline: Option<f64>, markers: &[Marker]) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.xs.iter().copied()));
    let (y0, y1) = range(
        series
            .iter()
            .flat_map(|s| s.ys.iter().copied())
            .chain(hline)
            .chain(markers.iter().map(|m| m.y)),
    );
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.3}</text>"#, sx(fx), H - M + 16.0, fx);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text>"#, M - 4.0, sy(fy) + 4.0, fy);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    if let Some(s) = hline {
        let _ = writeln!(
            out,
            r##"<line x1="{M}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="#888" stroke-dasharray="5,4"/>"##,
            sy(s),
            W - M,
            sy(s)
        );
    }
    for s in series {
        let pts: Vec<String> = s
            .xs
            .iter()
            .zip(s.ys)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#, s.color, pts.join(" "));
    }
    for m in markers {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#, sx(m.x), sy(m.y), m.color);
    }
    out.push_str("</svg>\n");
    out
}

/// Heat maps of several nodal grids side by side, on a shared color scale.
pub fn heatmaps(title: &str, grids: &[Vec<Vec<f64>>]) -> String {
    let (lo, hi) = range(grids.iter().flatten().flatten().copied());
    let panel = 180.0;
    let gap = 16.0;
    let width = gap + grids.len().max(1) as f64 * (panel + gap);
    let height = panel + 60.0;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#);
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, width / 2.0, escape(title));
    for (k, grid) in grids.iter().enumerate() {
        let nx = grid.len();
        let ny = grid.first().map_or(0, |r| r.len());
        if nx == 0 || ny == 0 {
            continue;
        }
        let (cw, ch) = (panel / nx as f64, panel / ny as f64);
        let ox = gap + k as f64 * (panel + gap);
        for (i, row) in grid.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let s = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
                let (r, g, b) = ((255.0 * s) as u8, (80.0 + 100.0 * (1.0 - (2.0 * s - 1.0).abs())) as u8, (255.0 * (1.0 - s)) as u8);
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
                    ox + i as f64 * cw,
                    40.0 + (ny - 1 - j) as f64 * ch,
                    cw + 0.05,
                    ch + 0.05
                );
            }
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">u{}</text>"#, ox + panel / 2.0, 40.0 + panel + 14.0, k + 1);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_well_formed() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 1.0, 0.0];
        let s = line_plot("h & t", "t", "h", &[Series { xs: &xs, ys: &ys, color: "black" }], Some(0.5), &[Marker { x: 1.0, y: 1.0, color: "red" }]);
        assert!(s.starts_with("<?xml") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("h &amp; t") && s.contains("<circle") && s.contains("stroke-dasharray"));
    }

    #[test]
    fn heatmap_has_one_cell_per_node() {
        let s = heatmaps("u", &[vec![vec![0.0, 1.0], vec![2.0, 3.0]]]);
        assert_eq!(s.matches("<rect x=").count(), 4);
    }
}
