//! CSV tables and static SVG line plots.

use std::fmt::Write;

/// `t,value,stderr` rows.
pub fn curve_csv(times: &[f64], values: &[f64], stderr: &[f64]) -> String {
    let mut out = String::from("t,value,stderr\n");
    for ((t, v), s) in times.iter().zip(values).zip(stderr) {
        writeln!(out, "{t},{v},{s}").unwrap();
    }
    out
}

/// One named series of a plot.
pub struct Series<'a> {
    pub label: &'a str,
    pub times: &'a [f64],
    pub values: &'a [f64],
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot with linear time axis; `log_y` plots `log10` of positive values.
pub fn svg_plot(title: &str, series: &[Series<'_>], log_y: bool) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let tf = |v: f64| if log_y { (v > 0.0).then(|| v.log10()) } else { Some(v) };
    let points: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.times
                .iter()
                .zip(s.values)
                .filter_map(|(&t, &v)| tf(v).filter(|y| y.is_finite() && t.is_finite()).map(|y| (t, y)))
                .collect()
        })
        .collect();
    let all = points.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(out, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, w / 2.0, escape(title)).unwrap();
    writeln!(
        out,
        r#"<path d="M{pad},{pad} V{} H{}" stroke="black" fill="none"/>"#,
        h - pad,
        w - pad
    )
    .unwrap();
    let ylabel = |y: f64| if log_y { format!("1e{y:.1}") } else { format!("{y:.3}") };
    writeln!(out, r#"<text x="{}" y="{}">{x0:.3}</text>"#, pad, h - pad + 16.0).unwrap();
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{x1:.3}</text>"#, w - pad, h - pad + 16.0).unwrap();
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, pad - 4.0, h - pad, ylabel(y0)).unwrap();
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, pad - 4.0, pad + 4.0, ylabel(y1)).unwrap();
    for (i, (s, pts)) in series.iter().zip(&points).enumerate() {
        let color = COLORS[i % COLORS.len()];
        if !pts.is_empty() {
            let d: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            writeln!(out, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#, d.join(" ")).unwrap();
        }
        let ly = pad + 16.0 * i as f64;
        writeln!(out, r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#, w - pad - 4.0, escape(s.label)).unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
