//! SVG and aligned plain-text renderings of the correlation histogram and
//! the RMSC-by-condition chart.

use std::fmt::Write as _;

use crate::sim::{Cell, HistogramBin};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const SERIES_COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1) = (LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{TOP}" x2="{x0}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">{}</text>"#,
        (TOP + y0) / 2.0,
        (TOP + y0) / 2.0,
        escape(y_label)
    );
}

fn y_ticks(s: &mut String, max: f64, ticks: usize, decimals: usize) {
    let plot_h = HEIGHT - BOTTOM - TOP;
    for t in 0..=ticks {
        let v = max * t as f64 / ticks as f64;
        let y = HEIGHT - BOTTOM - plot_h * t as f64 / ticks as f64;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##,
            WIDTH - RIGHT
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.decimals$}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
}

/// Bar chart of a histogram over [−1, 1].
pub fn histogram_svg(bins: &[HistogramBin], title: &str) -> String {
    let mut s = header(title);
    let max_count = bins.iter().map(|b| b.count).max().unwrap_or(0).max(1);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - BOTTOM - TOP;
    y_ticks(&mut s, max_count as f64, 5, 0);
    let x_of = |v: f64| LEFT + (v + 1.0) / 2.0 * plot_w;
    for b in bins {
        let h = plot_h * b.count as f64 / max_count as f64;
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="#4c72b0" stroke="white" stroke-width="0.5"/>"##,
            x_of(b.low),
            HEIGHT - BOTTOM - h,
            x_of(b.high) - x_of(b.low)
        );
    }
    for t in 0..=8 {
        let v = -1.0 + t as f64 * 0.25;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"#,
            x_of(v),
            HEIGHT - BOTTOM + 16.0
        );
    }
    axes(&mut s, "r", "frequency");
    s.push_str("</svg>\n");
    s
}

/// Aligned text histogram, one line per bin.
pub fn histogram_text(bins: &[HistogramBin], title: &str) -> String {
    let mut s = format!("{title}\n");
    let max_count = bins.iter().map(|b| b.count).max().unwrap_or(0).max(1);
    for b in bins {
        let bar = "#".repeat((50.0 * b.count as f64 / max_count as f64).round() as usize);
        let _ = writeln!(s, "{:>6.2} {:>6.2} {:>6} {bar}", b.low, b.high, b.count);
    }
    s
}

/// One polyline of RMSC values across conditions.
#[derive(Debug, Clone)]
pub struct RmscSeries {
    pub label: String,
    pub points: Vec<(Cell, f64)>,
}

fn condition_label(c: &Cell) -> String {
    format!("{:.2}/{}", c.loading, c.n)
}

/// RMSC by (loading, n) condition, one line per series, with horizontal
/// reference lines.
pub fn rmsc_svg(series: &[RmscSeries], reference_lines: &[f64], title: &str) -> String {
    let mut s = header(title);
    let mut conditions: Vec<(f64, usize)> = Vec::new();
    for p in series.iter().flat_map(|sr| &sr.points) {
        if !conditions.contains(&(p.0.loading, p.0.n)) {
            conditions.push((p.0.loading, p.0.n));
        }
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - BOTTOM - TOP;
    let step = plot_w / conditions.len().max(1) as f64;
    let x_of = |i: usize| LEFT + step * (i as f64 + 0.5);
    let y_of = |v: f64| HEIGHT - BOTTOM - plot_h * v.clamp(0.0, 1.0);
    y_ticks(&mut s, 1.0, 5, 1);
    for &r in reference_lines {
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#888888" stroke-dasharray="4 3"/>"##,
            WIDTH - RIGHT,
            y = y_of(r)
        );
    }
    for (i, &(l, n)) in conditions.iter().enumerate() {
        let label = condition_label(&Cell { loading: l, n, q: 0 });
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
            x_of(i),
            HEIGHT - BOTTOM + 16.0
        );
    }
    for (k, sr) in series.iter().enumerate() {
        let color = SERIES_COLORS[k % SERIES_COLORS.len()];
        let pts: Vec<String> = sr
            .points
            .iter()
            .filter_map(|(c, v)| {
                let i = conditions.iter().position(|&x| x == (c.loading, c.n))?;
                Some(format!("{:.1},{:.1}", x_of(i), y_of(*v)))
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
        }
        let ly = TOP + 8.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            WIDTH - RIGHT - 150.0,
            WIDTH - RIGHT - 130.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            WIDTH - RIGHT - 125.0,
            ly + 4.0,
            escape(&sr.label)
        );
    }
    axes(&mut s, "salient loading / sample size", "RMSC");
    s.push_str("</svg>\n");
    s
}

/// Aligned text table of the RMSC series.
pub fn rmsc_text(series: &[RmscSeries], title: &str) -> String {
    let mut s = format!("{title}\n{:>10}", "condition");
    for sr in series {
        let _ = write!(s, " {:>12}", sr.label);
    }
    s.push('\n');
    let mut conditions: Vec<(f64, usize)> = Vec::new();
    for p in series.iter().flat_map(|sr| &sr.points) {
        if !conditions.contains(&(p.0.loading, p.0.n)) {
            conditions.push((p.0.loading, p.0.n));
        }
    }
    for &(l, n) in &conditions {
        let _ = write!(s, "{:>10}", condition_label(&Cell { loading: l, n, q: 0 }));
        for sr in series {
            match sr.points.iter().find(|(c, _)| c.loading == l && c.n == n) {
                Some((_, v)) => {
                    let _ = write!(s, " {v:>12.4}");
                }
                None => {
                    let _ = write!(s, " {:>12}", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}
