//! Static SVG regret plots: one mean curve and a shaded ±1 std band per series.
//!
//! Accepts any CSV with a `round` column, a mean column (`mean` or
//! `mean_regret`), a std column (`std` or `std_regret`) and optionally one
//! label column (`agent_id`, `policy`, `value`, ...) that splits the rows into
//! series. Bound columns are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::output::write_file;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
/// Points kept per series; longer series are strided.
const MAX_POINTS: usize = 600;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(round, mean, std)` sorted by round.
    pub points: Vec<(f64, f64, f64)>,
}

pub fn parse_curves(path: &Path, text: &str) -> Result<Vec<Series>> {
    let bad = |message: String| CliError::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let find = |names: &[&str]| header.iter().position(|h| names.contains(h));
    let round = find(&["round"]).ok_or_else(|| bad("no `round` column".into()))?;
    let mean = find(&["mean", "mean_regret"]).ok_or_else(|| bad("no `mean` column".into()))?;
    let std = find(&["std", "std_regret"]).ok_or_else(|| bad("no `std` column".into()))?;
    let ignored = ["ucb1_bound", "resilient_bound"];
    let label_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != round && c != mean && c != std && !ignored.contains(&header[c]))
        .collect();
    if label_cols.len() > 1 {
        return Err(bad(format!("more than one label column: {label_cols:?}")));
    }
    let label = label_cols.first().copied();

    let mut groups: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(bad(format!("row {} has {} cells, expected {}", lineno + 2, cells.len(), header.len())));
        }
        let num = |c: usize| -> Result<f64> {
            cells[c]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("row {}: `{}` is not a number", lineno + 2, cells[c])))
        };
        let key = match label {
            Some(c) => format!("{} {}", header[c], cells[c]),
            None => "network".to_string(),
        };
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push((num(round)?, num(mean)?, num(std)?));
    }
    if groups.is_empty() {
        return Err(bad("no data rows".into()));
    }
    Ok(order
        .into_iter()
        .map(|label| {
            let mut points = groups.remove(&label).unwrap_or_default();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label, points }
        })
        .collect())
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn tick_label(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn thin(points: &[(f64, f64, f64)]) -> Vec<(f64, f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(MAX_POINTS);
    let mut out: Vec<_> = points.iter().step_by(stride).copied().collect();
    if out.last() != points.last() {
        out.push(*points.last().expect("non-empty"));
    }
    out
}

pub fn render_svg(series: &[Series], title: &str) -> String {
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(1.0f64, f64::max);
    let x_min = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(x_max, f64::min);
    let y_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1 + p.2))
        .fold(0.0f64, f64::max);
    let y_min = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1 - p.2))
        .fold(0.0f64, f64::min);
    let y_step = nice_step((y_max - y_min).max(1e-9));
    let y_top = (y_max / y_step).ceil() * y_step;
    let y_bottom = (y_min / y_step).floor() * y_step;
    let x_span = (x_max - x_min).max(1.0);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_min) / x_span * pw;
    let sy = |y: f64| TOP + (y_top - y) / (y_top - y_bottom).max(1e-12) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );

    // grid and ticks
    let mut y = y_bottom;
    while y <= y_top + y_step * 1e-6 {
        let py = sy(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            py + 4.0,
            tick_label(y)
        );
        y += y_step;
    }
    let x_step = nice_step(x_span);
    let mut x = (x_min / x_step).ceil() * x_step;
    while x <= x_max + x_step * 1e-6 {
        let px = sx(x);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#000000"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 20.0,
            tick_label(x)
        );
        x += x_step;
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#000000"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">round</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">cumulative regret</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let pts = thin(&s.points);
        let mut band = String::new();
        for p in &pts {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.0), sy(p.1 + p.2));
        }
        for p in pts.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.0), sy(p.1 - p.2));
        }
        let _ = writeln!(
            svg,
            r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = TOP + 10.0 + idx as f64 * 18.0;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Reads `csv`, renders it, writes `out`. Nothing is written on error.
pub fn emit_plot(csv: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(csv).map_err(|e| CliError::io(csv, e))?;
    let series = parse_curves(csv, &text)?;
    let title = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("regret");
    write_file(out, &render_svg(&series, title))
}
