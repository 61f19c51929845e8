//! Result serialization and plotting.
//!
//! Sweeps serialize to a fixed-schema CSV and to standalone SVG plots, one
//! per metric, with a log-scale y axis for rate metrics and one polyline per
//! receiver.

use super::Row;
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Column order of the CSV schema. `count` is the metric's denominator.
pub const CSV_HEADER: &str = "scenario,receiver,snr_db,sinr_db,metric,value,count,trials,seed";

/// Serialize rows to CSV text.
pub fn rows_to_csv(rows: &[Row]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.scenario, r.receiver, r.snr_db, r.sinr_db, r.metric, r.value, r.count, r.trials,
            r.seed
        );
    }
    out
}

/// Parse CSV text produced by [`rows_to_csv`].
pub fn rows_from_csv(text: &str) -> Result<Vec<Row>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Construction("empty CSV".into()))?;
    if header.trim() != CSV_HEADER {
        return Err(Error::Construction(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Construction(format!(
                "line {}: expected 9 fields, got {}",
                i + 2,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Construction(format!("line {}: bad number {s:?}", i + 2)))
        };
        let int = |s: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::Construction(format!("line {}: bad integer {s:?}", i + 2)))
        };
        rows.push(Row {
            scenario: fields[0].to_string(),
            receiver: fields[1].to_string(),
            snr_db: num(fields[2])?,
            sinr_db: num(fields[3])?,
            metric: fields[4].to_string(),
            value: num(fields[5])?,
            count: int(fields[6])?,
            trials: int(fields[7])?,
            seed: int(fields[8])?,
        });
    }
    Ok(rows)
}

const PALETTE: [&str; 7] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

/// Rate metrics plot on a log axis; zero rates clamp to the axis floor.
fn log_scale(metric: &str) -> bool {
    metric != "mse" && !metric.starts_with("threshold") && metric != "max_ratio"
}

/// Render one metric of one scenario as an SVG line chart over SNR.
pub fn render_metric_svg(rows: &[Row], metric: &str) -> Option<String> {
    let pts: Vec<&Row> = rows.iter().filter(|r| r.metric == metric && r.count > 0).collect();
    if pts.is_empty() {
        return None;
    }
    let mut receivers: Vec<String> = Vec::new();
    for r in &pts {
        if !receivers.contains(&r.receiver) {
            receivers.push(r.receiver.clone());
        }
    }
    let xs: Vec<f64> = pts.iter().map(|r| r.snr_db).collect();
    let (x_min, x_max) = bounds(&xs);
    let log = log_scale(metric);
    let floor = if log {
        pts.iter()
            .map(|r| if r.value > 0.0 { r.value } else { 1.0 / r.count as f64 })
            .fold(f64::INFINITY, f64::min)
            .min(1e-1)
    } else {
        0.0
    };
    let ys: Vec<f64> = pts
        .iter()
        .map(|r| if log { r.value.max(floor).log10() } else { r.value })
        .collect();
    let (y_min, y_max) = bounds(&ys);

    let px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min).max(1e-12) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y_min) / (y_max - y_min).max(1e-12) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    // Axes.
    let _ = writeln!(
        svg,
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>",
        HEIGHT - MARGIN_B
    );
    // Axis labels and ticks.
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">snr_db</text>",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0
    );
    let ylabel = if log { format!("log10({metric})") } else { metric.to_string() };
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        ylabel
    );
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{:.3}</text>",
            px(fx),
            HEIGHT - MARGIN_B + 18.0,
            fx
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.3}</text>",
            MARGIN_L - 6.0,
            py(fy) + 4.0,
            fy
        );
    }
    // One polyline per receiver, ordered by SNR.
    for (ri, receiver) in receivers.iter().enumerate() {
        let color = PALETTE[ri % PALETTE.len()];
        let mut line: Vec<(f64, f64)> = pts
            .iter()
            .zip(&ys)
            .filter(|(r, _)| &r.receiver == receiver)
            .map(|(r, &y)| (r.snr_db, y))
            .collect();
        line.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let path: Vec<String> =
            line.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            path.join(" ")
        );
        for &(x, y) in &line {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                px(x),
                py(y)
            );
        }
        let ly = MARGIN_T + 16.0 * ri as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            WIDTH - MARGIN_R + 10.0,
            WIDTH - MARGIN_R + 30.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\">{receiver}</text>",
            WIDTH - MARGIN_R + 36.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

/// Write `results.csv` plus one SVG per metric into `dir` (created if
/// missing). Returns the paths written.
pub fn write_outputs(rows: &[Row], dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let csv_path = dir.join("results.csv");
    std::fs::write(&csv_path, rows_to_csv(rows)).map_err(|e| Error::io(&csv_path, e))?;
    written.push(csv_path);
    let mut metrics: Vec<String> = Vec::new();
    for r in rows {
        if !metrics.contains(&r.metric) {
            metrics.push(r.metric.clone());
        }
    }
    let scenario = rows.first().map(|r| r.scenario.clone()).unwrap_or_default();
    for metric in metrics {
        if let Some(svg) = render_metric_svg(rows, &metric) {
            let path = dir.join(format!("{scenario}_{metric}.svg"));
            std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
