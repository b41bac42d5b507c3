//! CSV datasets and static SVG plots.

use std::io::{Read, Write};

use franson_core::counts::{CountRecord, CountingConfig};
use serde::{Deserialize, Serialize};

use crate::config::SchemaError;

pub const CSV_HEADER: [&str; 4] = ["position", "probability", "counts", "uncertainty"];

/// One CSV row. Count columns are empty for noiseless scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub position: f64,
    pub probability: f64,
    pub counts: Option<u64>,
    pub uncertainty: Option<f64>,
}

pub fn rows(positions: &[f64], probabilities: &[f64], records: Option<&[CountRecord]>) -> Vec<Row> {
    positions
        .iter()
        .zip(probabilities)
        .enumerate()
        .map(|(i, (&position, &probability))| Row {
            position,
            probability,
            counts: records.map(|r| r[i].counts),
            uncertainty: records.map(|r| r[i].uncertainty),
        })
        .collect()
}

pub fn write_csv<W: Write>(out: W, rows: &[Row]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[Row]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is UTF-8")
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<Row>, SchemaError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| SchemaError::new("csv header", e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(SchemaError::new(
            "csv header",
            format!(
                "expected `{}`, got `{}`",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            let row: Row =
                row.map_err(|e| SchemaError::new(format!("csv line {}", i + 2), e.to_string()))?;
            if !(row.position.is_finite() && row.probability.is_finite()) {
                return Err(SchemaError::new(
                    format!("csv line {}", i + 2),
                    "non-finite value",
                ));
            }
            Ok(row)
        })
        .collect()
}

/// Count records rebuilt from CSV rows, if every row carries counts.
pub fn records_from_rows(rows: &[Row]) -> Option<Vec<CountRecord>> {
    rows.iter()
        .map(|r| r.counts.map(|c| CountRecord::new(r.position, f64::NAN, c)))
        .collect()
}

/// Plot scaling for the abscissa.
#[derive(Debug, Clone, Copy)]
pub struct AxisLabel {
    pub name: &'static str,
    pub unit: &'static str,
    /// Multiplier from SI to the displayed unit.
    pub scale: f64,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub axis: AxisLabel,
    pub positions: &'a [f64],
    pub probabilities: &'a [f64],
    pub counts: Option<(&'a [CountRecord], CountingConfig)>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn tick_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

/// Probability curve with optional sampled points converted back to
/// probability units (accidentals removed).
pub fn render_svg(plot: &Plot) -> String {
    let xs: Vec<f64> = plot.positions.iter().map(|x| x * plot.axis.scale).collect();
    let (x0, x1) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let (x0, x1) = if x1 > x0 {
        (x0, x1)
    } else {
        (x0 - 1.0, x0 + 1.0)
    };
    let points: Vec<(f64, f64)> = plot
        .counts
        .map(|(records, cfg)| {
            let per_unit = 2.0 * cfg.plateau_rate * cfg.bin_duration;
            records
                .iter()
                .map(|r| {
                    (
                        r.position * plot.axis.scale,
                        (r.counts as f64 - cfg.accidental_counts()) / per_unit,
                    )
                })
                .collect()
        })
        .unwrap_or_default();
    let y_max = points
        .iter()
        .map(|p| p.1)
        .chain(plot.probabilities.iter().copied())
        .fold(1.0_f64, f64::max);
    let (y0, y1) = (0.0, y_max);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (WIDTH - LEFT - RIGHT);
    let py = |y: f64| HEIGHT - BOTTOM - (y - y0) / (y1 - y0) * (HEIGHT - TOP - BOTTOM);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        escape(plot.title)
    ));
    // Axes and ticks.
    let (bx, by) = (HEIGHT - BOTTOM, LEFT);
    s.push_str(&format!(
        "<path d=\"M{by} {TOP} V{bx} H{}\" fill=\"none\" stroke=\"black\"/>\n",
        WIDTH - RIGHT
    ));
    let step = tick_step(x1 - x0);
    let mut t = (x0 / step).ceil() * step;
    while t <= x1 + 1e-9 * step {
        let x = px(t);
        s.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{bx}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"black\"/><text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            bx + 5.0,
            bx + 19.0,
            format_tick(t, step)
        ));
        t += step;
    }
    let ystep = tick_step(y1 - y0);
    let mut t = 0.0;
    while t <= y1 + 1e-9 {
        let y = py(t);
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{by}\" y2=\"{y:.2}\" stroke=\"black\"/><text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            by - 5.0,
            by - 8.0,
            y + 4.0,
            format_tick(t, ystep)
        ));
        t += ystep;
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{} ({})</text>\n",
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        HEIGHT - 12.0,
        plot.axis.name,
        plot.axis.unit
    ));
    s.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">coincidence probability</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    ));
    for &(x, y) in &points {
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#d62728\" fill-opacity=\"0.7\"/>\n",
            px(x),
            py(y)
        ));
    }
    let line: Vec<String> = xs
        .iter()
        .zip(plot.probabilities)
        .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    s.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n",
        line.join(" ")
    ));
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    format!("{v:.decimals$}")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
