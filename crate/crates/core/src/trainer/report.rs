//! Run metrics, their CSV and JSON forms, and cross-run aggregation.
//!
//! The metrics CSV has the columns `run_id,mode,gap,seed,epoch,split,metric,value`.
//! Per-epoch rows carry `split` `pretrain` (contrastive or supervised training
//! loss) or `probe` (linear classifier loss). Final rows leave `epoch` empty
//! and report `accuracy` for `train` and `test`, plus `accuracy_class_<id>`
//! for `test`. `gap` is empty unless the run used a temporal gap. Wall time is
//! kept out of the CSV so that repeated runs produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Mode;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "run_id,mode,gap,seed,epoch,split,metric,value";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub mode: Mode,
    /// Temporal gap in seconds, for gap-controlled transform runs.
    pub gap: Option<f64>,
    /// Set when the gap is zero, which pairs every frame with itself.
    pub self_equivalent: bool,
    pub seed: u64,
    pub split_seed: u64,
    pub config_fingerprint: String,
    pub pretrain_loss: Vec<f64>,
    pub probe_loss: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// `(class_id, accuracy)` over held-out frames.
    pub per_class_accuracy: Vec<(u32, f64)>,
    pub num_classes: usize,
    /// Evaluated on a transfer dataset rather than the pretraining one.
    #[serde(default)]
    pub transfer: bool,
    pub wall_time_secs: f64,
}

impl MetricsReport {
    pub fn to_csv_rows(&self) -> String {
        let gap = self.gap.map(|g| g.to_string()).unwrap_or_default();
        let mut out = String::new();
        let mut row = |epoch: String, split: &str, metric: &str, value: f64| {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.run_id, self.mode, gap, self.seed, epoch, split, metric, value
            )
            .expect("writing to a String");
        };
        for (e, v) in self.pretrain_loss.iter().enumerate() {
            row(e.to_string(), "pretrain", "loss", *v);
        }
        for (e, v) in self.probe_loss.iter().enumerate() {
            row(e.to_string(), "probe", "loss", *v);
        }
        row(String::new(), "train", "accuracy", self.train_accuracy);
        row(String::new(), "test", "accuracy", self.test_accuracy);
        for (c, v) in &self.per_class_accuracy {
            row(String::new(), "test", &format!("accuracy_class_{c}"), *v);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}\n{}", self.to_csv_rows())
    }
}

/// Concatenate the rows of several reports under one header.
pub fn combined_csv(reports: &[MetricsReport]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in reports {
        out.push_str(&r.to_csv_rows());
    }
    out
}

pub fn write_summary(report: &MetricsReport, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Test accuracy across seeds for one `(mode, gap)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub transfer: bool,
    pub mode: Mode,
    pub gap: Option<f64>,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Group by evaluation set, mode and gap; source results first, then mode
/// order, then increasing gap.
pub fn aggregate(reports: &[MetricsReport]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(bool, Mode, Option<u64>), Vec<f64>> = BTreeMap::new();
    for r in reports {
        // gaps are keyed in hundredths of a second, the precision they are reported at
        let key = r.gap.map(|g| (g * 100.0).round() as u64);
        groups.entry((r.transfer, r.mode, key)).or_default().push(r.test_accuracy);
    }
    groups
        .into_iter()
        .map(|((transfer, mode, gap), acc)| {
            let (mean, std) = mean_std(&acc);
            Aggregate {
                transfer,
                mode,
                gap: gap.map(|g| g as f64 / 100.0),
                runs: acc.len(),
                mean,
                std,
            }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[Aggregate]) -> String {
    let mut out = String::from("eval,mode,gap,runs,mean_test_accuracy,std_test_accuracy\n");
    for a in rows {
        let gap = a.gap.map(|g| g.to_string()).unwrap_or_default();
        let eval = if a.transfer { "transfer" } else { "source" };
        writeln!(out, "{eval},{},{},{},{},{}", a.mode, gap, a.runs, a.mean, a.std).expect("writing to a String");
    }
    out
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn svg_frame(title: &str, body: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
            "<text x=\"{cx}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{title}</text>\n",
            "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
            "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
            "{body}</svg>\n"
        ),
        w = SVG_W,
        h = SVG_H,
        cx = SVG_W / 2.0,
        m = MARGIN,
        b = SVG_H - MARGIN,
        r = SVG_W - MARGIN,
        title = title,
        body = body
    )
}

fn y_of(acc: f64) -> f64 {
    SVG_H - MARGIN - acc.clamp(0.0, 1.0) * (SVG_H - 2.0 * MARGIN)
}

/// Bar chart of mean test accuracy per mode, with one-std whiskers.
pub fn bar_chart_svg(rows: &[Aggregate]) -> String {
    let slot = (SVG_W - 2.0 * MARGIN) / rows.len().max(1) as f64;
    let mut body = String::new();
    for (i, a) in rows.iter().enumerate() {
        let x = MARGIN + i as f64 * slot + slot * 0.15;
        let (top, base) = (y_of(a.mean), y_of(0.0));
        let label = match a.gap {
            Some(g) => format!("{} {g}s", a.mode),
            None => a.mode.to_string(),
        };
        let _ = write!(
            body,
            concat!(
                "<rect x=\"{x:.1}\" y=\"{top:.1}\" width=\"{bw:.1}\" height=\"{bh:.1}\" fill=\"#4a7ab5\"/>\n",
                "<line x1=\"{cx:.1}\" y1=\"{lo:.1}\" x2=\"{cx:.1}\" y2=\"{hi:.1}\" stroke=\"black\"/>\n",
                "<text x=\"{cx:.1}\" y=\"{ly:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{label}</text>\n"
            ),
            x = x,
            top = top,
            bw = slot * 0.7,
            bh = base - top,
            cx = x + slot * 0.35,
            lo = y_of(a.mean - a.std),
            hi = y_of(a.mean + a.std),
            ly = SVG_H - MARGIN + 16.0,
            label = label
        );
    }
    svg_frame("Held-out test accuracy", &body)
}

/// Line chart of mean test accuracy against gap, one line per mode.
pub fn gap_chart_svg(rows: &[Aggregate]) -> String {
    let gapped: Vec<&Aggregate> = rows.iter().filter(|a| a.gap.is_some()).collect();
    let max_gap = gapped.iter().filter_map(|a| a.gap).fold(0.0, f64::max).max(1e-9);
    let x_of = |g: f64| MARGIN + g / max_gap * (SVG_W - 2.0 * MARGIN);
    let mut body = String::new();
    let mut by_mode: BTreeMap<Mode, Vec<&Aggregate>> = BTreeMap::new();
    for a in gapped {
        by_mode.entry(a.mode).or_default().push(a);
    }
    for points in by_mode.values() {
        let path: Vec<String> = points
            .iter()
            .map(|a| format!("{:.1},{:.1}", x_of(a.gap.unwrap_or(0.0)), y_of(a.mean)))
            .collect();
        let _ = writeln!(
            body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#b5524a\" stroke-width=\"2\"/>",
            path.join(" ")
        );
        for a in points {
            let g = a.gap.unwrap_or(0.0);
            let _ = writeln!(
                body,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\"/><text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{g}</text>",
                x_of(g),
                y_of(a.mean),
                x_of(g),
                SVG_H - MARGIN + 16.0
            );
        }
    }
    svg_frame("Test accuracy by gap (s)", &body)
}
