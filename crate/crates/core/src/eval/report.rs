use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{ConfusionMatrix, MetricsReport};
use crate::{Error, Result};

/// Rounds to `digits` significant digits for display.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Fraction as a percentage with two decimals, e.g. `0.998466 → "99.85"`.
pub fn format_percent(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run: String,
    pub avg_precision: f64,
    pub avg_recall: f64,
    pub avg_f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub class_names: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_report(runs: &[(String, MetricsReport)]) -> Result<ComparisonTable> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Comparison("no runs to compare".into()))?;
    if let Some((name, _)) = runs.iter().find(|(_, r)| r.class_names != first.1.class_names) {
        return Err(Error::Comparison(format!(
            "run {name} uses a different class scheme than {}",
            first.0
        )));
    }
    Ok(ComparisonTable {
        class_names: first.1.class_names.clone(),
        rows: runs
            .iter()
            .map(|(name, r)| ComparisonRow {
                run: name.clone(),
                avg_precision: r.macro_precision,
                avg_recall: r.macro_recall,
                avg_f1: r.macro_f1,
                accuracy: r.accuracy,
            })
            .collect(),
    })
}

impl ComparisonTable {
    /// Aligned plain-text table; scores at 4 significant digits, accuracy
    /// as a percentage.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.run.len()).max().unwrap_or(3).max(3);
        let mut out = format!(
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}\n",
            "Run", "Avg P", "Avg R", "Avg F1", "Acc %"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}\n",
                r.run,
                format_sig(r.avg_precision, 4),
                format_sig(r.avg_recall, 4),
                format_sig(r.avg_f1, 4),
                format_percent(r.accuracy),
            ));
        }
        out
    }

    /// CSV at full precision, so the file parses back to the same values.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Format(format!("csv flush: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn read_comparison_csv(text: &str) -> Result<Vec<ComparisonRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

const PALETTE: [[u8; 3]; 6] = [
    [66, 103, 178],
    [221, 132, 82],
    [85, 168, 104],
    [196, 78, 82],
    [129, 114, 179],
    [147, 120, 96],
];

/// Bar chart of per-run accuracy (one bar per row, fixed 0–1 scale with
/// grid lines every 10%).
pub fn render_accuracy_chart(table: &ComparisonTable, path: &Path) -> Result<()> {
    let (bar, gap, height, margin) = (40u32, 20u32, 300u32, 20u32);
    let n = table.rows.len().max(1) as u32;
    let width = margin * 2 + n * bar + (n - 1) * gap;
    let mut img = RgbImage::from_pixel(width, height + margin * 2, Rgb([255, 255, 255]));
    for tick in 0..=10 {
        let y = margin + height - tick * height / 10;
        for x in margin / 2..width - margin / 2 {
            img.put_pixel(x, y, Rgb([220, 220, 220]));
        }
    }
    for (i, row) in table.rows.iter().enumerate() {
        let x0 = margin + i as u32 * (bar + gap);
        let h = (row.accuracy.clamp(0.0, 1.0) * height as f64).round() as u32;
        let color = Rgb(PALETTE[i % PALETTE.len()]);
        for y in (margin + height - h)..(margin + height) {
            for x in x0..x0 + bar {
                img.put_pixel(x, y, color);
            }
        }
    }
    img.save(path).map_err(Error::from)
}

/// Heat map of row-normalized counts: white (0) to dark blue (1).
pub fn render_confusion_heatmap(cm: &ConfusionMatrix, path: &Path) -> Result<()> {
    let cell = 40u32;
    let c = cm.classes() as u32;
    let mut img = RgbImage::from_pixel(c * cell, c * cell, Rgb([255, 255, 255]));
    for (t, row) in cm.counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        for (p, &count) in row.iter().enumerate() {
            let frac = if total == 0 { 0.0 } else { count as f64 / total as f64 };
            let shade = |hi: f64, lo: f64| (hi + (lo - hi) * frac).round() as u8;
            let color = Rgb([shade(255.0, 8.0), shade(255.0, 48.0), shade(255.0, 107.0)]);
            for y in 0..cell - 1 {
                for x in 0..cell - 1 {
                    img.put_pixel(p as u32 * cell + x, t as u32 * cell + y, color);
                }
            }
        }
    }
    img.save(path).map_err(Error::from)
}
