//! Aggregated results and their CSV, Markdown and SVG renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::mean_sem;
use super::{ExperimentError, Result};
use crate::dataset::Variant;

/// Row label of the across-environment summary.
pub const AVERAGE_LABEL: &str = "Average";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultCell {
    #[serde(rename = "env")]
    pub env_label: String,
    pub variant: Variant,
    pub mean: f64,
    pub sem: Option<f64>,
    pub n_seeds: usize,
}

/// Return of one `(env, variant, seed)` evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub env_label: String,
    pub env_id: u32,
    pub variant: Variant,
    pub seed: u64,
    pub mean_return: f64,
    /// Environment steps spent gathering the encoding (aug_encoding only).
    pub encoding_env_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub env_labels: Vec<String>,
    pub variants: Vec<Variant>,
    /// Environment-major, then variant, in the order of the two lists above.
    pub cells: Vec<ResultCell>,
    /// One cell per variant over the per-seed environment averages.
    pub average: Vec<ResultCell>,
    pub runs: Vec<RunRecord>,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    /// Builds cells from raw runs. Every `(env, variant)` pair must have the
    /// same seed set.
    pub fn aggregate(
        config_hash: String,
        env_labels: Vec<String>,
        variants: Vec<Variant>,
        mut runs: Vec<RunRecord>,
        wall_clock_secs: f64,
    ) -> Result<Self> {
        let env_pos: BTreeMap<&str, usize> = env_labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let var_pos: BTreeMap<Variant, usize> = variants.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        for r in &runs {
            if !env_pos.contains_key(r.env_label.as_str()) || !var_pos.contains_key(&r.variant) {
                return Err(ExperimentError::Report(format!("run for unknown cell {} / {}", r.env_label, r.variant)));
            }
        }
        runs.sort_by_key(|r| (env_pos[r.env_label.as_str()], var_pos[&r.variant], r.seed));

        let mut cells = Vec::new();
        let mut average = Vec::new();
        for &variant in &variants {
            let mut per_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
            for r in runs.iter().filter(|r| r.variant == variant) {
                per_seed.entry(r.seed).or_default().push(r.mean_return);
            }
            if per_seed.is_empty() || per_seed.values().any(|v| v.len() != env_labels.len()) {
                return Err(ExperimentError::Report(format!("incomplete runs for variant {variant}")));
            }
            let seed_avgs: Vec<f64> = per_seed.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
            average.push(cell(AVERAGE_LABEL, variant, &seed_avgs));
        }
        for label in &env_labels {
            for &variant in &variants {
                let values: Vec<f64> = runs
                    .iter()
                    .filter(|r| &r.env_label == label && r.variant == variant)
                    .map(|r| r.mean_return)
                    .collect();
                cells.push(cell(label, variant, &values));
            }
        }
        Ok(ExperimentReport {
            config_hash,
            env_labels,
            variants,
            cells,
            average,
            runs,
            wall_clock_secs,
        })
    }

    pub fn cell(&self, env_label: &str, variant: Variant) -> Option<&ResultCell> {
        self.all_cells().find(|c| c.env_label == env_label && c.variant == variant)
    }

    pub fn average_for(&self, variant: Variant) -> Option<&ResultCell> {
        self.average.iter().find(|c| c.variant == variant)
    }

    /// Per-environment cells followed by the average row.
    pub fn all_cells(&self) -> impl Iterator<Item = &ResultCell> {
        self.cells.iter().chain(&self.average)
    }

    pub fn to_csv(&self) -> Result<String> {
        let cells: Vec<ResultCell> = self.all_cells().cloned().collect();
        to_csv(&cells)
    }
}

fn cell(label: &str, variant: Variant, values: &[f64]) -> ResultCell {
    let (mean, sem) = mean_sem(values);
    ResultCell {
        env_label: label.to_string(),
        variant,
        mean: mean.unwrap_or(f64::NAN),
        sem,
        n_seeds: values.len(),
    }
}

/// `env,variant,mean,sem,n_seeds`; an absent SEM is an empty field.
pub fn to_csv(cells: &[ResultCell]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cells {
        w.serialize(c).map_err(|e| ExperimentError::Report(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ExperimentError::Report(e.to_string()))
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultCell>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|row| row.map_err(|e| ExperimentError::Report(format!("results.csv: {e}"))))
        .collect()
}

/// Rows and columns in first-appearance order.
fn layout(cells: &[ResultCell]) -> (Vec<&str>, Vec<Variant>) {
    let mut rows: Vec<&str> = Vec::new();
    let mut cols: Vec<Variant> = Vec::new();
    for c in cells {
        if !rows.contains(&c.env_label.as_str()) {
            rows.push(&c.env_label);
        }
        if !cols.contains(&c.variant) {
            cols.push(c.variant);
        }
    }
    (rows, cols)
}

/// Environment rows, variant columns, `mean ± sem` with the row maximum in bold.
pub fn render_markdown(cells: &[ResultCell]) -> Result<String> {
    let (rows, cols) = layout(cells);
    let find = |r: &str, v: Variant| cells.iter().find(|c| c.env_label == r && c.variant == v);
    let mut out = String::from("| Environment |");
    for v in &cols {
        write!(out, " {} |", v.display_name()).unwrap();
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(cols.len()));
    out.push('\n');
    for r in rows {
        let row: Vec<&ResultCell> = cols
            .iter()
            .map(|&v| find(r, v).ok_or_else(|| ExperimentError::Report(format!("missing cell {r} / {v}"))))
            .collect::<Result<_>>()?;
        let best = row.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max);
        let label = if r == AVERAGE_LABEL { format!("**{r}**") } else { r.to_string() };
        write!(out, "| {label} |").unwrap();
        for c in row {
            let text = match c.sem {
                Some(sem) => format!("{:.1} ± {:.1}", c.mean, sem),
                None => format!("{:.1}", c.mean),
            };
            if c.mean == best {
                write!(out, " **{text}** |").unwrap();
            } else {
                write!(out, " {text} |").unwrap();
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Bar chart of `numerator / denominator` mean return per environment row
/// (the average row is left out), with a dashed reference line at 1.
pub fn render_ratio_svg(cells: &[ResultCell], numerator: Variant, denominator: Variant) -> Result<String> {
    let (rows, _) = layout(cells);
    let find = |r: &str, v: Variant| {
        cells
            .iter()
            .find(|c| c.env_label == r && c.variant == v)
            .ok_or_else(|| ExperimentError::Report(format!("missing cell {r} / {v}")))
    };
    let mut bars = Vec::new();
    for r in rows.into_iter().filter(|r| *r != AVERAGE_LABEL) {
        let (num, den) = (find(r, numerator)?, find(r, denominator)?);
        if den.mean <= 0.0 {
            return Err(ExperimentError::Report(format!("{r}: non-positive {denominator} mean")));
        }
        bars.push((r, num.mean / den.mean));
    }
    if bars.is_empty() {
        return Err(ExperimentError::Report("no environment rows to plot".into()));
    }

    let (width, height) = (80.0 + 56.0 * bars.len() as f64, 360.0);
    let (left, right, top, bottom) = (56.0, 16.0, 36.0, 40.0);
    let plot_h = height - top - bottom;
    let max_ratio = bars.iter().map(|b| b.1).fold(1.0, f64::max);
    let y_max = (max_ratio * 1.1 * 4.0).ceil() / 4.0;
    let y = |v: f64| top + plot_h * (1.0 - v / y_max);
    let slot = (width - left - right) / bars.len() as f64;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{} / {} mean return</text>"#,
        width / 2.0,
        numerator.display_name(),
        denominator.display_name()
    )
    .unwrap();
    let mut tick = 0.0;
    while tick <= y_max + 1e-9 {
        writeln!(
            svg,
            r##"<line x1="{left}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{tick:.2}</text>"##,
            width - right,
            left - 6.0,
            y(tick) + 4.0,
            y = y(tick)
        )
        .unwrap();
        tick += 0.25;
    }
    for (i, (label, ratio)) in bars.iter().enumerate() {
        let x = left + slot * i as f64 + slot * 0.15;
        let w = slot * 0.7;
        let fill = if *ratio > 1.0 { "#3b7dd8" } else { "#d8643b" };
        writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{:.2}" width="{w:.2}" height="{:.2}" fill="{fill}"><title>{label}: {ratio:.3}</title></rect>"#,
            y(*ratio),
            y(0.0) - y(*ratio)
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{ratio:.2}</text><text x="{:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            x + w / 2.0,
            y(*ratio) - 4.0,
            x + w / 2.0,
            height - bottom + 16.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        r##"<line x1="{left}" x2="{}" y1="{y1:.2}" y2="{y1:.2}" stroke="#222" stroke-dasharray="6 4"/>"##,
        width - right,
        y1 = y(1.0)
    )
    .unwrap();
    svg.push_str("</svg>\n");
    Ok(svg)
}
