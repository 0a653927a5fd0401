//! Cohort statistics and report rendering.
//!
//! Moments are population statistics accumulated in image-id order so the
//! result does not depend on how records were produced. Outlier counts use
//! the image as the unit: one image adds at most one to each of geo, ana
//! and geo ∩ ana.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{LEFT_ATRIUM, LV_ENDO, LV_EPI};
use crate::evaluate::ImageRecord;
use crate::metrics::Metric;

/// Metrics that get moments, in column order.
pub const SUMMARY_METRICS: [Metric; 5] = [
    Metric::Dice,
    Metric::MeanAbsoluteDistance,
    Metric::Hausdorff,
    Metric::Convexity,
    Metric::Simplicity,
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot summarize an empty cohort")]
    EmptyCohort,
    #[error("unknown format `{0}` (csv, json, md)")]
    UnknownFormat(String),
    #[error("failed to encode report: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Markdown => "md",
        }
    }
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "md" | "markdown" => Ok(Format::Markdown),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

impl Moments {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

/// Integer percent of `count / total`, rounded half-up.
pub fn percent(count: usize, total: usize) -> u32 {
    if total == 0 {
        return 0;
    }
    ((200 * count as u128 + total as u128) / (2 * total as u128)) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierCount {
    pub count: usize,
    pub percent: u32,
}

impl OutlierCount {
    fn new(count: usize, total: usize) -> Self {
        Self {
            count,
            percent: percent(count, total),
        }
    }
}

impl std::fmt::Display for OutlierCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}%)", self.count, self.percent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierCounts {
    pub geo: OutlierCount,
    pub ana: OutlierCount,
    pub both: OutlierCount,
}

/// Summary of one method over a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub method: String,
    pub cohort_size: usize,
    /// Structure name → metric name → moments over defined values.
    pub structures: BTreeMap<String, BTreeMap<String, Moments>>,
    pub outliers: OutlierCounts,
    pub std_kind: String,
}

impl CohortSummary {
    pub fn moments(&self, structure: &str, metric: Metric) -> Option<&Moments> {
        self.structures.get(structure)?.get(metric.as_str())
    }
}

pub fn aggregate(method: &str, images: &[ImageRecord]) -> Result<CohortSummary, ReportError> {
    if images.is_empty() {
        return Err(ReportError::EmptyCohort);
    }
    let mut ordered: Vec<&ImageRecord> = images.iter().collect();
    ordered.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let mut values: BTreeMap<&str, BTreeMap<&'static str, Vec<f64>>> = BTreeMap::new();
    let (mut geo, mut ana, mut both) = (0, 0, 0);
    for img in &ordered {
        for rec in &img.structures {
            let per = values.entry(rec.structure.as_str()).or_default();
            for m in SUMMARY_METRICS {
                if let Some(v) = rec.value(m) {
                    per.entry(m.as_str()).or_default().push(v);
                }
            }
        }
        let v = &img.verdict;
        geo += usize::from(v.geometrical);
        ana += usize::from(v.anatomical);
        both += usize::from(v.geometrical && v.anatomical);
    }

    let n = images.len();
    let structures = values
        .into_iter()
        .map(|(s, per)| {
            let moments = per
                .into_iter()
                .filter_map(|(m, vs)| Some((m.to_string(), Moments::of(&vs)?)))
                .collect();
            (s.to_string(), moments)
        })
        .collect();
    Ok(CohortSummary {
        method: method.to_string(),
        cohort_size: n,
        structures,
        outliers: OutlierCounts {
            geo: OutlierCount::new(geo, n),
            ana: OutlierCount::new(ana, n),
            both: OutlierCount::new(both, n),
        },
        std_kind: "population".into(),
    })
}

fn short_name(metric: Metric) -> &'static str {
    match metric {
        Metric::Dice => "Dice",
        Metric::MeanAbsoluteDistance => "MAD",
        Metric::Hausdorff => "HD",
        Metric::Convexity => "Cx",
        Metric::Simplicity => "Sp",
        Metric::ComponentCount => "CC",
    }
}

/// LV-endo, LV-epi and LA first, anything else after in name order.
fn structure_rank(name: &str) -> (usize, &str) {
    let known = [LV_ENDO, LV_EPI, LEFT_ATRIUM];
    (
        known.iter().position(|k| *k == name).unwrap_or(known.len()),
        name,
    )
}

fn structure_names(summaries: &[CohortSummary]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for s in summaries {
        for k in s.structures.keys() {
            if !names.contains(k) {
                names.push(k.clone());
            }
        }
    }
    names.sort_by(|a, b| structure_rank(a).cmp(&structure_rank(b)));
    names
}

fn csv_text(rows: Vec<Vec<String>>) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row)
            .map_err(|e| ReportError::Encode(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ReportError::Encode(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ReportError::Encode(e.to_string()))
}

/// Renders summaries of one or more methods.
pub fn render(summaries: &[CohortSummary], format: Format) -> Result<String, ReportError> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(summaries)
                .map_err(|e| ReportError::Encode(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut header: Vec<String> = ["method", "structure", "n"].map(String::from).to_vec();
            for m in SUMMARY_METRICS {
                header.push(format!("{}_mean", m.as_str()));
                header.push(format!("{}_std", m.as_str()));
            }
            for k in ["geo", "ana", "geo_ana"] {
                header.push(k.to_string());
                header.push(format!("{k}_pct"));
            }
            let mut rows = vec![header];
            for s in summaries {
                let mut structures: Vec<_> = s.structures.iter().collect();
                structures.sort_by(|a, b| structure_rank(a.0).cmp(&structure_rank(b.0)));
                for (structure, per) in structures {
                    let mut row = vec![
                        s.method.clone(),
                        structure.clone(),
                        s.cohort_size.to_string(),
                    ];
                    for m in SUMMARY_METRICS {
                        match per.get(m.as_str()) {
                            Some(mo) => {
                                row.push(mo.mean.to_string());
                                row.push(mo.std.to_string());
                            }
                            None => row.extend([String::new(), String::new()]),
                        }
                    }
                    for c in [s.outliers.geo, s.outliers.ana, s.outliers.both] {
                        row.push(c.count.to_string());
                        row.push(c.percent.to_string());
                    }
                    rows.push(row);
                }
            }
            csv_text(rows)
        }
        Format::Markdown => {
            let names = structure_names(summaries);
            let mut header = vec!["Method".to_string(), "n".to_string()];
            for name in &names {
                for m in SUMMARY_METRICS {
                    header.push(format!("{name} {}", short_name(m)));
                }
            }
            header.extend(["geo", "ana", "geo ∩ ana"].map(String::from));
            let mut out = String::new();
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
            for s in summaries {
                let mut cells = vec![s.method.clone(), s.cohort_size.to_string()];
                for name in &names {
                    for m in SUMMARY_METRICS {
                        cells.push(match s.moments(name, m) {
                            Some(mo) => format!("{:.3} ± {:.3}", mo.mean, mo.std),
                            None => "n/a".into(),
                        });
                    }
                }
                for c in [s.outliers.geo, s.outliers.ana, s.outliers.both] {
                    cells.push(c.to_string());
                }
                let _ = writeln!(out, "| {} |", cells.join(" | "));
            }
            let _ = writeln!(out, "\nValues are mean ± population standard deviation.");
            Ok(out)
        }
    }
}

fn reasons_text(img: &ImageRecord) -> String {
    img.verdict
        .reasons
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-image, per-structure rows.
pub fn render_records(images: &[ImageRecord], format: Format) -> Result<String, ReportError> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(images)
                .map_err(|e| ReportError::Encode(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv | Format::Markdown => {
            let header: Vec<String> = [
                "image_id",
                "tags",
                "structure",
                "dice",
                "mad_mm",
                "hausdorff_mm",
                "convexity",
                "simplicity",
                "components",
                "anatomical",
                "geometrical",
                "reasons",
            ]
            .map(String::from)
            .to_vec();
            let mut rows = vec![header];
            for img in images {
                let tail = [
                    img.verdict.anatomical.to_string(),
                    img.verdict.geometrical.to_string(),
                    reasons_text(img),
                ];
                let tags = img.tags.join(" ");
                if img.structures.is_empty() {
                    let mut row = vec![img.image_id.clone(), tags.clone(), String::new()];
                    row.extend(std::iter::repeat_n(String::new(), 6));
                    row.extend(tail.iter().cloned());
                    rows.push(row);
                }
                for rec in &img.structures {
                    let mut row = vec![img.image_id.clone(), tags.clone(), rec.structure.clone()];
                    row.extend([
                        opt(rec.dice),
                        opt(rec.mad_mm),
                        opt(rec.hausdorff_mm),
                        opt(rec.convexity),
                        opt(rec.simplicity),
                        rec.component_count.to_string(),
                    ]);
                    row.extend(tail.iter().cloned());
                    rows.push(row);
                }
            }
            if format == Format::Csv {
                return csv_text(rows);
            }
            let mut out = String::new();
            for (i, row) in rows.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|c| c.replace('|', "\\|")).collect();
                let _ = writeln!(out, "| {} |", cells.join(" | "));
                if i == 0 {
                    let _ = writeln!(out, "|{}", "---|".repeat(row.len()));
                }
            }
            Ok(out)
        }
    }
}
