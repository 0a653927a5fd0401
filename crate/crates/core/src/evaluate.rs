//! Per-image evaluation of prediction/reference pairs and cohort runs.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{classify, CalibrationError, OutlierVerdict, Reason, ThresholdSet};
use crate::calibration::{LEFT_ATRIUM, LV_ENDO, LV_EPI};
use crate::geometry::{extract_region, GeometryError, Region};
use crate::mask::{read_mask, LabelMask, MaskError};
use crate::metrics::MetricRecord;

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("invalid label map: {0}")]
    LabelMap(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("manifest lists no images")]
    EmptyManifest,
    #[error("parallelism must be at least 1")]
    InvalidJobs,
    #[error("failed to start worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// Disjoint label values of the three base structures. LV-epi is the union
/// of cavity and myocardium labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub endo: BTreeSet<u8>,
    pub myocardium: BTreeSet<u8>,
    /// Empty when the atrium is not evaluated.
    pub atrium: BTreeSet<u8>,
}

impl Default for LabelMap {
    fn default() -> Self {
        Self {
            endo: BTreeSet::from([1]),
            myocardium: BTreeSet::from([2]),
            atrium: BTreeSet::from([3]),
        }
    }
}

impl LabelMap {
    pub fn validate(&self) -> Result<(), EvaluateError> {
        if self.endo.is_empty() || self.myocardium.is_empty() {
            return Err(EvaluateError::LabelMap(
                "endo and myo need at least one label".into(),
            ));
        }
        let sets = [&self.endo, &self.myocardium, &self.atrium];
        for (i, a) in sets.iter().enumerate() {
            for b in &sets[i + 1..] {
                if let Some(v) = a.intersection(b).next() {
                    return Err(EvaluateError::LabelMap(format!(
                        "label {v} is assigned to two structures"
                    )));
                }
            }
        }
        if sets.iter().any(|s| s.contains(&0)) {
            return Err(EvaluateError::LabelMap("label 0 is background".into()));
        }
        Ok(())
    }

    /// Evaluated structures and their label selectors, in report order.
    pub fn structures(&self) -> Vec<(&'static str, BTreeSet<u8>)> {
        let mut out = vec![
            (LV_ENDO, self.endo.clone()),
            (LV_EPI, self.endo.union(&self.myocardium).copied().collect()),
        ];
        if !self.atrium.is_empty() {
            out.push((LEFT_ATRIUM, self.atrium.clone()));
        }
        out
    }
}

/// `endo=1,myo=2,la=3`; several values per structure are joined with `+`,
/// and `la=` disables the atrium.
impl FromStr for LabelMap {
    type Err = EvaluateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut map = LabelMap::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) = part.split_once('=').ok_or_else(|| {
                EvaluateError::LabelMap(format!("expected key=value, got `{part}`"))
            })?;
            let values = values
                .split('+')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(|v| {
                    v.parse::<u8>()
                        .map_err(|_| EvaluateError::LabelMap(format!("bad label value `{v}`")))
                })
                .collect::<Result<BTreeSet<u8>, _>>()?;
            match key.trim() {
                "endo" => map.endo = values,
                "myo" => map.myocardium = values,
                "la" => map.atrium = values,
                other => {
                    return Err(EvaluateError::LabelMap(format!(
                        "unknown structure `{other}` (endo, myo, la)"
                    )))
                }
            }
        }
        map.validate()?;
        Ok(map)
    }
}

impl fmt::Display for LabelMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |s: &BTreeSet<u8>| s.iter().map(u8::to_string).collect::<Vec<_>>().join("+");
        write!(
            f,
            "endo={},myo={},la={}",
            join(&self.endo),
            join(&self.myocardium),
            join(&self.atrium)
        )
    }
}

/// Scores and verdict of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    pub structures: Vec<MetricRecord>,
    pub verdict: OutlierVerdict,
    /// Set when the image as a whole could not be evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ImageRecord {
    pub fn failed(
        image_id: impl Into<String>,
        tags: Vec<String>,
        reason: impl Into<String>,
    ) -> Self {
        let reason = reason.into();
        Self {
            image_id: image_id.into(),
            tags,
            structures: Vec::new(),
            verdict: OutlierVerdict::failure(Reason::evaluation_failure("image", reason.clone())),
            error: Some(reason),
        }
    }
}

/// All images of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub method: String,
    pub images: Vec<ImageRecord>,
}

impl EvaluationRun {
    /// Recomputes verdicts under new thresholds. Images that failed as a
    /// whole keep their failure verdict.
    pub fn reclassify(&self, thresholds: &ThresholdSet) -> Result<Self, EvaluateError> {
        let images = self
            .images
            .iter()
            .map(|img| {
                let mut img = img.clone();
                if img.error.is_none() {
                    img.verdict = classify(&img.structures, thresholds)?;
                }
                Ok(img)
            })
            .collect::<Result<_, EvaluateError>>()?;
        Ok(Self {
            method: self.method.clone(),
            images,
        })
    }
}

fn region(mask: &LabelMask, selector: &BTreeSet<u8>) -> Option<Region> {
    match extract_region(mask, selector) {
        Ok(r) => Some(r),
        Err(GeometryError::EmptyRegion(_)) => None,
        Err(e) => unreachable!("non-empty selector: {e}"),
    }
}

/// Scores every structure of `pred`, against `reference` when given.
///
/// A structure absent from both masks is skipped. One present in the
/// reference but missing from the prediction is an evaluation failure.
/// Without a reference, missing structures are skipped.
pub fn measure_image(
    pred: &LabelMask,
    reference: Option<&LabelMask>,
    labels: &LabelMap,
) -> Result<Vec<MetricRecord>, String> {
    if let Some(reference) = reference {
        if !pred.same_grid(reference) {
            return Err(format!(
                "prediction grid {}x{} @ {:?} does not match reference grid {}x{} @ {:?}",
                pred.width(),
                pred.height(),
                pred.spacing(),
                reference.width(),
                reference.height(),
                reference.spacing()
            ));
        }
    }
    let mut records = Vec::new();
    for (name, selector) in labels.structures() {
        let p = region(pred, &selector);
        let r = reference.and_then(|m| region(m, &selector));
        match (p, r) {
            (None, None) => {}
            (None, Some(_)) => records.push(MetricRecord::failed(name, "prediction is empty")),
            (Some(p), r) => records.push(MetricRecord::measure(name, &p, r.as_ref())),
        }
    }
    Ok(records)
}

pub fn evaluate_image(
    image_id: impl Into<String>,
    tags: Vec<String>,
    pred: &LabelMask,
    reference: Option<&LabelMask>,
    labels: &LabelMap,
    thresholds: &ThresholdSet,
) -> Result<ImageRecord, EvaluateError> {
    let image_id = image_id.into();
    match measure_image(pred, reference, labels) {
        Ok(structures) => {
            let verdict = classify(&structures, thresholds)?;
            Ok(ImageRecord {
                image_id,
                tags,
                structures,
                verdict,
                error: None,
            })
        }
        Err(reason) => Ok(ImageRecord::failed(image_id, tags, reason)),
    }
}

/// Runs `evaluate` over `items` on `jobs` threads and returns the records
/// sorted by image id.
pub fn evaluate_cohort<T, F>(
    items: &[T],
    jobs: usize,
    evaluate: F,
) -> Result<Vec<ImageRecord>, EvaluateError>
where
    T: Sync,
    F: Fn(&T) -> Result<ImageRecord, EvaluateError> + Sync + Send,
{
    if jobs == 0 {
        return Err(EvaluateError::InvalidJobs);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| EvaluateError::Pool(e.to_string()))?;
    let mut records = pool.install(|| {
        items
            .par_iter()
            .map(&evaluate)
            .collect::<Result<Vec<_>, _>>()
    })?;
    records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(records)
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// The first column as written.
    pub image_id: String,
    pub prediction: PathBuf,
    pub reference: Option<PathBuf>,
    pub tags: Vec<String>,
}

/// Parses a tab-separated manifest. With `pairs`, each line is
/// `prediction<TAB>reference[<TAB>tag...]`; otherwise `mask[<TAB>tag...]`.
/// Relative paths resolve against `base`. Blank lines and lines starting
/// with `#` are skipped.
pub fn parse_manifest(
    text: &str,
    base: &Path,
    pairs: bool,
) -> Result<Vec<ManifestEntry>, EvaluateError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let first = cols.next().unwrap_or_default().trim();
        if first.is_empty() {
            return Err(EvaluateError::Manifest {
                line: i + 1,
                message: "missing mask path".into(),
            });
        }
        let reference = if pairs {
            let r = cols.next().map(str::trim).unwrap_or_default();
            if r.is_empty() {
                return Err(EvaluateError::Manifest {
                    line: i + 1,
                    message: "missing reference path".into(),
                });
            }
            Some(base.join(r))
        } else {
            None
        };
        entries.push(ManifestEntry {
            image_id: first.to_string(),
            prediction: base.join(first),
            reference,
            tags: cols.map(str::to_string).collect(),
        });
    }
    if entries.is_empty() {
        return Err(EvaluateError::EmptyManifest);
    }
    Ok(entries)
}

fn load(path: &Path) -> Result<LabelMask, EvaluateError> {
    Ok(read_mask(path)?)
}

/// Reads and evaluates one manifest entry. Unreadable masks abort under
/// `strict` and become a failed image record otherwise.
pub fn evaluate_entry(
    entry: &ManifestEntry,
    labels: &LabelMap,
    thresholds: &ThresholdSet,
    strict: bool,
) -> Result<ImageRecord, EvaluateError> {
    let masks = load(&entry.prediction).and_then(|p| {
        let r = entry.reference.as_deref().map(load).transpose()?;
        Ok((p, r))
    });
    match masks {
        Ok((pred, reference)) => evaluate_image(
            entry.image_id.clone(),
            entry.tags.clone(),
            &pred,
            reference.as_ref(),
            labels,
            thresholds,
        ),
        Err(e) if !strict => Ok(ImageRecord::failed(
            entry.image_id.clone(),
            entry.tags.clone(),
            e.to_string(),
        )),
        Err(e) => Err(e),
    }
}
