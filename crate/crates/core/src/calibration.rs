//! Anatomical thresholds and outlier classification.
//!
//! Thresholds are the minimum convexity and simplicity observed on expert
//! annotations. A prediction is an anatomical outlier when any structure
//! scores at or below its minimum; equality counts as a violation because
//! the acceptance region is strictly above the expert minimum.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Metric, MetricRecord};

pub const LV_ENDO: &str = "LV-endo";
pub const LV_EPI: &str = "LV-epi";
pub const LEFT_ATRIUM: &str = "LA";

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("no usable expert records for structure {0}")]
    EmptyCohort(String),
    #[error("expert cohort is empty")]
    NoRecords,
    #[error("no thresholds configured for structure {0}")]
    MissingThreshold(String),
    #[error("invalid threshold {key} = {value}: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("threshold file line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("failed to access threshold file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Hausdorff ceiling used to flag geometrical outliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricRule {
    pub hd_max_mm: f64,
    pub enabled: bool,
}

impl Default for GeometricRule {
    fn default() -> Self {
        Self {
            hd_max_mm: 10.0,
            enabled: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureThresholds {
    /// `None` leaves the metric unchecked (metrics-only structure).
    pub min_convexity: Option<f64>,
    pub min_simplicity: Option<f64>,
    pub geometric: GeometricRule,
    pub multi_component_is_outlier: bool,
}

impl StructureThresholds {
    pub fn new(min_convexity: f64, min_simplicity: f64) -> Self {
        Self {
            min_convexity: Some(min_convexity),
            min_simplicity: Some(min_simplicity),
            geometric: GeometricRule::default(),
            multi_component_is_outlier: true,
        }
    }

    /// Scores are reported but never flagged.
    pub fn metrics_only() -> Self {
        Self {
            min_convexity: None,
            min_simplicity: None,
            geometric: GeometricRule::default(),
            multi_component_is_outlier: false,
        }
    }
}

/// Per-structure thresholds, keyed by structure name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ThresholdSet {
    pub structures: BTreeMap<String, StructureThresholds>,
}

/// Expert minima for the endocardial and epicardial contours; the left
/// atrium is scored without thresholds.
pub fn default_thresholds() -> ThresholdSet {
    let mut structures = BTreeMap::new();
    structures.insert(LV_ENDO.to_string(), StructureThresholds::new(0.741, 0.529));
    structures.insert(LV_EPI.to_string(), StructureThresholds::new(0.960, 0.694));
    structures.insert(LEFT_ATRIUM.to_string(), StructureThresholds::metrics_only());
    ThresholdSet { structures }
}

impl ThresholdSet {
    pub fn get(&self, structure: &str) -> Option<&StructureThresholds> {
        self.structures.get(structure)
    }

    /// Applies one Hausdorff rule to every structure.
    pub fn with_geometric_rule(mut self, rule: GeometricRule) -> Self {
        for t in self.structures.values_mut() {
            t.geometric = rule;
        }
        self
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        for (name, t) in &self.structures {
            for (metric, v) in [
                ("min_convexity", t.min_convexity),
                ("min_simplicity", t.min_simplicity),
            ] {
                if let Some(v) = v {
                    if !(v > 0.0 && v <= 1.0) {
                        return Err(CalibrationError::InvalidValue {
                            key: format!("{name}.{metric}"),
                            value: v.to_string(),
                            reason: "must lie in (0, 1]".into(),
                        });
                    }
                }
            }
            if t.geometric.enabled
                && t.geometric.hd_max_mm.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            {
                return Err(CalibrationError::InvalidValue {
                    key: format!("{name}.hd_max_mm"),
                    value: t.geometric.hd_max_mm.to_string(),
                    reason: "must be positive when the geometric rule is enabled".into(),
                });
            }
        }
        Ok(())
    }

    /// Serializes to `structure.key = value` lines in a stable order.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| v.to_string());
        let mut out = String::new();
        for (name, t) in &self.structures {
            out += &format!("{name}.min_convexity = {}\n", opt(t.min_convexity));
            out += &format!("{name}.min_simplicity = {}\n", opt(t.min_simplicity));
            out += &format!("{name}.hd_max_mm = {}\n", t.geometric.hd_max_mm);
            out += &format!("{name}.geometric_enabled = {}\n", t.geometric.enabled);
            out += &format!(
                "{name}.multi_component_is_outlier = {}\n",
                t.multi_component_is_outlier
            );
        }
        out
    }

    /// Parses the text form. Blank lines and `#` comments are skipped;
    /// unknown keys are errors. Keys not given for a structure keep the
    /// values of [`StructureThresholds::metrics_only`].
    pub fn from_text(text: &str) -> Result<Self, CalibrationError> {
        let mut structures: BTreeMap<String, StructureThresholds> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |message: String| CalibrationError::Syntax {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `structure.key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let (structure, field) = key
                .rsplit_once('.')
                .ok_or_else(|| syntax(format!("key `{key}` has no structure prefix")))?;
            if structure.is_empty() {
                return Err(syntax(format!("key `{key}` has an empty structure name")));
            }
            let invalid = |reason: &str| CalibrationError::InvalidValue {
                key: key.to_string(),
                value: value.to_string(),
                reason: reason.to_string(),
            };
            let number = || value.parse::<f64>().map_err(|_| invalid("not a number"));
            let optional = || {
                if value.eq_ignore_ascii_case("none") {
                    Ok(None)
                } else {
                    number().map(Some)
                }
            };
            let flag = || {
                value
                    .parse::<bool>()
                    .map_err(|_| invalid("expected true or false"))
            };

            let entry = structures
                .entry(structure.to_string())
                .or_insert_with(StructureThresholds::metrics_only);
            match field {
                "min_convexity" => entry.min_convexity = optional()?,
                "min_simplicity" => entry.min_simplicity = optional()?,
                "hd_max_mm" => entry.geometric.hd_max_mm = number()?,
                "geometric_enabled" => entry.geometric.enabled = flag()?,
                "multi_component_is_outlier" => entry.multi_component_is_outlier = flag()?,
                other => return Err(syntax(format!("unknown key `{other}`"))),
            }
        }
        let set = ThresholdSet { structures };
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CalibrationError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CalibrationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CalibrationError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| CalibrationError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Takes the per-structure minimum convexity and simplicity over an expert
/// cohort. Structures absent from `records` keep their `base` thresholds;
/// geometric rules and component flags always come from `base`.
pub fn calibrate(
    records: &[MetricRecord],
    base: &ThresholdSet,
) -> Result<ThresholdSet, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::NoRecords);
    }
    let mut grouped: BTreeMap<&str, Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.structure.as_str()).or_default().push(r);
    }

    let mut out = base.clone();
    for (structure, group) in grouped {
        let min_of = |f: fn(&MetricRecord) -> Option<f64>| {
            group.iter().filter_map(|r| f(r)).reduce(f64::min)
        };
        let min_cx = min_of(|r| r.convexity);
        let min_sp = min_of(|r| r.simplicity);
        let (Some(min_cx), Some(min_sp)) = (min_cx, min_sp) else {
            return Err(CalibrationError::EmptyCohort(structure.to_string()));
        };
        let entry = out
            .structures
            .entry(structure.to_string())
            .or_insert_with(|| StructureThresholds::new(min_cx, min_sp));
        entry.min_convexity = Some(min_cx);
        entry.min_simplicity = Some(min_sp);
    }
    out.validate()?;
    Ok(out)
}

/// Why an image was flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reason {
    pub structure: String,
    pub metric: Option<Metric>,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Reason {
    pub fn evaluation_failure(structure: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            structure: structure.into(),
            metric: None,
            value: None,
            threshold: None,
            note: Some(format!("evaluation failure: {}", note.into())),
        }
    }

    pub fn is_evaluation_failure(&self) -> bool {
        self.metric.is_none()
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.metric, self.value, self.threshold) {
            (Some(Metric::Hausdorff), Some(v), Some(t)) => {
                write!(f, "{} hausdorff_mm {v} > {t}", self.structure)
            }
            (Some(m), Some(v), Some(t)) => write!(f, "{} {m} {v} <= {t}", self.structure),
            _ => write!(
                f,
                "{} {}",
                self.structure,
                self.note.as_deref().unwrap_or("flagged")
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutlierVerdict {
    pub anatomical: bool,
    pub geometrical: bool,
    pub both: bool,
    pub reasons: Vec<Reason>,
}

impl OutlierVerdict {
    /// Verdict for an image that could not be evaluated.
    pub fn failure(reason: Reason) -> Self {
        Self {
            anatomical: true,
            geometrical: false,
            both: false,
            reasons: vec![reason],
        }
    }
}

/// Flags one image from the records of all its structures.
pub fn classify(
    records: &[MetricRecord],
    thresholds: &ThresholdSet,
) -> Result<OutlierVerdict, CalibrationError> {
    let mut verdict = OutlierVerdict::default();
    for record in records {
        let t = thresholds
            .get(&record.structure)
            .ok_or_else(|| CalibrationError::MissingThreshold(record.structure.clone()))?;

        if let Some(err) = &record.error {
            verdict.anatomical = true;
            verdict
                .reasons
                .push(Reason::evaluation_failure(&record.structure, err.clone()));
        }

        for (metric, value, min) in [
            (Metric::Convexity, record.convexity, t.min_convexity),
            (Metric::Simplicity, record.simplicity, t.min_simplicity),
        ] {
            if let (Some(v), Some(min)) = (value, min) {
                if v <= min {
                    verdict.anatomical = true;
                    verdict.reasons.push(Reason {
                        structure: record.structure.clone(),
                        metric: Some(metric),
                        value: Some(v),
                        threshold: Some(min),
                        note: None,
                    });
                }
            }
        }
        if t.multi_component_is_outlier && record.component_count > 1 {
            verdict.anatomical = true;
            verdict.reasons.push(Reason {
                structure: record.structure.clone(),
                metric: Some(Metric::ComponentCount),
                value: Some(record.component_count as f64),
                threshold: Some(1.0),
                note: Some("multiple connected components".into()),
            });
        }
        if t.geometric.enabled {
            if let Some(hd) = record.hausdorff_mm {
                if hd > t.geometric.hd_max_mm {
                    verdict.geometrical = true;
                    verdict.reasons.push(Reason {
                        structure: record.structure.clone(),
                        metric: Some(Metric::Hausdorff),
                        value: Some(hd),
                        threshold: Some(t.geometric.hd_max_mm),
                        note: None,
                    });
                }
            }
        }
    }
    verdict.both = verdict.anatomical && verdict.geometrical;
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(structure: &str, cx: f64, sp: f64) -> MetricRecord {
        MetricRecord {
            structure: structure.into(),
            convexity: Some(cx),
            simplicity: Some(sp),
            dice: None,
            mad_mm: None,
            hausdorff_mm: None,
            component_count: 1,
            clamped: vec![],
            error: None,
        }
    }

    #[test]
    fn default_constants() {
        let t = default_thresholds();
        assert_eq!(t.get(LV_ENDO).unwrap().min_convexity, Some(0.741));
        assert_eq!(t.get(LV_ENDO).unwrap().min_simplicity, Some(0.529));
        assert_eq!(t.get(LV_EPI).unwrap().min_convexity, Some(0.960));
        assert_eq!(t.get(LV_EPI).unwrap().min_simplicity, Some(0.694));
        assert!(t.structures.values().all(|s| !s.geometric.enabled));
        assert!(t.get(LV_ENDO).unwrap().multi_component_is_outlier);
    }

    #[test]
    fn calibrate_takes_minimum() {
        let cohort = [
            rec(LV_ENDO, 0.98, 0.8),
            rec(LV_ENDO, 0.741, 0.7),
            rec(LV_ENDO, 0.90, 0.6),
        ];
        let t = calibrate(&cohort, &default_thresholds()).unwrap();
        assert_eq!(t.get(LV_ENDO).unwrap().min_convexity, Some(0.741));
        assert_eq!(t.get(LV_ENDO).unwrap().min_simplicity, Some(0.6));
        // Untouched structure keeps its base values.
        assert_eq!(t.get(LV_EPI), default_thresholds().get(LV_EPI));
    }

    #[test]
    fn single_record_cohort() {
        let t = calibrate(&[rec(LV_EPI, 0.97, 0.75)], &ThresholdSet::default()).unwrap();
        assert_eq!(t.get(LV_EPI).unwrap().min_convexity, Some(0.97));
        assert_eq!(t.get(LV_EPI).unwrap().min_simplicity, Some(0.75));
    }

    #[test]
    fn calibrate_rejects_unusable_cohorts() {
        assert!(matches!(
            calibrate(&[], &ThresholdSet::default()),
            Err(CalibrationError::NoRecords)
        ));
        let failed = MetricRecord::failed(LV_ENDO, "empty");
        assert!(matches!(
            calibrate(&[failed], &ThresholdSet::default()),
            Err(CalibrationError::EmptyCohort(_))
        ));
    }

    #[test]
    fn endo_within_thresholds_is_not_anatomical() {
        let v = classify(&[rec(LV_ENDO, 0.96, 0.67)], &default_thresholds()).unwrap();
        assert!(!v.anatomical);
        assert!(v.reasons.is_empty());
    }

    #[test]
    fn equality_is_a_violation() {
        let v = classify(
            &[rec(LV_ENDO, 0.741, 0.529), rec(LV_EPI, 0.960, 0.694)],
            &default_thresholds(),
        )
        .unwrap();
        assert!(v.anatomical);
        assert_eq!(v.reasons.len(), 4);
    }

    #[test]
    fn clean_image_is_all_false() {
        let mut endo = rec(LV_ENDO, 0.99, 0.80);
        let mut epi = rec(LV_EPI, 0.99, 0.80);
        endo.hausdorff_mm = Some(2.0);
        epi.hausdorff_mm = Some(2.0);
        let t = default_thresholds().with_geometric_rule(GeometricRule {
            hd_max_mm: 10.0,
            enabled: true,
        });
        let v = classify(&[endo, epi], &t).unwrap();
        assert_eq!(v, OutlierVerdict::default());
    }

    #[test]
    fn geometric_and_anatomical_combine() {
        let mut endo = rec(LV_ENDO, 0.70, 0.80);
        endo.hausdorff_mm = Some(14.1);
        let t = default_thresholds().with_geometric_rule(GeometricRule {
            hd_max_mm: 10.0,
            enabled: true,
        });
        let v = classify(&[endo], &t).unwrap();
        assert!(v.anatomical && v.geometrical && v.both);
        assert_eq!(v.reasons.len(), 2);
    }

    #[test]
    fn multi_component_flag() {
        let mut endo = rec(LV_ENDO, 0.99, 0.80);
        endo.component_count = 2;
        assert!(
            classify(&[endo.clone()], &default_thresholds())
                .unwrap()
                .anatomical
        );
        let mut t = default_thresholds();
        t.structures
            .get_mut(LV_ENDO)
            .unwrap()
            .multi_component_is_outlier = false;
        assert!(!classify(&[endo], &t).unwrap().anatomical);
    }

    #[test]
    fn failed_record_is_anatomical() {
        let v = classify(
            &[MetricRecord::failed(LEFT_ATRIUM, "empty prediction")],
            &default_thresholds(),
        )
        .unwrap();
        assert!(v.anatomical);
        assert!(v.reasons[0].is_evaluation_failure());
    }

    #[test]
    fn metrics_only_structure_is_never_flagged() {
        let v = classify(&[rec(LEFT_ATRIUM, 0.1, 0.1)], &default_thresholds()).unwrap();
        assert!(!v.anatomical);
    }

    #[test]
    fn unknown_structure_is_an_error() {
        assert!(matches!(
            classify(&[rec("RV", 0.9, 0.9)], &default_thresholds()),
            Err(CalibrationError::MissingThreshold(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        let t = default_thresholds().with_geometric_rule(GeometricRule {
            hd_max_mm: 7.25,
            enabled: true,
        });
        let text = t.to_text();
        assert!(text.contains("LV-endo.min_convexity = 0.741\n"));
        assert!(text.contains("LA.min_convexity = none\n"));
        assert_eq!(ThresholdSet::from_text(&text).unwrap(), t);
    }

    #[test]
    fn text_rejects_unknown_keys_and_bad_values() {
        assert!(matches!(
            ThresholdSet::from_text("LV-endo.max_convexity = 0.5"),
            Err(CalibrationError::Syntax { line: 1, .. })
        ));
        assert!(ThresholdSet::from_text("LV-endo.min_convexity = abc").is_err());
        assert!(ThresholdSet::from_text("LV-endo.min_convexity = 1.5").is_err());
        assert!(ThresholdSet::from_text("min_convexity = 0.5").is_err());
        let t = ThresholdSet::from_text("# comment\n\nLV-endo.min_simplicity = 0.5\n").unwrap();
        assert_eq!(t.get(LV_ENDO).unwrap().min_simplicity, Some(0.5));
    }
}
