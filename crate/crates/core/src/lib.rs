//! Anatomical plausibility and geometric scores for 2D cardiac
//! segmentation masks.
//!
//! The pipeline reads label masks ([`mask`]), extracts per-structure regions
//! ([`geometry`]), scores them ([`metrics`]), flags outliers against expert
//! thresholds ([`calibration`]) and summarizes cohorts ([`report`]).
//! [`synth`] builds analytic test shapes.

pub mod calibration;
pub mod evaluate;
pub mod geometry;
pub mod mask;
pub mod metrics;
pub mod report;
pub mod synth;

pub use calibration::{
    calibrate, classify, default_thresholds, CalibrationError, GeometricRule, OutlierVerdict,
    Reason, StructureThresholds, ThresholdSet, LEFT_ATRIUM, LV_ENDO, LV_EPI,
};
pub use evaluate::{
    evaluate_cohort, evaluate_entry, evaluate_image, parse_manifest, EvaluateError, EvaluationRun,
    ImageRecord, LabelMap, ManifestEntry,
};
pub use geometry::{extract_region, GeometryError, Point, Polygon, Region};
pub use mask::{read_mask, write_mask, LabelMask, MaskError, Spacing};
pub use metrics::{Metric, MetricError, MetricRecord};
pub use report::{aggregate, render, render_records, CohortSummary, Format, ReportError};
pub use synth::{Canvas, DeformityKind, ShapeKind, ShapeSpec, SynthError};
