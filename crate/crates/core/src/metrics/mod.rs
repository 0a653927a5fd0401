//! Anatomical shape scores (convexity, simplicity) and reference-based
//! comparison scores (Dice, mean absolute distance, Hausdorff distance).

mod distance;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Region};

pub use distance::{directed_distance, point_segment_distance, DirectedDistance, SegmentIndex};

/// Slack allowed above 1 for convexity and simplicity before a value is
/// clamped and flagged. Pixel discretization can push small shapes past the
/// continuum bound.
pub const CONVENTION_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("convex hull is degenerate (all pixels collinear); convexity is undefined")]
    DegenerateHull,
    #[error("regions live on different pixel grids")]
    GridMismatch,
    #[error("boundary has no vertices")]
    EmptyBoundary,
}

/// Which score a value refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Convexity,
    Simplicity,
    Dice,
    MeanAbsoluteDistance,
    Hausdorff,
    ComponentCount,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Convexity => "convexity",
            Metric::Simplicity => "simplicity",
            Metric::Dice => "dice",
            Metric::MeanAbsoluteDistance => "mad_mm",
            Metric::Hausdorff => "hausdorff_mm",
            Metric::ComponentCount => "component_count",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn clamp_score(raw: f64) -> (f64, bool) {
    let top = 1.0 + CONVENTION_TOLERANCE;
    if raw > top {
        (top, true)
    } else {
        (raw.max(0.0), false)
    }
}

fn raw_convexity(region: &Region) -> Result<f64, MetricError> {
    let hull = geometry::convex_hull(region);
    if hull.is_degenerate() {
        return Err(MetricError::DegenerateHull);
    }
    Ok(geometry::area(region) / hull.covered_area())
}

fn raw_simplicity(region: &Region) -> f64 {
    (4.0 * PI * geometry::area(region)).sqrt() / geometry::perimeter(region)
}

/// Region area over the area of the pixels covered by its convex hull.
pub fn convexity(region: &Region) -> Result<f64, MetricError> {
    raw_convexity(region).map(|v| clamp_score(v).0)
}

/// Isoperimetric quotient `sqrt(4 pi area) / perimeter`: 1 for a disk.
pub fn simplicity(region: &Region) -> f64 {
    clamp_score(raw_simplicity(region)).0
}

/// `2 |A ∩ B| / (|A| + |B|)` over pixel sets.
pub fn dice(pred: &Region, reference: &Region) -> Result<f64, MetricError> {
    if !pred.same_grid(reference) {
        return Err(MetricError::GridMismatch);
    }
    let overlap = pred
        .members()
        .iter()
        .zip(reference.members())
        .filter(|(&a, &b)| a && b)
        .count();
    Ok(2.0 * overlap as f64 / (pred.pixel_count() + reference.pixel_count()) as f64)
}

/// Symmetric boundary distances between two regions, in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryDistances {
    /// Average of the two directed mean vertex-to-polyline distances.
    pub mean_absolute: f64,
    /// Largest vertex-to-polyline distance in either direction.
    pub hausdorff: f64,
}

pub fn boundary_distances(
    pred: &Region,
    reference: &Region,
) -> Result<BoundaryDistances, MetricError> {
    if !pred.same_grid(reference) {
        return Err(MetricError::GridMismatch);
    }
    let pred_index = SegmentIndex::new(pred.boundary());
    let ref_index = SegmentIndex::new(reference.boundary());
    let forward =
        directed_distance(pred.boundary(), &ref_index).ok_or(MetricError::EmptyBoundary)?;
    let backward =
        directed_distance(reference.boundary(), &pred_index).ok_or(MetricError::EmptyBoundary)?;
    Ok(BoundaryDistances {
        mean_absolute: (forward.mean + backward.mean) / 2.0,
        hausdorff: forward.max.max(backward.max),
    })
}

pub fn mean_absolute_distance(pred: &Region, reference: &Region) -> Result<f64, MetricError> {
    boundary_distances(pred, reference).map(|d| d.mean_absolute)
}

pub fn hausdorff(pred: &Region, reference: &Region) -> Result<f64, MetricError> {
    boundary_distances(pred, reference).map(|d| d.hausdorff)
}

/// Scores of one structure in one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub structure: String,
    pub convexity: Option<f64>,
    pub simplicity: Option<f64>,
    pub dice: Option<f64>,
    pub mad_mm: Option<f64>,
    pub hausdorff_mm: Option<f64>,
    pub component_count: usize,
    /// Scores that exceeded `1 + CONVENTION_TOLERANCE` and were clamped.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clamped: Vec<Metric>,
    /// Why some score could not be computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl MetricRecord {
    /// A record for a structure that could not be evaluated at all.
    pub fn failed(structure: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            structure: structure.into(),
            convexity: None,
            simplicity: None,
            dice: None,
            mad_mm: None,
            hausdorff_mm: None,
            component_count: 0,
            clamped: Vec::new(),
            error: Some(reason.into()),
        }
    }

    /// Scores `pred`, comparing against `reference` when one is given.
    pub fn measure(
        structure: impl Into<String>,
        pred: &Region,
        reference: Option<&Region>,
    ) -> Self {
        let mut record = Self {
            structure: structure.into(),
            convexity: None,
            simplicity: None,
            dice: None,
            mad_mm: None,
            hausdorff_mm: None,
            component_count: pred.component_count(),
            clamped: Vec::new(),
            error: None,
        };
        let mut errors = Vec::new();

        match raw_convexity(pred) {
            Ok(raw) => {
                let (v, clamped) = clamp_score(raw);
                record.convexity = Some(v);
                if clamped {
                    record.clamped.push(Metric::Convexity);
                }
            }
            Err(e) => errors.push(e.to_string()),
        }
        let (sp, clamped) = clamp_score(raw_simplicity(pred));
        record.simplicity = Some(sp);
        if clamped {
            record.clamped.push(Metric::Simplicity);
        }

        if let Some(reference) = reference {
            match dice(pred, reference).and_then(|d| Ok((d, boundary_distances(pred, reference)?)))
            {
                Ok((d, dist)) => {
                    record.dice = Some(d);
                    record.mad_mm = Some(dist.mean_absolute);
                    record.hausdorff_mm = Some(dist.hausdorff);
                }
                Err(e) => errors.push(e.to_string()),
            }
        }

        if !errors.is_empty() {
            record.error = Some(errors.join("; "));
        }
        record
    }

    pub fn value(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Convexity => self.convexity,
            Metric::Simplicity => self.simplicity,
            Metric::Dice => self.dice,
            Metric::MeanAbsoluteDistance => self.mad_mm,
            Metric::Hausdorff => self.hausdorff_mm,
            Metric::ComponentCount => Some(self.component_count as f64),
        }
    }
}
