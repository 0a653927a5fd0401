//! Analytic test shapes with controlled local deformities.
//!
//! Shapes are rasterized by testing pixel centers against the continuous
//! shape centered on the canvas. Deformities are applied along a ray from the
//! shape center at a given angle (degrees, image axes, 0 = +x, 90 = +y):
//!
//! * spike: a 1-pixel-wide, 4-connected protrusion of `magnitude` pixels
//!   starting at the outermost shape pixel on the ray;
//! * notch: removal of a slot of fixed width and depth `magnitude`, cut
//!   inward from the outermost shape pixel on the ray;
//! * neck: two opposing notches of depth `magnitude`.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{default_thresholds, LV_ENDO, LV_EPI};
use crate::geometry::{self, GeometryError};
use crate::mask::{LabelMask, MaskError, Spacing};
use crate::metrics::{self, MetricError};

/// Attempts made to find an undeformed blob that passes default thresholds.
const BLOB_ATTEMPTS: u64 = 64;
/// Blob harmonics run over `2..=BLOB_MAX_HARMONIC`.
const BLOB_MAX_HARMONIC: u32 = 5;
/// Upper bound of `a_k * k^2` for each blob harmonic.
const BLOB_AMPLITUDE: f64 = 0.12;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid shape parameters: {0}")]
    InvalidSpec(String),
    #[error("shape does not fit a {width}x{height} canvas")]
    ExceedsCanvas { width: usize, height: usize },
    #[error("magnitudes must be sorted ascending")]
    UnsortedMagnitudes,
    #[error("could not generate a plausible blob from seed {0}")]
    BlobRejected(u64),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Disk {
        radius: f64,
    },
    Square {
        side: usize,
    },
    Ellipse {
        semi_x: f64,
        semi_y: f64,
    },
    /// Annulus sector opening downwards, myocardium-like.
    Bridge {
        inner_radius: f64,
        outer_radius: f64,
        span_deg: f64,
    },
    /// Random smooth star-convex shape.
    Blob {
        radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeformityKind {
    Spike,
    Notch,
    Neck,
}

impl std::str::FromStr for DeformityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spike" => Ok(Self::Spike),
            "notch" => Ok(Self::Notch),
            "neck" => Ok(Self::Neck),
            other => Err(format!("unknown deformity `{other}` (spike, notch, neck)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deformity {
    pub kind: DeformityKind,
    /// Pixels.
    pub magnitude: f64,
    /// Degrees.
    pub angle_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub deformity: Option<Deformity>,
    pub seed: u64,
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind) -> Self {
        Self {
            kind,
            deformity: None,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_deformity(mut self, kind: DeformityKind, magnitude: f64, angle_deg: f64) -> Self {
        self.deformity = Some(Deformity {
            kind,
            magnitude,
            angle_deg,
        });
        self
    }

    fn validate(&self) -> Result<(), SynthError> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SynthError::InvalidSpec(format!("{what} must be positive")))
            }
        };
        match self.kind {
            ShapeKind::Disk { radius } | ShapeKind::Blob { radius } => positive(radius, "radius")?,
            ShapeKind::Square { side } => positive(side as f64, "side")?,
            ShapeKind::Ellipse { semi_x, semi_y } => {
                positive(semi_x, "semi_x")?;
                positive(semi_y, "semi_y")?;
            }
            ShapeKind::Bridge {
                inner_radius,
                outer_radius,
                span_deg,
            } => {
                positive(inner_radius, "inner radius")?;
                positive(outer_radius - inner_radius, "wall thickness")?;
                positive(span_deg, "span")?;
                if span_deg > 360.0 {
                    return Err(SynthError::InvalidSpec("span exceeds 360 degrees".into()));
                }
            }
        }
        if let Some(d) = self.deformity {
            if !(d.magnitude.is_finite() && d.magnitude >= 0.0) {
                return Err(SynthError::InvalidSpec(
                    "deformity magnitude must be non-negative".into(),
                ));
            }
            if !d.angle_deg.is_finite() {
                return Err(SynthError::InvalidSpec(
                    "deformity angle must be finite".into(),
                ));
            }
        }
        Ok(())
    }

    /// Characteristic size used to scale notch width.
    fn scale(&self) -> f64 {
        match self.kind {
            ShapeKind::Disk { radius } | ShapeKind::Blob { radius } => radius,
            ShapeKind::Square { side } => side as f64 / 2.0,
            ShapeKind::Ellipse { semi_x, semi_y } => semi_x.min(semi_y),
            ShapeKind::Bridge {
                inner_radius,
                outer_radius,
                ..
            } => outer_radius - inner_radius,
        }
    }
}

/// Width in pixels of the slot cut by a notch on a shape of the given scale.
pub fn notch_width(scale: f64) -> f64 {
    (0.2 * scale).round().max(3.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub spacing: Spacing,
}

impl Canvas {
    pub fn new(width: usize, height: usize, spacing: Spacing) -> Self {
        Self {
            width,
            height,
            spacing,
        }
    }

    pub fn square(size: usize) -> Self {
        Self::new(size, size, Spacing::default())
    }

    fn center(&self) -> (f64, f64) {
        (
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )
    }

    fn exceeds(&self) -> SynthError {
        SynthError::ExceedsCanvas {
            width: self.width,
            height: self.height,
        }
    }
}

/// Radial profile `r(theta) = R (1 + sum a_k cos(k theta + phi_k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobProfile {
    pub radius: f64,
    /// `(k, a_k, phi_k)`.
    pub harmonics: Vec<(u32, f64, f64)>,
}

impl BlobProfile {
    pub fn from_seed(radius: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let harmonics = (2..=BLOB_MAX_HARMONIC)
            .map(|k| {
                let amp = rng.random_range(0.0..BLOB_AMPLITUDE) / f64::from(k * k);
                let phase = rng.random_range(0.0..TAU);
                (k, amp, phase)
            })
            .collect();
        Self { radius, harmonics }
    }

    pub fn radius_at(&self, theta: f64) -> f64 {
        self.radius
            * (1.0
                + self
                    .harmonics
                    .iter()
                    .map(|&(k, a, phi)| a * (f64::from(k) * theta + phi).cos())
                    .sum::<f64>())
    }

    pub fn max_radius(&self) -> f64 {
        self.radius * (1.0 + self.harmonics.iter().map(|h| h.1).sum::<f64>())
    }
}

fn rasterize<F: Fn(f64, f64) -> bool>(canvas: &Canvas, inside: F) -> Vec<bool> {
    let (cx, cy) = canvas.center();
    let mut members = vec![false; canvas.width * canvas.height];
    for row in 0..canvas.height {
        for col in 0..canvas.width {
            members[row * canvas.width + col] = inside(col as f64 - cx, row as f64 - cy);
        }
    }
    members
}

fn fits(canvas: &Canvas, half_w: f64, half_h: f64) -> bool {
    let (cx, cy) = canvas.center();
    cx - half_w >= 0.0 && cy - half_h >= 0.0
}

fn shape_members(kind: ShapeKind, seed: u64, canvas: &Canvas) -> Result<Vec<bool>, SynthError> {
    match kind {
        ShapeKind::Disk { radius } => {
            if !fits(canvas, radius, radius) {
                return Err(canvas.exceeds());
            }
            Ok(rasterize(canvas, |x, y| x * x + y * y <= radius * radius))
        }
        ShapeKind::Square { side } => {
            if side > canvas.width || side > canvas.height {
                return Err(canvas.exceeds());
            }
            let x0 = (canvas.width - side) / 2;
            let y0 = (canvas.height - side) / 2;
            let mut members = vec![false; canvas.width * canvas.height];
            for row in y0..y0 + side {
                members[row * canvas.width + x0..row * canvas.width + x0 + side].fill(true);
            }
            Ok(members)
        }
        ShapeKind::Ellipse { semi_x, semi_y } => {
            if !fits(canvas, semi_x, semi_y) {
                return Err(canvas.exceeds());
            }
            Ok(rasterize(canvas, |x, y| {
                (x / semi_x).powi(2) + (y / semi_y).powi(2) <= 1.0
            }))
        }
        ShapeKind::Bridge {
            inner_radius,
            outer_radius,
            span_deg,
        } => {
            if !fits(canvas, outer_radius, outer_radius) {
                return Err(canvas.exceeds());
            }
            // Centered on "up" (-y in image axes); the gap faces down.
            let half_span = span_deg.to_radians() / 2.0;
            Ok(rasterize(canvas, |x, y| {
                let d2 = x * x + y * y;
                if d2 < inner_radius * inner_radius || d2 > outer_radius * outer_radius {
                    return false;
                }
                let from_up = (x.atan2(-y)).abs();
                from_up <= half_span
            }))
        }
        ShapeKind::Blob { radius } => {
            let profile = accepted_blob(radius, seed, canvas)?.0;
            Ok(rasterize(canvas, |x, y| {
                (x * x + y * y).sqrt() <= profile.radius_at(y.atan2(x))
            }))
        }
    }
}

/// Finds the first seed at or after `seed` whose blob passes the default
/// LV-endo and LV-epi thresholds.
fn accepted_blob(
    radius: f64,
    seed: u64,
    canvas: &Canvas,
) -> Result<(BlobProfile, u64), SynthError> {
    let thresholds = default_thresholds();
    let strictest = |name: &str| {
        let t = thresholds.get(name).expect("default structure");
        (
            t.min_convexity.unwrap_or(0.0),
            t.min_simplicity.unwrap_or(0.0),
        )
    };
    let (endo, epi) = (strictest(LV_ENDO), strictest(LV_EPI));
    let (min_cx, min_sp) = (endo.0.max(epi.0), endo.1.max(epi.1));

    for attempt in 0..BLOB_ATTEMPTS {
        let s = seed.wrapping_add(attempt);
        let profile = BlobProfile::from_seed(radius, s);
        let r = profile.max_radius();
        if !fits(canvas, r, r) {
            return Err(canvas.exceeds());
        }
        let members = rasterize(canvas, |x, y| {
            (x * x + y * y).sqrt() <= profile.radius_at(y.atan2(x))
        });
        let Some(region) =
            geometry::Region::from_members(canvas.width, canvas.height, canvas.spacing, members)
        else {
            continue;
        };
        let ok = region.component_count() == 1
            && metrics::convexity(&region).is_ok_and(|cx| cx > min_cx)
            && metrics::simplicity(&region) > min_sp;
        if ok {
            return Ok((profile, s));
        }
    }
    Err(SynthError::BlobRejected(seed))
}

/// Pixels added and removed by a deformity.
#[derive(Debug, Default)]
struct Edit {
    added: Vec<usize>,
    removed: Vec<usize>,
}

fn outermost_on_ray(
    members: &[bool],
    canvas: &Canvas,
    origin: (f64, f64),
    dir: (f64, f64),
) -> Option<f64> {
    let mut best: Option<f64> = None;
    for row in 0..canvas.height {
        for col in 0..canvas.width {
            if !members[row * canvas.width + col] {
                continue;
            }
            let (dx, dy) = (col as f64 - origin.0, row as f64 - origin.1);
            let along = dx * dir.0 + dy * dir.1;
            let across = -dx * dir.1 + dy * dir.0;
            if along >= 0.0 && across.abs() <= 0.5 {
                best = Some(best.map_or(along, |b: f64| b.max(along)));
            }
        }
    }
    best
}

fn deform(
    members: &[bool],
    canvas: &Canvas,
    origin: (f64, f64),
    deformity: Deformity,
    scale: f64,
) -> Result<Edit, SynthError> {
    let mut edit = Edit::default();
    if deformity.magnitude == 0.0 {
        return Ok(edit);
    }
    let angles: &[f64] = match deformity.kind {
        DeformityKind::Neck => &[0.0, 180.0],
        _ => &[0.0],
    };
    for &offset in angles {
        let theta = (deformity.angle_deg + offset).to_radians();
        let dir = (theta.cos(), theta.sin());
        let tip = outermost_on_ray(members, canvas, origin, dir)
            .ok_or_else(|| SynthError::InvalidSpec("deformity ray misses the shape".into()))?;
        match deformity.kind {
            DeformityKind::Spike => {
                spike(canvas, origin, dir, tip, deformity.magnitude, &mut edit)?;
            }
            DeformityKind::Notch | DeformityKind::Neck => {
                let half = notch_width(scale) / 2.0;
                let floor = tip - deformity.magnitude;
                for row in 0..canvas.height {
                    for col in 0..canvas.width {
                        let i = row * canvas.width + col;
                        if !members[i] {
                            continue;
                        }
                        let (dx, dy) = (col as f64 - origin.0, row as f64 - origin.1);
                        let along = dx * dir.0 + dy * dir.1;
                        let across = -dx * dir.1 + dy * dir.0;
                        if along > floor && across.abs() <= half {
                            edit.removed.push(i);
                        }
                    }
                }
            }
        }
    }
    Ok(edit)
}

fn spike(
    canvas: &Canvas,
    origin: (f64, f64),
    dir: (f64, f64),
    start: f64,
    length: f64,
    edit: &mut Edit,
) -> Result<(), SynthError> {
    let to_pixel = |t: f64| -> (i64, i64) {
        (
            (origin.0 + t * dir.0).round() as i64,
            (origin.1 + t * dir.1).round() as i64,
        )
    };
    let mut push = |(c, r): (i64, i64)| -> Result<(), SynthError> {
        if c < 0 || r < 0 || c as usize >= canvas.width || r as usize >= canvas.height {
            return Err(canvas.exceeds());
        }
        edit.added.push(r as usize * canvas.width + c as usize);
        Ok(())
    };
    let steps = (length * 20.0).ceil().max(1.0) as usize;
    let mut prev = to_pixel(start);
    for s in 1..=steps {
        let p = to_pixel(start + length * s as f64 / steps as f64);
        if p == prev {
            continue;
        }
        if p.0 != prev.0 && p.1 != prev.1 {
            // Keep the path 4-connected.
            push((p.0, prev.1))?;
        }
        push(p)?;
        prev = p;
    }
    Ok(())
}

/// Rasterizes `spec` with label 1 on an otherwise empty canvas.
pub fn generate(spec: &ShapeSpec, canvas: &Canvas) -> Result<LabelMask, SynthError> {
    spec.validate()?;
    if canvas.width == 0 || canvas.height == 0 {
        return Err(canvas.exceeds());
    }
    let mut members = shape_members(spec.kind, spec.seed, canvas)?;
    if let Some(d) = spec.deformity {
        let edit = deform(&members, canvas, canvas.center(), d, spec.scale())?;
        for i in edit.removed {
            members[i] = false;
        }
        for i in edit.added {
            members[i] = true;
        }
    }
    let labels = members.into_iter().map(u8::from).collect();
    Ok(LabelMask::new(
        canvas.width,
        canvas.height,
        canvas.spacing,
        labels,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub magnitude: f64,
    pub convexity: f64,
    pub simplicity: f64,
}

/// Regenerates `spec` once per magnitude with the deformity kind and angle
/// of `spec` (a notch at 0 degrees when it has none) and scores each result.
pub fn sensitivity_sweep(
    spec: &ShapeSpec,
    canvas: &Canvas,
    magnitudes: &[f64],
) -> Result<Vec<SweepRow>, SynthError> {
    if magnitudes
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]).is_none_or(|o| o.is_gt()))
    {
        return Err(SynthError::UnsortedMagnitudes);
    }
    let base = spec.deformity.unwrap_or(Deformity {
        kind: DeformityKind::Notch,
        magnitude: 0.0,
        angle_deg: 0.0,
    });
    magnitudes
        .iter()
        .map(|&magnitude| {
            let spec = ShapeSpec {
                deformity: Some(Deformity { magnitude, ..base }),
                ..*spec
            };
            let mask = generate(&spec, canvas)?;
            let region = geometry::extract_region(&mask, &BTreeSet::from([1]))?;
            Ok(SweepRow {
                magnitude,
                convexity: metrics::convexity(&region)?,
                simplicity: metrics::simplicity(&region),
            })
        })
        .collect()
}

/// `magnitude,convexity,simplicity` with a header row.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("magnitude,convexity,simplicity\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.magnitude, r.convexity, r.simplicity);
    }
    out
}

/// A three-label cardiac-like mask: a blob cavity (label 1) wrapped in a
/// wall of constant thickness (label 2), with an optional elliptic atrium
/// (label 3) below it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    pub seed: u64,
    pub cavity_radius: f64,
    pub wall_thickness: f64,
    pub atrium: bool,
    /// Shift of the whole phantom in pixels.
    pub offset: (i64, i64),
    /// Applied to the cavity. Spikes paint label 1, notches repaint cavity
    /// pixels as wall.
    pub cavity_deformity: Option<Deformity>,
}

impl PhantomSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            cavity_radius: 60.0,
            wall_thickness: 12.0,
            atrium: true,
            offset: (0, 0),
            cavity_deformity: None,
        }
    }
}

pub fn cardiac_phantom(spec: &PhantomSpec, canvas: &Canvas) -> Result<LabelMask, SynthError> {
    if !(spec.cavity_radius > 0.0 && spec.wall_thickness > 0.0) {
        return Err(SynthError::InvalidSpec(
            "cavity radius and wall thickness must be positive".into(),
        ));
    }
    let (profile, _) = accepted_blob(
        spec.cavity_radius,
        spec.seed,
        &Canvas::square((2.0 * spec.cavity_radius * 1.2) as usize + 8),
    )?;
    let outer = profile.max_radius() + spec.wall_thickness;
    let (atrium_a, atrium_b) = (0.6 * spec.cavity_radius, 0.45 * spec.cavity_radius);
    let (cx, cy) = canvas.center();
    let lv = (
        cx + spec.offset.0 as f64,
        cy + spec.offset.1 as f64 - if spec.atrium { atrium_b + 1.0 } else { 0.0 },
    );
    let atrium_center = (lv.0, lv.1 + outer + atrium_b + 2.0);

    let inside_canvas = |x: f64, y: f64| {
        x >= 0.0 && y >= 0.0 && x <= canvas.width as f64 - 1.0 && y <= canvas.height as f64 - 1.0
    };
    let lower = if spec.atrium {
        atrium_center.1 + atrium_b
    } else {
        lv.1 + outer
    };
    if !inside_canvas(lv.0 - outer, lv.1 - outer) || !inside_canvas(lv.0 + outer, lower) {
        return Err(canvas.exceeds());
    }

    let mut labels = vec![0u8; canvas.width * canvas.height];
    // Only the bounding box of the phantom can carry labels.
    let (c0, c1) = (
        (lv.0 - outer).floor().max(0.0) as usize,
        (lv.0 + outer).ceil() as usize,
    );
    let (r0, r1) = (
        (lv.1 - outer).floor().max(0.0) as usize,
        lower.ceil() as usize,
    );
    for row in r0..=r1.min(canvas.height - 1) {
        for col in c0..=c1.min(canvas.width - 1) {
            let (x, y) = (col as f64 - lv.0, row as f64 - lv.1);
            let d = (x * x + y * y).sqrt();
            let r = profile.radius_at(y.atan2(x));
            let i = row * canvas.width + col;
            if d <= r {
                labels[i] = 1;
            } else if d <= r + spec.wall_thickness {
                labels[i] = 2;
            } else if spec.atrium {
                let (ax, ay) = (col as f64 - atrium_center.0, row as f64 - atrium_center.1);
                if (ax / atrium_a).powi(2) + (ay / atrium_b).powi(2) <= 1.0 {
                    labels[i] = 3;
                }
            }
        }
    }

    if let Some(d) = spec.cavity_deformity {
        let cavity: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        let edit = deform(&cavity, canvas, lv, d, spec.cavity_radius)?;
        for i in edit.removed {
            labels[i] = 2;
        }
        for i in edit.added {
            labels[i] = 1;
        }
    }
    Ok(LabelMask::new(
        canvas.width,
        canvas.height,
        canvas.spacing,
        labels,
    )?)
}
