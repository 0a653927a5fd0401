//! Raster-to-geometry primitives.
//!
//! Conventions used throughout:
//!
//! * Pixel `(col, row)` has its center at `(col * sx, row * sy)` mm.
//! * Foreground is 4-connected, background 8-connected.
//! * [`area`] counts pixels. [`perimeter`] measures the mid-edge
//!   marching-squares loops (holes included) after one pass of three-vertex
//!   averaging, which removes most of the staircase length.
//! * The convex hull is taken over pixel centers on the integer lattice.

mod contour;
mod hull;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{LabelMask, Spacing};

pub use hull::ConvexHull;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("label selector is empty")]
    EmptySelector,
    #[error("no pixel carries any of the labels {0:?}")]
    EmptyRegion(Vec<u8>),
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has repeated consecutive vertices")]
    RepeatedVertex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

fn twice_signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum()
}

/// Shoelace area (absolute value) of a closed vertex list.
pub fn polygon_area(vertices: &[Point]) -> Result<f64, GeometryError> {
    if vertices.len() < 3 {
        return Err(GeometryError::TooFewVertices(vertices.len()));
    }
    Ok(twice_signed_area(vertices).abs() / 2.0)
}

/// An implicitly closed polygon, stored counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(mut vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        let n = vertices.len();
        if (0..n).any(|i| vertices[i] == vertices[(i + 1) % n]) {
            return Err(GeometryError::RepeatedVertex);
        }
        if twice_signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        twice_signed_area(&self.vertices).abs() / 2.0
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| self.vertices[i].distance(self.vertices[(i + 1) % n]))
            .sum()
    }
}

/// The pixels of one structure together with their traced boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    width: usize,
    height: usize,
    spacing: Spacing,
    members: Vec<bool>,
    pixel_count: usize,
    component_count: usize,
    boundary: Vec<Vec<Point>>,
}

impl Region {
    /// Builds a region from a membership grid. Returns `None` when no pixel
    /// is set.
    pub fn from_members(
        width: usize,
        height: usize,
        spacing: Spacing,
        members: Vec<bool>,
    ) -> Option<Self> {
        assert_eq!(members.len(), width * height, "membership grid size");
        let pixel_count = members.iter().filter(|&&m| m).count();
        if pixel_count == 0 {
            return None;
        }
        let component_count = count_components(width, height, &members);
        let inside = |x: i64, y: i64| {
            x >= 0
                && y >= 0
                && (x as usize) < width
                && (y as usize) < height
                && members[y as usize * width + x as usize]
        };
        let boundary = contour::trace_loops(width, height, inside)
            .into_iter()
            .map(|ring| {
                ring.into_iter()
                    .map(|(x2, y2)| {
                        Point::new(x2 as f64 / 2.0 * spacing.x, y2 as f64 / 2.0 * spacing.y)
                    })
                    .collect()
            })
            .collect();
        Some(Self {
            width,
            height,
            spacing,
            members,
            pixel_count,
            component_count,
            boundary,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn contains(&self, col: usize, row: usize) -> bool {
        col < self.width && row < self.height && self.members[row * self.width + col]
    }

    /// Row-major membership grid.
    pub fn members(&self) -> &[bool] {
        &self.members
    }

    /// Member pixels as `(col, row)`, in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }

    /// Number of 4-connected components.
    pub fn component_count(&self) -> usize {
        self.component_count
    }

    /// Closed boundary loops in millimeters: one per outer boundary and one
    /// per hole.
    pub fn boundary(&self) -> &[Vec<Point>] {
        &self.boundary
    }

    pub fn boundary_vertex_count(&self) -> usize {
        self.boundary.iter().map(Vec::len).sum()
    }

    /// True when both regions live on the same pixel grid.
    pub fn same_grid(&self, other: &Region) -> bool {
        self.width == other.width && self.height == other.height && self.spacing == other.spacing
    }
}

fn count_components(width: usize, height: usize, members: &[bool]) -> usize {
    let mut seen = vec![false; members.len()];
    let mut queue = VecDeque::new();
    let mut count = 0;
    for start in 0..members.len() {
        if !members[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if members[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
    }
    count
}

/// Collects every pixel whose label is in `selector`.
pub fn extract_region(mask: &LabelMask, selector: &BTreeSet<u8>) -> Result<Region, GeometryError> {
    if selector.is_empty() {
        return Err(GeometryError::EmptySelector);
    }
    let mut lut = [false; 256];
    for &l in selector {
        lut[l as usize] = true;
    }
    let members = mask.labels().iter().map(|&l| lut[l as usize]).collect();
    Region::from_members(mask.width(), mask.height(), mask.spacing(), members)
        .ok_or_else(|| GeometryError::EmptyRegion(selector.iter().copied().collect()))
}

/// Pixel count times pixel area, in mm².
pub fn area(region: &Region) -> f64 {
    region.pixel_count as f64 * region.spacing.pixel_area()
}

/// Length of one closed loop after replacing each vertex by the mean of
/// itself and its two neighbours. The smoothed edge `i -> i+1` equals a third
/// of the chord `v[i-1] -> v[i+2]`, which is what is summed here.
pub fn smoothed_loop_length(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 2 {
        return 0.0;
    }
    (0..n)
        .map(|i| ring[(i + n - 1) % n].distance(ring[(i + 2) % n]))
        .sum::<f64>()
        / 3.0
}

/// Boundary length in mm, summed over all loops including holes.
pub fn perimeter(region: &Region) -> f64 {
    region
        .boundary
        .iter()
        .map(|ring| smoothed_loop_length(ring))
        .sum()
}

/// Convex hull of the region's pixel centers. Only the leftmost and
/// rightmost pixel of each row can be hull vertices.
pub fn convex_hull(region: &Region) -> ConvexHull {
    let mut points = Vec::with_capacity(2 * region.height);
    for row in 0..region.height {
        let line = &region.members[row * region.width..(row + 1) * region.width];
        if let (Some(first), Some(last)) =
            (line.iter().position(|&m| m), line.iter().rposition(|&m| m))
        {
            points.push((first as i64, row as i64));
            points.push((last as i64, row as i64));
        }
    }
    ConvexHull::from_lattice(points, region.spacing)
}
