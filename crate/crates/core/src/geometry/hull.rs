//! Convex hull of a region's pixel centers.
//!
//! The hull is computed exactly on the integer pixel lattice with Andrew's
//! monotone chain. Because every hull vertex is a lattice point, the number
//! of pixels the hull covers follows from Pick's theorem without rasterizing:
//! `covered = area + boundary / 2 + 1`, where `boundary` counts lattice
//! points on the hull edges.

use super::{Point, Polygon};
use crate::mask::Spacing;

type Lattice = (i64, i64);

fn cross(o: Lattice, a: Lattice, b: Lattice) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Monotone chain. Collinear points are dropped; the result is
/// counter-clockwise (positive signed area in x/y as stored).
pub(crate) fn monotone_chain(mut points: Vec<Lattice>) -> Vec<Lattice> {
    points.sort_unstable();
    points.dedup();
    if points.len() < 3 {
        return points;
    }

    let mut hull: Vec<Lattice> = Vec::with_capacity(points.len() + 1);
    for &p in &points {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in points.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

/// Convex hull of the pixel centers of a region, kept in lattice form.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull {
    vertices: Vec<Lattice>,
    spacing: Spacing,
}

impl ConvexHull {
    pub(crate) fn from_lattice(points: Vec<Lattice>, spacing: Spacing) -> Self {
        let mut vertices = monotone_chain(points);
        // A collinear set collapses to its two extreme points.
        if vertices.len() < 3 {
            vertices.truncate(2);
        }
        Self { vertices, spacing }
    }

    /// True when all pixel centers are collinear and the hull has no area.
    pub fn is_degenerate(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Hull vertices as `(col, row)` pixel indices, counter-clockwise.
    pub fn lattice_vertices(&self) -> &[(i64, i64)] {
        &self.vertices
    }

    /// Hull polygon in millimeters, or `None` for a degenerate hull.
    pub fn polygon(&self) -> Option<Polygon> {
        if self.is_degenerate() {
            return None;
        }
        let pts = self
            .vertices
            .iter()
            .map(|&(c, r)| Point::new(c as f64 * self.spacing.x, r as f64 * self.spacing.y))
            .collect();
        Polygon::new(pts).ok()
    }

    fn twice_lattice_area(&self) -> i64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0;
        }
        (0..n)
            .map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                a.0 * b.1 - b.0 * a.1
            })
            .sum::<i64>()
            .abs()
    }

    /// Number of lattice points on the hull boundary.
    pub fn boundary_points(&self) -> u64 {
        match self.vertices.len() {
            0 => 0,
            1 => 1,
            2 => {
                let (a, b) = (self.vertices[0], self.vertices[1]);
                gcd(b.0 - a.0, b.1 - a.1) as u64 + 1
            }
            n => (0..n)
                .map(|i| {
                    let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                    gcd(b.0 - a.0, b.1 - a.1) as u64
                })
                .sum(),
        }
    }

    /// Shoelace area of the hull polygon in mm².
    pub fn polygon_area(&self) -> f64 {
        self.twice_lattice_area() as f64 / 2.0 * self.spacing.pixel_area()
    }

    /// Number of pixels whose centers lie inside or on the hull.
    pub fn covered_pixels(&self) -> u64 {
        if self.is_degenerate() {
            return self.boundary_points();
        }
        // Pick: twice the count is 2A + B + 2, always even.
        (self.twice_lattice_area() as u64 + self.boundary_points() + 2) / 2
    }

    /// Area in mm² of the pixels covered by the hull.
    pub fn covered_area(&self) -> f64 {
        self.covered_pixels() as f64 * self.spacing.pixel_area()
    }
}
