//! Vertex-to-polyline distances between traced boundaries.
//!
//! Segments of the target boundary are bucketed into a uniform grid. A query
//! searches square rings of cells around its own cell and stops once the
//! closest segment found is no farther than anything outside the searched
//! block could be. The minimum is taken over the same per-segment values a
//! full scan would produce, so results are bit-identical to brute force.

use crate::geometry::Point;

/// Euclidean distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(Point::new(a.x + t * dx, a.y + t * dy))
}

/// Segments of every closed loop of a boundary, with a spatial grid.
#[derive(Debug, Clone)]
pub struct SegmentIndex {
    segments: Vec<(Point, Point)>,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    // CSR layout: segments of cell k are entries[offsets[k]..offsets[k + 1]].
    offsets: Vec<usize>,
    entries: Vec<u32>,
}

impl SegmentIndex {
    pub fn new(loops: &[Vec<Point>]) -> Self {
        let segments: Vec<(Point, Point)> = loops
            .iter()
            .flat_map(|ring| {
                let n = ring.len();
                (0..n).map(move |i| (ring[i], ring[(i + 1) % n]))
            })
            .collect();

        let (mut lo, mut hi) = (
            Point::new(f64::INFINITY, f64::INFINITY),
            Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for &(a, b) in &segments {
            for p in [a, b] {
                lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
            }
        }
        if segments.is_empty() {
            lo = Point::new(0.0, 0.0);
            hi = lo;
        }

        let (w, h) = ((hi.x - lo.x).max(0.0), (hi.y - lo.y).max(0.0));
        // Roughly two segments per occupied cell on a closed curve.
        let target_cells = (segments.len() / 2).max(1) as f64;
        let mut cell = ((w * h) / target_cells).sqrt();
        let mean_len = segments.iter().map(|&(a, b)| a.distance(b)).sum::<f64>()
            / segments.len().max(1) as f64;
        cell = cell.max(2.0 * mean_len);
        if !(cell.is_finite() && cell > 0.0) {
            cell = 1.0;
        }
        let nx = ((w / cell).floor() as usize + 1).max(1);
        let ny = ((h / cell).floor() as usize + 1).max(1);

        let cell_of = |v: f64, o: f64, n: usize| -> usize {
            (((v - o) / cell).floor().max(0.0) as usize).min(n - 1)
        };
        let span = |&(a, b): &(Point, Point)| {
            (
                cell_of(a.x.min(b.x), lo.x, nx),
                cell_of(a.x.max(b.x), lo.x, nx),
                cell_of(a.y.min(b.y), lo.y, ny),
                cell_of(a.y.max(b.y), lo.y, ny),
            )
        };

        let mut counts = vec![0usize; nx * ny + 1];
        for seg in &segments {
            let (x0, x1, y0, y1) = span(seg);
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    counts[cy * nx + cx + 1] += 1;
                }
            }
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let offsets = counts;
        let mut fill = offsets.clone();
        let mut entries = vec![0u32; offsets[nx * ny]];
        for (i, seg) in segments.iter().enumerate() {
            let (x0, x1, y0, y1) = span(seg);
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    let k = cy * nx + cx;
                    entries[fill[k]] = i as u32;
                    fill[k] += 1;
                }
            }
        }

        Self {
            segments,
            origin: lo,
            cell,
            nx,
            ny,
            offsets,
            entries,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[(Point, Point)] {
        &self.segments
    }

    /// Distance from `p` to the nearest segment; infinite for an empty index.
    pub fn distance(&self, p: Point) -> f64 {
        if self.segments.is_empty() {
            return f64::INFINITY;
        }
        let clamp = |v: f64, n: usize| -> i64 { (v.floor().max(0.0) as i64).min(n as i64 - 1) };
        let cx = clamp((p.x - self.origin.x) / self.cell, self.nx);
        let cy = clamp((p.y - self.origin.y) / self.cell, self.ny);
        let (nx, ny) = (self.nx as i64, self.ny as i64);

        let mut best = f64::INFINITY;
        let mut ring = 0i64;
        loop {
            let (x0, x1, y0, y1) = (cx - ring, cx + ring, cy - ring, cy + ring);
            for y in y0.max(0)..=y1.min(ny - 1) {
                let on_edge_row = y == y0 || y == y1;
                let mut x = x0.max(0);
                while x <= x1.min(nx - 1) {
                    let k = (y * nx + x) as usize;
                    for &s in &self.entries[self.offsets[k]..self.offsets[k + 1]] {
                        let (a, b) = self.segments[s as usize];
                        let d = point_segment_distance(p, a, b);
                        if d < best {
                            best = d;
                        }
                    }
                    // Interior rows only contribute their two ring columns.
                    x = if on_edge_row || x == x1 { x + 1 } else { x1 };
                }
            }

            // Lower bound on the distance to any segment in an unsearched cell.
            let mut bound = f64::INFINITY;
            if x0 > 0 {
                bound = bound.min(p.x - (self.origin.x + x0 as f64 * self.cell));
            }
            if x1 < nx - 1 {
                bound = bound.min(self.origin.x + (x1 + 1) as f64 * self.cell - p.x);
            }
            if y0 > 0 {
                bound = bound.min(p.y - (self.origin.y + y0 as f64 * self.cell));
            }
            if y1 < ny - 1 {
                bound = bound.min(self.origin.y + (y1 + 1) as f64 * self.cell - p.y);
            }
            // The margin absorbs rounding in the cell assignment of segments.
            if bound == f64::INFINITY || best <= bound - 1e-9 * self.cell {
                return best;
            }
            ring += 1;
        }
    }
}

/// Mean and maximum distance from the vertices of `from` to `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectedDistance {
    pub mean: f64,
    pub max: f64,
}

pub fn directed_distance(from: &[Vec<Point>], to: &SegmentIndex) -> Option<DirectedDistance> {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut n = 0usize;
    for ring in from {
        for &p in ring {
            let d = to.distance(p);
            sum += d;
            max = max.max(d);
            n += 1;
        }
    }
    if n == 0 || to.is_empty() {
        return None;
    }
    Some(DirectedDistance {
        mean: sum / n as f64,
        max,
    })
}
