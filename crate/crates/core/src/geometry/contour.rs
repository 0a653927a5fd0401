//! Mid-edge marching squares over a binary pixel grid.
//!
//! Pixel centers sit on the integer lattice. Contour vertices sit on the
//! midpoints between a foreground and a background pixel center, so every
//! vertex has one half-integer coordinate. The tracer keeps foreground
//! 4-connected and background 8-connected: in the two saddle configurations
//! the diagonal foreground corners are cut off individually.
//!
//! Vertices are produced in doubled integer coordinates (pixel `(c, r)` at
//! `(2c, 2r)`), which keeps edge identities exact during linking.

use std::collections::{HashMap, HashSet};

/// A closed loop in doubled lattice coordinates.
pub(crate) type Loop = Vec<(i64, i64)>;

// Cell corners in clockwise order (image axes, y pointing down):
// top-left, top-right, bottom-right, bottom-left. Edge `i` joins corner `i`
// and corner `i + 1`.
const CORNER_OFFSETS: [(i64, i64); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

fn edge_midpoint(cell_x: i64, cell_y: i64, edge: usize) -> (i64, i64) {
    let (ax, ay) = CORNER_OFFSETS[edge];
    let (bx, by) = CORNER_OFFSETS[(edge + 1) % 4];
    (2 * cell_x + ax + bx, 2 * cell_y + ay + by)
}

/// Traces every boundary loop (outer boundaries and holes) of the foreground.
///
/// `inside(col, row)` must return false outside `0..width` x `0..height`.
/// Loops are returned in the order their first segment is met in a row-major
/// scan of the cells, each starting at that segment.
pub(crate) fn trace_loops<F>(width: usize, height: usize, inside: F) -> Vec<Loop>
where
    F: Fn(i64, i64) -> bool,
{
    let (w, h) = (width as i64, height as i64);
    let mut next: HashMap<(i64, i64), (i64, i64)> = HashMap::new();
    let mut starts: Vec<(i64, i64)> = Vec::new();

    for cy in -1..h {
        for cx in -1..w {
            let fg = CORNER_OFFSETS.map(|(dx, dy)| inside(cx + dx, cy + dy));
            let n_fg = fg.iter().filter(|&&b| b).count();
            if n_fg == 0 || n_fg == 4 {
                continue;
            }
            // Each maximal clockwise run of foreground corners gets its own
            // segment, from the edge entering the run to the edge leaving it.
            for i in 0..4 {
                let prev = (i + 3) % 4;
                if fg[i] && !fg[prev] {
                    let mut j = i;
                    while fg[(j + 1) % 4] {
                        j = (j + 1) % 4;
                    }
                    let from = edge_midpoint(cx, cy, prev);
                    let to = edge_midpoint(cx, cy, j);
                    next.insert(from, to);
                    starts.push(from);
                }
            }
        }
    }

    let mut loops = Vec::new();
    let mut visited: HashSet<(i64, i64)> = HashSet::with_capacity(next.len());
    for start in starts {
        if visited.contains(&start) {
            continue;
        }
        let mut ring = Vec::new();
        let mut cur = start;
        loop {
            visited.insert(cur);
            ring.push(cur);
            cur = next[&cur];
            if cur == start {
                break;
            }
        }
        loops.push(ring);
    }
    loops
}
