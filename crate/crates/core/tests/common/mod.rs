//! Shared helpers for integration tests: independent oracles, generators and
//! the invariance checks reused by the acceptance target.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use cardioshape::geometry::{self, Point, Region};
use cardioshape::mask::{read_mask, write_mask, LabelMask, Spacing};
use cardioshape::metrics::{self, point_segment_distance};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sel(labels: &[u8]) -> BTreeSet<u8> {
    labels.iter().copied().collect()
}

pub fn mask_from_fn(
    width: usize,
    height: usize,
    spacing: Spacing,
    f: impl Fn(usize, usize) -> u8,
) -> LabelMask {
    let mut labels = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            labels.push(f(c, r));
        }
    }
    LabelMask::new(width, height, spacing, labels).unwrap()
}

/// Star-convex blob `r(t) = R (1 + sum a_k cos(k t + p_k))` with stronger
/// harmonics than the synth module, so hulls and contours get non-convex
/// inputs.
pub fn star_blob(seed: u64, size: usize, radius: f64, strength: f64) -> LabelMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(f64, f64, f64)> = (2..=7)
        .map(|k| {
            let k = k as f64;
            (
                k,
                rng.random_range(0.0..strength) / k,
                rng.random_range(0.0..TAU),
            )
        })
        .collect();
    let c = (size as f64 - 1.0) / 2.0;
    mask_from_fn(size, size, Spacing::default(), |col, row| {
        let (x, y) = (col as f64 - c, row as f64 - c);
        let t = y.atan2(x);
        let r = radius
            * (1.0
                + terms
                    .iter()
                    .map(|&(k, a, p)| a * (k * t + p).cos())
                    .sum::<f64>());
        u8::from((x * x + y * y).sqrt() <= r)
    })
}

pub fn disk(size: usize, radius: f64, spacing: Spacing) -> LabelMask {
    let c = (size as f64 - 1.0) / 2.0;
    mask_from_fn(size, size, spacing, |col, row| {
        let (x, y) = (col as f64 - c, row as f64 - c);
        u8::from(x * x + y * y <= radius * radius)
    })
}

/// Nearest-segment distance by scanning every segment of every loop.
pub fn brute_point_distance(p: Point, loops: &[Vec<Point>]) -> f64 {
    let mut best = f64::INFINITY;
    for ring in loops {
        let n = ring.len();
        for i in 0..n {
            let d = point_segment_distance(p, ring[i], ring[(i + 1) % n]);
            if d < best {
                best = d;
            }
        }
    }
    best
}

/// `(mad, hd)` from all vertex/segment pairs.
pub fn brute_mad_hd(a: &[Vec<Point>], b: &[Vec<Point>]) -> (f64, f64) {
    let directed = |from: &[Vec<Point>], to: &[Vec<Point>]| {
        let (mut sum, mut max, mut n) = (0.0, 0.0f64, 0usize);
        for ring in from {
            for &p in ring {
                let d = brute_point_distance(p, to);
                sum += d;
                max = max.max(d);
                n += 1;
            }
        }
        (sum / n as f64, max)
    };
    let (fm, fx) = directed(a, b);
    let (bm, bx) = directed(b, a);
    ((fm + bm) / 2.0, fx.max(bx))
}

/// Lattice points inside or on a counter-clockwise convex polygon, counted
/// by testing every point of its bounding box.
pub fn raster_hull_count(vertices: &[(i64, i64)]) -> u64 {
    let (x0, x1) = (
        vertices.iter().map(|v| v.0).min().unwrap(),
        vertices.iter().map(|v| v.0).max().unwrap(),
    );
    let (y0, y1) = (
        vertices.iter().map(|v| v.1).min().unwrap(),
        vertices.iter().map(|v| v.1).max().unwrap(),
    );
    let n = vertices.len();
    let mut count = 0;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let inside = (0..n).all(|i| {
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0) >= 0
            });
            count += u64::from(inside);
        }
    }
    count
}

/// Monte Carlo estimate of a simple polygon's area by even-odd ray casting.
pub fn monte_carlo_area(poly: &[Point], samples: usize, seed: u64) -> f64 {
    let (mut lo, mut hi) = (poly[0], poly[0]);
    for p in poly {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = poly.len();
    let mut hits = 0usize;
    for _ in 0..samples {
        let q = Point::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            if (a.y > q.y) != (b.y > q.y) {
                let x = a.x + (q.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if q.x < x {
                    inside = !inside;
                }
            }
        }
        hits += usize::from(inside);
    }
    (hi.x - lo.x) * (hi.y - lo.y) * hits as f64 / samples as f64
}

// ---------------------------------------------------------------------------
// Generators

pub fn spacing_strategy() -> impl Strategy<Value = Spacing> {
    (0.1f64..3.0, 0.1f64..3.0).prop_map(|(x, y)| Spacing::new(x, y).unwrap())
}

/// Small masks with labels 0-3; background dominates.
pub fn mask_strategy() -> impl Strategy<Value = LabelMask> {
    (1usize..=18, 1usize..=18, spacing_strategy()).prop_flat_map(|(w, h, s)| {
        prop::collection::vec(
            prop_oneof![4 => Just(0u8), 3 => Just(1u8), 1 => Just(2u8), 1 => Just(3u8)],
            w * h,
        )
        .prop_map(move |labels| LabelMask::new(w, h, s, labels).unwrap())
    })
}

/// Two masks on the same grid.
pub fn pair_strategy() -> impl Strategy<Value = (LabelMask, LabelMask)> {
    (2usize..=16, 2usize..=16, spacing_strategy()).prop_flat_map(|(w, h, s)| {
        let labels = || prop::collection::vec(prop_oneof![3 => Just(0u8), 2 => Just(1u8)], w * h);
        (labels(), labels()).prop_map(move |(a, b)| {
            (
                LabelMask::new(w, h, s, a).unwrap(),
                LabelMask::new(w, h, s, b).unwrap(),
            )
        })
    })
}

/// Embeds `mask` in a larger canvas at `(dx, dy)`.
pub fn translate(mask: &LabelMask, dx: usize, dy: usize, pad: usize) -> LabelMask {
    let (w, h) = (mask.width() + pad, mask.height() + pad);
    mask_from_fn(w, h, mask.spacing(), |c, r| {
        if c >= dx && r >= dy && c - dx < mask.width() && r - dy < mask.height() {
            mask.get(c - dx, r - dy)
        } else {
            0
        }
    })
}

// ---------------------------------------------------------------------------
// Invariance checks

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-12)
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(TestCaseError::fail(format!($($fmt)+)));
        }
    }};
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub area: f64,
    pub perimeter: f64,
    pub convexity: Option<f64>,
    pub simplicity: f64,
}

pub fn shape_of(r: &Region) -> Shape {
    Shape {
        area: geometry::area(r),
        perimeter: geometry::perimeter(r),
        convexity: metrics::convexity(r).ok(),
        simplicity: metrics::simplicity(r),
    }
}

fn regions(mask: &LabelMask) -> Vec<Option<Region>> {
    [sel(&[1]), sel(&[1, 2]), sel(&[3])]
        .iter()
        .map(|s| geometry::extract_region(mask, s).ok())
        .collect()
}

/// Every metric of every structure, and Dice/MAD/HD against a second mask,
/// are unchanged by embedding both in a larger canvas at an offset.
pub fn check_translation(
    (a, b): &(LabelMask, LabelMask),
    dx: usize,
    dy: usize,
) -> Result<(), TestCaseError> {
    let pad = dx.max(dy) + 3;
    let (ta, tb) = (translate(a, dx, dy, pad), translate(b, dx, dy, pad));
    for ((ra, rb), (sa, sb)) in regions(a)
        .into_iter()
        .zip(regions(b))
        .zip(regions(&ta).into_iter().zip(regions(&tb)))
    {
        ensure!(ra.is_some() == sa.is_some(), "presence changed");
        let (Some(ra), Some(sa)) = (ra, sa) else {
            continue;
        };
        let (x, y) = (shape_of(&ra), shape_of(&sa));
        ensure!(x.area == y.area, "area {} vs {}", x.area, y.area);
        ensure!(
            close(x.perimeter, y.perimeter, 1e-9),
            "perimeter {} vs {}",
            x.perimeter,
            y.perimeter
        );
        ensure!(
            x.convexity == y.convexity,
            "convexity {:?} vs {:?}",
            x.convexity,
            y.convexity
        );
        ensure!(close(x.simplicity, y.simplicity, 1e-9), "simplicity");
        ensure!(ra.component_count() == sa.component_count(), "components");
        if let (Some(rb), Some(sb)) = (rb, sb) {
            ensure!(
                metrics::dice(&ra, &rb).unwrap() == metrics::dice(&sa, &sb).unwrap(),
                "dice"
            );
            let (d0, d1) = (
                metrics::boundary_distances(&ra, &rb).unwrap(),
                metrics::boundary_distances(&sa, &sb).unwrap(),
            );
            ensure!(close(d0.mean_absolute, d1.mean_absolute, 1e-9), "mad");
            ensure!(close(d0.hausdorff, d1.hausdorff, 1e-9), "hd");
        }
    }
    Ok(())
}

/// Scaling the pixel spacing by `k` scales area by k², perimeter and
/// distances by k, and leaves Cx, Sp and Dice unchanged.
pub fn check_rescale((a, b): &(LabelMask, LabelMask), k: f64) -> Result<(), TestCaseError> {
    let s = a.spacing();
    let scaled = Spacing::new(s.x * k, s.y * k).unwrap();
    let (sa, sb) = (
        a.clone().with_spacing(scaled).unwrap(),
        b.clone().with_spacing(scaled).unwrap(),
    );
    for ((ra, rb), (qa, qb)) in regions(a)
        .into_iter()
        .zip(regions(b))
        .zip(regions(&sa).into_iter().zip(regions(&sb)))
    {
        let (Some(ra), Some(qa)) = (ra, qa) else {
            continue;
        };
        let (x, y) = (shape_of(&ra), shape_of(&qa));
        ensure!(
            close(y.area, x.area * k * k, 1e-12),
            "area {} vs {}",
            y.area,
            x.area * k * k
        );
        ensure!(close(y.perimeter, x.perimeter * k, 1e-9), "perimeter");
        match (x.convexity, y.convexity) {
            (Some(c0), Some(c1)) => ensure!(close(c0, c1, 1e-12), "convexity {c0} vs {c1}"),
            (None, None) => {}
            _ => ensure!(false, "convexity definedness changed"),
        }
        ensure!(close(x.simplicity, y.simplicity, 1e-9), "simplicity");
        if let (Some(rb), Some(qb)) = (rb, qb) {
            ensure!(
                metrics::dice(&ra, &rb).unwrap() == metrics::dice(&qa, &qb).unwrap(),
                "dice"
            );
            let (d0, d1) = (
                metrics::boundary_distances(&ra, &rb).unwrap(),
                metrics::boundary_distances(&qa, &qb).unwrap(),
            );
            ensure!(
                close(d1.mean_absolute, d0.mean_absolute * k, 1e-9),
                "mad scale"
            );
            ensure!(close(d1.hausdorff, d0.hausdorff * k, 1e-9), "hd scale");
        }
    }
    Ok(())
}

/// MAD never exceeds HD.
pub fn check_mad_le_hd((a, b): &(LabelMask, LabelMask)) -> Result<(), TestCaseError> {
    let s = sel(&[1]);
    let (Ok(ra), Ok(rb)) = (
        geometry::extract_region(a, &s),
        geometry::extract_region(b, &s),
    ) else {
        return Ok(());
    };
    let d = metrics::boundary_distances(&ra, &rb).unwrap();
    ensure!(
        d.mean_absolute <= d.hausdorff,
        "mad {} > hd {}",
        d.mean_absolute,
        d.hausdorff
    );
    Ok(())
}

/// Writing then reading a mask returns it unchanged, in every format.
pub fn check_round_trip(mask: &LabelMask, dir: &std::path::Path) -> Result<(), TestCaseError> {
    for ext in ["pgm", "mha", "mhd"] {
        let path = dir.join(format!("m.{ext}"));
        write_mask(mask, &path).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let back = read_mask(&path).map_err(|e| TestCaseError::fail(e.to_string()))?;
        ensure!(&back == mask, "{ext} round trip changed the mask");
    }
    Ok(())
}
