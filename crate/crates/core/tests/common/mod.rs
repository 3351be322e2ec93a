#![allow(dead_code)]

use greenzonal_core::geo::{CrsTag, GeoTransform};
use greenzonal_core::vector::{Point, Ring, Zone};
use greenzonal_core::RasterGrid;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

/// Random projected-metre grid, up to `max` pixels a side, with some nodata.
pub fn random_ndvi_grid(rng: &mut ChaCha8Rng, max: usize) -> RasterGrid {
    let w = rng.gen_range(1..=max);
    let h = rng.gen_range(1..=max);
    let px = [10.0, 20.0, 30.0, 231.656_358_263_958_3, 250.0][rng.gen_range(0..5)];
    let gt = GeoTransform::new(
        rng.gen_range(-1e5..1e5),
        rng.gen_range(-1e5..1e5),
        px,
        px,
    )
    .unwrap();
    let samples = (0..w * h)
        .map(|_| {
            if rng.gen_bool(0.05) {
                -9999.0
            } else {
                rng.gen_range(-1.0..=1.0)
            }
        })
        .collect();
    RasterGrid::new(w, h, samples, Some(-9999.0), gt, CrsTag::ProjectedMeters).unwrap()
}

/// Star-shaped ring around `(cx, cy)`; simple by construction.
pub fn star_ring(rng: &mut ChaCha8Rng, cx: f64, cy: f64, r: f64, n: usize) -> Ring {
    let phase = rng.gen_range(0.0..TAU);
    let mut ring: Ring = (0..n)
        .map(|i| {
            let a = phase + TAU * i as f64 / n as f64;
            let rr = r * rng.gen_range(0.4..1.0);
            [cx + rr * a.cos(), cy + rr * a.sin()]
        })
        .collect();
    ring.push(ring[0]);
    ring
}

/// A zone over the grid's extent: one star polygon, sometimes with a hole,
/// sometimes with a second disjoint part.
pub fn random_zone(rng: &mut ChaCha8Rng, grid: &RasterGrid) -> Zone {
    let (x0, y0, x1, y1) = grid.extent();
    let (w, h) = (x1 - x0, y1 - y0);
    let r = w.min(h) * rng.gen_range(0.2..0.6);
    let cx = x0 + w * rng.gen_range(0.3..0.7);
    let cy = y0 + h * rng.gen_range(0.3..0.7);
    let n = rng.gen_range(3..16);
    let outer = star_ring(rng, cx, cy, r, n);
    let mut first = vec![outer];
    if n >= 8 && rng.gen_bool(0.6) {
        // with 8+ vertices at radius >= 0.4 r the outer ring stays beyond 0.36 r
        let m = rng.gen_range(3..8);
        first.push(star_ring(rng, cx, cy, r * 0.35, m));
    }
    let mut polygons = vec![first];
    let r2 = r * 0.2;
    let (qx, qy) = (x0 + r2, y1 - r2);
    if rng.gen_bool(0.3) && (qx - cx).hypot(qy - cy) > 1.01 * (r + r2) {
        polygons.push(vec![star_ring(rng, qx, qy, r2, 5)]);
    }
    Zone::new("z", "Zone", polygons).unwrap()
}

/// Winding number of the closed ring around `p` (nonzero rule).
pub fn winding(ring: &[Point], p: Point) -> i32 {
    let mut wn = 0;
    for s in ring.windows(2) {
        let (a, b) = (s[0], s[1]);
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1]);
        if a[1] <= p[1] {
            if b[1] > p[1] && cross > 0.0 {
                wn += 1;
            }
        } else if b[1] <= p[1] && cross < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Membership by winding numbers: inside the outer ring and outside every hole.
/// Independent of the library's ray-casting code.
pub fn winding_contains(zone: &Zone, p: Point) -> bool {
    zone.polygons.iter().any(|poly| {
        winding(&poly.rings[0], p) != 0 && poly.rings[1..].iter().all(|h| winding(h, p) == 0)
    })
}

/// Distance from `p` to the nearest zone edge.
pub fn edge_distance(zone: &Zone, p: Point) -> f64 {
    zone.edges()
        .map(|(a, b)| {
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            ((a[0] + t * dx - p[0]).powi(2) + (a[1] + t * dy - p[1]).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}
