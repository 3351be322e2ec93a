//! Regenerates the synthetic fixtures under `crates/core/fixtures/`.
//!
//! Everything is seeded, so reruns produce byte-identical files.

use greenzonal_core::geo::{sinusoidal_forward, CrsTag, GeoTransform, MODIS_GRID_PIXEL, MODIS_SPHERE_RADIUS};
use greenzonal_core::ndvi::{self, ScaleSpec};
use greenzonal_core::raster::{write_geotiff, ByteOrder, Compression, RasterGrid, SampleType, TiffLayout, TiffOptions};
use greenzonal_core::tables::{load_table2, load_table3, slugify, TABLE2_CSV, TABLE3_CSV};
use greenzonal_core::zonal::rasterize_zone;
use greenzonal_core::vector::{zones_to_geojson, Ring, Zone};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::path::Path;

/// Approximate city centres, (lat, lon) in degrees.
const CENTRES: [(&str, f64, f64); 41] = [
    ("alba-iulia", 46.07, 23.58),
    ("alexandria", 43.97, 25.33),
    ("arad", 46.18, 21.31),
    ("bacau", 46.57, 26.91),
    ("baia-mare", 47.66, 23.58),
    ("bistrita", 47.13, 24.49),
    ("botosani", 47.75, 26.67),
    ("braila", 45.27, 27.96),
    ("brasov", 45.65, 25.60),
    ("bucuresti", 44.43, 26.10),
    ("buzau", 45.15, 26.82),
    ("calarasi", 44.20, 27.33),
    ("cluj-napoca", 46.77, 23.59),
    ("constanta", 44.18, 28.63),
    ("craiova", 44.32, 23.80),
    ("deva", 45.88, 22.90),
    ("drobeta-turnu-severin", 44.63, 22.66),
    ("focsani", 45.70, 27.18),
    ("galati", 45.44, 28.05),
    ("giurgiu", 43.90, 25.97),
    ("iasi", 47.16, 27.59),
    ("miercurea-ciuc", 46.36, 25.80),
    ("oradea", 47.07, 21.92),
    ("piatra-neamt", 46.93, 26.37),
    ("pitesti", 44.86, 24.87),
    ("ploiesti", 44.94, 26.02),
    ("ramnicu-valcea", 45.10, 24.37),
    ("resita", 45.30, 21.89),
    ("satu-mare", 47.79, 22.89),
    ("sfantu-gheorghe", 45.86, 25.79),
    ("sibiu", 45.79, 24.15),
    ("slatina", 44.43, 24.37),
    ("slobozia", 44.56, 27.36),
    ("suceava", 47.65, 26.26),
    ("targoviste", 44.93, 25.46),
    ("targu-jiu", 45.04, 23.27),
    ("targu-mures", 46.54, 24.56),
    ("timisoara", 45.75, 21.23),
    ("tulcea", 45.18, 28.80),
    ("vaslui", 46.64, 27.73),
    ("zalau", 47.19, 23.06),
];

fn blob(rng: &mut ChaCha8Rng, n: usize, jitter: f64) -> Vec<[f64; 2]> {
    let phase = rng.gen_range(0.0..TAU);
    (0..n)
        .map(|i| {
            let a = phase + TAU * (i as f64 + rng.gen_range(-0.3..0.3)) / n as f64;
            let r = 1.0 + rng.gen_range(-jitter..jitter);
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

fn area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

fn place(ring: &[[f64; 2]], scale: f64, dx: f64, dy: f64, cx: f64, cy: f64) -> Ring {
    let mut out: Ring = ring
        .iter()
        .map(|p| {
            let x = cx + (p[0] + dx) * scale;
            let y = cy + (p[1] + dy) * scale;
            [(x * 100.0).round() / 100.0, (y * 100.0).round() / 100.0]
        })
        .collect();
    out.push(out[0]);
    out
}

fn make_zones(rng: &mut ChaCha8Rng) -> Vec<Zone> {
    let t3 = load_table3(TABLE3_CSV.as_bytes()).unwrap();
    t3.iter()
        .map(|row| {
            let id = slugify(&row.name);
            let &(_, lat, lon) = CENTRES.iter().find(|c| c.0 == id).expect("centre for every city");
            let (cx, cy) = sinusoidal_forward(lon, lat, MODIS_SPHERE_RADIUS).unwrap();
            let target = row.total_km2 * 1e6;
            let outer = blob(rng, 14, 0.25);
            let polygons = match id.as_str() {
                // a lake-like hole
                "bucuresti" => {
                    let hole: Vec<[f64; 2]> = blob(rng, 8, 0.1).iter().map(|p| [p[0] * 0.15 + 0.2, p[1] * 0.12 - 0.1]).collect();
                    let s = (target / (area(&outer) - area(&hole))).sqrt();
                    vec![vec![place(&outer, s, 0.0, 0.0, cx, cy), place(&hole, s, 0.0, 0.0, cx, cy)]]
                }
                // a detached district
                "constanta" => {
                    let part: Vec<[f64; 2]> = blob(rng, 8, 0.2).iter().map(|p| [p[0] * 0.3, p[1] * 0.3]).collect();
                    let s = (target / (area(&outer) + area(&part))).sqrt();
                    vec![vec![place(&outer, s, 0.0, 0.0, cx, cy)], vec![place(&part, s, 0.0, 1.8, cx, cy)]]
                }
                _ => {
                    let s = (target / area(&outer)).sqrt();
                    vec![vec![place(&outer, s, 0.0, 0.0, cx, cy)]]
                }
            };
            Zone::new(id, row.name.clone(), polygons).unwrap()
        })
        .collect()
}

/// Smooth value noise in roughly [-1, 1], bilinear over a `cells × cells` lattice.
fn smooth_field(rng: &mut ChaCha8Rng, w: usize, h: usize, cells: usize) -> Vec<f64> {
    let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let fx = c as f64 / w as f64 * cells as f64;
            let fy = r as f64 / h as f64 * cells as f64;
            let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
            let (tx, ty) = (fx - ix as f64, fy - iy as f64);
            let at = |x: usize, y: usize| lattice[y * (cells + 1) + x];
            let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
            let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// MOD13Q1-like composite: int16 NDVI × 1e4, a few fill pixels.
fn modis_window(rng: &mut ChaCha8Rng, zone: &Zone) -> RasterGrid {
    let (w, h) = (120usize, 120usize);
    let bb = zone.bbox();
    let (cx, cy) = ((bb.min_x + bb.max_x) / 2.0, (bb.min_y + bb.max_y) / 2.0);
    // snap to the global sinusoidal grid
    let grid_x0 = -20_015_109.354;
    let grid_y0 = 10_007_554.677;
    let col = ((cx - grid_x0) / MODIS_GRID_PIXEL).floor() - (w / 2) as f64;
    let row = ((grid_y0 - cy) / MODIS_GRID_PIXEL).floor() - (h / 2) as f64;
    let gt = GeoTransform::new(grid_x0 + col * MODIS_GRID_PIXEL, grid_y0 - row * MODIS_GRID_PIXEL, MODIS_GRID_PIXEL, MODIS_GRID_PIXEL).unwrap();

    // three acquisitions, cloud-depressed at random, composited by maximum
    let field = smooth_field(rng, w, h, 8);
    let acquisitions: Vec<RasterGrid> = (0..3)
        .map(|_| {
            let samples = field
                .iter()
                .map(|f| {
                    let mut v = 0.47 + 0.11 * f + 0.04 * gauss(rng);
                    if rng.gen_bool(0.15) {
                        v -= rng.gen_range(0.2..0.6); // cloud
                    }
                    if rng.gen_bool(0.01) {
                        -3000.0
                    } else {
                        (v.clamp(-0.2, 1.0) * 10000.0).round()
                    }
                })
                .collect();
            let raw = RasterGrid::new(w, h, samples, Some(-3000.0), gt, CrsTag::modis_sinusoidal()).unwrap();
            ndvi::apply_scale(&raw, &ScaleSpec::MODIS_NDVI).unwrap()
        })
        .collect();
    let composite = ndvi::max_composite(&acquisitions).unwrap();
    let samples = composite
        .samples
        .iter()
        .map(|&v| if composite.is_nodata(v) { -3000.0 } else { (v * 10000.0).round() })
        .collect();
    RasterGrid::new(w, h, samples, Some(-3000.0), gt, CrsTag::modis_sinusoidal())
        .unwrap()
        .with_sample_type(SampleType::Int16)
}

/// Sentinel-2 L2A-like red and NIR digital numbers (reflectance × 1e4).
fn sentinel_windows(rng: &mut ChaCha8Rng) -> (RasterGrid, RasterGrid) {
    let (w, h) = (500usize, 500usize);
    // central Bucharest in UTM 35N, roughly
    let gt = GeoTransform::new(425_000.0, 4_921_000.0, 10.0, 10.0).unwrap();
    let built = smooth_field(rng, w, h, 20);
    let parks = smooth_field(rng, w, h, 12);
    let mut red = Vec::with_capacity(w * h);
    let mut nir = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let v: f64 = if parks[i] > 0.45 {
            0.68 + 0.08 * gauss(rng)
        } else if built[i] > 0.35 {
            0.12 + 0.06 * gauss(rng)
        } else {
            0.35 + 0.05 * gauss(rng)
        };
        let v = v.clamp(-0.3, 0.92);
        let r: f64 = rng.gen_range(0.03..0.12);
        let n = r * (1.0 + v) / (1.0 - v);
        red.push((r * 10000.0).round());
        nir.push((n * 10000.0).round());
    }
    let mk = |s| {
        RasterGrid::new(w, h, s, Some(0.0), gt, CrsTag::ProjectedMeters)
            .unwrap()
            .with_sample_type(SampleType::UInt16)
    };
    (
        mk(red).with_band(greenzonal_core::BandKind::Red),
        mk(nir).with_band(greenzonal_core::BandKind::Nir),
    )
}

/// 1 km MODIS-like mosaic over all 41 cities. Inside each city the share of
/// pixels above that city's `table2.csv` MODIS threshold is set to its `table3.csv`
/// MODIS percentage, so the pipeline run end to end lands near the printed table.
fn national_mosaic(rng: &mut ChaCha8Rng, zones: &[Zone]) -> RasterGrid {
    let px = 4.0 * MODIS_GRID_PIXEL;
    let t2 = load_table2(TABLE2_CSV.as_bytes()).unwrap();
    let t3 = load_table3(TABLE3_CSV.as_bytes()).unwrap();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for z in zones {
        let b = z.bbox();
        x0 = x0.min(b.min_x);
        y0 = y0.min(b.min_y);
        x1 = x1.max(b.max_x);
        y1 = y1.max(b.max_y);
    }
    let grid_x0 = -20_015_109.354;
    let grid_y0 = 10_007_554.677;
    let c0 = ((x0 - 20_000.0 - grid_x0) / px).floor();
    let r0 = ((grid_y0 - y1 - 20_000.0) / px).floor();
    let w = ((x1 + 20_000.0 - grid_x0) / px).ceil() as usize - c0 as usize;
    let h = ((grid_y0 - y0 + 20_000.0) / px).ceil() as usize - r0 as usize;
    let gt = GeoTransform::new(grid_x0 + c0 * px, grid_y0 - r0 * px, px, px).unwrap();

    let field = smooth_field(rng, w, h, 30);
    let mut samples: Vec<f64> = field
        .iter()
        .map(|f| {
            if rng.gen_bool(0.003) {
                -3000.0
            } else {
                ((0.6 + 0.15 * f + 0.05 * gauss(rng)).clamp(-0.2, 1.0) * 10000.0).round()
            }
        })
        .collect();
    let grid = RasterGrid::new(w, h, samples.clone(), Some(-3000.0), gt, CrsTag::modis_sinusoidal()).unwrap();
    for z in zones {
        let row3 = t3.iter().find(|r| slugify(&r.name) == z.id).unwrap();
        let row2 = t2.iter().find(|r| slugify(&r.residence) == z.id).unwrap();
        let t = row2.modis;
        let mask = rasterize_zone(z, &grid).unwrap();
        let (mc, mr, mw, _) = mask.window;
        let mut cells: Vec<usize> = mask
            .inside
            .iter()
            .enumerate()
            .filter(|(_, &inside)| inside)
            .map(|(k, _)| (mr + k / mw) * w + mc + k % mw)
            .collect();
        cells.shuffle(rng);
        let veg = (row3.modis_pct as f64 / 100.0 * cells.len() as f64).round() as usize;
        for (k, &i) in cells.iter().enumerate() {
            // DN steps of 1e-4 stay clear of the strict threshold comparison
            let v = if k < veg { t + rng.gen_range(0.01..0.25) } else { t - rng.gen_range(0.01..0.35) };
            samples[i] = (v * 10000.0).round();
        }
    }
    RasterGrid::new(w, h, samples, Some(-3000.0), gt, CrsTag::modis_sinusoidal())
        .unwrap()
        .with_sample_type(SampleType::Int16)
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut rng = ChaCha8Rng::seed_from_u64(20220701);

    let zones = make_zones(&mut rng);
    let text = serde_json::to_string_pretty(&zones_to_geojson(&zones)).unwrap();
    std::fs::write(dir.join("zones41.geojson"), text + "\n").unwrap();

    let bucharest = zones.iter().find(|z| z.id == "bucuresti").unwrap();
    let modis = modis_window(&mut rng, bucharest);
    let opts = TiffOptions {
        byte_order: ByteOrder::Little,
        layout: TiffLayout::Tiles { width: 64, height: 64 },
        compression: Compression::Deflate,
        sample_type: None,
    };
    std::fs::write(dir.join("bucharest_modis_ndvi.tif"), write_geotiff(&modis, &opts).unwrap()).unwrap();

    let (red, nir) = sentinel_windows(&mut rng);
    let opts = TiffOptions {
        layout: TiffLayout::Strips { rows_per_strip: 32 },
        ..opts
    };
    std::fs::write(dir.join("bucharest_s2_red.tif"), write_geotiff(&red, &opts).unwrap()).unwrap();
    std::fs::write(dir.join("bucharest_s2_nir.tif"), write_geotiff(&nir, &opts).unwrap()).unwrap();

    let national = national_mosaic(&mut rng, &zones);
    let opts = TiffOptions {
        layout: TiffLayout::Tiles { width: 128, height: 128 },
        ..opts
    };
    std::fs::write(dir.join("romania_modis_1km_ndvi.tif"), write_geotiff(&national, &opts).unwrap()).unwrap();

    let m = ndvi::apply_scale(&modis, &ScaleSpec::MODIS_NDVI).unwrap();
    let hm = ndvi::histogram(&m, None);
    let s = ndvi::ndvi(&red, &nir).unwrap();
    let hs = ndvi::histogram(&s, None);
    println!(
        "zones: {}  national mosaic {}x{}  modis mode bin center {:.2}  sentinel-2 mode bin center {:.2}",
        zones.len(),
        national.width,
        national.height,
        hm.bin_center(hm.mode_bin().unwrap()),
        hs.bin_center(hs.mode_bin().unwrap())
    );
}
