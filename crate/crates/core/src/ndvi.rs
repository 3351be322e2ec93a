//! Band math and per-pixel operators: NDVI, integer unpacking, threshold
//! classification, maximum-value compositing, histograms and threshold
//! sweeps.

use crate::exec;
use crate::raster::{BandKind, RasterGrid, SampleType};
use crate::vector::Zone;
use crate::zonal::{self, ZonalError};
use crate::DEFAULT_NODATA;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NdviError {
    #[error("grid mismatch: {0}")]
    Mismatch(String),
    #[error("threshold {0} outside [-1, 1]")]
    ThresholdRange(f64),
    #[error("composite needs at least one grid")]
    EmptyComposite,
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("invalid scale: {0}")]
    InvalidScale(String),
}

/// Unpacking rule for integer-coded products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpec {
    pub factor: f64,
    pub fill: f64,
    pub valid_min: f64,
    pub valid_max: f64,
}

impl ScaleSpec {
    /// MOD13Q1-style NDVI packing: int16 × 1e-4, fill -3000, valid [-2000, 10000].
    pub const MODIS_NDVI: ScaleSpec = ScaleSpec {
        factor: 1e-4,
        fill: -3000.0,
        valid_min: -2000.0,
        valid_max: 10000.0,
    };

    pub fn validate(&self) -> Result<(), NdviError> {
        if self.factor == 0.0 || !self.factor.is_finite() {
            return Err(NdviError::InvalidScale(format!("factor {}", self.factor)));
        }
        if self.valid_min.is_nan() || self.valid_max.is_nan() || self.valid_min > self.valid_max {
            return Err(NdviError::InvalidScale(format!(
                "valid range [{}, {}]",
                self.valid_min, self.valid_max
            )));
        }
        Ok(())
    }
}

fn check_threshold(t: f64) -> Result<(), NdviError> {
    if (-1.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(NdviError::ThresholdRange(t))
    }
}

fn check_same(a: &RasterGrid, b: &RasterGrid) -> Result<(), NdviError> {
    if a.width != b.width || a.height != b.height {
        return Err(NdviError::Mismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.transform != b.transform {
        return Err(NdviError::Mismatch("geotransforms differ".into()));
    }
    Ok(())
}

/// Output grid with `src`'s geometry and the given samples.
fn derived(src: &RasterGrid, samples: Vec<f64>, nodata: Option<f64>, band: BandKind, st: SampleType) -> RasterGrid {
    RasterGrid {
        width: src.width,
        height: src.height,
        samples,
        nodata,
        transform: src.transform,
        crs: src.crs,
        band_kind: band,
        sample_type: st,
    }
}

/// NDVI = (NIR − RED) / (NIR + RED), per pixel.
///
/// Nodata where either input is nodata, negative, or where NIR + RED = 0.
pub fn ndvi(red: &RasterGrid, nir: &RasterGrid) -> Result<RasterGrid, NdviError> {
    check_same(red, nir)?;
    let mut out = vec![0.0; red.samples.len()];
    exec::for_each_row_mut(&mut out, red.width, |r, row| {
        let (rr, nr) = (red.row(r), nir.row(r));
        for (c, o) in row.iter_mut().enumerate() {
            let (rv, nv) = (rr[c], nr[c]);
            *o = if red.is_nodata(rv) || nir.is_nodata(nv) || rv < 0.0 || nv < 0.0 {
                DEFAULT_NODATA
            } else {
                let sum = nv + rv;
                if sum == 0.0 {
                    DEFAULT_NODATA
                } else {
                    (nv - rv) / sum
                }
            };
        }
    });
    Ok(derived(red, out, Some(DEFAULT_NODATA), BandKind::Ndvi, SampleType::Float32))
}

/// Unpacks integer samples: fill or out-of-range raw values become nodata,
/// everything else is multiplied by `spec.factor`.
pub fn apply_scale(grid: &RasterGrid, spec: &ScaleSpec) -> Result<RasterGrid, NdviError> {
    spec.validate()?;
    let mut out = vec![0.0; grid.samples.len()];
    exec::for_each_row_mut(&mut out, grid.width, |r, row| {
        for (o, &v) in row.iter_mut().zip(grid.row(r)) {
            *o = if grid.is_nodata(v) || v == spec.fill || v < spec.valid_min || v > spec.valid_max {
                DEFAULT_NODATA
            } else {
                v * spec.factor
            };
        }
    });
    Ok(derived(grid, out, Some(DEFAULT_NODATA), grid.band_kind, SampleType::Float64))
}

/// Nodata value of classification masks.
pub const CLASS_NODATA: f64 = -1.0;

/// Binary vegetation mask: 1 where `ndvi > threshold`, 0 otherwise, nodata kept.
pub fn classify(ndvi: &RasterGrid, threshold: f64) -> Result<RasterGrid, NdviError> {
    check_threshold(threshold)?;
    let mut out = vec![0.0; ndvi.samples.len()];
    exec::for_each_row_mut(&mut out, ndvi.width, |r, row| {
        for (o, &v) in row.iter_mut().zip(ndvi.row(r)) {
            *o = if ndvi.is_nodata(v) {
                CLASS_NODATA
            } else if is_vegetation(v, threshold) {
                1.0
            } else {
                0.0
            };
        }
    });
    Ok(derived(ndvi, out, Some(CLASS_NODATA), BandKind::Other, SampleType::Int16))
}

/// The one vegetation rule used everywhere: strictly above the threshold.
#[inline]
pub fn is_vegetation(ndvi: f64, threshold: f64) -> bool {
    ndvi > threshold
}

/// Per-pixel maximum across acquisitions, ignoring nodata.
pub fn max_composite(grids: &[RasterGrid]) -> Result<RasterGrid, NdviError> {
    let first = grids.first().ok_or(NdviError::EmptyComposite)?;
    for g in &grids[1..] {
        check_same(first, g)?;
    }
    let nodata = grids.iter().find_map(|g| g.nodata);
    let fill = nodata.unwrap_or(DEFAULT_NODATA);
    let mut out = vec![0.0; first.samples.len()];
    exec::for_each_row_mut(&mut out, first.width, |r, row| {
        for (c, o) in row.iter_mut().enumerate() {
            let best = grids
                .iter()
                .filter_map(|g| {
                    let v = g.row(r)[c];
                    (!g.is_nodata(v)).then_some(v)
                })
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
            *o = best.unwrap_or(fill);
        }
    });
    Ok(derived(first, out, nodata, first.band_kind, first.sample_type))
}

/// Mean over non-overlapping `factor × factor` blocks (partial edge blocks
/// included). Nodata where a block holds no valid sample.
pub fn block_mean(grid: &RasterGrid, factor: usize) -> Result<RasterGrid, NdviError> {
    if factor == 0 {
        return Err(NdviError::Mismatch("block factor must be >= 1".into()));
    }
    let (w, h) = (grid.width.div_ceil(factor), grid.height.div_ceil(factor));
    let mut out = vec![0.0; w * h];
    exec::for_each_row_mut(&mut out, w, |br, row| {
        for (bc, o) in row.iter_mut().enumerate() {
            let (mut sum, mut n) = (0.0, 0usize);
            for r in br * factor..((br + 1) * factor).min(grid.height) {
                for c in bc * factor..((bc + 1) * factor).min(grid.width) {
                    if let Some(v) = grid.value(c, r) {
                        sum += v;
                        n += 1;
                    }
                }
            }
            *o = if n == 0 { DEFAULT_NODATA } else { sum / n as f64 };
        }
    });
    let mut t = grid.transform;
    t.pixel_width *= factor as f64;
    t.pixel_height *= factor as f64;
    Ok(RasterGrid {
        width: w,
        height: h,
        samples: out,
        nodata: Some(DEFAULT_NODATA),
        transform: t,
        crs: grid.crs,
        band_kind: grid.band_kind,
        sample_type: SampleType::Float64,
    })
}

pub const HISTOGRAM_BINS: usize = 50;

/// NDVI distribution over 50 bins of width 0.04 spanning [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Nodata or out-of-range samples among those inspected.
    pub excluded: u64,
}

impl Histogram {
    pub fn edges() -> Vec<f64> {
        (0..=HISTOGRAM_BINS).map(|i| (4 * i as i64 - 100) as f64 / 100.0).collect()
    }

    pub fn empty() -> Self {
        Histogram {
            bin_edges: Self::edges(),
            counts: vec![0; HISTOGRAM_BINS],
            excluded: 0,
        }
    }

    /// Bin of `v`, half-open except the last bin which also takes 1.0.
    pub fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
        if !(-1.0..=1.0).contains(&v) {
            return None;
        }
        let mut i = (((v + 1.0) / 0.04).floor() as usize).min(HISTOGRAM_BINS - 1);
        while i > 0 && v < edges[i] {
            i -= 1;
        }
        while i + 1 < HISTOGRAM_BINS && v >= edges[i + 1] {
            i += 1;
        }
        Some(i)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.excluded
    }

    /// Index of the most populated bin (lowest index on ties).
    pub fn mode_bin(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        (max > 0).then(|| self.counts.iter().position(|&c| c == max).unwrap())
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        (self.bin_edges[i] + self.bin_edges[i + 1]) / 2.0
    }

    fn add(&mut self, edges: &[f64], v: Option<f64>) {
        match v.and_then(|v| Self::bin_of(edges, v)) {
            Some(i) => self.counts[i] += 1,
            None => self.excluded += 1,
        }
    }

    fn merge(mut self, other: Histogram) -> Histogram {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.excluded += other.excluded;
        self
    }
}

/// Histogram of NDVI samples, optionally restricted to pixels whose centers
/// fall in `zone`.
pub fn histogram(ndvi: &RasterGrid, zone: Option<&Zone>) -> Histogram {
    let edges = Histogram::edges();
    match zone {
        None => exec::map_reduce(
            ndvi.height,
            Histogram::empty(),
            |r| {
                let mut h = Histogram::empty();
                for c in 0..ndvi.width {
                    h.add(&edges, ndvi.value(c, r));
                }
                h
            },
            Histogram::merge,
        ),
        Some(z) => {
            let Ok(mask) = zonal::rasterize_zone(z, ndvi) else {
                return Histogram::empty();
            };
            let (c0, r0, w, _) = mask.window;
            exec::map_reduce(
                mask.window.3,
                Histogram::empty(),
                |r| {
                    let mut h = Histogram::empty();
                    for c in 0..w {
                        if mask.inside[r * w + c] {
                            h.add(&edges, ndvi.value(c0 + c, r0 + r));
                        }
                    }
                    h
                },
                Histogram::merge,
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub veg_pct: f64,
    pub veg_km2: f64,
}

/// Vegetation share as a function of threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeries {
    pub points: Vec<SweepPoint>,
}

/// Thresholds `from, from+step, …` up to `to` inclusive (within 1e-9),
/// rounded to 10 decimals so 0.05 steps land on their decimal values.
pub fn sweep_thresholds(from: f64, to: f64, step: f64) -> Result<Vec<f64>, NdviError> {
    if !(from.is_finite() && to.is_finite() && step.is_finite()) {
        return Err(NdviError::InvalidSweep("bounds and step must be finite".into()));
    }
    if from > to {
        return Err(NdviError::InvalidSweep(format!("from {from} > to {to}")));
    }
    if step <= 0.0 {
        return Err(NdviError::InvalidSweep(format!("step {step} must be > 0")));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    if n > 100_000 {
        return Err(NdviError::InvalidSweep(format!("{n} thresholds is too many")));
    }
    Ok((0..n)
        .map(|k| ((from + k as f64 * step) * 1e10).round() / 1e10)
        .filter(|t| *t <= to + 1e-9)
        .collect())
}

/// Zonal vegetation percent and area at each threshold of the sweep.
pub fn sweep(ndvi: &RasterGrid, zone: &Zone, from: f64, to: f64, step: f64) -> Result<SweepSeries, ZonalError> {
    let thresholds = sweep_thresholds(from, to, step)?;
    for &t in &thresholds {
        check_threshold(t)?;
    }
    let mask = zonal::rasterize_zone(zone, ndvi)?;
    let points = thresholds
        .iter()
        .map(|&t| {
            let r = zonal::zonal_vegetation_masked(ndvi, zone, &mask, t)?;
            Ok(SweepPoint {
                threshold: t,
                veg_pct: r.veg_pct,
                veg_km2: r.veg_area_km2,
            })
        })
        .collect::<Result<Vec<_>, ZonalError>>()?;
    Ok(SweepSeries { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{CrsTag, GeoTransform};

    fn grid(samples: Vec<f64>, w: usize) -> RasterGrid {
        let h = samples.len() / w;
        RasterGrid::new(w, h, samples, Some(DEFAULT_NODATA), GeoTransform::new(0.0, 0.0, 1.0, 1.0).unwrap(), CrsTag::ProjectedMeters)
            .unwrap()
    }

    #[test]
    fn ndvi_examples() {
        let red = grid(vec![0.1, 0.3, 0.0, 0.2, 0.0, DEFAULT_NODATA], 6);
        let nir = grid(vec![0.5, 0.3, 0.4, 0.0, 0.0, 0.4], 6);
        let out = ndvi(&red, &nir).unwrap();
        assert!((out.samples[0] - 0.666_666_666_666_666_6).abs() < 1e-15);
        assert_eq!(out.samples[1], 0.0);
        assert_eq!(out.samples[2], 1.0);
        assert_eq!(out.samples[3], -1.0);
        assert!(out.is_nodata(out.samples[4]), "zero denominator");
        assert!(out.is_nodata(out.samples[5]), "nodata input");
        assert_eq!(out.band_kind, BandKind::Ndvi);
    }

    #[test]
    fn ndvi_rejects_mismatch() {
        let a = grid(vec![0.1; 4], 2);
        let b = grid(vec![0.1; 4], 4);
        assert!(matches!(ndvi(&a, &b), Err(NdviError::Mismatch(_))));
        let mut c = a.clone();
        c.transform.origin_x = 1.0;
        assert!(matches!(ndvi(&a, &c), Err(NdviError::Mismatch(_))));
    }

    #[test]
    fn scale_examples() {
        let raw = grid(vec![5000.0, -3000.0, 10000.0, 10001.0, -2001.0, -2000.0], 6);
        let s = apply_scale(&raw, &ScaleSpec::MODIS_NDVI).unwrap();
        assert_eq!(s.samples[0], 0.5);
        assert!(s.is_nodata(s.samples[1]));
        assert_eq!(s.samples[2], 1.0);
        assert!(s.is_nodata(s.samples[3]));
        assert!(s.is_nodata(s.samples[4]));
        assert_eq!(s.samples[5], -0.2);
        let bad = ScaleSpec { factor: 0.0, ..ScaleSpec::MODIS_NDVI };
        assert!(apply_scale(&raw, &bad).is_err());
    }

    #[test]
    fn classify_is_strict() {
        let g = grid(vec![0.4, 0.41, -1.0, DEFAULT_NODATA], 4);
        let m = classify(&g, 0.4).unwrap();
        assert_eq!(m.samples, vec![0.0, 1.0, 0.0, CLASS_NODATA]);
        let all = classify(&g, -1.0).unwrap();
        assert_eq!(all.samples, vec![1.0, 1.0, 0.0, CLASS_NODATA]);
        assert_eq!(classify(&g, 1.5), Err(NdviError::ThresholdRange(1.5)));
        assert!(classify(&g, f64::NAN).is_err());
    }

    #[test]
    fn composite_examples() {
        let a = grid(vec![0.2, 0.1], 2);
        let b = grid(vec![DEFAULT_NODATA, DEFAULT_NODATA], 2);
        let c = grid(vec![0.7, DEFAULT_NODATA], 2);
        let m = max_composite(&[a.clone(), b.clone(), c]).unwrap();
        assert_eq!(m.samples, vec![0.7, 0.1]);
        assert_eq!(max_composite(std::slice::from_ref(&a)).unwrap(), a);
        let only_fill = max_composite(&[b.clone(), b]).unwrap();
        assert!(only_fill.samples.iter().all(|v| only_fill.is_nodata(*v)));
        assert_eq!(max_composite(&[]), Err(NdviError::EmptyComposite));
    }

    #[test]
    fn histogram_bins() {
        let edges = Histogram::edges();
        assert_eq!(edges.len(), 51);
        assert_eq!((edges[0], edges[50]), (-1.0, 1.0));
        assert_eq!(edges[37], 0.48);
        assert_eq!(Histogram::bin_of(&edges, 0.48), Some(37));
        assert_eq!(Histogram::bin_of(&edges, 0.479_999_999), Some(36));
        assert_eq!(Histogram::bin_of(&edges, 1.0), Some(49));
        assert_eq!(Histogram::bin_of(&edges, -1.0), Some(0));
        assert_eq!(Histogram::bin_of(&edges, 1.01), None);
        for (i, w) in edges.windows(2).enumerate() {
            assert_eq!(Histogram::bin_of(&edges, w[0]), Some(i));
        }
    }

    #[test]
    fn histogram_constant_grid() {
        let g = grid(vec![0.5; 12], 4);
        let h = histogram(&g, None);
        assert_eq!(h.counts[37], 12);
        assert_eq!((h.bin_edges[37], h.bin_edges[38]), (0.48, 0.52));
        assert_eq!(h.total(), 12);
        let mut g2 = g.clone();
        g2.samples[0] = DEFAULT_NODATA;
        g2.samples[1] = 3.0;
        let h2 = histogram(&g2, None);
        assert_eq!(h2.excluded, 2);
        assert_eq!(h2.total(), 12);
    }

    #[test]
    fn sweep_threshold_grids() {
        let m = sweep_thresholds(0.5, 0.7, 0.05).unwrap();
        assert_eq!(m, vec![0.5, 0.55, 0.6, 0.65, 0.7]);
        let s = sweep_thresholds(0.3, 0.6, 0.05).unwrap();
        assert_eq!(s, vec![0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6]);
        assert_eq!(sweep_thresholds(0.2, 0.2, 0.1).unwrap(), vec![0.2]);
        assert!(sweep_thresholds(0.7, 0.5, 0.05).is_err());
        assert!(sweep_thresholds(0.5, 0.7, 0.0).is_err());
    }

    #[test]
    fn block_mean_halves() {
        let g = grid(vec![0.0, 1.0, 1.0, 1.0, 0.0, 0.0, DEFAULT_NODATA, DEFAULT_NODATA], 4);
        let b = block_mean(&g, 2).unwrap();
        assert_eq!((b.width, b.height), (2, 1));
        assert_eq!(b.samples, vec![0.25, 1.0]);
        assert_eq!(b.transform.pixel_width, 2.0);
    }
}
