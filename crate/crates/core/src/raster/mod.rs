//! Single-band raster container plus the two codecs it travels in.

mod ascii;
pub mod geotiff;

pub use ascii::{read_ascii_grid, read_ascii_grid_with_crs, write_ascii_grid};
pub use geotiff::{read_geotiff, write_geotiff, ByteOrder, Compression, TiffLayout, TiffOptions};

use crate::geo::{CrsTag, GeoError, GeoTransform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("line {line}: {msg}")]
    AsciiParse { line: usize, msg: String },
    #[error("tiff: {0}")]
    Tiff(String),
    #[error("tiff: unsupported {tag}: {msg}")]
    TiffUnsupported { tag: &'static str, msg: String },
    #[error("tiff: multi-band image ({0} samples per pixel)")]
    TiffMultiBand(u32),
    #[error("tiff: rotated or sheared transform in {0}")]
    TiffRotated(&'static str),
    #[error("tiff: truncated {what} at offset {offset} (need {need} bytes, file has {have})")]
    TiffTruncated {
        what: String,
        offset: u64,
        need: u64,
        have: u64,
    },
    #[error("tiff: missing required tag {0}")]
    TiffMissingTag(&'static str),
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("window ({col0},{row0},{width}x{height}) does not intersect the {grid_w}x{grid_h} grid")]
    EmptyWindow {
        col0: i64,
        row0: i64,
        width: usize,
        height: usize,
        grid_w: usize,
        grid_h: usize,
    },
    #[error("ascii grid requires square pixels ({0} x {1})")]
    NonSquare(f64, f64),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Numeric semantics of the samples (storage is always `f64` in memory).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleType {
    Int16,
    UInt16,
    Float32,
    Float64,
}

impl SampleType {
    pub fn is_integer(self) -> bool {
        matches!(self, SampleType::Int16 | SampleType::UInt16)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BandKind {
    Red,
    Nir,
    Green,
    Blue,
    Ndvi,
    Other,
}

impl BandKind {
    /// Nominal wavelength window in nm.
    pub fn wavelength_nm(self) -> Option<(f64, f64)> {
        match self {
            BandKind::Red => Some((620.0, 750.0)),
            BandKind::Nir => Some((750.0, 1400.0)),
            _ => None,
        }
    }
}

/// A single-band 2-D grid. Samples are row-major, `width * height` long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<f64>,
    pub nodata: Option<f64>,
    pub transform: GeoTransform,
    pub crs: CrsTag,
    pub band_kind: BandKind,
    pub sample_type: SampleType,
}

impl RasterGrid {
    /// Builds a grid after checking the container invariants.
    pub fn new(
        width: usize,
        height: usize,
        samples: Vec<f64>,
        nodata: Option<f64>,
        transform: GeoTransform,
        crs: CrsTag,
    ) -> Result<Self, RasterError> {
        let g = RasterGrid {
            width,
            height,
            samples,
            nodata,
            transform,
            crs,
            band_kind: BandKind::Other,
            sample_type: SampleType::Float64,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn filled(width: usize, height: usize, value: f64, transform: GeoTransform) -> Self {
        RasterGrid {
            width,
            height,
            samples: vec![value; width * height],
            nodata: None,
            transform,
            crs: CrsTag::ProjectedMeters,
            band_kind: BandKind::Other,
            sample_type: SampleType::Float64,
        }
    }

    pub fn with_band(mut self, band: BandKind) -> Self {
        self.band_kind = band;
        self
    }

    pub fn with_sample_type(mut self, t: SampleType) -> Self {
        self.sample_type = t;
        self
    }

    pub fn with_crs(mut self, crs: CrsTag) -> Self {
        self.crs = crs;
        self
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        if self.width == 0 || self.height == 0 {
            return Err(RasterError::Invalid(format!(
                "dimensions must be >= 1, got {}x{}",
                self.width, self.height
            )));
        }
        if self.samples.len() != self.width * self.height {
            return Err(RasterError::Invalid(format!(
                "{} samples for a {}x{} grid",
                self.samples.len(),
                self.width,
                self.height
            )));
        }
        if let Some(nd) = self.nodata {
            if !nd.is_finite() {
                return Err(RasterError::Invalid("nodata sentinel must be finite".into()));
            }
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::Invalid(format!(
                "non-finite sample at index {i} (row {}, col {})",
                i / self.width,
                i % self.width
            )));
        }
        self.transform.validate()?;
        self.crs.validate()?;
        Ok(())
    }

    #[inline]
    pub fn is_nodata(&self, v: f64) -> bool {
        self.nodata == Some(v)
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.samples[row * self.width + col]
    }

    /// `Some(value)` unless the sample is nodata.
    #[inline]
    pub fn value(&self, col: usize, row: usize) -> Option<f64> {
        let v = self.get(col, row);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.samples[row * self.width..(row + 1) * self.width]
    }

    /// Same size, transform and CRS.
    pub fn same_geometry(&self, other: &RasterGrid) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.transform == other.transform
            && self.crs == other.crs
    }

    /// World extent as (min_x, min_y, max_x, max_y).
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let t = &self.transform;
        (
            t.origin_x,
            t.origin_y - self.height as f64 * t.pixel_height,
            t.origin_x + self.width as f64 * t.pixel_width,
            t.origin_y,
        )
    }
}

/// Cuts a `width x height` window starting at `(col0, row0)`.
///
/// The window may hang off the grid; uncovered cells are filled with the
/// grid's nodata sentinel (or `-9999` when the grid declared none).
pub fn extract_window(
    grid: &RasterGrid,
    col0: i64,
    row0: i64,
    width: usize,
    height: usize,
) -> Result<RasterGrid, RasterError> {
    let gw = grid.width as i64;
    let gh = grid.height as i64;
    let empty = width == 0
        || height == 0
        || col0 >= gw
        || row0 >= gh
        || col0 + width as i64 <= 0
        || row0 + height as i64 <= 0;
    if empty {
        return Err(RasterError::EmptyWindow {
            col0,
            row0,
            width,
            height,
            grid_w: grid.width,
            grid_h: grid.height,
        });
    }
    let covers_all =
        col0 >= 0 && row0 >= 0 && col0 + width as i64 <= gw && row0 + height as i64 <= gh;
    let nodata = if covers_all {
        grid.nodata
    } else {
        Some(grid.nodata.unwrap_or(crate::DEFAULT_NODATA))
    };
    let fill = nodata.unwrap_or(0.0);
    let mut samples = vec![fill; width * height];
    for r in 0..height as i64 {
        let src_r = row0 + r;
        if !(0..gh).contains(&src_r) {
            continue;
        }
        let c_lo = col0.max(0);
        let c_hi = (col0 + width as i64).min(gw);
        let src = &grid.row(src_r as usize)[c_lo as usize..c_hi as usize];
        let dst_start = (r * width as i64 + (c_lo - col0)) as usize;
        samples[dst_start..dst_start + src.len()].copy_from_slice(src);
    }
    Ok(RasterGrid {
        width,
        height,
        samples,
        nodata,
        transform: grid.transform.translated(col0, row0),
        crs: grid.crs,
        band_kind: grid.band_kind,
        sample_type: grid.sample_type,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(w: usize, h: usize) -> RasterGrid {
        let gt = GeoTransform::new(1000.0, 5000.0, 30.0, 20.0).unwrap();
        RasterGrid::new(w, h, (0..w * h).map(|v| v as f64).collect(), None, gt, CrsTag::ProjectedMeters)
            .unwrap()
    }

    #[test]
    fn invariants_enforced() {
        let gt = GeoTransform::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(RasterGrid::new(2, 2, vec![0.0; 3], None, gt, CrsTag::Unknown).is_err());
        assert!(RasterGrid::new(0, 2, vec![], None, gt, CrsTag::Unknown).is_err());
        assert!(RasterGrid::new(1, 1, vec![f64::NAN], None, gt, CrsTag::Unknown).is_err());
    }

    #[test]
    fn full_window_is_identity() {
        let g = grid(5, 4);
        assert_eq!(extract_window(&g, 0, 0, 5, 4).unwrap(), g);
    }

    #[test]
    fn single_pixel_window() {
        let g = grid(5, 4);
        let w = extract_window(&g, 3, 2, 1, 1).unwrap();
        assert_eq!(w.samples, vec![g.get(3, 2)]);
        assert_eq!(w.transform.pixel_to_world(0, 0), g.transform.pixel_to_world(3, 2));
    }

    #[test]
    fn overhanging_window_fills_nodata() {
        let g = grid(3, 3);
        let w = extract_window(&g, -1, -1, 3, 3).unwrap();
        assert_eq!(w.nodata, Some(crate::DEFAULT_NODATA));
        assert_eq!(w.get(0, 0), crate::DEFAULT_NODATA);
        assert_eq!(w.get(1, 1), g.get(0, 0));
        assert_eq!(w.get(2, 2), g.get(1, 1));
    }

    #[test]
    fn disjoint_window_errors() {
        let g = grid(3, 3);
        assert!(matches!(extract_window(&g, 3, 0, 2, 2), Err(RasterError::EmptyWindow { .. })));
        assert!(matches!(extract_window(&g, -2, 0, 2, 2), Err(RasterError::EmptyWindow { .. })));
        assert!(extract_window(&g, 0, 0, 0, 2).is_err());
    }

    #[test]
    fn window_preserves_world_coordinates() {
        let g = grid(40, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let c0 = rng.gen_range(-10..40i64);
            let r0 = rng.gen_range(-10..30i64);
            let w = rng.gen_range(1..25usize);
            let h = rng.gen_range(1..25usize);
            let Ok(win) = extract_window(&g, c0, r0, w, h) else {
                continue;
            };
            for r in 0..h as i64 {
                for c in 0..w as i64 {
                    let (x, y) = win.transform.pixel_to_world(c, r);
                    let (x0, y0) = g.transform.pixel_to_world(c0 + c, r0 + r);
                    assert!((x - x0).abs() < 1e-6 && (y - y0).abs() < 1e-6);
                    let (sc, sr) = (c0 + c, r0 + r);
                    if (0..40).contains(&sc) && (0..30).contains(&sr) {
                        assert_eq!(win.get(c as usize, r as usize), g.get(sc as usize, sr as usize));
                    }
                }
            }
        }
    }
}
