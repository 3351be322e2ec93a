//! PNG renderings of NDVI windows: a vegetation mask overlay and a preview.

use greenzonal_core::ndvi::is_vegetation;
use greenzonal_core::zonal::{rasterize_zone, ZonalError};
use greenzonal_core::{RasterGrid, Zone};
use std::str::FromStr;
use thiserror::Error;

pub const VEGETATION_RGBA: [u8; 4] = [0, 170, 0, 180];
pub const NODATA_RGBA: [u8; 4] = [128, 128, 128, 120];
pub const CLEAR_RGBA: [u8; 4] = [0, 0, 0, 0];

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("window {0} is not inside the {1}x{2} raster")]
    WindowOutside(Window, usize, usize),
    #[error("threshold {0} outside [-1, 1]")]
    Threshold(f64),
    #[error("window must be c0,r0,w,h with w, h > 0: {0:?}")]
    BadWindow(String),
    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),
}

/// Pixel window `(col0, row0, width, height)` of a raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub col0: usize,
    pub row0: usize,
    pub width: usize,
    pub height: usize,
}

impl Window {
    pub fn full(grid: &RasterGrid) -> Self {
        Window {
            col0: 0,
            row0: 0,
            width: grid.width,
            height: grid.height,
        }
    }

    pub fn check(&self, grid: &RasterGrid) -> Result<(), RenderError> {
        if self.col0 + self.width > grid.width || self.row0 + self.height > grid.height {
            return Err(RenderError::WindowOutside(*self, grid.width, grid.height));
        }
        Ok(())
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.col0, self.row0, self.width, self.height)
    }
}

impl FromStr for Window {
    type Err = RenderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RenderError::BadWindow(s.to_string());
        let v: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        match v[..] {
            [col0, row0, width, height] if width > 0 && height > 0 => Ok(Window {
                col0,
                row0,
                width,
                height,
            }),
            _ => Err(bad()),
        }
    }
}

fn encode_rgba(width: usize, height: usize, rgba: &[u8]) -> Result<Vec<u8>, RenderError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(rgba)?;
        w.finish()?;
    }
    Ok(out)
}

/// RGBA colour of one pixel of the vegetation overlay.
pub fn mask_rgba(grid: &RasterGrid, value: f64, in_zone: bool, threshold: f64) -> [u8; 4] {
    if !in_zone {
        CLEAR_RGBA
    } else if grid.is_nodata(value) {
        NODATA_RGBA
    } else if is_vegetation(value, threshold) {
        VEGETATION_RGBA
    } else {
        CLEAR_RGBA
    }
}

/// Vegetation overlay for `window`: green where NDVI > threshold, gray for
/// nodata, transparent elsewhere and outside `zone`.
pub fn render_mask_png(
    ndvi: &RasterGrid,
    zone: Option<&Zone>,
    threshold: f64,
    window: Window,
) -> Result<Vec<u8>, RenderError> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(RenderError::Threshold(threshold));
    }
    window.check(ndvi)?;
    let mask = match zone.map(|z| rasterize_zone(z, ndvi)) {
        None => None,
        Some(Ok(m)) => Some(Some(m)),
        Some(Err(ZonalError::ZoneOutside(_))) => Some(None),
        Some(Err(e)) => unreachable!("rasterize_zone only fails for zones outside the raster: {e}"),
    };
    let mut rgba = Vec::with_capacity(window.width * window.height * 4);
    for r in window.row0..window.row0 + window.height {
        for c in window.col0..window.col0 + window.width {
            let in_zone = match &mask {
                None => true,
                Some(None) => false,
                Some(Some(m)) => m.contains(c, r),
            };
            rgba.extend_from_slice(&mask_rgba(ndvi, ndvi.get(c, r), in_zone, threshold));
        }
    }
    encode_rgba(window.width, window.height, &rgba)
}

/// NDVI colour ramp: brown for bare ground, pale yellow near 0.3, dark green
/// for dense vegetation.
pub fn ndvi_rgb(v: f64) -> [u8; 3] {
    const STOPS: [(f64, [f64; 3]); 4] = [
        (-1.0, [40.0, 60.0, 140.0]),
        (0.0, [150.0, 110.0, 70.0]),
        (0.3, [235.0, 225.0, 140.0]),
        (0.8, [20.0, 110.0, 30.0]),
    ];
    let v = v.clamp(-1.0, 1.0);
    let i = STOPS.iter().rposition(|s| s.0 <= v).unwrap_or(0).min(STOPS.len() - 2);
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let t = ((v - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
    std::array::from_fn(|k| (a.1[k] + t * (b.1[k] - a.1[k])).round() as u8)
}

/// Opaque NDVI rendering of `window`; nodata is transparent.
pub fn render_preview_png(ndvi: &RasterGrid, window: Window) -> Result<Vec<u8>, RenderError> {
    window.check(ndvi)?;
    let mut rgba = Vec::with_capacity(window.width * window.height * 4);
    for r in window.row0..window.row0 + window.height {
        for c in window.col0..window.col0 + window.width {
            match ndvi.value(c, r) {
                Some(v) => {
                    rgba.extend_from_slice(&ndvi_rgb(v));
                    rgba.push(255);
                }
                None => rgba.extend_from_slice(&CLEAR_RGBA),
            }
        }
    }
    encode_rgba(window.width, window.height, &rgba)
}

#[cfg(test)]
mod tests {
    use super::*;
    use greenzonal_core::geo::{CrsTag, GeoTransform};
    use greenzonal_core::ndvi::{classify, CLASS_NODATA};

    fn decode(png_bytes: &[u8]) -> (u32, u32, Vec<u8>) {
        let dec = png::Decoder::new(std::io::Cursor::new(png_bytes));
        let mut reader = dec.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!(info.color_type, png::ColorType::Rgba);
        assert_eq!(info.bit_depth, png::BitDepth::Eight);
        buf.truncate(info.buffer_size());
        (info.width, info.height, buf)
    }

    fn grid(samples: Vec<f64>, w: usize, h: usize) -> RasterGrid {
        let gt = GeoTransform::new(0.0, h as f64 * 10.0, 10.0, 10.0).unwrap();
        RasterGrid::new(w, h, samples, Some(-9999.0), gt, CrsTag::ProjectedMeters).unwrap()
    }

    #[test]
    fn all_vegetation_window_is_uniform_green() {
        let g = grid(vec![0.9; 12], 4, 3);
        let (w, h, px) = decode(&render_mask_png(&g, None, 0.5, Window::full(&g)).unwrap());
        assert_eq!((w, h), (4, 3));
        assert!(px.chunks(4).all(|p| p == VEGETATION_RGBA));
    }

    #[test]
    fn pixel_classes_match_classify() {
        let samples: Vec<f64> = (0..80)
            .map(|i| if i % 11 == 0 { -9999.0 } else { (i as f64 / 40.0) - 1.0 })
            .collect();
        let g = grid(samples, 10, 8);
        let win = Window {
            col0: 2,
            row0: 1,
            width: 6,
            height: 5,
        };
        let classes = classify(&g, 0.2).unwrap();
        let (w, h, px) = decode(&render_mask_png(&g, None, 0.2, win).unwrap());
        assert_eq!((w as usize, h as usize), (win.width, win.height));
        for r in 0..win.height {
            for c in 0..win.width {
                let p = &px[(r * win.width + c) * 4..][..4];
                let want = match classes.get(win.col0 + c, win.row0 + r) {
                    v if v == CLASS_NODATA => NODATA_RGBA,
                    1.0 => VEGETATION_RGBA,
                    _ => CLEAR_RGBA,
                };
                assert_eq!(p, want);
            }
        }
    }

    #[test]
    fn outside_zone_is_transparent() {
        let g = grid(vec![0.9; 16], 4, 4);
        // covers the left half: pixel centers at x = 5 and 15
        let ring = vec![[0.0, 0.0], [20.0, 0.0], [20.0, 40.0], [0.0, 40.0], [0.0, 0.0]];
        let z = Zone::new("left", "Left", vec![vec![ring]]).unwrap();
        let (_, _, px) = decode(&render_mask_png(&g, Some(&z), 0.5, Window::full(&g)).unwrap());
        for (i, p) in px.chunks(4).enumerate() {
            assert_eq!(p, if i % 4 < 2 { VEGETATION_RGBA } else { CLEAR_RGBA });
        }
    }

    #[test]
    fn window_errors() {
        let g = grid(vec![0.0; 4], 2, 2);
        let win: Window = "1,1,2,1".parse().unwrap();
        assert!(matches!(render_mask_png(&g, None, 0.4, win), Err(RenderError::WindowOutside(..))));
        assert!(render_mask_png(&g, None, 1.4, Window::full(&g)).is_err());
        assert!("1,2,0,3".parse::<Window>().is_err());
        assert!("1,2,3".parse::<Window>().is_err());
    }

    #[test]
    fn preview_has_window_size_and_clear_nodata() {
        let g = grid(vec![0.1, -9999.0, 0.8, -1.0], 2, 2);
        let (w, h, px) = decode(&render_preview_png(&g, Window::full(&g)).unwrap());
        assert_eq!((w, h), (2, 2));
        assert_eq!(&px[4..8], CLEAR_RGBA);
        assert_eq!(px[3], 255);
        assert_eq!(ndvi_rgb(0.8), [20, 110, 30]);
        assert_eq!(ndvi_rgb(1.0), [20, 110, 30]);
        assert_eq!(ndvi_rgb(-1.0), [40, 60, 140]);
    }
}
