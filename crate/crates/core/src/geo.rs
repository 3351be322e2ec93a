//! Pixel/world bookkeeping for axis-aligned grids and the spherical
//! sinusoidal projection used by the MODIS land tiles.
//!
//! Pixel coordinates refer to pixel *centers*: column `c` covers world x in
//! `[origin_x + c·w, origin_x + (c+1)·w)` and its center sits at `+0.5·w`.
//! Rows run downward from `origin_y`.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

/// Sphere radius of the MODIS sinusoidal grid, in meters.
pub const MODIS_SPHERE_RADIUS: f64 = 6_371_007.181;

/// Nominal MODIS 250 m product pixel size.
pub const MODIS_NOMINAL_PIXEL: f64 = 250.0;

/// True pixel size of the MODIS 250 m sinusoidal grid (4800 pixels per 10° tile).
pub const MODIS_GRID_PIXEL: f64 = 231.656_358_263_958_3;

/// Sentinel-2 10 m band pixel size.
pub const SENTINEL2_PIXEL: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid geotransform: {0}")]
    InvalidTransform(String),
    #[error("area undefined in degrees")]
    AreaInDegrees,
    #[error("coordinate out of domain: {0}")]
    Domain(String),
    #[error("longitude undefined at pole")]
    Pole,
}

/// Axis-aligned affine mapping between pixel indices and CRS coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_width: f64,
    pub pixel_height: f64,
}

impl GeoTransform {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        pixel_width: f64,
        pixel_height: f64,
    ) -> Result<Self, GeoError> {
        let gt = GeoTransform {
            origin_x,
            origin_y,
            pixel_width,
            pixel_height,
        };
        gt.validate()?;
        Ok(gt)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(GeoError::InvalidTransform("origin is not finite".into()));
        }
        for (name, v) in [("pixel_width", self.pixel_width), ("pixel_height", self.pixel_height)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GeoError::InvalidTransform(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// World coordinate of the center of pixel `(col, row)`.
    #[inline]
    pub fn pixel_to_world(&self, col: i64, row: i64) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_width,
            self.origin_y - (row as f64 + 0.5) * self.pixel_height,
        )
    }

    /// Pixel containing world point `(x, y)`. May fall outside any particular grid.
    #[inline]
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin_x) / self.pixel_width).floor() as i64,
            ((self.origin_y - y) / self.pixel_height).floor() as i64,
        )
    }

    /// The transform whose pixel (0,0) is this transform's pixel `(col, row)`.
    pub fn translated(&self, col: i64, row: i64) -> GeoTransform {
        GeoTransform {
            origin_x: self.origin_x + col as f64 * self.pixel_width,
            origin_y: self.origin_y - row as f64 * self.pixel_height,
            ..*self
        }
    }

    pub fn is_square(&self) -> bool {
        self.pixel_width == self.pixel_height
    }
}

/// Free-function form of [`GeoTransform::pixel_to_world`].
pub fn pixel_to_world(gt: &GeoTransform, col: i64, row: i64) -> (f64, f64) {
    gt.pixel_to_world(col, row)
}

/// Free-function form of [`GeoTransform::world_to_pixel`].
pub fn world_to_pixel(gt: &GeoTransform, x: f64, y: f64) -> (i64, i64) {
    gt.world_to_pixel(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CrsTag {
    SinusoidalSphere { sphere_radius: f64 },
    ProjectedMeters,
    GeographicDegrees,
    Unknown,
}

impl CrsTag {
    pub fn modis_sinusoidal() -> Self {
        CrsTag::SinusoidalSphere {
            sphere_radius: MODIS_SPHERE_RADIUS,
        }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        match *self {
            CrsTag::SinusoidalSphere { sphere_radius } if !(sphere_radius.is_finite() && sphere_radius > 0.0) => {
                Err(GeoError::Domain(format!("sphere radius must be > 0, got {sphere_radius}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_metric(&self) -> bool {
        matches!(self, CrsTag::SinusoidalSphere { .. } | CrsTag::ProjectedMeters)
    }

    pub fn name(&self) -> &'static str {
        match self {
            CrsTag::SinusoidalSphere { .. } => "SINUSOIDAL_SPHERE",
            CrsTag::ProjectedMeters => "PROJECTED_METERS",
            CrsTag::GeographicDegrees => "GEOGRAPHIC_DEGREES",
            CrsTag::Unknown => "UNKNOWN",
        }
    }
}

/// Area of one pixel in km².
///
/// Defined for metric CRSs. An `UNKNOWN` CRS is assumed to be metric since
/// the area quantum is needed for every report; degrees are refused.
pub fn pixel_area_km2(gt: &GeoTransform, crs: &CrsTag) -> Result<f64, GeoError> {
    match crs {
        CrsTag::GeographicDegrees => Err(GeoError::AreaInDegrees),
        _ => Ok(gt.pixel_width * gt.pixel_height / 1e6),
    }
}

/// Spherical sinusoidal projection, degrees in, meters out.
pub fn sinusoidal_forward(lon: f64, lat: f64, radius: f64) -> Result<(f64, f64), GeoError> {
    check_radius(radius)?;
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(GeoError::Domain(format!("lon {lon}, lat {lat}")));
    }
    let phi = lat.to_radians();
    Ok((radius * lon.to_radians() * phi.cos(), radius * phi))
}

/// Inverse of [`sinusoidal_forward`].
pub fn sinusoidal_inverse(x: f64, y: f64, radius: f64) -> Result<(f64, f64), GeoError> {
    check_radius(radius)?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(GeoError::Domain(format!("x {x}, y {y}")));
    }
    let phi = y / radius;
    if phi.abs() > FRAC_PI_2 {
        return Err(GeoError::Domain(format!("|y| exceeds radius·π/2: {y}")));
    }
    let lat = phi.to_degrees();
    if lat.abs() == 90.0 {
        return Err(GeoError::Pole);
    }
    let mut lon = (x / (radius * phi.cos())).to_degrees();
    // absorb rounding at the antimeridian
    if lon.abs() > 180.0 && lon.abs() - 180.0 < 1e-9 {
        lon = 180.0_f64.copysign(lon);
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(GeoError::Domain(format!("longitude {lon} outside [-180, 180]")));
    }
    Ok((lon, lat))
}

fn check_radius(radius: f64) -> Result<(), GeoError> {
    if radius.is_finite() && radius > 0.0 {
        Ok(())
    } else {
        Err(GeoError::Domain(format!("radius must be > 0, got {radius}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pixel_center_examples() {
        let gt = GeoTransform::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(gt.pixel_to_world(0, 0), (0.5, -0.5));
        let gt = GeoTransform::new(100.0, 200.0, 250.0, 250.0).unwrap();
        assert_eq!(gt.pixel_to_world(2, 1), (725.0, -175.0));
    }

    #[test]
    fn world_to_pixel_floors() {
        let gt = GeoTransform::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(gt.world_to_pixel(0.5, -0.5), (0, 0));
        assert_eq!(gt.world_to_pixel(0.9999, -0.0001), (0, 0));
        assert_eq!(gt.world_to_pixel(-0.1, 0.1), (-1, -1));
    }

    #[test]
    fn pixel_round_trip_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let gt = GeoTransform::new(
                rng.gen_range(-2e7..2e7),
                rng.gen_range(-1e7..1e7),
                rng.gen_range(0.01..1000.0),
                rng.gen_range(0.01..1000.0),
            )
            .unwrap();
            let (c, r) = (rng.gen_range(0..100_000i64), rng.gen_range(0..100_000i64));
            let (x, y) = gt.pixel_to_world(c, r);
            assert_eq!(gt.world_to_pixel(x, y), (c, r));
        }
    }

    #[test]
    fn invalid_transforms_rejected() {
        assert!(GeoTransform::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(GeoTransform::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(GeoTransform::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn pixel_area() {
        let m = CrsTag::ProjectedMeters;
        let a = pixel_area_km2(&GeoTransform::new(0.0, 0.0, 250.0, 250.0).unwrap(), &m).unwrap();
        assert_eq!(a, 0.0625);
        let a = pixel_area_km2(&GeoTransform::new(0.0, 0.0, 10.0, 10.0).unwrap(), &m).unwrap();
        assert_eq!(a, 0.0001);
        let gt = GeoTransform::new(0.0, 0.0, 231.656, 231.656).unwrap();
        let a = pixel_area_km2(&gt, &CrsTag::modis_sinusoidal()).unwrap();
        assert_eq!(a, 231.656 * 231.656 / 1e6);
        assert!((a - 0.053_664_5).abs() < 1e-7);
        assert_eq!(
            pixel_area_km2(&gt, &CrsTag::GeographicDegrees),
            Err(GeoError::AreaInDegrees)
        );
        let moved = GeoTransform { origin_x: 5e5, origin_y: -3e6, ..gt };
        assert_eq!(pixel_area_km2(&moved, &CrsTag::ProjectedMeters).unwrap(), a);
    }

    #[test]
    fn sinusoidal_examples() {
        let r = MODIS_SPHERE_RADIUS;
        assert_eq!(sinusoidal_forward(0.0, 0.0, r).unwrap(), (0.0, 0.0));
        for lon in [-180.0, -10.0, 0.0, 77.0, 180.0] {
            let (x, y) = sinusoidal_forward(lon, 90.0, r).unwrap();
            assert!(x.abs() < 1e-6);
            assert_eq!(y, r * FRAC_PI_2);
        }
        // independent evaluation: hand-expanded radians
        let (x, y) = sinusoidal_forward(25.0, 45.0, r).unwrap();
        let lon_rad = 25.0 * std::f64::consts::PI / 180.0;
        let lat_rad = 45.0 * std::f64::consts::PI / 180.0;
        assert!((x - r * lon_rad * std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!((y - r * lat_rad).abs() < 1e-6);
        assert_eq!(sinusoidal_inverse(0.0, 0.0, r).unwrap(), (0.0, 0.0));
        let (_, lat) = sinusoidal_inverse(0.0, r * std::f64::consts::FRAC_PI_4, r).unwrap();
        assert!((lat - 45.0).abs() < 1e-12);
    }

    #[test]
    fn sinusoidal_errors() {
        let r = MODIS_SPHERE_RADIUS;
        assert!(matches!(sinusoidal_forward(0.0, 90.1, r), Err(GeoError::Domain(_))));
        assert!(matches!(sinusoidal_forward(181.0, 0.0, r), Err(GeoError::Domain(_))));
        assert_eq!(sinusoidal_inverse(0.0, r * FRAC_PI_2, r), Err(GeoError::Pole));
        assert!(matches!(sinusoidal_inverse(0.0, r * 1.6, r), Err(GeoError::Domain(_))));
        // x beyond the ±180° edge at this latitude
        assert!(matches!(sinusoidal_inverse(2.1e7, 0.0, r), Err(GeoError::Domain(_))));
        assert!(sinusoidal_forward(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn sinusoidal_round_trip() {
        let r = MODIS_SPHERE_RADIUS;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let lon = rng.gen_range(-180.0..=180.0);
            let lat = rng.gen_range(-89.9..=89.9);
            let (x, y) = sinusoidal_forward(lon, lat, r).unwrap();
            let (lon2, lat2) = sinusoidal_inverse(x, y, r).unwrap();
            assert!((lon - lon2).abs() < 1e-9 && (lat - lat2).abs() < 1e-9);
            let (x2, y2) = sinusoidal_forward(lon2, lat2, r).unwrap();
            assert!((x - x2).abs() < 1e-6 && (y - y2).abs() < 1e-6);
        }
    }
}
