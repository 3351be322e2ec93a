//! Urban green index engine: NDVI from RED/NIR rasters, maximum-value
//! compositing, threshold classification, and per-city zonal statistics.
//!
//! ```no_run
//! use greenzonal_core::{ndvi, raster, vector, zonal};
//!
//! let red = raster::read_ascii_grid(&std::fs::read("red.asc")?)?;
//! let nir = raster::read_ascii_grid(&std::fs::read("nir.asc")?)?;
//! let index = ndvi::ndvi(&red, &nir)?;
//! let zones = vector::parse_zones(&std::fs::read("zones.geojson")?)?;
//! let result = zonal::zonal_vegetation(&index, &zones[0], 0.4)?;
//! println!("{}: {:.1}% vegetation", result.zone_id, result.veg_pct);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod exec;
pub mod geo;
pub mod ndvi;
pub mod raster;
pub mod tables;
pub mod vector;
pub mod zonal;

/// Sentinel used whenever an output needs nodata and no input supplied one.
pub const DEFAULT_NODATA: f64 = -9999.0;

pub use geo::{CrsTag, GeoTransform};
pub use raster::{BandKind, RasterError, RasterGrid, SampleType};
pub use vector::{Bbox, Zone};
pub use zonal::{Sensor, ThresholdRecord, ZonalResult};
