//! On-disk store: ingested rasters, zones, thresholds and results.
//!
//! ```text
//! <root>/rasters/<id>.asc      ingested NDVI grids
//! <root>/rasters/index.json    id, sensor and CRS of each grid
//! <root>/zones.geojson
//! <root>/thresholds.json       {"records": [{zone_id, sensor, threshold}]}
//! <root>/results/
//! <root>/products/             fetched products
//! ```
//!
//! Every file is replaced atomically, so readers never see a partial write.

use greenzonal_core::geo::CrsTag;
use greenzonal_core::raster::{read_ascii_grid_with_crs, write_ascii_grid};
use greenzonal_core::vector::{parse_zones, zones_to_geojson};
use greenzonal_core::zonal::ThresholdTable;
use greenzonal_core::{RasterGrid, Sensor, ThresholdRecord, Zone};
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {msg}")]
    Invalid { path: PathBuf, msg: String },
    #[error("raster id {0:?} must be non-empty [A-Za-z0-9._-]")]
    BadId(String),
    #[error("no raster {0:?} in the store")]
    UnknownRaster(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Replaces `path` with `bytes` via a synced temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new().prefix(".tmp-").tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    if let Ok(d) = std::fs::File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.starts_with('.') && id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor: Option<Sensor>,
    /// File name relative to `rasters/`.
    pub file: String,
    pub crs: CrsTag,
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RasterIndex {
    pub rasters: Vec<RasterEntry>,
}

impl RasterIndex {
    pub fn get(&self, id: &str) -> Option<&RasterEntry> {
        self.rasters.iter().find(|r| r.id == id)
    }
}

/// `thresholds.json` as stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdsDoc {
    pub records: Vec<ThresholdRecord>,
}

impl ThresholdsDoc {
    pub fn from_table(t: &ThresholdTable) -> Self {
        ThresholdsDoc { records: t.records() }
    }

    pub fn to_table(&self) -> ThresholdTable {
        ThresholdTable::from_records(self.records.iter().cloned())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes") + "\n"
    }
}

/// Sensor implied by a grid when none is recorded: MODIS for pixels of
/// 100 m or more, Sentinel-2 below.
pub fn infer_sensor(grid: &RasterGrid) -> Sensor {
    if grid.transform.pixel_width >= 100.0 {
        Sensor::Modis
    } else {
        Sensor::Sentinel2
    }
}

#[derive(Debug, Clone)]
pub struct StoreLayout {
    pub root: PathBuf,
}

impl StoreLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        StoreLayout { root: root.into() }
    }

    pub fn rasters_dir(&self) -> PathBuf {
        self.root.join("rasters")
    }

    pub fn index_path(&self) -> PathBuf {
        self.rasters_dir().join("index.json")
    }

    pub fn zones_path(&self) -> PathBuf {
        self.root.join("zones.geojson")
    }

    pub fn thresholds_path(&self) -> PathBuf {
        self.root.join("thresholds.json")
    }

    pub fn results_dir(&self) -> PathBuf {
        self.root.join("results")
    }

    pub fn init(&self) -> Result<(), StoreError> {
        for d in [self.rasters_dir(), self.results_dir()] {
            std::fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        Ok(())
    }

    pub fn load_index(&self) -> Result<RasterIndex, StoreError> {
        let path = self.index_path();
        match std::fs::read(&path) {
            Ok(b) => serde_json::from_slice(&b).map_err(|e| StoreError::Invalid { path, msg: e.to_string() }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(RasterIndex::default()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn save_index(&self, index: &RasterIndex) -> Result<(), StoreError> {
        let path = self.index_path();
        let text = serde_json::to_string_pretty(index).expect("plain data serializes") + "\n";
        write_atomic(&path, text.as_bytes()).map_err(io_err(&path))
    }

    /// Stores `grid` under `id`, replacing any raster with the same id.
    pub fn put_raster(&self, id: &str, sensor: Option<Sensor>, grid: &RasterGrid) -> Result<RasterEntry, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::BadId(id.to_string()));
        }
        self.init()?;
        let file = format!("{id}.asc");
        let path = self.rasters_dir().join(&file);
        let text = write_ascii_grid(grid).map_err(|e| StoreError::Invalid {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        write_atomic(&path, &text).map_err(io_err(&path))?;
        let entry = RasterEntry {
            id: id.to_string(),
            sensor,
            file,
            crs: grid.crs,
            width: grid.width,
            height: grid.height,
            pixel_size: grid.transform.pixel_width,
        };
        let mut index = self.load_index()?;
        index.rasters.retain(|r| r.id != id);
        index.rasters.push(entry.clone());
        index.rasters.sort_by(|a, b| a.id.cmp(&b.id));
        self.save_index(&index)?;
        Ok(entry)
    }

    pub fn load_raster(&self, entry: &RasterEntry) -> Result<RasterGrid, StoreError> {
        let path = self.rasters_dir().join(&entry.file);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        read_ascii_grid_with_crs(&bytes, entry.crs).map_err(|e| StoreError::Invalid { path, msg: e.to_string() })
    }

    pub fn raster(&self, id: &str) -> Result<(RasterEntry, RasterGrid), StoreError> {
        let index = self.load_index()?;
        let entry = index.get(id).ok_or_else(|| StoreError::UnknownRaster(id.to_string()))?.clone();
        let grid = self.load_raster(&entry)?;
        Ok((entry, grid))
    }

    /// Zones in the store; an absent file means no zones.
    pub fn load_zones(&self) -> Result<Vec<Zone>, StoreError> {
        let path = self.zones_path();
        match std::fs::read(&path) {
            Ok(b) => parse_zones(&b).map_err(|e| StoreError::Invalid { path, msg: e.to_string() }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn put_zones(&self, zones: &[Zone]) -> Result<(), StoreError> {
        self.init()?;
        let path = self.zones_path();
        let text = serde_json::to_string_pretty(&zones_to_geojson(zones)).expect("plain data serializes") + "\n";
        write_atomic(&path, text.as_bytes()).map_err(io_err(&path))
    }

    pub fn load_thresholds(&self) -> Result<ThresholdsDoc, StoreError> {
        load_thresholds_file(&self.thresholds_path())
    }

    pub fn save_thresholds(&self, doc: &ThresholdsDoc) -> Result<(), StoreError> {
        std::fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        let path = self.thresholds_path();
        write_atomic(&path, doc.to_json().as_bytes()).map_err(io_err(&path))
    }
}

/// Reads a thresholds document; an absent file is an empty document.
pub fn load_thresholds_file(path: &Path) -> Result<ThresholdsDoc, StoreError> {
    match std::fs::read(path) {
        Ok(b) => serde_json::from_slice(&b).map_err(|e| StoreError::Invalid {
            path: path.to_path_buf(),
            msg: e.to_string(),
        }),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(ThresholdsDoc::default()),
        Err(e) => Err(io_err(path)(e)),
    }
}
