//! Zone rasterization, vegetation accounting, multi-city reports and
//! rankings.

use crate::exec;
use crate::geo::{self, GeoError};
use crate::ndvi::{self, NdviError};
use crate::raster::RasterGrid;
use crate::vector::{PreparedZone, Zone};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZonalError {
    #[error("zone outside raster: {0}")]
    ZoneOutside(String),
    #[error("zone {0} covers no pixel centers")]
    NoPixels(String),
    #[error(transparent)]
    Ndvi(#[from] NdviError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("invalid results table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sensor {
    #[serde(rename = "MODIS")]
    Modis,
    #[serde(rename = "SENTINEL2")]
    Sentinel2,
}

impl Sensor {
    pub const ALL: [Sensor; 2] = [Sensor::Modis, Sensor::Sentinel2];

    pub fn as_str(self) -> &'static str {
        match self {
            Sensor::Modis => "MODIS",
            Sensor::Sentinel2 => "SENTINEL2",
        }
    }

    /// Default threshold: the mean of the per-city calibrated values.
    pub fn default_threshold(self) -> f64 {
        match self {
            Sensor::Modis => 0.58,
            Sensor::Sentinel2 => 0.40,
        }
    }

    /// Calibration sweep window for this sensor.
    pub fn sweep_range(self) -> (f64, f64) {
        match self {
            Sensor::Modis => (0.5, 0.7),
            Sensor::Sentinel2 => (0.3, 0.6),
        }
    }
}

impl fmt::Display for Sensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Sensor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace(['-', '_'], "").as_str() {
            "MODIS" => Ok(Sensor::Modis),
            "SENTINEL2" | "S2" => Ok(Sensor::Sentinel2),
            _ => Err(format!("unknown sensor {s:?} (expected MODIS or SENTINEL2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub zone_id: String,
    pub sensor: Sensor,
    pub threshold: f64,
}

/// Per-(zone, sensor) thresholds with per-sensor fallbacks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThresholdTable {
    records: BTreeMap<(String, Sensor), f64>,
    defaults: BTreeMap<Sensor, f64>,
}

impl ThresholdTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a table; a second record for the same (zone, sensor) replaces the first.
    pub fn from_records(records: impl IntoIterator<Item = ThresholdRecord>) -> Self {
        let mut t = Self::new();
        for r in records {
            t.insert(r);
        }
        t
    }

    pub fn insert(&mut self, r: ThresholdRecord) {
        self.records.insert((r.zone_id, r.sensor), r.threshold);
    }

    pub fn set_default(&mut self, sensor: Sensor, threshold: f64) {
        self.defaults.insert(sensor, threshold);
    }

    pub fn resolve(&self, zone_id: &str, sensor: Sensor) -> f64 {
        self.records
            .get(&(zone_id.to_string(), sensor))
            .or_else(|| self.defaults.get(&sensor))
            .copied()
            .unwrap_or_else(|| sensor.default_threshold())
    }

    pub fn records(&self) -> Vec<ThresholdRecord> {
        self.records
            .iter()
            .map(|((zone_id, sensor), &threshold)| ThresholdRecord {
                zone_id: zone_id.clone(),
                sensor: *sensor,
                threshold,
            })
            .collect()
    }
}

/// Pixels of a grid window whose centers fall inside a zone.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneMask {
    /// `(col0, row0, width, height)` in parent-grid pixels.
    pub window: (usize, usize, usize, usize),
    /// Row-major, `width * height` flags.
    pub inside: Vec<bool>,
}

impl ZoneMask {
    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Whether parent-grid pixel `(col, row)` is flagged.
    pub fn contains(&self, col: usize, row: usize) -> bool {
        let (c0, r0, w, h) = self.window;
        col >= c0 && row >= r0 && col < c0 + w && row < r0 + h && self.inside[(row - r0) * w + (col - c0)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonalResult {
    pub zone_id: String,
    pub raster_id: String,
    pub threshold: f64,
    pub pixels_total: u64,
    pub pixels_veg: u64,
    pub pixels_nodata: u64,
    pub total_area_km2: f64,
    pub veg_area_km2: f64,
    pub veg_pct: f64,
    pub nodata_pct: f64,
}

impl ZonalResult {
    pub fn with_raster_id(mut self, id: impl Into<String>) -> Self {
        self.raster_id = id.into();
        self
    }

    pub fn pixels_nonveg(&self) -> u64 {
        self.pixels_total - self.pixels_veg - self.pixels_nodata
    }
}

/// Flags every pixel of `grid` whose center satisfies `point_in_zone`.
///
/// Only the zone's bounding window (plus a one-pixel margin) is scanned;
/// centers farther out cannot be inside.
pub fn rasterize_zone(zone: &Zone, grid: &RasterGrid) -> Result<ZoneMask, ZonalError> {
    let bb = zone.bbox();
    let (ex0, ey0, ex1, ey1) = grid.extent();
    let extent = crate::vector::Bbox {
        min_x: ex0,
        min_y: ey0,
        max_x: ex1,
        max_y: ey1,
    };
    if !bb.intersects(&extent) {
        return Err(ZonalError::ZoneOutside(zone.id.clone()));
    }
    let t = &grid.transform;
    let clamp = |v: f64, n: usize| -> usize { v.max(0.0).min(n as f64 - 1.0) as usize };
    let c_lo = clamp(((bb.min_x - t.origin_x) / t.pixel_width - 0.5).floor() - 1.0, grid.width);
    let c_hi = clamp(((bb.max_x - t.origin_x) / t.pixel_width - 0.5).ceil() + 1.0, grid.width);
    let r_lo = clamp(((t.origin_y - bb.max_y) / t.pixel_height - 0.5).floor() - 1.0, grid.height);
    let r_hi = clamp(((t.origin_y - bb.min_y) / t.pixel_height - 0.5).ceil() + 1.0, grid.height);
    let (w, h) = (c_hi - c_lo + 1, r_hi - r_lo + 1);

    let prepared = PreparedZone::new(zone);
    let mut inside = vec![false; w * h];
    exec::for_each_row_mut(&mut inside, w, |r, row| {
        let (_, y) = t.pixel_to_world(c_lo as i64, (r_lo + r) as i64);
        let edges = prepared.row_edges(y);
        if edges.is_empty() {
            return;
        }
        for (c, flag) in row.iter_mut().enumerate() {
            let (x, y) = t.pixel_to_world((c_lo + c) as i64, (r_lo + r) as i64);
            *flag = PreparedZone::contains_with(&edges, x, y);
        }
    });
    Ok(ZoneMask {
        window: (c_lo, r_lo, w, h),
        inside,
    })
}

/// Vegetation accounting for one zone at one threshold.
pub fn zonal_vegetation(ndvi: &RasterGrid, zone: &Zone, threshold: f64) -> Result<ZonalResult, ZonalError> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(NdviError::ThresholdRange(threshold).into());
    }
    let mask = rasterize_zone(zone, ndvi)?;
    zonal_vegetation_masked(ndvi, zone, &mask, threshold)
}

/// [`zonal_vegetation`] with a precomputed mask (reused across sweeps).
pub fn zonal_vegetation_masked(
    ndvi: &RasterGrid,
    zone: &Zone,
    mask: &ZoneMask,
    threshold: f64,
) -> Result<ZonalResult, ZonalError> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(NdviError::ThresholdRange(threshold).into());
    }
    let pixel_area = geo::pixel_area_km2(&ndvi.transform, &ndvi.crs)?;
    let (c0, r0, w, h) = mask.window;
    let (total, veg, nodata) = exec::map_reduce(
        h,
        (0u64, 0u64, 0u64),
        |r| {
            let mut acc = (0, 0, 0);
            let row = ndvi.row(r0 + r);
            for c in 0..w {
                if !mask.inside[r * w + c] {
                    continue;
                }
                acc.0 += 1;
                let v = row[c0 + c];
                if ndvi.is_nodata(v) {
                    acc.2 += 1;
                } else if ndvi::is_vegetation(v, threshold) {
                    acc.1 += 1;
                }
            }
            acc
        },
        |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2),
    );
    if total == 0 {
        return Err(ZonalError::NoPixels(zone.id.clone()));
    }
    Ok(ZonalResult {
        zone_id: zone.id.clone(),
        raster_id: String::new(),
        threshold,
        pixels_total: total,
        pixels_veg: veg,
        pixels_nodata: nodata,
        total_area_km2: total as f64 * pixel_area,
        veg_area_km2: veg as f64 * pixel_area,
        veg_pct: 100.0 * veg as f64 / total as f64,
        nodata_pct: 100.0 * nodata as f64 / total as f64,
    })
}

/// One NDVI raster to report on.
#[derive(Debug, Clone, Copy)]
pub struct SensorRaster<'a> {
    pub sensor: Sensor,
    pub raster_id: &'a str,
    pub grid: &'a RasterGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub zone_id: String,
    pub zone_name: String,
    pub sensor: Sensor,
    pub threshold: f64,
    pub outcome: Result<ZonalResult, ZonalError>,
}

/// One entry per zone × sensor, ordered by zone id then sensor. Zones the
/// rasters do not cover get an error entry; the rest of the report proceeds.
pub fn run_report(rasters: &[SensorRaster], zones: &[Zone], thresholds: &ThresholdTable) -> Vec<ReportEntry> {
    let mut order: Vec<&Zone> = zones.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut sensors: Vec<&SensorRaster> = rasters.iter().collect();
    sensors.sort_by_key(|r| r.sensor);
    let tasks: Vec<(&Zone, &SensorRaster)> = order
        .iter()
        .flat_map(|z| sensors.iter().map(move |r| (*z, *r)))
        .collect();
    exec::map_collect(&tasks, |(zone, raster)| {
        let threshold = thresholds.resolve(&zone.id, raster.sensor);
        ReportEntry {
            zone_id: zone.id.clone(),
            zone_name: zone.name.clone(),
            sensor: raster.sensor,
            threshold,
            outcome: zonal_vegetation(raster.grid, zone, threshold).map(|r| r.with_raster_id(raster.raster_id)),
        }
    })
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub zone_id: String,
    pub name: String,
    pub sensor: Sensor,
    pub threshold: f64,
    pub total_km2: f64,
    pub veg_km2: f64,
    pub veg_pct: f64,
    pub nodata_pct: f64,
}

impl ResultRow {
    pub fn from_result(r: &ZonalResult, name: &str, sensor: Sensor) -> Self {
        ResultRow {
            zone_id: r.zone_id.clone(),
            name: name.to_string(),
            sensor,
            threshold: r.threshold,
            total_km2: r.total_area_km2,
            veg_km2: r.veg_area_km2,
            veg_pct: r.veg_pct,
            nodata_pct: r.nodata_pct,
        }
    }
}

/// Integer percent as printed in the tables: half away from zero.
pub fn round_pct(v: f64) -> i64 {
    v.round() as i64
}

pub const RESULTS_HEADER: &str = "zone_id,name,sensor,threshold,total_km2,veg_km2,veg_pct,nodata_pct";

/// Serializes rows as the results CSV (2-decimal km², integer percents).
pub fn write_results_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.write_record([
            r.zone_id.clone(),
            r.name.clone(),
            r.sensor.to_string(),
            format!("{}", r.threshold),
            format!("{:.2}", r.total_km2),
            format!("{:.2}", r.veg_km2),
            round_pct(r.veg_pct).to_string(),
            round_pct(r.nodata_pct).to_string(),
        ])
        .expect("in-memory csv");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 fields");
    format!("{RESULTS_HEADER}\n{body}")
}

pub fn read_results_csv(text: &[u8]) -> Result<Vec<ResultRow>, ZonalError> {
    let mut rdr = csv::Reader::from_reader(text);
    let headers = rdr.headers().map_err(|e| ZonalError::Table(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != RESULTS_HEADER {
        return Err(ZonalError::Table(format!("unexpected header {:?}", headers)));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e: csv::Error| ZonalError::Table(e.to_string())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankKey {
    Pct,
    Km2,
}

impl std::str::FromStr for RankKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pct" | "veg_pct" => Ok(RankKey::Pct),
            "km2" | "veg_km2" => Ok(RankKey::Km2),
            _ => Err(format!("unknown ranking key {s:?} (expected pct or km2)")),
        }
    }
}

/// Rows for `sensor`, best first; ties go to the lexicographically smaller zone id.
pub fn rank_zones(rows: &[ResultRow], sensor: Sensor, key: RankKey) -> Vec<ResultRow> {
    let mut out: Vec<ResultRow> = rows.iter().filter(|r| r.sensor == sensor).cloned().collect();
    let value = |r: &ResultRow| match key {
        RankKey::Pct => r.veg_pct,
        RankKey::Km2 => r.veg_km2,
    };
    out.sort_by(|a, b| value(b).total_cmp(&value(a)).then_with(|| a.zone_id.cmp(&b.zone_id)));
    out
}
