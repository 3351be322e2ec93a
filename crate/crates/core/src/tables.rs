//! Published per-city threshold and results tables, and the arithmetic
//! checks run against them.

use crate::zonal::{round_pct, ResultRow, Sensor, ThresholdRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TABLE2_CSV: &str = include_str!("../fixtures/table2.csv");
pub const TABLE3_CSV: &str = include_str!("../fixtures/table3.csv");

/// Number of county-seat cities in both tables.
pub const CITY_COUNT: usize = 41;

/// Tolerance, in percentage points, between a recomputed and a printed percent.
pub const PCT_TOLERANCE: i64 = 1;

/// Inter-sensor gaps at or above this many points are flagged for review.
pub const SENSOR_GAP_FLAG: i64 = 20;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("malformed fixture: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub residence: String,
    pub modis: f64,
    pub sentinel2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub name: String,
    pub total_km2: f64,
    pub modis_pct: i64,
    pub sentinel2_pct: i64,
    pub modis_km2: f64,
    pub sentinel2_km2: f64,
}

impl Table3Row {
    pub fn pct(&self, s: Sensor) -> i64 {
        match s {
            Sensor::Modis => self.modis_pct,
            Sensor::Sentinel2 => self.sentinel2_pct,
        }
    }

    pub fn km2(&self, s: Sensor) -> f64 {
        match s {
            Sensor::Modis => self.modis_km2,
            Sensor::Sentinel2 => self.sentinel2_km2,
        }
    }
}

/// Stable lowercase ASCII token for a city name ("Reșița" → "resita").
pub fn slugify(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for ch in name.chars() {
        let c = match ch {
            'ă' | 'â' | 'Ă' | 'Â' => 'a',
            'î' | 'Î' => 'i',
            'ș' | 'ş' | 'Ș' | 'Ş' => 's',
            'ț' | 'ţ' | 'Ț' | 'Ţ' => 't',
            c if c.is_ascii_alphanumeric() => c.to_ascii_lowercase(),
            _ => '-',
        };
        if c == '-' && (out.is_empty() || out.ends_with('-')) {
            continue;
        }
        out.push(c);
    }
    out.trim_end_matches('-').to_string()
}

fn load<T: for<'de> Deserialize<'de>>(text: &[u8], what: &str) -> Result<Vec<T>, TableError> {
    let rows: Vec<T> = csv::Reader::from_reader(text).deserialize().collect::<Result<_, _>>()?;
    if rows.len() != CITY_COUNT {
        return Err(TableError::Malformed(format!(
            "{what}: expected {CITY_COUNT} rows, found {}",
            rows.len()
        )));
    }
    Ok(rows)
}

pub fn load_table2(text: &[u8]) -> Result<Vec<Table2Row>, TableError> {
    let rows: Vec<Table2Row> = load(text, "table2.csv")?;
    for r in &rows {
        for v in [r.modis, r.sentinel2] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(TableError::Malformed(format!("{}: threshold {v} outside [-1, 1]", r.residence)));
            }
        }
    }
    Ok(rows)
}

pub fn load_table3(text: &[u8]) -> Result<Vec<Table3Row>, TableError> {
    let rows: Vec<Table3Row> = load(text, "table3.csv")?;
    if let Some(r) = rows.iter().find(|r| r.total_km2.is_nan() || r.total_km2 <= 0.0) {
        return Err(TableError::Malformed(format!("{}: total area must be > 0", r.name)));
    }
    Ok(rows)
}

/// The thresholds table (`table2.csv`) as threshold records keyed by slugged city name.
pub fn table2_records(rows: &[Table2Row]) -> Vec<ThresholdRecord> {
    rows.iter()
        .flat_map(|r| {
            let id = slugify(&r.residence);
            [
                ThresholdRecord {
                    zone_id: id.clone(),
                    sensor: Sensor::Modis,
                    threshold: r.modis,
                },
                ThresholdRecord {
                    zone_id: id,
                    sensor: Sensor::Sentinel2,
                    threshold: r.sentinel2,
                },
            ]
        })
        .collect()
}

/// The surfaces table (`table3.csv`) as result rows (one per city and sensor), thresholds from `table2.csv`
/// where the city matches, NaN otherwise.
pub fn table3_results(t3: &[Table3Row], t2: &[Table2Row]) -> Vec<ResultRow> {
    let thresholds = crate::zonal::ThresholdTable::from_records(table2_records(t2));
    let known: std::collections::HashSet<String> = t2.iter().map(|r| slugify(&r.residence)).collect();
    t3.iter()
        .flat_map(|r| {
            let id = slugify(&r.name);
            let thresholds = &thresholds;
            let known = &known;
            Sensor::ALL.into_iter().map(move |s| ResultRow {
                zone_id: id.clone(),
                name: r.name.clone(),
                sensor: s,
                threshold: if known.contains(&id) { thresholds.resolve(&id, s) } else { f64::NAN },
                total_km2: r.total_km2,
                veg_km2: r.km2(s),
                veg_pct: r.pct(s) as f64,
                nodata_pct: 0.0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCheck {
    pub sensor: Sensor,
    pub mean: f64,
    pub published: f64,
    /// Accepted interval for the recomputed mean.
    pub range: (f64, f64),
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowCheck {
    pub name: String,
    pub sensor: Sensor,
    pub printed_pct: i64,
    pub recomputed_pct: f64,
    pub rounded_pct: i64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorGap {
    pub name: String,
    pub modis_pct: i64,
    pub sentinel2_pct: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub means: Vec<MeanCheck>,
    pub rows: Vec<RowCheck>,
    /// Informational only; no row fails because of a gap.
    pub sensor_gaps: Vec<SensorGap>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.means.iter().all(|m| m.pass) && self.rows.iter().all(|r| r.pass)
    }

    pub fn rows_passed(&self) -> usize {
        self.rows.iter().filter(|r| r.pass).count()
    }

    /// Cities whose rows pass for both sensors.
    pub fn cities_passed(&self) -> usize {
        let mut names: Vec<&str> = self.rows.iter().map(|r| r.name.as_str()).collect();
        names.dedup();
        names
            .iter()
            .filter(|n| self.rows.iter().filter(|r| r.name == **n).all(|r| r.pass))
            .count()
    }
}

/// Recomputes the threshold means and every printed percent from its km².
pub fn validate_paper_tables(t2: &[Table2Row], t3: &[Table3Row]) -> ValidationReport {
    let mean = |f: fn(&Table2Row) -> f64| t2.iter().map(f).sum::<f64>() / t2.len() as f64;
    let check = |sensor, m: f64, published: f64, range: (f64, f64)| MeanCheck {
        sensor,
        mean: m,
        published,
        range,
        pass: (range.0..=range.1).contains(&m) && ((m * 100.0).round() / 100.0 - published).abs() < 1e-12,
    };
    let means = vec![
        check(Sensor::Modis, mean(|r| r.modis), 0.58, (0.575, 0.585)),
        check(Sensor::Sentinel2, mean(|r| r.sentinel2), 0.40, (0.39, 0.405)),
    ];

    let mut rows = Vec::with_capacity(t3.len() * 2);
    let mut sensor_gaps = Vec::new();
    for r in t3 {
        for s in Sensor::ALL {
            let recomputed = 100.0 * r.km2(s) / r.total_km2;
            let rounded = round_pct(recomputed);
            rows.push(RowCheck {
                name: r.name.clone(),
                sensor: s,
                printed_pct: r.pct(s),
                recomputed_pct: recomputed,
                rounded_pct: rounded,
                pass: (rounded - r.pct(s)).abs() <= PCT_TOLERANCE,
            });
        }
        if (r.modis_pct - r.sentinel2_pct).abs() >= SENSOR_GAP_FLAG {
            sensor_gaps.push(SensorGap {
                name: r.name.clone(),
                modis_pct: r.modis_pct,
                sentinel2_pct: r.sentinel2_pct,
            });
        }
    }
    ValidationReport {
        means,
        rows,
        sensor_gaps,
    }
}
