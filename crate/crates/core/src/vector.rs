//! City boundary polygons: GeoJSON ingest, bounds, and the point-in-zone
//! predicate used to clip rasters.
//!
//! Inside-ness follows the even-odd rule over every ring of every polygon,
//! so ring orientation in the source file never matters. Points within
//! [`EDGE_TOLERANCE`] of any edge count as inside.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::HashSet;
use thiserror::Error;

/// Distance (CRS units) under which a point is considered on an edge.
pub const EDGE_TOLERANCE: f64 = 1e-9;

pub type Point = [f64; 2];
pub type Ring = Vec<Point>;

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("invalid GeoJSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected a FeatureCollection, found {0}")]
    NotFeatureCollection(String),
    #[error("feature {index}: geometry type {kind} is not Polygon or MultiPolygon")]
    NonPolygon { index: usize, kind: String },
    #[error("feature {index}: missing property {key:?}")]
    MissingProperty { index: usize, key: &'static str },
    #[error("feature {index}: {msg}")]
    Geometry { index: usize, msg: String },
    #[error("feature {index}: ring {ring} is degenerate ({distinct} distinct points)")]
    DegenerateRing {
        index: usize,
        ring: usize,
        distinct: usize,
    },
    #[error("duplicate zone id {0:?}")]
    DuplicateId(String),
}

/// One outer ring followed by zero or more holes. Rings are explicitly closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub rings: Vec<Ring>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    pub name: String,
    pub polygons: Vec<Polygon>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bbox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bbox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.min_x..=self.max_x).contains(&x) && (self.min_y..=self.max_y).contains(&y)
    }

    pub fn intersects(&self, other: &Bbox) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }
}

impl Zone {
    /// Builds a zone from raw rings, closing them and checking invariants.
    pub fn new(id: impl Into<String>, name: impl Into<String>, polygons: Vec<Vec<Ring>>) -> Result<Self, VectorError> {
        let mut out = Vec::with_capacity(polygons.len());
        for rings in polygons {
            out.push(build_polygon(0, rings)?);
        }
        if out.is_empty() {
            return Err(VectorError::Geometry {
                index: 0,
                msg: "zone has no polygons".into(),
            });
        }
        Ok(Zone {
            id: id.into(),
            name: name.into(),
            polygons: out,
        })
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        self.polygons.iter().flat_map(|p| p.rings.iter())
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.rings().flat_map(|r| r.windows(2).map(|w| (w[0], w[1])))
    }

    pub fn bbox(&self) -> Bbox {
        zone_bbox(self)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        point_in_zone(self, x, y)
    }

    /// Planar area (CRS units²) with holes subtracted, assuming simple rings.
    pub fn area(&self) -> f64 {
        self.polygons
            .iter()
            .map(|p| {
                let mut rings = p.rings.iter().map(|r| shoelace(r).abs());
                let outer = rings.next().unwrap_or(0.0);
                outer - rings.sum::<f64>()
            })
            .sum()
    }
}

fn shoelace(ring: &[Point]) -> f64 {
    ring.windows(2)
        .map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1])
        .sum::<f64>()
        / 2.0
}

fn build_polygon(index: usize, rings: Vec<Ring>) -> Result<Polygon, VectorError> {
    if rings.is_empty() {
        return Err(VectorError::Geometry {
            index,
            msg: "polygon without rings".into(),
        });
    }
    let mut out = Vec::with_capacity(rings.len());
    for (ri, mut ring) in rings.into_iter().enumerate() {
        if let Some(p) = ring.iter().find(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(VectorError::Geometry {
                index,
                msg: format!("non-finite coordinate {p:?} in ring {ri}"),
            });
        }
        let mut distinct: Vec<Point> = Vec::new();
        for p in &ring {
            if !distinct.contains(p) {
                distinct.push(*p);
            }
        }
        if distinct.len() < 3 {
            return Err(VectorError::DegenerateRing {
                index,
                ring: ri,
                distinct: distinct.len(),
            });
        }
        if ring.first() != ring.last() {
            log::warn!("feature {index}: ring {ri} not closed; appending the first point");
            ring.push(ring[0]);
        }
        out.push(ring);
    }
    Ok(Polygon { rings: out })
}

/// Parses a GeoJSON FeatureCollection of Polygon/MultiPolygon features.
///
/// Each feature needs `id` and `name` properties. Coordinates must already be
/// in the raster CRS.
pub fn parse_zones(text: &[u8]) -> Result<Vec<Zone>, VectorError> {
    let doc: Value = serde_json::from_slice(text)?;
    let kind = doc.get("type").and_then(Value::as_str).unwrap_or("<none>");
    if kind != "FeatureCollection" {
        return Err(VectorError::NotFeatureCollection(kind.to_string()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| VectorError::NotFeatureCollection("FeatureCollection without features".into()))?;

    let mut seen = HashSet::new();
    let mut zones = Vec::with_capacity(features.len());
    for (index, f) in features.iter().enumerate() {
        let props = f.get("properties");
        let prop = |key: &'static str| -> Result<String, VectorError> {
            match props.and_then(|p| p.get(key)) {
                Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
                Some(Value::Number(n)) => Ok(n.to_string()),
                _ => Err(VectorError::MissingProperty { index, key }),
            }
        };
        let id = prop("id")?;
        let name = prop("name")?;

        let geom = f.get("geometry").ok_or_else(|| VectorError::Geometry {
            index,
            msg: "missing geometry".into(),
        })?;
        let gkind = geom.get("type").and_then(Value::as_str).unwrap_or("<none>");
        let coords = geom.get("coordinates").ok_or_else(|| VectorError::Geometry {
            index,
            msg: "geometry without coordinates".into(),
        })?;
        let raw: Vec<Vec<Ring>> = match gkind {
            "Polygon" => vec![polygon_coords(index, coords)?],
            "MultiPolygon" => coords
                .as_array()
                .ok_or_else(|| bad(index, "MultiPolygon coordinates must be an array"))?
                .iter()
                .map(|p| polygon_coords(index, p))
                .collect::<Result<_, _>>()?,
            other => {
                return Err(VectorError::NonPolygon {
                    index,
                    kind: other.to_string(),
                })
            }
        };
        if raw.is_empty() {
            return Err(bad(index, "MultiPolygon without parts"));
        }
        let polygons = raw
            .into_iter()
            .map(|rings| build_polygon(index, rings))
            .collect::<Result<Vec<_>, _>>()?;

        if !seen.insert(id.clone()) {
            return Err(VectorError::DuplicateId(id));
        }
        zones.push(Zone { id, name, polygons });
    }
    Ok(zones)
}

fn bad(index: usize, msg: &str) -> VectorError {
    VectorError::Geometry {
        index,
        msg: msg.to_string(),
    }
}

fn polygon_coords(index: usize, v: &Value) -> Result<Vec<Ring>, VectorError> {
    let rings = v.as_array().ok_or_else(|| bad(index, "polygon coordinates must be an array of rings"))?;
    rings
        .iter()
        .map(|ring| {
            ring.as_array()
                .ok_or_else(|| bad(index, "ring must be an array of positions"))?
                .iter()
                .map(|pos| {
                    let p = pos.as_array().ok_or_else(|| bad(index, "position must be an array"))?;
                    match (p.first().and_then(Value::as_f64), p.get(1).and_then(Value::as_f64)) {
                        (Some(x), Some(y)) => Ok([x, y]),
                        _ => Err(bad(index, "position needs two numbers")),
                    }
                })
                .collect()
        })
        .collect()
}

/// Serializes zones back to a GeoJSON FeatureCollection.
pub fn zones_to_geojson(zones: &[Zone]) -> Value {
    let features: Vec<Value> = zones
        .iter()
        .map(|z| {
            let polys: Vec<Value> = z
                .polygons
                .iter()
                .map(|p| serde_json::to_value(&p.rings).expect("finite coordinates"))
                .collect();
            serde_json::json!({
                "type": "Feature",
                "properties": { "id": z.id, "name": z.name },
                "geometry": { "type": "MultiPolygon", "coordinates": polys },
            })
        })
        .collect();
    serde_json::json!({ "type": "FeatureCollection", "features": features })
}

pub fn zone_bbox(zone: &Zone) -> Bbox {
    let mut b = Bbox {
        min_x: f64::INFINITY,
        min_y: f64::INFINITY,
        max_x: f64::NEG_INFINITY,
        max_y: f64::NEG_INFINITY,
    };
    for p in zone.rings().flatten() {
        b.min_x = b.min_x.min(p[0]);
        b.min_y = b.min_y.min(p[1]);
        b.max_x = b.max_x.max(p[0]);
        b.max_y = b.max_y.max(p[1]);
    }
    b
}

/// Ray-cast crossing test of edge `a→b` for a ray from `(x, y)` towards +x.
#[inline]
fn crosses(a: Point, b: Point, x: f64, y: f64) -> bool {
    (a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]
}

#[inline]
fn near_edge(a: Point, b: Point, x: f64, y: f64) -> bool {
    const T: f64 = EDGE_TOLERANCE;
    if x < a[0].min(b[0]) - T || x > a[0].max(b[0]) + T || y < a[1].min(b[1]) - T || y > a[1].max(b[1]) + T {
        return false;
    }
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((x - a[0]) * dx + (y - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (px, py) = (a[0] + t * dx - x, a[1] + t * dy - y);
    px * px + py * py <= T * T
}

fn classify_point<'a>(edges: impl Iterator<Item = (Point, Point)> + 'a, x: f64, y: f64) -> bool {
    let mut inside = false;
    for (a, b) in edges {
        if near_edge(a, b, x, y) {
            return true;
        }
        if crosses(a, b, x, y) {
            inside = !inside;
        }
    }
    inside
}

/// Even-odd membership of `(x, y)` in the zone; boundary points are inside.
pub fn point_in_zone(zone: &Zone, x: f64, y: f64) -> bool {
    classify_point(zone.edges(), x, y)
}

/// Zone edges indexed by y-extent for repeated row-wise queries.
///
/// Answers exactly what [`point_in_zone`] answers: per-row pruning only drops
/// edges that can neither cross the row nor lie within tolerance of it.
pub struct PreparedZone {
    edges: Vec<(Point, Point)>,
    /// `(min_y, max_y)` per edge, same order as `edges`.
    spans: Vec<(f64, f64)>,
}

impl PreparedZone {
    pub fn new(zone: &Zone) -> Self {
        let mut edges: Vec<(Point, Point)> = zone.edges().collect();
        edges.sort_by(|e, f| e.0[1].min(e.1[1]).total_cmp(&f.0[1].min(f.1[1])));
        let spans = edges
            .iter()
            .map(|(a, b)| (a[1].min(b[1]), a[1].max(b[1])))
            .collect();
        PreparedZone { edges, spans }
    }

    /// Edges relevant to points on the horizontal line `y`.
    pub fn row_edges(&self, y: f64) -> Vec<(Point, Point)> {
        let margin = 1e-6 + y.abs() * 1e-12;
        let end = self.spans.partition_point(|s| s.0 - margin <= y);
        self.edges[..end]
            .iter()
            .zip(&self.spans[..end])
            .filter(|(_, s)| s.1 + margin >= y)
            .map(|(e, _)| *e)
            .collect()
    }

    pub fn contains_with(row_edges: &[(Point, Point)], x: f64, y: f64) -> bool {
        classify_point(row_edges.iter().copied(), x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, s: f64) -> Ring {
        vec![[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s], [x0, y0]]
    }

    fn fc(features: &str) -> Vec<u8> {
        format!(r#"{{"type":"FeatureCollection","features":[{features}]}}"#).into_bytes()
    }

    #[test]
    fn parses_square_feature() {
        let zones = parse_zones(&fc(
            r#"{"type":"Feature","properties":{"id":"sq","name":"Square"},
               "geometry":{"type":"Polygon","coordinates":[[[0,0],[10,0],[10,10],[0,10],[0,0]]]}}"#,
        ))
        .unwrap();
        assert_eq!(zones.len(), 1);
        assert_eq!(zones[0].polygons.len(), 1);
        assert_eq!(zones[0].polygons[0].rings.len(), 1);
        assert_eq!(zones[0].polygons[0].rings[0].len(), 5);
        assert_eq!(zones[0].area(), 100.0);
    }

    #[test]
    fn multipolygon_and_auto_close() {
        let zones = parse_zones(&fc(
            r#"{"type":"Feature","properties":{"id":"m","name":"Multi","extra":1},"foreign":true,
               "geometry":{"type":"MultiPolygon","coordinates":[
                 [[[0,0],[1,0],[1,1],[0,1]]],
                 [[[5,5],[6,5],[6,6],[5,6],[5,5]]]]}}"#,
        ))
        .unwrap();
        assert_eq!(zones[0].polygons.len(), 2);
        let ring = &zones[0].polygons[0].rings[0];
        assert_eq!(ring.len(), 5);
        assert_eq!(ring.first(), ring.last());
    }

    #[test]
    fn parse_errors() {
        let point = fc(r#"{"type":"Feature","properties":{"id":"p","name":"P"},"geometry":{"type":"Point","coordinates":[0,0]}}"#);
        assert!(matches!(parse_zones(&point), Err(VectorError::NonPolygon { .. })));
        let noname = fc(r#"{"type":"Feature","properties":{"id":"p"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}"#);
        assert!(matches!(parse_zones(&noname), Err(VectorError::MissingProperty { key: "name", .. })));
        let degenerate = fc(r#"{"type":"Feature","properties":{"id":"p","name":"P"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[0,0]]]}}"#);
        assert!(matches!(parse_zones(&degenerate), Err(VectorError::DegenerateRing { distinct: 2, .. })));
        let f = r#"{"type":"Feature","properties":{"id":"d","name":"D"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}"#;
        let dup = fc(&format!("{f},{f}"));
        assert!(matches!(parse_zones(&dup), Err(VectorError::DuplicateId(_))));
        assert!(matches!(
            parse_zones(br#"{"type":"Feature"}"#),
            Err(VectorError::NotFeatureCollection(_))
        ));
        assert!(matches!(parse_zones(b"{"), Err(VectorError::Json(_))));
    }

    #[test]
    fn geojson_round_trip() {
        let z = Zone::new("a", "A", vec![vec![square(0.0, 0.0, 4.0), square(1.0, 1.0, 1.0)]]).unwrap();
        let text = serde_json::to_vec(&zones_to_geojson(std::slice::from_ref(&z))).unwrap();
        assert_eq!(parse_zones(&text).unwrap(), vec![z]);
    }

    #[test]
    fn point_in_square_and_hole() {
        let unit = Zone::new("u", "U", vec![vec![square(0.0, 0.0, 1.0)]]).unwrap();
        assert!(point_in_zone(&unit, 0.5, 0.5));
        assert!(!point_in_zone(&unit, 1.5, 0.5));
        let holed = Zone::new("h", "H", vec![vec![square(0.0, 0.0, 3.0), square(1.0, 1.0, 1.0)]]).unwrap();
        assert!(!point_in_zone(&holed, 1.5, 1.5));
        assert!(point_in_zone(&holed, 0.5, 1.5));
        assert_eq!(holed.area(), 8.0);
    }

    #[test]
    fn boundary_counts_inside() {
        let unit = Zone::new("u", "U", vec![vec![square(0.0, 0.0, 1.0)]]).unwrap();
        for (x, y) in [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0), (1.0, 1.0), (0.0, 0.0), (1.0 + 5e-10, 0.3)] {
            assert!(point_in_zone(&unit, x, y), "({x},{y})");
        }
        assert!(!point_in_zone(&unit, 1.0 + 1e-8, 0.3));
    }

    #[test]
    fn bbox_examples() {
        let unit = Zone::new("u", "U", vec![vec![square(0.0, 0.0, 1.0)]]).unwrap();
        let b = zone_bbox(&unit);
        assert_eq!((b.min_x, b.min_y, b.max_x, b.max_y), (0.0, 0.0, 1.0, 1.0));
        let moved = Zone::new("u", "U", vec![vec![square(3.0, -2.0, 1.0)]]).unwrap();
        let m = zone_bbox(&moved);
        assert_eq!((m.min_x, m.min_y, m.max_x, m.max_y), (3.0, -2.0, 4.0, -1.0));
    }
}
