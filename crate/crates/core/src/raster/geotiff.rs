//! Constrained GeoTIFF profile.
//!
//! Accepted: classic TIFF (not BigTIFF), either byte order, one image, one
//! sample per pixel, int16/uint16/float32 samples, strips or tiles,
//! compression 1 (none) or 8 (Deflate/zlib). Georeferencing comes from
//! ModelPixelScale (33550) + ModelTiepoint (33922), or an axis-aligned
//! ModelTransformation (34264). GeoKeyDirectory (34735) maps to a
//! [`CrsTag`]; GDAL_NODATA (42113) supplies the nodata sentinel.
//!
//! Anything else is an error naming the tag or offset at fault.

use super::{RasterError, RasterGrid, SampleType};
use crate::geo::{CrsTag, GeoTransform, MODIS_SPHERE_RADIUS};
use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use std::collections::BTreeMap;
use std::io::{Read, Write};

pub mod tags {
    pub const IMAGE_WIDTH: u16 = 256;
    pub const IMAGE_LENGTH: u16 = 257;
    pub const BITS_PER_SAMPLE: u16 = 258;
    pub const COMPRESSION: u16 = 259;
    pub const PHOTOMETRIC: u16 = 262;
    pub const STRIP_OFFSETS: u16 = 273;
    pub const SAMPLES_PER_PIXEL: u16 = 277;
    pub const ROWS_PER_STRIP: u16 = 278;
    pub const STRIP_BYTE_COUNTS: u16 = 279;
    pub const PLANAR_CONFIG: u16 = 284;
    pub const PREDICTOR: u16 = 317;
    pub const TILE_WIDTH: u16 = 322;
    pub const TILE_LENGTH: u16 = 323;
    pub const TILE_OFFSETS: u16 = 324;
    pub const TILE_BYTE_COUNTS: u16 = 325;
    pub const SAMPLE_FORMAT: u16 = 339;
    pub const MODEL_PIXEL_SCALE: u16 = 33550;
    pub const MODEL_TIEPOINT: u16 = 33922;
    pub const MODEL_TRANSFORMATION: u16 = 34264;
    pub const GEO_KEY_DIRECTORY: u16 = 34735;
    pub const GEO_DOUBLE_PARAMS: u16 = 34736;
    pub const GEO_ASCII_PARAMS: u16 = 34737;
    pub const GDAL_NODATA: u16 = 42113;
}

mod keys {
    pub const GT_MODEL_TYPE: u16 = 1024;
    pub const GT_RASTER_TYPE: u16 = 1025;
    pub const GEOG_SEMI_MAJOR_AXIS: u16 = 2057;
    pub const GEOG_SEMI_MINOR_AXIS: u16 = 2058;
    pub const PROJECTED_CS_TYPE: u16 = 3072;
    pub const PCS_CITATION: u16 = 3073;
    pub const PROJ_COORD_TRANS: u16 = 3075;
    pub const PROJ_LINEAR_UNITS: u16 = 3076;

    pub const MODEL_PROJECTED: u16 = 1;
    pub const MODEL_GEOGRAPHIC: u16 = 2;
    pub const RASTER_PIXEL_IS_AREA: u16 = 1;
    pub const RASTER_PIXEL_IS_POINT: u16 = 2;
    pub const CT_SINUSOIDAL: u16 = 24;
    pub const USER_DEFINED: u16 = 32767;
    pub const LINEAR_METER: u16 = 9001;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compression {
    None,
    Deflate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiffLayout {
    Strips { rows_per_strip: u32 },
    Tiles { width: u32, height: u32 },
}

/// Encoding choices for [`write_geotiff`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TiffOptions {
    pub byte_order: ByteOrder,
    pub layout: TiffLayout,
    pub compression: Compression,
    /// On-disk sample type; `None` keeps the grid's own type.
    pub sample_type: Option<SampleType>,
}

impl Default for TiffOptions {
    fn default() -> Self {
        TiffOptions {
            byte_order: ByteOrder::Little,
            layout: TiffLayout::Strips { rows_per_strip: 16 },
            compression: Compression::Deflate,
            sample_type: None,
        }
    }
}

// ---------------------------------------------------------------------------
// reading

#[derive(Debug, Clone)]
enum Value {
    Ints(Vec<u64>),
    Floats(Vec<f64>),
    Ascii(String),
}

struct Cursor<'a> {
    data: &'a [u8],
    order: ByteOrder,
}

impl<'a> Cursor<'a> {
    fn bytes(&self, offset: u64, len: u64, what: &str) -> Result<&'a [u8], RasterError> {
        let end = offset.checked_add(len);
        match end {
            Some(end) if end <= self.data.len() as u64 => {
                Ok(&self.data[offset as usize..end as usize])
            }
            _ => Err(RasterError::TiffTruncated {
                what: what.to_string(),
                offset,
                need: len,
                have: self.data.len() as u64,
            }),
        }
    }

    fn u16_at(&self, offset: u64, what: &str) -> Result<u16, RasterError> {
        let b = self.bytes(offset, 2, what)?;
        Ok(self.u16(b))
    }

    fn u32_at(&self, offset: u64, what: &str) -> Result<u32, RasterError> {
        let b = self.bytes(offset, 4, what)?;
        Ok(self.u32(b))
    }

    fn u16(&self, b: &[u8]) -> u16 {
        let a = [b[0], b[1]];
        match self.order {
            ByteOrder::Little => u16::from_le_bytes(a),
            ByteOrder::Big => u16::from_be_bytes(a),
        }
    }

    fn u32(&self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self.order {
            ByteOrder::Little => u32::from_le_bytes(a),
            ByteOrder::Big => u32::from_be_bytes(a),
        }
    }

    fn u64(&self, b: &[u8]) -> u64 {
        let a: [u8; 8] = b[..8].try_into().unwrap();
        match self.order {
            ByteOrder::Little => u64::from_le_bytes(a),
            ByteOrder::Big => u64::from_be_bytes(a),
        }
    }
}

fn type_size(field_type: u16) -> Option<u64> {
    Some(match field_type {
        1 | 2 | 6 | 7 => 1,
        3 | 8 => 2,
        4 | 9 | 11 => 4,
        5 | 10 | 12 => 8,
        _ => return None,
    })
}

fn read_entry(cur: &Cursor, entry_off: u64) -> Result<(u16, Value), RasterError> {
    let tag = cur.u16_at(entry_off, "IFD entry")?;
    let ftype = cur.u16_at(entry_off + 2, "IFD entry")?;
    let count = cur.u32_at(entry_off + 4, "IFD entry")? as u64;
    let size = type_size(ftype).ok_or_else(|| {
        RasterError::Tiff(format!("tag {tag}: unknown field type {ftype}"))
    })?;
    let total = size * count;
    let data = if total <= 4 {
        cur.bytes(entry_off + 8, total, &format!("tag {tag} value"))?
    } else {
        let off = cur.u32_at(entry_off + 8, "IFD entry")? as u64;
        cur.bytes(off, total, &format!("tag {tag} value"))?
    };
    let n = count as usize;
    let value = match ftype {
        1 | 7 => Value::Ints(data.iter().map(|&b| b as u64).collect()),
        6 => Value::Ints(data.iter().map(|&b| b as i8 as i64 as u64).collect()),
        2 => {
            let s = String::from_utf8_lossy(data);
            Value::Ascii(s.trim_end_matches('\0').to_string())
        }
        3 => Value::Ints((0..n).map(|i| cur.u16(&data[i * 2..]) as u64).collect()),
        8 => Value::Ints((0..n).map(|i| cur.u16(&data[i * 2..]) as i16 as i64 as u64).collect()),
        4 => Value::Ints((0..n).map(|i| cur.u32(&data[i * 4..]) as u64).collect()),
        9 => Value::Ints((0..n).map(|i| cur.u32(&data[i * 4..]) as i32 as i64 as u64).collect()),
        11 => Value::Floats((0..n).map(|i| f32::from_bits(cur.u32(&data[i * 4..])) as f64).collect()),
        12 => Value::Floats((0..n).map(|i| f64::from_bits(cur.u64(&data[i * 8..]))).collect()),
        5 | 10 => Value::Floats(
            (0..n)
                .map(|i| {
                    let (a, b) = (cur.u32(&data[i * 8..]), cur.u32(&data[i * 8 + 4..]));
                    if ftype == 5 {
                        a as f64 / b as f64
                    } else {
                        a as i32 as f64 / b as i32 as f64
                    }
                })
                .collect(),
        ),
        _ => unreachable!(),
    };
    Ok((tag, value))
}

struct Ifd(BTreeMap<u16, Value>);

impl Ifd {
    fn ints(&self, tag: u16) -> Option<&[u64]> {
        match self.0.get(&tag) {
            Some(Value::Ints(v)) => Some(v),
            _ => None,
        }
    }

    fn floats(&self, tag: u16) -> Option<Vec<f64>> {
        match self.0.get(&tag) {
            Some(Value::Floats(v)) => Some(v.clone()),
            Some(Value::Ints(v)) => Some(v.iter().map(|&i| i as f64).collect()),
            _ => None,
        }
    }

    fn ascii(&self, tag: u16) -> Option<&str> {
        match self.0.get(&tag) {
            Some(Value::Ascii(s)) => Some(s),
            _ => None,
        }
    }

    fn scalar(&self, tag: u16, name: &'static str) -> Result<Option<u64>, RasterError> {
        match self.ints(tag) {
            None => Ok(None),
            Some([v]) => Ok(Some(*v)),
            Some(v) => {
                // BitsPerSample / SampleFormat may legitimately repeat per sample
                if !v.is_empty() && v.iter().all(|x| *x == v[0]) {
                    Ok(Some(v[0]))
                } else {
                    Err(RasterError::TiffUnsupported {
                        tag: name,
                        msg: format!("expected a single value, got {v:?}"),
                    })
                }
            }
        }
    }

    fn required(&self, tag: u16, name: &'static str) -> Result<u64, RasterError> {
        self.scalar(tag, name)?.ok_or(RasterError::TiffMissingTag(name))
    }
}

/// Decodes a GeoTIFF in the constrained profile.
pub fn read_geotiff(bytes: &[u8]) -> Result<RasterGrid, RasterError> {
    if bytes.len() < 8 {
        return Err(RasterError::TiffTruncated {
            what: "header".into(),
            offset: 0,
            need: 8,
            have: bytes.len() as u64,
        });
    }
    let order = match &bytes[..2] {
        b"II" => ByteOrder::Little,
        b"MM" => ByteOrder::Big,
        _ => return Err(RasterError::Tiff("bad byte-order mark".into())),
    };
    let cur = Cursor { data: bytes, order };
    match cur.u16_at(2, "header")? {
        42 => {}
        43 => {
            return Err(RasterError::TiffUnsupported {
                tag: "header",
                msg: "BigTIFF".into(),
            })
        }
        m => return Err(RasterError::Tiff(format!("bad magic number {m}"))),
    }
    let ifd_off = cur.u32_at(4, "header")? as u64;
    let n_entries = cur.u16_at(ifd_off, "IFD")? as u64;
    let mut entries = BTreeMap::new();
    for i in 0..n_entries {
        let (tag, value) = read_entry(&cur, ifd_off + 2 + i * 12)?;
        entries.insert(tag, value);
    }
    let next = cur.u32_at(ifd_off + 2 + n_entries * 12, "IFD next-offset")?;
    if next != 0 {
        return Err(RasterError::TiffUnsupported {
            tag: "IFD chain",
            msg: format!("more than one image (next IFD at offset {next})"),
        });
    }
    let ifd = Ifd(entries);
    decode_image(&cur, &ifd)
}

fn decode_image(cur: &Cursor, ifd: &Ifd) -> Result<RasterGrid, RasterError> {
    use tags::*;
    let width = ifd.required(IMAGE_WIDTH, "ImageWidth")? as usize;
    let height = ifd.required(IMAGE_LENGTH, "ImageLength")? as usize;
    if width == 0 || height == 0 {
        return Err(RasterError::Tiff(format!("empty image {width}x{height}")));
    }
    let spp = ifd.scalar(SAMPLES_PER_PIXEL, "SamplesPerPixel")?.unwrap_or(1);
    let bps_all = ifd.ints(BITS_PER_SAMPLE).map(|v| v.len()).unwrap_or(1);
    if spp != 1 || bps_all > 1 {
        return Err(RasterError::TiffMultiBand(spp.max(bps_all as u64) as u32));
    }
    let bits = ifd.scalar(BITS_PER_SAMPLE, "BitsPerSample")?.unwrap_or(1);
    let format = ifd.scalar(SAMPLE_FORMAT, "SampleFormat")?.unwrap_or(1);
    let sample_type = match (bits, format) {
        (16, 2) => SampleType::Int16,
        (16, 1) => SampleType::UInt16,
        (32, 3) => SampleType::Float32,
        _ => {
            return Err(RasterError::TiffUnsupported {
                tag: "BitsPerSample/SampleFormat",
                msg: format!("{bits} bits with sample format {format}"),
            })
        }
    };
    let compression = match ifd.scalar(COMPRESSION, "Compression")?.unwrap_or(1) {
        1 => Compression::None,
        8 | 32946 => Compression::Deflate,
        c => {
            return Err(RasterError::TiffUnsupported {
                tag: "Compression",
                msg: format!("scheme {c}"),
            })
        }
    };
    if let Some(p) = ifd.scalar(PREDICTOR, "Predictor")? {
        if p != 1 {
            return Err(RasterError::TiffUnsupported {
                tag: "Predictor",
                msg: format!("predictor {p}"),
            });
        }
    }

    let bps = (bits / 8) as usize;
    let mut raw = vec![0u8; width * height * bps];
    let row_bytes = width * bps;

    if ifd.ints(TILE_OFFSETS).is_some() {
        let tw = ifd.required(TILE_WIDTH, "TileWidth")? as usize;
        let th = ifd.required(TILE_LENGTH, "TileLength")? as usize;
        if tw == 0 || th == 0 {
            return Err(RasterError::TiffUnsupported {
                tag: "TileWidth/TileLength",
                msg: format!("{tw}x{th}"),
            });
        }
        let offsets = ifd.ints(TILE_OFFSETS).unwrap();
        let counts = ifd.ints(TILE_BYTE_COUNTS).ok_or(RasterError::TiffMissingTag("TileByteCounts"))?;
        let across = width.div_ceil(tw);
        let down = height.div_ceil(th);
        if offsets.len() != across * down || counts.len() != offsets.len() {
            return Err(RasterError::Tiff(format!(
                "TileOffsets/TileByteCounts: expected {} tiles, got {}/{}",
                across * down,
                offsets.len(),
                counts.len()
            )));
        }
        let tile_bytes = tw * th * bps;
        for (t, (&off, &cnt)) in offsets.iter().zip(counts).enumerate() {
            let block = load_block(cur, off, cnt, tile_bytes, compression, &format!("tile {t}"))?;
            let (tx, ty) = (t % across, t / across);
            let cols = tw.min(width - tx * tw);
            for r in 0..th.min(height - ty * th) {
                let src = &block[r * tw * bps..(r * tw + cols) * bps];
                let dst = (ty * th + r) * row_bytes + tx * tw * bps;
                raw[dst..dst + cols * bps].copy_from_slice(src);
            }
        }
    } else {
        let offsets = ifd.ints(STRIP_OFFSETS).ok_or(RasterError::TiffMissingTag("StripOffsets"))?;
        let counts = ifd.ints(STRIP_BYTE_COUNTS).ok_or(RasterError::TiffMissingTag("StripByteCounts"))?;
        let rps = (ifd.scalar(ROWS_PER_STRIP, "RowsPerStrip")?.unwrap_or(height as u64) as usize).clamp(1, height);
        let n_strips = height.div_ceil(rps);
        if offsets.len() != n_strips || counts.len() != n_strips {
            return Err(RasterError::Tiff(format!(
                "StripOffsets/StripByteCounts: expected {n_strips} strips, got {}/{}",
                offsets.len(),
                counts.len()
            )));
        }
        for (s, (&off, &cnt)) in offsets.iter().zip(counts).enumerate() {
            let rows = rps.min(height - s * rps);
            let need = rows * row_bytes;
            let block = load_block(cur, off, cnt, need, compression, &format!("strip {s}"))?;
            let dst = s * rps * row_bytes;
            raw[dst..dst + need].copy_from_slice(&block[..need]);
        }
    }

    let mut samples: Vec<f64> = match sample_type {
        SampleType::Int16 => raw.chunks_exact(2).map(|b| cur.u16(b) as i16 as f64).collect(),
        SampleType::UInt16 => raw.chunks_exact(2).map(|b| cur.u16(b) as f64).collect(),
        SampleType::Float32 => raw
            .chunks_exact(4)
            .map(|b| f32::from_bits(cur.u32(b)) as f64)
            .collect(),
        SampleType::Float64 => unreachable!(),
    };

    let mut nodata = match ifd.ascii(GDAL_NODATA) {
        Some(s) => {
            let t = s.trim();
            Some(t.parse::<f64>().map_err(|_| RasterError::TiffUnsupported {
                tag: "GDAL_NODATA",
                msg: format!("unparseable value {t:?}"),
            })?)
        }
        None => None,
    };
    // NaN/inf cannot serve as a comparable sentinel; fold them into a finite one.
    if nodata.is_some_and(|v| !v.is_finite()) || samples.iter().any(|v| !v.is_finite()) {
        let sentinel = nodata.filter(|v| v.is_finite()).unwrap_or(crate::DEFAULT_NODATA);
        for v in samples.iter_mut().filter(|v| !v.is_finite()) {
            *v = sentinel;
        }
        nodata = Some(sentinel);
    }

    let geokeys = parse_geokeys(ifd)?;
    let transform = read_transform(ifd, &geokeys)?;
    let crs = crs_from_geokeys(ifd, &geokeys);

    let mut grid = RasterGrid::new(width, height, samples, nodata, transform, crs)?;
    grid.sample_type = sample_type;
    Ok(grid)
}

fn load_block(
    cur: &Cursor,
    offset: u64,
    count: u64,
    need: usize,
    compression: Compression,
    what: &str,
) -> Result<Vec<u8>, RasterError> {
    let data = cur.bytes(offset, count, what)?;
    let out = match compression {
        Compression::None => data.to_vec(),
        Compression::Deflate => {
            let mut out = Vec::with_capacity(need);
            ZlibDecoder::new(data)
                .take(need as u64)
                .read_to_end(&mut out)
                .map_err(|e| RasterError::Tiff(format!("{what} at offset {offset}: deflate error: {e}")))?;
            out
        }
    };
    if out.len() < need {
        return Err(RasterError::TiffTruncated {
            what: format!("{what} data"),
            offset,
            need: need as u64,
            have: out.len() as u64,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
enum KeyValue {
    Short(u16),
    Double(f64),
    Ascii,
}

fn parse_geokeys(ifd: &Ifd) -> Result<BTreeMap<u16, KeyValue>, RasterError> {
    let mut out = BTreeMap::new();
    let Some(dir) = ifd.ints(tags::GEO_KEY_DIRECTORY) else {
        return Ok(out);
    };
    if dir.len() < 4 {
        return Err(RasterError::Tiff("GeoKeyDirectoryTag shorter than its header".into()));
    }
    let n = dir[3] as usize;
    if dir.len() < 4 + n * 4 {
        return Err(RasterError::Tiff(format!(
            "GeoKeyDirectoryTag declares {n} keys but holds {} values",
            dir.len()
        )));
    }
    let doubles = ifd.floats(tags::GEO_DOUBLE_PARAMS).unwrap_or_default();
    for k in 0..n {
        let e = &dir[4 + k * 4..8 + k * 4];
        let (key, loc, count, val) = (e[0] as u16, e[1] as u16, e[2] as usize, e[3] as usize);
        let v = match loc {
            0 => KeyValue::Short(val as u16),
            tags::GEO_DOUBLE_PARAMS if count >= 1 && val < doubles.len() => KeyValue::Double(doubles[val]),
            tags::GEO_ASCII_PARAMS => KeyValue::Ascii,
            tags::GEO_KEY_DIRECTORY if val < dir.len() => KeyValue::Short(dir[val] as u16),
            _ => continue,
        };
        out.insert(key, v);
    }
    Ok(out)
}

fn short_key(keys: &BTreeMap<u16, KeyValue>, key: u16) -> Option<u16> {
    match keys.get(&key) {
        Some(KeyValue::Short(v)) => Some(*v),
        _ => None,
    }
}

fn read_transform(ifd: &Ifd, keys: &BTreeMap<u16, KeyValue>) -> Result<GeoTransform, RasterError> {
    let (mut origin_x, mut origin_y, sx, sy) = if let Some(m) = ifd.floats(tags::MODEL_TRANSFORMATION) {
        if m.len() != 16 {
            return Err(RasterError::Tiff("ModelTransformationTag must hold 16 values".into()));
        }
        if m[1] != 0.0 || m[4] != 0.0 {
            return Err(RasterError::TiffRotated("ModelTransformationTag"));
        }
        (m[3], m[7], m[0], -m[5])
    } else {
        let scale = ifd
            .floats(tags::MODEL_PIXEL_SCALE)
            .ok_or(RasterError::TiffMissingTag("ModelPixelScaleTag"))?;
        let tie = ifd
            .floats(tags::MODEL_TIEPOINT)
            .ok_or(RasterError::TiffMissingTag("ModelTiepointTag"))?;
        if scale.len() < 2 {
            return Err(RasterError::Tiff("ModelPixelScaleTag holds fewer than 2 values".into()));
        }
        if tie.len() != 6 {
            // several tiepoints describe a warp, not an affine grid
            return Err(RasterError::TiffRotated("ModelTiepointTag"));
        }
        (tie[3] - tie[0] * scale[0], tie[4] + tie[1] * scale[1], scale[0], scale[1])
    };
    if !(sx > 0.0 && sy > 0.0) {
        return Err(RasterError::TiffUnsupported {
            tag: "ModelPixelScaleTag",
            msg: format!("non-positive or flipped scale ({sx}, {sy})"),
        });
    }
    if short_key(keys, keys::GT_RASTER_TYPE) == Some(keys::RASTER_PIXEL_IS_POINT) {
        origin_x -= 0.5 * sx;
        origin_y += 0.5 * sy;
    }
    Ok(GeoTransform::new(origin_x, origin_y, sx, sy)?)
}

fn crs_from_geokeys(ifd: &Ifd, keys: &BTreeMap<u16, KeyValue>) -> CrsTag {
    let citation = ifd.ascii(tags::GEO_ASCII_PARAMS).unwrap_or("").to_ascii_lowercase();
    let radius = match keys.get(&keys::GEOG_SEMI_MAJOR_AXIS) {
        Some(KeyValue::Double(r)) if *r > 0.0 => *r,
        _ => MODIS_SPHERE_RADIUS,
    };
    let sinusoidal = short_key(keys, keys::PROJ_COORD_TRANS) == Some(keys::CT_SINUSOIDAL)
        || (citation.contains("sinusoidal") && keys.contains_key(&keys::GT_MODEL_TYPE));
    match short_key(keys, keys::GT_MODEL_TYPE) {
        _ if sinusoidal => CrsTag::SinusoidalSphere { sphere_radius: radius },
        Some(keys::MODEL_PROJECTED) => CrsTag::ProjectedMeters,
        Some(keys::MODEL_GEOGRAPHIC) => CrsTag::GeographicDegrees,
        _ => CrsTag::Unknown,
    }
}

// ---------------------------------------------------------------------------
// writing

enum Field {
    Short(Vec<u16>),
    Long(Vec<u32>),
    Double(Vec<f64>),
    Ascii(String),
}

impl Field {
    fn type_code(&self) -> u16 {
        match self {
            Field::Short(_) => 3,
            Field::Long(_) => 4,
            Field::Double(_) => 12,
            Field::Ascii(_) => 2,
        }
    }

    fn count(&self) -> u32 {
        match self {
            Field::Short(v) => v.len() as u32,
            Field::Long(v) => v.len() as u32,
            Field::Double(v) => v.len() as u32,
            Field::Ascii(s) => s.len() as u32 + 1,
        }
    }

    fn encode(&self, order: ByteOrder) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Field::Short(v) => v.iter().for_each(|x| out.extend(put16(*x, order))),
            Field::Long(v) => v.iter().for_each(|x| out.extend(put32(*x, order))),
            Field::Double(v) => v.iter().for_each(|x| out.extend(put64(x.to_bits(), order))),
            Field::Ascii(s) => {
                out.extend(s.as_bytes());
                out.push(0);
            }
        }
        out
    }
}

fn put16(v: u16, o: ByteOrder) -> [u8; 2] {
    match o {
        ByteOrder::Little => v.to_le_bytes(),
        ByteOrder::Big => v.to_be_bytes(),
    }
}

fn put32(v: u32, o: ByteOrder) -> [u8; 4] {
    match o {
        ByteOrder::Little => v.to_le_bytes(),
        ByteOrder::Big => v.to_be_bytes(),
    }
}

fn put64(v: u64, o: ByteOrder) -> [u8; 8] {
    match o {
        ByteOrder::Little => v.to_le_bytes(),
        ByteOrder::Big => v.to_be_bytes(),
    }
}

fn encode_samples(grid: &RasterGrid, st: SampleType, o: ByteOrder) -> Result<Vec<u8>, RasterError> {
    let mut out = Vec::with_capacity(grid.samples.len() * 4);
    let check_int = |v: f64, lo: f64, hi: f64| -> Result<(), RasterError> {
        if v.fract() != 0.0 || v < lo || v > hi {
            Err(RasterError::Invalid(format!("sample {v} does not fit {st:?}")))
        } else {
            Ok(())
        }
    };
    for &v in &grid.samples {
        match st {
            SampleType::Int16 => {
                check_int(v, i16::MIN as f64, i16::MAX as f64)?;
                out.extend(put16(v as i16 as u16, o));
            }
            SampleType::UInt16 => {
                check_int(v, 0.0, u16::MAX as f64)?;
                out.extend(put16(v as u16, o));
            }
            SampleType::Float32 => out.extend(put32((v as f32).to_bits(), o)),
            SampleType::Float64 => {
                return Err(RasterError::TiffUnsupported {
                    tag: "SampleFormat",
                    msg: "float64 is outside the profile; write as float32".into(),
                })
            }
        }
    }
    Ok(out)
}

fn compress(data: &[u8], c: Compression) -> Vec<u8> {
    match c {
        Compression::None => data.to_vec(),
        Compression::Deflate => {
            let mut enc = ZlibEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(data).expect("in-memory write");
            enc.finish().expect("in-memory write")
        }
    }
}

fn geokey_fields(crs: &CrsTag) -> Vec<(u16, Field)> {
    let mut entries: Vec<[u16; 4]> = Vec::new();
    let mut doubles = Vec::new();
    let mut ascii = None;
    match crs {
        CrsTag::Unknown => return Vec::new(),
        CrsTag::SinusoidalSphere { sphere_radius } => {
            entries.push([keys::GT_MODEL_TYPE, 0, 1, keys::MODEL_PROJECTED]);
            entries.push([keys::GT_RASTER_TYPE, 0, 1, keys::RASTER_PIXEL_IS_AREA]);
            entries.push([keys::GEOG_SEMI_MAJOR_AXIS, tags::GEO_DOUBLE_PARAMS, 1, 0]);
            entries.push([keys::GEOG_SEMI_MINOR_AXIS, tags::GEO_DOUBLE_PARAMS, 1, 1]);
            entries.push([keys::PROJECTED_CS_TYPE, 0, 1, keys::USER_DEFINED]);
            let cite = "Sinusoidal|";
            entries.push([keys::PCS_CITATION, tags::GEO_ASCII_PARAMS, cite.len() as u16, 0]);
            entries.push([keys::PROJ_COORD_TRANS, 0, 1, keys::CT_SINUSOIDAL]);
            entries.push([keys::PROJ_LINEAR_UNITS, 0, 1, keys::LINEAR_METER]);
            doubles = vec![*sphere_radius, *sphere_radius];
            ascii = Some(cite.to_string());
        }
        CrsTag::ProjectedMeters => {
            entries.push([keys::GT_MODEL_TYPE, 0, 1, keys::MODEL_PROJECTED]);
            entries.push([keys::GT_RASTER_TYPE, 0, 1, keys::RASTER_PIXEL_IS_AREA]);
            entries.push([keys::PROJ_LINEAR_UNITS, 0, 1, keys::LINEAR_METER]);
        }
        CrsTag::GeographicDegrees => {
            entries.push([keys::GT_MODEL_TYPE, 0, 1, keys::MODEL_GEOGRAPHIC]);
            entries.push([keys::GT_RASTER_TYPE, 0, 1, keys::RASTER_PIXEL_IS_AREA]);
        }
    }
    let mut dir = vec![1, 1, 0, entries.len() as u16];
    entries.iter().for_each(|e| dir.extend_from_slice(e));
    let mut out = vec![(tags::GEO_KEY_DIRECTORY, Field::Short(dir))];
    if !doubles.is_empty() {
        out.push((tags::GEO_DOUBLE_PARAMS, Field::Double(doubles)));
    }
    if let Some(a) = ascii {
        out.push((tags::GEO_ASCII_PARAMS, Field::Ascii(a)));
    }
    out
}

/// Encodes a grid in the constrained profile.
pub fn write_geotiff(grid: &RasterGrid, opts: &TiffOptions) -> Result<Vec<u8>, RasterError> {
    grid.validate()?;
    let st = opts.sample_type.unwrap_or(grid.sample_type);
    let o = opts.byte_order;
    let bps = match st {
        SampleType::Int16 | SampleType::UInt16 => 2,
        SampleType::Float32 => 4,
        SampleType::Float64 => 8,
    };
    let raw = encode_samples(grid, st, o)?;
    let (w, h) = (grid.width, grid.height);

    // chunk the raster into strips or padded tiles
    let mut blocks: Vec<Vec<u8>> = Vec::new();
    match opts.layout {
        TiffLayout::Strips { rows_per_strip } => {
            let rps = (rows_per_strip.max(1) as usize).min(h);
            for chunk in raw.chunks(rps * w * bps) {
                blocks.push(compress(chunk, opts.compression));
            }
        }
        TiffLayout::Tiles { width: tw, height: th } => {
            let (tw, th) = (tw.max(1) as usize, th.max(1) as usize);
            for ty in 0..h.div_ceil(th) {
                for tx in 0..w.div_ceil(tw) {
                    let mut tile = vec![0u8; tw * th * bps];
                    let cols = tw.min(w - tx * tw);
                    for r in 0..th.min(h - ty * th) {
                        let src = ((ty * th + r) * w + tx * tw) * bps;
                        tile[r * tw * bps..(r * tw + cols) * bps].copy_from_slice(&raw[src..src + cols * bps]);
                    }
                    blocks.push(compress(&tile, opts.compression));
                }
            }
        }
    }

    let mut file = Vec::new();
    file.extend_from_slice(match o {
        ByteOrder::Little => b"II",
        ByteOrder::Big => b"MM",
    });
    file.extend(put16(42, o));
    file.extend(put32(0, o)); // patched below
    let mut offsets = Vec::with_capacity(blocks.len());
    let mut counts = Vec::with_capacity(blocks.len());
    for b in &blocks {
        offsets.push(file.len() as u32);
        counts.push(b.len() as u32);
        file.extend_from_slice(b);
    }
    if file.len() % 2 == 1 {
        file.push(0);
    }

    let (sample_format, bits) = match st {
        SampleType::Int16 => (2, 16),
        SampleType::UInt16 => (1, 16),
        SampleType::Float32 => (3, 32),
        SampleType::Float64 => (3, 64),
    };
    let t = &grid.transform;
    let mut fields: Vec<(u16, Field)> = vec![
        (tags::IMAGE_WIDTH, Field::Long(vec![w as u32])),
        (tags::IMAGE_LENGTH, Field::Long(vec![h as u32])),
        (tags::BITS_PER_SAMPLE, Field::Short(vec![bits])),
        (
            tags::COMPRESSION,
            Field::Short(vec![match opts.compression {
                Compression::None => 1,
                Compression::Deflate => 8,
            }]),
        ),
        (tags::PHOTOMETRIC, Field::Short(vec![1])),
        (tags::SAMPLES_PER_PIXEL, Field::Short(vec![1])),
        (tags::PLANAR_CONFIG, Field::Short(vec![1])),
        (tags::SAMPLE_FORMAT, Field::Short(vec![sample_format])),
        (
            tags::MODEL_PIXEL_SCALE,
            Field::Double(vec![t.pixel_width, t.pixel_height, 0.0]),
        ),
        (
            tags::MODEL_TIEPOINT,
            Field::Double(vec![0.0, 0.0, 0.0, t.origin_x, t.origin_y, 0.0]),
        ),
    ];
    match opts.layout {
        TiffLayout::Strips { rows_per_strip } => {
            let rps = (rows_per_strip.max(1) as usize).min(h) as u32;
            fields.push((tags::STRIP_OFFSETS, Field::Long(offsets)));
            fields.push((tags::ROWS_PER_STRIP, Field::Long(vec![rps])));
            fields.push((tags::STRIP_BYTE_COUNTS, Field::Long(counts)));
        }
        TiffLayout::Tiles { width: tw, height: th } => {
            fields.push((tags::TILE_WIDTH, Field::Long(vec![tw.max(1)])));
            fields.push((tags::TILE_LENGTH, Field::Long(vec![th.max(1)])));
            fields.push((tags::TILE_OFFSETS, Field::Long(offsets)));
            fields.push((tags::TILE_BYTE_COUNTS, Field::Long(counts)));
        }
    }
    fields.extend(geokey_fields(&grid.crs));
    if let Some(nd) = grid.nodata {
        fields.push((tags::GDAL_NODATA, Field::Ascii(format!("{nd}"))));
    }
    fields.sort_by_key(|(tag, _)| *tag);

    let ifd_off = file.len() as u32;
    file[4..8].copy_from_slice(&put32(ifd_off, o));
    let ifd_len = 2 + fields.len() * 12 + 4;
    let mut extra_off = ifd_off as usize + ifd_len;
    let mut ifd = Vec::with_capacity(ifd_len);
    let mut extra = Vec::new();
    ifd.extend(put16(fields.len() as u16, o));
    for (tag, field) in &fields {
        let data = field.encode(o);
        ifd.extend(put16(*tag, o));
        ifd.extend(put16(field.type_code(), o));
        ifd.extend(put32(field.count(), o));
        if data.len() <= 4 {
            let mut inline = [0u8; 4];
            inline[..data.len()].copy_from_slice(&data);
            ifd.extend(inline);
        } else {
            ifd.extend(put32(extra_off as u32, o));
            extra.extend_from_slice(&data);
            if data.len() % 2 == 1 {
                extra.push(0);
            }
            extra_off += data.len() + data.len() % 2;
        }
    }
    ifd.extend(put32(0, o));
    file.extend(ifd);
    file.extend(extra);
    Ok(file)
}
