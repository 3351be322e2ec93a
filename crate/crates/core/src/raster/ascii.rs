//! ESRI-style ASCII grid.
//!
//! ```text
//! ncols 2
//! nrows 2
//! xllcorner 0
//! yllcorner 0
//! cellsize 10
//! NODATA_value -9999
//! 1 2
//! 3 4
//! ```

use super::{RasterError, RasterGrid, SampleType};
use crate::geo::{CrsTag, GeoTransform};
use std::fmt::Write as _;

const KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

/// Reads an ASCII grid, tagging it `PROJECTED_METERS`.
pub fn read_ascii_grid(text: &[u8]) -> Result<RasterGrid, RasterError> {
    read_ascii_grid_with_crs(text, CrsTag::ProjectedMeters)
}

pub fn read_ascii_grid_with_crs(text: &[u8], crs: CrsTag) -> Result<RasterGrid, RasterError> {
    let text = std::str::from_utf8(text).map_err(|e| RasterError::AsciiParse {
        line: 0,
        msg: format!("not UTF-8: {e}"),
    })?;

    let mut header: [Option<(f64, usize)>; 6] = [None; 6];
    let mut lines = text.lines().enumerate().peekable();
    let mut data_line = 1;
    while let Some(&(idx, line)) = lines.peek() {
        let lineno = idx + 1;
        data_line = lineno;
        let mut tokens = line.split_whitespace();
        let Some(first) = tokens.next() else {
            lines.next();
            continue;
        };
        let lower = first.to_ascii_lowercase();
        let Some(k) = KEYS.iter().position(|&key| key == lower) else {
            break;
        };
        if header[k].is_some() {
            return Err(RasterError::AsciiParse {
                line: lineno,
                msg: format!("duplicate header key {first}"),
            });
        }
        let value = tokens.next().ok_or_else(|| RasterError::AsciiParse {
            line: lineno,
            msg: format!("header key {first} has no value"),
        })?;
        let v = parse_number(value, lineno)?;
        if let Some(extra) = tokens.next() {
            return Err(RasterError::AsciiParse {
                line: lineno,
                msg: format!("unexpected token {extra:?} after {first}"),
            });
        }
        header[k] = Some((v, lineno));
        lines.next();
        data_line = lineno + 1;
    }

    for (i, key) in KEYS.iter().enumerate().take(5) {
        if header[i].is_none() {
            return Err(RasterError::AsciiParse {
                line: data_line,
                msg: format!("missing header key {key}"),
            });
        }
    }
    let dim = |i: usize| -> Result<usize, RasterError> {
        let (v, line) = header[i].unwrap();
        if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
            Ok(v as usize)
        } else {
            Err(RasterError::AsciiParse {
                line,
                msg: format!("{} must be a positive integer, got {v}", KEYS[i]),
            })
        }
    };
    let ncols = dim(0)?;
    let nrows = dim(1)?;
    let xll = header[2].unwrap().0;
    let yll = header[3].unwrap().0;
    let (cellsize, cs_line) = header[4].unwrap();
    let nodata = header[5].map(|(v, _)| v);

    let expected = ncols * nrows;
    let mut samples = Vec::with_capacity(expected);
    let mut last_line = data_line;
    for (idx, line) in lines {
        last_line = idx + 1;
        for tok in line.split_whitespace() {
            if samples.len() == expected {
                return Err(RasterError::AsciiParse {
                    line: idx + 1,
                    msg: format!("more than ncols*nrows = {expected} samples"),
                });
            }
            samples.push(parse_number(tok, idx + 1)?);
        }
    }
    if samples.len() != expected {
        return Err(RasterError::AsciiParse {
            line: last_line,
            msg: format!("found {} samples, expected ncols*nrows = {expected}", samples.len()),
        });
    }

    let transform = GeoTransform::new(xll, yll + nrows as f64 * cellsize, cellsize, cellsize)
        .map_err(|e| RasterError::AsciiParse {
            line: cs_line,
            msg: e.to_string(),
        })?;
    let mut grid = RasterGrid::new(ncols, nrows, samples, nodata, transform, crs)?;
    if grid.samples.iter().all(|v| v.fract() == 0.0 && (-32768.0..=32767.0).contains(v)) {
        grid.sample_type = SampleType::Int16;
    }
    Ok(grid)
}

fn parse_number(tok: &str, line: usize) -> Result<f64, RasterError> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(RasterError::AsciiParse {
            line,
            msg: format!("non-numeric token {tok:?}"),
        }),
    }
}

/// Serializes a grid with square pixels. Numbers use the shortest decimal
/// form that parses back to the same `f64`, so a read of the output is
/// bit-exact.
pub fn write_ascii_grid(grid: &RasterGrid) -> Result<Vec<u8>, RasterError> {
    let t = &grid.transform;
    if !t.is_square() {
        return Err(RasterError::NonSquare(t.pixel_width, t.pixel_height));
    }
    let yll = lower_left_y(t.origin_y, grid.height, t.pixel_height);
    let mut out = String::with_capacity(grid.samples.len() * 8 + 128);
    let _ = writeln!(out, "ncols {}", grid.width);
    let _ = writeln!(out, "nrows {}", grid.height);
    let _ = writeln!(out, "xllcorner {}", t.origin_x);
    let _ = writeln!(out, "yllcorner {yll}");
    let _ = writeln!(out, "cellsize {}", t.pixel_width);
    if let Some(nd) = grid.nodata {
        let _ = writeln!(out, "NODATA_value {nd}");
    }
    for row in grid.samples.chunks(grid.width) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    Ok(out.into_bytes())
}

/// Picks a lower-left y that the reader maps back to exactly `origin_y`.
fn lower_left_y(origin_y: f64, nrows: usize, cellsize: f64) -> f64 {
    let span = nrows as f64 * cellsize;
    let guess = origin_y - span;
    if guess + span == origin_y {
        return guess;
    }
    let (mut up, mut down) = (guess, guess);
    for _ in 0..64 {
        up = up.next_up();
        down = down.next_down();
        if up + span == origin_y {
            return up;
        }
        if down + span == origin_y {
            return down;
        }
    }
    guess
}
