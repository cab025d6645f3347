//! Raster files.
//!
//! ESRI ASCII grid: header lines `ncols`, `nrows`, `xllcorner` (or
//! `xllcenter`), `yllcorner` (or `yllcenter`), `cellsize`, optional
//! `NODATA_value` (default -9999), then `nrows × ncols` values in row-major
//! order starting at the northern row. Keys are case-insensitive.
//!
//! Binary twin: the line `FORESTAREA-GRID-1`, the same header lines, a
//! `dtype f64le` or `dtype u8` line and an `end_header` line, then the raw
//! little-endian cell values in the same order.
//!
//! Band manifest: one `name = path` line per band, paths relative to the
//! manifest's directory; blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::grid::{BandSet, ClassMap, GridSpec, RasterGrid};
use crate::domain::NODATA_CODE;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const BINARY_MAGIC: &str = "FORESTAREA-GRID-1";
const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridEncoding {
    Ascii,
    Binary,
}

impl GridEncoding {
    /// Binary for `.bin`/`.fgrid` extensions, ASCII otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("fgrid") => GridEncoding::Binary,
            _ => GridEncoding::Ascii,
        }
    }
}

struct Header {
    spec: GridSpec,
    nodata: f64,
}

fn header_text(spec: &GridSpec, nodata: f64) -> String {
    format!(
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
        spec.ncols,
        spec.nrows,
        spec.origin_x,
        spec.min_y(),
        spec.cell_size,
        nodata
    )
}

/// Parses header lines. Returns the header, the first data line of an
/// ASCII grid (consumed while looking for the end of the header) and the
/// dtype of a binary grid.
fn parse_header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, path: &Path, binary: bool) -> Result<(Header, Option<(usize, &'a str)>, Option<String>)> {
    let mut ncols = None;
    let mut nrows = None;
    let mut x = None;
    let mut y = None;
    let mut x_center = false;
    let mut y_center = false;
    let mut cell = None;
    let mut nodata = None;
    let mut dtype = None;
    let mut pending_first_data: Option<(usize, &'a str)> = None;
    for (lineno, line) in lines.by_ref() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let mut parts = t.split_whitespace();
        let key = parts.next().unwrap_or("").to_ascii_lowercase();
        let val = parts.next();
        let num = |v: Option<&str>| -> Result<f64> {
            v.and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::format(path, lineno + 1, format!("bad value for header key '{key}'")))
        };
        match key.as_str() {
            "ncols" => ncols = Some(num(val)? as usize),
            "nrows" => nrows = Some(num(val)? as usize),
            "xllcorner" => x = Some(num(val)?),
            "yllcorner" => y = Some(num(val)?),
            "xllcenter" => {
                x = Some(num(val)?);
                x_center = true;
            }
            "yllcenter" => {
                y = Some(num(val)?);
                y_center = true;
            }
            "cellsize" => cell = Some(num(val)?),
            "nodata_value" => nodata = Some(num(val)?),
            "dtype" if binary => dtype = val.map(str::to_string),
            "end_header" if binary => break,
            _ if !binary && key.parse::<f64>().is_ok() => {
                pending_first_data = Some((lineno, line));
                break;
            }
            _ => return Err(Error::format(path, lineno + 1, format!("unknown header key '{key}'"))),
        }
    }
    let missing = |k: &str| Error::format(path, 0, format!("header key '{k}' missing"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let cell = cell.ok_or_else(|| missing("cellsize"))?;
    let mut x = x.ok_or_else(|| missing("xllcorner"))?;
    let mut y = y.ok_or_else(|| missing("yllcorner"))?;
    if x_center {
        x -= cell / 2.0;
    }
    if y_center {
        y -= cell / 2.0;
    }
    let spec = GridSpec::new(x, y + nrows as f64 * cell, cell, nrows, ncols).map_err(|e| Error::format(path, 0, e.to_string()))?;
    let header = Header {
        spec,
        nodata: nodata.unwrap_or(DEFAULT_NODATA),
    };
    Ok((header, pending_first_data, dtype))
}

pub fn parse_ascii_grid(text: &str, path: &Path) -> Result<RasterGrid> {
    let mut lines = text.lines().enumerate();
    let (h, first, _) = parse_header(&mut lines, path, false)?;
    let n = h.spec.n_cells();
    let mut values = Vec::with_capacity(n);
    let push_line = |lineno: usize, line: &str, values: &mut Vec<f64>| -> Result<()> {
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::format(path, lineno + 1, format!("'{tok}' is not a number")))?;
            values.push(v);
        }
        Ok(())
    };
    let mut last_line = 0;
    if let Some((lineno, line)) = first {
        push_line(lineno, line, &mut values)?;
        last_line = lineno + 1;
    }
    for (lineno, line) in lines {
        push_line(lineno, line, &mut values)?;
        last_line = lineno + 1;
    }
    if values.len() != n {
        return Err(Error::format(
            path,
            last_line,
            format!("expected {n} values ({} rows × {} cols), found {}", h.spec.nrows, h.spec.ncols, values.len()),
        ));
    }
    RasterGrid::new(h.spec, h.nodata, values)
}

pub fn format_ascii_grid(r: &RasterGrid) -> String {
    let mut out = header_text(&r.spec, r.nodata);
    out.reserve(r.values.len() * 8);
    for row in r.values.chunks(r.spec.ncols.max(1)) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let v = if v.is_nan() { r.nodata } else { *v };
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

fn binary_bytes(spec: &GridSpec, nodata: f64, dtype: &str, payload: &[u8]) -> Vec<u8> {
    let mut out = format!("{BINARY_MAGIC}\n{}dtype {dtype}\nend_header\n", header_text(spec, nodata)).into_bytes();
    out.extend_from_slice(payload);
    out
}

/// Splits a binary grid into header text and payload.
fn split_binary<'a>(bytes: &'a [u8], path: &Path) -> Result<(&'a str, &'a [u8])> {
    const END: &[u8] = b"end_header\n";
    let pos = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::format(path, 0, "binary grid without end_header"))?;
    let head = std::str::from_utf8(&bytes[..pos + END.len()]).map_err(|_| Error::format(path, 0, "binary grid header is not UTF-8"))?;
    Ok((head, &bytes[pos + END.len()..]))
}

fn parse_binary<'a>(bytes: &'a [u8], path: &Path) -> Result<(Header, String, &'a [u8])> {
    let (head, payload) = split_binary(bytes, path)?;
    let mut lines = head.lines().enumerate();
    match lines.next() {
        Some((_, m)) if m.trim() == BINARY_MAGIC => {}
        _ => return Err(Error::format(path, 1, format!("missing magic line {BINARY_MAGIC}"))),
    }
    let (h, _, dtype) = parse_header(&mut lines, path, true)?;
    let dtype = dtype.ok_or_else(|| Error::format(path, 0, "binary grid without dtype"))?;
    Ok((h, dtype, payload))
}

fn decode_f64(h: Header, dtype: &str, payload: &[u8], path: &Path) -> Result<RasterGrid> {
    let n = h.spec.n_cells();
    let values: Vec<f64> = match dtype {
        "f64le" => {
            if payload.len() != n * 8 {
                return Err(Error::format(path, 0, format!("payload has {} bytes, expected {}", payload.len(), n * 8)));
            }
            payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
        }
        "u8" => {
            if payload.len() != n {
                return Err(Error::format(path, 0, format!("payload has {} bytes, expected {n}", payload.len())));
            }
            payload.iter().map(|&b| b as f64).collect()
        }
        other => return Err(Error::format(path, 0, format!("unknown dtype '{other}'"))),
    };
    RasterGrid::new(h.spec, h.nodata, values)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads an ASCII or binary grid, detected from the content.
pub fn read_grid(path: &Path) -> Result<RasterGrid> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(BINARY_MAGIC.as_bytes()) {
        let (h, dtype, payload) = parse_binary(&bytes, path)?;
        decode_f64(h, &dtype, payload, path)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::format(path, 0, "grid file is not UTF-8 text"))?;
        parse_ascii_grid(&text, path)
    }
}

pub fn write_grid(path: &Path, r: &RasterGrid, encoding: GridEncoding) -> Result<()> {
    let bytes = match encoding {
        GridEncoding::Ascii => format_ascii_grid(r).into_bytes(),
        GridEncoding::Binary => {
            let payload: Vec<u8> = r
                .values
                .iter()
                .flat_map(|v| (if v.is_nan() { r.nodata } else { *v }).to_le_bytes())
                .collect();
            binary_bytes(&r.spec, r.nodata, "f64le", &payload)
        }
    };
    write_atomic(path, &bytes)
}

/// Reads a class map (integer codes) with the given legend.
pub fn read_class_map(path: &Path, legend: Vec<(u8, String)>) -> Result<ClassMap> {
    let r = read_grid(path)?;
    ClassMap::from_raster(&r, legend).map_err(|e| Error::format(path, 0, e.to_string()))
}

pub fn write_class_map(path: &Path, map: &ClassMap, encoding: GridEncoding) -> Result<()> {
    let bytes = match encoding {
        GridEncoding::Ascii => format_ascii_grid(&map.to_raster()).into_bytes(),
        GridEncoding::Binary => binary_bytes(&map.spec, NODATA_CODE as f64, "u8", &map.codes),
    };
    write_atomic(path, &bytes)
}

/// `(band name, path)` entries of a manifest, paths resolved against the
/// manifest directory.
pub fn read_manifest(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out: Vec<(String, PathBuf)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (name, p) = t
            .split_once('=')
            .ok_or_else(|| Error::format(path, i + 1, "expected 'name = path'"))?;
        let (name, p) = (name.trim(), p.trim());
        if name.is_empty() || p.is_empty() {
            return Err(Error::format(path, i + 1, "empty band name or path"));
        }
        if out.iter().any(|(n, _)| n == name) {
            return Err(Error::format(path, i + 1, format!("duplicate band '{name}'")));
        }
        out.push((name.to_string(), base.join(p)));
    }
    if out.is_empty() {
        return Err(Error::format(path, 0, "manifest lists no bands"));
    }
    Ok(out)
}

pub fn read_band_set(manifest: &Path) -> Result<BandSet> {
    let entries = read_manifest(manifest)?;
    let mut names = Vec::with_capacity(entries.len());
    let mut bands = Vec::with_capacity(entries.len());
    for (n, p) in entries {
        bands.push(read_grid(&p)?);
        names.push(n);
    }
    BandSet::new(names, bands).map_err(|e| Error::format(manifest, 0, e.to_string()))
}

/// Writes every band next to the manifest as `<stem>_<band>.asc` (or
/// `.bin`) and the manifest listing them.
pub fn write_band_set(manifest: &Path, set: &BandSet, encoding: GridEncoding) -> Result<()> {
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("bands");
    let ext = match encoding {
        GridEncoding::Ascii => "asc",
        GridEncoding::Binary => "bin",
    };
    let mut text = String::new();
    for (name, band) in set.names.iter().zip(&set.bands) {
        let file = format!("{stem}_{name}.{ext}");
        write_grid(&dir.join(&file), band, encoding)?;
        let _ = writeln!(text, "{name} = {file}");
    }
    write_atomic(manifest, text.as_bytes())
}
