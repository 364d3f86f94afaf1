//! On-disk formats: binary PGM images, the target stack file, the combo
//! cache directory and CSV tables.
//!
//! Layers are written as 8-bit PGM with 0 for an opaque pixel and 255 for a
//! transparent one. Renders are quantized `round(255 * value)` at export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::designer::{CacheEntry, ComboCache, PixelCombo, ViewTargetStack};
use crate::factorization::WnmfTrace;
use crate::imaging::Levels;
use crate::marker::{BinaryLayer, CellSpec, LayerRole, ViewSpec};
use crate::{Error, Result};

pub const STACK_FORMAT: &str = "qrtag-stack";
pub const CACHE_FORMAT: &str = "qrtag-combo-cache";
pub const FORMAT_VERSION: u32 = 1;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Binary (P5) graymap with the given maxval.
pub fn encode_pgm(pixels: &Array2<u16>, maxval: u16) -> Vec<u8> {
    let (rows, cols) = pixels.dim();
    let mut out = format!("P5\n{cols} {rows}\n{maxval}\n").into_bytes();
    for &p in pixels.iter() {
        if maxval < 256 {
            out.push(p as u8);
        } else {
            out.extend_from_slice(&p.to_be_bytes());
        }
    }
    out
}

/// Parse a binary (P5) graymap, returning pixels and maxval.
pub fn decode_pgm(bytes: &[u8]) -> Result<(Array2<u16>, u16)> {
    let mut pos = 0;
    let next_token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    if next_token(&mut pos)? != "P5" {
        return Err(Error::Format("not a binary PGM (P5) file".into()));
    }
    let num = |t: String| -> Result<usize> {
        t.parse()
            .map_err(|_| Error::Format(format!("bad PGM header field {t:?}")))
    };
    let cols = num(next_token(&mut pos)?)?;
    let rows = num(next_token(&mut pos)?)?;
    let maxval = num(next_token(&mut pos)?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let width = if maxval < 256 { 1 } else { 2 };
    let need = rows * cols * width;
    if bytes.len() < pos + need {
        return Err(Error::Format(format!(
            "PGM raster holds {} bytes, expected {need}",
            bytes.len().saturating_sub(pos)
        )));
    }
    let data = &bytes[pos..pos + need];
    let pixels: Vec<u16> = if width == 1 {
        data.iter().map(|&b| u16::from(b)).collect()
    } else {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    let arr =
        Array2::from_shape_vec((rows, cols), pixels).map_err(|e| Error::Format(e.to_string()))?;
    Ok((arr, maxval as u16))
}

pub fn write_layer_pgm(path: &Path, layer: &BinaryLayer) -> Result<()> {
    let px = layer.pixels().mapv(|b| if b == 1 { 255u16 } else { 0 });
    write_bytes(path, &encode_pgm(&px, 255))
}

/// Read a two-valued image as bits: 0 -> 0, maxval -> 1.
pub fn read_bit_pgm(path: &Path) -> Result<Array2<u8>> {
    let (px, maxval) = decode_pgm(&read_bytes(path)?)?;
    if let Some(&bad) = px.iter().find(|&&p| p != 0 && p != maxval) {
        return Err(Error::Format(format!(
            "{}: pixel value {bad} is neither 0 nor {maxval}",
            path.display()
        )));
    }
    Ok(px.mapv(|p| u8::from(p == maxval)))
}

pub fn read_layer_pgm(path: &Path, role: LayerRole) -> Result<BinaryLayer> {
    BinaryLayer::new(read_bit_pgm(path)?, role)
}

pub fn write_gray_pgm(path: &Path, values: &Array2<f64>) -> Result<()> {
    let px = values.mapv(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u16);
    write_bytes(path, &encode_pgm(&px, 255))
}

/// Grayscale image as values in [0, 1].
pub fn read_gray_pgm(path: &Path) -> Result<Array2<f64>> {
    let (px, maxval) = decode_pgm(&read_bytes(path)?)?;
    Ok(px.mapv(|p| f64::from(p) / f64::from(maxval)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StackFile {
    format: String,
    version: u32,
    grid_k: usize,
    shift_step: usize,
    rows: usize,
    cols: usize,
    level_low: f64,
    level_high: f64,
    /// Per view, one string of '0'/'1' per row.
    codes: Vec<Vec<String>>,
}

fn bits_to_rows(bits: &Array2<u8>) -> Vec<String> {
    bits.rows()
        .into_iter()
        .map(|r| r.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect())
        .collect()
}

fn rows_to_bits(rows: &[String], cols: usize) -> Result<Array2<u8>> {
    let mut v = Vec::with_capacity(rows.len() * cols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Format(format!(
                "row {i} has {} bits, expected {cols}",
                row.len()
            )));
        }
        for ch in row.chars() {
            v.push(match ch {
                '0' => 0,
                '1' => 1,
                _ => return Err(Error::Format(format!("row {i} contains {ch:?}"))),
            });
        }
    }
    Array2::from_shape_vec((rows.len(), cols), v).map_err(|e| Error::Format(e.to_string()))
}

pub fn stack_to_json(stack: &ViewTargetStack) -> Result<String> {
    let (rows, cols) = stack.dim();
    let levels = stack.levels();
    let file = StackFile {
        format: STACK_FORMAT.into(),
        version: FORMAT_VERSION,
        grid_k: stack.view.grid_k,
        shift_step: stack.view.shift_step,
        rows,
        cols,
        level_low: levels.low,
        level_high: levels.high,
        codes: stack
            .codes
            .iter()
            .map(|c| bits_to_rows(&c.bits()))
            .collect(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))
}

pub fn stack_from_json(text: &str) -> Result<ViewTargetStack> {
    let f: StackFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if f.format != STACK_FORMAT || f.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported stack format {} v{}",
            f.format, f.version
        )));
    }
    let levels = Levels::new(f.level_low, f.level_high)?;
    let view = ViewSpec::new(f.grid_k, f.shift_step)?;
    let bits = f
        .codes
        .iter()
        .map(|rows| {
            if rows.len() != f.rows {
                return Err(Error::Format(format!(
                    "code has {} rows, expected {}",
                    rows.len(),
                    f.rows
                )));
            }
            rows_to_bits(rows, f.cols)
        })
        .collect::<Result<Vec<_>>>()?;
    ViewTargetStack::from_bits(&bits, view, levels)
}

pub fn write_stack(path: &Path, stack: &ViewTargetStack) -> Result<()> {
    let mut s = stack_to_json(stack)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_stack(path: &Path) -> Result<ViewTargetStack> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    stack_from_json(&text)
}

/// Hex string of one row packed MSB-first into bytes.
fn pack_row(row: ndarray::ArrayView1<u8>) -> String {
    let mut out = String::new();
    for chunk in row.to_vec().chunks(8) {
        let byte = chunk
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, &b)| acc | (b << (7 - i)));
        let _ = write!(out, "{byte:02x}");
    }
    out
}

fn unpack_rows(rows: &[String], side: usize) -> Result<Array2<u8>> {
    let nbytes = side.div_ceil(8);
    let mut out = Array2::zeros((side, side));
    if rows.len() != side {
        return Err(Error::Format(format!(
            "{} packed rows, expected {side}",
            rows.len()
        )));
    }
    for (r, hex) in rows.iter().enumerate() {
        if hex.len() != 2 * nbytes {
            return Err(Error::Format(format!(
                "packed row {r} has length {}",
                hex.len()
            )));
        }
        for c in 0..side {
            let k = c / 8;
            let byte = u8::from_str_radix(&hex[2 * k..2 * k + 2], 16)
                .map_err(|e| Error::Format(format!("packed row {r}: {e}")))?;
            out[(r, c)] = (byte >> (7 - c % 8)) & 1;
        }
    }
    Ok(out)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheRecord {
    combo: u32,
    word: String,
    front: Vec<String>,
    rear: Vec<String>,
    values: Vec<f64>,
    rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheManifest {
    format: String,
    version: u32,
    cell: CellSpec,
    grid_k: usize,
    shift_step: usize,
    levels: Levels,
    combos: Vec<u32>,
}

fn record_path(dir: &Path, combo: PixelCombo) -> std::path::PathBuf {
    dir.join("combos").join(format!("{combo}.json"))
}

/// Persist the cache as `dir/manifest.json` plus one record per combo under
/// `dir/combos/`.
pub fn write_cache(dir: &Path, cache: &ComboCache) -> Result<()> {
    let manifest = CacheManifest {
        format: CACHE_FORMAT.into(),
        version: FORMAT_VERSION,
        cell: cache.cell,
        grid_k: cache.view.grid_k,
        shift_step: cache.view.shift_step,
        levels: cache.levels,
        combos: cache.entries.keys().copied().collect(),
    };
    write_bytes(&dir.join("manifest.json"), to_json(&manifest)?.as_bytes())?;
    for e in cache.entries.values() {
        let rec = CacheRecord {
            combo: e.combo.bits,
            word: e.combo.to_string(),
            front: e.front.pixels().rows().into_iter().map(pack_row).collect(),
            rear: e.rear.pixels().rows().into_iter().map(pack_row).collect(),
            values: e.values.clone(),
            rms: e.rms,
        };
        write_bytes(&record_path(dir, e.combo), to_json(&rec)?.as_bytes())?;
    }
    Ok(())
}

pub fn read_cache(dir: &Path) -> Result<ComboCache> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: CacheManifest = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    if m.format != CACHE_FORMAT || m.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported cache format {} v{}",
            m.format, m.version
        )));
    }
    let view = ViewSpec::new(m.grid_k, m.shift_step)?;
    let side = m.cell.cell_side();
    let mut cache = ComboCache::new(m.cell, view.clone(), m.levels);
    for bits in m.combos {
        let combo = PixelCombo::new(bits, view.count())?;
        let p = record_path(dir, combo);
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let rec: CacheRecord = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
        if rec.combo != bits {
            return Err(Error::Format(format!(
                "{} holds combo {}",
                p.display(),
                rec.combo
            )));
        }
        cache.insert(CacheEntry {
            combo,
            front: BinaryLayer::new(unpack_rows(&rec.front, side)?, LayerRole::Front)?,
            rear: BinaryLayer::new(unpack_rows(&rec.rear, side)?, LayerRole::Rear)?,
            values: rec.values,
            rms: rec.rms,
        })?;
    }
    Ok(cache)
}

/// `iteration,objective,rms` rows.
pub fn trace_csv(trace: &WnmfTrace) -> String {
    let mut out = String::from("iteration,objective,rms\n");
    for (i, (o, r)) in trace.objective.iter().zip(&trace.rms).enumerate() {
        let _ = writeln!(out, "{i},{o:e},{r:e}");
    }
    out
}

/// Per-combo RMS table: `combo,word,rms,view_1,...,view_k`.
pub fn combo_table_csv(cache: &ComboCache) -> String {
    let k = cache.view.count();
    let mut out = String::from("combo,word,rms");
    for i in 1..=k {
        let _ = write!(out, ",view_{i}");
    }
    out.push('\n');
    for e in cache.entries.values() {
        let _ = write!(out, "{},{},{:.6}", e.combo.bits, e.combo, e.rms);
        for v in &e.values {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}
