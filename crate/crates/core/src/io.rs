//! On-disk formats.
//!
//! Label-like grids are binary PGM (`P5`), maxval 65535, 16-bit big-endian
//! samples. Float fields are SEF1: an ASCII header line
//! `SEF1 <height> <width> <channels>\n` followed by row-major,
//! channel-interleaved little-endian `f32` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{DirMap, Field, Grid, LabelMap, SemanticClass, SemanticMask};

pub fn write_pgm16<W: Write>(mut out: W, grid: &Grid<u16>) -> Result<()> {
    write!(out, "P5\n{} {}\n65535\n", grid.width(), grid.height())?;
    let mut buf = Vec::with_capacity(grid.len() * 2);
    for &v in grid.as_slice() {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Format("non-ASCII header".into()))
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| Error::Format(format!("expected a number, found {t:?}")))
    }
}

/// Reads a binary PGM. 8-bit files (maxval < 256) are accepted and widened.
pub fn read_pgm<R: Read>(mut input: R) -> Result<Grid<u16>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut hdr = Header {
        bytes: &bytes,
        pos: 0,
    };
    let magic = hdr.token()?;
    if magic != "P5" {
        return Err(Error::Format(format!("expected P5 magic, found {magic:?}")));
    }
    let width = hdr.number()?;
    let height = hdr.number()?;
    let maxval = hdr.number()?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("invalid maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if hdr.pos >= bytes.len() || !bytes[hdr.pos].is_ascii_whitespace() {
        return Err(Error::Format("missing raster separator".into()));
    }
    let raster = &bytes[hdr.pos + 1..];
    let n = width * height;
    let data: Vec<u16> = if maxval < 256 {
        if raster.len() != n {
            return Err(Error::Format(format!(
                "expected {n} raster bytes, found {}",
                raster.len()
            )));
        }
        raster.iter().map(|&b| b as u16).collect()
    } else {
        if raster.len() != 2 * n {
            return Err(Error::Format(format!(
                "expected {} raster bytes, found {}",
                2 * n,
                raster.len()
            )));
        }
        raster
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    };
    if data.iter().any(|&v| v as usize > maxval) {
        return Err(Error::Format("sample exceeds maxval".into()));
    }
    Grid::from_vec(height, width, data)
}

pub fn label_map_to_pgm(labels: &LabelMap) -> Result<Grid<u16>> {
    if labels.max_label() > u16::MAX as u32 {
        return Err(Error::Format(format!(
            "label {} does not fit a 16-bit PGM",
            labels.max_label()
        )));
    }
    Ok(labels.map(|v| v as u16))
}

pub fn write_label_map<W: Write>(out: W, labels: &LabelMap) -> Result<()> {
    write_pgm16(out, &label_map_to_pgm(labels)?)
}

pub fn read_label_map<R: Read>(input: R) -> Result<LabelMap> {
    Ok(read_pgm(input)?.map(u32::from))
}

pub fn write_semantic<W: Write>(out: W, mask: &SemanticMask) -> Result<()> {
    write_pgm16(out, &mask.map(|c| c as u16))
}

pub fn read_semantic<R: Read>(input: R) -> Result<SemanticMask> {
    let raw = read_pgm(input)?;
    let classes: Option<Vec<SemanticClass>> = raw
        .as_slice()
        .iter()
        .map(|&v| SemanticClass::from_index(v as u32))
        .collect();
    let classes = classes.ok_or_else(|| Error::Format("semantic mask values must be 0, 1 or 2".into()))?;
    Grid::from_vec(raw.height(), raw.width(), classes)
}

pub fn write_dir_map<W: Write>(out: W, dir: &DirMap) -> Result<()> {
    write_pgm16(out, dir)
}

pub fn write_sef1<W: Write, T: Float>(mut out: W, field: &Field<T>) -> Result<()> {
    writeln!(
        out,
        "SEF1 {} {} {}",
        field.height(),
        field.width(),
        field.channels()
    )?;
    let mut buf = Vec::with_capacity(field.as_slice().len() * 4);
    for &v in field.as_slice() {
        let v = v
            .to_f32()
            .ok_or_else(|| Error::Format("value not representable as f32".into()))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_sef1<R: Read>(mut input: R) -> Result<Field<f32>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing SEF1 header line".into()))?;
    let header =
        std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("non-ASCII SEF1 header".into()))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 4 || parts[0] != "SEF1" {
        return Err(Error::Format(format!("bad SEF1 header {header:?}")));
    }
    let dim = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Format(format!("bad SEF1 dimension {s:?}")))
    };
    let (h, w, ch) = (dim(parts[1])?, dim(parts[2])?, dim(parts[3])?);
    let payload = &bytes[nl + 1..];
    if payload.len() != h * w * ch * 4 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            h * w * ch * 4,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Field::from_vec(h, w, ch, data)
}

pub fn save_label_map(path: impl AsRef<Path>, labels: &LabelMap) -> Result<()> {
    write_label_map(BufWriter::new(File::create(path)?), labels)
}

pub fn load_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    read_label_map(BufReader::new(File::open(path)?))
}

pub fn save_semantic(path: impl AsRef<Path>, mask: &SemanticMask) -> Result<()> {
    write_semantic(BufWriter::new(File::create(path)?), mask)
}

pub fn load_semantic(path: impl AsRef<Path>) -> Result<SemanticMask> {
    read_semantic(BufReader::new(File::open(path)?))
}

pub fn save_sef1<T: Float>(path: impl AsRef<Path>, field: &Field<T>) -> Result<()> {
    write_sef1(BufWriter::new(File::create(path)?), field)
}

pub fn load_sef1(path: impl AsRef<Path>) -> Result<Field<f32>> {
    read_sef1(BufReader::new(File::open(path)?))
}
