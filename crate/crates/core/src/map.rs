//! Phase maps and their on-disk formats.
//!
//! KPM1 layout (all integers little-endian):
//!
//! ```text
//! 0..4    b"KPM1"
//! 4..8    width  (u32)
//! 8..12   height (u32)
//! 12..    width·height i16 Q1.15 samples, row-major, top-left origin
//! ```
//!
//! 16-bit binary PGM (P5, maxval 65535) maps gray `g` to raw phase `g − 32768`,
//! so gray 0 is −π and gray 65535 is π·(1 − 2⁻¹⁵). The mapping is lossless.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fixedpoint::PhaseQ15;

pub const KPM1_MAGIC: &[u8; 4] = b"KPM1";

/// A row-major grid of Q1.15 phases.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseMap {
    width: usize,
    height: usize,
    data: Vec<PhaseQ15>,
}

impl PhaseMap {
    pub fn new(width: usize, height: usize, data: Vec<PhaseQ15>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} samples", width * height),
                actual: format!("{} samples", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: PhaseQ15) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> PhaseQ15,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Builds a map by encoding real phases; fails on non-finite input.
    pub fn from_radians(width: usize, height: usize, radians: &[f64]) -> Result<Self> {
        let data = radians
            .iter()
            .map(|&t| PhaseQ15::from_radians(t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[PhaseQ15] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [PhaseQ15] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> PhaseQ15 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: PhaseQ15) {
        self.data[y * self.width + x] = value;
    }

    pub fn to_radians(&self) -> Vec<f64> {
        self.data.iter().map(|p| p.to_radians()).collect()
    }

    pub fn write_kpm1<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_kpm1_bytes())?;
        Ok(())
    }

    pub fn to_kpm1_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(12 + 2 * self.data.len());
        buf.extend_from_slice(KPM1_MAGIC);
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for p in &self.data {
            buf.extend_from_slice(&p.raw().to_le_bytes());
        }
        buf
    }

    pub fn read_kpm1<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_kpm1_bytes(&bytes)
    }

    pub fn from_kpm1_bytes(bytes: &[u8]) -> Result<Self> {
        let (width, height, payload) = split_header(bytes, KPM1_MAGIC, "KPM1")?;
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(2))
            .ok_or_else(|| Error::format("KPM1", "dimensions overflow"))?;
        if payload.len() < expected {
            return Err(Error::format(
                "KPM1",
                format!("truncated payload: {} of {} bytes", payload.len(), expected),
            ));
        }
        if payload.len() > expected {
            return Err(Error::format(
                "KPM1",
                format!("{} trailing bytes", payload.len() - expected),
            ));
        }
        let data = payload
            .chunks_exact(2)
            .map(|c| PhaseQ15(i16::from_le_bytes([c[0], c[1]])))
            .collect();
        Self::new(width, height, data).map_err(|e| Error::format("KPM1", e.to_string()))
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut buf = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for p in &self.data {
            let gray = (p.raw() as i32 + 32768) as u16;
            buf.extend_from_slice(&gray.to_be_bytes());
        }
        buf
    }

    /// Parses a binary 16-bit PGM (P5, maxval 65535).
    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = [0usize; 3];
        let magic = next_token(bytes, &mut pos).ok_or_else(|| Error::format("PGM", "empty"))?;
        if magic != b"P5" {
            return Err(Error::format("PGM", "expected binary P5 header"));
        }
        for field in fields.iter_mut() {
            let tok = next_token(bytes, &mut pos)
                .ok_or_else(|| Error::format("PGM", "truncated header"))?;
            *field = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::format("PGM", "non-numeric header field"))?;
        }
        let [width, height, maxval] = fields;
        if maxval != 65535 {
            return Err(Error::format(
                "PGM",
                format!("maxval {maxval} unsupported, expected 65535"),
            ));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let payload = bytes.get(pos..).unwrap_or(&[]);
        let expected = width * height * 2;
        if payload.len() != expected {
            return Err(Error::format(
                "PGM",
                format!("raster is {} bytes, expected {}", payload.len(), expected),
            ));
        }
        let data = payload
            .chunks_exact(2)
            .map(|c| PhaseQ15((u16::from_be_bytes([c[0], c[1]]) as i32 - 32768) as i16))
            .collect();
        Self::new(width, height, data).map_err(|e| Error::format("PGM", e.to_string()))
    }

    /// Reads KPM1 or PGM, chosen by the leading magic bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(KPM1_MAGIC) {
            Self::from_kpm1_bytes(bytes)
        } else if bytes.starts_with(b"P5") {
            Self::from_pgm_bytes(bytes)
        } else {
            Err(Error::format("phase map", "unrecognized magic"))
        }
    }
}

/// Splits a `magic | u32 width | u32 height | payload` buffer.
pub(crate) fn split_header<'a>(
    bytes: &'a [u8],
    magic: &[u8; 4],
    format: &'static str,
) -> Result<(usize, usize, &'a [u8])> {
    if bytes.len() < 12 {
        return Err(Error::format(format, "truncated header"));
    }
    if &bytes[0..4] != magic {
        return Err(Error::format(format, "bad magic"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(Error::format(format, format!("empty map {width}x{height}")));
    }
    Ok((width, height, &bytes[12..]))
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
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
    (start < *pos).then(|| &bytes[start..*pos])
}
