//! Wire format for one transmission block.
//!
//! ```text
//! "SMRF" | version u8 | patch_size u8 | rows u16 | cols u16 | n_levels u8
//! | n_levels x u16 budgets | packed map (3 bits/cell) | payloads | crc32 u32
//! ```
//!
//! Multi-byte integers are little-endian. Map cell `k` occupies bits
//! `[3k, 3k + 3)` of the packed section (bit 0 is the LSB of byte 0); the
//! final partial byte is zero-padded. Payloads follow in row-major order
//! for the nonzero cells only. The CRC-32 (IEEE) covers every byte before it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{RateTable, ResolutionMap, MAX_LEVELS};
use crate::codec::EncodedPatch;

pub const FRAME_MAGIC: [u8; 4] = *b"SMRF";
pub const FRAME_VERSION: u8 = 1;
pub const BITS_PER_CELL: usize = 3;
const FIXED_HEADER_LEN: usize = 4 + 1 + 1 + 2 + 2 + 1;
const CRC_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad frame magic")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    BadVersion(u8),
    #[error("CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("truncated {section}: need {needed} bytes, have {available}")]
    Truncated {
        section: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("inconsistent frame length: {0}")]
    InconsistentLength(String),
    #[error("reserved padding bits set in the resolution map")]
    ReservedBits,
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("map cell {index} has level {level} but the table has {levels} levels")]
    LevelOutOfRange {
        index: usize,
        level: u8,
        levels: usize,
    },
    #[error("payload {index} is for level {got}, map cell wants level {expected}")]
    LevelMismatch { index: usize, expected: u8, got: u8 },
    #[error("payload {index} is {got} bytes, level budget is {expected}")]
    PayloadLength {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("{expected} payloads expected for the nonzero cells, got {got}")]
    PayloadCount { expected: usize, got: usize },
}

/// Decoded contents of a frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub patch_size: u8,
    pub table: RateTable,
    pub map: ResolutionMap,
    /// Payloads of the nonzero cells in row-major order.
    pub payloads: Vec<EncodedPatch>,
}

impl Frame {
    pub fn header_len(n_levels: usize) -> usize {
        FIXED_HEADER_LEN + 2 * n_levels
    }

    pub fn map_len(patches: usize) -> usize {
        (BITS_PER_CELL * patches).div_ceil(8)
    }

    /// Header, map and CRC bytes; everything except payloads.
    pub fn overhead(patches: usize, n_levels: usize) -> usize {
        Self::header_len(n_levels) + Self::map_len(patches) + CRC_LEN
    }

    pub fn payload_len(&self) -> usize {
        self.payloads.iter().map(|p| p.payload.len()).sum()
    }

    pub fn encoded_len(&self) -> usize {
        Self::overhead(self.map.len(), self.table.levels()) + self.payload_len()
    }

    fn validate(&self) -> Result<(), FrameError> {
        if self.patch_size == 0 {
            return Err(FrameError::InvalidHeader("patch size 0".into()));
        }
        for (name, v) in [("rows", self.map.rows()), ("cols", self.map.cols())] {
            if v > u16::MAX as usize {
                return Err(FrameError::InvalidHeader(format!("{name} {v} exceeds u16")));
            }
        }
        if let Some(&b) = self.table.as_slice().iter().find(|&&b| b > u16::MAX as u32) {
            return Err(FrameError::InvalidHeader(format!("budget {b} exceeds u16")));
        }
        let levels = self.table.levels();
        if let Some((index, &level)) = self
            .map
            .levels()
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= levels)
        {
            return Err(FrameError::LevelOutOfRange {
                index,
                level,
                levels,
            });
        }
        let nonzero: Vec<u8> = self
            .map
            .levels()
            .iter()
            .copied()
            .filter(|&l| l > 0)
            .collect();
        if nonzero.len() != self.payloads.len() {
            return Err(FrameError::PayloadCount {
                expected: nonzero.len(),
                got: self.payloads.len(),
            });
        }
        for (index, (&expected, p)) in nonzero.iter().zip(&self.payloads).enumerate() {
            if p.level != expected {
                return Err(FrameError::LevelMismatch {
                    index,
                    expected,
                    got: p.level,
                });
            }
            let budget = self.table.bytes(expected) as usize;
            if p.payload.len() != budget {
                return Err(FrameError::PayloadLength {
                    index,
                    expected: budget,
                    got: p.payload.len(),
                });
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FrameError> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&FRAME_MAGIC);
        out.push(FRAME_VERSION);
        out.push(self.patch_size);
        out.extend_from_slice(&(self.map.rows() as u16).to_le_bytes());
        out.extend_from_slice(&(self.map.cols() as u16).to_le_bytes());
        out.push(self.table.levels() as u8);
        for &b in self.table.as_slice() {
            out.extend_from_slice(&(b as u16).to_le_bytes());
        }
        out.extend_from_slice(&pack_levels(self.map.levels()));
        for p in &self.payloads {
            out.extend_from_slice(&p.payload);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        debug_assert_eq!(out.len(), self.encoded_len());
        Ok(out)
    }
}

pub fn build_frame(
    map: &ResolutionMap,
    encoded: &[EncodedPatch],
    table: &RateTable,
    patch_size: usize,
) -> Result<Vec<u8>, FrameError> {
    let patch_size = u8::try_from(patch_size)
        .map_err(|_| FrameError::InvalidHeader(format!("patch size {patch_size} exceeds u8")))?;
    Frame {
        patch_size,
        table: table.clone(),
        map: map.clone(),
        payloads: encoded.to_vec(),
    }
    .to_bytes()
}

/// Packs 3-bit levels LSB-first.
pub fn pack_levels(levels: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; Frame::map_len(levels.len())];
    for (k, &l) in levels.iter().enumerate() {
        for b in 0..BITS_PER_CELL {
            if l >> b & 1 == 1 {
                let bit = BITS_PER_CELL * k + b;
                out[bit / 8] |= 1 << (bit % 8);
            }
        }
    }
    out
}

/// Inverse of [`pack_levels`]; rejects nonzero padding bits.
pub fn unpack_levels(bytes: &[u8], count: usize) -> Result<Vec<u8>, FrameError> {
    if bytes.len() != Frame::map_len(count) {
        return Err(FrameError::InconsistentLength(format!(
            "map section is {} bytes, {count} cells need {}",
            bytes.len(),
            Frame::map_len(count)
        )));
    }
    let bit = |i: usize| bytes[i / 8] >> (i % 8) & 1;
    let used = BITS_PER_CELL * count;
    if (used..bytes.len() * 8).any(|i| bit(i) == 1) {
        return Err(FrameError::ReservedBits);
    }
    Ok((0..count)
        .map(|k| (0..BITS_PER_CELL).fold(0u8, |acc, b| acc | bit(BITS_PER_CELL * k + b) << b))
        .collect())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8], FrameError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(FrameError::Truncated {
                section,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, section: &'static str) -> Result<u8, FrameError> {
        Ok(self.take(1, section)?[0])
    }

    fn u16(&mut self, section: &'static str) -> Result<u16, FrameError> {
        let b = self.take(2, section)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
}

/// Parses and fully validates a frame. Total over arbitrary input.
///
/// The CRC is checked before any field is interpreted, so any corruption of
/// a well-formed frame surfaces as [`FrameError::CrcMismatch`].
pub fn parse_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    let min = FIXED_HEADER_LEN + CRC_LEN;
    if bytes.len() < min {
        return Err(FrameError::Truncated {
            section: "frame",
            needed: min,
            available: bytes.len(),
        });
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - CRC_LEN);
    let stored = u32::from_le_bytes([crc_bytes[0], crc_bytes[1], crc_bytes[2], crc_bytes[3]]);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(FrameError::CrcMismatch { stored, computed });
    }

    let mut cur = Cursor {
        bytes: body,
        pos: 0,
    };
    if cur.take(4, "magic")? != FRAME_MAGIC {
        return Err(FrameError::BadMagic);
    }
    let version = cur.u8("header")?;
    if version != FRAME_VERSION {
        return Err(FrameError::BadVersion(version));
    }
    let patch_size = cur.u8("header")?;
    let rows = cur.u16("header")? as usize;
    let cols = cur.u16("header")? as usize;
    let n_levels = cur.u8("header")? as usize;
    if patch_size == 0 {
        return Err(FrameError::InvalidHeader("patch size 0".into()));
    }
    if rows == 0 || cols == 0 {
        return Err(FrameError::InvalidHeader(format!("grid {rows}x{cols}")));
    }
    if !(2..=MAX_LEVELS).contains(&n_levels) {
        return Err(FrameError::InvalidHeader(format!("{n_levels} levels")));
    }
    let mut budgets = Vec::with_capacity(n_levels);
    for _ in 0..n_levels {
        budgets.push(cur.u16("rate table")? as u32);
    }
    let table = RateTable::new(budgets).map_err(|e| FrameError::InvalidHeader(e.to_string()))?;

    let patches = rows * cols;
    let packed = cur.take(Frame::map_len(patches), "resolution map")?;
    let levels = unpack_levels(packed, patches)?;
    if let Some((index, &level)) = levels
        .iter()
        .enumerate()
        .find(|(_, &l)| l as usize >= n_levels)
    {
        return Err(FrameError::LevelOutOfRange {
            index,
            level,
            levels: n_levels,
        });
    }
    let map = ResolutionMap::new(rows, cols, levels)
        .map_err(|e| FrameError::InvalidHeader(e.to_string()))?;

    let expected: usize = map.levels().iter().map(|&l| table.bytes(l) as usize).sum();
    let remaining = body.len() - cur.pos;
    if remaining < expected {
        return Err(FrameError::Truncated {
            section: "payloads",
            needed: expected,
            available: remaining,
        });
    }
    if remaining > expected {
        return Err(FrameError::InconsistentLength(format!(
            "{} bytes after the payload section",
            remaining - expected
        )));
    }
    let mut payloads = Vec::new();
    for &level in map.levels().iter().filter(|&&l| l > 0) {
        let payload = cur.take(table.bytes(level) as usize, "payloads")?.to_vec();
        payloads.push(EncodedPatch { level, payload });
    }
    Ok(Frame {
        patch_size,
        table,
        map,
        payloads,
    })
}
