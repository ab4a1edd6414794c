//! Budget-exact patch codecs, one per resolution level.
//!
//! Intermediate levels keep a zigzag prefix of each channel's DCT
//! coefficients. Level `l` with budget `b` keeps `b / 3` coefficients per
//! channel, so every level retains a superset of the level below it. The top
//! level carries raw pixels followed by zero padding up to its budget.
//!
//! Payload layout for intermediate levels: channels in R, G, B order; per
//! channel one DC byte (`round(c / 8) + 128`) followed by `k - 1` signed AC
//! bytes (`round(c / 2)`), both saturating; see [`round_snapped`] for the
//! rounding rule, which also applies to reconstructed pixels. Top level: channel-major raw
//! pixels, row-major within a channel, then the zero pad.

mod dct;
mod zigzag;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::RateTable;

pub use dct::Dct2d;
pub use zigzag::zigzag_order;

pub const CHANNELS: usize = 3;
pub const DEFAULT_PATCH_SIZE: usize = 8;
pub const DC_STEP: f64 = 8.0;
pub const AC_STEP: f64 = 2.0;
pub const PIXEL_OFFSET: f64 = 128.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("level 0 patches carry no payload")]
    LevelZero,
    #[error("level {level} is not in a {levels}-level table")]
    UnknownLevel { level: u8, levels: usize },
    #[error("patch side {got} does not match codec side {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("payload for level {level} must be {expected} bytes, got {got}")]
    PayloadLength {
        level: u8,
        expected: usize,
        got: usize,
    },
    #[error("nonzero padding in top-level payload")]
    NonZeroPadding,
    #[error("invalid patch: {0}")]
    InvalidPatch(String),
    #[error("rate table incompatible with {side}x{side} patches: {reason}")]
    IncompatibleTable { side: usize, reason: String },
}

/// A `p x p` RGB patch stored channel-major, row-major within a channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    side: usize,
    pixels: Vec<u8>,
}

impl Patch {
    pub fn new(side: usize, pixels: Vec<u8>) -> Result<Self, CodecError> {
        if side == 0 {
            return Err(CodecError::InvalidPatch("side must be positive".into()));
        }
        if pixels.len() != CHANNELS * side * side {
            return Err(CodecError::InvalidPatch(format!(
                "expected {} pixels, got {}",
                CHANNELS * side * side,
                pixels.len()
            )));
        }
        Ok(Self { side, pixels })
    }

    pub fn filled(side: usize, value: u8) -> Self {
        Self {
            side,
            pixels: vec![value; CHANNELS * side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn channel(&self, c: usize) -> &[u8] {
        let n = self.side * self.side;
        &self.pixels[c * n..(c + 1) * n]
    }

    /// Sum of squared pixel differences.
    pub fn squared_error(&self, other: &Patch) -> u64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| {
                let d = a as i64 - b as i64;
                (d * d) as u64
            })
            .sum()
    }

    pub fn mse(&self, other: &Patch) -> f64 {
        self.squared_error(other) as f64 / self.pixels.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedPatch {
    pub level: u8,
    pub payload: Vec<u8>,
}

/// Encoder/decoder pair addressed by resolution level.
///
/// Implementations must produce payloads of exactly the table's byte budget
/// for the requested level.
pub trait PatchCodec {
    fn table(&self) -> &RateTable;
    fn patch_side(&self) -> usize;
    fn encode(&self, patch: &Patch, level: u8) -> Result<EncodedPatch, CodecError>;
    fn decode(&self, encoded: &EncodedPatch) -> Result<Patch, CodecError>;
}

/// Nested truncated-DCT codec with raw passthrough at the top level.
#[derive(Debug, Clone)]
pub struct DctCodec {
    table: RateTable,
    side: usize,
    dct: Dct2d,
    zigzag: Vec<usize>,
}

impl DctCodec {
    pub fn new(side: usize, table: RateTable) -> Result<Self, CodecError> {
        let incompatible = |reason: String| CodecError::IncompatibleTable { side, reason };
        if side == 0 {
            return Err(incompatible("patch side must be positive".into()));
        }
        let coeffs = side * side;
        let raw = CHANNELS * coeffs;
        let top = table.top_level();
        for level in 1..top {
            let b = table.bytes(level) as usize;
            if !b.is_multiple_of(CHANNELS) || b / CHANNELS > coeffs {
                return Err(incompatible(format!(
                    "level {level} budget {b} is not 3 x k with k <= {coeffs}"
                )));
            }
        }
        if (table.top_bytes() as usize) < raw {
            return Err(incompatible(format!(
                "top level budget {} is below the raw patch size {raw}",
                table.top_bytes()
            )));
        }
        Ok(Self {
            table,
            side,
            dct: Dct2d::new(side),
            zigzag: zigzag_order(side),
        })
    }

    /// Coefficients kept per channel at an intermediate level.
    pub fn coefficients_for(&self, level: u8) -> usize {
        self.table.bytes(level) as usize / CHANNELS
    }

    fn check_level(&self, level: u8) -> Result<usize, CodecError> {
        if level == 0 {
            return Err(CodecError::LevelZero);
        }
        self.table
            .try_bytes(level)
            .map(|b| b as usize)
            .ok_or(CodecError::UnknownLevel {
                level,
                levels: self.table.levels(),
            })
    }

    fn raw_len(&self) -> usize {
        CHANNELS * self.side * self.side
    }
}

impl Default for DctCodec {
    fn default() -> Self {
        Self::new(DEFAULT_PATCH_SIZE, RateTable::default()).expect("default table fits 8x8")
    }
}

impl PatchCodec for DctCodec {
    fn table(&self) -> &RateTable {
        &self.table
    }

    fn patch_side(&self) -> usize {
        self.side
    }

    fn encode(&self, patch: &Patch, level: u8) -> Result<EncodedPatch, CodecError> {
        let budget = self.check_level(level)?;
        if patch.side() != self.side {
            return Err(CodecError::DimensionMismatch {
                expected: self.side,
                got: patch.side(),
            });
        }
        let mut payload = Vec::with_capacity(budget);
        if level == self.table.top_level() {
            payload.extend_from_slice(patch.pixels());
            payload.resize(budget, 0);
        } else {
            let k = self.coefficients_for(level);
            for c in 0..CHANNELS {
                let channel = patch.channel(c);
                let block: Vec<f64> = channel.iter().map(|&v| v as f64 - PIXEL_OFFSET).collect();
                let mut coeffs = self.dct.forward(&block);
                // DC is exactly sum / side
                let sum: i64 = channel.iter().map(|&v| v as i64 - 128).sum();
                coeffs[0] = sum as f64 / self.side as f64;
                for (i, &pos) in self.zigzag[..k].iter().enumerate() {
                    payload.push(if i == 0 {
                        quantize_dc(coeffs[pos])
                    } else {
                        quantize_ac(coeffs[pos]) as u8
                    });
                }
            }
        }
        debug_assert_eq!(payload.len(), budget);
        Ok(EncodedPatch { level, payload })
    }

    fn decode(&self, encoded: &EncodedPatch) -> Result<Patch, CodecError> {
        let level = encoded.level;
        let budget = self.check_level(level)?;
        if encoded.payload.len() != budget {
            return Err(CodecError::PayloadLength {
                level,
                expected: budget,
                got: encoded.payload.len(),
            });
        }
        if level == self.table.top_level() {
            let (raw, pad) = encoded.payload.split_at(self.raw_len());
            if pad.iter().any(|&b| b != 0) {
                return Err(CodecError::NonZeroPadding);
            }
            return Patch::new(self.side, raw.to_vec());
        }
        let k = self.coefficients_for(level);
        let n = self.side * self.side;
        let mut pixels = Vec::with_capacity(self.raw_len());
        for chunk in encoded.payload.chunks_exact(k) {
            let mut coeffs = vec![0.0; n];
            for (i, &pos) in self.zigzag[..k].iter().enumerate() {
                coeffs[pos] = if i == 0 {
                    dequantize_dc(chunk[0])
                } else {
                    dequantize_ac(chunk[i] as i8)
                };
            }
            pixels.extend(self.dct.inverse(&coeffs).into_iter().map(to_pixel));
        }
        Patch::new(self.side, pixels)
    }
}

/// Encodes with the default-configured [`DctCodec`] for `table` and 8x8 patches.
pub fn encode_patch(
    patch: &Patch,
    level: u8,
    table: &RateTable,
) -> Result<EncodedPatch, CodecError> {
    DctCodec::new(patch.side(), table.clone())?.encode(patch, level)
}

pub fn decode_patch(
    encoded: &EncodedPatch,
    side: usize,
    table: &RateTable,
) -> Result<Patch, CodecError> {
    DctCodec::new(side, table.clone())?.decode(encoded)
}

/// Rounds half away from zero after snapping to a 2^-20 grid, so anything
/// within 2^-21 of a half counts as a tie. Many coefficients and pixels land
/// exactly on halves; the snap keeps their rounding independent of
/// summation order.
pub fn round_snapped(x: f64) -> f64 {
    const GRID: f64 = (1u64 << 20) as f64;
    ((x * GRID).round() / GRID).round()
}

pub(crate) fn quantize_dc(c: f64) -> u8 {
    (round_snapped(c / DC_STEP) + PIXEL_OFFSET).clamp(0.0, 255.0) as u8
}

pub(crate) fn quantize_ac(c: f64) -> i8 {
    round_snapped(c / AC_STEP).clamp(-128.0, 127.0) as i8
}

pub(crate) fn dequantize_dc(q: u8) -> f64 {
    (q as f64 - PIXEL_OFFSET) * DC_STEP
}

pub(crate) fn dequantize_ac(q: i8) -> f64 {
    q as f64 * AC_STEP
}

fn to_pixel(v: f64) -> u8 {
    round_snapped(v + PIXEL_OFFSET).clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_patch(rng: &mut impl Rng) -> Patch {
        Patch::new(8, (0..192).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn payload_lengths_match_budgets() {
        let codec = DctCodec::default();
        let patch = Patch::filled(8, 77);
        for (level, len) in [(1, 12), (2, 24), (3, 48), (4, 196)] {
            assert_eq!(codec.encode(&patch, level).unwrap().payload.len(), len);
        }
        assert_eq!(codec.coefficients_for(1), 4);
        assert_eq!(codec.coefficients_for(3), 16);
    }

    #[test]
    fn gray_patch_is_dc_only() {
        let codec = DctCodec::default();
        let gray = Patch::filled(8, 128);
        let enc = codec.encode(&gray, 1).unwrap();
        assert_eq!(enc.payload, vec![128, 0, 0, 0, 128, 0, 0, 0, 128, 0, 0, 0]);
        assert_eq!(codec.decode(&enc).unwrap(), gray);
    }

    #[test]
    fn constant_patches_survive_level_one() {
        let codec = DctCodec::default();
        for v in [0u8, 1, 64, 200, 255] {
            let p = Patch::filled(8, v);
            assert_eq!(codec.decode(&codec.encode(&p, 1).unwrap()).unwrap(), p);
        }
    }

    #[test]
    fn top_level_is_lossless() {
        let codec = DctCodec::default();
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let p = random_patch(&mut rng);
            let enc = codec.encode(&p, 4).unwrap();
            assert_eq!(&enc.payload[..192], p.pixels());
            assert_eq!(&enc.payload[192..], &[0, 0, 0, 0]);
            assert_eq!(codec.decode(&enc).unwrap(), p);
        }
    }

    #[test]
    fn error_paths() {
        let codec = DctCodec::default();
        let p = Patch::filled(8, 1);
        assert_eq!(codec.encode(&p, 0), Err(CodecError::LevelZero));
        assert!(matches!(
            codec.encode(&p, 5),
            Err(CodecError::UnknownLevel { level: 5, .. })
        ));
        assert!(matches!(
            codec.encode(&Patch::filled(4, 1), 1),
            Err(CodecError::DimensionMismatch { .. })
        ));
        let short = EncodedPatch {
            level: 2,
            payload: vec![0; 23],
        };
        assert!(matches!(
            codec.decode(&short),
            Err(CodecError::PayloadLength { .. })
        ));
        let mut padded = codec.encode(&p, 4).unwrap();
        padded.payload[195] = 1;
        assert_eq!(codec.decode(&padded), Err(CodecError::NonZeroPadding));
        assert!(Patch::new(8, vec![0; 10]).is_err());
    }

    #[test]
    fn incompatible_tables() {
        let t = RateTable::new(vec![0, 10, 196]).unwrap();
        assert!(DctCodec::new(8, t).is_err());
        let t = RateTable::new(vec![0, 12, 100]).unwrap();
        assert!(DctCodec::new(8, t).is_err());
        let t = RateTable::new(vec![0, 3, 12]).unwrap();
        assert!(DctCodec::new(2, t).is_ok());
    }

    #[test]
    fn ac_saturation_is_clamped() {
        assert_eq!(quantize_ac(1000.0), 127);
        assert_eq!(quantize_ac(-1000.0), -128);
        assert_eq!(quantize_dc(2040.0), 255);
        assert_eq!(quantize_dc(-1024.0), 0);
        // a hard vertical edge drives the first AC coefficient past i8 range
        let mut px = vec![0u8; 192];
        for c in 0..3 {
            for y in 0..8 {
                for x in 4..8 {
                    px[c * 64 + y * 8 + x] = 255;
                }
            }
        }
        let p = Patch::new(8, px).unwrap();
        let codec = DctCodec::default();
        let enc = codec.encode(&p, 1).unwrap();
        assert_eq!(enc.payload[1] as i8, -128);
        assert!(codec.decode(&enc).is_ok());
    }

    #[test]
    fn monotone_on_random_patches() {
        let codec = DctCodec::default();
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = random_patch(&mut rng);
            let errs: Vec<u64> = (1..=4)
                .map(|l| p.squared_error(&codec.decode(&codec.encode(&p, l).unwrap()).unwrap()))
                .collect();
            assert!(errs.windows(2).all(|w| w[0] >= w[1]), "{errs:?}");
            assert_eq!(errs[3], 0);
        }
    }
}
