//! Per-block available-rate traces and the TRACE file format.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded via
//! `SeedableRng::seed_from_u64`. Uniform doubles take the top 53 bits of
//! `next_u64` scaled by 2^-53. Exponential fades use the inverse CDF
//! `-ln(1 - u)`. Integer draws in `[lo, hi]` use `lo + floor(u * (hi - lo + 1))`.
//! The channel never corrupts bytes: a block carries exactly what it grants.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attn::unit_f64;

pub const TRACE_MAGIC: [u8; 4] = *b"RTRC";
pub const TRACE_VERSION: u8 = 1;
const TRACE_HEADER_LEN: usize = 4 + 1 + 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel parameter: {0}")]
    InvalidParameter(String),
    #[error("trace must contain at least one block")]
    EmptyTrace,
    #[error("bad TRACE magic")]
    BadMagic,
    #[error("unsupported TRACE version {0}")]
    BadVersion(u8),
    #[error("TRACE truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("TRACE trailing data: {0} extra bytes")]
    TrailingBytes(usize),
    #[error("trace too long for the TRACE format: {0} blocks")]
    TooLong(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    Constant {
        rate: u32,
    },
    /// Uniform integer rate in `[lo, hi]`, independent per block.
    IidUniform {
        lo: u32,
        hi: u32,
    },
    /// Two-state Markov chain starting in the good state.
    GilbertElliott {
        p_gb: f64,
        p_bg: f64,
        r_good: u32,
        r_bad: u32,
    },
    /// `floor(bandwidth * log2(1 + mean_snr * g) / 8)` bytes per block with
    /// `g ~ Exp(1)` (Rayleigh power fade).
    RayleighCapacity {
        bandwidth_symbols: f64,
        mean_snr: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub kind: ChannelKind,
    pub seed: u64,
}

impl ChannelModel {
    pub fn new(kind: ChannelKind, seed: u64) -> Result<Self, ChannelError> {
        let model = Self { kind, seed };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: String| Err(ChannelError::InvalidParameter(m));
        match self.kind {
            ChannelKind::Constant { .. } => Ok(()),
            ChannelKind::IidUniform { lo, hi } if lo > hi => bad(format!("lo {lo} > hi {hi}")),
            ChannelKind::IidUniform { .. } => Ok(()),
            ChannelKind::GilbertElliott { p_gb, p_bg, .. } => {
                for (name, p) in [("p_gb", p_gb), ("p_bg", p_bg)] {
                    if !(0.0..=1.0).contains(&p) {
                        return bad(format!("{name} = {p} is not a probability"));
                    }
                }
                Ok(())
            }
            ChannelKind::RayleighCapacity {
                bandwidth_symbols,
                mean_snr,
            } => {
                if !(bandwidth_symbols > 0.0 && bandwidth_symbols.is_finite()) {
                    return bad(format!("bandwidth {bandwidth_symbols} must be positive"));
                }
                if !(mean_snr > 0.0 && mean_snr.is_finite()) {
                    return bad(format!("mean_snr {mean_snr} must be positive"));
                }
                Ok(())
            }
        }
    }
}

/// Non-empty sequence of per-block byte budgets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateTrace {
    rates: Vec<u32>,
}

impl RateTrace {
    pub fn new(rates: Vec<u32>) -> Result<Self, ChannelError> {
        if rates.is_empty() {
            return Err(ChannelError::EmptyTrace);
        }
        Ok(Self { rates })
    }

    pub fn rates(&self) -> &[u32] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Rate for block `i`, cycling when the trace is shorter.
    pub fn cycled(&self, i: usize) -> u32 {
        self.rates[i % self.rates.len()]
    }
}

pub fn generate_trace(model: &ChannelModel, n_blocks: usize) -> Result<RateTrace, ChannelError> {
    model.validate()?;
    if n_blocks == 0 {
        return Err(ChannelError::EmptyTrace);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let rates = match model.kind {
        ChannelKind::Constant { rate } => vec![rate; n_blocks],
        ChannelKind::IidUniform { lo, hi } => {
            let span = (hi - lo) as f64 + 1.0;
            (0..n_blocks)
                .map(|_| lo + (unit_f64(&mut rng) * span).floor().min(span - 1.0) as u32)
                .collect()
        }
        ChannelKind::GilbertElliott {
            p_gb,
            p_bg,
            r_good,
            r_bad,
        } => {
            let mut good = true;
            (0..n_blocks)
                .map(|_| {
                    let rate = if good { r_good } else { r_bad };
                    let u = unit_f64(&mut rng);
                    good = if good { u >= p_gb } else { u < p_bg };
                    rate
                })
                .collect()
        }
        ChannelKind::RayleighCapacity {
            bandwidth_symbols,
            mean_snr,
        } => (0..n_blocks)
            .map(|_| {
                let g = -(1.0 - unit_f64(&mut rng)).ln();
                capacity_bytes(bandwidth_symbols, mean_snr * g)
            })
            .collect(),
    };
    RateTrace::new(rates)
}

/// Bytes a block of `bandwidth_symbols` carries at the given SNR.
pub fn capacity_bytes(bandwidth_symbols: f64, snr: f64) -> u32 {
    let bytes = (bandwidth_symbols * (1.0 + snr).log2() / 8.0).floor();
    bytes.clamp(0.0, u32::MAX as f64) as u32
}

pub fn write_trace_file(trace: &RateTrace) -> Result<Vec<u8>, ChannelError> {
    let n = u32::try_from(trace.len()).map_err(|_| ChannelError::TooLong(trace.len()))?;
    let mut out = Vec::with_capacity(TRACE_HEADER_LEN + 4 * trace.len());
    out.extend_from_slice(&TRACE_MAGIC);
    out.push(TRACE_VERSION);
    out.extend_from_slice(&n.to_le_bytes());
    for r in &trace.rates {
        out.extend_from_slice(&r.to_le_bytes());
    }
    Ok(out)
}

pub fn read_trace_file(bytes: &[u8]) -> Result<RateTrace, ChannelError> {
    if bytes.len() < 4 || bytes[..4] != TRACE_MAGIC {
        return Err(ChannelError::BadMagic);
    }
    if bytes.len() < TRACE_HEADER_LEN {
        return Err(ChannelError::Truncated {
            needed: TRACE_HEADER_LEN,
            available: bytes.len(),
        });
    }
    if bytes[4] != TRACE_VERSION {
        return Err(ChannelError::BadVersion(bytes[4]));
    }
    let n = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) as usize;
    if n == 0 {
        return Err(ChannelError::EmptyTrace);
    }
    let needed = n
        .checked_mul(4)
        .and_then(|b| b.checked_add(TRACE_HEADER_LEN))
        .unwrap_or(usize::MAX);
    if bytes.len() < needed {
        return Err(ChannelError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(ChannelError::TrailingBytes(bytes.len() - needed));
    }
    let rates = bytes[TRACE_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    RateTrace::new(rates)
}
