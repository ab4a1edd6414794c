//! Per-patch attention grids: head aggregation, the ATTN file format, and
//! synthetic attention fields used by tests and the experiment runner.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magic bytes at the start of every ATTN file.
pub const ATTN_MAGIC: [u8; 4] = *b"ATTN";
pub const ATTN_VERSION: u8 = 1;
const ATTN_HEADER_LEN: usize = 4 + 1 + 2 + 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttnError {
    #[error("grid dimensions {rows}x{cols} are invalid")]
    InvalidDims { rows: usize, cols: usize },
    #[error("expected {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("attention value at index {index} is negative or non-finite: {value}")]
    BadValue { index: usize, value: f64 },
    #[error("no attention heads supplied")]
    NoHeads,
    #[error("bad ATTN magic")]
    BadMagic,
    #[error("unsupported ATTN version {0}")]
    BadVersion(u8),
    #[error("ATTN payload truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("ATTN trailing data: {0} extra bytes")]
    TrailingBytes(usize),
    #[error("grid dimensions {rows}x{cols} do not fit the ATTN header")]
    DimensionOverflow { rows: usize, cols: usize },
    #[error("non-finite value in ATTN payload at index {0}")]
    NonFinite(usize),
    #[error("gaussian sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("cell ({row}, {col}) is outside a {rows}x{cols} grid")]
    CellOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
}

/// Non-negative relevance score per patch, row-major over a `rows x cols` grid.
///
/// `rows` counts patches vertically (image height / patch size) and `cols`
/// horizontally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl AttentionGrid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, AttnError> {
        if rows == 0 || cols == 0 {
            return Err(AttnError::InvalidDims { rows, cols });
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or(AttnError::InvalidDims { rows, cols })?;
        if values.len() != expected {
            return Err(AttnError::DimensionMismatch {
                expected,
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(AttnError::BadValue { index, value });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn uniform(rows: usize, cols: usize) -> Result<Self, AttnError> {
        synth_attention(SynthKind::Uniform, rows, cols, 0)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Total patch count.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Multiplies every cell by `factor`. `factor` must be positive and finite.
    pub fn scaled(&self, factor: f64) -> Result<Self, AttnError> {
        Self::new(
            self.rows,
            self.cols,
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    /// Grid values rounded through `f32`, i.e. what an ATTN file stores.
    pub fn to_f32_precision(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| v as f32 as f64).collect(),
        }
    }
}

/// CLS rows of every head's attention matrix (length `P + 1`, CLS->CLS first).
#[derive(Debug, Clone, PartialEq)]
pub struct HeadAttentionRows {
    row_len: usize,
    rows: Vec<Vec<f64>>,
}

impl HeadAttentionRows {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, AttnError> {
        let first = rows.first().ok_or(AttnError::NoHeads)?;
        let row_len = first.len();
        for (h, row) in rows.iter().enumerate() {
            if row.len() != row_len {
                return Err(AttnError::DimensionMismatch {
                    expected: row_len,
                    actual: row.len(),
                });
            }
            if let Some((i, &value)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v < 0.0)
            {
                return Err(AttnError::BadValue {
                    index: h * row_len + i,
                    value,
                });
            }
        }
        Ok(Self { row_len, rows })
    }

    pub fn n_heads(&self) -> usize {
        self.rows.len()
    }

    pub fn row_len(&self) -> usize {
        self.row_len
    }

    pub fn head(&self, h: usize) -> &[f64] {
        &self.rows[h]
    }
}

/// Averages the heads' CLS rows into one grid.
///
/// Index 0 (CLS attending to itself) is dropped; the remaining entries are
/// not renormalized.
pub fn aggregate(
    heads: &HeadAttentionRows,
    rows: usize,
    cols: usize,
) -> Result<AttentionGrid, AttnError> {
    let patches = rows
        .checked_mul(cols)
        .ok_or(AttnError::InvalidDims { rows, cols })?;
    if patches == 0 {
        return Err(AttnError::InvalidDims { rows, cols });
    }
    if heads.row_len() != patches + 1 {
        return Err(AttnError::DimensionMismatch {
            expected: patches + 1,
            actual: heads.row_len(),
        });
    }
    let n = heads.n_heads() as f64;
    let values = (1..=patches)
        .map(|j| {
            let column = heads.rows.iter().map(|row| row[j]);
            let lo = column.clone().fold(f64::INFINITY, f64::min);
            let hi = column.clone().fold(f64::NEG_INFINITY, f64::max);
            (column.sum::<f64>() / n).clamp(lo, hi)
        })
        .collect();
    AttentionGrid::new(rows, cols, values)
}

pub fn write_attn_file(grid: &AttentionGrid) -> Result<Vec<u8>, AttnError> {
    let overflow = AttnError::DimensionOverflow {
        rows: grid.rows,
        cols: grid.cols,
    };
    let rows = u16::try_from(grid.rows).map_err(|_| overflow.clone())?;
    let cols = u16::try_from(grid.cols).map_err(|_| overflow)?;
    let mut out = Vec::with_capacity(ATTN_HEADER_LEN + 4 * grid.len());
    out.extend_from_slice(&ATTN_MAGIC);
    out.push(ATTN_VERSION);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for (i, &v) in grid.values.iter().enumerate() {
        let v = v as f32;
        if !v.is_finite() {
            return Err(AttnError::NonFinite(i));
        }
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn read_attn_file(bytes: &[u8]) -> Result<AttentionGrid, AttnError> {
    if bytes.len() < 4 || bytes[..4] != ATTN_MAGIC {
        return Err(AttnError::BadMagic);
    }
    if bytes.len() < ATTN_HEADER_LEN {
        return Err(AttnError::Truncated {
            needed: ATTN_HEADER_LEN,
            available: bytes.len(),
        });
    }
    if bytes[4] != ATTN_VERSION {
        return Err(AttnError::BadVersion(bytes[4]));
    }
    let rows = u16::from_le_bytes([bytes[5], bytes[6]]) as usize;
    let cols = u16::from_le_bytes([bytes[7], bytes[8]]) as usize;
    if rows == 0 || cols == 0 {
        return Err(AttnError::InvalidDims { rows, cols });
    }
    let needed = ATTN_HEADER_LEN + 4 * rows * cols;
    if bytes.len() < needed {
        return Err(AttnError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(AttnError::TrailingBytes(bytes.len() - needed));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for (i, chunk) in bytes[ATTN_HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(AttnError::NonFinite(i));
        }
        values.push(v as f64);
    }
    AttentionGrid::new(rows, cols, values)
}

/// Shape of a synthetic attention field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthKind {
    /// All cells equal, summing to 1.
    Uniform,
    /// 1.0 at `(row, col)`, 0 elsewhere.
    Dirac { row: usize, col: usize },
    /// Unnormalized Gaussian over cell centers.
    GaussianBlob {
        center_row: f64,
        center_col: f64,
        sigma: f64,
    },
    /// Gaussian blob at a seeded random position plus a small seeded
    /// background floor; what the synthetic corpus uses.
    RandomBlob,
}

pub fn synth_attention(
    kind: SynthKind,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<AttentionGrid, AttnError> {
    if rows == 0 || cols == 0 || rows.checked_mul(cols).is_none() {
        return Err(AttnError::InvalidDims { rows, cols });
    }
    let n = rows * cols;
    let values = match kind {
        SynthKind::Uniform => vec![1.0 / n as f64; n],
        SynthKind::Dirac { row, col } => {
            if row >= rows || col >= cols {
                return Err(AttnError::CellOutOfRange {
                    row,
                    col,
                    rows,
                    cols,
                });
            }
            let mut v = vec![0.0; n];
            v[row * cols + col] = 1.0;
            v
        }
        SynthKind::GaussianBlob {
            center_row,
            center_col,
            sigma,
        } => gaussian(rows, cols, center_row, center_col, sigma)?,
        SynthKind::RandomBlob => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cr = unit_f64(&mut rng) * (rows as f64 - 1.0);
            let cc = unit_f64(&mut rng) * (cols as f64 - 1.0);
            let sigma = 0.5 + unit_f64(&mut rng) * 0.25 * rows.max(cols) as f64;
            let mut v = gaussian(rows, cols, cr, cc, sigma)?;
            for x in &mut v {
                *x += 0.02 * unit_f64(&mut rng);
            }
            v
        }
    };
    AttentionGrid::new(rows, cols, values)
}

fn gaussian(
    rows: usize,
    cols: usize,
    center_row: f64,
    center_col: f64,
    sigma: f64,
) -> Result<Vec<f64>, AttnError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(AttnError::BadSigma(sigma));
    }
    let denom = 2.0 * sigma * sigma;
    Ok((0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| {
            let dr = r as f64 - center_row;
            let dc = c as f64 - center_col;
            (-(dr * dr + dc * dc) / denom).exp()
        })
        .collect())
}

/// Uniform `[0, 1)` double from the top 53 bits of the next word.
pub(crate) fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
