//! Sender and receiver ends of one transmission block, plus the corpus
//! experiment runner built on top of them.

mod corpus;
mod experiment;
mod image;
mod metrics;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{select_resolutions, AllocError, Budget, RateTable, ResolutionMap};
use crate::attn::{AttentionGrid, AttnError};
use crate::channel::ChannelError;
use crate::codec::{CodecError, DctCodec, PatchCodec, DEFAULT_PATCH_SIZE};
use crate::frame::{parse_frame, Frame, FrameError};

pub use self::image::ImageTensor;
pub use corpus::{load_corpus, synth_corpus, synth_item, write_corpus, Corpus, CorpusItem};
pub use experiment::{
    compare_single_vs_multi, rate_sweep, run_experiment, write_csv, write_jsonl, write_sweep_csv,
    ComparisonRow, ExperimentReport, Failure, SweepRow, CSV_HEADER, REPORT_LEVELS,
    SWEEP_CSV_HEADER,
};
pub use metrics::{mse, patch_mses, psnr, weighted_mse};

/// Pixel value used for dropped (level 0) patches.
pub const BLANK_FILL: u8 = 128;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Attn(#[from] AttnError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Report(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub table: RateTable,
    pub patch_size: usize,
    /// Subtract header, map and CRC bytes from the budget before allocating.
    pub deduct_overhead: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            table: RateTable::default(),
            patch_size: DEFAULT_PATCH_SIZE,
            deduct_overhead: false,
        }
    }
}

impl PipelineConfig {
    pub fn codec(&self) -> Result<DctCodec, PipelineError> {
        Ok(DctCodec::new(self.patch_size, self.table.clone())?)
    }

    /// Bytes available to patch payloads out of a block budget `r`.
    pub fn payload_budget(&self, r: u64, patches: usize) -> Budget {
        if self.deduct_overhead {
            Budget(r.saturating_sub(Frame::overhead(patches, self.table.levels()) as u64))
        } else {
            Budget(r)
        }
    }
}

fn check_grid(
    image: &ImageTensor,
    grid_dims: (usize, usize),
    p: usize,
) -> Result<(), PipelineError> {
    let dims = image.patch_grid(p)?;
    if dims != grid_dims {
        return Err(PipelineError::DimensionMismatch(format!(
            "image has a {}x{} patch grid, attention is {}x{}",
            dims.0, dims.1, grid_dims.0, grid_dims.1
        )));
    }
    Ok(())
}

/// Allocates levels for `image` under block budget `r` and builds the frame.
pub fn transmit(
    image: &ImageTensor,
    grid: &AttentionGrid,
    r: u64,
    config: &PipelineConfig,
) -> Result<Vec<u8>, PipelineError> {
    check_grid(image, (grid.rows(), grid.cols()), config.patch_size)?;
    let budget = config.payload_budget(r, grid.len());
    let map = select_resolutions(grid, budget, &config.table)?;
    transmit_map(image, &map, config)
}

/// Encodes `image` with an already chosen resolution map.
pub fn transmit_map(
    image: &ImageTensor,
    map: &ResolutionMap,
    config: &PipelineConfig,
) -> Result<Vec<u8>, PipelineError> {
    let p = config.patch_size;
    check_grid(image, (map.rows(), map.cols()), p)?;
    map.validate(&config.table)?;
    let codec = config.codec()?;
    let mut payloads = Vec::new();
    for row in 0..map.rows() {
        for col in 0..map.cols() {
            let level = map.get(row, col);
            if level > 0 {
                payloads.push(codec.encode(&image.patch(p, row, col), level)?);
            }
        }
    }
    Ok(crate::frame::build_frame(map, &payloads, &config.table, p)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    /// `None` when the reconstruction is exact (infinite PSNR).
    pub psnr: Option<f64>,
    pub wmse: f64,
}

impl Metrics {
    pub fn compute(
        original: &ImageTensor,
        reconstruction: &ImageTensor,
        grid: &AttentionGrid,
    ) -> Result<Self, PipelineError> {
        let mse = mse(original, reconstruction)?;
        let p = psnr(mse);
        Ok(Self {
            mse,
            psnr: p.is_finite().then_some(p),
            wmse: weighted_mse(original, reconstruction, grid)?,
        })
    }

    pub fn is_exact(&self) -> bool {
        self.psnr.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Reception {
    pub image: ImageTensor,
    pub map: ResolutionMap,
    pub table: RateTable,
    pub payload_bytes: usize,
    pub frame_bytes: usize,
    pub metrics: Option<Metrics>,
}

/// Parses a frame and reconstructs the image; dropped patches are filled
/// with [`BLANK_FILL`]. Metrics are computed when the original image and
/// its attention grid are supplied.
pub fn receive(
    frame: &[u8],
    side_info: Option<(&ImageTensor, &AttentionGrid)>,
) -> Result<Reception, PipelineError> {
    let parsed = parse_frame(frame)?;
    let p = parsed.patch_size as usize;
    let codec = DctCodec::new(p, parsed.table.clone())?;
    let map = &parsed.map;
    let mut image = ImageTensor::filled(map.cols() * p, map.rows() * p, BLANK_FILL);
    let mut payloads = parsed.payloads.iter();
    for row in 0..map.rows() {
        for col in 0..map.cols() {
            if map.get(row, col) > 0 {
                let enc = payloads.next().expect("parser checked payload count");
                image.put_patch(row, col, &codec.decode(enc)?);
            }
        }
    }
    let metrics = side_info
        .map(|(original, grid)| Metrics::compute(original, &image, grid))
        .transpose()?;
    Ok(Reception {
        payload_bytes: parsed.payload_len(),
        frame_bytes: frame.len(),
        map: parsed.map,
        table: parsed.table,
        image,
        metrics,
    })
}

/// Outcome of one image transmitted in one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionReport {
    pub index: usize,
    pub r: u64,
    /// Payload bytes, or whole-frame bytes when overhead is deducted.
    pub bytes_used: u64,
    pub histogram: Vec<usize>,
    pub mse: f64,
    pub psnr: Option<f64>,
    pub wmse: f64,
    /// Fraction of patches sent at a nonzero level.
    pub q: f64,
    /// Bytes used per source pixel byte.
    pub q_bytes: f64,
}

/// Transmits and receives one image, returning the report and reconstruction.
pub fn run_block(
    index: usize,
    image: &ImageTensor,
    grid: &AttentionGrid,
    r: u64,
    config: &PipelineConfig,
) -> Result<(TransmissionReport, ImageTensor), PipelineError> {
    let frame = transmit(image, grid, r, config)?;
    let rx = receive(&frame, Some((image, grid)))?;
    Ok((report_for(index, r, image, &rx, config), rx.image))
}

pub(crate) fn report_for(
    index: usize,
    r: u64,
    image: &ImageTensor,
    rx: &Reception,
    config: &PipelineConfig,
) -> TransmissionReport {
    let metrics = rx.metrics.expect("side info supplied");
    let bytes_used = if config.deduct_overhead {
        rx.frame_bytes
    } else {
        rx.payload_bytes
    } as u64;
    TransmissionReport {
        index,
        r,
        bytes_used,
        histogram: rx.map.histogram(&rx.table),
        mse: metrics.mse,
        psnr: metrics.psnr,
        wmse: metrics.wmse,
        q: rx.map.levels().iter().filter(|&&l| l > 0).count() as f64 / rx.map.len() as f64,
        q_bytes: bytes_used as f64 / image.pixels().len() as f64,
    }
}

/// Map sending the top `floor(r / bytes(level))` patches by attention at a
/// single `level` and dropping the rest.
pub fn single_resolution_map(
    grid: &AttentionGrid,
    budget: Budget,
    level: u8,
    table: &RateTable,
) -> Result<ResolutionMap, PipelineError> {
    if level == 0 || level as usize >= table.levels() {
        return Err(AllocError::LevelOutOfRange {
            levels: level,
            table: table.levels(),
        }
        .into());
    }
    let n = grid.len();
    let k = ((budget.0 / table.bytes(level) as u64) as usize).min(n);
    let a = grid.values();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j].total_cmp(&a[i]).then(i.cmp(&j)));
    let mut levels = vec![0u8; n];
    for &i in &order[..k] {
        levels[i] = level;
    }
    Ok(ResolutionMap::new(grid.rows(), grid.cols(), levels)?)
}
