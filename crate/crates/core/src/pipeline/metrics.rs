use super::{ImageTensor, PipelineError};
use crate::attn::AttentionGrid;

fn check_dims(a: &ImageTensor, b: &ImageTensor) -> Result<(), PipelineError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(PipelineError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

pub fn mse(original: &ImageTensor, reconstruction: &ImageTensor) -> Result<f64, PipelineError> {
    check_dims(original, reconstruction)?;
    let sse: u64 = original
        .pixels()
        .iter()
        .zip(reconstruction.pixels())
        .map(|(&a, &b)| {
            let d = a as i64 - b as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sse as f64 / original.pixels().len() as f64)
}

/// Peak signal-to-noise ratio in dB; infinite for an exact reconstruction.
pub fn psnr(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

/// MSE of each patch, row-major over the grid implied by `grid`'s shape.
pub fn patch_mses(
    original: &ImageTensor,
    reconstruction: &ImageTensor,
    grid: &AttentionGrid,
) -> Result<Vec<f64>, PipelineError> {
    check_dims(original, reconstruction)?;
    let (rows, cols) = (grid.rows(), grid.cols());
    if !original.height().is_multiple_of(rows)
        || !original.width().is_multiple_of(cols)
        || original.height() / rows != original.width() / cols
    {
        return Err(PipelineError::DimensionMismatch(format!(
            "{}x{} grid does not tile a {}x{} image into square patches",
            rows,
            cols,
            original.width(),
            original.height()
        )));
    }
    let p = original.height() / rows;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(original.patch(p, r, c).mse(&reconstruction.patch(p, r, c)));
        }
    }
    Ok(out)
}

/// Attention-weighted mean of per-patch MSE; plain patch-mean MSE when the
/// grid sums to zero.
pub fn weighted_mse(
    original: &ImageTensor,
    reconstruction: &ImageTensor,
    grid: &AttentionGrid,
) -> Result<f64, PipelineError> {
    let per_patch = patch_mses(original, reconstruction, grid)?;
    let total = grid.sum();
    if total > 0.0 {
        Ok(per_patch
            .iter()
            .zip(grid.values())
            .map(|(m, a)| a * m)
            .sum::<f64>()
            / total)
    } else {
        Ok(per_patch.iter().sum::<f64>() / per_patch.len() as f64)
    }
}
