use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use super::experiment::Failure;
use super::{ImageTensor, PipelineError};
use crate::attn::{read_attn_file, synth_attention, write_attn_file, AttentionGrid, SynthKind};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub name: String,
    pub image: ImageTensor,
    pub grid: AttentionGrid,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub items: Vec<CorpusItem>,
    /// Entries that could not be loaded, indexed by position in the sorted
    /// file listing.
    pub failures: Vec<Failure>,
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    crate::attn::unit_f64(rng)
}

/// One synthetic image with a textured object where attention is high and a
/// smooth gradient elsewhere.
pub fn synth_item(
    index: usize,
    rows: usize,
    cols: usize,
    patch_size: usize,
    seed: u64,
) -> Result<CorpusItem, PipelineError> {
    let item_seed = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let grid = synth_attention(SynthKind::RandomBlob, rows, cols, item_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(item_seed.rotate_left(17));
    let (w, h) = (cols * patch_size, rows * patch_size);

    let base: [f64; 3] = [0, 1, 2].map(|_| 40.0 + 170.0 * unit(&mut rng));
    let slope: [f64; 3] = [0, 1, 2].map(|_| (unit(&mut rng) - 0.5) * 80.0);
    let freq = 0.3 + 1.2 * unit(&mut rng);
    let angle = std::f64::consts::PI * unit(&mut rng);
    let (fx, fy) = (freq * angle.cos(), freq * angle.sin());
    let max_attn = grid.values().iter().cloned().fold(0.0, f64::max);

    let mut px = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let a = grid.get(y / patch_size, x / patch_size) / max_attn;
            let t = (x as f64 + y as f64) / (w + h) as f64;
            let stripes = (fx * x as f64 + fy * y as f64).sin();
            for c in 0..3 {
                let noise = unit(&mut rng) - 0.5;
                let v = base[c] + slope[c] * t + a * (70.0 * stripes + 60.0 * noise);
                px.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(CorpusItem {
        name: format!("synth_{index:04}"),
        image: ImageTensor::new(w, h, px)?,
        grid,
    })
}

pub fn synth_corpus(
    n: usize,
    rows: usize,
    cols: usize,
    patch_size: usize,
    seed: u64,
) -> Result<Vec<CorpusItem>, PipelineError> {
    (0..n)
        .map(|i| synth_item(i, rows, cols, patch_size, seed))
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `<name>.ppm` and `<name>.attn` for every item.
pub fn write_corpus(dir: &Path, items: &[CorpusItem]) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for item in items {
        let ppm = dir.join(format!("{}.ppm", item.name));
        fs::write(&ppm, item.image.to_ppm()).map_err(io_err(&ppm))?;
        let attn = dir.join(format!("{}.attn", item.name));
        fs::write(&attn, write_attn_file(&item.grid)?).map_err(io_err(&attn))?;
    }
    Ok(())
}

/// Loads every `*.ppm` in `dir` with its same-stem `*.attn` file, sorted by
/// name. Unreadable pairs are recorded as failures.
pub fn load_corpus(dir: &Path) -> Result<Corpus, PipelineError> {
    let mut stems: Vec<String> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    stems.sort();
    let mut corpus = Corpus::default();
    for (index, name) in stems.into_iter().enumerate() {
        match load_pair(dir, &name) {
            Ok(item) => corpus.items.push(item),
            Err(e) => corpus.failures.push(Failure {
                index,
                name,
                error: e.to_string(),
            }),
        }
    }
    Ok(corpus)
}

fn load_pair(dir: &Path, name: &str) -> Result<CorpusItem, PipelineError> {
    let ppm = dir.join(format!("{name}.ppm"));
    let attn = dir.join(format!("{name}.attn"));
    let image = ImageTensor::from_ppm(&fs::read(&ppm).map_err(io_err(&ppm))?)?;
    let grid = read_attn_file(&fs::read(&attn).map_err(io_err(&attn))?)?;
    Ok(CorpusItem {
        name: name.to_string(),
        image,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_items_are_deterministic() {
        let a = synth_item(3, 4, 6, 8, 99).unwrap();
        let b = synth_item(3, 4, 6, 8, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.image.width(), a.image.height()), (48, 32));
        assert_ne!(a, synth_item(4, 4, 6, 8, 99).unwrap());
    }

    #[test]
    fn corpus_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let items = synth_corpus(3, 2, 3, 8, 5).unwrap();
        write_corpus(dir.path(), &items).unwrap();
        fs::write(dir.path().join("zzz_orphan.ppm"), items[0].image.to_ppm()).unwrap();
        let loaded = load_corpus(dir.path()).unwrap();
        assert_eq!(loaded.items.len(), 3);
        for (l, i) in loaded.items.iter().zip(&items) {
            assert_eq!(l.image, i.image);
            assert_eq!(l.grid, i.grid.to_f32_precision());
        }
        assert_eq!(loaded.failures.len(), 1);
        assert_eq!(loaded.failures[0].name, "zzz_orphan");
    }
}
