#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::Rng;
use semrate_core::{
    AttentionGrid, EncodedPatch, Frame, ImageTensor, Patch, RateTable, ResolutionMap,
};

/// Random attention grid with `rows * cols` cells drawn from a mix of
/// distributions: smooth, heavy-tailed, sparse, and tie-heavy.
pub fn random_grid(rng: &mut StdRng, rows: usize, cols: usize) -> AttentionGrid {
    let n = rows * cols;
    let values: Vec<f64> = match rng.gen_range(0..5) {
        0 => (0..n).map(|_| rng.gen::<f64>()).collect(),
        1 => (0..n)
            .map(|_| -(1.0 - rng.gen::<f64>()).ln().powi(3))
            .collect(),
        2 => (0..n)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    rng.gen::<f64>()
                } else {
                    0.0
                }
            })
            .collect(),
        3 => (0..n).map(|_| rng.gen_range(0..3) as f64).collect(),
        _ => {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 1e-3).collect();
            let hot = rng.gen_range(0..n);
            v[hot] = 1.0;
            v
        }
    };
    AttentionGrid::new(rows, cols, values).unwrap()
}

/// Grid shape with at most `max_p` cells.
pub fn random_shape(rng: &mut StdRng, max_p: usize) -> (usize, usize) {
    let rows = rng.gen_range(1..=max_p);
    let cols = rng.gen_range(1..=max_p / rows);
    (rows, cols)
}

/// Budget anywhere from zero to beyond saturation.
pub fn random_budget(rng: &mut StdRng, patches: usize) -> u64 {
    let top = 196 * patches as u64;
    match rng.gen_range(0..4) {
        0 => rng.gen_range(0..=12 * patches as u64),
        _ => rng.gen_range(0..=top + top / 5),
    }
}

pub fn random_patch(rng: &mut StdRng) -> Patch {
    Patch::new(8, (0..192).map(|_| rng.gen()).collect()).unwrap()
}

pub fn random_image(rng: &mut StdRng, rows: usize, cols: usize) -> ImageTensor {
    let (w, h) = (cols * 8, rows * 8);
    ImageTensor::new(w, h, (0..w * h * 3).map(|_| rng.gen()).collect()).unwrap()
}

/// Either the default table or a random one with 2 to 8 levels.
pub fn random_table(rng: &mut StdRng) -> RateTable {
    if rng.gen_bool(0.5) {
        return RateTable::default();
    }
    let n = rng.gen_range(2..=8);
    let mut bytes = vec![0u32];
    for _ in 1..n {
        let prev = *bytes.last().unwrap();
        bytes.push(prev + rng.gen_range(1..=60));
    }
    RateTable::new(bytes).unwrap()
}

/// Well-formed frame with random map and payload bytes.
pub fn random_frame(rng: &mut StdRng, max_p: usize) -> Frame {
    let table = random_table(rng);
    let (rows, cols) = random_shape(rng, max_p);
    let levels: Vec<u8> = (0..rows * cols)
        .map(|_| rng.gen_range(0..table.levels() as u8))
        .collect();
    let payloads = levels
        .iter()
        .filter(|&&l| l > 0)
        .map(|&level| EncodedPatch {
            level,
            payload: (0..table.bytes(level)).map(|_| rng.gen()).collect(),
        })
        .collect();
    Frame {
        patch_size: rng.gen_range(1..=32),
        map: ResolutionMap::new(rows, cols, levels).unwrap(),
        table,
        payloads,
    }
}
