//! The codec checked against a direct, loop-by-definition DCT implementation.

mod common;

use std::f64::consts::PI;

use rand::rngs::StdRng;
use rand::SeedableRng;
use semrate_core::codec::{DctCodec, EncodedPatch, Patch, PatchCodec};

const JPEG_ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20,
    13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59,
    52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// Half away from zero; values within 2^-21 of a half count as halves.
fn round_half(x: f64) -> f64 {
    let floor = x.floor();
    let frac = x - floor;
    let eps = 1.0 / (1u64 << 21) as f64;
    if (frac - 0.5).abs() <= eps {
        if x >= 0.0 {
            floor + 1.0
        } else {
            floor
        }
    } else {
        x.round()
    }
}

fn alpha(k: usize) -> f64 {
    if k == 0 {
        (1.0f64 / 8.0).sqrt()
    } else {
        (2.0f64 / 8.0).sqrt()
    }
}

fn cosine(x: usize, k: usize) -> f64 {
    ((2 * x + 1) as f64 * k as f64 * PI / 16.0).cos()
}

/// Coefficient (v, u) of the orthonormal DCT-II, straight from the formula.
fn dct_coeff(block: &[f64], v: usize, u: usize) -> f64 {
    if (v, u) == (0, 0) {
        // alpha(0)^2 = 1/8 exactly
        return block.iter().sum::<f64>() / 8.0;
    }
    let mut s = 0.0;
    for y in 0..8 {
        for x in 0..8 {
            s += block[y * 8 + x] * cosine(y, v) * cosine(x, u);
        }
    }
    alpha(v) * alpha(u) * s
}

fn idct_pixel(coeffs: &[f64], y: usize, x: usize) -> f64 {
    let mut s = 0.0;
    for v in 0..8 {
        for u in 0..8 {
            s += alpha(v) * alpha(u) * coeffs[v * 8 + u] * cosine(y, v) * cosine(x, u);
        }
    }
    s
}

fn oracle_encode(patch: &Patch, k: usize) -> Vec<u8> {
    let mut out = Vec::new();
    for c in 0..3 {
        let block: Vec<f64> = patch.channel(c).iter().map(|&p| p as f64 - 128.0).collect();
        for (i, &pos) in JPEG_ZIGZAG[..k].iter().enumerate() {
            let coeff = dct_coeff(&block, pos / 8, pos % 8);
            if i == 0 {
                out.push((round_half(coeff / 8.0) + 128.0).clamp(0.0, 255.0) as u8);
            } else {
                out.push(round_half(coeff / 2.0).clamp(-128.0, 127.0) as i8 as u8);
            }
        }
    }
    out
}

fn oracle_decode(payload: &[u8], k: usize) -> Vec<u8> {
    let mut px = Vec::new();
    for chunk in payload.chunks(k) {
        let mut coeffs = [0.0; 64];
        coeffs[0] = (chunk[0] as f64 - 128.0) * 8.0;
        for i in 1..k {
            coeffs[JPEG_ZIGZAG[i]] = chunk[i] as i8 as f64 * 2.0;
        }
        for y in 0..8 {
            for x in 0..8 {
                px.push(round_half(idct_pixel(&coeffs, y, x) + 128.0).clamp(0.0, 255.0) as u8);
            }
        }
    }
    px
}

#[test]
fn matches_direct_implementation() {
    let codec = DctCodec::default();
    let mut rng = StdRng::seed_from_u64(2024);
    let mut decode_mismatches = 0;
    for _ in 0..1000 {
        let patch = common::random_patch(&mut rng);
        for (level, k) in [(1u8, 4usize), (2, 8), (3, 16)] {
            let enc = codec.encode(&patch, level).unwrap();
            assert_eq!(enc.payload, oracle_encode(&patch, k), "level {level}");
            let dec = codec.decode(&enc).unwrap();
            if dec.pixels() != oracle_decode(&enc.payload, k).as_slice() {
                decode_mismatches += 1;
            }
        }
    }
    assert_eq!(decode_mismatches, 0);
}

#[test]
fn arbitrary_payloads_decode_like_the_oracle() {
    let codec = DctCodec::default();
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..500 {
        let payload: Vec<u8> = (0..48).map(|_| rand::Rng::gen(&mut rng)).collect();
        let dec = codec
            .decode(&EncodedPatch {
                level: 3,
                payload: payload.clone(),
            })
            .unwrap();
        assert_eq!(dec.pixels(), oracle_decode(&payload, 16).as_slice());
    }
}

#[test]
fn constant_patches_re_encode_exactly() {
    let codec = DctCodec::default();
    for v in (0..=255u8).step_by(5) {
        let patch = Patch::filled(8, v);
        for level in 1..=3 {
            let once = codec.encode(&patch, level).unwrap();
            let twice = codec.encode(&codec.decode(&once).unwrap(), level).unwrap();
            assert_eq!(once, twice);
        }
    }
}

/// Re-encoding a decoded patch is not a strict fixed point: reconstructed
/// pixels are rounded and clamped to u8, which perturbs the coefficients.
/// The DC byte stays within one step and most payloads are unchanged.
#[test]
fn re_encoding_random_patches_is_nearly_stable() {
    let codec = DctCodec::default();
    let mut rng = StdRng::seed_from_u64(4);
    let n = 5000;
    for level in 1..=3u8 {
        let k = codec.coefficients_for(level);
        let (mut moved, mut max_dc_dev) = (0, 0i32);
        for _ in 0..n {
            let patch = common::random_patch(&mut rng);
            let once = codec.encode(&patch, level).unwrap();
            let twice = codec.encode(&codec.decode(&once).unwrap(), level).unwrap();
            if once != twice {
                moved += 1;
            }
            for c in 0..3 {
                let d = once.payload[c * k] as i32 - twice.payload[c * k] as i32;
                max_dc_dev = max_dc_dev.max(d.abs());
            }
        }
        println!("level {level}: payload changed on {moved}/{n}, max DC deviation {max_dc_dev}");
        assert!(max_dc_dev <= 1);
        assert!(moved * 5 < n, "level {level}: {moved}/{n}");
    }
}
