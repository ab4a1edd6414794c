//! Separable orthonormal 2D DCT-II on square blocks.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct Dct2d {
    n: usize,
    // basis[k * n + x] = alpha(k) * cos((2x + 1) k pi / 2n)
    basis: Vec<f64>,
}

impl Dct2d {
    pub fn new(n: usize) -> Self {
        let mut basis = vec![0.0; n * n];
        for k in 0..n {
            let alpha = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            for x in 0..n {
                basis[k * n + x] =
                    alpha * ((2 * x + 1) as f64 * k as f64 * PI / (2 * n) as f64).cos();
            }
        }
        Self { n, basis }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Forward transform of a row-major block.
    pub fn forward(&self, block: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut tmp = vec![0.0; n * n];
        // rows: tmp[y][u] = sum_x block[y][x] * basis[u][x]
        for y in 0..n {
            for u in 0..n {
                tmp[y * n + u] = (0..n)
                    .map(|x| block[y * n + x] * self.basis[u * n + x])
                    .sum();
            }
        }
        let mut out = vec![0.0; n * n];
        for v in 0..n {
            for u in 0..n {
                out[v * n + u] = (0..n).map(|y| tmp[y * n + u] * self.basis[v * n + y]).sum();
            }
        }
        out
    }

    /// Inverse transform back to a row-major block.
    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut tmp = vec![0.0; n * n];
        for y in 0..n {
            for u in 0..n {
                tmp[y * n + u] = (0..n)
                    .map(|v| coeffs[v * n + u] * self.basis[v * n + y])
                    .sum();
            }
        }
        let mut out = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                out[y * n + x] = (0..n).map(|u| tmp[y * n + u] * self.basis[u * n + x]).sum();
            }
        }
        out
    }
}
