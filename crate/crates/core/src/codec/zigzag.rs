//! Zigzag scan order over an `n x n` coefficient block.

/// Row-major block indices in zigzag order (JPEG order for `n = 8`).
pub fn zigzag_order(n: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(n * n);
    if n == 0 {
        return order;
    }
    for d in 0..(2 * n - 1) {
        let lo = d.saturating_sub(n - 1);
        let hi = d.min(n - 1);
        if d % 2 == 1 {
            order.extend((lo..=hi).map(|row| row * n + (d - row)));
        } else {
            order.extend((lo..=hi).rev().map(|row| row * n + (d - row)));
        }
    }
    order
}
