//! Matrix products split across the rayon pool.

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

/// Output columns per parallel task. Fixed so that every entry is computed
/// by the same sequence of operations whatever the thread count.
const COLUMN_BLOCK: usize = 256;

/// `a.dot(&b)`, with blocks of output columns computed in parallel. The
/// result is bitwise identical to the sequential product.
pub fn par_dot(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let n = b.ncols();
    if n <= COLUMN_BLOCK || rayon::current_num_threads() == 1 {
        return a.dot(&b);
    }
    let mut out = Array2::zeros((a.nrows(), n));
    let blocks: Vec<_> = out.axis_chunks_iter_mut(Axis(1), COLUMN_BLOCK).collect();
    blocks.into_par_iter().enumerate().for_each(|(i, mut block)| {
        let lo = i * COLUMN_BLOCK;
        let cols = block.ncols();
        ndarray::linalg::general_mat_mul(1.0, &a, &b.slice(s![.., lo..lo + cols]), 0.0, &mut block);
    });
    out
}
