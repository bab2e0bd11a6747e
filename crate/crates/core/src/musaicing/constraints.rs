//! The four activation updates of one musaicing iteration.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::linalg::par_dot;

/// Suppression applied to non-selected entries at iteration `iter` of
/// `total`: falls linearly to exactly zero at the last iteration.
pub fn decay(iter: usize, total: usize) -> f64 {
    (1.0 - (iter + 1) as f64 / total as f64).max(0.0)
}

/// Keeps entries that are the maximum of their row over columns
/// `[m - r, m + r]`; scales all others by [`decay`].
pub fn restrict_repeats(h: ArrayView2<f64>, r: usize, iter: usize, total: usize) -> Array2<f64> {
    let mut out = h.as_standard_layout().into_owned();
    restrict_repeats_in_place(&mut out, r, iter, total);
    out
}

/// [`restrict_repeats`] overwriting `h`.
pub(crate) fn restrict_repeats_in_place(out: &mut Array2<f64>, r: usize, iter: usize, total: usize) {
    let factor = decay(iter, total);
    if r == 0 || out.is_empty() {
        return;
    }
    if !out.is_standard_layout() {
        *out = out.as_standard_layout().into_owned();
    }
    let mut max = vec![0.0; out.ncols()];
    for mut row in out.rows_mut() {
        let row = row.as_slice_mut().expect("standard layout");
        sliding_max(row, r, &mut max);
        for (v, &m) in row.iter_mut().zip(&max) {
            if *v < m {
                *v *= factor;
            }
        }
    }
}

/// Maximum over the centered window `[i - r, i + r]` clipped to the slice,
/// from running maxima over blocks of `2r + 1`.
fn sliding_max(x: &[f64], r: usize, out: &mut [f64]) {
    let n = x.len();
    let w = 2 * r + 1;
    // prefix[i]: max from the start of i's block to i; suffix[i]: max from i
    // to the end of its block
    let mut prefix = x.to_vec();
    let mut suffix = x.to_vec();
    for block in prefix.chunks_mut(w) {
        for j in 1..block.len() {
            block[j] = block[j].max(block[j - 1]);
        }
    }
    for block in suffix.chunks_mut(w) {
        for j in (1..block.len()).rev() {
            block[j - 1] = block[j - 1].max(block[j]);
        }
    }
    // windows clipped at the right edge take a plain running maximum
    let mut tail = f64::NEG_INFINITY;
    let mut next = n;
    for i in (n.saturating_sub(r)..n).rev() {
        while next > i.saturating_sub(r) {
            next -= 1;
            tail = tail.max(x[next]);
        }
        out[i] = tail;
    }
    for (i, slot) in out.iter_mut().enumerate().take(n.saturating_sub(r)) {
        // a full window that fits one block is aligned with it; one clipped
        // at the left edge lies inside the first block
        *slot = if i < r {
            prefix[i + r]
        } else {
            suffix[i - r].max(prefix[i + r])
        };
    }
}

/// Keeps, in every column, the entries at least as large as the column's
/// `p`-th largest value; scales all others by [`decay`].
pub fn restrict_polyphony(h: ArrayView2<f64>, p: usize, iter: usize, total: usize) -> Array2<f64> {
    let mut out = h.as_standard_layout().into_owned();
    restrict_polyphony_in_place(&mut out, p, iter, total);
    out
}

/// [`restrict_polyphony`] overwriting `h`.
pub(crate) fn restrict_polyphony_in_place(out: &mut Array2<f64>, p: usize, iter: usize, total: usize) {
    let factor = decay(iter, total);
    let (rows, cols) = out.dim();
    if p == 0 || p >= rows {
        return;
    }
    // per column, the p largest values seen so far in descending order,
    // filled row by row to keep reads contiguous
    let mut top = vec![f64::NEG_INFINITY; cols * p];
    let mut threshold = vec![f64::NEG_INFINITY; cols];
    for row in out.rows() {
        for (m, &v) in row.iter().enumerate() {
            if v > threshold[m] {
                let best = &mut top[m * p..(m + 1) * p];
                let at = best.iter().position(|&b| v > b).expect("v beats the last entry");
                best.copy_within(at..p - 1, at + 1);
                best[at] = v;
                threshold[m] = best[p - 1];
            }
        }
    }
    for mut row in out.rows_mut() {
        for (v, &t) in row.iter_mut().zip(&threshold) {
            if *v < t {
                *v *= factor;
            }
        }
    }
}

/// Diagonal smoothing `C[k, m] = sum_{i = -c..c} P[k + i, m + i]`, with
/// out-of-range terms zero.
pub fn promote_continuity(p: ArrayView2<f64>, c: usize) -> Array2<f64> {
    let p = p.as_standard_layout();
    let (rows, cols) = p.dim();
    let mut out = Array2::zeros((rows, cols));
    let c = c as isize;
    for (k, mut dst) in out.rows_mut().into_iter().enumerate() {
        let dst = dst.as_slice_mut().expect("standard layout");
        for i in -c..=c {
            let kk = k as isize + i;
            if kk < 0 || kk >= rows as isize {
                continue;
            }
            let src = p.row(kk as usize);
            let src = src.as_slice().expect("standard layout");
            // columns m with 0 <= m + i < cols
            let shift = i.unsigned_abs().min(cols);
            if i >= 0 {
                for (d, s) in dst[..cols - shift].iter_mut().zip(&src[shift..]) {
                    *d += s;
                }
            } else {
                for (d, s) in dst[shift..].iter_mut().zip(&src[..cols - shift]) {
                    *d += s;
                }
            }
        }
    }
    out
}

/// KL-divergence multiplicative update applied to the constrained
/// activations `c`:
/// `c * (D^T (T / (D c + eps))) / (D^T 1 + eps)`. Also returns
/// `KL(T || D c)`, the divergence of the activations being updated.
pub fn kl_update(
    c: ArrayView2<f64>,
    dict: ArrayView2<f64>,
    target: ArrayView2<f64>,
    eps: f64,
) -> Result<(Array2<f64>, f64)> {
    if dict.ncols() != c.nrows() || dict.nrows() != target.nrows() || c.ncols() != target.ncols() {
        return Err(Error::shape(
            "musaicing update",
            format!(
                "dictionary {} x {}, target {} x {}",
                target.nrows(),
                c.nrows(),
                dict.nrows(),
                c.ncols()
            ),
            format!(
                "dictionary {:?}, activations {:?}, target {:?}",
                dict.dim(),
                c.dim(),
                target.dim()
            ),
        ));
    }
    let approx = par_dot(dict, c);
    let divergence = crate::nmf2d::kl_divergence(target, approx.view())?;
    let ratio = Zip::from(target).and(&approx).map_collect(|&t, &a| t / (a + eps));
    let mut out = par_dot(dict.t(), ratio.view());
    let den = dict.sum_axis(Axis(0));
    Zip::indexed(&mut out)
        .and(c)
        .for_each(|(k, _), n, &h| *n = h * (*n / (den[k] + eps)));
    Ok((out, divergence))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn decay_hits_zero_at_last_iteration() {
        assert_eq!(decay(99, 100), 0.0);
        assert!((decay(0, 100) - 0.99).abs() < 1e-15);
    }

    #[test]
    fn repeats_row_example() {
        let h = array![[1.0, 5.0, 2.0]];
        assert_eq!(restrict_repeats(h.view(), 1, 9, 10), array![[0.0, 5.0, 0.0]]);
        assert_eq!(restrict_repeats(h.view(), 0, 9, 10), h);
    }

    #[test]
    fn polyphony_column_example() {
        let h = array![[9.0], [7.0], [5.0], [3.0]];
        assert_eq!(
            restrict_polyphony(h.view(), 2, 4, 5),
            array![[9.0], [7.0], [0.0], [0.0]]
        );
        assert_eq!(restrict_polyphony(h.view(), 4, 4, 5), h);
    }

    #[test]
    fn continuity_impulse_makes_diagonal() {
        let mut p = Array2::zeros((9, 9));
        p[[4, 4]] = 1.0;
        let c = promote_continuity(p.view(), 2);
        for k in 0..9 {
            for m in 0..9 {
                let on = k == m && (2..=6).contains(&k);
                assert_eq!(c[[k, m]], f64::from(on));
            }
        }
    }

    #[test]
    fn sliding_max_matches_naive() {
        let x: Vec<f64> = (0..37).map(|i| ((i * 7919) % 31) as f64).collect();
        for r in 0..20 {
            let mut fast = vec![0.0; x.len()];
            sliding_max(&x, r, &mut fast);
            for i in 0..x.len() {
                let lo = i.saturating_sub(r);
                let hi = (i + r).min(x.len() - 1);
                let naive = x[lo..=hi].iter().cloned().fold(f64::MIN, f64::max);
                assert_eq!(fast[i], naive);
            }
        }
    }
}
