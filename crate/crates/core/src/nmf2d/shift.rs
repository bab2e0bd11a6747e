//! Zero-filling row and column shifts.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};

fn check(shift: usize, dim: usize, what: &str) -> Result<()> {
    if shift > dim {
        return Err(Error::OutOfRange(format!(
            "{what} shift {shift} exceeds dimension {dim}"
        )));
    }
    Ok(())
}

/// Row `i` of the result is row `i - shift` of `x`; the first `shift` rows
/// are zero.
pub fn shift_down(x: ArrayView2<f64>, shift: usize) -> Result<Array2<f64>> {
    check(shift, x.nrows(), "row")?;
    let mut out = Array2::zeros(x.raw_dim());
    let m = x.nrows();
    out.slice_mut(s![shift.., ..]).assign(&x.slice(s![..m - shift, ..]));
    Ok(out)
}

/// Row `i` of the result is row `i + shift` of `x`; the last `shift` rows
/// are zero.
pub fn shift_up(x: ArrayView2<f64>, shift: usize) -> Result<Array2<f64>> {
    check(shift, x.nrows(), "row")?;
    let mut out = Array2::zeros(x.raw_dim());
    let m = x.nrows();
    out.slice_mut(s![..m - shift, ..]).assign(&x.slice(s![shift.., ..]));
    Ok(out)
}

/// Column `j` of the result is column `j - shift` of `x`; the first `shift`
/// columns are zero.
pub fn shift_right(x: ArrayView2<f64>, shift: usize) -> Result<Array2<f64>> {
    check(shift, x.ncols(), "column")?;
    let mut out = Array2::zeros(x.raw_dim());
    let n = x.ncols();
    out.slice_mut(s![.., shift..]).assign(&x.slice(s![.., ..n - shift]));
    Ok(out)
}

/// Column `j` of the result is column `j + shift` of `x`; the last `shift`
/// columns are zero.
pub fn shift_left(x: ArrayView2<f64>, shift: usize) -> Result<Array2<f64>> {
    check(shift, x.ncols(), "column")?;
    let mut out = Array2::zeros(x.raw_dim());
    let n = x.ncols();
    out.slice_mut(s![.., ..n - shift]).assign(&x.slice(s![.., shift..]));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn down_shift_of_identity() {
        let i3 = Array2::<f64>::eye(3);
        let y = shift_down(i3.view(), 1).unwrap();
        assert_eq!(y, array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    }

    #[test]
    fn zero_shift_is_identity_and_full_shift_is_zero() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        for f in [shift_down, shift_up, shift_left, shift_right] {
            assert_eq!(f(x.view(), 0).unwrap(), x);
        }
        assert_eq!(shift_down(x.view(), 3).unwrap(), Array2::<f64>::zeros((3, 2)));
        assert_eq!(shift_left(x.view(), 2).unwrap(), Array2::<f64>::zeros((3, 2)));
        assert!(shift_up(x.view(), 4).is_err());
        assert!(shift_right(x.view(), 3).is_err());
    }

    #[test]
    fn up_after_down_zeroes_the_top() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]];
        let y = shift_up(shift_down(x.view(), 2).unwrap().view(), 2).unwrap();
        assert_eq!(y, array![[1.0, 2.0], [3.0, 4.0], [0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn row_and_column_shifts_are_transposes() {
        let x = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let a = shift_right(x.view(), 1).unwrap();
        let b = shift_down(x.t(), 1).unwrap();
        assert_eq!(a.t(), b);
    }
}
