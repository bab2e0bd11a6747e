use ndarray::{Array2, Zip};
use rustfft::num_complex::Complex64;

use super::model::{component_reconstructions, ActivationTensor, TemplateTensor, EPSILON};
use crate::error::{Error, Result};
use crate::spectral::spectrogram::upsample_linear;
use crate::spectral::ComplexSpectrogram;

/// Soft masks `L_k^p / sum_j L_j^p` from per-component reconstructions.
/// Entries where every component is below [`EPSILON`] get the uniform mask
/// `1 / K`, so the masks sum to one everywhere.
pub fn soft_masks(w: &TemplateTensor, h: &ActivationTensor, p: f64) -> Result<Vec<Array2<f64>>> {
    if p < 1.0 || !p.is_finite() {
        return Err(Error::InvalidConfig(format!("mask exponent must be >= 1, got {p}")));
    }
    let parts = component_reconstructions(w, h)?;
    Ok(masks_from_parts(&parts, p))
}

pub(crate) fn masks_from_parts(parts: &[Array2<f64>], p: f64) -> Vec<Array2<f64>> {
    let k = parts.len();
    let mut peak = parts[0].clone();
    for part in &parts[1..] {
        Zip::from(&mut peak).and(part).for_each(|m, &v| *m = m.max(v));
    }
    // Powers are taken relative to the per-entry maximum to stay in range
    // for large exponents.
    let mut masks: Vec<Array2<f64>> = parts
        .iter()
        .map(|part| {
            Zip::from(part)
                .and(&peak)
                .map_collect(|&v, &m| if m > EPSILON { (v.max(0.0) / m).powf(p) } else { 1.0 })
        })
        .collect();
    let mut total = Array2::<f64>::zeros(peak.raw_dim());
    for m in &masks {
        total += m;
    }
    for m in &mut masks {
        Zip::from(m).and(&total).for_each(|v, &t| *v /= t);
    }
    debug_assert!(masks.len() == k);
    masks
}

/// Splits `c` into `K` spectrograms with the soft masks of `(w, h)`.
///
/// The factorization may live on a coarser time grid than `c`: when `c` has
/// `d` times as many frames as `h` (the CQT's temporal downsampling), masks
/// are linearly interpolated onto the fine grid. Residual rows outside the
/// log-frequency grid take the mask of the nearest edge bin.
pub fn soft_mask_filter(
    c: &ComplexSpectrogram,
    w: &TemplateTensor,
    h: &ActivationTensor,
    p: f64,
) -> Result<Vec<ComplexSpectrogram>> {
    if c.bins() != w.bins() {
        return Err(Error::shape("mask filter bins", w.bins(), c.bins()));
    }
    let d = c.downsample();
    if c.frames() != h.frames() && c.frames() != h.frames() * d {
        return Err(Error::shape(
            "mask filter frames",
            format!("{} or {}", h.frames(), h.frames() * d),
            c.frames(),
        ));
    }
    let masks = soft_masks(w, h, p)?;
    let factor = c.frames() / h.frames();
    Ok(masks
        .into_iter()
        .map(|m| {
            let m = upsample_linear(&m, factor, c.frames());
            apply_mask(c, &m)
        })
        .collect())
}

fn apply_mask(c: &ComplexSpectrogram, mask: &Array2<f64>) -> ComplexSpectrogram {
    let values = Zip::from(&c.values).and(mask).map_collect(|&z, &g| z * g);
    let last = mask.nrows() - 1;
    let mut residual = c.residual.clone();
    for (r, mut row) in residual.outer_iter_mut().enumerate() {
        // the first residual row lies below the grid, any second one above
        let src = mask.row(if r == 0 { 0 } else { last });
        Zip::from(&mut row).and(&src).for_each(|z: &mut Complex64, &g| *z *= g);
    }
    ComplexSpectrogram {
        values,
        residual,
        layout: c.layout.clone(),
        signal_len: c.signal_len,
        sample_rate: c.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};

    #[test]
    fn single_component_mask_is_one() {
        let parts = vec![array![[0.0, 1.0], [3.0, 1e-20]]];
        let m = masks_from_parts(&parts, 2.0);
        assert!(m[0].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn equal_parts_split_evenly() {
        let a = array![[2.0, 0.5]];
        for p in [1.0, 2.0, 7.0] {
            let m = masks_from_parts(&[a.clone(), a.clone()], p);
            assert!(m.iter().all(|x| x.iter().all(|&v| v == 0.5)));
        }
    }

    #[test]
    fn large_exponent_does_not_overflow() {
        let m = masks_from_parts(&[array![[1e200]], array![[5e199]]], 4.0);
        assert!((m[0][[0, 0]] - 16.0 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn exponent_below_one_is_rejected() {
        let w = TemplateTensor(Array3::ones((4, 1, 1)));
        let h = ActivationTensor(Array3::ones((1, 3, 1)));
        assert!(soft_masks(&w, &h, 0.5).is_err());
    }
}
