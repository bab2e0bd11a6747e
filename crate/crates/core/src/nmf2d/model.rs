use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::par_dot;

/// Denominator guard used by the updates and the divergence.
pub const EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nmf2dConfig {
    pub components: usize,
    pub time_lags: usize,
    pub freq_shifts: usize,
    pub iterations: usize,
    pub mask_exponent: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for Nmf2dConfig {
    fn default() -> Self {
        Self {
            components: 3,
            time_lags: 20,
            freq_shifts: 14,
            iterations: 300,
            mask_exponent: 2.0,
            epsilon: EPSILON,
            seed: 0,
        }
    }
}

impl Nmf2dConfig {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.time_lags == 0 || self.freq_shifts == 0 {
            return Err(Error::InvalidConfig(
                "components, time lags and frequency shifts must be at least 1".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.mask_exponent < 1.0 || !self.mask_exponent.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "mask exponent must be >= 1, got {}",
                self.mask_exponent
            )));
        }
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Checks that an `m` by `n` matrix can host the configured lags and
    /// shifts.
    pub fn check_dims(&self, m: usize, n: usize) -> Result<()> {
        if self.time_lags > n {
            return Err(Error::InvalidConfig(format!(
                "{} time lags exceed {n} frames",
                self.time_lags
            )));
        }
        if self.freq_shifts > m {
            return Err(Error::InvalidConfig(format!(
                "{} frequency shifts exceed {m} bins",
                self.freq_shifts
            )));
        }
        Ok(())
    }
}

/// Time-frequency templates, indexed `[m, k, tau]`: frequency bin, component,
/// time lag.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateTensor(pub Array3<f64>);

/// Activations, indexed `[k, n, phi]`: component, frame, frequency shift.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor(pub Array3<f64>);

impl TemplateTensor {
    pub fn bins(&self) -> usize {
        self.0.dim().0
    }
    pub fn components(&self) -> usize {
        self.0.dim().1
    }
    pub fn lags(&self) -> usize {
        self.0.dim().2
    }

    pub(crate) fn random(m: usize, k: usize, t: usize, rng: &mut ChaCha8Rng) -> Self {
        Self(Array3::from_shape_simple_fn((m, k, t), || init_value(rng)))
    }
}

impl ActivationTensor {
    pub fn components(&self) -> usize {
        self.0.dim().0
    }
    pub fn frames(&self) -> usize {
        self.0.dim().1
    }
    pub fn shifts(&self) -> usize {
        self.0.dim().2
    }

    pub(crate) fn random(k: usize, n: usize, f: usize, rng: &mut ChaCha8Rng) -> Self {
        Self(Array3::from_shape_simple_fn((k, n, f), || init_value(rng)))
    }
}

/// Uniform on (0.1, 1].
fn init_value(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - 0.9 * rng.random::<f64>()
}

pub(crate) fn check_nonnegative(x: ArrayView2<f64>, what: &'static str) -> Result<()> {
    if x.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::NegativeInput(what));
    }
    Ok(())
}

fn check_pair(w: &TemplateTensor, h: &ActivationTensor) -> Result<()> {
    if w.components() != h.components() {
        return Err(Error::shape(
            "template/activation components",
            w.components(),
            h.components(),
        ));
    }
    if w.lags() > h.frames() || h.shifts() > w.bins() {
        return Err(Error::shape(
            "template/activation extents",
            format!("lags <= {} and shifts <= {}", h.frames(), w.bins()),
            format!("lags {} and shifts {}", w.lags(), h.shifts()),
        ));
    }
    Ok(())
}

/// Column (or row) of the stacked matrices holding component `k`, shift
/// `phi`, lag `tau`.
#[inline]
pub(crate) fn stack_index(k: usize, phi: usize, tau: usize, f: usize, t: usize) -> usize {
    (k * f + phi) * t + tau
}

/// `M x KFT` matrix whose column `(k, phi, tau)` is template `k` at lag `tau`
/// shifted down by `phi` bins.
pub(crate) fn stack_templates(w: &TemplateTensor, f: usize) -> Array2<f64> {
    let (m, k, t) = w.0.dim();
    let mut a = Array2::zeros((m, k * f * t));
    for kk in 0..k {
        for phi in 0..f.min(m) {
            for tau in 0..t {
                let col = stack_index(kk, phi, tau, f, t);
                for row in phi..m {
                    a[[row, col]] = w.0[[row - phi, kk, tau]];
                }
            }
        }
    }
    a
}

/// `KFT x N` matrix whose row `(k, phi, tau)` is activation row `(k, phi)`
/// delayed by `tau` frames.
pub(crate) fn stack_activations(h: &ActivationTensor, t: usize) -> Array2<f64> {
    let (k, n, f) = h.0.dim();
    let mut b = Array2::zeros((k * f * t, n));
    for kk in 0..k {
        for phi in 0..f {
            for tau in 0..t.min(n) {
                let row = stack_index(kk, phi, tau, f, t);
                let mut dst = b.row_mut(row);
                for col in tau..n {
                    dst[col] = h.0[[kk, col - tau, phi]];
                }
            }
        }
    }
    b
}

/// Convolutive reconstruction
/// `L[m, n] = sum_{k, tau, phi} W[m - phi, k, tau] H[k, n - tau, phi]`,
/// with out-of-range terms contributing zero.
pub fn reconstruct(w: &TemplateTensor, h: &ActivationTensor) -> Result<Array2<f64>> {
    check_pair(w, h)?;
    let a = stack_templates(w, h.shifts());
    let b = stack_activations(h, w.lags());
    Ok(par_dot(a.view(), b.view()))
}

/// Contribution of component `k` alone to [`reconstruct`].
pub fn component_reconstruct(w: &TemplateTensor, h: &ActivationTensor, k: usize) -> Result<Array2<f64>> {
    check_pair(w, h)?;
    if k >= w.components() {
        return Err(Error::OutOfRange(format!("component {k} of {}", w.components())));
    }
    Ok(component_reconstructions(w, h)?.swap_remove(k))
}

/// All per-component reconstructions; they sum to [`reconstruct`].
pub fn component_reconstructions(w: &TemplateTensor, h: &ActivationTensor) -> Result<Vec<Array2<f64>>> {
    check_pair(w, h)?;
    let (f, t) = (h.shifts(), w.lags());
    let a = stack_templates(w, f);
    let b = stack_activations(h, t);
    let block = f * t;
    Ok((0..w.components())
        .map(|k| {
            let cols = k * block..(k + 1) * block;
            a.slice(s![.., cols.clone()]).dot(&b.slice(s![cols, ..]))
        })
        .collect())
}

/// Generalized Kullback-Leibler divergence
/// `sum x log(x / y) - x + y` with `0 log 0 = 0` and `y` floored at
/// [`EPSILON`].
pub fn kl_divergence(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::shape(
            "kl divergence",
            format!("{:?}", x.dim()),
            format!("{:?}", y.dim()),
        ));
    }
    Ok(kl_unchecked(x, y, EPSILON))
}

pub(crate) fn kl_unchecked(x: ArrayView2<f64>, y: ArrayView2<f64>, eps: f64) -> f64 {
    let mut acc = 0.0;
    for (row_x, row_y) in x.axis_iter(Axis(0)).zip(y.axis_iter(Axis(0))) {
        for (&a, &b) in row_x.iter().zip(row_y.iter()) {
            let b = b.max(eps);
            acc += if a > 0.0 { a * (a / b).ln() - a + b } else { b };
        }
    }
    acc
}
