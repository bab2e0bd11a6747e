use ndarray::{Array2, Array3, ArrayView2, Axis, Zip};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{
    check_nonnegative, kl_unchecked, stack_activations, stack_index, stack_templates, ActivationTensor, Nmf2dConfig,
    TemplateTensor,
};
use crate::error::{Error, Result};
use crate::linalg::par_dot;

/// Result of [`joint_factorize`] or [`joint_factorize_pretrained`].
#[derive(Debug, Clone)]
pub struct JointFactorization {
    pub w1: TemplateTensor,
    pub w2: TemplateTensor,
    pub h1: ActivationTensor,
    /// Joint objective after each sweep.
    pub objective: Vec<f64>,
    /// Single-song objective of the pretraining phase, empty without one.
    pub pretrain_objective: Vec<f64>,
}

/// Result of [`fit_activations`].
#[derive(Debug, Clone)]
pub struct ActivationFit {
    pub h: ActivationTensor,
    /// Divergence after each update.
    pub objective: Vec<f64>,
}

/// Several spectrograms explained by their own templates and one shared
/// activation tensor.
struct Problem<'a> {
    xs: Vec<ArrayView2<'a, f64>>,
    ws: Vec<TemplateTensor>,
    fixed: Vec<bool>,
    h: ActivationTensor,
    stacked_w: Vec<Array2<f64>>,
    lambdas: Vec<Array2<f64>>,
    f: usize,
    t: usize,
    eps: f64,
}

impl<'a> Problem<'a> {
    fn new(
        xs: Vec<ArrayView2<'a, f64>>,
        ws: Vec<TemplateTensor>,
        fixed: Vec<bool>,
        h: ActivationTensor,
        eps: f64,
    ) -> Self {
        let (f, t) = (h.shifts(), ws[0].lags());
        let stacked_w: Vec<_> = ws.iter().map(|w| stack_templates(w, f)).collect();
        let b = stack_activations(&h, t);
        let lambdas = stacked_w.iter().map(|a| par_dot(a.view(), b.view())).collect();
        Self {
            xs,
            ws,
            fixed,
            h,
            stacked_w,
            lambdas,
            f,
            t,
            eps,
        }
    }

    fn objective(&self) -> f64 {
        self.xs
            .iter()
            .zip(&self.lambdas)
            .map(|(x, l)| kl_unchecked(x.view(), l.view(), self.eps))
            .sum()
    }

    fn sweep(&mut self) {
        let mut b = stack_activations(&self.h, self.t);
        for i in 0..self.xs.len() {
            if self.fixed[i] {
                continue;
            }
            update_templates(&mut self.ws[i], self.xs[i], &self.lambdas[i], &b, self.f, self.eps);
            self.stacked_w[i] = stack_templates(&self.ws[i], self.f);
            self.lambdas[i] = par_dot(self.stacked_w[i].view(), b.view());
        }
        let mut num = Array3::zeros(self.h.0.raw_dim());
        let mut den = Array3::zeros(self.h.0.raw_dim());
        for i in 0..self.xs.len() {
            accumulate_activation_terms(
                &self.stacked_w[i],
                self.xs[i],
                &self.lambdas[i],
                self.t,
                self.eps,
                &mut num,
                &mut den,
            );
        }
        let eps = self.eps;
        Zip::from(&mut self.h.0).and(&num).and(&den).for_each(|h, &n, &d| {
            *h *= n / (d + eps);
            flush(h);
        });
        b = stack_activations(&self.h, self.t);
        for (l, a) in self.lambdas.iter_mut().zip(&self.stacked_w) {
            *l = par_dot(a.view(), b.view());
        }
    }

    fn run(&mut self, sweeps: usize, stage: &'static str) -> Result<Vec<f64>> {
        let mut log = Vec::with_capacity(sweeps);
        for sweep in 0..sweeps {
            self.sweep();
            let obj = self.objective();
            if !obj.is_finite() || self.h.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    stage,
                    iteration: sweep + 1,
                });
            }
            log.push(obj);
        }
        Ok(log)
    }
}

/// Entries below this are set to zero after each update. They cannot
/// recover within any practical number of sweeps, and left alone they decay
/// into subnormal floats, which slow every product they enter many times
/// over.
const FLUSH: f64 = 1e-150;

fn flush(v: &mut f64) {
    if *v < FLUSH {
        *v = 0.0;
    }
}

fn ratio(x: ArrayView2<f64>, lambda: &Array2<f64>, eps: f64) -> Array2<f64> {
    Zip::from(x).and(lambda).map_collect(|&x, &l| x / (l + eps))
}

/// Multiplicative template update for one song:
/// `W[m,k,tau] *= sum_phi up_phi(X / L) right_tau(H_phi)^T / sum_phi 1 right_tau(H_phi)^T`,
/// with the ones matrix shifted up like the numerator so that both sums run
/// over the same terms.
fn update_templates(
    w: &mut TemplateTensor,
    x: ArrayView2<f64>,
    lambda: &Array2<f64>,
    stacked_h: &Array2<f64>,
    f: usize,
    eps: f64,
) {
    let (m, k, t) = w.0.dim();
    let q = ratio(x, lambda, eps);
    let g = par_dot(q.view(), stacked_h.t());
    let row_sums = stacked_h.sum_axis(Axis(1));
    for kk in 0..k {
        for tau in 0..t {
            for mm in 0..m {
                let (mut num, mut den) = (0.0, 0.0);
                for phi in 0..f.min(m - mm) {
                    let idx = stack_index(kk, phi, tau, f, t);
                    num += g[[mm + phi, idx]];
                    den += row_sums[idx];
                }
                let v = &mut w.0[[mm, kk, tau]];
                *v *= num / (den + eps);
                flush(v);
            }
        }
    }
}

/// Adds one song's numerator and denominator terms of the activation update:
/// `sum_tau down_phi(W_tau)^T left_tau(X / L)` and the same with a ones matrix.
fn accumulate_activation_terms(
    stacked_w: &Array2<f64>,
    x: ArrayView2<f64>,
    lambda: &Array2<f64>,
    t: usize,
    eps: f64,
    num: &mut Array3<f64>,
    den: &mut Array3<f64>,
) {
    let (k, n, f) = num.dim();
    let q = ratio(x, lambda, eps);
    let r = par_dot(stacked_w.t(), q.view());
    let col_sums = stacked_w.sum_axis(Axis(0));
    for kk in 0..k {
        for phi in 0..f {
            for tau in 0..t.min(n) {
                let idx = stack_index(kk, phi, tau, f, t);
                let row = r.row(idx);
                let c = col_sums[idx];
                for nn in 0..n - tau {
                    num[[kk, nn, phi]] += row[nn + tau];
                    den[[kk, nn, phi]] += c;
                }
            }
        }
    }
}

fn check_input(x: ArrayView2<f64>, cfg: &Nmf2dConfig, what: &'static str) -> Result<()> {
    check_nonnegative(x, what)?;
    cfg.check_dims(x.nrows(), x.ncols())
}

fn rng(cfg: &Nmf2dConfig, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    rng
}

/// Jointly factorizes two equally sized magnitude spectrograms with separate
/// templates `W1`, `W2` and shared activations `H1`, minimizing
/// `D(X1 || L(W1, H1)) + D(X2 || L(W2, H1))`. Each sweep updates `W1`, then
/// `W2`, then `H1`, each against the freshest reconstruction.
pub fn joint_factorize(x1: ArrayView2<f64>, x2: ArrayView2<f64>, cfg: &Nmf2dConfig) -> Result<JointFactorization> {
    let (w1, w2, h1) = joint_init(x1, x2, cfg)?;
    let mut problem = Problem::new(
        vec![x1.view(), x2.view()],
        vec![w1, w2],
        vec![false, false],
        h1,
        cfg.epsilon,
    );
    let objective = problem.run(cfg.iterations, "joint factorization")?;
    let mut ws = problem.ws.into_iter();
    Ok(JointFactorization {
        w1: ws.next().unwrap(),
        w2: ws.next().unwrap(),
        h1: problem.h,
        objective,
        pretrain_objective: Vec::new(),
    })
}

/// Variant of [`joint_factorize`] that first factorizes `x1` alone, then
/// runs the joint sweeps with `W1` held fixed.
pub fn joint_factorize_pretrained(
    x1: ArrayView2<f64>,
    x2: ArrayView2<f64>,
    cfg: &Nmf2dConfig,
) -> Result<JointFactorization> {
    let (w1, w2, h1) = joint_init(x1, x2, cfg)?;
    let mut solo = Problem::new(vec![x1], vec![w1], vec![false], h1, cfg.epsilon);
    let pretrain_objective = solo.run(cfg.iterations, "template pretraining")?;
    let w1 = solo.ws.pop().unwrap();
    let mut problem = Problem::new(
        vec![x1.view(), x2.view()],
        vec![w1, w2],
        vec![true, false],
        solo.h,
        cfg.epsilon,
    );
    let objective = problem.run(cfg.iterations, "joint factorization")?;
    let mut ws = problem.ws.into_iter();
    Ok(JointFactorization {
        w1: ws.next().unwrap(),
        w2: ws.next().unwrap(),
        h1: problem.h,
        objective,
        pretrain_objective,
    })
}

fn joint_init(
    x1: ArrayView2<f64>,
    x2: ArrayView2<f64>,
    cfg: &Nmf2dConfig,
) -> Result<(TemplateTensor, TemplateTensor, ActivationTensor)> {
    cfg.validate()?;
    if x1.dim() != x2.dim() {
        return Err(Error::shape(
            "joint factorization inputs",
            format!("{:?}", x1.dim()),
            format!("{:?}", x2.dim()),
        ));
    }
    check_input(x1, cfg, "first factorization input")?;
    check_input(x2, cfg, "second factorization input")?;
    let (m, n) = x1.dim();
    let (k, t, f) = (cfg.components, cfg.time_lags, cfg.freq_shifts);
    let mut rng = rng(cfg, 0);
    let w1 = TemplateTensor::random(m, k, t, &mut rng);
    let w2 = TemplateTensor::random(m, k, t, &mut rng);
    let h1 = ActivationTensor::random(k, n, f, &mut rng);
    Ok((w1, w2, h1))
}

/// Fits activations for `x` with the templates `w` held fixed. The number of
/// shifts and updates come from `cfg`; the template tensor fixes the
/// component count and lags.
pub fn fit_activations(x: ArrayView2<f64>, w: &TemplateTensor, cfg: &Nmf2dConfig) -> Result<ActivationFit> {
    cfg.validate()?;
    check_input(x, cfg, "activation fitting input")?;
    if x.nrows() != w.bins() {
        return Err(Error::shape("activation fitting bins", w.bins(), x.nrows()));
    }
    if w.lags() > x.ncols() {
        return Err(Error::InvalidConfig(format!(
            "{} template lags exceed {} frames",
            w.lags(),
            x.ncols()
        )));
    }
    if w.0.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::NegativeInput("templates"));
    }
    let mut rng = rng(cfg, 1);
    let h = ActivationTensor::random(w.components(), x.ncols(), cfg.freq_shifts, &mut rng);
    let mut problem = Problem::new(vec![x], vec![w.clone()], vec![true], h, cfg.epsilon);
    let objective = problem.run(cfg.iterations, "activation fitting")?;
    Ok(ActivationFit {
        h: problem.h,
        objective,
    })
}

/// Plain-text convergence log with one `sweep, objective` row per sweep,
/// counting from 1.
pub fn convergence_log(objective: &[f64]) -> String {
    let mut out = String::from("sweep, objective\n");
    for (i, v) in objective.iter().enumerate() {
        out.push_str(&format!("{}, {v:e}\n", i + 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn cfg(k: usize, t: usize, f: usize, iters: usize) -> Nmf2dConfig {
        Nmf2dConfig {
            components: k,
            time_lags: t,
            freq_shifts: f,
            iterations: iters,
            ..Default::default()
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Array2::<f64>::ones((6, 8));
        let b = Array2::<f64>::ones((6, 9));
        assert!(matches!(
            joint_factorize(a.view(), b.view(), &cfg(2, 2, 2, 1)),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(joint_factorize(a.view(), a.view(), &cfg(2, 9, 2, 1)).is_err());
        assert!(joint_factorize(a.view(), a.view(), &cfg(2, 2, 7, 1)).is_err());
    }

    #[test]
    fn zero_target_drives_activations_to_zero() {
        let w = TemplateTensor(Array3::from_shape_fn((8, 2, 3), |(m, k, t)| {
            0.2 + ((m + k + t) % 4) as f64
        }));
        let x = Array2::zeros((8, 12));
        let fit = fit_activations(x.view(), &w, &cfg(2, 3, 2, 300)).unwrap();
        assert!(
            fit.h.0.iter().all(|&v| v <= 1e-6),
            "max {}",
            fit.h.0.fold(0.0f64, |a, &b| a.max(b))
        );
    }

    #[test]
    fn same_seed_same_result() {
        let x = Array2::from_shape_fn((10, 12), |(i, j)| ((i * 7 + j * 3) % 5) as f64);
        let c = cfg(2, 3, 2, 20);
        let a = joint_factorize(x.view(), x.view(), &c).unwrap();
        let b = joint_factorize(x.view(), x.view(), &c).unwrap();
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.h1, b.h1);
    }

    #[test]
    fn pretraining_keeps_first_templates_fixed_in_second_phase() {
        let x = Array2::from_shape_fn((10, 12), |(i, j)| ((i * 7 + j * 3) % 5) as f64 + 0.1);
        let c = cfg(2, 3, 2, 15);
        let r = joint_factorize_pretrained(x.view(), x.view(), &c).unwrap();
        assert_eq!(r.pretrain_objective.len(), 15);
        assert_eq!(r.objective.len(), 15);
        for w in r.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9));
        }
    }

    #[test]
    fn log_format() {
        assert_eq!(convergence_log(&[2.5, 1.0]), "sweep, objective\n1, 2.5e0\n2, 1e0\n");
    }
}
