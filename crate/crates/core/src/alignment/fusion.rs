//! Cross-similarity between two songs by similarity network fusion over
//! several feature kinds.

use ndarray::{s, Array2, Axis};

use super::features::FeatureMatrix;
use crate::error::{Error, Result};

/// Nearest neighbors kept in each sparse diffusion kernel.
pub const DEFAULT_NEIGHBORS: usize = 5;
/// Cross-diffusion rounds.
pub const DEFAULT_ITERATIONS: usize = 20;
/// Bandwidth scale of the affinity kernel.
const MU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub neighbors: usize,
    pub iterations: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            neighbors: DEFAULT_NEIGHBORS,
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

fn squared_distances(x: &Array2<f64>) -> Array2<f64> {
    let norms: Vec<f64> = x.outer_iter().map(|r| r.dot(&r)).collect();
    let gram = x.dot(&x.t());
    let n = x.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            (norms[i] + norms[j] - 2.0 * gram[[i, j]]).max(0.0)
        }
    })
}

/// Indices of the `k` nearest other rows of each row, ties to the lower index.
fn nearest(d2: &Array2<f64>, k: usize) -> Vec<Vec<usize>> {
    let n = d2.nrows();
    (0..n)
        .map(|i| {
            let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            idx.sort_by(|&a, &b| d2[[i, a]].total_cmp(&d2[[i, b]]).then(a.cmp(&b)));
            idx.truncate(k);
            idx
        })
        .collect()
}

/// Gaussian affinity `exp(-d^2 / (mu * sigma_ij))` with the locally adaptive
/// bandwidth `sigma_ij` = mean of the two points' average neighbor distance
/// and their own distance.
pub fn affinity(x: &Array2<f64>, neighbors: usize) -> Array2<f64> {
    let d2 = squared_distances(x);
    let n = d2.nrows();
    let k = neighbors.min(n.saturating_sub(1)).max(1);
    let knn = nearest(&d2, k);
    let local: Vec<f64> = (0..n)
        .map(|i| {
            if knn[i].is_empty() {
                0.0
            } else {
                knn[i].iter().map(|&j| d2[[i, j]].sqrt()).sum::<f64>() / knn[i].len() as f64
            }
        })
        .collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let sigma = (local[i] + local[j] + d2[[i, j]].sqrt()) / 3.0;
        if sigma > 0.0 {
            (-d2[[i, j]] / (MU * sigma)).exp()
        } else {
            1.0
        }
    })
}

/// Full kernel: half the mass on the diagonal, the rest spread over the row.
fn full_kernel(w: &Array2<f64>) -> Array2<f64> {
    let n = w.nrows();
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        let off: f64 = w.row(i).sum() - w[[i, i]];
        for j in 0..n {
            p[[i, j]] = if i == j {
                0.5
            } else if off > 0.0 {
                w[[i, j]] / (2.0 * off)
            } else {
                0.0
            };
        }
    }
    p
}

/// Sparse kernel: row-normalized affinities to the point itself and its `k`
/// nearest neighbors.
fn knn_kernel(w: &Array2<f64>, k: usize) -> Array2<f64> {
    let n = w.nrows();
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        idx.sort_by(|&a, &b| w[[i, b]].total_cmp(&w[[i, a]]).then(a.cmp(&b)));
        idx.truncate(k);
        idx.push(i);
        let total: f64 = idx.iter().map(|&j| w[[i, j]]).sum();
        for &j in &idx {
            s[[i, j]] = if total > 0.0 {
                w[[i, j]] / total
            } else {
                1.0 / idx.len() as f64
            };
        }
    }
    s
}

fn stack(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("equal widths")
}

/// Cross-similarity `M x N` between the blocks of song A (rows) and song A'
/// (columns). Each feature kind gives an affinity graph over the blocks of
/// both songs; with several kinds the graphs are fused by cross-diffusion
/// and averaged. With one kind its affinity is returned unchanged.
pub fn fuse_similarity(
    features_a: &[FeatureMatrix],
    features_b: &[FeatureMatrix],
    cfg: &FusionConfig,
) -> Result<Array2<f64>> {
    if features_a.is_empty() || features_a.len() != features_b.len() {
        return Err(Error::shape("fusion feature kinds", features_a.len(), features_b.len()));
    }
    let m = features_a[0].blocks();
    let n = features_b[0].blocks();
    let mut affinities = Vec::new();
    for fa in features_a {
        let fb = features_b
            .iter()
            .find(|f| f.kind == fa.kind)
            .ok_or_else(|| Error::InvalidConfig(format!("feature kind {:?} missing on one side", fa.kind)))?;
        if fa.blocks() != m || fb.blocks() != n || fa.values.ncols() != fb.values.ncols() {
            return Err(Error::shape(
                "fusion features",
                format!("{m} x {} and {n} x {}", fa.values.ncols(), fa.values.ncols()),
                format!(
                    "{} x {} and {} x {}",
                    fa.blocks(),
                    fa.values.ncols(),
                    fb.blocks(),
                    fb.values.ncols()
                ),
            ));
        }
        affinities.push((fa.kind, affinity(&stack(&fa.values, &fb.values), cfg.neighbors)));
    }
    // fixed order so that the result does not depend on the order kinds were given
    affinities.sort_by_key(|(kind, _)| *kind);
    let fused = if affinities.len() == 1 {
        affinities.pop().unwrap().1
    } else {
        diffuse(&affinities.into_iter().map(|(_, w)| w).collect::<Vec<_>>(), cfg)
    };
    Ok(fused.slice(s![..m, m..]).to_owned())
}

fn diffuse(affinities: &[Array2<f64>], cfg: &FusionConfig) -> Array2<f64> {
    let views = affinities.len();
    let k = cfg.neighbors.min(affinities[0].nrows().saturating_sub(1)).max(1);
    let sparse: Vec<Array2<f64>> = affinities.iter().map(|w| knn_kernel(w, k)).collect();
    let mut full: Vec<Array2<f64>> = affinities.iter().map(full_kernel).collect();
    for _ in 0..cfg.iterations {
        let total = full.iter().fold(Array2::zeros(full[0].raw_dim()), |acc, p| acc + p);
        full = (0..views)
            .map(|v| {
                let others = (&total - &full[v]) / (views - 1) as f64;
                let p = sparse[v].dot(&others).dot(&sparse[v].t());
                let sym = (&p + &p.t()) * 0.5;
                full_kernel(&sym)
            })
            .collect();
    }
    full.iter().fold(Array2::zeros(full[0].raw_dim()), |acc, p| acc + p) / views as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::features::FeatureKind;
    use ndarray::array;

    #[test]
    fn affinity_is_symmetric_with_unit_diagonal() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0]];
        let w = affinity(&x, 2);
        for i in 0..4 {
            assert_eq!(w[[i, i]], 1.0);
            for j in 0..4 {
                assert!((w[[i, j]] - w[[j, i]]).abs() < 1e-15);
                assert!(w[[i, j]] > 0.0 && w[[i, j]] <= 1.0);
            }
        }
    }

    #[test]
    fn kernels_are_row_stochastic() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0], [1.0, 1.0]];
        let w = affinity(&x, 2);
        for k in [full_kernel(&w), knn_kernel(&w, 2)] {
            for row in k.outer_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_kinds_are_rejected() {
        let a = vec![FeatureMatrix {
            kind: FeatureKind::Chroma,
            values: Array2::zeros((3, 2)),
        }];
        let b = vec![FeatureMatrix {
            kind: FeatureKind::Mfcc,
            values: Array2::zeros((3, 2)),
        }];
        assert!(fuse_similarity(&a, &b, &FusionConfig::default()).is_err());
    }
}
