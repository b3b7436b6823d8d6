//! Statistics pooling over decoder activations.
//!
//! Rows of a hidden activation matrix are grouped by hard cluster label. Each
//! row is concatenated with its group's summary `(log(1+N_k), μ_k, σ_k)` and
//! the concatenation is projected back to the original width by a learned
//! affine map. The pass-through projection makes the layer an exact identity,
//! which is how a freshly inserted pool starts out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Spread statistic attached to each group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spread {
    /// Population standard deviation.
    #[default]
    Std,
    /// Population variance.
    Variance,
}

/// Below this standard deviation the σ-path gradient is taken to be zero.
const SIGMA_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterStats<T> {
    pub count: usize,
    pub mean: Vec<T>,
    pub spread: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct PoolOutput<T> {
    pub stats: Vec<ClusterStats<T>>,
    /// Concatenated per-sample features, `n × (3w + 1)`.
    pub features: Matrix<T>,
    pub augmented: Matrix<T>,
    pub groups: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct PoolGrads<T> {
    pub grad_h: Matrix<T>,
    pub grad_proj: Matrix<T>,
    pub grad_bias: Vec<T>,
}

/// Learned parameters of the pooling layer.
#[derive(Clone, Debug, PartialEq)]
pub struct StatPool<T> {
    pub proj: Matrix<T>,
    pub bias: Vec<T>,
    pub spread: Spread,
}

/// Width of `[h ∥ log(1+N) ∥ μ ∥ σ]` for a hosting layer of width `w`.
pub fn feature_width(w: usize) -> usize {
    3 * w + 1
}

impl<T: Scalar> StatPool<T> {
    /// Identity over the `h` block, zero over the statistics block.
    pub fn pass_through(width: usize, spread: Spread) -> Self {
        let mut proj = Matrix::zeros(feature_width(width), width);
        for i in 0..width {
            proj.set(i, i, T::one());
        }
        Self {
            proj,
            bias: vec![T::zero(); width],
            spread,
        }
    }

    pub fn width(&self) -> usize {
        self.proj.cols()
    }

    pub fn forward(&self, h: &Matrix<T>, labels: &[usize], k: usize) -> Result<PoolOutput<T>> {
        pool_forward(h, labels, k, &self.proj, &self.bias, self.spread)
    }

    pub fn backward(
        &self,
        out: &PoolOutput<T>,
        grad_augmented: &Matrix<T>,
        h: &Matrix<T>,
    ) -> Result<PoolGrads<T>> {
        pool_backward(out, grad_augmented, h, &self.proj, self.spread)
    }

    pub fn apply(&mut self, grads: &PoolGrads<T>, lr: T) -> Result<()> {
        self.proj.axpy(-lr, &grads.grad_proj)?;
        if grads.grad_bias.len() != self.bias.len() {
            return Err(Error::len("StatPool::apply", self.bias.len(), grads.grad_bias.len()));
        }
        for (b, &g) in self.bias.iter_mut().zip(&grads.grad_bias) {
            *b = *b - lr * g;
        }
        Ok(())
    }
}

/// Per-group statistics of the rows of `h`.
pub fn cluster_stats<T: Scalar>(
    h: &Matrix<T>,
    labels: &[usize],
    k: usize,
    spread: Spread,
) -> Result<Vec<ClusterStats<T>>> {
    if labels.len() != h.rows() {
        return Err(Error::len("pool_forward", h.rows(), labels.len()));
    }
    let w = h.cols();
    let mut counts = vec![0usize; k];
    let mut sums = vec![vec![T::zero(); w]; k];
    for (row, &lab) in h.row_iter().zip(labels) {
        if lab >= k {
            return Err(Error::Parameter(format!("label {lab} out of range for {k} clusters")));
        }
        counts[lab] += 1;
        for (s, &v) in sums[lab].iter_mut().zip(row) {
            *s = *s + v;
        }
    }
    let means: Vec<Vec<T>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| {
            let n = T::from_count(c.max(1));
            s.into_iter().map(|v| v / n).collect()
        })
        .collect();
    let mut sq = vec![vec![T::zero(); w]; k];
    for (row, &lab) in h.row_iter().zip(labels) {
        for ((acc, &v), &mu) in sq[lab].iter_mut().zip(row).zip(&means[lab]) {
            let d = v - mu;
            *acc = *acc + d * d;
        }
    }
    Ok(counts
        .iter()
        .zip(means)
        .zip(sq)
        .map(|((&count, mean), sq)| {
            let n = T::from_count(count.max(1));
            let spread = sq
                .into_iter()
                .map(|s| match spread {
                    Spread::Std => (s / n).sqrt(),
                    Spread::Variance => s / n,
                })
                .collect();
            ClusterStats { count, mean, spread }
        })
        .collect())
}

pub fn pool_forward<T: Scalar>(
    h: &Matrix<T>,
    labels: &[usize],
    k: usize,
    proj: &Matrix<T>,
    proj_bias: &[T],
    spread: Spread,
) -> Result<PoolOutput<T>> {
    let w = h.cols();
    let fw = feature_width(w);
    if proj.rows() != fw || proj.cols() != w {
        return Err(Error::shape("pool_forward", (fw, w), proj.shape()));
    }
    if proj_bias.len() != w {
        return Err(Error::len("pool_forward", w, proj_bias.len()));
    }
    let stats = cluster_stats(h, labels, k, spread)?;
    let mut feats = Vec::with_capacity(h.rows() * fw);
    for (row, &lab) in h.row_iter().zip(labels) {
        let st = &stats[lab];
        feats.extend_from_slice(row);
        feats.push(T::from_count(st.count).ln_1p());
        feats.extend_from_slice(&st.mean);
        feats.extend_from_slice(&st.spread);
    }
    let features = Matrix::from_raw(h.rows(), fw, feats);
    let mut augmented = features.matmul(proj)?;
    augmented.add_row_vector(proj_bias)?;
    Ok(PoolOutput {
        stats,
        features,
        augmented,
        groups: labels.to_vec(),
    })
}

/// Reverse pass. Group membership and the cardinality channel are constants;
/// gradients flow through the projection, the `h` block, μ and σ.
pub fn pool_backward<T: Scalar>(
    out: &PoolOutput<T>,
    grad_augmented: &Matrix<T>,
    h: &Matrix<T>,
    proj: &Matrix<T>,
    spread: Spread,
) -> Result<PoolGrads<T>> {
    let w = h.cols();
    let fw = feature_width(w);
    if grad_augmented.shape() != out.augmented.shape()
        || h.rows() != out.groups.len()
        || out.features.shape() != (h.rows(), fw)
        || proj.shape() != (fw, w)
    {
        return Err(Error::TraceMismatch(format!(
            "pool backward: grad {:?}, augmented {:?}, h {:?}, proj {:?}",
            grad_augmented.shape(),
            out.augmented.shape(),
            h.shape(),
            proj.shape()
        )));
    }
    let grad_bias = grad_augmented.column_sums();
    let grad_proj = out.features.t_matmul(grad_augmented)?;
    let grad_feat = grad_augmented.matmul_t(proj)?;

    let k = out.stats.len();
    let mut g_mu = vec![vec![T::zero(); w]; k];
    let mut g_sp = vec![vec![T::zero(); w]; k];
    for (i, &lab) in out.groups.iter().enumerate() {
        let gf = grad_feat.row(i);
        for d in 0..w {
            g_mu[lab][d] = g_mu[lab][d] + gf[w + 1 + d];
            g_sp[lab][d] = g_sp[lab][d] + gf[2 * w + 1 + d];
        }
    }

    let eps = T::of(SIGMA_EPS);
    let two = T::of(2.0);
    let mut grad_h = Matrix::zeros(h.rows(), w);
    for (i, &lab) in out.groups.iter().enumerate() {
        let st = &out.stats[lab];
        let n = T::from_count(st.count);
        let gf = grad_feat.row(i);
        let hi = h.row(i);
        let gh = grad_h.row_mut(i);
        for d in 0..w {
            let centered = hi[d] - st.mean[d];
            let spread_term = match spread {
                Spread::Std if st.spread[d] > eps => centered / (n * st.spread[d]),
                Spread::Std => T::zero(),
                Spread::Variance => two * centered / n,
            };
            gh[d] = gf[d] + g_mu[lab][d] / n + g_sp[lab][d] * spread_term;
        }
    }
    Ok(PoolGrads {
        grad_h,
        grad_proj,
        grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_f64_rows(rows).unwrap()
    }

    #[test]
    fn identical_rows_have_zero_spread() {
        let h = m(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        let st = cluster_stats(&h, &[0, 0, 0], 1, Spread::Std).unwrap();
        assert_eq!(st[0].count, 3);
        assert_eq!(st[0].mean, vec![1.0, 2.0]);
        assert_eq!(st[0].spread, vec![0.0, 0.0]);
    }

    #[test]
    fn population_std_of_two_points() {
        let h = m(&[&[0.0], &[2.0]]);
        let st = cluster_stats(&h, &[0, 0], 1, Spread::Std).unwrap();
        assert_eq!((st[0].count, st[0].mean[0], st[0].spread[0]), (2, 1.0, 1.0));
        let var = cluster_stats(&h, &[0, 0], 1, Spread::Variance).unwrap();
        assert_eq!(var[0].spread[0], 1.0);
    }

    #[test]
    fn pass_through_is_identity() {
        let mut rng = Rng::new(4);
        let h = Matrix::<f64>::from_raw(5, 3, (0..15).map(|_| rng.normal()).collect());
        let pool = StatPool::pass_through(3, Spread::Std);
        let out = pool.forward(&h, &[0, 1, 0, 2, 1], 3).unwrap();
        assert_eq!(out.augmented, h);
        assert_eq!(out.stats.iter().map(|s| s.count).sum::<usize>(), 5);
    }

    #[test]
    fn label_out_of_range() {
        let pool = StatPool::<f64>::pass_through(1, Spread::Std);
        assert!(matches!(
            pool.forward(&m(&[&[1.0]]), &[3], 2),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let h = m(&[&[0.5, -1.0], &[2.0, 0.0], &[1.0, 1.0]]);
        let mut rng = Rng::new(2);
        let pool = StatPool {
            proj: crate::numerics::glorot_init::<f64>(&mut rng, 7, 2).unwrap(),
            bias: vec![0.1, 0.2],
            spread: Spread::Std,
        };
        let out = pool.forward(&h, &[0, 0, 1], 2).unwrap();
        let g = pool.backward(&out, &Matrix::zeros(3, 2), &h).unwrap();
        assert!(g.grad_h.data().iter().all(|&v| v == 0.0));
        assert!(g.grad_proj.data().iter().all(|&v| v == 0.0));
        assert!(g.grad_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singleton_clusters_double_through_mean_path() {
        // identity over both the h block and the μ block: augmented = h + μ
        let w = 2;
        let mut pool = StatPool::<f64>::pass_through(w, Spread::Std);
        for d in 0..w {
            pool.proj.set(w + 1 + d, d, 1.0);
        }
        let h = m(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let out = pool.forward(&h, &[0, 1], 2).unwrap();
        assert_eq!(out.augmented, h.scale(2.0));
        let ga = m(&[&[0.5, -1.0], &[2.0, 0.25]]);
        let g = pool.backward(&out, &ga, &h).unwrap();
        assert_eq!(g.grad_h, ga.scale(2.0));
    }

    #[test]
    fn stale_shapes_are_rejected() {
        let pool = StatPool::<f64>::pass_through(2, Spread::Std);
        let h = m(&[&[1.0, 2.0]]);
        let out = pool.forward(&h, &[0], 1).unwrap();
        assert!(matches!(
            pool.backward(&out, &Matrix::zeros(2, 2), &h),
            Err(Error::TraceMismatch(_))
        ));
    }

    #[test]
    fn permutation_within_cluster_is_equivariant() {
        let h = m(&[&[0.0, 1.0], &[2.0, 5.0], &[4.0, -1.0], &[7.0, 7.0]]);
        let labels = [0, 0, 0, 1];
        let mut rng = Rng::new(8);
        let pool = StatPool {
            proj: crate::numerics::glorot_init::<f64>(&mut rng, 7, 2).unwrap(),
            bias: vec![0.0, 0.3],
            spread: Spread::Std,
        };
        let a = pool.forward(&h, &labels, 2).unwrap();
        let perm = [2, 0, 1, 3];
        let hp = h.select_rows(&perm);
        let b = pool.forward(&hp, &labels, 2).unwrap();
        for k in 0..2 {
            assert_eq!(a.stats[k].count, b.stats[k].count);
            for d in 0..2 {
                assert!((a.stats[k].mean[d] - b.stats[k].mean[d]).abs() < 1e-12);
                assert!((a.stats[k].spread[d] - b.stats[k].spread[d]).abs() < 1e-12);
            }
        }
        let expected = a.augmented.select_rows(&perm);
        assert!(b.augmented.max_abs_diff(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn duplicating_members_doubles_count_only() {
        let h = m(&[&[0.0, 1.0], &[2.0, 5.0], &[4.0, -1.0]]);
        let st = cluster_stats(&h, &[0, 0, 0], 1, Spread::Std).unwrap();
        let hd = h.select_rows(&[0, 1, 2, 0, 1, 2]);
        let sd = cluster_stats(&hd, &[0; 6], 1, Spread::Std).unwrap();
        assert_eq!(sd[0].count, 2 * st[0].count);
        for d in 0..2 {
            assert!((sd[0].mean[d] - st[0].mean[d]).abs() < 1e-12);
            assert!((sd[0].spread[d] - st[0].spread[d]).abs() < 1e-12);
        }
    }
}
