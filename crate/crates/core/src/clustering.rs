//! Clustering mathematics: k-means initialization, Student's-t soft
//! assignment, the frequency-weighted target distribution, the KL loss and
//! its analytic gradients.

use crate::error::{Error, Result};
use crate::numerics::{pairwise_sq_dist, row_normalize, sq_dist, Matrix, Rng};
use crate::scalar::Scalar;

const LLOYD_MAX_ITERS: usize = 300;
const DENOM_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct KMeansResult<T> {
    pub centroids: Matrix<T>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares.
    pub sse: T,
}

/// Best of `restarts` Lloyd runs seeded with k-means++.
pub fn kmeans_init<T: Scalar>(
    z: &Matrix<T>,
    k: usize,
    rng: &mut Rng,
    restarts: usize,
) -> Result<KMeansResult<T>> {
    let n = z.rows();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("k = {k} must lie in 1..={n}")));
    }
    let mut best: Option<KMeansResult<T>> = None;
    for _ in 0..restarts.max(1) {
        let seeds = kmeans_plus_plus(z, k, rng)?;
        let run = lloyd(z, seeds)?;
        if best.as_ref().map_or(true, |b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn kmeans_plus_plus<T: Scalar>(z: &Matrix<T>, k: usize, rng: &mut Rng) -> Result<Matrix<T>> {
    let n = z.rows();
    let mut chosen = vec![rng.below(n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(z.row(i), z.row(chosen[0])).to_f64_lossy())
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateData(format!(
                "fewer than {k} distinct points"
            )));
        }
        let mut target = rng.uniform() * total;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
        }
        // rounding can leave `pick` on a zero-weight tail point
        if d2[pick] == 0.0 {
            pick = d2
                .iter()
                .enumerate()
                .rev()
                .find(|(_, &d)| d > 0.0)
                .map(|(i, _)| i)
                .expect("positive total");
        }
        chosen.push(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(z.row(i), z.row(pick)).to_f64_lossy());
        }
    }
    Ok(z.select_rows(&chosen))
}

fn nearest<T: Scalar>(row: &[T], centroids: &Matrix<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (j, c) in centroids.row_iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn lloyd<T: Scalar>(z: &Matrix<T>, mut centroids: Matrix<T>) -> Result<KMeansResult<T>> {
    let (n, d) = z.shape();
    let k = centroids.rows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..LLOYD_MAX_ITERS {
        let mut changed = false;
        let mut dists = vec![T::zero(); n];
        for i in 0..n {
            let (j, dist) = nearest(z.row(i), &centroids);
            dists[i] = dist;
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        fix_empty(z, &mut centroids, &mut labels, &mut dists);
        if !changed {
            break;
        }
        let mut sums = Matrix::<T>::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &j) in labels.iter().enumerate() {
            counts[j] += 1;
            for (s, &v) in sums.row_mut(j).iter_mut().zip(z.row(i)) {
                *s = *s + v;
            }
        }
        for j in 0..k {
            let c = T::from_count(counts[j]);
            for (dst, &s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                *dst = s / c;
            }
        }
    }
    let sse = (0..n)
        .map(|i| sq_dist(z.row(i), centroids.row(labels[i])))
        .sum();
    Ok(KMeansResult {
        centroids,
        labels,
        sse,
    })
}

/// Moves each empty centroid onto the point currently farthest from its own
/// centroid, taking that point from a cluster with at least two members.
fn fix_empty<T: Scalar>(z: &Matrix<T>, centroids: &mut Matrix<T>, labels: &mut [usize], dists: &mut [T]) {
    let k = centroids.rows();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            });
        if let Some(i) = donor {
            counts[labels[i]] -= 1;
            counts[j] = 1;
            labels[i] = j;
            dists[i] = T::zero();
            centroids.row_mut(j).copy_from_slice(z.row(i));
        }
    }
}

/// Student's-t soft assignment
/// `q_ij ∝ (1 + ‖z_i − m_j‖²/α)^{-(α+1)/2}`.
pub fn soft_assign<T: Scalar>(z: &Matrix<T>, centroids: &Matrix<T>, alpha: T) -> Result<Matrix<T>> {
    if centroids.rows() == 0 {
        return Err(Error::Parameter("soft assignment needs at least one centroid".into()));
    }
    if !(alpha > T::zero()) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    let d = pairwise_sq_dist(z, centroids)?;
    let expo = -(alpha + T::one()) / T::of(2.0);
    let kernel = if alpha == T::one() {
        d.map(|v| (T::one() + v).recip())
    } else {
        d.map(|v| (T::one() + v / alpha).powf(expo))
    };
    row_normalize(&kernel)
}

/// Soft cluster frequencies `u_j = Σ_i q_ij`.
pub fn cluster_frequency<T: Scalar>(q: &Matrix<T>) -> Vec<T> {
    q.column_sums()
}

/// Row-wise argmax; ties resolve to the lowest index.
pub fn assign_labels<T: Scalar>(q: &Matrix<T>) -> Vec<usize> {
    q.row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Hard cardinalities `N_k`: how many rows have their argmax at `k`.
pub fn estimate_cardinality<T: Scalar>(q: &Matrix<T>) -> Vec<usize> {
    let mut counts = vec![0usize; q.cols()];
    for l in assign_labels(q) {
        counts[l] += 1;
    }
    counts
}

/// Per-cluster sample frequency
/// `v_j = Σ_i sqrt( (Σ_k N_k / max(N_j,1)) · (1−q_ij)^γ · (−ln q_ij) )`.
pub fn sample_frequency<T: Scalar>(q: &Matrix<T>, cardinality: &[usize], gamma: T) -> Result<Vec<T>> {
    if !(gamma >= T::zero()) {
        return Err(Error::Parameter(format!("gamma must be non-negative, got {gamma}")));
    }
    if cardinality.len() != q.cols() {
        return Err(Error::len("sample_frequency", q.cols(), cardinality.len()));
    }
    let total = T::from_count(cardinality.iter().sum());
    let ratio: Vec<T> = cardinality
        .iter()
        .map(|&n| total / T::from_count(n.max(1)))
        .collect();
    let mut v = vec![T::zero(); q.cols()];
    for row in q.row_iter() {
        for ((acc, &qij), &r) in v.iter_mut().zip(row).zip(&ratio) {
            let neg_log = -qij.guarded_ln();
            let term = r * (T::one() - qij).powf(gamma) * neg_log;
            *acc = *acc + term.max(T::zero()).sqrt();
        }
    }
    Ok(v)
}

/// Target distribution `p_ij ∝ q_ij² / (u_j + v_j)`, renormalized per row.
/// Passing `v = 0` gives the DEC target `q²/u_j`.
pub fn target_distribution<T: Scalar>(q: &Matrix<T>, u: &[T], v: &[T]) -> Result<Matrix<T>> {
    if u.len() != q.cols() || v.len() != q.cols() {
        return Err(Error::Shape {
            op: "target_distribution",
            left: format!("{} clusters", q.cols()),
            right: format!("u len {}, v len {}", u.len(), v.len()),
        });
    }
    let floor = T::of(DENOM_FLOOR);
    let denom: Vec<T> = u.iter().zip(v).map(|(&a, &b)| (a + b).max(floor)).collect();
    let mut p = q.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        for (x, &d) in row.iter_mut().zip(&denom) {
            *x = *x * *x / d;
        }
        let sum: T = row.iter().copied().sum();
        if !(sum > T::zero()) || !sum.is_finite() {
            return Err(Error::DegenerateAssignment { row: r });
        }
        for x in row.iter_mut() {
            *x = *x / sum;
        }
    }
    Ok(p)
}

/// `KL(P‖Q) = Σ_i Σ_j p_ij ln(p_ij / q_ij)`, with `0·ln 0 = 0`.
pub fn kl_loss<T: Scalar>(p: &Matrix<T>, q: &Matrix<T>) -> Result<T> {
    p.same_shape(q, "kl_loss")?;
    Ok(p
        .data()
        .iter()
        .zip(q.data())
        .map(|(&pv, &qv)| {
            if pv > T::zero() {
                pv * (pv.guarded_ln() - qv.guarded_ln())
            } else {
                T::zero()
            }
        })
        .sum())
}

fn check_grad_shapes<T: Scalar>(
    z: &Matrix<T>,
    centroids: &Matrix<T>,
    p: &Matrix<T>,
    q: &Matrix<T>,
) -> Result<()> {
    if z.cols() != centroids.cols() {
        return Err(Error::shape("clustering gradient", z.shape(), centroids.shape()));
    }
    let expect = (z.rows(), centroids.rows());
    if p.shape() != expect {
        return Err(Error::shape("clustering gradient", expect, p.shape()));
    }
    if q.shape() != expect {
        return Err(Error::shape("clustering gradient", expect, q.shape()));
    }
    Ok(())
}

/// `∂L_c/∂z_i = 2 Σ_j (1+‖z_i−m_j‖²)^{-1} (p_ij − q_ij)(z_i − m_j)` at fixed P,
/// for α = 1.
pub fn grad_embedding<T: Scalar>(
    z: &Matrix<T>,
    centroids: &Matrix<T>,
    p: &Matrix<T>,
    q: &Matrix<T>,
) -> Result<Matrix<T>> {
    check_grad_shapes(z, centroids, p, q)?;
    let two = T::of(2.0);
    let mut g = Matrix::zeros(z.rows(), z.cols());
    for i in 0..z.rows() {
        let zi = z.row(i);
        for (j, mj) in centroids.row_iter().enumerate() {
            let w = two * (p.get(i, j) - q.get(i, j)) / (T::one() + sq_dist(zi, mj));
            for ((gv, &a), &b) in g.row_mut(i).iter_mut().zip(zi).zip(mj) {
                *gv = *gv + w * (a - b);
            }
        }
    }
    Ok(g)
}

/// `∂L_c/∂m_j = 2 Σ_i (1+‖z_i−m_j‖²)^{-1} (q_ij − p_ij)(z_i − m_j)` at fixed P,
/// for α = 1.
pub fn grad_centroids<T: Scalar>(
    z: &Matrix<T>,
    centroids: &Matrix<T>,
    p: &Matrix<T>,
    q: &Matrix<T>,
) -> Result<Matrix<T>> {
    check_grad_shapes(z, centroids, p, q)?;
    let two = T::of(2.0);
    let mut g = Matrix::zeros(centroids.rows(), centroids.cols());
    for (i, zi) in z.row_iter().enumerate() {
        for j in 0..centroids.rows() {
            let mj = centroids.row(j);
            let w = two * (q.get(i, j) - p.get(i, j)) / (T::one() + sq_dist(zi, mj));
            let gj = g.row_mut(j);
            for d in 0..zi.len() {
                gj[d] = gj[d] + w * (zi[d] - mj[d]);
            }
        }
    }
    Ok(g)
}

/// `m_j ← m_j − (η / batch) · grad_j`.
pub fn update_centroids<T: Scalar>(centroids: &Matrix<T>, grad: &Matrix<T>, eta: T, batch: usize) -> Result<Matrix<T>> {
    let mut out = centroids.clone();
    out.axpy(-eta / T::from_count(batch.max(1)), grad)?;
    Ok(out)
}

/// Re-seeds centroids of empty clusters onto the least confident embeddings
/// (smallest max-q), one distinct sample per empty cluster. Returns the
/// re-seeded cluster ids.
pub fn reseed_empty_clusters<T: Scalar>(
    z: &Matrix<T>,
    q: &Matrix<T>,
    centroids: &mut Matrix<T>,
    cardinality: &[usize],
) -> Vec<usize> {
    let empty: Vec<usize> = (0..cardinality.len()).filter(|&j| cardinality[j] == 0).collect();
    if empty.is_empty() || z.rows() == 0 {
        return Vec::new();
    }
    let mut confidence: Vec<(T, usize)> = q
        .row_iter()
        .enumerate()
        .map(|(i, row)| (row.iter().copied().fold(T::neg_infinity(), T::max), i))
        .collect();
    confidence.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    for (&j, &(_, i)) in empty.iter().zip(&confidence) {
        centroids.row_mut(j).copy_from_slice(z.row(i));
    }
    empty.into_iter().take(confidence.len()).collect()
}

/// Snapshot of every clustering quantity at one target update.
#[derive(Clone, Debug)]
pub struct ClusterState<T> {
    pub centroids: Matrix<T>,
    pub q: Matrix<T>,
    pub p: Matrix<T>,
    pub u: Vec<T>,
    pub v: Vec<T>,
    pub cardinality: Vec<usize>,
    pub alpha: T,
    pub gamma: T,
}

impl<T: Scalar> ClusterState<T> {
    /// Computes Q, u, N, v and P for embeddings `z`. With `weighted = false`
    /// the sample frequency is zero and P is the DEC target.
    pub fn compute(z: &Matrix<T>, centroids: Matrix<T>, alpha: T, gamma: T, weighted: bool) -> Result<Self> {
        let q = soft_assign(z, &centroids, alpha)?;
        let u = cluster_frequency(&q);
        let cardinality = estimate_cardinality(&q);
        let v = if weighted {
            sample_frequency(&q, &cardinality, gamma)?
        } else {
            vec![T::zero(); q.cols()]
        };
        let p = target_distribution(&q, &u, &v)?;
        Ok(Self {
            centroids,
            q,
            p,
            u,
            v,
            cardinality,
            alpha,
            gamma,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn labels(&self) -> Vec<usize> {
        assign_labels(&self.q)
    }
}
