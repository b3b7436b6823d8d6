//! Clustering evaluation: accuracy under the best one-to-one matching, NMI
//! and ARI.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Co-occurrence counts between predicted clusters (rows) and true classes
/// (columns). Label ids are compacted in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub n: usize,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for &l in labels {
        ids.entry(l).or_insert(0usize);
    }
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::len("contingency table", pred.len(), truth.len()));
        }
        let (p, kp) = compact(pred);
        let (t, kt) = compact(truth);
        let mut counts = vec![vec![0usize; kt]; kp];
        for (&a, &b) in p.iter().zip(&t) {
            counts[a][b] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..kt).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            n: pred.len(),
        })
    }
}

/// Minimum-cost assignment on a rectangular cost matrix (padded to square
/// with zeros). Returns, for each row, its assigned column in the padded
/// problem; indices `>= cols` mean the row was left unmatched.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::Parameter("cost matrix is ragged".into()));
    }
    if cost.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("cost matrix has non-finite entries".into()));
    }
    let n = rows.max(cols);
    if n == 0 {
        return Ok(Vec::new());
    }
    let at = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            cost[i][j]
        } else {
            0.0
        }
    };
    // shortest augmenting path with potentials, 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment.truncate(rows);
    Ok(assignment)
}

fn check(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::len("metric", pred.len(), truth.len()));
    }
    Ok(())
}

/// Fraction of samples correct under the best cluster-to-class matching.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check(pred, truth)?;
    if pred.is_empty() {
        return Err(Error::Parameter("accuracy of an empty labeling".into()));
    }
    let table = ContingencyTable::new(pred, truth)?;
    let cost: Vec<Vec<f64>> = table
        .counts
        .iter()
        .map(|r| r.iter().map(|&c| -(c as f64)).collect())
        .collect();
    let assign = hungarian(&cost)?;
    let cols = table.col_sums.len();
    let matched: usize = assign
        .iter()
        .enumerate()
        .filter(|(_, &j)| j < cols)
        .map(|(i, &j)| table.counts[i][j])
        .sum();
    Ok(matched as f64 / table.n as f64)
}

/// How mutual information is normalized by the two entropies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NmiNorm {
    #[default]
    Geometric,
    Arithmetic,
}

fn entropy(marginal: &[usize], n: f64) -> f64 {
    marginal
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with geometric-mean normalization.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    nmi_with(pred, truth, NmiNorm::Geometric)
}

pub fn nmi_with(pred: &[usize], truth: &[usize], norm: NmiNorm) -> Result<f64> {
    check(pred, truth)?;
    if pred.is_empty() {
        return Ok(1.0);
    }
    let t = ContingencyTable::new(pred, truth)?;
    let n = t.n as f64;
    let hp = entropy(&t.row_sums, n);
    let ht = entropy(&t.col_sums, n);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).ln();
            }
        }
    }
    let denom = match norm {
        NmiNorm::Geometric => (hp * ht).sqrt(),
        NmiNorm::Arithmetic => 0.5 * (hp + ht),
    };
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check(pred, truth)?;
    let t = ContingencyTable::new(pred, truth)?;
    let index: f64 = t.counts.iter().flatten().map(|&c| choose2(c)).sum();
    let a: f64 = t.row_sums.iter().map(|&c| choose2(c)).sum();
    let b: f64 = t.col_sums.iter().map(|&c| choose2(c)).sum();
    let pairs = choose2(t.n);
    let expected = if pairs > 0.0 { a * b / pairs } else { 0.0 };
    let max = 0.5 * (a + b);
    let num = index - expected;
    let den = max - expected;
    if den == 0.0 {
        return Ok(if num == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(clustering_accuracy(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(clustering_accuracy(&[4, 4, 9, 2], &[0, 0, 1, 2]).unwrap(), 1.0);
        assert!(clustering_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn accuracy_with_unequal_cluster_counts() {
        // three predicted clusters against two classes: one cluster stays unmatched
        assert_eq!(clustering_accuracy(&[0, 0, 1, 2], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(clustering_accuracy(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.5);
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap() - 1.0).abs() < 1e-12);
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-12);
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);

        // pred=[0,0,0,1], truth=[0,0,1,1] by hand
        let hp = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let ht = 2f64.ln();
        let mi = 0.5 * (0.5f64 / (0.75 * 0.5)).ln()
            + 0.25 * (0.25f64 / (0.75 * 0.5)).ln()
            + 0.25 * (0.25f64 / (0.25 * 0.5)).ln();
        let expect = mi / (hp * ht).sqrt();
        assert!((nmi(&[0, 0, 0, 1], &[0, 0, 1, 1]).unwrap() - expect).abs() < 1e-12);
        let arith = nmi_with(&[0, 0, 0, 1], &[0, 0, 1, 1], NmiNorm::Arithmetic).unwrap();
        assert!((arith - mi / (0.5 * (hp + ht))).abs() < 1e-12);
    }

    #[test]
    fn ari_examples() {
        assert_eq!(ari(&[0, 0, 1, 1, 2], &[5, 5, 3, 3, 1]).unwrap(), 1.0);
        assert!((ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap() + 0.5).abs() < 1e-12);
        assert!(ari(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn ari_of_random_labels_centers_on_zero() {
        let mut total = 0.0;
        for seed in 0..20 {
            let mut rng = crate::numerics::Rng::new(seed);
            let p: Vec<usize> = (0..1000).map(|_| rng.below(10)).collect();
            let t: Vec<usize> = (0..1000).map(|_| rng.below(10)).collect();
            total += ari(&p, &t).unwrap();
        }
        assert!((total / 20.0).abs() < 0.05);
    }

    #[test]
    fn hungarian_examples() {
        let id = vec![vec![0.0, 5.0, 5.0], vec![5.0, 0.0, 5.0], vec![5.0, 5.0, 0.0]];
        assert_eq!(hungarian(&id).unwrap(), vec![0, 1, 2]);
        assert_eq!(hungarian(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap(), vec![0, 1]);
        assert!(hungarian(&[vec![f64::NAN]]).is_err());
        let rect = hungarian(&[vec![3.0, 1.0, 2.0]]).unwrap();
        assert_eq!(rect, vec![1]);
        let tall = hungarian(&[vec![3.0], vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(tall[1], 0);
        assert!(tall[0] >= 1 && tall[2] >= 1);
    }
}
