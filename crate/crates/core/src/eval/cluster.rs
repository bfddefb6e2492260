use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{kmeans, KMeansParams};
use crate::error::{LsgcError, Result};
use crate::types::DataMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub k: usize,
    pub inertia: f64,
}

/// Best-inertia k-means over `restarts` seeds derived from `seed`.
pub fn kmeans_cluster(
    data: &DataMatrix,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<ClusteringResult> {
    if restarts < 1 {
        return Err(LsgcError::contract("restarts must be at least 1"));
    }
    let fits: Vec<_> = (0..restarts as u64)
        .into_par_iter()
        .map(|r| {
            kmeans(
                data,
                &KMeansParams::new(k, seed.wrapping_mul(1_000_003).wrapping_add(r)),
            )
        })
        .collect::<Result<_>>()?;
    // first restart wins ties, independent of scheduling
    let best = fits
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .unwrap();
    Ok(ClusteringResult {
        assignments: best.assignments,
        k,
        inertia: best.inertia,
    })
}

fn contingency(a: &[usize], b: &[usize]) -> Result<(Vec<Vec<f64>>, usize, usize)> {
    if a.len() != b.len() {
        return Err(LsgcError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(LsgcError::EmptyDataset);
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut m = vec![vec![0.0; kb]; ka];
    for (&i, &j) in a.iter().zip(b) {
        m[i][j] += 1.0;
    }
    Ok((m, ka, kb))
}

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts
        .filter(|c| *c > 0.0)
        .map(|c| {
            let p = c / n;
            -p * p.log2()
        })
        .sum()
}

/// Mutual information normalized by the larger of the two entropies (log base 2).
/// Two single-cluster labelings score 1.
pub fn nmi(truth: &[usize], computed: &[usize]) -> Result<f64> {
    let (m, ka, kb) = contingency(truth, computed)?;
    let n = truth.len() as f64;
    let rows: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..kb).map(|j| (0..ka).map(|i| m[i][j]).sum()).collect();
    let h = entropy(rows.iter().copied(), n).max(entropy(cols.iter().copied(), n));
    if h == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let c = m[i][j];
            if c > 0.0 {
                mi += c / n * (c * n / (rows[i] * cols[j])).log2();
            }
        }
    }
    Ok((mi / h).clamp(0.0, 1.0))
}

/// Assignment of rows to columns maximizing the total weight of a square matrix.
/// Returns `perm` with row `i` matched to column `perm[i]`.
pub fn hungarian_match(weights: &DMatrix<f64>) -> Result<Vec<usize>> {
    if !weights.is_square() {
        return Err(LsgcError::contract("assignment matrix must be square"));
    }
    let n = weights.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let top = weights.max();
    // minimize (top − w); 1-based potentials with a virtual column 0
    let cost = |i: usize, j: usize| top - weights[(i - 1, j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
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
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    Ok(perm)
}

/// Fraction of samples whose computed cluster maps to their true class under the
/// optimal one-to-one cluster-to-class matching.
pub fn accuracy_ac(truth: &[usize], computed: &[usize]) -> Result<f64> {
    let (m, kc, kt) = contingency(computed, truth)?;
    let size = kc.max(kt);
    let w = DMatrix::from_fn(
        size,
        size,
        |i, j| if i < kc && j < kt { m[i][j] } else { 0.0 },
    );
    let map = hungarian_match(&w)?;
    let hits = computed
        .iter()
        .zip(truth)
        .filter(|(c, t)| map[**c] == **t)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmi_cases() {
        assert_eq!(nmi(&[0, 0, 1, 1, 2], &[2, 2, 0, 0, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap(), 0.0);
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert!(nmi(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn nmi_hand_computed() {
        // truth [0,0,0,1,1,1], computed [0,0,1,1,1,1]
        // contingency [[2,1],[0,3]]; H(truth)=1, H(comp)=0.9183
        let v = nmi(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 1, 1]).unwrap();
        let p = |c: f64, r: f64, s: f64| c / 6.0 * (c * 6.0 / (r * s)).log2();
        let mi = p(2.0, 3.0, 2.0) + p(1.0, 3.0, 4.0) + p(3.0, 3.0, 4.0);
        assert!((v - mi).abs() < 1e-15);
        assert!((v - 0.459_147_917_027_245_2).abs() < 1e-12);
    }

    #[test]
    fn hungarian_diagonal_and_anti() {
        let d = DMatrix::from_row_slice(3, 3, &[5.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 5.0]);
        assert_eq!(hungarian_match(&d).unwrap(), vec![0, 1, 2]);
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 5.0, 0.0, 5.0, 0.0, 5.0, 0.0, 0.0]);
        assert_eq!(hungarian_match(&a).unwrap(), vec![2, 1, 0]);
    }

    #[test]
    fn ac_cases() {
        assert_eq!(
            accuracy_ac(&[0, 0, 1, 1, 2, 2], &[1, 1, 2, 2, 0, 0]).unwrap(),
            1.0
        );
        let truth = [0, 0, 1, 1, 2, 2];
        assert!((accuracy_ac(&truth, &[0; 6]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // more clusters than classes
        assert!((accuracy_ac(&[0, 0, 1, 1], &[0, 1, 2, 2]).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn restarts_never_worse() {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let c = (i % 3) as f64 * 3.0;
                vec![
                    c + ((i * 7) % 11) as f64 * 0.05,
                    ((i * 5) % 13) as f64 * 0.05,
                ]
            })
            .collect();
        let d = DataMatrix::from_rows(&rows).unwrap();
        let one = kmeans_cluster(&d, 4, 1, 3).unwrap();
        let many = kmeans_cluster(&d, 4, 20, 3).unwrap();
        assert!(many.inertia <= one.inertia);
    }
}
