use nalgebra::{DMatrix, DVector};

use crate::dictionary::sq_dist;
use crate::error::{LsgcError, Result};
use crate::types::{CodeVector, Dictionary, SignMode};

/// Indices of the `k` nearest columns of a column-major block, nearest first,
/// lowest index first on ties.
pub(crate) fn knn_indices(x: &[f64], bases: &[f64], dim: usize, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = bases
        .chunks_exact(dim)
        .enumerate()
        .map(|(j, b)| (sq_dist(x, b), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_by(cmp);
    order.into_iter().map(|(_, j)| j).collect()
}

/// Sum-to-one weights reconstructing `x` from the given neighbor columns.
///
/// Solves `(C + reg·tr(C)·I) w = 1` for the local covariance `C` of the shifted
/// neighbors and returns `w / Σw`.
pub(crate) fn llc_weights(
    x: &[f64],
    bases: &[f64],
    dim: usize,
    neighbors: &[usize],
    reg: f64,
) -> Result<Vec<f64>> {
    let k = neighbors.len();
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let z = DMatrix::from_fn(k, dim, |r, c| bases[neighbors[r] * dim + c] - x[c]);
    let mut cov = &z * z.transpose();
    let trace = cov.trace();
    if trace == 0.0 {
        // every neighbor coincides with x; any affine combination reconstructs it
        return Ok(vec![1.0 / k as f64; k]);
    }
    for i in 0..k {
        cov[(i, i)] += reg * trace;
    }
    let ones = DVector::from_element(k, 1.0);
    let w = match cov.clone().cholesky() {
        Some(ch) => ch.solve(&ones),
        None => {
            if reg == 0.0 {
                return Err(LsgcError::Numeric(
                    "singular local covariance; use a nonzero llc_reg".into(),
                ));
            }
            cov.lu().solve(&ones).ok_or_else(|| {
                LsgcError::Numeric("singular local covariance; increase llc_reg".into())
            })?
        }
    };
    let sum = w.sum();
    if !sum.is_finite() || sum == 0.0 {
        return Err(LsgcError::Numeric(
            "degenerate local covariance; use a nonzero llc_reg".into(),
        ));
    }
    Ok(w.iter().map(|v| v / sum).collect())
}

/// Column-major variant used when coding a basis against the rest of a dictionary.
pub(crate) fn llc_code_raw(
    x: &[f64],
    bases: &[f64],
    dim: usize,
    k: usize,
    reg: f64,
) -> Result<Vec<f64>> {
    let count = bases.len() / dim;
    if k < 1 || k > count {
        return Err(LsgcError::contract(format!(
            "knn must lie in [1, {count}], got {k}"
        )));
    }
    let nn = knn_indices(x, bases, dim, k);
    let w = llc_weights(x, bases, dim, &nn, reg)?;
    let mut coeffs = vec![0.0; count];
    for (j, v) in nn.iter().zip(w) {
        coeffs[*j] = v;
    }
    Ok(coeffs)
}

/// Locality-constrained linear code of `x` over its `k` nearest bases.
pub fn llc_encode(x: &[f64], dict: &Dictionary, k: usize, llc_reg: f64) -> Result<CodeVector> {
    if x.len() != dict.dim() {
        return Err(LsgcError::DimensionMismatch {
            expected: dict.dim(),
            got: x.len(),
        });
    }
    if !(llc_reg >= 0.0) {
        return Err(LsgcError::contract("llc_reg must be nonnegative"));
    }
    let coeffs = llc_code_raw(x, dict.as_slice(), dict.dim(), k, llc_reg)?;
    CodeVector::new(coeffs, SignMode::Signed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_itself_gets_full_weight() {
        let dict = Dictionary::from_bases(&[
            vec![0.0, 0.0],
            vec![1.0, 0.2],
            vec![0.3, 1.0],
            vec![2.0, 2.0],
        ])
        .unwrap();
        let c = llc_encode(&[1.0, 0.2], &dict, 3, 1e-8).unwrap();
        assert!(c.coeffs()[1] >= 0.999);
        for (j, v) in c.coeffs().iter().enumerate() {
            if j != 1 {
                assert!(v.abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn midpoint_of_two_bases() {
        let dict =
            Dictionary::from_bases(&[vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 5.0]]).unwrap();
        let c = llc_encode(&[0.0, 0.0], &dict, 2, 1e-4).unwrap();
        assert!((c.coeffs()[0] - 0.5).abs() < 1e-6);
        assert!((c.coeffs()[1] - 0.5).abs() < 1e-6);
        assert_eq!(c.coeffs()[2], 0.0);
    }

    #[test]
    fn support_is_knn_and_sums_to_one() {
        let dict = Dictionary::from_bases(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![4.0, 4.0],
            vec![-3.0, 2.0],
        ])
        .unwrap();
        let c = llc_encode(&[0.2, 0.3], &dict, 3, 1e-4).unwrap();
        assert_eq!(c.support(), &[0, 1, 2]);
        assert!((c.coeffs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn singular_patch_without_ridge_errors() {
        // three collinear neighbors in 2-D with x on the line: covariance rank 1
        let dict =
            Dictionary::from_bases(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert!(matches!(
            llc_encode(&[0.5, 0.0], &dict, 3, 0.0),
            Err(LsgcError::Numeric(_))
        ));
        assert!(llc_encode(&[0.5, 0.0], &dict, 3, 1e-4).is_ok());
    }

    #[test]
    fn knn_range_checked() {
        let dict = Dictionary::from_bases(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(llc_encode(&[0.0], &dict, 0, 1e-4).is_err());
        assert!(llc_encode(&[0.0], &dict, 3, 1e-4).is_err());
    }
}
