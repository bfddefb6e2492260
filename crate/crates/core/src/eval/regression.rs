use nalgebra::{DMatrix, DVector};

use crate::error::{LsgcError, Result};

/// Ridge weights minimizing `‖y − Cw‖² + reg‖w‖²`; `codes` holds one sample per row.
///
/// Solves the smaller of the primal (K×K) and dual (n×n) normal equations.
pub fn ridge_fit(codes: &DMatrix<f64>, targets: &[f64], reg: f64) -> Result<DVector<f64>> {
    if !(reg > 0.0 && reg.is_finite()) {
        return Err(LsgcError::contract("ridge regularizer must be positive"));
    }
    let (n, k) = codes.shape();
    if targets.len() != n {
        return Err(LsgcError::DimensionMismatch {
            expected: n,
            got: targets.len(),
        });
    }
    let y = DVector::from_column_slice(targets);
    let solve = |mut a: DMatrix<f64>, b: DVector<f64>| -> Result<DVector<f64>> {
        for i in 0..a.nrows() {
            a[(i, i)] += reg;
        }
        a.cholesky()
            .map(|c| c.solve(&b))
            .ok_or_else(|| LsgcError::Numeric("ridge system not positive definite".into()))
    };
    if k <= n {
        solve(codes.tr_mul(codes), codes.tr_mul(&y))
    } else {
        let alpha = solve(codes * codes.transpose(), y)?;
        Ok(codes.tr_mul(&alpha))
    }
}

pub fn ridge_predict(weights: &DVector<f64>, codes: &DMatrix<f64>) -> Result<Vec<f64>> {
    if codes.ncols() != weights.len() {
        return Err(LsgcError::DimensionMismatch {
            expected: weights.len(),
            got: codes.ncols(),
        });
    }
    Ok((codes * weights).iter().copied().collect())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(LsgcError::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    let s: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((s / pred.len() as f64).sqrt())
}
