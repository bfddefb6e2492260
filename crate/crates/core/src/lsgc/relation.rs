use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dictionary::sq_dist;
use crate::encoders::{llc_code_raw, SparseCoder};
use crate::error::{LsgcError, Result};
use crate::types::{symmetrize, Dictionary, RelationMatrix};

/// Gaussian basis graph without self-loops.
pub fn relation_sac(dict: &Dictionary, sigma: f64) -> Result<RelationMatrix> {
    relation_sac_with(dict, sigma, false)
}

/// Gaussian basis graph; `self_loops` keeps the unit diagonal.
pub fn relation_sac_with(
    dict: &Dictionary,
    sigma: f64,
    self_loops: bool,
) -> Result<RelationMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(LsgcError::contract("sigma must be positive"));
    }
    let k = dict.k();
    let scale = 2.0 * sigma * sigma;
    let mut w = DMatrix::zeros(k, k);
    for i in 0..k {
        if self_loops {
            w[(i, i)] = 1.0;
        }
        for j in (i + 1)..k {
            let v = (-sq_dist(dict.basis(i), dict.basis(j)) / scale).exp();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    RelationMatrix::from_symmetric(w)
}

/// Code every basis against the others, writing row `i` with the self column left at zero.
fn leave_one_out_rows<F>(dict: &Dictionary, code: F) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Sync,
{
    let k = dict.k();
    let rows: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let rest = dict.bases_without(i);
            let reduced = code(dict.basis(i), &rest)?;
            let mut row = Vec::with_capacity(k);
            row.extend_from_slice(&reduced[..i]);
            row.push(0.0);
            row.extend_from_slice(&reduced[i..]);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

/// Signed leave-one-out LASSO coefficients R′ (K×K, zero diagonal).
pub fn sparse_self_codes(
    dict: &Dictionary,
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<DMatrix<f64>> {
    if !dict.is_unit_norm(1e-9) {
        return Err(LsgcError::contract(
            "sparse relation requires unit-norm bases",
        ));
    }
    let dim = dict.dim();
    leave_one_out_rows(dict, |x, rest| {
        let coder = SparseCoder::new(rest.to_vec(), dim, lambda, tol, max_iters)?;
        let sol = coder.solve(x)?;
        Ok(sol.code.into_coeffs())
    })
}

/// Duplicated 2K×2K graph `[[R′p, R′n], [R′n, R′p]]` from leave-one-out sparse codes.
///
/// The flag in the result is always `true`; it records that codes over this graph
/// have length 2K.
pub fn relation_sparse(dict: &Dictionary, lambda: f64, tol: f64) -> Result<(RelationMatrix, bool)> {
    relation_sparse_with(dict, lambda, tol, crate::encoders::DEFAULT_MAX_ITERS)
}

pub fn relation_sparse_with(
    dict: &Dictionary,
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(RelationMatrix, bool)> {
    let r = sparse_self_codes(dict, lambda, tol, max_iters)?;
    let k = dict.k();
    let block = DMatrix::from_fn(2 * k, 2 * k, |i, j| {
        let v = r[(i % k, j % k)];
        if (i < k) == (j < k) {
            v.max(0.0)
        } else {
            (-v).max(0.0)
        }
    });
    let rel = symmetrize(&block)?;
    let isolated = rel.degrees().iter().filter(|d| **d == 0.0).count();
    if isolated > 0 {
        warn!("{isolated} isolated nodes in the duplicated sparse relation graph");
    }
    Ok((rel, true))
}

/// Leave-one-out LLC weights before taking absolute values (K×K, zero diagonal).
pub fn llc_self_codes(dict: &Dictionary, k: usize, llc_reg: f64) -> Result<DMatrix<f64>> {
    if k < 1 || k > dict.k() - 1 {
        return Err(LsgcError::contract(format!(
            "relation knn must lie in [1, {}], got {k}",
            dict.k() - 1
        )));
    }
    let dim = dict.dim();
    leave_one_out_rows(dict, |x, rest| llc_code_raw(x, rest, dim, k, llc_reg))
}

/// Symmetrized absolute leave-one-out LLC weights.
pub fn relation_llc(dict: &Dictionary, k: usize, llc_reg: f64) -> Result<RelationMatrix> {
    let r = llc_self_codes(dict, k, llc_reg)?;
    symmetrize(&r.abs())
}
