//! L1-regularized coding by cyclic coordinate descent.
//!
//! The objective is `‖x − Dc‖² + λ‖c‖₁` with no ½ on the quadratic term, so the
//! per-coordinate soft threshold is λ/2 and the all-zero code is optimal as soon as
//! `λ ≥ 2·maxᵢ |bᵢᵀx|`.

use log::debug;
use nalgebra::DMatrix;

use crate::error::{LsgcError, Result};
use crate::types::{CodeVector, Dictionary, SignMode};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

/// One LASSO instance over unit-norm atoms stored column-major.
#[derive(Debug, Clone)]
pub struct LassoProblem<'a> {
    pub target: &'a [f64],
    pub atoms: &'a [f64],
    pub dim: usize,
    pub lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub code: CodeVector,
    pub sweeps: usize,
    pub converged: bool,
}

/// Objective value `‖x − Dc‖² + λ‖c‖₁`.
pub fn lasso_objective(target: &[f64], atoms: &[f64], dim: usize, lambda: f64, c: &[f64]) -> f64 {
    let mut r = target.to_vec();
    for (b, &cj) in atoms.chunks_exact(dim).zip(c) {
        if cj != 0.0 {
            r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= cj * bi);
        }
    }
    r.iter().map(|v| v * v).sum::<f64>() + lambda * c.iter().map(|v| v.abs()).sum::<f64>()
}

#[inline]
fn soft_threshold(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

/// Reusable solver holding the Gram matrix of a fixed atom set.
#[derive(Debug, Clone)]
pub struct SparseCoder {
    atoms: Vec<f64>,
    dim: usize,
    gram: DMatrix<f64>,
    pub lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl SparseCoder {
    pub fn new(
        atoms: Vec<f64>,
        dim: usize,
        lambda: f64,
        tol: f64,
        max_iters: usize,
    ) -> Result<Self> {
        if dim == 0 || atoms.len() % dim != 0 || atoms.is_empty() {
            return Err(LsgcError::contract("atom storage does not match dimension"));
        }
        if !(lambda >= 0.0) {
            return Err(LsgcError::contract("lambda must be nonnegative"));
        }
        if !(tol > 0.0) || max_iters == 0 {
            return Err(LsgcError::contract(
                "tol must be positive and max_iters nonzero",
            ));
        }
        for (j, b) in atoms.chunks_exact(dim).enumerate() {
            let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(LsgcError::contract(format!(
                    "atom {j} has norm {norm}, expected unit norm"
                )));
            }
        }
        let m = atoms.len() / dim;
        let d = DMatrix::from_column_slice(dim, m, &atoms);
        let gram = d.transpose() * &d;
        Ok(SparseCoder {
            atoms,
            dim,
            gram,
            lambda,
            tol,
            max_iters,
        })
    }

    pub fn from_dictionary(
        dict: &Dictionary,
        lambda: f64,
        tol: f64,
        max_iters: usize,
    ) -> Result<Self> {
        SparseCoder::new(dict.as_slice().to_vec(), dict.dim(), lambda, tol, max_iters)
    }

    pub fn n_atoms(&self) -> usize {
        self.gram.nrows()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// Coordinate descent on the covariance form: keeps `q = Dᵀx − Gc` up to date.
    pub fn solve(&self, target: &[f64]) -> Result<LassoSolution> {
        if target.len() != self.dim {
            return Err(LsgcError::DimensionMismatch {
                expected: self.dim,
                got: target.len(),
            });
        }
        let m = self.n_atoms();
        let thr = self.lambda / 2.0;
        let mut q: Vec<f64> = self
            .atoms
            .chunks_exact(self.dim)
            .map(|b| b.iter().zip(target).map(|(u, v)| u * v).sum())
            .collect();
        let mut c = vec![0.0; m];
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < self.max_iters {
            sweeps += 1;
            let mut max_step: f64 = 0.0;
            for j in 0..m {
                let old = c[j];
                // unit-norm atoms: G_jj = 1
                let rho = q[j] + old;
                let new = soft_threshold(rho, thr);
                let step = new - old;
                if step != 0.0 {
                    c[j] = new;
                    let col = self.gram.column(j);
                    for (qi, g) in q.iter_mut().zip(col.iter()) {
                        *qi -= g * step;
                    }
                    max_step = max_step.max(step.abs());
                }
            }
            if max_step < self.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            debug!(
                "lasso did not converge in {} sweeps; returning last iterate",
                self.max_iters
            );
        }
        Ok(LassoSolution {
            code: CodeVector::new(c, SignMode::Signed)?,
            sweeps,
            converged,
        })
    }
}

/// Solve a single LASSO instance.
pub fn lasso_solve(p: &LassoProblem<'_>) -> Result<LassoSolution> {
    SparseCoder::new(p.atoms.to_vec(), p.dim, p.lambda, p.tol, p.max_iters)?.solve(p.target)
}

/// Sparse code of `x` after scaling it to unit norm.
pub fn sparse_encode(x: &[f64], dict: &Dictionary, lambda: f64, tol: f64) -> Result<CodeVector> {
    let coder = SparseCoder::from_dictionary(dict, lambda, tol, DEFAULT_MAX_ITERS)?;
    sparse_encode_with(&coder, x)
}

pub(crate) fn unit(x: &[f64]) -> Result<Vec<f64>> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(LsgcError::contract("cannot unit-normalize a zero vector"));
    }
    Ok(x.iter().map(|v| v / norm).collect())
}

pub fn sparse_encode_with(coder: &SparseCoder, x: &[f64]) -> Result<CodeVector> {
    Ok(coder.solve(&unit(x)?)?.code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit_atoms(rng: &mut ChaCha8Rng, dim: usize, m: usize) -> Vec<f64> {
        let mut atoms = Vec::new();
        for _ in 0..m {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            atoms.extend(unit(&v).unwrap());
        }
        atoms
    }

    #[test]
    fn orthonormal_without_penalty_is_projection() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let atoms = vec![s, s, 0.0, -s, s, 0.0, 0.0, 0.0, 1.0];
        let x = [0.3, -1.2, 2.0];
        let sol = lasso_solve(&LassoProblem {
            target: &x,
            atoms: &atoms,
            dim: 3,
            lambda: 0.0,
            tol: 1e-12,
            max_iters: 1000,
        })
        .unwrap();
        for (j, b) in atoms.chunks_exact(3).enumerate() {
            let proj: f64 = b.iter().zip(&x).map(|(u, v)| u * v).sum();
            assert!((sol.code.coeffs()[j] - proj).abs() < 1e-8);
        }
    }

    #[test]
    fn large_lambda_kills_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let atoms = random_unit_atoms(&mut rng, 4, 6);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let max_corr = atoms
            .chunks_exact(4)
            .map(|b| b.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>().abs())
            .fold(0.0, f64::max);
        let sol = lasso_solve(&LassoProblem {
            target: &x,
            atoms: &atoms,
            dim: 4,
            lambda: 2.0 * max_corr,
            tol: 1e-6,
            max_iters: 100,
        })
        .unwrap();
        assert!(sol.code.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn kkt_conditions_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let atoms = random_unit_atoms(&mut rng, 6, 10);
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lambda = rng.random_range(0.01..0.5);
            let tol = 1e-9;
            let sol = lasso_solve(&LassoProblem {
                target: &x,
                atoms: &atoms,
                dim: 6,
                lambda,
                tol,
                max_iters: 100_000,
            })
            .unwrap();
            let c = sol.code.coeffs();
            let mut r = x.clone();
            for (b, cj) in atoms.chunks_exact(6).zip(c) {
                r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= cj * bi);
            }
            for (j, b) in atoms.chunks_exact(6).enumerate() {
                let g = 2.0 * b.iter().zip(&r).map(|(u, v)| u * v).sum::<f64>();
                assert!(g.abs() <= lambda + 1e-6, "coordinate {j}: {g} vs {lambda}");
                if c[j] != 0.0 {
                    assert!((g - lambda * c[j].signum()).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn rejects_non_unit_atoms() {
        assert!(SparseCoder::new(vec![2.0, 0.0, 0.0, 1.0], 2, 0.1, 1e-6, 10).is_err());
    }

    #[test]
    fn sparse_encode_prefers_matching_atom() {
        let dict = Dictionary::from_bases(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.6, 0.8],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let c = sparse_encode(&[0.0, 3.0, 4.0], &dict, 0.01, 1e-8).unwrap();
        let top = c
            .coeffs()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0;
        assert_eq!(top, 1);
        let zero = sparse_encode(&[0.0, 3.0, 4.0], &dict, 2.5, 1e-8).unwrap();
        assert!(zero.coeffs().iter().all(|&v| v == 0.0));
    }
}
