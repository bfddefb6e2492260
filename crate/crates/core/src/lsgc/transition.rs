use nalgebra::DMatrix;

use crate::error::{LsgcError, Result};
use crate::types::{RelationMatrix, TransitionMatrix, DEGREE_FLOOR};

/// `Dg^(−1/2) R Dg^(−1/2)` with degrees floored at [`DEGREE_FLOOR`].
pub fn normalized_operator(relation: &RelationMatrix) -> DMatrix<f64> {
    let inv: Vec<f64> = relation
        .degrees()
        .iter()
        .map(|d| 1.0 / d.max(DEGREE_FLOOR).sqrt())
        .collect();
    let w = relation.weights();
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| inv[i] * w[(i, j)] * inv[j])
}

/// `m^e` by binary exponentiation.
pub fn matrix_power(m: &DMatrix<f64>, e: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut result: Option<DMatrix<f64>> = None;
    let mut base = m.clone();
    let mut e = e;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => &r * &base,
            });
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result.unwrap_or_else(|| DMatrix::identity(n, n))
}

/// Normalize the relation graph and precompute P̃^(t−1).
pub fn build_transition(relation: &RelationMatrix, t: usize) -> Result<TransitionMatrix> {
    if t < 1 {
        return Err(LsgcError::contract("t must be at least 1"));
    }
    let p_tilde = normalized_operator(relation);
    let power = matrix_power(&p_tilde, t - 1);
    Ok(TransitionMatrix { p_tilde, power, t })
}

impl TransitionMatrix {
    /// Same operator with a different step count.
    pub fn with_t(&self, t: usize) -> Result<TransitionMatrix> {
        if t < 1 {
            return Err(LsgcError::contract("t must be at least 1"));
        }
        Ok(TransitionMatrix {
            power: matrix_power(&self.p_tilde, t - 1),
            p_tilde: self.p_tilde.clone(),
            t,
        })
    }
}

/// Dyadic powers P̃, P̃², P̃⁴, … for applying many step counts to the same vectors.
#[derive(Debug, Clone)]
pub struct PowerLadder {
    rungs: Vec<DMatrix<f64>>,
    max_t: usize,
}

impl PowerLadder {
    /// Supports every `t` in `1..=max_t`.
    pub fn new(p_tilde: &DMatrix<f64>, max_t: usize) -> Self {
        let max_e = max_t.saturating_sub(1);
        let mut rungs = Vec::new();
        if max_e > 0 {
            rungs.push(p_tilde.clone());
            while (1usize << rungs.len()) <= max_e {
                let last = rungs.last().unwrap();
                rungs.push(last * last);
            }
        }
        PowerLadder { rungs, max_t }
    }

    pub fn max_t(&self) -> usize {
        self.max_t
    }

    /// P̃^(t−1) · m.
    pub fn apply(&self, t: usize, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if t < 1 || t > self.max_t {
            return Err(LsgcError::contract(format!(
                "t = {t} outside the ladder range 1..={}",
                self.max_t
            )));
        }
        let mut out = m.clone();
        let mut e = t - 1;
        let mut j = 0;
        while e > 0 {
            if e & 1 == 1 {
                out = &self.rungs[j] * out;
            }
            e >>= 1;
            j += 1;
        }
        Ok(out)
    }

    /// P̃^(t−1) as a matrix.
    pub fn power(&self, t: usize) -> Result<DMatrix<f64>> {
        let n = self.rungs.first().map_or(0, |r| r.nrows());
        if n == 0 {
            return Err(LsgcError::contract("ladder built for t = 1 only"));
        }
        self.apply(t, &DMatrix::identity(n, n))
    }
}
