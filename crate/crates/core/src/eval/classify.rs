//! One-vs-all linear classifiers trained with the Pegasos hinge-loss schedule.
//!
//! Each binary problem minimizes `λ/2‖w‖² + (1/n) Σ max(0, 1 − yᵢ wᵀxᵢ)` over
//! inputs augmented with a constant 1 feature. The iterate is kept in its
//! kernel expansion `w = (1/λτ) Σ αⱼ yⱼ xⱼ`, so each step costs one Gram-row
//! update instead of a pass over the feature dimension; the sampled sequence
//! and the iterates are exactly those of primal Pegasos.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LsgcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvaParams {
    /// Pegasos regularization λ.
    pub lambda: f64,
    /// Passes over the training set; total steps = epochs · n.
    pub epochs: usize,
    pub seed: u64,
}

impl Default for OvaParams {
    fn default() -> Self {
        OvaParams {
            lambda: 1e-3,
            epochs: 300,
            seed: 0,
        }
    }
}

/// Per-class weight rows over `[features, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OvaModel {
    /// classes × (d + 1); last column is the bias.
    pub weights: DMatrix<f64>,
}

impl OvaModel {
    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    /// Class scores, samples × classes.
    pub fn scores(&self, codes: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = self.weights.ncols() - 1;
        if codes.ncols() != d {
            return Err(LsgcError::DimensionMismatch {
                expected: d,
                got: codes.ncols(),
            });
        }
        let w = self.weights.columns(0, d);
        let mut s = codes * w.transpose();
        for mut row in s.row_iter_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v += self.weights[(c, d)];
            }
        }
        Ok(s)
    }

    pub fn predict(&self, codes: &DMatrix<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.scores(codes)?))
    }
}

/// Row-wise argmax, lowest index on ties.
pub fn argmax_rows(scores: &DMatrix<f64>) -> Vec<usize> {
    scores
        .row_iter()
        .map(|r| {
            let mut best = 0;
            for (j, v) in r.iter().enumerate() {
                if *v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// One binary Pegasos run on a precomputed augmented Gram matrix; returns the
/// expansion coefficients scaled so that `w = Σ coefᵢ xᵢ`.
fn pegasos_binary(
    gram: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = y.len();
    let mut alpha = vec![0.0f64; n];
    // raw[i] = Σⱼ αⱼ yⱼ K(i,j); the margin of sample i at step τ is yᵢ·raw[i]/(λτ)
    let mut raw = vec![0.0f64; n];
    for tau in 1..=steps {
        let i = rng.random_range(0..n);
        let margin = y[i] * raw[i] / (lambda * tau as f64);
        if margin < 1.0 {
            alpha[i] += 1.0;
            let col = gram.column(i);
            for (r, g) in raw.iter_mut().zip(col.iter()) {
                *r += y[i] * g;
            }
        }
    }
    let scale = 1.0 / (lambda * steps as f64);
    alpha.iter().zip(y).map(|(a, yi)| a * yi * scale).collect()
}

/// Train one binary classifier per class; `codes` holds one sample per row.
pub fn linear_ova_train(
    codes: &DMatrix<f64>,
    labels: &[usize],
    params: &OvaParams,
) -> Result<OvaModel> {
    let (n, d) = codes.shape();
    if labels.len() != n {
        return Err(LsgcError::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if !(params.lambda > 0.0) || params.epochs == 0 {
        return Err(LsgcError::contract(
            "pegasos needs lambda > 0 and epochs >= 1",
        ));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let present = {
        let mut seen = vec![false; n_classes];
        labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|s| **s).count()
    };
    if present < 2 {
        return Err(LsgcError::InsufficientData(
            "classification needs at least two classes".into(),
        ));
    }
    let mut gram = codes * codes.transpose();
    gram.add_scalar_mut(1.0);
    let steps = params.epochs * n;
    let mut weights = DMatrix::zeros(n_classes, d + 1);
    for c in 0..n_classes {
        let y: Vec<f64> = labels
            .iter()
            .map(|&l| if l == c { 1.0 } else { -1.0 })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(c as u64));
        let coef = pegasos_binary(&gram, &y, params.lambda, steps, &mut rng);
        for (i, a) in coef.iter().enumerate() {
            if *a != 0.0 {
                for j in 0..d {
                    weights[(c, j)] += a * codes[(i, j)];
                }
                weights[(c, d)] += a;
            }
        }
    }
    Ok(OvaModel { weights })
}

pub fn linear_ova_predict(model: &OvaModel, codes: &DMatrix<f64>) -> Result<Vec<usize>> {
    model.predict(codes)
}

/// `λ/2‖w‖² + mean hinge` of one binary problem with the bias as a regular feature.
pub fn hinge_objective(w: &[f64], codes: &DMatrix<f64>, y: &[f64], lambda: f64) -> f64 {
    let d = codes.ncols();
    let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = (0..codes.nrows())
        .map(|i| {
            let s: f64 = (0..d).map(|j| w[j] * codes[(i, j)]).sum::<f64>() + w[d];
            (1.0 - y[i] * s).max(0.0)
        })
        .sum::<f64>()
        / codes.nrows() as f64;
    reg + loss
}

pub fn error_rate(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(LsgcError::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    Ok(pred.iter().zip(truth).filter(|(a, b)| a != b).count() as f64 / pred.len() as f64)
}
