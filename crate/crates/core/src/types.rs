//! Shared numeric types and their validity contracts.
//!
//! Everything here is immutable once constructed. Constructors check the
//! invariants; algorithms live in the sibling modules.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LsgcError, Result};

/// Degrees below this are treated as isolated nodes.
pub const DEGREE_FLOOR: f64 = 1e-12;

/// Dense sample matrix, one sample per row, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    labels: Option<Vec<usize>>,
    targets: Option<Vec<f64>>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(LsgcError::DimensionMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(LsgcError::contract(format!(
                "non-finite value at row {}, column {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(DataMatrix {
            rows,
            cols,
            values,
            labels: None,
            targets: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(LsgcError::DimensionMismatch {
                expected: cols,
                got: bad.len(),
            });
        }
        DataMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.rows {
            return Err(LsgcError::DimensionMismatch {
                expected: self.rows,
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_targets(mut self, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != self.rows {
            return Err(LsgcError::DimensionMismatch {
                expected: self.rows,
                got: targets.len(),
            });
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(LsgcError::contract("non-finite regression target"));
        }
        self.targets = Some(targets);
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero width
        self.values.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn targets(&self) -> Option<&[f64]> {
        self.targets.as_deref()
    }

    /// Number of classes implied by the labels (max label + 1).
    pub fn n_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |m| m + 1)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.values)
    }

    /// Sub-matrix made of the given rows, carrying labels and targets along.
    pub fn select(&self, idx: &[usize]) -> DataMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        DataMatrix {
            rows: idx.len(),
            cols: self.cols,
            values,
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            targets: self
                .targets
                .as_ref()
                .map(|t| idx.iter().map(|&i| t[i]).collect()),
        }
    }

    /// Mean of the per-feature standard deviations.
    pub fn mean_feature_std(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        self.feature_variances()
            .iter()
            .map(|v| v.sqrt())
            .sum::<f64>()
            / self.cols as f64
    }

    /// Root of the total variance, i.e. the RMS distance to the centroid.
    pub fn total_std(&self) -> f64 {
        self.feature_variances().iter().sum::<f64>().sqrt()
    }

    fn feature_variances(&self) -> Vec<f64> {
        let n = self.rows as f64;
        let mut mean = vec![0.0; self.cols];
        for r in self.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.cols];
        for r in self.rows() {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n);
        var
    }
}

/// How a dictionary was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DictionaryMeta {
    pub seed: Option<u64>,
    pub iterations: usize,
    pub inertia: f64,
    pub unit_norm: bool,
}

/// K basis vectors of dimension d, stored column-major (basis j is contiguous).
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    dim: usize,
    bases: Vec<f64>,
    pub meta: DictionaryMeta,
}

impl Dictionary {
    pub fn new(dim: usize, bases: Vec<f64>) -> Result<Self> {
        if dim == 0 || bases.len() % dim != 0 {
            return Err(LsgcError::contract(format!(
                "basis storage of length {} is not a multiple of dimension {dim}",
                bases.len()
            )));
        }
        let k = bases.len() / dim;
        if k < 2 {
            return Err(LsgcError::contract(format!(
                "dictionary needs K >= 2, got {k}"
            )));
        }
        if bases.iter().any(|v| !v.is_finite()) {
            return Err(LsgcError::contract("non-finite basis entry"));
        }
        Ok(Dictionary {
            dim,
            bases,
            meta: DictionaryMeta::default(),
        })
    }

    pub fn from_bases(bases: &[Vec<f64>]) -> Result<Self> {
        let dim = bases.first().map_or(0, Vec::len);
        if let Some(b) = bases.iter().find(|b| b.len() != dim) {
            return Err(LsgcError::DimensionMismatch {
                expected: dim,
                got: b.len(),
            });
        }
        Dictionary::new(dim, bases.concat())
    }

    pub fn k(&self) -> usize {
        self.bases.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self, j: usize) -> &[f64] {
        &self.bases[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.bases.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.bases
    }

    /// d × K matrix with the bases as columns.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.dim, self.k(), &self.bases)
    }

    /// Copy with every basis scaled to unit Euclidean norm.
    pub fn unit_normalized(&self) -> Result<Dictionary> {
        let mut bases = self.bases.clone();
        for (j, b) in bases.chunks_exact_mut(self.dim).enumerate() {
            let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(LsgcError::contract(format!("basis {j} has zero norm")));
            }
            b.iter_mut().for_each(|v| *v /= norm);
        }
        let mut meta = self.meta.clone();
        meta.unit_norm = true;
        Ok(Dictionary {
            dim: self.dim,
            bases,
            meta,
        })
    }

    /// True when every basis has unit norm within `tol`.
    pub fn is_unit_norm(&self, tol: f64) -> bool {
        self.iter()
            .all(|b| (b.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() <= tol)
    }

    /// Column-major storage of all bases except `skip`.
    pub(crate) fn bases_without(&self, skip: usize) -> Vec<f64> {
        self.iter()
            .enumerate()
            .filter(|(j, _)| *j != skip)
            .flat_map(|(_, b)| b.iter().copied())
            .collect()
    }
}

/// Sign convention carried by a code vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    Nonnegative,
    Signed,
    /// Length 2K, positive part followed by negative part, all entries >= 0.
    Duplicated,
}

/// Coefficients of one datum against a dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeVector {
    coeffs: Vec<f64>,
    sign_mode: SignMode,
    support: Vec<usize>,
}

impl CodeVector {
    pub fn new(coeffs: Vec<f64>, sign_mode: SignMode) -> Result<Self> {
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(LsgcError::Numeric("non-finite code coefficient".into()));
        }
        match sign_mode {
            SignMode::Nonnegative | SignMode::Duplicated if coeffs.iter().any(|&v| v < 0.0) => {
                return Err(LsgcError::contract(format!(
                    "negative coefficient in {sign_mode:?} code"
                )));
            }
            SignMode::Duplicated if coeffs.len() % 2 != 0 => {
                return Err(LsgcError::contract("duplicated code must have even length"));
            }
            _ => {}
        }
        let support = coeffs
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        Ok(CodeVector {
            coeffs,
            sign_mode,
            support,
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn sign_mode(&self) -> SignMode {
        self.sign_mode
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Symmetric nonnegative basis-to-basis weights with cached degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationMatrix {
    weights: DMatrix<f64>,
    degrees: Vec<f64>,
}

/// Replace `r` by `(r + rᵀ) / 2` and compute degrees.
pub fn symmetrize(r: &DMatrix<f64>) -> Result<RelationMatrix> {
    if !r.is_square() {
        return Err(LsgcError::contract(format!(
            "relation matrix must be square, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    if r.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(LsgcError::contract(
            "relation matrix must be finite and nonnegative",
        ));
    }
    let n = r.nrows();
    let weights = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            r[(i, i)]
        } else {
            // same operand order for (i,j) and (j,i) keeps the result exactly symmetric
            let (a, b) = if i < j {
                (r[(i, j)], r[(j, i)])
            } else {
                (r[(j, i)], r[(i, j)])
            };
            (a + b) / 2.0
        }
    });
    Ok(RelationMatrix::from_weights_unchecked(weights))
}

impl RelationMatrix {
    /// Accepts an already symmetric nonnegative matrix.
    pub fn from_symmetric(weights: DMatrix<f64>) -> Result<Self> {
        if !weights.is_square() {
            return Err(LsgcError::contract("relation matrix must be square"));
        }
        let n = weights.nrows();
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(LsgcError::contract(
                        "relation matrix must be finite and nonnegative",
                    ));
                }
                if w != weights[(j, i)] {
                    return Err(LsgcError::contract(format!(
                        "relation matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(RelationMatrix::from_weights_unchecked(weights))
    }

    fn from_weights_unchecked(weights: DMatrix<f64>) -> Self {
        let degrees = weights.row_iter().map(|r| r.iter().sum()).collect();
        RelationMatrix { weights, degrees }
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Same graph with every weight multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<RelationMatrix> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(LsgcError::contract("scale factor must be positive"));
        }
        Ok(RelationMatrix::from_weights_unchecked(
            &self.weights * factor,
        ))
    }

    /// Relabel nodes: new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> RelationMatrix {
        let n = self.size();
        let w = DMatrix::from_fn(n, n, |i, j| self.weights[(perm[i], perm[j])]);
        RelationMatrix::from_weights_unchecked(w)
    }
}

/// Symmetrically normalized transition operator and its (t−1)-th power.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub(crate) p_tilde: DMatrix<f64>,
    pub(crate) power: DMatrix<f64>,
    pub(crate) t: usize,
}

impl TransitionMatrix {
    pub fn p_tilde(&self) -> &DMatrix<f64> {
        &self.p_tilde
    }

    /// P̃^(t−1).
    pub fn power(&self) -> &DMatrix<f64> {
        &self.power
    }

    pub fn t(&self) -> usize {
        self.t
    }
}

/// Base coding algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sac,
    Llc,
    Sparse,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sac => "sac",
            Method::Llc => "llc",
            Method::Sparse => "sparse",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = LsgcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sac" => Ok(Method::Sac),
            "llc" => Ok(Method::Llc),
            "sparse" | "sc" => Ok(Method::Sparse),
            other => Err(LsgcError::contract(format!("unknown method '{other}'"))),
        }
    }
}

/// How the two halves of a duplicated sparse code are folded back to length K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    #[default]
    SignedSubtract,
    Additive,
}

/// Encoder and propagation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub method: Method,
    /// Absolute SAC bandwidth.
    pub sigma: f64,
    pub knn: usize,
    pub llc_reg: f64,
    pub lambda: f64,
    pub lasso_tol: f64,
    pub lasso_max_iters: usize,
    /// Random-walk step count; 1 reproduces the normalized base code.
    pub t: usize,
    pub merge_mode: MergeMode,
    /// Keep the Gaussian diagonal in the SAC relation graph.
    pub self_loops: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            method: Method::Sac,
            sigma: 1.0,
            knn: 5,
            llc_reg: 1e-4,
            lambda: 0.1,
            lasso_tol: 1e-6,
            lasso_max_iters: 10_000,
            t: 1,
            merge_mode: MergeMode::SignedSubtract,
            self_loops: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(LsgcError::contract("sigma must be positive"));
        }
        if self.knn < 1 {
            return Err(LsgcError::contract("knn must be at least 1"));
        }
        if !(self.lambda >= 0.0) {
            return Err(LsgcError::contract("lambda must be nonnegative"));
        }
        if !(self.llc_reg >= 0.0) {
            return Err(LsgcError::contract("llc_reg must be nonnegative"));
        }
        if self.t < 1 {
            return Err(LsgcError::contract("t must be at least 1"));
        }
        Ok(())
    }
}
