//! Local similarities, global coding: propagate a base code over the basis graph.
//!
//! A datum's base code `l(x)` is folded into the basis graph as one extra node,
//! normalized against the basis degrees, and pushed through `t − 1` further steps
//! of the symmetric transition operator `P̃`.

mod relation;
mod transition;

pub use relation::{
    llc_self_codes, relation_llc, relation_sac, relation_sac_with, relation_sparse,
    relation_sparse_with, sparse_self_codes,
};
pub use transition::{build_transition, matrix_power, normalized_operator, PowerLadder};

use nalgebra::DMatrix;

use crate::encoders::BaseEncoder;
use crate::error::{LsgcError, Result};
use crate::types::{
    CodeVector, DataMatrix, Dictionary, EncoderConfig, MergeMode, Method, RelationMatrix, SignMode,
    TransitionMatrix,
};

/// Map a base code onto the nonnegative datum vector the graph expects:
/// unchanged for SAC, absolute values for LLC, `[positive, negative]` halves for sparse codes.
pub fn datum_vector(code: &CodeVector, method: Method) -> Result<CodeVector> {
    match method {
        Method::Sac => CodeVector::new(code.coeffs().to_vec(), SignMode::Nonnegative),
        Method::Llc => CodeVector::new(
            code.coeffs().iter().map(|v| v.abs()).collect(),
            SignMode::Nonnegative,
        ),
        Method::Sparse => {
            let c = code.coeffs();
            let mut out = Vec::with_capacity(2 * c.len());
            out.extend(c.iter().map(|v| v.max(0.0)));
            out.extend(c.iter().map(|v| (-v).max(0.0)));
            CodeVector::new(out, SignMode::Duplicated)
        }
    }
}

/// `l̃ᵢ = lᵢ / sqrt(d(x)·(d(bᵢ) + lᵢ))` with `d(x) = Σ lᵢ`.
pub fn normalize_datum_code(l: &CodeVector, relation: &RelationMatrix) -> Result<Vec<f64>> {
    normalize_datum_slice(l.coeffs(), relation.degrees())
}

pub(crate) fn normalize_datum_slice(l: &[f64], degrees: &[f64]) -> Result<Vec<f64>> {
    if l.len() != degrees.len() {
        return Err(LsgcError::DimensionMismatch {
            expected: degrees.len(),
            got: l.len(),
        });
    }
    if l.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(LsgcError::contract(
            "datum vector must be finite and nonnegative",
        ));
    }
    let dx: f64 = l.iter().sum();
    if dx <= 0.0 {
        return Err(LsgcError::DisconnectedDatum);
    }
    Ok(l.iter()
        .zip(degrees)
        .map(|(&li, &di)| {
            if li == 0.0 {
                0.0
            } else {
                li / (dx * (di + li)).sqrt()
            }
        })
        .collect())
}

/// Fold a `[positive, negative]` code back to length K.
pub fn merge_signed_codes(c: &[f64], mode: MergeMode) -> Result<Vec<f64>> {
    if c.len() % 2 != 0 {
        return Err(LsgcError::contract("merge requires an even-length code"));
    }
    let k = c.len() / 2;
    let (p, n) = c.split_at(k);
    Ok(match mode {
        MergeMode::SignedSubtract => p.iter().zip(n).map(|(a, b)| a - b).collect(),
        MergeMode::Additive => p.iter().zip(n).map(|(a, b)| a + b).collect(),
    })
}

/// Relation graph for the configured method, plus whether it is duplicated to 2K nodes.
pub fn build_relation(dict: &Dictionary, config: &EncoderConfig) -> Result<(RelationMatrix, bool)> {
    match config.method {
        Method::Sac => Ok((
            relation_sac_with(dict, config.sigma, config.self_loops)?,
            false,
        )),
        Method::Llc => Ok((relation_llc(dict, config.knn, config.llc_reg)?, false)),
        Method::Sparse => relation_sparse_with(
            dict,
            config.lambda,
            config.lasso_tol,
            config.lasso_max_iters,
        ),
    }
}

/// A base encoder together with its propagated basis graph.
#[derive(Debug, Clone)]
pub struct LsgcModel {
    relation: RelationMatrix,
    transition: TransitionMatrix,
    encoder: BaseEncoder,
    duplicated: bool,
}

impl LsgcModel {
    pub fn build(dict: Dictionary, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let (relation, _) = build_relation(&dict, &config)?;
        LsgcModel::from_parts(dict, config, relation)
    }

    /// Assemble a model from a stored relation matrix; the power is recomputed.
    pub fn from_parts(
        dict: Dictionary,
        config: EncoderConfig,
        relation: RelationMatrix,
    ) -> Result<Self> {
        let duplicated = config.method == Method::Sparse;
        let expected = if duplicated { 2 * dict.k() } else { dict.k() };
        if relation.size() != expected {
            return Err(LsgcError::DimensionMismatch {
                expected,
                got: relation.size(),
            });
        }
        let transition = build_transition(&relation, config.t)?;
        let encoder = BaseEncoder::new(dict, config)?;
        Ok(LsgcModel {
            relation,
            transition,
            encoder,
            duplicated,
        })
    }

    /// Same graph with a different step count.
    pub fn with_t(&self, t: usize) -> Result<Self> {
        let mut config = self.encoder.config().clone();
        config.t = t;
        Ok(LsgcModel {
            relation: self.relation.clone(),
            transition: self.transition.with_t(t)?,
            encoder: BaseEncoder::new(self.encoder.dictionary().clone(), config)?,
            duplicated: self.duplicated,
        })
    }

    pub fn relation(&self) -> &RelationMatrix {
        &self.relation
    }

    pub fn transition(&self) -> &TransitionMatrix {
        &self.transition
    }

    pub fn config(&self) -> &EncoderConfig {
        self.encoder.config()
    }

    pub fn dictionary(&self) -> &Dictionary {
        self.encoder.dictionary()
    }

    pub fn encoder(&self) -> &BaseEncoder {
        &self.encoder
    }

    pub fn duplicated(&self) -> bool {
        self.duplicated
    }

    /// Normalized datum vector `l̃(x)` (length 2K on the sparse path).
    pub fn datum_code(&self, x: &[f64]) -> Result<Vec<f64>> {
        let base = self.encoder.encode(x)?;
        let l = datum_vector(&base, self.config().method)?;
        normalize_datum_code(&l, &self.relation)
    }

    /// `P̃^(t−1) l̃(x)` before merging duplicated halves; always nonnegative.
    pub fn encode_unmerged(&self, x: &[f64]) -> Result<Vec<f64>> {
        let lt = self.datum_code(x)?;
        Ok(propagate(self.transition.power(), &lt))
    }

    pub fn encode(&self, x: &[f64]) -> Result<CodeVector> {
        let c = self.encode_unmerged(x)?;
        self.finish(c)
    }

    pub(crate) fn finish(&self, c: Vec<f64>) -> Result<CodeVector> {
        if !self.duplicated {
            return CodeVector::new(c, SignMode::Nonnegative);
        }
        let mode = self.config().merge_mode;
        let merged = merge_signed_codes(&c, mode)?;
        match mode {
            MergeMode::SignedSubtract => CodeVector::new(merged, SignMode::Signed),
            MergeMode::Additive => CodeVector::new(merged, SignMode::Nonnegative),
        }
    }

    pub fn encode_all(&self, data: &DataMatrix) -> Result<Vec<CodeVector>> {
        use rayon::prelude::*;
        (0..data.n_samples())
            .into_par_iter()
            .map(|i| self.encode(data.row(i)))
            .collect()
    }

    /// Normalized datum vectors of every row as columns of a (K or 2K)×n matrix.
    pub fn datum_matrix(&self, data: &DataMatrix) -> Result<DMatrix<f64>> {
        use rayon::prelude::*;
        let cols: Vec<Vec<f64>> = (0..data.n_samples())
            .into_par_iter()
            .map(|i| self.datum_code(data.row(i)))
            .collect::<Result<_>>()?;
        let m = self.relation.size();
        Ok(DMatrix::from_fn(m, cols.len(), |i, j| cols[j][i]))
    }

    /// Merge the rows of an unmerged (2K×n) code matrix; identity on non-duplicated models.
    pub fn merge_matrix(&self, codes: DMatrix<f64>) -> DMatrix<f64> {
        if !self.duplicated {
            return codes;
        }
        let k = codes.nrows() / 2;
        let pos = codes.rows(0, k);
        let neg = codes.rows(k, k);
        match self.config().merge_mode {
            MergeMode::SignedSubtract => pos - neg,
            MergeMode::Additive => pos + neg,
        }
    }
}

/// Sparse product of a dense operator with a vector, skipping zero entries.
fn propagate(power: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; power.nrows()];
    for (i, &vi) in v.iter().enumerate() {
        if vi != 0.0 {
            for (o, p) in out.iter_mut().zip(power.column(i).iter()) {
                *o += p * vi;
            }
        }
    }
    out
}

/// Encode `x` with a built model.
pub fn lsgc_encode(x: &[f64], model: &LsgcModel) -> Result<CodeVector> {
    model.encode(x)
}
