//! Base coding algorithms: soft assignment, locality-constrained linear and sparse coding.

mod lasso;
mod llc;
mod sac;

pub use lasso::{
    lasso_objective, lasso_solve, sparse_encode, sparse_encode_with, LassoProblem, LassoSolution,
    SparseCoder, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
pub use llc::llc_encode;
pub use sac::{gaussian_affinities, sac_encode};

pub(crate) use llc::llc_code_raw;

use crate::error::Result;
use crate::types::{CodeVector, DataMatrix, Dictionary, EncoderConfig, Method};

/// Encoder bound to one dictionary, caching per-dictionary state.
#[derive(Debug, Clone)]
pub struct BaseEncoder {
    dict: Dictionary,
    config: EncoderConfig,
    coder: Option<SparseCoder>,
}

impl BaseEncoder {
    pub fn new(dict: Dictionary, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let coder = match config.method {
            Method::Sparse => Some(SparseCoder::from_dictionary(
                &dict,
                config.lambda,
                config.lasso_tol,
                config.lasso_max_iters,
            )?),
            _ => None,
        };
        Ok(BaseEncoder {
            dict,
            config,
            coder,
        })
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn encode(&self, x: &[f64]) -> Result<CodeVector> {
        match self.config.method {
            Method::Sac => sac_encode(x, &self.dict, self.config.sigma),
            Method::Llc => llc_encode(x, &self.dict, self.config.knn, self.config.llc_reg),
            Method::Sparse => sparse_encode_with(self.coder.as_ref().expect("sparse coder"), x),
        }
    }

    /// Codes for every row, in row order.
    pub fn encode_all(&self, data: &DataMatrix) -> Result<Vec<CodeVector>> {
        use rayon::prelude::*;
        (0..data.n_samples())
            .into_par_iter()
            .map(|i| self.encode(data.row(i)))
            .collect()
    }
}
