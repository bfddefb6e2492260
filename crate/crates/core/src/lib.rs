//! Feature coding with globally propagated local similarities.
//!
//! Base encoders (soft assignment, locality-constrained linear, sparse) produce a
//! local code `l(x)` against a k-means dictionary. The [`lsgc`] layer builds a
//! graph over the bases and propagates `l(x)` along `t`-step random walks, so
//! that the final code reflects manifold rather than Euclidean neighborhoods.
//! [`oracle`] verifies the diffusion-kernel identity behind the method on small
//! graphs, and [`eval`] / [`protocol`] hold the downstream benchmarks.

pub mod data;
pub mod dictionary;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod io;
pub mod lsgc;
pub mod oracle;
pub mod protocol;
pub mod types;

pub use dictionary::{
    assign_nearest, kmeans, learn_dictionary, learn_unit_dictionary, KMeansInit, KMeansParams,
};
pub use encoders::{lasso_solve, llc_encode, sac_encode, sparse_encode, BaseEncoder, LassoProblem};
pub use error::{LsgcError, Result};
pub use lsgc::{
    build_transition, lsgc_encode, merge_signed_codes, normalize_datum_code, LsgcModel,
};
pub use types::{
    symmetrize, CodeVector, DataMatrix, Dictionary, EncoderConfig, MergeMode, Method,
    RelationMatrix, SignMode, TransitionMatrix,
};
