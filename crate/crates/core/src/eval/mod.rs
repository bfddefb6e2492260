//! Downstream tasks and metrics: ridge regression, one-vs-all linear
//! classification, clustering quality, PCA and cross-validation.

mod classify;
mod cluster;
mod cv;
mod pca;
mod regression;

pub use classify::{
    argmax_rows, error_rate, hinge_objective, linear_ova_predict, linear_ova_train, OvaModel,
    OvaParams,
};
pub use cluster::{accuracy_ac, hungarian_match, kmeans_cluster, nmi, ClusteringResult};
pub use cv::{cross_validate, fold_assignments, fold_splits, select_best, CvOutcome};
pub use pca::{pca_reduce, PcaResult};
pub use regression::{ridge_fit, ridge_predict, rmse};

use serde::{Deserialize, Serialize};

/// Metrics of one run; fields a task does not produce are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ac: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_rate: Option<f64>,
    /// Mean validation loss of each cross-validation fold for the selected settings.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub folds: Vec<f64>,
}
