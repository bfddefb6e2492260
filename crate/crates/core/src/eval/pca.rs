use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{LsgcError, Result};
use crate::types::DataMatrix;

#[derive(Debug, Clone)]
pub struct PcaResult {
    pub reduced: DataMatrix,
    /// d × m, orthonormal columns ordered by decreasing variance.
    pub components: DMatrix<f64>,
    pub mean: Vec<f64>,
    /// Fraction of total variance kept.
    pub retained: f64,
    /// All eigenvalues of the covariance, descending.
    pub spectrum: Vec<f64>,
}

/// Project centered data onto the fewest leading principal directions whose
/// variance share reaches `energy`.
pub fn pca_reduce(data: &DataMatrix, energy: f64) -> Result<PcaResult> {
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(LsgcError::contract("energy must lie in (0, 1]"));
    }
    let (n, d) = (data.n_samples(), data.dim());
    if n == 0 {
        return Err(LsgcError::EmptyDataset);
    }
    let x = data.to_matrix();
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.tr_mul(&centered) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = spectrum.iter().sum();
    let mut m = d;
    if total > 0.0 {
        let mut acc = 0.0;
        for (i, v) in spectrum.iter().enumerate() {
            acc += v;
            // relative slack absorbs round-off when the target is hit exactly
            if acc >= energy * total * (1.0 - 1e-12) {
                m = i + 1;
                break;
            }
        }
    } else {
        m = 1;
    }
    let components = DMatrix::from_fn(d, m, |r, c| eig.eigenvectors[(r, order[c])]);
    let proj = &centered * &components;
    let retained = if total > 0.0 {
        spectrum[..m].iter().sum::<f64>() / total
    } else {
        1.0
    };
    let mut reduced = DataMatrix::new(n, m, proj.transpose().as_slice().to_vec())?;
    if let Some(l) = data.labels() {
        reduced = reduced.with_labels(l.to_vec())?;
    }
    if let Some(t) = data.targets() {
        reduced = reduced.with_targets(t.to_vec())?;
    }
    Ok(PcaResult {
        reduced,
        components,
        mean,
        retained,
        spectrum,
    })
}
