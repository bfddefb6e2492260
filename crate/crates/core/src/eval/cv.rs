use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LsgcError, Result};

/// Fold index of every sample, stratified by label when each class has at least
/// `folds` members; otherwise warns and assigns folds without stratification.
pub fn fold_assignments(
    labels: Option<&[usize]>,
    n: usize,
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if folds < 2 || folds > n {
        return Err(LsgcError::contract(format!(
            "need 2 <= folds <= {n}, got {folds}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0; n];
    let stratify = match labels {
        Some(l) => {
            let k = l.iter().max().map_or(0, |m| m + 1);
            let mut counts = vec![0usize; k];
            l.iter().for_each(|&c| counts[c] += 1);
            if counts.iter().any(|&c| c > 0 && c < folds) {
                warn!("a class has fewer members than folds; using unstratified folds");
                false
            } else {
                true
            }
        }
        None => false,
    };
    if stratify {
        let l = labels.unwrap();
        let k = l.iter().max().map_or(0, |m| m + 1);
        let mut offset = 0;
        for c in 0..k {
            let mut members: Vec<usize> = (0..n).filter(|&i| l[i] == c).collect();
            members.shuffle(&mut rng);
            for (r, &i) in members.iter().enumerate() {
                out[i] = (offset + r) % folds;
            }
            offset += members.len();
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        for (r, &i) in idx.iter().enumerate() {
            out[i] = r % folds;
        }
    }
    Ok(out)
}

/// (train, validation) index lists for each fold.
pub fn fold_splits(assign: &[usize], folds: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..folds)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) =
                (0..assign.len()).partition(|&i| assign[i] == f);
            (train, val)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CvOutcome {
    pub best: usize,
    /// Mean validation loss per grid point.
    pub scores: Vec<f64>,
    /// Per-fold validation loss per grid point.
    pub fold_scores: Vec<Vec<f64>>,
}

/// Pick the grid point with the lowest mean validation loss. Ties go to the
/// smallest `steps(point)`, then to the earlier grid entry.
///
/// `loss(point, train, validation)` is evaluated for every point and fold.
pub fn cross_validate<C, S, L>(
    grid: &[C],
    splits: &[(Vec<usize>, Vec<usize>)],
    steps: S,
    loss: L,
) -> Result<CvOutcome>
where
    C: Sync,
    S: Fn(&C) -> usize,
    L: Fn(&C, &[usize], &[usize]) -> Result<f64> + Sync,
{
    use rayon::prelude::*;
    if grid.is_empty() {
        return Err(LsgcError::contract("empty parameter grid"));
    }
    let fold_scores: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|c| {
            splits
                .iter()
                .map(|(tr, va)| loss(c, tr, va))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = fold_scores
        .iter()
        .map(|f| f.iter().sum::<f64>() / f.len() as f64)
        .collect();
    Ok(CvOutcome {
        best: select_best(&scores, |i| steps(&grid[i])),
        scores,
        fold_scores,
    })
}

/// Index of the minimal score with the tie rule of [`cross_validate`].
pub fn select_best(scores: &[f64], steps: impl Fn(usize) -> usize) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        let better =
            scores[i] < scores[best] || (scores[i] == scores[best] && steps(i) < steps(best));
        if better {
            best = i;
        }
    }
    best
}
