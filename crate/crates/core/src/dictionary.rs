//! Dictionary learning by k-means (Lloyd iterations) and nearest-basis lookup.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LsgcError, Result};
use crate::types::{DataMatrix, Dictionary, DictionaryMeta};

/// Centroid seeding strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMeansInit {
    #[default]
    KMeansPlusPlus,
    RandomSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative inertia change drops below this.
    pub tol: f64,
    pub seed: u64,
    pub init: KMeansInit,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            max_iters: 100,
            tol: 1e-6,
            seed,
            init: KMeansInit::KMeansPlusPlus,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(LsgcError::contract("k-means needs K >= 2"));
        }
        if self.max_iters < 1 {
            return Err(LsgcError::contract("max_iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(LsgcError::contract("tol must be positive"));
        }
        Ok(())
    }
}

/// Output of a k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// Row-major K × d centroids.
    pub centroids: Vec<f64>,
    pub dim: usize,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub history: Vec<f64>,
}

impl KMeansFit {
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid in a row-major block; ties go to the lowest index.
fn nearest(x: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_centroids(data: &DataMatrix, params: &KMeansParams, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = data.n_samples();
    let dim = data.dim();
    match params.init {
        KMeansInit::RandomSample => index::sample(rng, n, params.k)
            .into_iter()
            .flat_map(|i| data.row(i).to_vec())
            .collect(),
        KMeansInit::KMeansPlusPlus => {
            let mut centroids = Vec::with_capacity(params.k * dim);
            let first = rng.random_range(0..n);
            centroids.extend_from_slice(data.row(first));
            let mut d2: Vec<f64> = data.rows().map(|x| sq_dist(x, data.row(first))).collect();
            for _ in 1..params.k {
                let total: f64 = d2.iter().sum();
                let pick = if total > 0.0 {
                    let target = rng.random::<f64>() * total;
                    let mut acc = 0.0;
                    let mut pick = n - 1;
                    for (i, w) in d2.iter().enumerate() {
                        acc += w;
                        if acc > target && *w > 0.0 {
                            pick = i;
                            break;
                        }
                    }
                    // rounding can land on an already chosen point
                    if d2[pick] == 0.0 {
                        pick = d2
                            .iter()
                            .enumerate()
                            .rev()
                            .find(|(_, w)| **w > 0.0)
                            .map_or(pick, |(i, _)| i);
                    }
                    pick
                } else {
                    rng.random_range(0..n)
                };
                let c = data.row(pick).to_vec();
                for (i, x) in data.rows().enumerate() {
                    d2[i] = d2[i].min(sq_dist(x, &c));
                }
                centroids.extend_from_slice(&c);
            }
            centroids
        }
    }
}

/// Lloyd's algorithm with deterministic seeding and farthest-point repair of empty clusters.
pub fn kmeans(data: &DataMatrix, params: &KMeansParams) -> Result<KMeansFit> {
    params.validate()?;
    let n = data.n_samples();
    let dim = data.dim();
    if n < params.k {
        return Err(LsgcError::InsufficientData(format!(
            "{n} samples for {} clusters",
            params.k
        )));
    }
    let k = params.k;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = seed_centroids(data, params, &mut rng);
    let mut history = Vec::new();
    let mut assignments = vec![0usize; n];
    let mut dists = vec![0.0; n];

    for iter in 0..params.max_iters {
        let nearest_all: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| nearest(data.row(i), &centroids, dim))
            .collect();
        let changed = nearest_all
            .iter()
            .zip(&assignments)
            .any(|((a, _), b)| a != b);
        for (i, (a, d)) in nearest_all.into_iter().enumerate() {
            assignments[i] = a;
            dists[i] = d;
        }
        let inertia: f64 = dists.iter().sum();
        let prev = history.last().copied();
        history.push(inertia);
        if iter > 0 && !changed {
            break;
        }
        if let Some(p) = prev {
            if (p - inertia).abs() <= params.tol * p.max(f64::MIN_POSITIVE) {
                break;
            }
        }

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.rows().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for (c, s) in centroids[j * dim..(j + 1) * dim]
                    .iter_mut()
                    .zip(&sums[j * dim..(j + 1) * dim])
                {
                    *c = s / counts[j] as f64;
                }
            }
        }
        // empty clusters take the point currently worst served by its own centroid
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let mut far = None;
            let mut far_d = -1.0;
            for (i, x) in data.rows().enumerate() {
                if taken[i] {
                    continue;
                }
                let a = assignments[i];
                let d = sq_dist(x, &centroids[a * dim..(a + 1) * dim]);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
            if let Some(i) = far {
                taken[i] = true;
                centroids[j * dim..(j + 1) * dim].copy_from_slice(data.row(i));
            }
        }
    }

    let inertia = *history.last().unwrap_or(&0.0);
    Ok(KMeansFit {
        centroids,
        dim,
        assignments,
        inertia,
        history,
    })
}

/// Learn K bases by k-means.
pub fn learn_dictionary(data: &DataMatrix, params: &KMeansParams) -> Result<Dictionary> {
    let fit = kmeans(data, params)?;
    // row-major K × d centroids are exactly the column-major d × K basis layout
    let mut dict = Dictionary::new(fit.dim, fit.centroids)?;
    dict.meta = DictionaryMeta {
        seed: Some(params.seed),
        iterations: fit.history.len(),
        inertia: fit.inertia,
        unit_norm: false,
    };
    Ok(dict)
}

/// Learn a dictionary and scale its bases to unit norm, as used for sparse coding.
pub fn learn_unit_dictionary(data: &DataMatrix, params: &KMeansParams) -> Result<Dictionary> {
    learn_dictionary(data, params)?.unit_normalized()
}

/// Index of the Euclidean-nearest basis, lowest index on ties.
pub fn assign_nearest(x: &[f64], dict: &Dictionary) -> Result<usize> {
    if x.len() != dict.dim() {
        return Err(LsgcError::DimensionMismatch {
            expected: dict.dim(),
            got: x.len(),
        });
    }
    Ok(nearest(x, dict.as_slice(), dict.dim()).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(n_each: usize, centers: &[[f64; 2]], sd: f64, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        let mut rows = Vec::new();
        for c in centers {
            for _ in 0..n_each {
                rows.push(vec![
                    c[0] + noise.sample(&mut rng),
                    c[1] + noise.sample(&mut rng),
                ]);
            }
        }
        DataMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn distinct_points_are_a_fixed_point() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let data = DataMatrix::from_rows(&rows).unwrap();
        for init in [KMeansInit::KMeansPlusPlus, KMeansInit::RandomSample] {
            let mut params = KMeansParams::new(6, 3);
            params.init = init;
            let dict = learn_dictionary(&data, &params).unwrap();
            let mut got: Vec<Vec<f64>> = dict.iter().map(<[f64]>::to_vec).collect();
            got.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(got, rows);
        }
    }

    #[test]
    fn blob_centroids_near_blob_means() {
        let sd = 0.5;
        let n_each = 200;
        let data = blobs(n_each, &[[0.0, 0.0], [10.0, 10.0]], sd, 11);
        let dict = learn_dictionary(&data, &KMeansParams::new(2, 5)).unwrap();
        for (b, blob) in [(0usize, 0..n_each), (1, n_each..2 * n_each)] {
            let mean: Vec<f64> = (0..2)
                .map(|c| blob.clone().map(|i| data.row(i)[c]).sum::<f64>() / n_each as f64)
                .collect();
            let j = assign_nearest(&mean, &dict).unwrap();
            let tol = 3.0 * sd / (n_each as f64).sqrt();
            for c in 0..2 {
                assert!((dict.basis(j)[c] - mean[c]).abs() <= tol, "blob {b}");
            }
        }
    }

    #[test]
    fn inertia_never_increases() {
        let data = blobs(
            60,
            &[[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [3.0, 3.0]],
            1.0,
            2,
        );
        for seed in 0..10 {
            let mut params = KMeansParams::new(7, seed);
            params.init = KMeansInit::RandomSample;
            params.tol = 1e-12;
            let fit = kmeans(&data, &params).unwrap();
            for w in fit.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", fit.history);
            }
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let data = blobs(50, &[[0.0, 0.0], [2.0, 1.0]], 1.0, 9);
        let a = learn_dictionary(&data, &KMeansParams::new(5, 42)).unwrap();
        let b = learn_dictionary(&data, &KMeansParams::new(5, 42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_samples() {
        let data = DataMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(
            learn_dictionary(&data, &KMeansParams::new(3, 0)),
            Err(LsgcError::InsufficientData(_))
        ));
    }

    #[test]
    fn empty_clusters_are_repaired() {
        // duplicated points force empty clusters under random seeding
        let mut rows = vec![vec![0.0, 0.0]; 10];
        rows.extend(vec![vec![5.0, 5.0]; 10]);
        rows.push(vec![9.0, 0.0]);
        let data = DataMatrix::from_rows(&rows).unwrap();
        for seed in 0..20 {
            let mut params = KMeansParams::new(3, seed);
            params.init = KMeansInit::RandomSample;
            let fit = kmeans(&data, &params).unwrap();
            assert!(fit.inertia < 1e-12, "seed {seed}: {}", fit.inertia);
        }
    }

    #[test]
    fn nearest_basis_and_ties() {
        let dict = Dictionary::from_bases(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![5.0, 5.0],
            vec![2.0, 2.0],
            vec![-1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(assign_nearest(&[2.0, 2.0], &dict).unwrap(), 3);
        let tie = Dictionary::from_bases(&[
            vec![10.0, 10.0],
            vec![1.0, 0.0],
            vec![10.0, -10.0],
            vec![-10.0, 10.0],
            vec![-1.0, 0.0],
        ])
        .unwrap();
        // equidistant from bases 1 and 4
        assert_eq!(assign_nearest(&[0.0, 0.0], &tie).unwrap(), 1);
        assert!(assign_nearest(&[0.0], &dict).is_err());
    }

    #[test]
    fn nearest_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bases: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let dict = Dictionary::from_bases(&bases).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let mut best = 0;
            for j in 1..bases.len() {
                if sq_dist(&x, &bases[j]) < sq_dist(&x, &bases[best]) {
                    best = j;
                }
            }
            assert_eq!(assign_nearest(&x, &dict).unwrap(), best);
        }
    }
}
