//! Exact small-graph checks of the diffusion-kernel decomposition behind LSGC.
//!
//! On the joint graph over `{x, y, b₁..b_K}`, the `2t`-step transition mass from
//! `x` to `y` splits into paths whose intermediate nodes are all bases (this part
//! equals the inner product of the two `t`-step codes) and paths that pass back
//! through `x` or `y` (the residual). The residual share is bounded by
//! `t·exp(3𝔏²/2σ²)/(K+2)`.

mod seb;

pub use seb::{bound_diameter, max_pairwise_distance, smallest_enclosing_ball, Ball};

use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::dictionary::sq_dist;
use crate::encoders::gaussian_affinities;
use crate::error::{LsgcError, Result};
use crate::lsgc::{matrix_power, normalize_datum_slice, normalized_operator, relation_sac};
use crate::types::{Dictionary, RelationMatrix, DEGREE_FLOOR};

/// Node index of `x` in a [`JointGraph`].
pub const X: usize = 0;
/// Node index of `y` in a [`JointGraph`].
pub const Y: usize = 1;

/// Graph over `x`, `y` and the bases; nodes 0 and 1 are the two data points.
#[derive(Debug, Clone)]
pub struct JointGraph {
    weights: DMatrix<f64>,
    degrees: Vec<f64>,
    p_tilde: DMatrix<f64>,
}

impl JointGraph {
    /// Arbitrary symmetric nonnegative weights with at least two nodes.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() < 2 {
            return Err(LsgcError::contract("joint graph needs at least x and y"));
        }
        let rel = RelationMatrix::from_symmetric(weights)?;
        let p_tilde = normalized_operator(&rel);
        Ok(JointGraph {
            degrees: rel.degrees().to_vec(),
            weights: rel.weights().clone(),
            p_tilde,
        })
    }

    /// Gaussian weights between every pair of distinct nodes, zero diagonal.
    pub fn gaussian(x: &[f64], y: &[f64], dict: &Dictionary, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(LsgcError::contract("sigma must be positive"));
        }
        if x.len() != dict.dim() || y.len() != dict.dim() {
            return Err(LsgcError::DimensionMismatch {
                expected: dict.dim(),
                got: if x.len() != dict.dim() {
                    x.len()
                } else {
                    y.len()
                },
            });
        }
        let mut pts: Vec<&[f64]> = vec![x, y];
        pts.extend(dict.iter());
        let n = pts.len();
        let scale = 2.0 * sigma * sigma;
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (-sq_dist(pts[i], pts[j]) / scale).exp();
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        JointGraph::from_weights(w)
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

    pub fn p_tilde(&self) -> &DMatrix<f64> {
        &self.p_tilde
    }

    /// Copy whose stored operator is normalized with `degree + offset`. The code side
    /// of [`partition_check`] still uses the true degrees, so any nonzero offset
    /// shows up as an imbalance.
    pub fn with_degree_offset(&self, offset: f64) -> JointGraph {
        let inv: Vec<f64> = self
            .degrees
            .iter()
            .map(|d| 1.0 / (d + offset).max(DEGREE_FLOOR).sqrt())
            .collect();
        let n = self.size();
        let p_tilde = DMatrix::from_fn(n, n, |i, j| inv[i] * self.weights[(i, j)] * inv[j]);
        JointGraph {
            weights: self.weights.clone(),
            degrees: self.degrees.clone(),
            p_tilde,
        }
    }
}

fn check_steps(steps: usize) -> Result<()> {
    if steps < 2 || steps % 2 != 0 {
        return Err(LsgcError::contract(format!(
            "step count must be even and at least 2, got {steps}"
        )));
    }
    Ok(())
}

/// `(P̃^steps)[x][y]` on the joint graph.
pub fn joint_diffusion(g: &JointGraph, steps: usize) -> Result<f64> {
    check_steps(steps)?;
    Ok(matrix_power(&g.p_tilde, steps)[(X, Y)])
}

/// Mass of `x → y` walks of length `steps` whose intermediate nodes include `x` or `y`.
///
/// Forward recursion over (node, revisited) states.
pub fn residual(g: &JointGraph, steps: usize) -> Result<f64> {
    check_steps(steps)?;
    Ok(revisit_split(g, steps).1)
}

/// (avoiding, revisiting) path masses by a two-state forward recursion.
fn revisit_split(g: &JointGraph, steps: usize) -> (f64, f64) {
    let n = g.size();
    let p = &g.p_tilde;
    let mut clean = vec![0.0; n];
    let mut dirty = vec![0.0; n];
    clean[X] = 1.0;
    for s in 1..=steps {
        let mut nc = vec![0.0; n];
        let mut nd = vec![0.0; n];
        for u in 0..n {
            let (cu, du) = (clean[u], dirty[u]);
            if cu == 0.0 && du == 0.0 {
                continue;
            }
            for v in 0..n {
                let w = p[(u, v)];
                if w == 0.0 {
                    continue;
                }
                let endpoint = v == X || v == Y;
                if endpoint && s < steps {
                    nd[v] += (cu + du) * w;
                } else {
                    nc[v] += cu * w;
                    nd[v] += du * w;
                }
            }
        }
        clean = nc;
        dirty = nd;
    }
    (clean[Y], dirty[Y])
}

/// `t`-step codes of `x` and `y` under the joint degrees: `P̃_BB^(t−1) · P̃_B,x`.
///
/// Normalizes straight from the weights and degrees rather than reusing the
/// graph's stored operator, so the two sides of the partition are computed apart.
pub fn joint_codes(g: &JointGraph, t: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if t < 1 {
        return Err(LsgcError::contract("t must be at least 1"));
    }
    let k = g.size() - 2;
    let inv: Vec<f64> = g
        .degrees
        .iter()
        .map(|d| 1.0 / d.max(DEGREE_FLOOR).sqrt())
        .collect();
    let w = &g.weights;
    let bb = DMatrix::from_fn(k, k, |i, j| inv[i + 2] * w[(i + 2, j + 2)] * inv[j + 2]);
    let power = matrix_power(&bb, t - 1);
    let code = |e: usize| {
        let l = nalgebra::DVector::from_fn(k, |i, _| inv[i + 2] * w[(i + 2, e)] * inv[e]);
        (&power * l).iter().copied().collect::<Vec<f64>>()
    };
    Ok((code(X), code(Y)))
}

/// Result of one decomposition check.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub t: usize,
    pub k: usize,
    /// `cᵗ(x)·cᵗ(y)` under the joint degree convention.
    pub kernel: f64,
    pub p2t: f64,
    pub residual: f64,
    /// `|p2t − kernel − residual|`.
    pub imbalance: f64,
    /// Kernel under the per-datum convention (basis-only degrees plus `lᵢ`).
    pub kernel_per_datum: f64,
    /// `kernel_per_datum − kernel`.
    pub gap: f64,
}

impl LemmaReport {
    pub fn balanced(&self, tol: f64) -> bool {
        self.imbalance <= tol
    }
}

/// Evaluate the three terms independently on an arbitrary joint graph.
pub fn partition_check(g: &JointGraph, t: usize) -> Result<(f64, f64, f64)> {
    let p2t = joint_diffusion(g, 2 * t)?;
    let r = residual(g, 2 * t)?;
    let (cx, cy) = joint_codes(g, t)?;
    let kernel: f64 = cx.iter().zip(&cy).map(|(a, b)| a * b).sum();
    Ok((kernel, p2t, r))
}

/// Decomposition check on the Gaussian joint graph of `x`, `y` and the dictionary.
pub fn lemma_check(
    dict: &Dictionary,
    x: &[f64],
    y: &[f64],
    sigma: f64,
    t: usize,
) -> Result<LemmaReport> {
    lemma_check_on(
        &JointGraph::gaussian(x, y, dict, sigma)?,
        dict,
        x,
        y,
        sigma,
        t,
    )
}

/// As [`lemma_check`] but on a caller-supplied joint graph.
pub fn lemma_check_on(
    g: &JointGraph,
    dict: &Dictionary,
    x: &[f64],
    y: &[f64],
    sigma: f64,
    t: usize,
) -> Result<LemmaReport> {
    let (kernel, p2t, r) = partition_check(g, t)?;
    let kernel_per_datum = per_datum_kernel(dict, x, y, sigma, t)?;
    Ok(LemmaReport {
        t,
        k: dict.k(),
        kernel,
        p2t,
        residual: r,
        imbalance: (p2t - kernel - r).abs(),
        kernel_per_datum,
        gap: kernel_per_datum - kernel,
    })
}

/// `cᵗ(x)·cᵗ(y)` where each code is normalized on its own against the basis-only graph.
fn per_datum_kernel(dict: &Dictionary, x: &[f64], y: &[f64], sigma: f64, t: usize) -> Result<f64> {
    let rel = relation_sac(dict, sigma)?;
    let power = matrix_power(&normalized_operator(&rel), t - 1);
    let code = |p: &[f64]| -> Result<Vec<f64>> {
        let l = gaussian_affinities(p, dict, sigma)?;
        let lt = normalize_datum_slice(&l, rel.degrees())?;
        Ok((&power * nalgebra::DVector::from_vec(lt))
            .iter()
            .copied()
            .collect())
    };
    let (cx, cy) = (code(x)?, code(y)?);
    Ok(cx.iter().zip(&cy).map(|(a, b)| a * b).sum())
}

/// Parameters of the residual bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub diameter: f64,
    pub sigma: f64,
    pub t: usize,
    pub k: usize,
}

/// `t·exp(3𝔏²/(2σ²))/(K+2)`, saturating to `+∞` on overflow.
pub fn theorem_bound(b: &BoundInputs) -> Result<f64> {
    if !(b.diameter >= 0.0) || !(b.sigma > 0.0) {
        return Err(LsgcError::contract(
            "bound needs diameter >= 0 and sigma > 0",
        ));
    }
    let v = b.t as f64 * (3.0 * b.diameter * b.diameter / (2.0 * b.sigma * b.sigma)).exp()
        / (b.k as f64 + 2.0);
    if v.is_infinite() {
        warn!("residual bound overflowed; reporting +inf");
    }
    Ok(v)
}

/// Sampling and sweep settings for the residual-ratio experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremSweep {
    pub k_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub t: usize,
    pub sigma: f64,
    pub dim: usize,
    /// Radius of the ball the bases and both data points are drawn from.
    pub radius: f64,
    /// Normalization offset injected into the joint graph; 0 for a faithful run.
    pub degree_offset: f64,
}

impl Default for TheoremSweep {
    fn default() -> Self {
        TheoremSweep {
            k_grid: vec![6, 12, 24, 48],
            seeds: (0..25).collect(),
            t: 2,
            sigma: 1.4,
            dim: 2,
            radius: 1.0,
            degree_offset: 0.0,
        }
    }
}

/// One instance of the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremRow {
    pub k: usize,
    pub seed: u64,
    pub t: usize,
    pub sigma: f64,
    pub diameter: f64,
    pub p2t: f64,
    pub kernel: f64,
    pub residual: f64,
    pub ratio: f64,
    pub bound: f64,
    pub imbalance: f64,
}

impl TheoremRow {
    pub fn violates_bound(&self) -> bool {
        self.ratio > self.bound
    }
}

/// Uniform sample from the `dim`-ball of the given radius.
pub fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    dir.iter().map(|v| v / norm * r).collect()
}

/// Joint-graph instance for one (K, seed) pair: x, y, then K bases, all drawn from the ball.
pub fn sample_instance(
    k: usize,
    seed: u64,
    dim: usize,
    radius: f64,
) -> Result<(Vec<f64>, Vec<f64>, Dictionary)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((k as u64) << 32));
    let x = sample_ball(&mut rng, dim, radius);
    let y = sample_ball(&mut rng, dim, radius);
    let bases: Vec<Vec<f64>> = (0..k).map(|_| sample_ball(&mut rng, dim, radius)).collect();
    Ok((x, y, Dictionary::from_bases(&bases)?))
}

/// Run the sweep; one row per (K, seed) in grid order, seeds innermost.
pub fn theorem_check(sweep: &TheoremSweep) -> Result<Vec<TheoremRow>> {
    use rayon::prelude::*;
    if sweep.t < 1 || sweep.dim == 0 || !(sweep.radius > 0.0) {
        return Err(LsgcError::contract(
            "theorem sweep needs t >= 1, dim >= 1, radius > 0",
        ));
    }
    let jobs: Vec<(usize, u64)> = sweep
        .k_grid
        .iter()
        .flat_map(|&k| sweep.seeds.iter().map(move |&s| (k, s)))
        .collect();
    jobs.par_iter()
        .map(|&(k, seed)| {
            let (x, y, dict) = sample_instance(k, seed, sweep.dim, sweep.radius)?;
            let mut g = JointGraph::gaussian(&x, &y, &dict, sweep.sigma)?;
            if sweep.degree_offset != 0.0 {
                g = g.with_degree_offset(sweep.degree_offset);
            }
            let (kernel, p2t, r) = partition_check(&g, sweep.t)?;
            let mut pts = vec![x, y];
            pts.extend(dict.iter().map(|b| b.to_vec()));
            let diameter = bound_diameter(&pts);
            let bound = theorem_bound(&BoundInputs {
                diameter,
                sigma: sweep.sigma,
                t: sweep.t,
                k,
            })?;
            let ratio = if p2t > 0.0 { r / p2t } else { 0.0 };
            Ok(TheoremRow {
                k,
                seed,
                t: sweep.t,
                sigma: sweep.sigma,
                diameter,
                p2t,
                kernel,
                residual: r,
                ratio,
                bound,
                imbalance: (p2t - kernel - r).abs(),
            })
        })
        .collect()
}

/// Median ratio per K, in grid order.
pub fn median_ratios(rows: &[TheoremRow], k_grid: &[usize]) -> Vec<(usize, f64)> {
    k_grid
        .iter()
        .map(|&k| {
            let mut r: Vec<f64> = rows
                .iter()
                .filter(|row| row.k == k)
                .map(|row| row.ratio)
                .collect();
            r.sort_by(f64::total_cmp);
            let med = if r.is_empty() {
                f64::NAN
            } else if r.len() % 2 == 1 {
                r[r.len() / 2]
            } else {
                (r[r.len() / 2 - 1] + r[r.len() / 2]) / 2.0
            };
            (k, med)
        })
        .collect()
}

pub const THEOREM_CSV_HEADER: &str =
    "K,seed,t,sigma,diameter,p2t,kernel,residual,ratio,bound,imbalance";

/// Write the sweep as CSV with full-precision floats.
pub fn write_theorem_csv<W: Write>(mut out: W, rows: &[TheoremRow]) -> std::io::Result<()> {
    writeln!(out, "{THEOREM_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.k,
            r.seed,
            r.t,
            r.sigma,
            r.diameter,
            r.p2t,
            r.kernel,
            r.residual,
            r.ratio,
            r.bound,
            r.imbalance
        )?;
    }
    Ok(())
}

pub fn save_theorem_csv(path: &Path, rows: &[TheoremRow]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| LsgcError::io(path, e))?;
    write_theorem_csv(std::io::BufWriter::new(f), rows).map_err(|e| LsgcError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node(w: f64) -> JointGraph {
        JointGraph::from_weights(DMatrix::from_row_slice(2, 2, &[0.0, w, w, 0.0])).unwrap()
    }

    #[test]
    fn two_node_graph() {
        let g = two_node(0.3);
        assert_eq!(joint_diffusion(&g, 2).unwrap(), 0.0);
        let p4 = joint_diffusion(&g, 4).unwrap();
        assert_eq!(residual(&g, 4).unwrap(), p4);
        assert!(joint_diffusion(&g, 3).is_err());
    }

    #[test]
    fn star_graph_single_path() {
        // hub b₁ = node 2 with x and y as leaves
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.7, 0.0, 0.0, 0.4, 0.7, 0.4, 0.0]);
        let g = JointGraph::from_weights(w).unwrap();
        let p = g.p_tilde().clone();
        let p2 = joint_diffusion(&g, 2).unwrap();
        assert!((p2 - p[(0, 2)] * p[(2, 1)]).abs() < 1e-15);
        assert_eq!(residual(&g, 2).unwrap(), 0.0);
    }

    #[test]
    fn one_way_chain_has_no_residual() {
        // x - b - y, no x-y edge: length-2 walks cannot revisit an endpoint
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 1.0, 2.0, 0.0]);
        let g = JointGraph::from_weights(w).unwrap();
        assert_eq!(residual(&g, 2).unwrap(), 0.0);
    }

    #[test]
    fn bound_examples() {
        let b = theorem_bound(&BoundInputs {
            diameter: 0.0,
            sigma: 1.0,
            t: 3,
            k: 4,
        })
        .unwrap();
        assert_eq!(b, 0.5);
        let b1 = theorem_bound(&BoundInputs {
            diameter: 1.3,
            sigma: 0.9,
            t: 2,
            k: 6,
        })
        .unwrap();
        let b2 = theorem_bound(&BoundInputs {
            diameter: 1.3,
            sigma: 0.9,
            t: 2,
            k: 14,
        })
        .unwrap();
        assert_eq!(b1, 2.0 * b2);
        let b = theorem_bound(&BoundInputs {
            diameter: 2.0,
            sigma: 2.0,
            t: 2,
            k: 14,
        })
        .unwrap();
        assert!((b - 2.0 * 1.5f64.exp() / 16.0).abs() < 1e-15);
        assert!((b - 0.560_211).abs() < 1e-6);
        let inf = theorem_bound(&BoundInputs {
            diameter: 10.0,
            sigma: 1e-3,
            t: 1,
            k: 2,
        })
        .unwrap();
        assert!(inf.is_infinite());
    }

    #[test]
    fn lemma_balances_on_gaussian_instance() {
        let dict =
            Dictionary::from_bases(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        for t in 1..=3 {
            let rep = lemma_check(&dict, &[-0.5, 0.2], &[2.4, -0.1], 1.0, t).unwrap();
            assert!(rep.balanced(1e-12), "{rep:?}");
            if t == 1 {
                assert_eq!(rep.residual, 0.0);
            }
        }
    }

    #[test]
    fn degree_offset_breaks_balance() {
        let dict =
            Dictionary::from_bases(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let x = [-0.5, 0.2];
        let y = [2.4, -0.1];
        let g = JointGraph::gaussian(&x, &y, &dict, 1.0).unwrap();
        let (k0, p0, r0) = partition_check(&g, 2).unwrap();
        assert!((p0 - k0 - r0).abs() < 1e-12);
        let bad = g.with_degree_offset(1.0);
        let (k1, p1, r1) = partition_check(&bad, 2).unwrap();
        assert_eq!(k1, k0);
        assert!((p1 - k1 - r1).abs() > 1e-3);
    }

    #[test]
    fn csv_row_count() {
        let sweep = TheoremSweep {
            k_grid: vec![6, 12],
            seeds: vec![0, 1, 2],
            ..TheoremSweep::default()
        };
        let rows = theorem_check(&sweep).unwrap();
        assert_eq!(rows.len(), 6);
        let mut buf = Vec::new();
        write_theorem_csv(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
    }
}
