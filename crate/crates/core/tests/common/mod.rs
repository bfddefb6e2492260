//! Reference implementations written independently of the library, used as
//! test oracles. Each favors the most literal formulation over speed.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect()
}

pub fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v = gauss_vec(rng, n);
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter().map(|a| a / norm).collect()
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// `‖x − Σ cⱼ aⱼ‖² + λ Σ |cⱼ|` over column-major atoms.
pub fn lasso_value(x: &[f64], atoms: &[Vec<f64>], lambda: f64, c: &[f64]) -> f64 {
    let mut r = x.to_vec();
    for (a, cj) in atoms.iter().zip(c) {
        for (ri, ai) in r.iter_mut().zip(a) {
            *ri -= cj * ai;
        }
    }
    r.iter().map(|v| v * v).sum::<f64>() + lambda * c.iter().map(|v| v.abs()).sum::<f64>()
}

/// Exact LASSO minimum by enumerating every sign pattern in {−1, 0, +1}^K.
///
/// For a pattern `s` with support `A` the stationary point solves
/// `A_Aᵀ A_A c = A_Aᵀ x − λ s / 2`; it is kept only when its signs agree with `s`.
/// Returns the minimizing coefficients and objective.
pub fn lasso_by_sign_patterns(x: &[f64], atoms: &[Vec<f64>], lambda: f64) -> (Vec<f64>, f64) {
    let k = atoms.len();
    let mut best = (vec![0.0; k], lasso_value(x, atoms, lambda, &vec![0.0; k]));
    let total = 3usize.pow(k as u32);
    for code in 0..total {
        let mut signs = vec![0i32; k];
        let mut rest = code;
        for s in signs.iter_mut() {
            *s = (rest % 3) as i32 - 1;
            rest /= 3;
        }
        let support: Vec<usize> = (0..k).filter(|&j| signs[j] != 0).collect();
        let m = support.len();
        if m == 0 {
            continue;
        }
        let gram = DMatrix::from_fn(m, m, |a, b| {
            atoms[support[a]]
                .iter()
                .zip(&atoms[support[b]])
                .map(|(p, q)| p * q)
                .sum::<f64>()
        });
        let rhs = DVector::from_fn(m, |a, _| {
            let corr: f64 = atoms[support[a]].iter().zip(x).map(|(p, q)| p * q).sum();
            corr - lambda * signs[support[a]] as f64 / 2.0
        });
        let Some(ch) = gram.cholesky() else { continue };
        let sol = ch.solve(&rhs);
        if support
            .iter()
            .enumerate()
            .any(|(a, &j)| sol[a] * signs[j] as f64 <= 0.0)
        {
            continue;
        }
        let mut c = vec![0.0; k];
        for (a, &j) in support.iter().enumerate() {
            c[j] = sol[a];
        }
        let v = lasso_value(x, atoms, lambda, &c);
        if v < best.1 {
            best = (c, v);
        }
    }
    best
}

/// Indices of the `k` nearest bases by an explicit full sort.
pub fn nearest(x: &[f64], bases: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..bases.len()).collect();
    idx.sort_by(|&a, &b| {
        sq(x, &bases[a])
            .partial_cmp(&sq(x, &bases[b]))
            .unwrap()
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// LLC objective `‖x − Σ wᵢ bᵢ‖² + reg·tr(C)·‖w‖²` restricted to `support`, with
/// `C` the covariance of the neighbors shifted by `x`.
pub fn llc_value(x: &[f64], bases: &[Vec<f64>], support: &[usize], reg: f64, w: &[f64]) -> f64 {
    let trace: f64 = support.iter().map(|&j| sq(x, &bases[j])).sum();
    let mut r = x.to_vec();
    for (&j, wj) in support.iter().zip(w) {
        for (ri, bi) in r.iter_mut().zip(&bases[j]) {
            *ri -= wj * bi;
        }
    }
    r.iter().map(|v| v * v).sum::<f64>() + reg * trace * w.iter().map(|v| v * v).sum::<f64>()
}

/// Accelerated projected gradient on `{w : Σ w = 1}` for the LLC objective over the
/// `k` nearest bases. Returns a full-length code.
pub fn llc_projected_gradient(x: &[f64], bases: &[Vec<f64>], k: usize, reg: f64) -> Vec<f64> {
    let support = nearest(x, bases, k);
    let dim = x.len();
    // with Σw = 1 the residual is −Σ wᵢ (bᵢ − x), so the objective is wᵀ Q w
    let z: Vec<Vec<f64>> = support
        .iter()
        .map(|&j| (0..dim).map(|c| bases[j][c] - x[c]).collect())
        .collect();
    let trace: f64 = z.iter().map(|v| v.iter().map(|a| a * a).sum::<f64>()).sum();
    let q = DMatrix::from_fn(k, k, |a, b| {
        let dot: f64 = z[a].iter().zip(&z[b]).map(|(p, r)| p * r).sum();
        dot + if a == b { reg * trace } else { 0.0 }
    });
    let lip = 2.0 * q.clone().symmetric_eigenvalues().max();
    let project = |v: DVector<f64>| {
        let shift = (v.sum() - 1.0) / k as f64;
        v.map(|a| a - shift)
    };
    let mut w = DVector::from_element(k, 1.0 / k as f64);
    let mut prev = w.clone();
    for it in 0..2_000_000 {
        let mom = (it as f64) / (it as f64 + 3.0);
        let yv = &w + (&w - &prev) * mom;
        let grad = &q * &yv * 2.0;
        let next = project(&yv - grad / lip);
        let change = (&next - &w).amax();
        prev = std::mem::replace(&mut w, next);
        if change < 1e-15 && it > 100 {
            break;
        }
    }
    let mut out = vec![0.0; bases.len()];
    for (a, &j) in support.iter().enumerate() {
        out[j] = w[a];
    }
    out
}

/// Best assignment total by trying every permutation.
pub fn best_assignment_exhaustive(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::NEG_INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let v: f64 = p.iter().enumerate().map(|(i, &j)| w[(i, j)]).sum();
        if v > best {
            best = v;
        }
    });
    best
}

pub fn permute(p: &mut Vec<usize>, start: usize, f: &mut dyn FnMut(&[usize])) {
    if start == p.len() {
        f(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, f);
        p.swap(start, i);
    }
}

/// Clustering accuracy by brute force over injective cluster-to-class maps.
pub fn ac_bruteforce(truth: &[usize], computed: &[usize]) -> f64 {
    let kc = computed.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let size = kc.max(kt);
    let mut perm: Vec<usize> = (0..size).collect();
    let mut best = 0usize;
    permute(&mut perm, 0, &mut |p| {
        let hits = computed
            .iter()
            .zip(truth)
            .filter(|(c, t)| p[**c] == **t)
            .count();
        best = best.max(hits);
    });
    best as f64 / truth.len() as f64
}

/// NMI from an explicit contingency table, entropies in bits, normalized by the
/// larger entropy.
pub fn nmi_from_table(table: &[Vec<f64>]) -> f64 {
    let n: f64 = table.iter().flatten().sum();
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let h = |v: &[f64]| -> f64 {
        v.iter()
            .filter(|c| **c > 0.0)
            .map(|c| -(c / n) * (c / n).log2())
            .sum()
    };
    let mut mi = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &c) in r.iter().enumerate() {
            if c > 0.0 {
                let pij = c / n;
                mi += pij * (pij / ((rows[i] / n) * (cols[j] / n))).log2();
            }
        }
    }
    let hm = h(&rows).max(h(&cols));
    if hm == 0.0 {
        1.0
    } else {
        mi / hm
    }
}

pub fn table_of(truth: &[usize], computed: &[usize]) -> Vec<Vec<f64>> {
    let a = truth.iter().max().unwrap() + 1;
    let b = computed.iter().max().unwrap() + 1;
    let mut t = vec![vec![0.0; b]; a];
    for (&i, &j) in truth.iter().zip(computed) {
        t[i][j] += 1.0;
    }
    t
}

/// Symmetric one-step operator `w(i, j)/sqrt(d(i) d(j))` from raw weights.
pub fn sym_normalize(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let d: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| w[(i, j)] / (d[i] * d[j]).sqrt())
}

/// Sums of `Π p(vₛ, vₛ₊₁)` over all `steps`-step node sequences from node 0 to node 1,
/// split by whether any interior node is 0 or 1. Returns `(clean, dirty)`.
pub fn enumerate_paths(p: &DMatrix<f64>, steps: usize) -> (f64, f64) {
    let n = p.nrows();
    let interior = steps - 1;
    let mut clean = 0.0;
    let mut dirty = 0.0;
    let mut seq = vec![0usize; interior];
    loop {
        let mut prod = 1.0;
        let mut prev = 0;
        for &v in &seq {
            prod *= p[(prev, v)];
            prev = v;
        }
        prod *= p[(prev, 1)];
        if seq.iter().any(|&v| v < 2) {
            dirty += prod;
        } else {
            clean += prod;
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == interior {
                return (clean, dirty);
            }
            seq[pos] += 1;
            if seq[pos] < n {
                break;
            }
            seq[pos] = 0;
            pos += 1;
        }
    }
}

/// Gaussian weights over `[x, y, b₁..b_K]` with zero diagonal.
pub fn joint_gaussian_weights(
    x: &[f64],
    y: &[f64],
    bases: &[Vec<f64>],
    sigma: f64,
) -> DMatrix<f64> {
    let mut pts = vec![x.to_vec(), y.to_vec()];
    pts.extend(bases.iter().cloned());
    let n = pts.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (-sq(&pts[i], &pts[j]) / (2.0 * sigma * sigma)).exp()
        }
    })
}

/// Full-batch subgradient descent on `λ/2 ‖(w, b)‖² + mean(max(0, 1 − yᵢ (w·xᵢ + b)))`
/// with steps `1/(λτ)`, keeping the best iterate.
pub fn hinge_reference(codes: &DMatrix<f64>, y: &[f64], lambda: f64, iters: usize) -> f64 {
    let (n, d) = (codes.nrows(), codes.ncols());
    let objective = |w: &[f64]| -> f64 {
        let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * lambda / 2.0;
        let loss: f64 = (0..n)
            .map(|i| {
                let s: f64 = (0..d).map(|j| codes[(i, j)] * w[j]).sum::<f64>() + w[d];
                (1.0 - y[i] * s).max(0.0)
            })
            .sum::<f64>()
            / n as f64;
        reg + loss
    };
    let mut w = vec![0.0; d + 1];
    let mut best = objective(&w);
    for it in 0..iters {
        let mut g = vec![0.0; d + 1];
        for j in 0..=d {
            g[j] = lambda * w[j];
        }
        for i in 0..n {
            let s: f64 = (0..d).map(|j| codes[(i, j)] * w[j]).sum::<f64>() + w[d];
            if y[i] * s < 1.0 {
                for j in 0..d {
                    g[j] -= y[i] * codes[(i, j)] / n as f64;
                }
                g[d] -= y[i] / n as f64;
            }
        }
        let step = 1.0 / (lambda * (it + 1) as f64);
        for j in 0..=d {
            w[j] -= step * g[j];
        }
        best = best.min(objective(&w));
    }
    best
}
