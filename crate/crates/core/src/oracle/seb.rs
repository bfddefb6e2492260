//! Smallest enclosing ball by Welzl's randomized recursion, any dimension.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    fn contains(&self, p: &[f64]) -> bool {
        let d2: f64 = self
            .center
            .iter()
            .zip(p)
            .map(|(c, x)| (c - x).powi(2))
            .sum();
        d2.sqrt() <= self.radius * (1.0 + 1e-12) + 1e-12
    }
}

/// Ball through every point of `support` with center in their affine hull.
fn circumball(support: &[&[f64]], dim: usize) -> Ball {
    match support.len() {
        0 => Ball {
            center: vec![0.0; dim],
            radius: -1.0,
        },
        1 => Ball {
            center: support[0].to_vec(),
            radius: 0.0,
        },
        n => {
            let p0 = support[0];
            let m = n - 1;
            let diffs: Vec<Vec<f64>> = support[1..]
                .iter()
                .map(|p| p.iter().zip(p0).map(|(a, b)| a - b).collect())
                .collect();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
            let a = DMatrix::from_fn(m, m, |i, j| 2.0 * dot(&diffs[i], &diffs[j]));
            let rhs = DVector::from_fn(m, |i, _| dot(&diffs[i], &diffs[i]));
            let lambda = match a.lu().solve(&rhs) {
                Some(l) => l,
                // affinely dependent support: fall back to the farthest pair
                None => return farthest_pair_ball(support, dim),
            };
            let mut center = p0.to_vec();
            for (l, d) in lambda.iter().zip(&diffs) {
                for (c, v) in center.iter_mut().zip(d) {
                    *c += l * v;
                }
            }
            let radius = support
                .iter()
                .map(|p| dot(p, p) - 2.0 * dot(p, &center) + dot(&center, &center))
                .fold(0.0f64, f64::max)
                .sqrt();
            Ball { center, radius }
        }
    }
}

fn farthest_pair_ball(points: &[&[f64]], dim: usize) -> Ball {
    let mut best = (0.0, 0, 0);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d: f64 = points[i]
                .iter()
                .zip(points[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            if d > best.0 {
                best = (d, i, j);
            }
        }
    }
    let center = (0..dim)
        .map(|k| (points[best.1][k] + points[best.2][k]) / 2.0)
        .collect();
    Ball {
        center,
        radius: best.0.sqrt() / 2.0,
    }
}

fn welzl<'a>(points: &[&'a [f64]], boundary: &mut Vec<&'a [f64]>, dim: usize) -> Ball {
    if points.is_empty() || boundary.len() == dim + 1 {
        return circumball(boundary, dim);
    }
    let (p, rest) = points.split_last().unwrap();
    let ball = welzl(rest, boundary, dim);
    if ball.radius >= 0.0 && ball.contains(p) {
        return ball;
    }
    boundary.push(p);
    let ball = welzl(rest, boundary, dim);
    boundary.pop();
    ball
}

/// Smallest ball enclosing all points. Input order is shuffled with a fixed seed.
pub fn smallest_enclosing_ball(points: &[Vec<f64>]) -> Ball {
    if points.is_empty() {
        return Ball {
            center: Vec::new(),
            radius: 0.0,
        };
    }
    let dim = points[0].len();
    let mut refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
    refs.shuffle(&mut ChaCha8Rng::seed_from_u64(0x5eb));
    let mut boundary = Vec::with_capacity(dim + 1);
    welzl(&refs, &mut boundary, dim)
}

pub fn max_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            best = best.max(d);
        }
    }
    best.sqrt()
}

/// The diameter fed to the bound: the larger of the max pairwise distance and the
/// enclosing-ball diameter.
pub fn bound_diameter(points: &[Vec<f64>]) -> f64 {
    max_pairwise_distance(points).max(2.0 * smallest_enclosing_ball(points).radius)
}
