use crate::dictionary::sq_dist;
use crate::error::{LsgcError, Result};
use crate::types::{CodeVector, Dictionary, SignMode};

fn check(x: &[f64], dict: &Dictionary, sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(LsgcError::contract("sigma must be positive"));
    }
    if x.len() != dict.dim() {
        return Err(LsgcError::DimensionMismatch {
            expected: dict.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Soft-assignment code: Gaussian affinities to every basis, normalized to sum to one.
///
/// Exponents are shifted by the largest one before exponentiating, so when every raw
/// affinity would underflow the result degrades to the hard assignment on the
/// nearest basis (or an even split between exactly tied nearest bases).
pub fn sac_encode(x: &[f64], dict: &Dictionary, sigma: f64) -> Result<CodeVector> {
    check(x, dict, sigma)?;
    let scale = 2.0 * sigma * sigma;
    let logits: Vec<f64> = dict.iter().map(|b| -sq_dist(x, b) / scale).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut coeffs: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = coeffs.iter().sum();
    coeffs.iter_mut().for_each(|c| *c /= z);
    CodeVector::new(coeffs, SignMode::Nonnegative)
}

/// Unnormalized Gaussian affinities exp(−‖x − bᵢ‖² / 2σ²), the edge weights between a
/// datum and the bases.
pub fn gaussian_affinities(x: &[f64], dict: &Dictionary, sigma: f64) -> Result<Vec<f64>> {
    check(x, dict, sigma)?;
    let scale = 2.0 * sigma * sigma;
    Ok(dict
        .iter()
        .map(|b| (-sq_dist(x, b) / scale).exp())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tiny_sigma_is_hard_assignment() {
        let dict =
            Dictionary::from_bases(&[vec![0.0, 0.0], vec![3.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let c = sac_encode(&[1.0, 1.0], &dict, 1e-6).unwrap();
        assert_eq!(c.coeffs(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn equidistant_bases_split_evenly() {
        let dict = Dictionary::from_bases(&[vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let c = sac_encode(&[0.0, 2.0], &dict, 0.7).unwrap();
        assert_eq!(c.coeffs(), &[0.5, 0.5]);
    }

    #[test]
    fn matches_scalar_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bases: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let dict = Dictionary::from_bases(&bases).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = sac_encode(&x, &dict, 1.0).unwrap();
        let mut raw = Vec::new();
        for b in &bases {
            let mut d = 0.0;
            for k in 0..3 {
                d += (x[k] - b[k]).powi(2);
            }
            raw.push((-d / 2.0).exp());
        }
        let z: f64 = raw.iter().sum();
        for (got, r) in c.coeffs().iter().zip(&raw) {
            assert!((got - r / z).abs() < 1e-14);
        }
        assert!((c.coeffs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_sigma() {
        let dict = Dictionary::from_bases(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(sac_encode(&[0.0], &dict, 0.0).is_err());
        assert!(sac_encode(&[0.0, 1.0], &dict, 1.0).is_err());
    }
}
