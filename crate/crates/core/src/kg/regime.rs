use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Statement;
use crate::error::{Error, Result};

/// Number of qualifier pairs kept out of `n` at density `p`: `round(p * n)`, halves rounded up.
pub fn retained_count(n: usize, p: f64) -> usize {
    ((p * n as f64) + 0.5).floor().max(0.0) as usize
}

/// Keeps `round(p * n)` qualifier pairs per statement.
///
/// Statement `i` draws a permutation of its pairs from a stream keyed by
/// `(seed, i)` and keeps a prefix of it, so lower densities are subsets of
/// higher ones under the same seed. Kept pairs retain their original order.
pub fn apply_density_regime(statements: &[Statement], p: f64, seed: u64) -> Result<Vec<Statement>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("density fraction {p} must lie in (0, 1]")));
    }
    Ok(statements
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let n = s.qualifiers.len();
            let keep = retained_count(n, p).min(n);
            if keep == n {
                return s.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut kept = order[..keep].to_vec();
            kept.sort_unstable();
            Statement {
                qualifiers: kept.into_iter().map(|j| s.qualifiers[j]).collect(),
                ..s.clone()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_pairs(n: usize) -> Statement {
        Statement::new(0, 0, 1, (0..n).map(|k| (k, 10 + k)).collect())
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(retained_count(3, 1.0), 3);
        assert_eq!(retained_count(3, 0.33), 1);
        assert_eq!(retained_count(3, 0.66), 2);
        assert_eq!(retained_count(0, 0.33), 0);
        assert_eq!(retained_count(1, 0.5), 1);
    }

    #[test]
    fn full_density_is_identity() {
        let s = vec![with_pairs(3), with_pairs(0)];
        assert_eq!(apply_density_regime(&s, 1.0, 4).unwrap(), s);
    }

    #[test]
    fn low_density_keeps_one_of_three() {
        let out = apply_density_regime(&[with_pairs(3)], 0.33, 4).unwrap();
        assert_eq!(out[0].qualifiers.len(), 1);
        let empty = apply_density_regime(&[with_pairs(0)], 0.33, 4).unwrap();
        assert!(empty[0].qualifiers.is_empty());
    }

    #[test]
    fn invalid_fraction_is_rejected() {
        assert!(apply_density_regime(&[], 0.0, 1).is_err());
        assert!(apply_density_regime(&[], 1.5, 1).is_err());
    }

    #[test]
    fn regimes_are_deterministic() {
        let s: Vec<Statement> = (0..20).map(|i| with_pairs(i % 6)).collect();
        assert_eq!(
            apply_density_regime(&s, 0.66, 9).unwrap(),
            apply_density_regime(&s, 0.66, 9).unwrap()
        );
    }
}
