use rand::Rng;

use crate::diff::{Graph, Var};
use crate::error::{Error, Result};

/// `max(0, δ - pos + neg)`.
pub fn margin_loss(pos: f64, neg: f64, delta: f64) -> f64 {
    (delta - pos + neg).max(0.0)
}

/// Elementwise margin loss on score vars of equal shape.
pub fn margin_loss_var(g: &mut Graph, pos: Var, neg: Var, delta: f64) -> Result<Var> {
    let diff = g.sub(neg, pos)?;
    let shifted = g.add_scalar(diff, delta);
    Ok(g.relu(shifted))
}

/// Uniform entity id in `0..n`. The gold tail is not excluded.
pub fn sample_negative<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::invalid(format!("negative sampling needs at least 2 entities, got {n}")));
    }
    Ok(rng.random_range(0..n))
}

/// Mean of the active per-type losses.
pub fn average_losses(g: &mut Graph, losses: &[Var]) -> Result<Var> {
    if losses.is_empty() {
        return Err(Error::invalid("no active losses to average"));
    }
    let mut total = losses[0];
    for &l in &losses[1..] {
        total = g.add(total, l)?;
    }
    Ok(g.scale(total, 1.0 / losses.len() as f64))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::diff::{Mode, ParamStore};

    #[test]
    fn margin_examples() {
        assert_eq!(margin_loss(2.0, 0.5, 1.0), 0.0);
        assert!((margin_loss(0.2, 0.5, 1.0) - 1.3).abs() < 1e-15);
        assert_eq!(margin_loss(0.7, 0.7, 1.0), 1.0);

        let store = ParamStore::new();
        let mut g = Graph::new(&store, Mode::Eval, 0);
        let p = g.scalar(0.2);
        let n = g.scalar(0.5);
        let l = margin_loss_var(&mut g, p, n, 1.0).unwrap();
        assert_eq!(g.item(l), margin_loss(0.2, 0.5, 1.0));
    }

    #[test]
    fn negatives_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 10_000;
        let ones = (0..draws).filter(|_| sample_negative(&mut rng, 2).unwrap() == 1).count() as f64;
        let expected = draws as f64 / 2.0;
        // chi-square with one degree of freedom, 99.9% quantile 10.83
        let chi2 = 2.0 * (ones - expected).powi(2) / expected;
        assert!(chi2 < 10.83, "chi2 {chi2}");

        let a = sample_negative(&mut ChaCha8Rng::seed_from_u64(5), 100).unwrap();
        let b = sample_negative(&mut ChaCha8Rng::seed_from_u64(5), 100).unwrap();
        assert_eq!(a, b);
        assert!(sample_negative(&mut rng, 1).is_err());
    }

    #[test]
    fn averaging_active_losses() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store, Mode::Eval, 0);
        let ls: Vec<Var> = [0.3, 0.6, 0.9].iter().map(|&v| g.scalar(v)).collect();
        let avg = average_losses(&mut g, &ls).unwrap();
        assert!((g.item(avg) - 0.6).abs() < 1e-15);
        let one = average_losses(&mut g, &ls[..1]).unwrap();
        assert_eq!(g.item(one), 0.3);
        assert!(average_losses(&mut g, &[]).is_err());
    }
}
