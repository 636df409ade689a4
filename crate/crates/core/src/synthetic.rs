//! Seeded toy graphs for tests, benchmarks and smoke runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Sizes;
use crate::kg::Statement;

/// A graph whose tails are decided by one qualifier value.
///
/// Attackers `0..10` hit victims `10..30` over four relations. Key 0 carries
/// value `v ∈ 0..20` and the tail is victim `10 + v`; key 1 holds one of
/// three noise values `20..23` unrelated to the tail.
pub fn qualifier_driven(num_statements: usize, seed: u64) -> (Vec<Statement>, Sizes) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stmts = (0..num_statements)
        .map(|_| {
            let head = rng.random_range(0..10);
            let relation = rng.random_range(0..4);
            let v = rng.random_range(0..20);
            let noise = 20 + rng.random_range(0..3);
            Statement::new(head, relation, 10 + v, vec![(0, v), (1, noise)])
        })
        .collect();
    let sizes = Sizes {
        entities: 30,
        relations: 4,
        qual_keys: 2,
        qual_values: 23,
    };
    (stmts, sizes)
}

/// Uniform random statements without self-loops, each with up to
/// `max_quals` qualifier pairs.
pub fn random_graph(sizes: Sizes, num_statements: usize, max_quals: usize, seed: u64) -> Vec<Statement> {
    assert!(sizes.entities >= 2 && sizes.relations >= 1, "need two entities and a relation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_statements)
        .map(|_| {
            let head = rng.random_range(0..sizes.entities);
            let mut tail = rng.random_range(0..sizes.entities - 1);
            if tail >= head {
                tail += 1;
            }
            let relation = rng.random_range(0..sizes.relations);
            let n = if sizes.qual_keys == 0 || sizes.qual_values == 0 {
                0
            } else {
                rng.random_range(0..=max_quals)
            };
            let quals = (0..n)
                .map(|_| (rng.random_range(0..sizes.qual_keys), rng.random_range(0..sizes.qual_values)))
                .collect();
            Statement::new(head, relation, tail, quals)
        })
        .collect()
}
