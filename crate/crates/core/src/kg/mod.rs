//! Alert ingestion and the hyper-relational graph built from qualified statements.

mod build;
mod ingest;
mod io;
mod regime;
mod split;
mod vocab;

pub use build::{HyperRelGraph, PAD};
pub use ingest::{flow_bucket, parse_alerts, Column, Ingested, Rejection, Schema};
pub use io::{read_statements, read_statements_extending, write_statements};
pub use regime::{apply_density_regime, retained_count};
pub use split::{split, SplitMode, SplitSpec, Splits};
pub use vocab::{Interner, Vocab, VocabKind};

/// One alert fact `(h, r, t, Q)`.
///
/// Qualifier pairs are `(key id, value id)` in the order they were read.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Statement {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    pub qualifiers: Vec<(usize, usize)>,
}

impl Statement {
    pub fn new(head: usize, relation: usize, tail: usize, qualifiers: Vec<(usize, usize)>) -> Self {
        Self {
            head,
            relation,
            tail,
            qualifiers,
        }
    }

    pub fn triple(head: usize, relation: usize, tail: usize) -> Self {
        Self::new(head, relation, tail, Vec::new())
    }
}

/// Qualifier pairs sorted by `(key, value)`.
///
/// Every model composes qualifiers in this order, which makes scores
/// independent of the order pairs were written in.
pub fn canonical_pairs(pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut out = pairs.to_vec();
    out.sort_unstable();
    out
}
