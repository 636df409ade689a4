use rayon::prelude::*;

use super::metrics::{filtered_rank, KnownTails, RankingReport};
use crate::error::{Error, Result};
use crate::kg::{HyperRelGraph, Statement};
use crate::models::KgcModel;

/// Filtered tail rank of every statement, scored in parallel.
///
/// `graph` is the graph the model propagates over (the training graph).
pub fn tail_ranks(
    model: &dyn KgcModel,
    graph: &HyperRelGraph,
    queries: &[Statement],
    known: &KnownTails,
) -> Result<Vec<usize>> {
    queries
        .par_iter()
        .map(|s| {
            let scores = model.score_tails(graph, s.head, s.relation, &s.qualifiers)?;
            filtered_rank(&scores, s.tail, known.get(s.head, s.relation))
        })
        .collect()
}

/// Tail ranking report over `queries`; errors on an empty query set.
pub fn evaluate(
    model: &dyn KgcModel,
    graph: &HyperRelGraph,
    queries: &[Statement],
    known: &KnownTails,
) -> Result<RankingReport> {
    if queries.is_empty() {
        return Err(Error::Data("no statements to evaluate".into()));
    }
    let ranks = tail_ranks(model, graph, queries, known)?;
    Ok(RankingReport::from_ranks(ranks)?.with_labels(model.kind().label(), "", ""))
}
