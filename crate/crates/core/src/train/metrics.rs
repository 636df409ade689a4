//! Filtered ranks and their MR / MRR / Hits@k summaries.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::Statement;

/// `1 +` the number of non-filtered entities scoring at least as high as the gold.
///
/// Entities in `known` other than `gold` are skipped. Ties count against the
/// gold, so a constant score vector ranks it last among the survivors.
pub fn filtered_rank(scores: &[f64], gold: usize, known: &[usize]) -> Result<usize> {
    let Some(&s) = scores.get(gold) else {
        return Err(Error::Index {
            op: "gold tail",
            index: gold,
            len: scores.len(),
        });
    };
    let skip: HashSet<usize> = known.iter().copied().filter(|&k| k != gold).collect();
    let above = scores
        .iter()
        .enumerate()
        .filter(|&(e, &v)| e != gold && !skip.contains(&e) && v.partial_cmp(&s) != Some(std::cmp::Ordering::Less))
        .count();
    Ok(1 + above)
}

/// Known-true tails per `(head, relation)`, ignoring qualifiers.
#[derive(Clone, Debug, Default)]
pub struct KnownTails {
    map: BTreeMap<(usize, usize), Vec<usize>>,
}

impl KnownTails {
    pub fn from_sets(sets: &[&[Statement]]) -> Self {
        let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for set in sets {
            for s in *set {
                map.entry((s.head, s.relation)).or_default().push(s.tail);
            }
        }
        for v in map.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        Self { map }
    }

    pub fn get(&self, head: usize, relation: usize) -> &[usize] {
        self.map.get(&(head, relation)).map_or(&[], Vec::as_slice)
    }
}

/// Aggregated ranking metrics with the labels they were measured under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub model: String,
    pub split: String,
    pub regime: String,
    pub count: usize,
    pub mr: f64,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub ranks: Vec<usize>,
}

impl RankingReport {
    /// Summarises `ranks`; every rank must be at least 1.
    pub fn from_ranks(ranks: Vec<usize>) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::invalid("cannot aggregate an empty rank list"));
        }
        if ranks.contains(&0) {
            return Err(Error::invalid("ranks start at 1"));
        }
        let n = ranks.len() as f64;
        let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Ok(Self {
            model: String::new(),
            split: String::new(),
            regime: String::new(),
            count: ranks.len(),
            mr: ranks.iter().map(|&r| r as f64).sum::<f64>() / n,
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            hits1: hits(1),
            hits3: hits(3),
            hits10: hits(10),
            ranks,
        })
    }

    pub fn with_labels(mut self, model: &str, split: &str, regime: &str) -> Self {
        self.model = model.to_string();
        self.split = split.to_string();
        self.regime = regime.to_string();
        self
    }

    pub fn metrics(&self) -> [f64; 5] {
        [self.mr, self.mrr, self.hits1, self.hits3, self.hits10]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub const METRIC_HEADERS: [&str; 5] = ["MR", "MRR", "H@1", "H@3", "H@10"];

/// Aligned plain-text table. Rows without a report print `absent`.
pub fn metrics_table(first_header: &str, rows: &[(String, Option<&RankingReport>)]) -> String {
    let width = rows
        .iter()
        .map(|(l, _)| l.chars().count())
        .chain([first_header.chars().count()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = write!(out, "{first_header:<width$}");
    for h in METRIC_HEADERS {
        let _ = write!(out, "  {h:>9}");
    }
    out.push('\n');
    for (label, report) in rows {
        let _ = write!(out, "{label:<width$}");
        match report {
            Some(r) => {
                let _ = write!(out, "  {:>9.2}", r.mr);
                for v in &r.metrics()[1..] {
                    let _ = write!(out, "  {v:>9.4}");
                }
            }
            None => {
                for _ in METRIC_HEADERS {
                    let _ = write!(out, "  {:>9}", "absent");
                }
            }
        }
        out.push('\n');
    }
    out
}
