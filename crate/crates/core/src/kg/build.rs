use std::collections::BTreeMap;

use super::{canonical_pairs, Statement};
use crate::error::{Error, Result};

/// Sentinel id stored in unused qualifier slots.
pub const PAD: usize = usize::MAX;

/// Forward and inverse edges with padded qualifiers and adjacency indices.
///
/// Edge `i < T` is statement `i`; edge `i + T` is its inverse with relation
/// `r + |R|` and the same qualifiers. Qualifier slots are stored sorted by
/// `(key, value)` and padded with [`PAD`] up to `q_max`. The out/in/group
/// indices cover forward statements only.
#[derive(Clone, Debug)]
pub struct HyperRelGraph {
    pub num_entities: usize,
    pub num_relations: usize,
    pub q_max: usize,
    pub statements: Vec<Statement>,
    pub edge_head: Vec<usize>,
    pub edge_rel: Vec<usize>,
    pub edge_tail: Vec<usize>,
    /// `[2T * q_max]` slots of `[key, value]`.
    pub qual_pad: Vec<[usize; 2]>,
    pub qual_count: Vec<usize>,
    /// head -> `(relation, tail)` per statement.
    pub out_index: Vec<Vec<(usize, usize)>>,
    /// tail -> `(head, relation)` per statement.
    pub in_index: Vec<Vec<(usize, usize)>>,
    /// `(head, relation)` -> statement indices.
    pub groups: BTreeMap<(usize, usize), Vec<usize>>,
    pub warnings: Vec<String>,
}

impl HyperRelGraph {
    pub fn build(
        statements: &[Statement],
        num_entities: usize,
        num_relations: usize,
        q_max: usize,
    ) -> Result<Self> {
        let t = statements.len();
        let mut g = HyperRelGraph {
            num_entities,
            num_relations,
            q_max,
            statements: Vec::with_capacity(t),
            edge_head: Vec::with_capacity(2 * t),
            edge_rel: Vec::with_capacity(2 * t),
            edge_tail: Vec::with_capacity(2 * t),
            qual_pad: vec![[PAD, PAD]; 2 * t * q_max],
            qual_count: vec![0; 2 * t],
            out_index: vec![Vec::new(); num_entities],
            in_index: vec![Vec::new(); num_entities],
            groups: BTreeMap::new(),
            warnings: Vec::new(),
        };
        for (i, s) in statements.iter().enumerate() {
            for (what, id, len) in [
                ("head", s.head, num_entities),
                ("tail", s.tail, num_entities),
                ("relation", s.relation, num_relations),
            ] {
                if id >= len {
                    return Err(Error::Data(format!("statement {i}: {what} id {id} outside vocabulary of {len}")));
                }
            }
            let mut s = s.clone();
            if s.qualifiers.len() > q_max {
                g.warnings.push(format!(
                    "statement {i}: {} qualifier pairs truncated to {q_max}",
                    s.qualifiers.len()
                ));
                s.qualifiers.truncate(q_max);
            }
            let sorted = canonical_pairs(&s.qualifiers);
            for e in [i, i + t] {
                g.qual_count[e] = sorted.len();
                for (k, &(qk, qv)) in sorted.iter().enumerate() {
                    g.qual_pad[e * q_max + k] = [qk, qv];
                }
            }
            g.out_index[s.head].push((s.relation, s.tail));
            g.in_index[s.tail].push((s.head, s.relation));
            g.groups.entry((s.head, s.relation)).or_default().push(i);
            g.statements.push(s);
        }
        for s in &g.statements {
            g.edge_head.push(s.head);
            g.edge_rel.push(s.relation);
            g.edge_tail.push(s.tail);
        }
        for s in &g.statements {
            g.edge_head.push(s.tail);
            g.edge_rel.push(s.relation + num_relations);
            g.edge_tail.push(s.head);
        }
        Ok(g)
    }

    pub fn num_statements(&self) -> usize {
        self.statements.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_head.len()
    }

    pub fn inverse_edge(&self, e: usize) -> usize {
        let t = self.num_statements();
        if e < t {
            e + t
        } else {
            e - t
        }
    }

    /// Valid (non-padding) qualifier slots of edge `e`, in canonical order.
    pub fn edge_qualifiers(&self, e: usize) -> &[[usize; 2]] {
        let start = e * self.q_max;
        &self.qual_pad[start..start + self.qual_count[e]]
    }

    /// Tails recorded for `(head, relation)`, in statement order.
    pub fn tails_of(&self, head: usize, relation: usize) -> Vec<usize> {
        self.groups
            .get(&(head, relation))
            .map(|idx| idx.iter().map(|&i| self.statements[i].tail).collect())
            .unwrap_or_default()
    }
}
