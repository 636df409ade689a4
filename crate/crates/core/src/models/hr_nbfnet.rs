//! Qualifier-conditioned Bellman-Ford propagation from a query source.
//!
//! The source row starts from the query relation plus its projected
//! qualifiers. Each layer sums `H[x] + γ_e` over incoming edges `e = (x, r, v)`,
//! where `γ_e` merges the edge relation with the edge's qualifier vector, then
//! applies `ReLU(LN(W [H ∥ a]))` with dropout and a residual to the initial
//! state. Tails are scored by an MLP over `[H[v] ∥ e_q]`.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use super::{check_entity, group_units, init_rng, KgcModel, ModelKind, Unit};
use crate::config::{Config, Sizes};
use crate::diff::{Graph, Mode, ParamId, ParamStore, Var};
use crate::enrich::{distmult_sums, Gamma, QualTables};
use crate::error::{Error, Result};
use crate::kg::{canonical_pairs, HyperRelGraph};
use crate::layers::{Init, LayerNorm, Mlp};
use crate::train::{margin_loss_var, sample_negative};

/// Parameters and forward pass shared by the Bellman-Ford models.
#[derive(Clone, Debug)]
pub struct HrParts {
    pub dim: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub chunk: usize,
    pub dropout: f64,
    /// Query relation table `[2|R|, d]` (inverse relations included).
    pub qry_rel: ParamId,
    pub qry_quals: QualTables,
    pub w_proj: ParamId,
    /// Edge relation table `[2|R|, d]`.
    pub edge_rel: ParamId,
    pub edge_quals: QualTables,
    pub gamma: Gamma,
    /// Per layer: `W [2d, d]` and its layer norm.
    pub layers: Vec<(ParamId, LayerNorm)>,
    pub score: Mlp,
}

/// Merged relation-qualifier vectors for one contiguous edge range.
pub struct EdgeChunk {
    pub start: usize,
    pub end: usize,
    pub gamma: Var,
}

impl HrParts {
    pub fn new(init: &mut Init, sizes: Sizes, cfg: &Config) -> Result<Self> {
        let d = cfg.dim;
        let r2 = 2 * sizes.relations;
        let qry_rel = init.table("qry_rel", r2, d)?;
        let qry_quals = QualTables::new(init, "qry", sizes.qual_keys, sizes.qual_values, d)?;
        let w_proj = init.matrix("w_proj", d, d)?;
        let edge_rel = init.table("edge_rel", r2, d)?;
        let edge_quals = QualTables::new(init, "edge", sizes.qual_keys, sizes.qual_values, d)?;
        let gamma = Gamma::new(init, d)?;
        let layers = (0..cfg.layers)
            .map(|t| Ok((init.matrix(&format!("layer{t}.w"), 2 * d, d)?, init.layer_norm(&format!("layer{t}.ln"), d)?)))
            .collect::<Result<Vec<_>>>()?;
        let score = init.mlp("score", 2 * d, d, 1, cfg.dropout)?;
        Ok(Self {
            dim: d,
            num_entities: sizes.entities,
            num_relations: sizes.relations,
            chunk: cfg.chunk,
            dropout: cfg.dropout,
            qry_rel,
            qry_quals,
            w_proj,
            edge_rel,
            edge_quals,
            gamma,
            layers,
            score,
        })
    }

    fn check_query(&self, head: usize, query: usize) -> Result<()> {
        check_entity(head, self.num_entities)?;
        if query >= 2 * self.num_relations {
            return Err(Error::Index {
                op: "query relation",
                index: query,
                len: 2 * self.num_relations,
            });
        }
        Ok(())
    }

    /// `[N, d]` state with only row `head` set to `e_q + (Σ e_qk ⊙ e_qv) W_proj`.
    pub fn init_state(&self, g: &mut Graph, head: usize, query: usize, quals: &[(usize, usize)]) -> Result<Var> {
        self.check_query(head, query)?;
        let e_q = g.lookup(self.qry_rel, &[query])?;
        let source = if quals.is_empty() {
            e_q
        } else {
            let pairs: Vec<[usize; 2]> = canonical_pairs(quals).into_iter().map(|(k, v)| [k, v]).collect();
            let sum = distmult_sums(g, &self.qry_quals, &[&pairs], self.dim)?;
            let w = g.param(self.w_proj);
            let proj = g.matmul(sum, w)?;
            g.add(e_q, proj)?
        };
        g.scatter_add(source, &[head], self.num_entities)
    }

    /// `γ` for every edge, computed chunk by chunk in edge order.
    pub fn edge_chunks(&self, g: &mut Graph, graph: &HyperRelGraph) -> Result<Vec<EdgeChunk>> {
        let e = graph.num_edges();
        let mut out = Vec::with_capacity(e.div_ceil(self.chunk));
        let mut start = 0;
        while start < e {
            let end = (start + self.chunk).min(e);
            let h_r = g.lookup(self.edge_rel, &graph.edge_rel[start..end])?;
            let sets: Vec<&[[usize; 2]]> = (start..end).map(|i| graph.edge_qualifiers(i)).collect();
            let sums = distmult_sums(g, &self.edge_quals, &sets, self.dim)?;
            let w = g.param(self.gamma.w_q);
            let h_q = g.matmul(sums, w)?;
            let gamma = self.gamma.merge(g, h_r, h_q)?;
            out.push(EdgeChunk { start, end, gamma });
            start = end;
        }
        Ok(out)
    }

    /// One propagation layer `t` (0-based).
    pub fn layer(
        &self,
        g: &mut Graph,
        graph: &HyperRelGraph,
        chunks: &[EdgeChunk],
        h: Var,
        h0: Var,
        t: usize,
    ) -> Result<Var> {
        let mut acc = g.zeros(self.num_entities, self.dim);
        for c in chunks {
            let src = g.gather(h, &graph.edge_head[c.start..c.end])?;
            let msg = g.add(src, c.gamma)?;
            acc = g.scatter_add_into(acc, msg, &graph.edge_tail[c.start..c.end])?;
        }
        let (w, norm) = &self.layers[t];
        let cat = g.concat(&[h, acc])?;
        let w = g.param(*w);
        let lin = g.matmul(cat, w)?;
        let normed = norm.forward(g, lin)?;
        let act = g.relu(normed);
        let dropped = g.dropout(act, self.dropout)?;
        g.add(dropped, h0)
    }

    /// All layers from the initial state; returns `H^(L)`.
    pub fn propagate(
        &self,
        g: &mut Graph,
        graph: &HyperRelGraph,
        head: usize,
        query: usize,
        quals: &[(usize, usize)],
    ) -> Result<Var> {
        if graph.num_entities != self.num_entities {
            return Err(Error::Data(format!(
                "graph has {} entities but the model was built for {}",
                graph.num_entities, self.num_entities
            )));
        }
        let h0 = self.init_state(g, head, query, quals)?;
        let chunks = self.edge_chunks(g, graph)?;
        let mut h = h0;
        for t in 0..self.layers.len() {
            h = self.layer(g, graph, &chunks, h, h0, t)?;
        }
        Ok(h)
    }

    /// `MLP([H[v] ∥ e_q])` for the listed rows, shape `[rows, 1]`.
    pub fn score_rows(&self, g: &mut Graph, h: Var, query: usize, rows: &[usize]) -> Result<Var> {
        let e_q = g.lookup(self.qry_rel, &[query])?;
        let picked = g.gather(h, rows)?;
        let tiled = g.gather(e_q, &vec![0; rows.len()])?;
        let cat = g.concat(&[picked, tiled])?;
        self.score.forward(g, cat)
    }

    /// Scores of every entity, shape `[N, 1]`.
    pub fn score_all(&self, g: &mut Graph, h: Var, query: usize) -> Result<Var> {
        let rows: Vec<usize> = (0..self.num_entities).collect();
        self.score_rows(g, h, query, &rows)
    }

    /// Mean margin loss of positives against paired negatives.
    pub fn tail_margin_loss(&self, g: &mut Graph, h: Var, query: usize, sample: &GroupSample, margin: f64) -> Result<Var> {
        let k = sample.tails.len();
        let rows: Vec<usize> = sample.tails.iter().chain(&sample.negatives).copied().collect();
        let scores = self.score_rows(g, h, query, &rows)?;
        let pos_idx: Vec<usize> = (0..k).collect();
        let neg_idx: Vec<usize> = (k..2 * k).collect();
        let pos = g.gather(scores, &pos_idx)?;
        let neg = g.gather(scores, &neg_idx)?;
        let l = margin_loss_var(g, pos, neg, margin)?;
        Ok(g.mean(l))
    }
}

/// Positives, negatives and representative qualifiers drawn for one `(h, r)` group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSample {
    pub tails: Vec<usize>,
    pub negatives: Vec<usize>,
    /// Qualifiers of the group's first statement.
    pub q_rep: Vec<(usize, usize)>,
}

/// Draws up to `k_max` positives without replacement and one uniform negative each.
pub(crate) fn sample_group(
    graph: &HyperRelGraph,
    head: usize,
    relation: usize,
    k_max: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GroupSample> {
    let idx = graph
        .groups
        .get(&(head, relation))
        .filter(|v| !v.is_empty())
        .ok_or_else(|| Error::invalid(format!("no statements for group ({head}, {relation})")))?;
    let chosen: Vec<usize> = if idx.len() > k_max {
        sample(rng, idx.len(), k_max).into_iter().map(|i| idx[i]).collect()
    } else {
        idx.clone()
    };
    let tails: Vec<usize> = chosen.iter().map(|&i| graph.statements[i].tail).collect();
    let negatives = tails
        .iter()
        .map(|_| sample_negative(rng, graph.num_entities))
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupSample {
        tails,
        negatives,
        q_rep: graph.statements[idx[0]].qualifiers.clone(),
    })
}

pub struct HrNbfNet {
    store: ParamStore,
    cfg: Config,
    pub parts: HrParts,
    propagations: AtomicUsize,
}

impl HrNbfNet {
    pub fn new(sizes: Sizes, cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = init_rng(cfg);
        let mut init = Init::new(&mut store, &mut rng, ModelKind::HrNbfNet.prefix());
        let parts = HrParts::new(&mut init, sizes, cfg)?;
        Ok(Self {
            store,
            cfg: cfg.clone(),
            parts,
            propagations: AtomicUsize::new(0),
        })
    }

    /// Full propagation; counted by [`HrNbfNet::propagation_count`].
    pub fn propagate(
        &self,
        g: &mut Graph,
        graph: &HyperRelGraph,
        head: usize,
        query: usize,
        quals: &[(usize, usize)],
    ) -> Result<Var> {
        self.propagations.fetch_add(1, Ordering::Relaxed);
        self.parts.propagate(g, graph, head, query, quals)
    }

    pub fn propagation_count(&self) -> usize {
        self.propagations.load(Ordering::Relaxed)
    }

    /// Eval-mode scores of all entities for the query `(head, query, quals)`.
    pub fn infer(&self, graph: &HyperRelGraph, head: usize, query: usize, quals: &[(usize, usize)]) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.store, Mode::Eval, 0);
        let h = self.propagate(&mut g, graph, head, query, quals)?;
        let s = self.parts.score_all(&mut g, h, query)?;
        Ok(g.value(s).data().to_vec())
    }
}

impl KgcModel for HrNbfNet {
    fn kind(&self) -> ModelKind {
        ModelKind::HrNbfNet
    }

    fn config(&self) -> &Config {
        &self.cfg
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn units(&self, graph: &HyperRelGraph) -> Vec<Unit> {
        group_units(graph)
    }

    fn unit_loss(&self, g: &mut Graph, graph: &HyperRelGraph, unit: Unit, rng: &mut ChaCha8Rng) -> Result<Var> {
        let Unit::Group(head, rel) = unit else {
            return Err(Error::invalid("propagation model expects group units"));
        };
        let s = sample_group(graph, head, rel, self.cfg.k_max, rng)?;
        let h = self.propagate(g, graph, head, rel, &s.q_rep)?;
        self.parts.tail_margin_loss(g, h, rel, &s, self.cfg.margin)
    }

    fn score_tails(
        &self,
        graph: &HyperRelGraph,
        head: usize,
        relation: usize,
        quals: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        self.infer(graph, head, relation, quals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Array;
    use crate::kg::Statement;

    fn setup(n: usize, stmts: &[Statement], cfg: Config) -> (HrNbfNet, HyperRelGraph) {
        let sizes = Sizes {
            entities: n,
            relations: 2,
            qual_keys: 2,
            qual_values: 3,
        };
        let graph = HyperRelGraph::build(stmts, n, 2, cfg.q_max).unwrap();
        (HrNbfNet::new(sizes, &cfg).unwrap(), graph)
    }

    fn cfg(d: usize) -> Config {
        Config {
            dim: d,
            layers: 2,
            ..Config::default()
        }
    }

    #[test]
    fn init_state_examples() {
        let (mut m, graph) = setup(3, &[], cfg(2));
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let h0 = m.parts.init_state(&mut g, 1, 2, &[]).unwrap();
        assert!(g.value(h0).row(0).iter().all(|v| *v == 0.0));
        assert!(g.value(h0).row(2).iter().all(|v| *v == 0.0));
        assert_eq!(g.value(h0).row(1), m.store().value(m.parts.qry_rel).row(2));
        drop(g);

        let parts = m.parts.clone();
        let st = m.store_mut();
        *st.value_mut(parts.w_proj) = Array::identity(2);
        st.value_mut(parts.qry_quals.key).row_mut(1).copy_from_slice(&[2.0, 0.0]);
        st.value_mut(parts.qry_quals.value).row_mut(0).copy_from_slice(&[1.0, 1.0]);
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let h0 = m.parts.init_state(&mut g, 1, 0, &[(1, 0)]).unwrap();
        let e_q = m.store().value(m.parts.qry_rel).row(0);
        assert_eq!(g.value(h0).row(1), &[e_q[0] + 2.0, e_q[1]]);
        let _ = graph;
    }

    #[test]
    fn chunk_size_does_not_change_states() {
        let stmts: Vec<Statement> = (0..10)
            .map(|i| Statement::new(i % 6, i % 2, (i * 5 + 1) % 6, vec![(i % 2, i % 3)]))
            .filter(|s| s.head != s.tail)
            .collect();
        let run = |chunk| {
            let c = Config { chunk, ..cfg(4) };
            let (m, graph) = setup(6, &stmts, c);
            m.infer(&graph, 0, 1, &[(1, 2)]).unwrap()
        };
        let a = run(1);
        assert_eq!(a, run(5000));
        assert_eq!(a, run(3));
    }

    #[test]
    fn empty_graph_has_no_messages() {
        let (m, graph) = setup(3, &[], cfg(4));
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let h = m.parts.propagate(&mut g, &graph, 0, 0, &[]).unwrap();
        // rows 1 and 2 are unreachable and receive no messages, so they agree
        assert_eq!(g.value(h).row(1), g.value(h).row(2));
    }

    #[test]
    fn batch_scores_match_per_row() {
        let stmts = vec![Statement::triple(0, 0, 1), Statement::triple(1, 1, 2)];
        let (m, graph) = setup(4, &stmts, cfg(4));
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let h = m.parts.propagate(&mut g, &graph, 0, 0, &[]).unwrap();
        let all = m.parts.score_all(&mut g, h, 0).unwrap();
        for v in 0..4 {
            let one = m.parts.score_rows(&mut g, h, 0, &[v]).unwrap();
            assert_eq!(g.value(one).item(), g.value(all).data()[v]);
        }
        // entities 3 has no edges and no source role; its score equals any other such row
        assert_eq!(m.infer(&graph, 0, 0, &[]).unwrap(), m.infer(&graph, 0, 0, &[]).unwrap());
    }

    #[test]
    fn groups_sample_at_most_k_max() {
        let stmts: Vec<Statement> = (1..12).map(|t| Statement::new(0, 0, t, vec![(0, t % 3)])).collect();
        let graph = HyperRelGraph::build(&stmts, 12, 1, 8).unwrap();
        let mut rng = init_rng(&Config::default());
        let s = sample_group(&graph, 0, 0, 8, &mut rng).unwrap();
        assert_eq!(s.tails.len(), 8);
        assert_eq!(s.negatives.len(), 8);
        assert_eq!(s.q_rep, vec![(0, 1)]);
        assert!(sample_group(&graph, 3, 0, 8, &mut rng).is_err());
    }
}
