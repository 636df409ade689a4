//! Bellman-Ford backbone with tail, relation and qualifier-value heads that
//! all read one shared propagation state.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::hr_nbfnet::{sample_group, HrParts};
use super::mt_alertstar::weighted_total;
use super::{group_units, init_rng, KgcModel, ModelKind, TaskLosses, Unit};
use crate::config::{Config, Sizes};
use crate::diff::{Graph, Mode, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::kg::{canonical_pairs, HyperRelGraph};
use crate::layers::{Init, Mlp};

/// Outputs of the three heads for one propagation state.
#[derive(Clone, Copy, Debug)]
pub struct MtHeads {
    /// `[N, 1]` tail scores.
    pub tail: Var,
    /// `[1, |R|]` relation logits.
    pub relation: Var,
    /// `[1, |Q_V|]` qualifier-value logits, present when a target key was given.
    pub qual_value: Option<Var>,
}

pub struct MtHrNbfNet {
    store: ParamStore,
    cfg: Config,
    sizes: Sizes,
    /// Backbone; its scoring MLP is the tail head.
    pub parts: HrParts,
    pub rel_head: Mlp,
    /// Key table used only by the qualifier-value gate.
    pub gate_keys: ParamId,
    /// `W_g` of shape `[2d, d]`.
    pub w_g: ParamId,
    pub qv_head: Mlp,
    propagations: AtomicUsize,
}

impl MtHrNbfNet {
    pub fn new(sizes: Sizes, cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let mut store = ParamStore::new();
        let mut rng = init_rng(cfg);
        let mut init = Init::new(&mut store, &mut rng, ModelKind::MtHrNbfNet.prefix());
        // the backbone is drawn first so it matches a single-task model of the same seed
        let parts = HrParts::new(&mut init, sizes, cfg)?;
        let rel_head = init.mlp("head_rel", d, d, sizes.relations, cfg.dropout)?;
        let gate_keys = init.table("head_qk", sizes.qual_keys, d)?;
        let w_g = init.matrix("w_g", 2 * d, d)?;
        let qv_head = init.mlp("head_qv", d, d, sizes.qual_values.max(1), cfg.dropout)?;
        Ok(Self {
            store,
            cfg: cfg.clone(),
            sizes,
            parts,
            rel_head,
            gate_keys,
            w_g,
            qv_head,
            propagations: AtomicUsize::new(0),
        })
    }

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

    pub fn relation_logits(&self, g: &mut Graph, h: Var, head: usize) -> Result<Var> {
        let row = g.gather(h, &[head])?;
        self.rel_head.forward(g, row)
    }

    /// `MLP(σ([H[h] ∥ E_qk[key]] W_g) ⊙ H[h])`; the key is mandatory.
    pub fn qual_value_logits(&self, g: &mut Graph, h: Var, head: usize, key: Option<usize>) -> Result<Var> {
        let key = key.ok_or_else(|| Error::invalid("qualifier-value head needs a target key"))?;
        let row = g.gather(h, &[head])?;
        let e_k = g.lookup(self.gate_keys, &[key])?;
        let cat = g.concat(&[row, e_k])?;
        let w = g.param(self.w_g);
        let pre = g.matmul(cat, w)?;
        let gate = g.sigmoid(pre);
        let gated = g.mul(gate, row)?;
        self.qv_head.forward(g, gated)
    }

    /// All heads on one state. The qualifier head runs only when `key` is given.
    pub fn heads(&self, g: &mut Graph, h: Var, head: usize, query: usize, key: Option<usize>) -> Result<MtHeads> {
        let tail = self.parts.score_all(g, h, query)?;
        let relation = self.relation_logits(g, h, head)?;
        let qual_value = match key {
            Some(_) => Some(self.qual_value_logits(g, h, head, key)?),
            None => None,
        };
        Ok(MtHeads {
            tail,
            relation,
            qual_value,
        })
    }

    /// Per-task losses of one group after a single propagation.
    pub fn task_losses(
        &self,
        g: &mut Graph,
        graph: &HyperRelGraph,
        head: usize,
        relation: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<TaskLosses> {
        let sample = sample_group(graph, head, relation, self.cfg.k_max, rng)?;
        let h = self.propagate(g, graph, head, relation, &sample.q_rep)?;
        let mut out = TaskLosses::default();
        if self.cfg.lambda_tail > 0.0 {
            out.tail = Some(self.parts.tail_margin_loss(g, h, relation, &sample, self.cfg.margin)?);
        }
        if self.cfg.lambda_rel > 0.0 {
            let logits = self.relation_logits(g, h, head)?;
            out.relation = Some(g.cross_entropy(logits, relation)?);
        }
        if self.cfg.lambda_qv > 0.0 && !sample.q_rep.is_empty() {
            let pairs = canonical_pairs(&sample.q_rep);
            let (key, value) = pairs[rng.random_range(0..pairs.len())];
            let logits = self.qual_value_logits(g, h, head, Some(key))?;
            out.qual_value = Some(g.cross_entropy(logits, value)?);
        }
        Ok(out)
    }

    pub fn combine(&self, g: &mut Graph, losses: &TaskLosses) -> Result<Var> {
        weighted_total(g, losses, &self.cfg)
    }

    /// Eval-mode relation logits for `(head, relation, quals)` as the query.
    pub fn relation_scores(
        &self,
        graph: &HyperRelGraph,
        head: usize,
        relation: usize,
        quals: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.store, Mode::Eval, 0);
        let h = self.propagate(&mut g, graph, head, relation, quals)?;
        let logits = self.relation_logits(&mut g, h, head)?;
        Ok(g.value(logits).data().to_vec())
    }

    pub fn sizes(&self) -> Sizes {
        self.sizes
    }
}

impl KgcModel for MtHrNbfNet {
    fn kind(&self) -> ModelKind {
        ModelKind::MtHrNbfNet
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
        let losses = self.task_losses(g, graph, head, rel, rng)?;
        self.combine(g, &losses)
    }

    fn score_tails(
        &self,
        graph: &HyperRelGraph,
        head: usize,
        relation: usize,
        quals: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.store, Mode::Eval, 0);
        let h = self.propagate(&mut g, graph, head, relation, quals)?;
        let s = self.parts.score_all(&mut g, h, relation)?;
        Ok(g.value(s).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::kg::Statement;

    fn toy(cfg: &Config) -> (MtHrNbfNet, HyperRelGraph) {
        let sizes = Sizes {
            entities: 5,
            relations: 2,
            qual_keys: 2,
            qual_values: 3,
        };
        let stmts = vec![
            Statement::new(0, 0, 1, vec![(0, 1), (1, 2)]),
            Statement::new(0, 0, 2, vec![]),
            Statement::new(1, 1, 3, vec![(1, 0)]),
            Statement::triple(3, 0, 4),
        ];
        let graph = HyperRelGraph::build(&stmts, 5, 2, cfg.q_max).unwrap();
        (MtHrNbfNet::new(sizes, cfg).unwrap(), graph)
    }

    fn cfg() -> Config {
        Config {
            dim: 4,
            layers: 2,
            ..Config::default()
        }
    }

    #[test]
    fn zero_head_row_zeroes_gated_input() {
        let (mut m, _) = toy(&cfg());
        let qv_first = m.qv_head.first.w;
        // with a zero state the gated vector is zero, so the first layer sees only its bias
        m.store_mut().value_mut(qv_first).fill(123.0);
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let h = g.zeros(5, 4);
        let a = m.qual_value_logits(&mut g, h, 2, Some(1)).unwrap();
        let b = m.qual_value_logits(&mut g, h, 2, Some(0)).unwrap();
        assert_eq!(g.value(a), g.value(b));
        assert!(m.qual_value_logits(&mut g, h, 2, None).is_err());
    }

    #[test]
    fn relation_logits_match_per_class_loop() {
        let (m, graph) = toy(&cfg());
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let h = m.propagate(&mut g, &graph, 0, 0, &[]).unwrap();
        let logits = m.relation_logits(&mut g, h, 0).unwrap();
        let row = g.value(h).row(0).to_vec();
        let st = m.store();
        let (l1, ln, l2) = (&m.rel_head.first, &m.rel_head.norm, &m.rel_head.second);
        let hidden: Vec<f64> = (0..4)
            .map(|j| (0..4).map(|i| row[i] * st.value(l1.w).get(i, j)).sum::<f64>() + st.value(l1.b).get(0, j))
            .collect();
        let mean = hidden.iter().sum::<f64>() / 4.0;
        let var = hidden.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        let act: Vec<f64> = (0..4)
            .map(|j| {
                let n = (hidden[j] - mean) / (var + 1e-5).sqrt();
                (n * st.value(ln.gain).get(0, j) + st.value(ln.bias).get(0, j)).max(0.0)
            })
            .collect();
        for c in 0..2 {
            let want: f64 = (0..4).map(|j| act[j] * st.value(l2.w).get(j, c)).sum::<f64>() + st.value(l2.b).get(0, c);
            assert!((g.value(logits).get(0, c) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn equal_state_rows_score_equal() {
        let (m, _) = toy(&cfg());
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let h = g.constant(crate::diff::Array::filled(5, 4, 0.3));
        let heads = m.heads(&mut g, h, 0, 1, None).unwrap();
        let s = g.value(heads.tail).data();
        assert!(s.iter().all(|v| *v == s[0]));
        assert!(heads.qual_value.is_none());
    }

    #[test]
    fn one_propagation_per_step_and_weighted_total() {
        let (m, graph) = toy(&cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::new(m.store(), Mode::Train, 9);
        let before = m.propagation_count();
        let losses = m.task_losses(&mut g, &graph, 0, 0, &mut rng).unwrap();
        assert_eq!(m.propagation_count(), before + 1);
        let total = m.combine(&mut g, &losses).unwrap();
        let c = m.config();
        let want = c.lambda_tail * g.item(losses.tail.unwrap())
            + c.lambda_rel * g.item(losses.relation.unwrap())
            + c.lambda_qv * g.item(losses.qual_value.unwrap());
        assert_eq!(g.item(total), want);
    }

    #[test]
    fn empty_representative_drops_qualifier_task() {
        let (m, graph) = toy(&cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        // group (3, 0) has a single qualifier-free statement
        let losses = m.task_losses(&mut g, &graph, 3, 0, &mut rng).unwrap();
        assert!(losses.qual_value.is_none());
        let total = m.combine(&mut g, &losses).unwrap();
        let c = m.config();
        let want = c.lambda_tail * g.item(losses.tail.unwrap()) + c.lambda_rel * g.item(losses.relation.unwrap());
        assert_eq!(g.item(total), want);
    }
}
