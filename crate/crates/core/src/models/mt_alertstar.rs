//! Transformer encoder over `[e_h, e_r, e_t, qk1, qv1, ...]` with three task heads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_entity, expect_statement, init_rng, statement_units, KgcModel, ModelKind, Unit};
use crate::config::{Config, Sizes};
use crate::diff::{Graph, Mode, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::kg::{canonical_pairs, HyperRelGraph, Statement};
use crate::layers::{EncoderLayer, Init, Mlp};

/// Which slot of the sequence is hidden from the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    /// Tail row zeroed.
    Tail,
    /// Relation row zeroed.
    Relation,
    /// Pair `j` (in canonical order) removed.
    QualValue(usize),
}

/// Unweighted per-task losses; inactive tasks are `None`.
#[derive(Clone, Copy, Debug, Default)]
pub struct TaskLosses {
    pub tail: Option<Var>,
    pub relation: Option<Var>,
    pub qual_value: Option<Var>,
}

/// λ-weighted sum over the active tasks, in tail, relation, qualifier order.
pub(crate) fn weighted_total(g: &mut Graph, losses: &TaskLosses, cfg: &Config) -> Result<Var> {
    let weighted = [
        (losses.tail, cfg.lambda_tail),
        (losses.relation, cfg.lambda_rel),
        (losses.qual_value, cfg.lambda_qv),
    ];
    let mut total: Option<Var> = None;
    for (l, w) in weighted {
        if let Some(l) = l {
            let term = g.scale(l, w);
            total = Some(match total {
                None => term,
                Some(t) => g.add(t, term)?,
            });
        }
    }
    Ok(total.unwrap_or_else(|| g.scalar(0.0)))
}

pub struct MtAlertStar {
    store: ParamStore,
    cfg: Config,
    sizes: Sizes,
    pub entity: ParamId,
    pub relation: ParamId,
    pub qual_key: ParamId,
    pub qual_value: ParamId,
    pub encoder: Vec<EncoderLayer>,
    pub tail_head: Mlp,
    pub rel_head: Mlp,
    pub qv_head: Mlp,
}

impl MtAlertStar {
    pub fn new(sizes: Sizes, cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let mut store = ParamStore::new();
        let mut rng = init_rng(cfg);
        let mut init = Init::new(&mut store, &mut rng, ModelKind::MtAlertStar.prefix());
        let entity = init.table("ent", sizes.entities, d)?;
        let relation = init.table("rel", sizes.relations, d)?;
        let qual_key = init.table("qk", sizes.qual_keys, d)?;
        let qual_value = init.table("qv", sizes.qual_values, d)?;
        let encoder = (0..cfg.enc_layers)
            .map(|i| init.encoder_layer(&format!("enc{i}"), d, cfg.enc_heads, cfg.ffn, cfg.dropout))
            .collect::<Result<Vec<_>>>()?;
        let tail_head = init.mlp("head_tail", d, d, sizes.entities, cfg.dropout)?;
        let rel_head = init.mlp("head_rel", d, d, sizes.relations, cfg.dropout)?;
        let qv_head = init.mlp("head_qv", d, d, sizes.qual_values.max(1), cfg.dropout)?;
        Ok(Self {
            store,
            cfg: cfg.clone(),
            sizes,
            entity,
            relation,
            qual_key,
            qual_value,
            encoder,
            tail_head,
            rel_head,
            qv_head,
        })
    }

    /// Token rows `[3 + 2n, d]` with the task's target hidden.
    pub fn build_sequence(&self, g: &mut Graph, s: &Statement, task: Task) -> Result<Var> {
        let d = self.cfg.dim;
        let mut pairs = canonical_pairs(&s.qualifiers);
        if let Task::QualValue(j) = task {
            if j >= pairs.len() {
                return Err(Error::invalid(format!(
                    "qualifier-value task needs pair {j} but the statement has {}",
                    pairs.len()
                )));
            }
            pairs.remove(j);
        }
        let mut rows = Vec::with_capacity(3 + 2 * pairs.len());
        rows.push(g.lookup(self.entity, &[s.head])?);
        rows.push(match task {
            Task::Relation => g.zeros(1, d),
            _ => g.lookup(self.relation, &[s.relation])?,
        });
        rows.push(match task {
            Task::Tail => g.zeros(1, d),
            _ => g.lookup(self.entity, &[s.tail])?,
        });
        for (k, v) in pairs {
            rows.push(g.lookup(self.qual_key, &[k])?);
            rows.push(g.lookup(self.qual_value, &[v])?);
        }
        g.concat_rows(&rows)
    }

    /// Encoder output at the relation position, `[1, d]`.
    pub fn encode(&self, g: &mut Graph, seq: Var) -> Result<Var> {
        if g.shape(seq)[0] < 3 {
            return Err(Error::invalid("token sequence shorter than 3 rows"));
        }
        let mut x = seq;
        for layer in &self.encoder {
            x = layer.forward(g, x)?;
        }
        g.gather(x, &[1])
    }

    pub fn task_logits(&self, g: &mut Graph, s: &Statement, task: Task) -> Result<Var> {
        let seq = self.build_sequence(g, s, task)?;
        let ctx = self.encode(g, seq)?;
        match task {
            Task::Tail => self.tail_head.forward(g, ctx),
            Task::Relation => self.rel_head.forward(g, ctx),
            Task::QualValue(_) => self.qv_head.forward(g, ctx),
        }
    }

    /// Unweighted cross-entropy of one task against its gold id.
    pub fn task_loss(&self, g: &mut Graph, s: &Statement, task: Task) -> Result<Var> {
        let target = match task {
            Task::Tail => s.tail,
            Task::Relation => s.relation,
            Task::QualValue(j) => canonical_pairs(&s.qualifiers)
                .get(j)
                .map(|p| p.1)
                .ok_or_else(|| Error::invalid("qualifier index out of range"))?,
        };
        let logits = self.task_logits(g, s, task)?;
        g.cross_entropy(logits, target)
    }

    /// Losses of the tasks with positive weight. The qualifier-value task
    /// runs only when `qual_pair` is given and the statement has qualifiers.
    pub fn task_losses(&self, g: &mut Graph, s: &Statement, qual_pair: Option<usize>) -> Result<TaskLosses> {
        let mut out = TaskLosses::default();
        if self.cfg.lambda_tail > 0.0 {
            out.tail = Some(self.task_loss(g, s, Task::Tail)?);
        }
        if self.cfg.lambda_rel > 0.0 {
            out.relation = Some(self.task_loss(g, s, Task::Relation)?);
        }
        if let Some(j) = qual_pair.filter(|_| self.cfg.lambda_qv > 0.0 && !s.qualifiers.is_empty()) {
            out.qual_value = Some(self.task_loss(g, s, Task::QualValue(j))?);
        }
        Ok(out)
    }

    /// `λ_t L_t + λ_r L_r + λ_qv L_qv` over the active tasks.
    pub fn combine(&self, g: &mut Graph, losses: &TaskLosses) -> Result<Var> {
        weighted_total(g, losses, &self.cfg)
    }

    /// Relation-head logits for `(head, ?, tail, quals)` in eval mode.
    pub fn relation_scores(&self, head: usize, tail: usize, quals: &[(usize, usize)]) -> Result<Vec<f64>> {
        let s = Statement::new(head, 0, tail, quals.to_vec());
        let mut g = Graph::new(&self.store, Mode::Eval, 0);
        let logits = self.task_logits(&mut g, &s, Task::Relation)?;
        Ok(g.value(logits).data().to_vec())
    }
}

impl KgcModel for MtAlertStar {
    fn kind(&self) -> ModelKind {
        ModelKind::MtAlertStar
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
        statement_units(graph)
    }

    fn unit_loss(&self, g: &mut Graph, graph: &HyperRelGraph, unit: Unit, rng: &mut ChaCha8Rng) -> Result<Var> {
        let s = &graph.statements[expect_statement(unit)?];
        let pair = (self.cfg.lambda_qv > 0.0 && !s.qualifiers.is_empty())
            .then(|| rng.random_range(0..s.qualifiers.len()));
        let losses = self.task_losses(g, s, pair)?;
        self.combine(g, &losses)
    }

    fn score_tails(
        &self,
        _graph: &HyperRelGraph,
        head: usize,
        relation: usize,
        quals: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        check_entity(head, self.sizes.entities)?;
        // the tail row is masked, so any placeholder id works
        let s = Statement::new(head, relation, 0, quals.to_vec());
        let mut g = Graph::new(&self.store, Mode::Eval, 0);
        let logits = self.task_logits(&mut g, &s, Task::Tail)?;
        Ok(g.value(logits).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Array;

    fn model(layers: usize, heads: usize) -> MtAlertStar {
        let cfg = Config {
            dim: 4,
            enc_layers: layers,
            enc_heads: heads,
            ffn: 6,
            ..Config::default()
        };
        let sizes = Sizes {
            entities: 4,
            relations: 3,
            qual_keys: 3,
            qual_values: 5,
        };
        MtAlertStar::new(sizes, &cfg).unwrap()
    }

    #[test]
    fn sequence_shapes_and_masks() {
        let m = model(1, 1);
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let s2 = Statement::new(0, 1, 2, vec![(0, 1), (2, 3)]);
        let seq = m.build_sequence(&mut g, &s2, Task::Tail).unwrap();
        assert_eq!(g.shape(seq), [7, 4]);
        assert!(g.value(seq).row(2).iter().all(|v| *v == 0.0));
        let s1 = Statement::new(0, 1, 2, vec![(0, 1)]);
        let seq = m.build_sequence(&mut g, &s1, Task::QualValue(0)).unwrap();
        assert_eq!(g.shape(seq), [3, 4]);
        let s0 = Statement::triple(0, 1, 2);
        let seq = m.build_sequence(&mut g, &s0, Task::Relation).unwrap();
        assert_eq!(g.shape(seq), [3, 4]);
        assert!(g.value(seq).row(1).iter().all(|v| *v == 0.0));
        assert!(m.build_sequence(&mut g, &s0, Task::QualValue(0)).is_err());
    }

    /// Scalar post-norm encoder layer with one head and unit layer-norm affine terms.
    fn oracle_layer(m: &MtAlertStar, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let st = m.store();
        let l = &m.encoder[0];
        let d = x[0].len();
        let mv = |v: &[f64], w: ParamId| -> Vec<f64> {
            let w = st.value(w);
            (0..w.cols()).map(|j| (0..w.rows()).map(|k| v[k] * w.get(k, j)).sum()).collect()
        };
        let add_b = |mut v: Vec<f64>, b: ParamId| {
            for (a, c) in v.iter_mut().zip(st.value(b).data()) {
                *a += c;
            }
            v
        };
        let ln = |v: &[f64]| -> Vec<f64> {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            v.iter().map(|a| (a - mean) / (var + 1e-5).sqrt()).collect()
        };
        let q: Vec<Vec<f64>> = x.iter().map(|r| mv(r, l.attn.wq)).collect();
        let k: Vec<Vec<f64>> = x.iter().map(|r| mv(r, l.attn.wk)).collect();
        let v: Vec<Vec<f64>> = x.iter().map(|r| mv(r, l.attn.wv)).collect();
        x.iter()
            .enumerate()
            .map(|(i, xi)| {
                let logits: Vec<f64> = k
                    .iter()
                    .map(|kj| q[i].iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
                    .collect();
                let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|a| (a - mx).exp()).sum();
                let mut ctx = vec![0.0; d];
                for (j, lg) in logits.iter().enumerate() {
                    for c in 0..d {
                        ctx[c] += (lg - mx).exp() / z * v[j][c];
                    }
                }
                let att = mv(&ctx, l.attn.wo);
                let h1 = ln(&xi.iter().zip(&att).map(|(a, b)| a + b).collect::<Vec<_>>());
                let f = add_b(mv(&h1, l.ff1.w), l.ff1.b).into_iter().map(|a| a.max(0.0)).collect::<Vec<_>>();
                let f = add_b(mv(&f, l.ff2.w), l.ff2.b);
                ln(&h1.iter().zip(&f).map(|(a, b)| a + b).collect::<Vec<_>>())
            })
            .collect()
    }

    #[test]
    fn single_layer_encoder_matches_scalar_oracle() {
        let m = model(1, 1);
        let s = Statement::new(1, 2, 3, vec![(1, 4), (0, 2)]);
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let seq = m.build_sequence(&mut g, &s, Task::Tail).unwrap();
        let rows: Vec<Vec<f64>> = (0..g.shape(seq)[0]).map(|r| g.value(seq).row(r).to_vec()).collect();
        let ctx = m.encode(&mut g, seq).unwrap();
        let want = &oracle_layer(&m, &rows)[1];
        for (a, b) in g.value(ctx).data().iter().zip(want) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn pair_order_and_repeat_invariance() {
        let m = model(2, 2);
        let g0 = HyperRelGraph::build(&[], 4, 3, 8).unwrap();
        let a = m.score_tails(&g0, 1, 0, &[(0, 1), (2, 4)]).unwrap();
        let b = m.score_tails(&g0, 1, 0, &[(2, 4), (0, 1)]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, m.score_tails(&g0, 1, 0, &[(0, 1), (2, 4)]).unwrap());
    }

    #[test]
    fn uniform_tail_logits_give_log_n() {
        let mut m = model(1, 1);
        let l2 = m.tail_head.second.clone();
        *m.store_mut().value_mut(l2.w) = Array::zeros(4, 4);
        *m.store_mut().value_mut(l2.b) = Array::zeros(1, 4);
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let l = m.task_loss(&mut g, &Statement::triple(0, 1, 2), Task::Tail).unwrap();
        assert!((g.item(l) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn joint_loss_is_weighted_sum_of_tasks() {
        let m = model(1, 2);
        let s = Statement::new(0, 2, 3, vec![(1, 1), (2, 0)]);
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let parts = m.task_losses(&mut g, &s, Some(1)).unwrap();
        let total = m.combine(&mut g, &parts).unwrap();
        let lt = m.task_loss(&mut g, &s, Task::Tail).unwrap();
        let lr = m.task_loss(&mut g, &s, Task::Relation).unwrap();
        let lq = m.task_loss(&mut g, &s, Task::QualValue(1)).unwrap();
        let c = m.config();
        let want = c.lambda_tail * g.item(lt) + c.lambda_rel * g.item(lr) + c.lambda_qv * g.item(lq);
        assert_eq!(g.item(total), want);
    }

    #[test]
    fn masked_tail_content_does_not_leak() {
        let m = model(2, 2);
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let s = Statement::new(0, 2, 3, vec![(1, 1)]);
        let a = m.task_logits(&mut g, &s, Task::Tail).unwrap();
        let other = Statement { tail: 1, ..s.clone() };
        let b = m.task_logits(&mut g, &other, Task::Tail).unwrap();
        assert_eq!(g.value(a), g.value(b));
    }

    #[test]
    fn out_of_range_gold_is_rejected() {
        let m = model(1, 1);
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        assert!(m.task_loss(&mut g, &Statement::triple(0, 7, 2), Task::Relation).is_err());
    }
}
