//! Gated fusion of a qualifier-attention branch and a path-composition branch,
//! scored by dot product against entity embeddings.

use rand_chacha::ChaCha8Rng;

use super::{check_entity, dot, dot_rows, expect_statement, init_rng, statement_units, KgcModel, ModelKind, Unit};
use crate::config::{Config, Sizes};
use crate::diff::{sigmoid, Array, Graph, Mode, ParamId, ParamStore, Var};
use crate::enrich::Enricher;
use crate::error::Result;
use crate::kg::HyperRelGraph;
use crate::layers::{Init, LayerNorm, Mlp};
use crate::train::{margin_loss_var, sample_negative};

pub struct AlertStar {
    store: ParamStore,
    cfg: Config,
    sizes: Sizes,
    pub entity: ParamId,
    pub relation: ParamId,
    pub enrich: Enricher,
    pub attn_norm: LayerNorm,
    pub path: Mlp,
    pub path_norm: LayerNorm,
    /// Raw gate `g`; the fusion weight is `σ(g)`.
    pub gate: ParamId,
}

impl AlertStar {
    pub fn new(sizes: Sizes, cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let mut store = ParamStore::new();
        let mut rng = init_rng(cfg);
        let mut init = Init::new(&mut store, &mut rng, ModelKind::AlertStar.prefix());
        let entity = init.table("ent", sizes.entities, d)?;
        let relation = init.table("rel", sizes.relations, d)?;
        let enrich = Enricher::new(&mut init, sizes.qual_keys, sizes.qual_values, d, cfg.heads)?;
        let attn_norm = init.layer_norm("attn_ln", d)?;
        let path = init.mlp("path", 2 * d, d, d, cfg.dropout)?;
        let path_norm = init.layer_norm("path_ln", d)?;
        let gate = init.constant("gate", Array::scalar(0.5))?;
        Ok(Self {
            store,
            cfg: cfg.clone(),
            sizes,
            entity,
            relation,
            enrich,
            attn_norm,
            path,
            path_norm,
            gate,
        })
    }

    /// Fused query vector `z` of shape `[1, d]`.
    pub fn forward(&self, g: &mut Graph, head: usize, relation: usize, quals: &[(usize, usize)]) -> Result<Var> {
        let e_h = g.lookup(self.entity, &[head])?;
        let e_r = g.lookup(self.relation, &[relation])?;
        let ab = self.cfg.ablation;
        let enriched = if ab.no_qual { e_r } else { self.enrich.enrich(g, e_r, quals)? };
        let sum = g.add(e_h, enriched)?;
        let attn = self.attn_norm.forward(g, sum)?;
        if ab.no_path {
            return Ok(attn);
        }
        let cat = g.concat(&[e_h, attn])?;
        let composed = self.path.forward(g, cat)?;
        let residual = g.add(e_h, composed)?;
        let path = self.path_norm.forward(g, residual)?;
        let alpha = if ab.no_gate {
            g.scalar(0.5)
        } else {
            let raw = g.param(self.gate);
            g.sigmoid(raw)
        };
        let neg = g.scale(alpha, -1.0);
        let beta = g.add_scalar(neg, 1.0);
        let a = g.mul(attn, alpha)?;
        let p = g.mul(path, beta)?;
        g.add(a, p)
    }

    /// Training-mode score `Dropout(z)ᵀ e_t`; dropout is a no-op in eval graphs.
    pub fn score_one(&self, g: &mut Graph, z: Var, tail: usize) -> Result<Var> {
        let zd = g.dropout(z, self.cfg.dropout)?;
        let e_t = g.lookup(self.entity, &[tail])?;
        dot(g, zd, e_t)
    }

    /// `z Eᵀ` over all entities for an already computed `z`.
    pub fn score_all(&self, z: &[f64]) -> Vec<f64> {
        dot_rows(z, self.store.value(self.entity))
    }

    pub fn sizes(&self) -> Sizes {
        self.sizes
    }
}

impl KgcModel for AlertStar {
    fn kind(&self) -> ModelKind {
        ModelKind::AlertStar
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
        let neg = sample_negative(rng, self.sizes.entities)?;
        let z = self.forward(g, s.head, s.relation, &s.qualifiers)?;
        let zd = g.dropout(z, self.cfg.dropout)?;
        let e_t = g.lookup(self.entity, &[s.tail])?;
        let e_n = g.lookup(self.entity, &[neg])?;
        let pos = dot(g, zd, e_t)?;
        let negs = dot(g, zd, e_n)?;
        margin_loss_var(g, pos, negs, self.cfg.margin)
    }

    fn score_tails(
        &self,
        _graph: &HyperRelGraph,
        head: usize,
        relation: usize,
        quals: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        check_entity(head, self.sizes.entities)?;
        let mut g = Graph::new(&self.store, Mode::Eval, 0);
        let z = self.forward(&mut g, head, relation, quals)?;
        Ok(self.score_all(g.value(z).data()))
    }

    fn gate(&self) -> Option<f64> {
        let ab = self.cfg.ablation;
        Some(if ab.no_path {
            1.0
        } else if ab.no_gate {
            0.5
        } else {
            sigmoid(self.store.value(self.gate).item())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (AlertStar, Config) {
        let cfg = Config {
            dim: 4,
            heads: 2,
            ..Config::default()
        };
        let sizes = Sizes {
            entities: 5,
            relations: 2,
            qual_keys: 3,
            qual_values: 3,
        };
        (AlertStar::new(sizes, &cfg).unwrap(), cfg)
    }

    #[test]
    fn gate_starts_at_sigmoid_half() {
        let (m, _) = small();
        let expected = 1.0 / (1.0 + (-0.5f64).exp());
        assert!((m.gate().unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.6225).abs() < 1e-4);
    }

    #[test]
    fn fused_vector_is_convex_mix_of_branches() {
        let (m, _) = small();
        let store = m.store();
        let mut g = Graph::new(store, Mode::Eval, 0);
        // recompute the two branches by hand from the same primitives
        let e_h = g.lookup(m.entity, &[1]).unwrap();
        let e_r = g.lookup(m.relation, &[0]).unwrap();
        let sum = g.add(e_h, e_r).unwrap();
        let attn = m.attn_norm.forward(&mut g, sum).unwrap();
        let cat = g.concat(&[e_h, attn]).unwrap();
        let c = m.path.forward(&mut g, cat).unwrap();
        let r = g.add(e_h, c).unwrap();
        let path = m.path_norm.forward(&mut g, r).unwrap();
        let z = m.forward(&mut g, 1, 0, &[]).unwrap();
        let a = m.gate().unwrap();
        for k in 0..4 {
            let want = a * g.value(attn).data()[k] + (1.0 - a) * g.value(path).data()[k];
            assert!((g.value(z).data()[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_gate_selects_attention_branch() {
        let (mut m, _) = small();
        let gate = m.gate;
        *m.store_mut().value_mut(gate) = Array::scalar(800.0);
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let z = m.forward(&mut g, 1, 0, &[(0, 1)]).unwrap();
        let e_h = g.lookup(m.entity, &[1]).unwrap();
        let e_r = g.lookup(m.relation, &[0]).unwrap();
        let er = m.enrich.enrich(&mut g, e_r, &[(0, 1)]).unwrap();
        let s = g.add(e_h, er).unwrap();
        let attn = m.attn_norm.forward(&mut g, s).unwrap();
        assert_eq!(g.value(z), g.value(attn));
    }

    #[test]
    fn all_entity_scores_match_per_entity_loop() {
        let (m, _) = small();
        let all = m.score_tails(&HyperRelGraph::build(&[], 5, 2, 8).unwrap(), 2, 1, &[(1, 2)]).unwrap();
        let mut g = Graph::new(m.store(), Mode::Eval, 0);
        let z = m.forward(&mut g, 2, 1, &[(1, 2)]).unwrap();
        for (t, s) in all.iter().enumerate() {
            let v = m.score_one(&mut g, z, t).unwrap();
            assert_eq!(g.item(v), *s);
        }
        let zv = g.value(z).data().to_vec();
        let doubled: Vec<f64> = zv.iter().map(|x| 2.0 * x).collect();
        for (a, b) in m.score_all(&doubled).iter().zip(&all) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn self_aligned_score_is_squared_norm() {
        let (m, _) = small();
        let e = m.store().value(m.entity).row(3).to_vec();
        let s = m.score_all(&e)[3];
        let n2: f64 = e.iter().map(|x| x * x).sum();
        assert!((s - n2).abs() < 1e-15);
    }

    #[test]
    fn ablation_switches() {
        let sizes = Sizes {
            entities: 5,
            relations: 2,
            qual_keys: 3,
            qual_values: 3,
        };
        let base = Config {
            dim: 4,
            heads: 2,
            ..Config::default()
        };
        let mut nq = base.clone();
        nq.ablation.no_qual = true;
        let m = AlertStar::new(sizes, &nq).unwrap();
        let full = AlertStar::new(sizes, &base).unwrap();
        let g0 = HyperRelGraph::build(&[], 5, 2, 8).unwrap();
        let quals = [(0, 0), (1, 2), (2, 1)];
        assert_eq!(
            m.score_tails(&g0, 1, 0, &quals).unwrap(),
            full.score_tails(&g0, 1, 0, &[]).unwrap()
        );

        let mut ng = base.clone();
        ng.ablation.no_gate = true;
        assert_eq!(AlertStar::new(sizes, &ng).unwrap().gate(), Some(0.5));

        let mut np = base.clone();
        np.ablation.no_path = true;
        let m = AlertStar::new(sizes, &np).unwrap();
        assert_eq!(m.gate(), Some(1.0));

        let mut both = base;
        both.ablation.no_path = true;
        both.ablation.no_gate = true;
        assert!(AlertStar::new(sizes, &both).is_err());
    }
}
