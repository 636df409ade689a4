//! Complex queries (1p, 2p, 2i, 2u) built from a residual path-composition
//! operator, with instance mining, joint training and per-type evaluation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_entity, dot, dot_rows, expect_statement, init_rng, statement_units, KgcModel, ModelKind, Unit};
use crate::config::{Config, Sizes};
use crate::diff::{Graph, Mode, ParamId, ParamStore, Var};
use crate::enrich::Enricher;
use crate::error::{Error, Result};
use crate::kg::{HyperRelGraph, Statement, Vocab};
use crate::layers::{Init, Mlp};
use crate::train::{average_losses, filtered_rank, margin_loss_var, metrics_table, sample_negative, RankingReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueryKind {
    OneP,
    TwoP,
    TwoI,
    TwoU,
}

impl QueryKind {
    pub const ALL: [QueryKind; 4] = [QueryKind::OneP, QueryKind::TwoP, QueryKind::TwoI, QueryKind::TwoU];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::OneP => "1p",
            QueryKind::TwoP => "2p",
            QueryKind::TwoI => "2i",
            QueryKind::TwoU => "2u",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown query kind {s:?}")))
    }
}

/// One query instance with its answer set.
///
/// 1p uses `(head, relation, quals)`. 2p follows with `relation2` from the
/// first hop's answer. 2i and 2u add a second anchor `(head2, relation2)`
/// without qualifiers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub kind: QueryKind,
    pub head: usize,
    pub relation: usize,
    pub quals: Vec<(usize, usize)>,
    pub head2: Option<usize>,
    pub relation2: Option<usize>,
    /// Sorted, deduplicated answers.
    pub golds: Vec<usize>,
    /// The answer the instance was mined from; always in `golds`.
    pub target: usize,
}

impl Query {
    pub fn one_hop(head: usize, relation: usize, quals: Vec<(usize, usize)>) -> Self {
        Self {
            kind: QueryKind::OneP,
            head,
            relation,
            quals,
            head2: None,
            relation2: None,
            golds: Vec::new(),
            target: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            QueryKind::OneP => self.head2.is_none() && self.relation2.is_none(),
            QueryKind::TwoP => self.head2.is_none() && self.relation2.is_some(),
            QueryKind::TwoI | QueryKind::TwoU => {
                self.relation2.is_some() && self.head2.is_some_and(|h2| h2 != self.head)
            }
        };
        if !ok {
            return Err(Error::invalid(format!("malformed {} query", self.kind)));
        }
        if !self.golds.is_empty() && self.golds.binary_search(&self.target).is_err() {
            return Err(Error::invalid("query target is not among its answers"));
        }
        Ok(())
    }
}

pub struct HrNbfNetCq {
    store: ParamStore,
    cfg: Config,
    sizes: Sizes,
    pub entity: ParamId,
    pub relation: ParamId,
    pub enrich: Enricher,
    /// `FFN_φ`: `2d → d → d`.
    pub phi: Mlp,
    /// Intersection projection `[2d, d]`.
    pub w_i: ParamId,
}

impl HrNbfNetCq {
    pub fn new(sizes: Sizes, cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let mut store = ParamStore::new();
        let mut rng = init_rng(cfg);
        let mut init = Init::new(&mut store, &mut rng, ModelKind::HrNbfNetCq.prefix());
        let entity = init.table("ent", sizes.entities, d)?;
        let relation = init.table("rel", sizes.relations, d)?;
        let enrich = Enricher::new(&mut init, sizes.qual_keys, sizes.qual_values, d, cfg.heads)?;
        let phi = init.mlp("phi", 2 * d, d, d, cfg.dropout)?;
        let w_i = init.matrix("w_i", 2 * d, d)?;
        Ok(Self {
            store,
            cfg: cfg.clone(),
            sizes,
            entity,
            relation,
            enrich,
            phi,
            w_i,
        })
    }

    pub fn sizes(&self) -> Sizes {
        self.sizes
    }

    /// `x0 + FFN_φ([x ∥ ẽ_r])`.
    pub fn compose(&self, g: &mut Graph, x: Var, relation: usize, quals: &[(usize, usize)], x0: Var) -> Result<Var> {
        let e_r = g.lookup(self.relation, &[relation])?;
        let enriched = self.enrich.enrich(g, e_r, quals)?;
        let cat = g.concat(&[x, enriched])?;
        let out = self.phi.forward(g, cat)?;
        g.add(x0, out)
    }

    fn anchor(&self, g: &mut Graph, head: usize, relation: usize, quals: &[(usize, usize)]) -> Result<Var> {
        check_entity(head, self.sizes.entities)?;
        let e_h = g.lookup(self.entity, &[head])?;
        self.compose(g, e_h, relation, quals, e_h)
    }

    /// Query vector `[1, d]` for any of the four templates.
    pub fn build_query(&self, g: &mut Graph, q: &Query) -> Result<Var> {
        q.validate()?;
        let first = self.anchor(g, q.head, q.relation, &q.quals)?;
        match q.kind {
            QueryKind::OneP => Ok(first),
            QueryKind::TwoP => {
                let e_h = g.lookup(self.entity, &[q.head])?;
                let r2 = q.relation2.expect("validated");
                self.compose(g, first, r2, &[], e_h)
            }
            QueryKind::TwoI | QueryKind::TwoU => {
                let second = self.anchor(g, q.head2.expect("validated"), q.relation2.expect("validated"), &[])?;
                if q.kind == QueryKind::TwoI {
                    let cat = g.concat(&[first, second])?;
                    let w = g.param(self.w_i);
                    g.matmul(cat, w)
                } else {
                    let sum = g.add(first, second)?;
                    Ok(g.scale(sum, 0.5))
                }
            }
        }
    }

    /// Eval-mode `q Eᵀ` over every entity.
    pub fn score_query(&self, q: &Query) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.store, Mode::Eval, 0);
        let v = self.build_query(&mut g, q)?;
        Ok(dot_rows(g.value(v).data(), self.store.value(self.entity)))
    }

    fn pair_loss(&self, g: &mut Graph, q: &Query, pos: usize, neg: usize) -> Result<Var> {
        let v = self.build_query(g, q)?;
        let e_p = g.lookup(self.entity, &[pos])?;
        let e_n = g.lookup(self.entity, &[neg])?;
        let sp = dot(g, v, e_p)?;
        let sn = dot(g, v, e_n)?;
        margin_loss_var(g, sp, sn, self.cfg.margin)
    }

    /// Per-type losses for one statement: 1p always, 2p when the tail has an
    /// outgoing edge, 2i when another statement points at the tail. All
    /// types share one negative.
    pub fn type_losses(
        &self,
        g: &mut Graph,
        graph: &HyperRelGraph,
        s: &Statement,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<(QueryKind, Var)>> {
        let neg = sample_negative(rng, self.sizes.entities)?;
        let mut out = Vec::with_capacity(3);
        let one = Query::one_hop(s.head, s.relation, s.qualifiers.clone());
        out.push((QueryKind::OneP, self.pair_loss(g, &one, s.tail, neg)?));
        let chains = &graph.out_index[s.tail];
        if !chains.is_empty() {
            let (r2, t2) = chains[rng.random_range(0..chains.len())];
            let q = Query {
                kind: QueryKind::TwoP,
                relation2: Some(r2),
                ..one.clone()
            };
            out.push((QueryKind::TwoP, self.pair_loss(g, &q, t2, neg)?));
        }
        let anchors: Vec<(usize, usize)> = graph.in_index[s.tail].iter().copied().filter(|&(h2, _)| h2 != s.head).collect();
        if !anchors.is_empty() {
            let (h2, r2) = anchors[rng.random_range(0..anchors.len())];
            let q = Query {
                kind: QueryKind::TwoI,
                head2: Some(h2),
                relation2: Some(r2),
                ..one
            };
            out.push((QueryKind::TwoI, self.pair_loss(g, &q, s.tail, neg)?));
        }
        Ok(out)
    }
}

impl KgcModel for HrNbfNetCq {
    fn kind(&self) -> ModelKind {
        ModelKind::HrNbfNetCq
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
        let losses: Vec<Var> = self.type_losses(g, graph, s, rng)?.into_iter().map(|(_, l)| l).collect();
        average_losses(g, &losses)
    }

    fn score_tails(
        &self,
        _graph: &HyperRelGraph,
        head: usize,
        relation: usize,
        quals: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        self.score_query(&Query::one_hop(head, relation, quals.to_vec()))
    }
}

fn answers(graph: &HyperRelGraph, head: usize, relation: usize) -> BTreeSet<usize> {
    graph.tails_of(head, relation).into_iter().collect()
}

/// Mines query instances from `statements` using adjacency of `full`.
///
/// Every statement yields a 1p query; 2p, 2i and 2u are added when the
/// structure allows. Answers come from `full` and ignore qualifiers. When a
/// type has more than `cap` instances (`cap > 0`), a seeded sample of `cap`
/// is kept in mining order.
pub fn mine_queries(full: &HyperRelGraph, statements: &[Statement], cap: usize, seed: u64) -> Result<Vec<Query>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_kind: [Vec<Query>; 4] = Default::default();
    for s in statements {
        check_entity(s.head, full.num_entities)?;
        check_entity(s.tail, full.num_entities)?;
        let first = answers(full, s.head, s.relation);
        let one = Query {
            golds: first.iter().copied().collect(),
            target: s.tail,
            ..Query::one_hop(s.head, s.relation, s.qualifiers.clone())
        };
        if one.golds.binary_search(&s.tail).is_err() {
            return Err(Error::Data("mining statements must belong to the full graph".into()));
        }
        let chains = &full.out_index[s.tail];
        if !chains.is_empty() {
            let (r2, t2) = chains[rng.random_range(0..chains.len())];
            let golds: BTreeSet<usize> = first.iter().flat_map(|&x| answers(full, x, r2)).collect();
            by_kind[QueryKind::TwoP.index()].push(Query {
                kind: QueryKind::TwoP,
                relation2: Some(r2),
                golds: golds.into_iter().collect(),
                target: t2,
                ..one.clone()
            });
        }
        let anchors: Vec<(usize, usize)> = full.in_index[s.tail].iter().copied().filter(|&(h2, _)| h2 != s.head).collect();
        if !anchors.is_empty() {
            let (h2, r2) = anchors[rng.random_range(0..anchors.len())];
            let second = answers(full, h2, r2);
            for (kind, golds) in [
                (QueryKind::TwoI, first.intersection(&second).copied().collect::<Vec<_>>()),
                (QueryKind::TwoU, first.union(&second).copied().collect()),
            ] {
                by_kind[kind.index()].push(Query {
                    kind,
                    head2: Some(h2),
                    relation2: Some(r2),
                    golds,
                    target: s.tail,
                    ..one.clone()
                });
            }
        }
        by_kind[QueryKind::OneP.index()].push(one);
    }
    let mut out = Vec::new();
    for mut qs in by_kind {
        if cap > 0 && qs.len() > cap {
            let mut keep = sample(&mut rng, qs.len(), cap).into_vec();
            keep.sort_unstable();
            qs = keep.into_iter().map(|i| qs[i].clone()).collect();
        }
        out.extend(qs);
    }
    Ok(out)
}

/// Which answers of a query are ranked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GoldMode {
    /// Every answer, each filtered against the others.
    All,
    /// Only the mined target, filtered against the other answers.
    Target,
}

/// Per-type reports in 1p, 2p, 2i, 2u order; `None` marks an absent type.
#[derive(Clone, Debug, PartialEq)]
pub struct CqReport {
    pub rows: [Option<RankingReport>; 4],
}

impl CqReport {
    pub fn get(&self, kind: QueryKind) -> Option<&RankingReport> {
        self.rows[kind.index()].as_ref()
    }

    pub fn table(&self) -> String {
        let rows: Vec<(String, Option<&RankingReport>)> = QueryKind::ALL
            .iter()
            .map(|k| (k.to_string(), self.get(*k)))
            .collect();
        metrics_table("type", &rows)
    }

    pub fn to_json(&self) -> Result<String> {
        let map: serde_json::Map<String, serde_json::Value> = QueryKind::ALL
            .iter()
            .map(|k| Ok((k.to_string(), serde_json::to_value(self.get(*k))?)))
            .collect::<Result<_>>()?;
        Ok(serde_json::to_string_pretty(&map)?)
    }
}

/// Filtered ranks of one query's answers.
pub fn query_ranks(model: &HrNbfNetCq, q: &Query, mode: GoldMode) -> Result<Vec<usize>> {
    let scores = model.score_query(q)?;
    match mode {
        GoldMode::All => q.golds.iter().map(|&t| filtered_rank(&scores, t, &q.golds)).collect(),
        GoldMode::Target => Ok(vec![filtered_rank(&scores, q.target, &q.golds)?]),
    }
}

pub fn evaluate_queries(model: &HrNbfNetCq, queries: &[Query], mode: GoldMode) -> Result<CqReport> {
    let ranks: Vec<(QueryKind, Vec<usize>)> = queries
        .par_iter()
        .map(|q| Ok((q.kind, query_ranks(model, q, mode)?)))
        .collect::<Result<_>>()?;
    let mut per: [Vec<usize>; 4] = Default::default();
    for (k, r) in ranks {
        per[k.index()].extend(r);
    }
    let mut rows: [Option<RankingReport>; 4] = Default::default();
    for (i, r) in per.into_iter().enumerate() {
        if !r.is_empty() {
            rows[i] = Some(RankingReport::from_ranks(r)?.with_labels(ModelKind::HrNbfNetCq.label(), QueryKind::ALL[i].as_str(), ""));
        }
    }
    Ok(CqReport { rows })
}

fn check_name(name: &str) -> Result<&str> {
    if name.is_empty() || name.contains(['\t', '=', '|', '\n']) || name == "-" {
        return Err(Error::invalid(format!("name {name:?} cannot be written to a query file")));
    }
    Ok(name)
}

/// One line per query: `kind h1 r1 Q1 h2 r2 answers…`, tab-separated.
///
/// `Q1` is `key=value|key=value` or `-`; `h2` is `-` for 2p and both are `-`
/// for 1p. Answers list the target first, then the rest in id order.
pub fn write_queries(queries: &[Query], vocab: &Vocab) -> Result<String> {
    let mut out = String::new();
    for q in queries {
        q.validate()?;
        let mut cols = vec![q.kind.to_string()];
        cols.push(check_name(vocab.entities.name(q.head))?.to_string());
        cols.push(check_name(vocab.relations.name(q.relation))?.to_string());
        cols.push(if q.quals.is_empty() {
            "-".to_string()
        } else {
            q.quals
                .iter()
                .map(|&(k, v)| Ok(format!("{}={}", check_name(vocab.qual_keys.name(k))?, check_name(vocab.qual_values.name(v))?)))
                .collect::<Result<Vec<_>>>()?
                .join("|")
        });
        cols.push(q.head2.map_or(Ok("-".to_string()), |h| check_name(vocab.entities.name(h)).map(str::to_string))?);
        cols.push(q.relation2.map_or(Ok("-".to_string()), |r| check_name(vocab.relations.name(r)).map(str::to_string))?);
        cols.push(vocab.entities.name(q.target).to_string());
        for &t in q.golds.iter().filter(|&&t| t != q.target) {
            cols.push(vocab.entities.name(t).to_string());
        }
        out.push_str(&cols.join("\t"));
        out.push('\n');
    }
    Ok(out)
}

pub fn read_queries(text: &str, vocab: &Vocab) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Record { line: i + 1, reason };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 7 {
            return Err(bad(format!("expected at least 7 columns, got {}", cols.len())));
        }
        let lookup = |table: &crate::kg::Interner, name: &str, what: &str| {
            table.get(name).ok_or_else(|| bad(format!("unknown {what} {name:?}")))
        };
        let opt = |table: &crate::kg::Interner, name: &str, what: &str| -> Result<Option<usize>> {
            if name == "-" {
                Ok(None)
            } else {
                Ok(Some(lookup(table, name, what)?))
            }
        };
        let quals = if cols[3] == "-" {
            Vec::new()
        } else {
            cols[3]
                .split('|')
                .map(|kv| {
                    let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("bad qualifier {kv:?}")))?;
                    Ok((lookup(&vocab.qual_keys, k, "qualifier key")?, lookup(&vocab.qual_values, v, "qualifier value")?))
                })
                .collect::<Result<Vec<_>>>()?
        };
        let target = lookup(&vocab.entities, cols[6], "entity")?;
        let mut golds = vec![target];
        for c in &cols[7..] {
            golds.push(lookup(&vocab.entities, c, "entity")?);
        }
        golds.sort_unstable();
        golds.dedup();
        let q = Query {
            kind: cols[0].parse().map_err(|e: Error| bad(e.to_string()))?,
            head: lookup(&vocab.entities, cols[1], "entity")?,
            relation: lookup(&vocab.relations, cols[2], "relation")?,
            quals,
            head2: opt(&vocab.entities, cols[4], "entity")?,
            relation2: opt(&vocab.relations, cols[5], "relation")?,
            golds,
            target,
        };
        q.validate().map_err(|e| bad(e.to_string()))?;
        out.push(q);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Array;

    fn model(d: usize) -> HrNbfNetCq {
        let sizes = Sizes {
            entities: 6,
            relations: 3,
            qual_keys: 2,
            qual_values: 3,
        };
        let cfg = Config {
            dim: d,
            heads: 2,
            ..Config::default()
        };
        HrNbfNetCq::new(sizes, &cfg).unwrap()
    }

    fn zero_phi_output(m: &mut HrNbfNetCq) {
        let (w, b) = (m.phi.second.w, m.phi.second.b);
        m.store.value_mut(w).fill(0.0);
        m.store.value_mut(b).fill(0.0);
    }

    #[test]
    fn zeroed_ffn_is_residual_identity() {
        let mut m = model(4);
        zero_phi_output(&mut m);
        let mut g = Graph::new(&m.store, Mode::Eval, 0);
        let e2 = m.store.value(m.entity).row(2).to_vec();
        let q1 = m.build_query(&mut g, &Query::one_hop(2, 1, vec![(0, 1)])).unwrap();
        assert_eq!(g.value(q1).data(), e2.as_slice());
        let q2 = Query {
            kind: QueryKind::TwoP,
            relation2: Some(0),
            ..Query::one_hop(2, 1, vec![])
        };
        let v = m.build_query(&mut g, &q2).unwrap();
        assert_eq!(g.value(v).data(), e2.as_slice());
    }

    #[test]
    fn compose_matches_scalar_oracle() {
        let m = model(4);
        let st = &m.store;
        let mut g = Graph::new(st, Mode::Eval, 0);
        let x = g.constant(Array::row_vector(vec![0.3, -0.2, 0.5, 0.1]));
        let x0 = g.constant(Array::row_vector(vec![1.0, 2.0, -1.0, 0.5]));
        let out = m.compose(&mut g, x, 1, &[], x0).unwrap();
        let input: Vec<f64> = [0.3, -0.2, 0.5, 0.1].into_iter().chain(st.value(m.relation).row(1).iter().copied()).collect();
        let (l1, ln, l2) = (&m.phi.first, &m.phi.norm, &m.phi.second);
        let hidden: Vec<f64> = (0..4)
            .map(|j| (0..8).map(|i| input[i] * st.value(l1.w).get(i, j)).sum::<f64>() + st.value(l1.b).get(0, j))
            .collect();
        let mean = hidden.iter().sum::<f64>() / 4.0;
        let var = hidden.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / 4.0;
        let act: Vec<f64> = (0..4)
            .map(|j| ((hidden[j] - mean) / (var + 1e-5).sqrt() * st.value(ln.gain).get(0, j) + st.value(ln.bias).get(0, j)).max(0.0))
            .collect();
        let base = [1.0, 2.0, -1.0, 0.5];
        for (c, b) in base.into_iter().enumerate() {
            let want = b + (0..4).map(|j| act[j] * st.value(l2.w).get(j, c)).sum::<f64>() + st.value(l2.b).get(0, c);
            assert!((g.value(out).get(0, c) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn union_and_intersection_shapes() {
        let m = model(4);
        let u = Query {
            kind: QueryKind::TwoU,
            head2: Some(3),
            relation2: Some(1),
            ..Query::one_hop(3, 1, vec![])
        };
        assert!(m.score_query(&u).is_err(), "identical anchors are malformed");
        let su = m.score_query(&Query { head2: Some(4), ..u.clone() }).unwrap();
        let a = m.score_query(&Query::one_hop(3, 1, vec![])).unwrap();
        let b = m.score_query(&Query::one_hop(4, 1, vec![])).unwrap();
        for e in 0..6 {
            assert!((su[e] - 0.5 * (a[e] + b[e])).abs() < 1e-12);
        }
        let i1 = Query {
            kind: QueryKind::TwoI,
            head2: Some(4),
            relation2: Some(2),
            ..Query::one_hop(3, 1, vec![])
        };
        let i2 = Query {
            kind: QueryKind::TwoI,
            head: 4,
            relation: 2,
            head2: Some(3),
            relation2: Some(1),
            ..Query::one_hop(4, 2, vec![])
        };
        assert_ne!(m.score_query(&i1).unwrap(), m.score_query(&i2).unwrap());
    }

    #[test]
    fn star_graph_has_no_chains() {
        let stmts: Vec<Statement> = (1..4).map(|t| Statement::triple(0, 0, t)).collect();
        let g = HyperRelGraph::build(&stmts, 4, 1, 8).unwrap();
        let qs = mine_queries(&g, &stmts, 0, 1).unwrap();
        assert!(qs.iter().all(|q| q.kind == QueryKind::OneP));
        assert_eq!(qs.len(), 3);
        assert!(qs.iter().all(|q| q.golds == vec![1, 2, 3]));
    }

    #[test]
    fn shared_target_lands_in_intersection() {
        let stmts = vec![Statement::triple(0, 0, 2), Statement::triple(1, 1, 2), Statement::triple(1, 1, 3)];
        let g = HyperRelGraph::build(&stmts, 4, 2, 8).unwrap();
        let qs = mine_queries(&g, &stmts[..1], 0, 1).unwrap();
        let i = qs.iter().find(|q| q.kind == QueryKind::TwoI).unwrap();
        assert_eq!(i.golds, vec![2]);
        let u = qs.iter().find(|q| q.kind == QueryKind::TwoU).unwrap();
        assert_eq!(u.golds, vec![2, 3]);
    }

    #[test]
    fn caps_limit_each_type() {
        let stmts: Vec<Statement> = (0..10).map(|i| Statement::triple(i, 0, (i + 1) % 10)).collect();
        let g = HyperRelGraph::build(&stmts, 10, 1, 8).unwrap();
        let qs = mine_queries(&g, &stmts, 4, 2).unwrap();
        for k in QueryKind::ALL {
            assert!(qs.iter().filter(|q| q.kind == k).count() <= 4);
        }
        assert_eq!(qs.iter().filter(|q| q.kind == QueryKind::OneP).count(), 4);
    }

    #[test]
    fn loss_is_margin_only_when_no_structure() {
        let m = model(4);
        let stmts = vec![Statement::triple(0, 0, 1)];
        let graph = HyperRelGraph::build(&stmts, 6, 3, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::new(&m.store, Mode::Eval, 0);
        let types = m.type_losses(&mut g, &graph, &stmts[0], &mut rng).unwrap();
        assert_eq!(types.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let total = m.unit_loss(&mut g, &graph, Unit::Statement(0), &mut rng).unwrap();
        assert_eq!(g.item(total), g.item(types[0].1));
    }

    #[test]
    fn query_file_round_trip() {
        let mut vocab = Vocab::default();
        for e in ["a", "b", "c", "d"] {
            vocab.entities.intern(e);
        }
        vocab.relations.intern("scan");
        vocab.relations.intern("exploit");
        vocab.qual_keys.intern("port");
        vocab.qual_values.intern("22");
        let qs = vec![
            Query {
                golds: vec![1, 2],
                target: 2,
                ..Query::one_hop(0, 0, vec![(0, 0)])
            },
            Query {
                kind: QueryKind::TwoP,
                relation2: Some(1),
                golds: vec![3],
                target: 3,
                ..Query::one_hop(0, 0, vec![])
            },
            Query {
                kind: QueryKind::TwoU,
                head2: Some(1),
                relation2: Some(1),
                golds: vec![0, 2, 3],
                target: 2,
                ..Query::one_hop(0, 0, vec![])
            },
        ];
        let text = write_queries(&qs, &vocab).unwrap();
        assert_eq!(read_queries(&text, &vocab).unwrap(), qs);
        assert!(read_queries("1p\ta\tscan\t-\t-\t-\tz", &vocab).is_err());
    }
}
