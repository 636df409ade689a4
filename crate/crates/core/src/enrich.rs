//! Qualifier composition shared by the models.
//!
//! Two styles are provided. The attention style adds key and value
//! embeddings per pair and lets the relation embedding attend over them. The
//! DistMult style multiplies key and value embeddings elementwise, sums over
//! pairs and projects; the result is merged with the relation through a
//! learned convex weight.

use crate::diff::{sigmoid, Array, Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::kg::canonical_pairs;
use crate::layers::{Init, MultiHeadAttention};

/// Qualifier-key and qualifier-value embedding tables.
#[derive(Clone, Debug)]
pub struct QualTables {
    pub key: ParamId,
    pub value: ParamId,
}

impl QualTables {
    pub fn new(init: &mut Init, name: &str, num_keys: usize, num_values: usize, dim: usize) -> Result<Self> {
        Ok(Self {
            key: init.table(&format!("{name}.qk"), num_keys, dim)?,
            value: init.table(&format!("{name}.qv"), num_values, dim)?,
        })
    }
}

/// Rows `e_qk + e_qv`, one per pair, as an `[n, d]` matrix.
pub fn build_qual_context(g: &mut Graph, tables: &QualTables, pairs: &[(usize, usize)]) -> Result<Var> {
    if pairs.is_empty() {
        return Err(Error::invalid("qualifier context needs at least one pair"));
    }
    let keys: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let values: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let k = g.lookup(tables.key, &keys)?;
    let v = g.lookup(tables.value, &values)?;
    g.add(k, v)
}

/// Multi-head cross-attention from the relation over the qualifier context.
/// Returns `e_r` itself when there is no context.
pub fn mha_enrich(g: &mut Graph, e_r: Var, context: Option<Var>, mha: &MultiHeadAttention) -> Result<Var> {
    match context {
        None => Ok(e_r),
        Some(u) => mha.forward(g, e_r, u),
    }
}

/// Attention-style relation enrichment over an unordered qualifier set.
#[derive(Clone, Debug)]
pub struct Enricher {
    pub tables: QualTables,
    pub mha: MultiHeadAttention,
}

impl Enricher {
    pub fn new(init: &mut Init, num_keys: usize, num_values: usize, dim: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            tables: QualTables::new(init, "enrich", num_keys, num_values, dim)?,
            mha: init.attention("enrich.mha", dim, heads)?,
        })
    }

    /// `MHA(e_r, U, U)` with pairs taken in canonical order, or `e_r` when `pairs` is empty.
    pub fn enrich(&self, g: &mut Graph, e_r: Var, pairs: &[(usize, usize)]) -> Result<Var> {
        if pairs.is_empty() {
            return Ok(e_r);
        }
        let sorted = canonical_pairs(pairs);
        let u = build_qual_context(g, &self.tables, &sorted)?;
        mha_enrich(g, e_r, Some(u), &self.mha)
    }
}

/// Summed DistMult products `Σ_i e_qk^i ⊙ e_qv^i` for several qualifier sets at once.
///
/// `sets[j]` lists the pairs of row `j`; the result is `[sets.len(), d]` with
/// rows summed in the given pair order. Empty sets give zero rows.
pub fn distmult_sums(g: &mut Graph, tables: &QualTables, sets: &[&[[usize; 2]]], dim: usize) -> Result<Var> {
    let mut keys = Vec::new();
    let mut values = Vec::new();
    let mut dest = Vec::new();
    for (j, set) in sets.iter().enumerate() {
        for &[k, v] in set.iter() {
            keys.push(k);
            values.push(v);
            dest.push(j);
        }
    }
    if keys.is_empty() {
        return Ok(g.zeros(sets.len(), dim));
    }
    let k = g.lookup(tables.key, &keys)?;
    let v = g.lookup(tables.value, &values)?;
    let prod = g.mul(k, v)?;
    g.scatter_add(prod, &dest, sets.len())
}

/// `h_q = Σ_{i<n} (e_qk^i ⊙ e_qv^i) W_q` for one padded qualifier row.
pub fn distmult_qual(
    g: &mut Graph,
    padded: &[[usize; 2]],
    count: usize,
    tables: &QualTables,
    w_q: ParamId,
) -> Result<Var> {
    let dim = g.store().value(w_q).cols();
    let sum = distmult_sums(g, tables, &[&padded[..count]], dim)?;
    let w = g.param(w_q);
    g.matmul(sum, w)
}

/// Projection `W_q` and merge weight `α = σ(a)` of the relation-qualifier merge.
#[derive(Clone, Debug)]
pub struct Gamma {
    pub w_q: ParamId,
    pub alpha_raw: ParamId,
}

impl Gamma {
    /// `α` starts at exactly 0.5.
    pub fn new(init: &mut Init, dim: usize) -> Result<Self> {
        Ok(Self {
            w_q: init.matrix("gamma.wq", dim, dim)?,
            alpha_raw: init.constant("gamma.alpha", Array::scalar(0.0))?,
        })
    }

    pub fn alpha(&self, store: &ParamStore) -> f64 {
        sigmoid(store.value(self.alpha_raw).item())
    }

    /// `α h_r + (1 - α) h_q`, computed as `h_q + α (h_r - h_q)`.
    pub fn merge(&self, g: &mut Graph, h_r: Var, h_q: Var) -> Result<Var> {
        let raw = g.param(self.alpha_raw);
        let alpha = g.sigmoid(raw);
        let diff = g.sub(h_r, h_q)?;
        let scaled = g.mul(diff, alpha)?;
        g.add(h_q, scaled)
    }
}
