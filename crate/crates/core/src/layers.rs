//! Reusable building blocks assembled from the differentiable primitives.

use rand_chacha::ChaCha8Rng;

use crate::diff::{normal_init, uniform_init, Array, Graph, ParamId, ParamStore, Var, LN_EPS};
use crate::error::{Error, Result};

/// Registers parameters under a common name prefix with a shared RNG.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a> Init<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng, prefix: &str) -> Self {
        Self {
            store,
            rng,
            prefix: prefix.to_string(),
        }
    }

    fn full(&self, name: &str) -> String {
        format!("{}{}", self.prefix, name)
    }

    /// Embedding table with `N(0, 1/d)` rows. At least one row is allocated.
    pub fn table(&mut self, name: &str, rows: usize, dim: usize) -> Result<ParamId> {
        let std = 1.0 / (dim as f64).sqrt();
        let value = normal_init(rows.max(1), dim, std, self.rng);
        self.store.add(self.full(name), value)
    }

    /// Dense matrix `[fan_in, fan_out]` drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn matrix(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<ParamId> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let value = uniform_init(fan_in, fan_out, bound, self.rng);
        self.store.add(self.full(name), value)
    }

    pub fn constant(&mut self, name: &str, value: Array) -> Result<ParamId> {
        self.store.add(self.full(name), value)
    }

    pub fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
        let w = self.matrix(&format!("{name}.w"), fan_in, fan_out)?;
        let b = self.constant(&format!("{name}.b"), Array::zeros(1, fan_out))?;
        Ok(Linear { w, b })
    }

    pub fn layer_norm(&mut self, name: &str, dim: usize) -> Result<LayerNorm> {
        let gain = self.constant(&format!("{name}.gain"), Array::filled(1, dim, 1.0))?;
        let bias = self.constant(&format!("{name}.bias"), Array::zeros(1, dim))?;
        Ok(LayerNorm { gain, bias })
    }

    pub fn mlp(&mut self, name: &str, fan_in: usize, hidden: usize, out: usize, dropout: f64) -> Result<Mlp> {
        Ok(Mlp {
            first: self.linear(&format!("{name}.l1"), fan_in, hidden)?,
            norm: self.layer_norm(&format!("{name}.ln"), hidden)?,
            second: self.linear(&format!("{name}.l2"), hidden, out)?,
            dropout,
        })
    }

    pub fn attention(&mut self, name: &str, dim: usize, heads: usize) -> Result<MultiHeadAttention> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::invalid(format!(
                "model dimension {dim} is not divisible by {heads} attention heads"
            )));
        }
        Ok(MultiHeadAttention {
            wq: self.matrix(&format!("{name}.wq"), dim, dim)?,
            wk: self.matrix(&format!("{name}.wk"), dim, dim)?,
            wv: self.matrix(&format!("{name}.wv"), dim, dim)?,
            wo: self.matrix(&format!("{name}.wo"), dim, dim)?,
            heads,
        })
    }

    pub fn encoder_layer(
        &mut self,
        name: &str,
        dim: usize,
        heads: usize,
        ffn: usize,
        dropout: f64,
    ) -> Result<EncoderLayer> {
        Ok(EncoderLayer {
            attn: self.attention(&format!("{name}.attn"), dim, heads)?,
            norm1: self.layer_norm(&format!("{name}.ln1"), dim)?,
            ff1: self.linear(&format!("{name}.ff1"), dim, ffn)?,
            ff2: self.linear(&format!("{name}.ff2"), ffn, dim)?,
            norm2: self.layer_norm(&format!("{name}.ln2"), dim)?,
            dropout,
        })
    }
}

/// Affine map `x W + b` over row vectors.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w)?;
        g.add(y, b)
    }
}

/// Layer normalisation with a learned per-feature gain and bias.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let n = g.layer_norm(x, LN_EPS);
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        let y = g.mul(n, gain)?;
        g.add(y, bias)
    }
}

/// `Linear -> LN -> ReLU -> Dropout -> Linear`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub first: Linear,
    pub norm: LayerNorm,
    pub second: Linear,
    pub dropout: f64,
}

impl Mlp {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.first.forward(g, x)?;
        let h = self.norm.forward(g, h)?;
        let h = g.relu(h);
        let h = g.dropout(h, self.dropout)?;
        self.second.forward(g, h)
    }
}

/// Scaled dot-product attention with `heads` heads and no positional terms.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub heads: usize,
}

impl MultiHeadAttention {
    /// Attends from `queries` `[m, d]` over `keys_values` `[n, d]`, returning `[m, d]`.
    pub fn forward(&self, g: &mut Graph, queries: Var, keys_values: Var) -> Result<Var> {
        let d = g.shape(queries)[1];
        let dh = d / self.heads;
        let (wq, wk, wv, wo) = (g.param(self.wq), g.param(self.wk), g.param(self.wv), g.param(self.wo));
        let q = g.matmul(queries, wq)?;
        let k = g.matmul(keys_values, wk)?;
        let v = g.matmul(keys_values, wv)?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = g.slice_cols(q, lo, hi)?;
            let kh = g.slice_cols(k, lo, hi)?;
            let vh = g.slice_cols(v, lo, hi)?;
            let kt = g.transpose(kh);
            let logits = g.matmul(qh, kt)?;
            let logits = g.scale(logits, scale);
            let weights = g.softmax(logits);
            outs.push(g.matmul(weights, vh)?);
        }
        let joined = if outs.len() == 1 { outs[0] } else { g.concat(&outs)? };
        g.matmul(joined, wo)
    }
}

/// Post-norm transformer encoder layer: `LN(x + MHA(x))`, then `LN(x + FFN(x))`.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm2: LayerNorm,
    pub dropout: f64,
}

impl EncoderLayer {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let a = self.attn.forward(g, x, x)?;
        let a = g.dropout(a, self.dropout)?;
        let x = g.add(x, a)?;
        let x = self.norm1.forward(g, x)?;
        let f = self.ff1.forward(g, x)?;
        let f = g.relu(f);
        let f = g.dropout(f, self.dropout)?;
        let f = self.ff2.forward(g, f)?;
        let f = g.dropout(f, self.dropout)?;
        let x = g.add(x, f)?;
        self.norm2.forward(g, x)
    }
}
