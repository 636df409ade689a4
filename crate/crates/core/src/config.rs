//! Hyperparameters and their flat `key = value` text form.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kg::Vocab;

/// Component switches for the AlertStar ablation grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ablation {
    /// Use the bare relation embedding instead of the qualifier-enriched one.
    pub no_qual: bool,
    /// Drop the path branch, leaving the attention branch alone.
    pub no_path: bool,
    /// Freeze the fusion weight at 0.5.
    pub no_gate: bool,
}

/// Every tunable of the models and the training loop.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub dim: usize,
    pub dropout: f64,
    /// Heads of the qualifier cross-attention.
    pub heads: usize,
    pub enc_layers: usize,
    pub enc_heads: usize,
    pub ffn: usize,
    /// Propagation layers of the Bellman-Ford models.
    pub layers: usize,
    /// Edges processed per propagation chunk.
    pub chunk: usize,
    pub k_max: usize,
    pub q_max: usize,
    pub margin: f64,
    pub lambda_tail: f64,
    pub lambda_rel: f64,
    pub lambda_qv: f64,
    pub ablation: Ablation,
    pub lr: f64,
    pub epochs: usize,
    pub clip: f64,
    /// Zero selects the per-model default.
    pub batch_size: usize,
    pub seed: u64,
    /// Maximum validation queries scored per epoch; zero scores all.
    pub val_cap: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            dim: 200,
            dropout: 0.2,
            heads: 4,
            enc_layers: 3,
            enc_heads: 4,
            ffn: 800,
            layers: 3,
            chunk: 5000,
            k_max: 8,
            q_max: 8,
            margin: 1.0,
            lambda_tail: 1.0,
            lambda_rel: 0.8,
            lambda_qv: 0.8,
            ablation: Ablation::default(),
            lr: 5e-4,
            epochs: 20,
            clip: 1.0,
            batch_size: 0,
            seed: 0,
            val_cap: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value {value:?} for {key}")))
}

impl Config {
    pub const KEYS: [&'static str; 23] = [
        "dim",
        "dropout",
        "heads",
        "enc_layers",
        "enc_heads",
        "ffn",
        "layers",
        "chunk",
        "k_max",
        "q_max",
        "margin",
        "lambda_tail",
        "lambda_rel",
        "lambda_qv",
        "no_qual",
        "no_path",
        "no_gate",
        "lr",
        "epochs",
        "clip",
        "batch_size",
        "seed",
        "val_cap",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "dim" => self.dim = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "heads" => self.heads = parse(key, v)?,
            "enc_layers" => self.enc_layers = parse(key, v)?,
            "enc_heads" => self.enc_heads = parse(key, v)?,
            "ffn" => self.ffn = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "chunk" => self.chunk = parse(key, v)?,
            "k_max" => self.k_max = parse(key, v)?,
            "q_max" => self.q_max = parse(key, v)?,
            "margin" => self.margin = parse(key, v)?,
            "lambda_tail" => self.lambda_tail = parse(key, v)?,
            "lambda_rel" => self.lambda_rel = parse(key, v)?,
            "lambda_qv" => self.lambda_qv = parse(key, v)?,
            "no_qual" => self.ablation.no_qual = parse(key, v)?,
            "no_path" => self.ablation.no_path = parse(key, v)?,
            "no_gate" => self.ablation.no_gate = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "clip" => self.clip = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "val_cap" => self.val_cap = parse(key, v)?,
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "dim" => self.dim.to_string(),
            "dropout" => self.dropout.to_string(),
            "heads" => self.heads.to_string(),
            "enc_layers" => self.enc_layers.to_string(),
            "enc_heads" => self.enc_heads.to_string(),
            "ffn" => self.ffn.to_string(),
            "layers" => self.layers.to_string(),
            "chunk" => self.chunk.to_string(),
            "k_max" => self.k_max.to_string(),
            "q_max" => self.q_max.to_string(),
            "margin" => self.margin.to_string(),
            "lambda_tail" => self.lambda_tail.to_string(),
            "lambda_rel" => self.lambda_rel.to_string(),
            "lambda_qv" => self.lambda_qv.to_string(),
            "no_qual" => self.ablation.no_qual.to_string(),
            "no_path" => self.ablation.no_path.to_string(),
            "no_gate" => self.ablation.no_gate.to_string(),
            "lr" => self.lr.to_string(),
            "epochs" => self.epochs.to_string(),
            "clip" => self.clip.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "seed" => self.seed.to_string(),
            "val_cap" => self.val_cap.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Record {
                line: i + 1,
                reason: "expected key = value".to_string(),
            })?;
            self.set(k, v).map_err(|e| Error::Record {
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in Self::KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).unwrap_or_default());
        }
        out
    }

    /// Checks positivity and mutually exclusive switches.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("heads", self.heads),
            ("enc_layers", self.enc_layers),
            ("enc_heads", self.enc_heads),
            ("ffn", self.ffn),
            ("layers", self.layers),
            ("chunk", self.chunk),
            ("k_max", self.k_max),
            ("q_max", self.q_max),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.margin > 0.0 && self.lr > 0.0 && self.clip > 0.0) {
            return Err(Error::invalid("margin, lr and clip must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        if [self.lambda_tail, self.lambda_rel, self.lambda_qv].iter().any(|l| *l < 0.0) {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        if self.ablation.no_path && self.ablation.no_gate {
            return Err(Error::invalid("no_path and no_gate cannot be combined"));
        }
        Ok(())
    }
}

/// Vocabulary sizes that fix parameter shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sizes {
    pub entities: usize,
    pub relations: usize,
    pub qual_keys: usize,
    pub qual_values: usize,
}

impl Sizes {
    pub fn of(vocab: &Vocab) -> Self {
        Self {
            entities: vocab.entities.len(),
            relations: vocab.relations.len(),
            qual_keys: vocab.qual_keys.len(),
            qual_values: vocab.qual_values.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = Config {
            dim: 16,
            lr: 0.01,
            ..Config::default()
        };
        c.ablation.no_gate = true;
        let mut back = Config::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn comments_unknown_keys_and_contradictions() {
        let mut c = Config::default();
        c.apply_text("# header\n\nlayers = 2 # trailing\n").unwrap();
        assert_eq!(c.layers, 2);
        assert!(c.apply_text("depth = 3").is_err());
        assert!(c.apply_text("lr").is_err());
        c.ablation.no_path = true;
        c.ablation.no_gate = true;
        assert!(c.validate().is_err());
        assert!(Config::default().validate().is_ok());
    }
}
