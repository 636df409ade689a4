//! Checkpoint directory: `params.manifest`, `params.bin` and `meta.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{Config, Sizes};
use crate::error::{Error, Result};
use crate::models::{build_model, KgcModel, ModelKind};

const STEM: &str = "params";
const META: &str = "meta.txt";
const CFG_PREFIX: &str = "config.";

/// Everything needed to rebuild a model around the saved parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub sizes: Sizes,
    pub vocab_hash: String,
    /// Epoch the parameters come from; 0 means before training.
    pub epoch: usize,
    pub val_mrr: Option<f64>,
    pub config: Config,
}

impl CheckpointMeta {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let s = self.sizes;
        let _ = writeln!(out, "kind = {}", self.kind);
        let _ = writeln!(out, "vocab_hash = {}", self.vocab_hash);
        let _ = writeln!(out, "entities = {}", s.entities);
        let _ = writeln!(out, "relations = {}", s.relations);
        let _ = writeln!(out, "qual_keys = {}", s.qual_keys);
        let _ = writeln!(out, "qual_values = {}", s.qual_values);
        let _ = writeln!(out, "epoch = {}", self.epoch);
        let mrr = self.val_mrr.map_or_else(|| "none".to_string(), |v| v.to_string());
        let _ = writeln!(out, "val_mrr = {mrr}");
        for line in self.config.to_text().lines() {
            let _ = writeln!(out, "{CFG_PREFIX}{line}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        let mut config = Config::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("meta line {} is not key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if let Some(key) = k.strip_prefix(CFG_PREFIX) {
                config.set(key, v).map_err(|e| Error::Checkpoint(e.to_string()))?;
            } else {
                fields.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("meta is missing {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("meta field {k} is not a count")))
        };
        let mrr = get("val_mrr")?;
        Ok(Self {
            kind: get("kind")?.parse().map_err(|e: Error| Error::Checkpoint(e.to_string()))?,
            sizes: Sizes {
                entities: num("entities")?,
                relations: num("relations")?,
                qual_keys: num("qual_keys")?,
                qual_values: num("qual_values")?,
            },
            vocab_hash: get("vocab_hash")?,
            epoch: num("epoch")?,
            val_mrr: match mrr.as_str() {
                "none" => None,
                v => Some(v.parse().map_err(|_| Error::Checkpoint("bad val_mrr".into()))?),
            },
            config,
        })
    }
}

pub fn save_checkpoint(dir: &Path, model: &dyn KgcModel, meta: &CheckpointMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    model.store().save(dir, STEM)?;
    let path = dir.join(META);
    fs::write(&path, meta.to_text()).map_err(|e| Error::io(&path, e))
}

pub fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let path = dir.join(META);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    CheckpointMeta::from_text(&text)
}

/// Loads saved parameters into a model built with the checkpoint's kind, sizes and config.
pub fn load_params(dir: &Path, model: &mut dyn KgcModel) -> Result<()> {
    model.store_mut().load_into(dir, STEM)
}

pub fn load_checkpoint(dir: &Path) -> Result<(Box<dyn KgcModel>, CheckpointMeta)> {
    let meta = read_meta(dir)?;
    let mut model = build_model(meta.kind, meta.sizes, &meta.config)?;
    load_params(dir, model.as_mut())?;
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_restores_parameters() {
        let cfg = Config {
            dim: 4,
            heads: 2,
            seed: 3,
            ..Config::default()
        };
        let sizes = Sizes {
            entities: 4,
            relations: 2,
            qual_keys: 1,
            qual_values: 2,
        };
        let mut model = build_model(ModelKind::AlertStar, sizes, &cfg).unwrap();
        let id = model.store().ids().next().unwrap();
        model.store_mut().value_mut(id).fill(0.25);
        let meta = CheckpointMeta {
            kind: ModelKind::AlertStar,
            sizes,
            vocab_hash: "abc".into(),
            epoch: 2,
            val_mrr: Some(0.5),
            config: cfg,
        };
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), model.as_ref(), &meta).unwrap();
        let (back, meta2) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(meta2, meta);
        for id in model.store().ids() {
            assert_eq!(model.store().value(id), back.store().value(id));
        }
        let no_val = CheckpointMeta { val_mrr: None, ..meta };
        assert_eq!(CheckpointMeta::from_text(&no_val.to_text()).unwrap(), no_val);
        assert!(CheckpointMeta::from_text("kind = alertstar").is_err());
    }
}
