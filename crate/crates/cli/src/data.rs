//! On-disk layouts of the `ingest` and `split` outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use hralert_core::kg::{read_statements, write_statements, HyperRelGraph, SplitMode, Splits, Statement, Vocab};
use hralert_core::train::KnownTails;

const VOCAB: &str = "vocab.txt";

pub fn regime_label(p: f64) -> String {
    format!("Q{}", (p * 100.0).round())
}

/// `statements.tsv` plus `vocab.txt`.
pub struct IngestDir(PathBuf);

impl IngestDir {
    pub fn new(dir: &Path) -> Self {
        Self(dir.to_path_buf())
    }

    pub fn write(&self, stmts: &[Statement], vocab: &Vocab) -> Result<()> {
        vocab.write(&self.0.join(VOCAB))?;
        write_statements(&self.0.join("statements.tsv"), stmts, vocab)?;
        Ok(())
    }

    pub fn read(&self) -> Result<(Vec<Statement>, Vocab)> {
        let vocab = Vocab::read(&self.0.join(VOCAB))?;
        let stmts = read_statements(&self.0.join("statements.tsv"), &vocab)?;
        Ok((stmts, vocab))
    }
}

/// `train.tsv`, `valid.tsv`, `test.tsv`, the shared `vocab.txt` and `split.txt`.
pub struct SplitDir(PathBuf);

pub struct LoadedSplit {
    pub vocab: Vocab,
    pub splits: Splits,
    pub mode: SplitMode,
    pub regime: f64,
}

impl SplitDir {
    pub fn new(dir: &Path) -> Self {
        Self(dir.to_path_buf())
    }

    pub fn write(&self, parts: &Splits, vocab: &Vocab, mode: SplitMode, regime: f64) -> Result<()> {
        vocab.write(&self.0.join(VOCAB))?;
        write_statements(&self.0.join("train.tsv"), &parts.train, vocab)?;
        write_statements(&self.0.join("valid.tsv"), &parts.valid, vocab)?;
        write_statements(&self.0.join("test.tsv"), &parts.test, vocab)?;
        let meta = self.0.join("split.txt");
        fs::write(&meta, format!("mode = {mode}\nregime = {regime}\n")).with_context(|| format!("writing {}", meta.display()))
    }

    pub fn read(&self) -> Result<LoadedSplit> {
        let vocab = Vocab::read(&self.0.join(VOCAB))?;
        let part = |name: &str| read_statements(&self.0.join(name), &vocab);
        let splits = Splits {
            train: part("train.tsv")?,
            valid: part("valid.tsv")?,
            test: part("test.tsv")?,
        };
        let meta_path = self.0.join("split.txt");
        let meta = fs::read_to_string(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?;
        let field = |key: &str| {
            meta.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .map(|(_, v)| v.trim().to_string())
                .ok_or_else(|| anyhow!("{} has no {key}", meta_path.display()))
        };
        Ok(LoadedSplit {
            mode: field("mode")?.parse()?,
            regime: field("regime")?.parse().context("regime is not a number")?,
            vocab,
            splits,
        })
    }
}

impl LoadedSplit {
    pub fn train_graph(&self, q_max: usize) -> Result<HyperRelGraph> {
        let v = &self.vocab;
        Ok(HyperRelGraph::build(&self.splits.train, v.entities.len(), v.relations.len(), q_max)?)
    }

    /// Graph over every split, used for complex-query answers.
    pub fn full_graph(&self, q_max: usize) -> Result<HyperRelGraph> {
        let v = &self.vocab;
        let all: Vec<Statement> = [&self.splits.train, &self.splits.valid, &self.splits.test]
            .into_iter()
            .flatten()
            .cloned()
            .collect();
        Ok(HyperRelGraph::build(&all, v.entities.len(), v.relations.len(), q_max)?)
    }

    pub fn known(&self) -> KnownTails {
        KnownTails::from_sets(&[&self.splits.train, &self.splits.valid, &self.splits.test])
    }
}
