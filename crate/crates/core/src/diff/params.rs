//! Named parameter storage, gradient buffers and the flat checkpoint format.
//!
//! A checkpoint is two files: a plain-text manifest with one
//! `name \t rows,cols \t offset` line per parameter, and a flat little-endian
//! `f64` blob in which each parameter occupies `rows * cols` values starting
//! at `offset` (counted in values, not bytes).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Array;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Param {
    name: String,
    value: Array,
}

/// Trainable parameters addressed by [`ParamId`] or by unique name.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Array) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param { name, value });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Array {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.params[id.0].value
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Writes `<stem>.manifest` and `<stem>.bin` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut manifest = String::new();
        let mut blob = Vec::with_capacity(self.num_values() * 8);
        let mut offset = 0usize;
        for p in &self.params {
            let [r, c] = p.value.shape();
            manifest.push_str(&format!("{}\t{},{}\t{}\n", p.name, r, c, offset));
            for v in p.value.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            offset += p.value.len();
        }
        let mpath = dir.join(format!("{stem}.manifest"));
        let bpath = dir.join(format!("{stem}.bin"));
        fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
        fs::write(&bpath, blob).map_err(|e| Error::io(&bpath, e))?;
        Ok(())
    }

    /// Loads values saved by [`ParamStore::save`] into an identically laid out store.
    pub fn load_into(&mut self, dir: &Path, stem: &str) -> Result<()> {
        let mpath = dir.join(format!("{stem}.manifest"));
        let bpath = dir.join(format!("{stem}.bin"));
        let manifest = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let blob = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
        if blob.len() % 8 != 0 {
            return Err(Error::Checkpoint("blob length is not a multiple of 8".into()));
        }
        let values: Vec<f64> = blob
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        let mut seen = 0;
        for (lineno, line) in manifest.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Checkpoint(format!("manifest line {} malformed", lineno + 1));
            if parts.len() != 3 {
                return Err(bad());
            }
            let (r, c) = parts[1].split_once(',').ok_or_else(bad)?;
            let r: usize = r.parse().map_err(|_| bad())?;
            let c: usize = c.parse().map_err(|_| bad())?;
            let offset: usize = parts[2].parse().map_err(|_| bad())?;
            let id = self
                .id(parts[0])
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {}", parts[0])))?;
            let target = &mut self.params[id.0].value;
            if target.shape() != [r, c] {
                return Err(Error::Checkpoint(format!(
                    "{}: stored shape [{r}, {c}] but model expects {:?}",
                    parts[0],
                    target.shape()
                )));
            }
            let end = offset + r * c;
            if end > values.len() {
                return Err(Error::Checkpoint(format!("{}: values out of range", parts[0])));
            }
            target.data_mut().copy_from_slice(&values[offset..end]);
            seen += 1;
        }
        if seen != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "manifest lists {seen} parameters, model has {}",
                self.params.len()
            )));
        }
        Ok(())
    }
}

/// One gradient accumulator per parameter, same shapes as the store.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Array>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store
                .params
                .iter()
                .map(|p| {
                    let [r, c] = p.value.shape();
                    Array::zeros(r, c)
                })
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn get(&self, id: ParamId) -> &Array {
        &self.grads[id.0]
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Array)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut Array> {
        self.grads.iter_mut()
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().map(Array::sum_squares).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Array::is_finite)
    }
}

/// Gaussian init with the given standard deviation.
pub fn normal_init<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array {
    let dist = Normal::new(0.0, std).expect("finite std");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Array::from_vec(rows, cols, data).expect("sized")
}

/// Uniform init in `[-bound, bound]`.
pub fn uniform_init<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Array {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Array::from_vec(rows, cols, data).expect("sized")
}
