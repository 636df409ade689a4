use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Dense bijection between strings and ids `0..len`.
#[derive(Clone, Debug, Default)]
pub struct Interner {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl PartialEq for Interner {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
    }
}

impl Interner {
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VocabKind {
    Entity,
    Relation,
    QualKey,
    QualValue,
}

impl VocabKind {
    pub const ALL: [VocabKind; 4] = [Self::Entity, Self::Relation, Self::QualKey, Self::QualValue];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Entity => "entity",
            Self::Relation => "relation",
            Self::QualKey => "qual_key",
            Self::QualValue => "qual_value",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// The four symbol tables of a dataset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocab {
    pub entities: Interner,
    pub relations: Interner,
    pub qual_keys: Interner,
    pub qual_values: Interner,
}

impl Vocab {
    pub fn table(&self, kind: VocabKind) -> &Interner {
        match kind {
            VocabKind::Entity => &self.entities,
            VocabKind::Relation => &self.relations,
            VocabKind::QualKey => &self.qual_keys,
            VocabKind::QualValue => &self.qual_values,
        }
    }

    pub fn table_mut(&mut self, kind: VocabKind) -> &mut Interner {
        match kind {
            VocabKind::Entity => &mut self.entities,
            VocabKind::Relation => &mut self.relations,
            VocabKind::QualKey => &mut self.qual_keys,
            VocabKind::QualValue => &mut self.qual_values,
        }
    }

    /// `kind \t string \t id` lines, grouped by kind in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for kind in VocabKind::ALL {
            for (id, name) in self.table(kind).names().iter().enumerate() {
                let _ = writeln!(out, "{}\t{}\t{}", kind.as_str(), name, id);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut vocab = Vocab::default();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| Error::Record {
                line: i + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected kind, string and id"));
            }
            let kind = VocabKind::parse(fields[0]).ok_or_else(|| bad("unknown vocabulary kind"))?;
            let id: usize = fields[2].parse().map_err(|_| bad("id is not an integer"))?;
            let table = vocab.table_mut(kind);
            if id != table.len() || table.get(fields[1]).is_some() {
                return Err(bad("ids must be dense, ordered and unique"));
            }
            table.intern(fields[1]);
        }
        Ok(vocab)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Hex SHA-256 of the vocabulary file contents.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }
}
