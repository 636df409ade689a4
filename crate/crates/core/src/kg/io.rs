//! Tab-separated statement files: `h \t r \t t \t qk1 \t qv1 \t ...` in string form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Statement, Vocab, VocabKind};
use crate::error::{Error, Result};

pub fn write_statements(path: &Path, statements: &[Statement], vocab: &Vocab) -> Result<()> {
    let mut out = String::new();
    for s in statements {
        let _ = write!(
            out,
            "{}\t{}\t{}",
            vocab.entities.name(s.head),
            vocab.relations.name(s.relation),
            vocab.entities.name(s.tail)
        );
        for &(k, v) in &s.qualifiers {
            let _ = write!(out, "\t{}\t{}", vocab.qual_keys.name(k), vocab.qual_values.name(v));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn parse_lines(text: &str, mut resolve: impl FnMut(VocabKind, &str) -> Option<usize>) -> Result<Vec<Statement>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Record { line: i + 1, reason };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 3 || f.len().is_multiple_of(2) {
            return Err(bad(format!("expected h, r, t and key/value pairs, got {} fields", f.len())));
        }
        let mut id = |kind: VocabKind, s: &str| {
            resolve(kind, s).ok_or_else(|| bad(format!("unknown {} {s:?}", kind.as_str())))
        };
        let head = id(VocabKind::Entity, f[0])?;
        let relation = id(VocabKind::Relation, f[1])?;
        let tail = id(VocabKind::Entity, f[2])?;
        let mut qualifiers = Vec::with_capacity((f.len() - 3) / 2);
        for pair in f[3..].chunks(2) {
            let k = id(VocabKind::QualKey, pair[0])?;
            let v = id(VocabKind::QualValue, pair[1])?;
            if qualifiers.iter().any(|&(k2, _)| k2 == k) {
                return Err(bad(format!("qualifier key {:?} repeated", pair[0])));
            }
            qualifiers.push((k, v));
        }
        out.push(Statement {
            head,
            relation,
            tail,
            qualifiers,
        });
    }
    Ok(out)
}

/// Reads statements against a fixed vocabulary; unknown strings are errors.
pub fn read_statements(path: &Path, vocab: &Vocab) -> Result<Vec<Statement>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lines(&text, |kind, s| vocab.table(kind).get(s))
}

/// Reads statements, adding unseen strings to `vocab`.
pub fn read_statements_extending(path: &Path, vocab: &mut Vocab) -> Result<Vec<Statement>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lines(&text, |kind, s| Some(vocab.table_mut(kind).intern(s)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_ids() {
        let mut vocab = Vocab::default();
        for e in ["a", "b", "c"] {
            vocab.entities.intern(e);
        }
        vocab.relations.intern("r0");
        vocab.relations.intern("r1");
        vocab.qual_keys.intern("port");
        vocab.qual_keys.intern("protocol");
        vocab.qual_values.intern("22");
        vocab.qual_values.intern("TCP");
        let stmts = vec![
            Statement::new(0, 1, 2, vec![(1, 1), (0, 0)]),
            Statement::triple(2, 0, 0),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.tsv");
        write_statements(&path, &stmts, &vocab).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "a\tr1\tc\tprotocol\tTCP\tport\t22\nc\tr0\ta\n"
        );
        assert_eq!(read_statements(&path, &vocab).unwrap(), stmts);

        let mut fresh = vocab.clone();
        assert_eq!(read_statements_extending(&path, &mut fresh).unwrap(), stmts);
        assert_eq!(fresh, vocab);
    }

    #[test]
    fn unknown_symbols_and_bad_arity_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.tsv");
        fs::write(&path, "a\tr\tb\tk\n").unwrap();
        let mut v = Vocab::default();
        assert!(read_statements_extending(&path, &mut v).is_err());
        fs::write(&path, "a\tr\tb\n").unwrap();
        assert!(read_statements(&path, &Vocab::default()).is_err());
    }
}
