use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Statement;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    Inductive,
    Transductive,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Inductive => "inductive",
            SplitMode::Transductive => "transductive",
        })
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inductive" => Ok(SplitMode::Inductive),
            "transductive" => Ok(SplitMode::Transductive),
            _ => Err(Error::invalid(format!("unknown split mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(mode: SplitMode, fractions: [f64; 3], seed: u64) -> Self {
        Self {
            mode,
            train: fractions[0],
            valid: fractions[1],
            test: fractions[2],
            seed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Statement>,
    pub valid: Vec<Statement>,
    pub test: Vec<Statement>,
}

fn take_sorted(statements: &[Statement], mut idx: Vec<usize>) -> Vec<Statement> {
    idx.sort_unstable();
    idx.into_iter().map(|i| statements[i].clone()).collect()
}

/// Partitions statements into train/valid/test.
///
/// Transductive splits shuffle statements. Inductive splits shuffle the
/// entities instead and reserve them one at a time until the statements
/// touching a reserved entity cover the held-out fraction; those statements
/// become valid/test and never reach train. Each part keeps input order.
pub fn split(statements: &[Statement], spec: &SplitSpec) -> Result<Splits> {
    let fr = [spec.train, spec.valid, spec.test];
    if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split fractions {fr:?} must be in [0, 1] and sum to 1")));
    }
    let n = statements.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.mode {
        SplitMode::Transductive => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let n_train = ((spec.train * n as f64).round() as usize).min(n);
            let n_valid = ((spec.valid * n as f64).round() as usize).min(n - n_train);
            let valid = idx.split_off(n_train);
            let mut valid = valid;
            let test = valid.split_off(n_valid);
            Ok(Splits {
                train: take_sorted(statements, idx),
                valid: take_sorted(statements, valid),
                test: take_sorted(statements, test),
            })
        }
        SplitMode::Inductive => {
            let held_target = (((spec.valid + spec.test) * n as f64).round() as usize).max(1);
            let mut entities: Vec<usize> = statements
                .iter()
                .flat_map(|s| [s.head, s.tail])
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            entities.shuffle(&mut rng);
            let mut touching: Vec<Vec<usize>> = Vec::new();
            let max_entity = entities.iter().copied().max().map_or(0, |m| m + 1);
            touching.resize_with(max_entity, Vec::new);
            for (i, s) in statements.iter().enumerate() {
                touching[s.head].push(i);
                if s.tail != s.head {
                    touching[s.tail].push(i);
                }
            }
            let mut held = vec![false; n];
            let mut held_count = 0;
            for &e in &entities {
                if held_count >= held_target {
                    break;
                }
                for &i in &touching[e] {
                    if !held[i] {
                        held[i] = true;
                        held_count += 1;
                    }
                }
            }
            let train: Vec<usize> = (0..n).filter(|&i| !held[i]).collect();
            let mut rest: Vec<usize> = (0..n).filter(|&i| held[i]).collect();
            if train.is_empty() || rest.is_empty() {
                return Err(Error::Data(format!(
                    "inductive split infeasible: {n} statements leave {} for training and {} held out",
                    train.len(),
                    rest.len()
                )));
            }
            rest.shuffle(&mut rng);
            let share = if spec.valid + spec.test > 0.0 {
                spec.valid / (spec.valid + spec.test)
            } else {
                0.0
            };
            let m = rest.len();
            let n_valid = ((share * m as f64).round() as usize).min(m - 1);
            let test = rest.split_off(n_valid);
            Ok(Splits {
                train: take_sorted(statements, train),
                valid: take_sorted(statements, rest),
                test: take_sorted(statements, test),
            })
        }
    }
}
