#![allow(dead_code)]

use std::collections::BTreeSet;

use hralert_core::config::{Config, Sizes};
use hralert_core::diff::{Gradients, Graph, Mode};
use hralert_core::kg::{HyperRelGraph, Statement};
use hralert_core::models::{KgcModel, Unit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Prints a one-line verdict and fails the test when `ok` is false.
pub fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id:>2}: {name} ({detail})");
    assert!(ok, "criterion {id} failed: {name} ({detail})");
}

pub fn tiny_config(d: usize) -> Config {
    Config {
        dim: d,
        heads: 2,
        enc_layers: 1,
        enc_heads: 2,
        ffn: 2 * d,
        layers: 2,
        ..Config::default()
    }
}

/// Summed unit losses in one training graph with fixed dropout and sampling seeds.
pub fn total_loss(model: &dyn KgcModel, graph: &HyperRelGraph, units: &[Unit], seed: u64) -> (f64, Gradients) {
    let mut g = Graph::new(model.store(), Mode::Train, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = None;
    for &u in units {
        let l = model.unit_loss(&mut g, graph, u, &mut rng).unwrap();
        total = Some(match total {
            None => l,
            Some(t) => g.add(t, l).unwrap(),
        });
    }
    let total = total.expect("at least one unit");
    let mut grads = Gradients::zeros_like(model.store());
    g.backward(total, &mut grads).unwrap();
    (g.item(total), grads)
}

/// Worst per-tensor relative L2 error between reverse-mode and central
/// finite-difference gradients. Tensors whose gradients are both below
/// `1e-7` in norm count as matching.
pub fn max_grad_error(model: &mut dyn KgcModel, graph: &HyperRelGraph, units: &[Unit], seed: u64) -> (f64, String) {
    let step = 1e-5;
    let (_, analytic) = total_loss(model, graph, units, seed);
    let ids: Vec<_> = model.store().ids().collect();
    let mut worst = (0.0, String::new());
    for id in ids {
        let n = model.store().value(id).len();
        let mut fd = vec![0.0; n];
        for (k, slot) in fd.iter_mut().enumerate() {
            let orig = model.store().value(id).data()[k];
            model.store_mut().value_mut(id).data_mut()[k] = orig + step;
            let (up, _) = total_loss(model, graph, units, seed);
            model.store_mut().value_mut(id).data_mut()[k] = orig - step;
            let (down, _) = total_loss(model, graph, units, seed);
            model.store_mut().value_mut(id).data_mut()[k] = orig;
            *slot = (up - down) / (2.0 * step);
        }
        let a = analytic.get(id).data();
        let diff: f64 = a.iter().zip(&fd).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nf = fd.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = na.max(nf);
        let rel = if scale < 1e-7 { 0.0 } else { diff / scale };
        if rel > worst.0 {
            worst = (rel, model.store().name(id).to_string());
        }
    }
    worst
}

/// Rank by full sort: candidates are every entity except the other known
/// answers; ties are ordered with the gold last.
pub fn oracle_rank(scores: &[f64], gold: usize, others: &BTreeSet<usize>) -> usize {
    let mut cands: Vec<(f64, bool)> = (0..scores.len())
        .filter(|e| *e == gold || !others.contains(e))
        .map(|e| (scores[e], e == gold))
        .collect();
    cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    cands.iter().position(|c| c.1).unwrap() + 1
}

/// Tails of `(h, r)` by scanning every statement.
pub fn scan_tails(stmts: &[Statement], h: usize, r: usize) -> BTreeSet<usize> {
    stmts.iter().filter(|s| s.head == h && s.relation == r).map(|s| s.tail).collect()
}

pub fn sizes(entities: usize, relations: usize, qual_keys: usize, qual_values: usize) -> Sizes {
    Sizes {
        entities,
        relations,
        qual_keys,
        qual_values,
    }
}
