//! Variant grids: AlertStar components (A1), auxiliary tasks (A3) and
//! qualifier density (A4). Each grid trains every variant on the same split
//! and reports filtered test ranking.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use hralert_core::config::{Config, Sizes};
use hralert_core::kg::{apply_density_regime, split, SplitSpec, Statement, Vocab};
use hralert_core::models::{build_model, ModelKind};
use hralert_core::train::{evaluate, metrics_table, train, KnownTails, RankingReport, TrainData};
use serde_json::json;

use crate::data::regime_label;

const REGIMES: [f64; 3] = [0.33, 0.66, 1.0];

fn train_and_test(
    stmts: &[Statement],
    vocab: &Vocab,
    spec: &SplitSpec,
    regime: f64,
    kind: ModelKind,
    cfg: &Config,
) -> Result<RankingReport> {
    let thinned = apply_density_regime(stmts, regime, spec.seed)?;
    let parts = split(&thinned, spec)?;
    let sizes = Sizes::of(vocab);
    let graph = hralert_core::kg::HyperRelGraph::build(&parts.train, sizes.entities, sizes.relations, cfg.q_max)?;
    let known = KnownTails::from_sets(&[&parts.train, &parts.valid, &parts.test]);
    let mut model = build_model(kind, sizes, cfg)?;
    let data = TrainData {
        graph: &graph,
        valid: &parts.valid,
        known: &known,
    };
    train(model.as_mut(), &data, None, |_| {})?;
    let report = evaluate(model.as_ref(), &graph, &parts.test, &known)?;
    Ok(report.with_labels(kind.label(), &format!("{} test", spec.mode), &regime_label(regime)))
}

fn load(data: &Path) -> Result<(Vec<Statement>, Vocab)> {
    crate::data::IngestDir::new(data).read()
}

fn save(out: &Path, suite: &str, json: &serde_json::Value, table: &str) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let j = out.join(format!("ablate_{suite}.json"));
    fs::write(&j, serde_json::to_string_pretty(json)?).with_context(|| format!("writing {}", j.display()))?;
    let t = out.join(format!("ablate_{suite}.txt"));
    fs::write(&t, table).with_context(|| format!("writing {}", t.display()))
}

fn rows_grid(suite: &str, variants: Vec<(&str, ModelKind, Config)>, data: &Path, spec: &SplitSpec, out: &Path) -> Result<String> {
    let (stmts, vocab) = load(data)?;
    let mut results = Vec::new();
    for (name, kind, cfg) in variants {
        let report = train_and_test(&stmts, &vocab, spec, 1.0, kind, &cfg)?;
        eprintln!("{suite} {name}: test MRR {:.4}", report.mrr);
        results.push((name.to_string(), report));
    }
    let rows: Vec<(String, Option<&RankingReport>)> = results.iter().map(|(n, r)| (n.clone(), Some(r))).collect();
    let table = metrics_table("variant", &rows);
    let json = json!(results
        .iter()
        .map(|(n, r)| json!({ "variant": n, "report": r }))
        .collect::<Vec<_>>());
    save(out, suite, &json, &table)?;
    Ok(table)
}

pub fn component_grid(data: &Path, spec: &SplitSpec, cfg: &Config, out: &Path) -> Result<String> {
    let variant = |no_qual, no_path, no_gate| {
        let mut c = cfg.clone();
        c.ablation.no_qual = no_qual;
        c.ablation.no_path = no_path;
        c.ablation.no_gate = no_gate;
        c
    };
    let kind = ModelKind::AlertStar;
    let variants = vec![
        ("AS-NoQual", kind, variant(true, false, false)),
        ("AS-NoPath", kind, variant(false, true, false)),
        ("AS-NoGate", kind, variant(false, false, true)),
        ("AS-Full", kind, variant(false, false, false)),
    ];
    rows_grid("A1", variants, data, spec, out)
}

/// Auxiliary weights that are zero in `cfg` fall back to the defaults, so
/// the "on" setting of each task is never silently off.
pub fn task_grid(data: &Path, spec: &SplitSpec, cfg: &Config, out: &Path) -> Result<String> {
    let default = Config::default();
    let on = |v: f64, d: f64| if v > 0.0 { v } else { d };
    let rel = on(cfg.lambda_rel, default.lambda_rel);
    let qv = on(cfg.lambda_qv, default.lambda_qv);
    let variant = |lambda_rel, lambda_qv| Config {
        lambda_rel,
        lambda_qv,
        ..cfg.clone()
    };
    let kind = ModelKind::MtAlertStar;
    let variants = vec![
        ("MT-TailOnly", kind, variant(0.0, 0.0)),
        ("MT-Tail+Rel", kind, variant(rel, 0.0)),
        ("MT-Tail+QualVal", kind, variant(0.0, qv)),
        ("MT-Full", kind, variant(rel, qv)),
    ];
    rows_grid("A3", variants, data, spec, out)
}

pub fn density_grid(data: &Path, spec: &SplitSpec, cfg: &Config, models: &[ModelKind], out: &Path) -> Result<String> {
    let (stmts, vocab) = load(data)?;
    let mut grid: Vec<(ModelKind, Vec<RankingReport>)> = Vec::new();
    for &kind in models {
        let mut cells = Vec::new();
        for p in REGIMES {
            let report = train_and_test(&stmts, &vocab, spec, p, kind, cfg)?;
            eprintln!("A4 {} {}: test MRR {:.4}", kind.label(), regime_label(p), report.mrr);
            cells.push(report);
        }
        grid.push((kind, cells));
    }

    let width = grid.iter().map(|(k, _)| k.label().len()).chain(["model".len()]).max().unwrap_or(0);
    let mut table = format!("{:<width$}", "model");
    for p in REGIMES {
        let q = regime_label(p);
        for m in ["MRR", "H@1", "H@10"] {
            let _ = write!(table, "  {:>9}", format!("{q} {m}"));
        }
    }
    table.push('\n');
    for (kind, cells) in &grid {
        let _ = write!(table, "{:<width$}", kind.label());
        for r in cells {
            for v in [r.mrr, r.hits1, r.hits10] {
                let _ = write!(table, "  {v:>9.4}");
            }
        }
        table.push('\n');
    }

    let json = json!(grid
        .iter()
        .map(|(k, cells)| json!({ "model": k.label(), "regimes": cells }))
        .collect::<Vec<_>>());
    save(out, "A4", &json, &table)?;
    Ok(table)
}
