mod ablate;
mod data;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hralert_core::config::{Config, Sizes};
use hralert_core::kg::{apply_density_regime, parse_alerts, split, Schema, SplitMode, SplitSpec};
use hralert_core::models::{
    build_model, evaluate_queries, mine_queries, write_queries, GoldMode, HrNbfNetCq, ModelKind,
};
use hralert_core::train::{
    evaluate, load_checkpoint, load_params, metrics_table, read_meta, train, CheckpointTarget, History, RankingReport,
    TrainData,
};

use crate::data::{regime_label, IngestDir, SplitDir};

#[derive(Parser)]
#[command(name = "hralert", version, about = "Hyper-relational alert completion: ingest, train, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = "HRALERT_OUT", default_value = "hralert_out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a CSV alert file into statements and a vocabulary.
    Ingest {
        alerts: PathBuf,
        #[command(flatten)]
        out: OutArg,
        /// Write the accepted records even when some lines are rejected.
        #[arg(long)]
        lenient: bool,
    },
    /// Apply a qualifier-density regime and split into train/valid/test.
    Split {
        /// Directory written by `ingest`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "inductive")]
        mode: SplitMode,
        /// Fraction of qualifier pairs kept per statement.
        #[arg(long, default_value_t = 1.0)]
        regime: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.1, 0.1])]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Train a model; writes a checkpoint and the epoch history.
    Train {
        /// Directory written by `split`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: ModelKind,
        #[command(flatten)]
        opts: TrainOpts,
        #[command(flatten)]
        out: OutArg,
    },
    /// Filtered tail ranking of a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Part::Test)]
        split: Part,
        #[command(flatten)]
        out: OutArg,
    },
    /// Mine 1p/2p/2i/2u queries from the test split and evaluate them.
    Cq {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Maximum queries per type; 0 keeps all.
        #[arg(long, default_value_t = 200)]
        cap: usize,
        /// Rank every answer, or only the mined target.
        #[arg(long, value_enum, default_value_t = Gold::All)]
        gold: Gold,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Train and compare the variants of an ablation suite.
    Ablate {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Directory written by `ingest`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "inductive")]
        mode: SplitMode,
        #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.1, 0.1])]
        fractions: Vec<f64>,
        /// Models compared across regimes (A4 only).
        #[arg(long, value_delimiter = ',', default_values_t = [ModelKind::AlertStar, ModelKind::MtAlertStar])]
        models: Vec<ModelKind>,
        #[command(flatten)]
        opts: TrainOpts,
        #[command(flatten)]
        out: OutArg,
    },
    /// Tabulate report files, and gate trajectories from history files.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Part {
    Valid,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum Gold {
    All,
    Target,
}

#[derive(Clone, Copy, ValueEnum, Debug)]
enum Suite {
    A1,
    A3,
    A4,
}

/// Hyperparameter overrides; flags win over `--config`, which wins over defaults.
#[derive(Args, Clone, Default)]
struct TrainOpts {
    /// File of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    chunk: Option<usize>,
    #[arg(long)]
    lambda_tail: Option<f64>,
    #[arg(long)]
    lambda_rel: Option<f64>,
    #[arg(long)]
    lambda_qv: Option<f64>,
    #[arg(long)]
    val_cap: Option<usize>,
    #[arg(long)]
    no_qual: bool,
    #[arg(long)]
    no_path: bool,
    #[arg(long)]
    no_gate: bool,
}

impl TrainOpts {
    fn build(&self) -> Result<Config> {
        let mut cfg = Config::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        let set = |cfg: &mut Config, key: &str, v: Option<String>| -> Result<()> {
            if let Some(v) = v {
                cfg.set(key, &v)?;
            }
            Ok(())
        };
        set(&mut cfg, "seed", self.seed.map(|v| v.to_string()))?;
        set(&mut cfg, "epochs", self.epochs.map(|v| v.to_string()))?;
        set(&mut cfg, "dim", self.dim.map(|v| v.to_string()))?;
        set(&mut cfg, "lr", self.lr.map(|v| v.to_string()))?;
        set(&mut cfg, "batch_size", self.batch_size.map(|v| v.to_string()))?;
        set(&mut cfg, "dropout", self.dropout.map(|v| v.to_string()))?;
        set(&mut cfg, "layers", self.layers.map(|v| v.to_string()))?;
        set(&mut cfg, "chunk", self.chunk.map(|v| v.to_string()))?;
        set(&mut cfg, "lambda_tail", self.lambda_tail.map(|v| v.to_string()))?;
        set(&mut cfg, "lambda_rel", self.lambda_rel.map(|v| v.to_string()))?;
        set(&mut cfg, "lambda_qv", self.lambda_qv.map(|v| v.to_string()))?;
        set(&mut cfg, "val_cap", self.val_cap.map(|v| v.to_string()))?;
        cfg.ablation.no_qual |= self.no_qual;
        cfg.ablation.no_path |= self.no_path;
        cfg.ablation.no_gate |= self.no_gate;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Rejects settings that the chosen model would silently ignore.
fn check_compatible(kind: ModelKind, cfg: &Config) -> Result<()> {
    let ab = cfg.ablation;
    if kind != ModelKind::AlertStar && (ab.no_qual || ab.no_path || ab.no_gate) {
        bail!("component switches apply to alertstar only, not {kind}");
    }
    let default = Config::default();
    let lambdas_changed = cfg.lambda_tail != default.lambda_tail
        || cfg.lambda_rel != default.lambda_rel
        || cfg.lambda_qv != default.lambda_qv;
    if lambdas_changed && !matches!(kind, ModelKind::MtAlertStar | ModelKind::MtHrNbfNet) {
        bail!("loss weights apply to multi-task models only, not {kind}");
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_ingest(alerts: &Path, out: &Path, lenient: bool) -> Result<()> {
    let file = fs::File::open(alerts).with_context(|| format!("opening {}", alerts.display()))?;
    let ingested = parse_alerts(file, &Schema::default())?;
    for r in &ingested.rejected {
        eprintln!("{}:{}: {}", alerts.display(), r.line, r.reason);
    }
    if !ingested.rejected.is_empty() && !lenient {
        bail!("{} record(s) rejected; rerun with --lenient to keep the rest", ingested.rejected.len());
    }
    ensure!(!ingested.statements.is_empty(), "no records accepted");
    create(out)?;
    IngestDir::new(out).write(&ingested.statements, &ingested.vocab)?;
    println!(
        "{} statements, {} entities, {} relations, {} rejected",
        ingested.statements.len(),
        ingested.vocab.entities.len(),
        ingested.vocab.relations.len(),
        ingested.rejected.len()
    );
    Ok(())
}

fn cmd_split(data: &Path, mode: SplitMode, regime: f64, fractions: &[f64], seed: u64, out: &Path) -> Result<()> {
    ensure!(fractions.len() == 3, "--fractions needs three values");
    let (stmts, vocab) = IngestDir::new(data).read()?;
    let thinned = apply_density_regime(&stmts, regime, seed)?;
    let parts = split(&thinned, &SplitSpec::new(mode, [fractions[0], fractions[1], fractions[2]], seed))?;
    create(out)?;
    SplitDir::new(out).write(&parts, &vocab, mode, regime)?;
    println!(
        "{mode} split at {}: {} train, {} valid, {} test",
        regime_label(regime),
        parts.train.len(),
        parts.valid.len(),
        parts.test.len()
    );
    Ok(())
}

fn cmd_train(data: &Path, kind: ModelKind, opts: &TrainOpts, out: &Path) -> Result<()> {
    let cfg = opts.build()?;
    check_compatible(kind, &cfg)?;
    let loaded = SplitDir::new(data).read()?;
    let sizes = Sizes::of(&loaded.vocab);
    let graph = loaded.train_graph(cfg.q_max)?;
    let known = loaded.known();
    create(out)?;
    let target = CheckpointTarget {
        dir: out.join("checkpoint"),
        vocab_hash: loaded.vocab.hash(),
        sizes,
    };
    let mut model = build_model(kind, sizes, &cfg)?;
    let history = train(
        model.as_mut(),
        &TrainData {
            graph: &graph,
            valid: &loaded.splits.valid,
            known: &known,
        },
        Some(&target),
        |r| {
            let val = r.val_mrr.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            let gate = r.gate.map_or_else(String::new, |g| format!("  gate {g:.4}"));
            println!("epoch {:>3}  loss {:.5}  val MRR {val}{gate}", r.epoch, r.train_loss);
        },
    )?;
    write(&out.join("history.json"), &history.to_json()?)?;
    println!("best epoch {} -> {}", history.best_epoch, target.dir.display());
    Ok(())
}

fn cmd_eval(checkpoint: &Path, data: &Path, part: Part, out: &Path) -> Result<()> {
    let (model, meta) = load_checkpoint(checkpoint)?;
    let loaded = SplitDir::new(data).read()?;
    ensure!(
        loaded.vocab.hash() == meta.vocab_hash,
        "checkpoint vocabulary does not match {}",
        data.display()
    );
    let graph = loaded.train_graph(meta.config.q_max)?;
    let (queries, name) = match part {
        Part::Valid => (&loaded.splits.valid, "valid"),
        Part::Test => (&loaded.splits.test, "test"),
    };
    let report = evaluate(model.as_ref(), &graph, queries, &loaded.known())?.with_labels(
        meta.kind.label(),
        &format!("{} {name}", loaded.mode),
        &regime_label(loaded.regime),
    );
    let label = format!("{} ({}, {})", report.model, report.split, report.regime);
    let table = metrics_table("model", &[(label, Some(&report))]);
    create(out)?;
    write(&out.join("report.json"), &report.to_json()?)?;
    write(&out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_cq(checkpoint: &Path, data: &Path, cap: usize, gold: Gold, seed: u64, out: &Path) -> Result<()> {
    let meta = read_meta(checkpoint)?;
    ensure!(
        meta.kind == ModelKind::HrNbfNetCq,
        "complex queries need an {} checkpoint, got {}",
        ModelKind::HrNbfNetCq,
        meta.kind
    );
    let loaded = SplitDir::new(data).read()?;
    ensure!(
        loaded.vocab.hash() == meta.vocab_hash,
        "checkpoint vocabulary does not match {}",
        data.display()
    );
    let mut model = HrNbfNetCq::new(meta.sizes, &meta.config)?;
    load_params(checkpoint, &mut model)?;
    let full = loaded.full_graph(meta.config.q_max)?;
    let queries = mine_queries(&full, &loaded.splits.test, cap, seed)?;
    let mode = match gold {
        Gold::All => GoldMode::All,
        Gold::Target => GoldMode::Target,
    };
    let report = evaluate_queries(&model, &queries, mode)?;
    create(out)?;
    write(&out.join("cq_queries.tsv"), &write_queries(&queries, &loaded.vocab)?)?;
    write(&out.join("cq_report.json"), &report.to_json()?)?;
    let table = report.table();
    write(&out.join("cq_report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_report(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut reports: Vec<(String, RankingReport)> = Vec::new();
    let mut gates = String::new();
    for path in inputs {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if let Ok(r) = serde_json::from_str::<RankingReport>(&text) {
            let label = format!("{} ({}, {})", r.model, r.split, r.regime);
            reports.push((label, r));
        } else if let Ok(h) = serde_json::from_str::<History>(&text) {
            let traj = h.gate_trajectory();
            if !traj.is_empty() {
                let vals: Vec<String> = traj.iter().map(|g| format!("{g:.4}")).collect();
                gates.push_str(&format!("{}\t{}\n", path.display(), vals.join(" ")));
            }
        } else {
            bail!("{} is neither a report nor a history file", path.display());
        }
    }
    let rows: Vec<(String, Option<&RankingReport>)> = reports.iter().map(|(l, r)| (l.clone(), Some(r))).collect();
    let mut text = if rows.is_empty() { String::new() } else { metrics_table("run", &rows) };
    if !gates.is_empty() {
        text.push_str("\ngate trajectory (before training, then per epoch)\n");
        text.push_str(&gates);
    }
    create(out)?;
    let json: Vec<&RankingReport> = reports.iter().map(|(_, r)| r).collect();
    write(&out.join("summary.json"), &serde_json::to_string_pretty(&json)?)?;
    write(&out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest { alerts, out, lenient } => cmd_ingest(&alerts, &out.out, lenient),
        Command::Split {
            data,
            mode,
            regime,
            fractions,
            seed,
            out,
        } => cmd_split(&data, mode, regime, &fractions, seed, &out.out),
        Command::Train { data, model, opts, out } => cmd_train(&data, model, &opts, &out.out),
        Command::Eval {
            checkpoint,
            data,
            split,
            out,
        } => cmd_eval(&checkpoint, &data, split, &out.out),
        Command::Cq {
            checkpoint,
            data,
            cap,
            gold,
            seed,
            out,
        } => cmd_cq(&checkpoint, &data, cap, gold, seed, &out.out),
        Command::Ablate {
            suite,
            data,
            mode,
            fractions,
            models,
            opts,
            out,
        } => {
            ensure!(fractions.len() == 3, "--fractions needs three values");
            let cfg = opts.build()?;
            let spec = SplitSpec::new(mode, [fractions[0], fractions[1], fractions[2]], cfg.seed);
            let text = match suite {
                Suite::A1 => ablate::component_grid(&data, &spec, &cfg, &out.out)?,
                Suite::A3 => ablate::task_grid(&data, &spec, &cfg, &out.out)?,
                Suite::A4 => ablate::density_grid(&data, &spec, &cfg, &models, &out.out)?,
            };
            print!("{text}");
            Ok(())
        }
        Command::Report { inputs, out } => cmd_report(&inputs, &out.out),
    }
}
