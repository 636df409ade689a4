//! The five completion models behind one training interface.

mod alertstar;
mod cq;
mod hr_nbfnet;
mod mt_alertstar;
mod mt_hr_nbfnet;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use alertstar::AlertStar;
pub use cq::{
    evaluate_queries, mine_queries, query_ranks, read_queries, write_queries, CqReport, GoldMode, HrNbfNetCq, Query, QueryKind,
};
pub use hr_nbfnet::{HrNbfNet, HrParts};
pub use mt_alertstar::{MtAlertStar, Task, TaskLosses};
pub use mt_hr_nbfnet::{MtHeads, MtHrNbfNet};

use crate::config::{Config, Sizes};
use crate::diff::{Array, Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::kg::HyperRelGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    AlertStar,
    MtAlertStar,
    HrNbfNet,
    MtHrNbfNet,
    HrNbfNetCq,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::AlertStar,
        ModelKind::MtAlertStar,
        ModelKind::HrNbfNet,
        ModelKind::MtHrNbfNet,
        ModelKind::HrNbfNetCq,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::AlertStar => "alertstar",
            ModelKind::MtAlertStar => "mt-alertstar",
            ModelKind::HrNbfNet => "hr-nbfnet",
            ModelKind::MtHrNbfNet => "mt-hr-nbfnet",
            ModelKind::HrNbfNetCq => "hr-nbfnet-cq",
        }
    }

    /// Display name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::AlertStar => "AlertStar",
            ModelKind::MtAlertStar => "MT-AlertStar",
            ModelKind::HrNbfNet => "HR-NBFNet",
            ModelKind::MtHrNbfNet => "MT-HR-NBFNet",
            ModelKind::HrNbfNetCq => "HR-NBFNet-CQ",
        }
    }

    pub fn default_batch_size(self) -> usize {
        match self {
            ModelKind::AlertStar => 128,
            ModelKind::MtAlertStar => 64,
            _ => 32,
        }
    }

    /// Prefix of every parameter name in checkpoints.
    pub fn prefix(self) -> &'static str {
        match self {
            ModelKind::AlertStar => "alertstar.",
            ModelKind::MtAlertStar => "mtas.",
            ModelKind::HrNbfNet => "hrnbf.",
            ModelKind::MtHrNbfNet => "mthr.",
            ModelKind::HrNbfNetCq => "hrcq.",
        }
    }

    pub fn has_gate(self) -> bool {
        self == ModelKind::AlertStar
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model kind {s:?}")))
    }
}

/// One element of an epoch: a single statement, or a `(head, relation)` group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unit {
    Statement(usize),
    Group(usize, usize),
}

/// Interface shared by every model for training and tail ranking.
pub trait KgcModel: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn config(&self) -> &Config;

    fn store(&self) -> &ParamStore;

    fn store_mut(&mut self) -> &mut ParamStore;

    /// Units visited once per epoch, in a fixed order.
    fn units(&self, graph: &HyperRelGraph) -> Vec<Unit>;

    /// Training loss of one unit. `graph` is the training graph.
    fn unit_loss(&self, g: &mut Graph, graph: &HyperRelGraph, unit: Unit, rng: &mut ChaCha8Rng) -> Result<Var>;

    /// Eval-mode scores of every entity as the tail of `(head, relation, ?, quals)`.
    fn score_tails(
        &self,
        graph: &HyperRelGraph,
        head: usize,
        relation: usize,
        quals: &[(usize, usize)],
    ) -> Result<Vec<f64>>;

    /// Current fusion weight for models that have one.
    fn gate(&self) -> Option<f64> {
        None
    }
}

/// Builds a freshly initialised model; parameters depend only on `cfg.seed`.
pub fn build_model(kind: ModelKind, sizes: Sizes, cfg: &Config) -> Result<Box<dyn KgcModel>> {
    cfg.validate()?;
    if sizes.entities < 2 || sizes.relations == 0 {
        return Err(Error::Data("need at least two entities and one relation".to_string()));
    }
    Ok(match kind {
        ModelKind::AlertStar => Box::new(AlertStar::new(sizes, cfg)?),
        ModelKind::MtAlertStar => Box::new(MtAlertStar::new(sizes, cfg)?),
        ModelKind::HrNbfNet => Box::new(HrNbfNet::new(sizes, cfg)?),
        ModelKind::MtHrNbfNet => Box::new(MtHrNbfNet::new(sizes, cfg)?),
        ModelKind::HrNbfNetCq => Box::new(HrNbfNetCq::new(sizes, cfg)?),
    })
}

pub(crate) fn init_rng(cfg: &Config) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed)
}

/// Dot product of `z` with every row of `table`.
pub(crate) fn dot_rows(z: &[f64], table: &Array) -> Vec<f64> {
    (0..table.rows())
        .map(|r| table.row(r).iter().zip(z).map(|(a, b)| a * b).sum())
        .collect()
}

/// `sum(a ⊙ b)` over two `[1, d]` rows.
pub(crate) fn dot(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let p = g.mul(a, b)?;
    Ok(g.sum(p))
}

pub(crate) fn statement_units(graph: &HyperRelGraph) -> Vec<Unit> {
    (0..graph.num_statements()).map(Unit::Statement).collect()
}

pub(crate) fn group_units(graph: &HyperRelGraph) -> Vec<Unit> {
    graph.groups.keys().map(|&(h, r)| Unit::Group(h, r)).collect()
}

pub(crate) fn expect_statement(unit: Unit) -> Result<usize> {
    match unit {
        Unit::Statement(i) => Ok(i),
        Unit::Group(..) => Err(Error::invalid("statement model received a group unit")),
    }
}

pub(crate) fn check_entity(id: usize, n: usize) -> Result<()> {
    if id >= n {
        return Err(Error::Index {
            op: "entity",
            index: id,
            len: n,
        });
    }
    Ok(())
}
