//! Dense reverse-mode differentiation over `f64` arrays.
//!
//! Only the primitives the alert models need are provided: matrix products,
//! broadcast arithmetic, concatenation, activations, softmax, layer norm,
//! dropout, row lookups, scatter-add and reductions.

mod array;
mod graph;
mod optim;
mod params;

pub use array::Array;
pub use graph::{sigmoid, Graph, Mode, Var};
pub use optim::{clip_global_norm, Adam};
pub use params::{normal_init, uniform_init, Gradients, ParamId, ParamStore};

/// Epsilon used by every layer norm in the crate.
pub const LN_EPS: f64 = 1e-5;
