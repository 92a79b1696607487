//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every value is a 2-D matrix. A [`Graph`] records operations on a tape as
//! they are executed; [`Graph::backward`] walks the tape in reverse and
//! returns the gradient of a scalar output with respect to every trainable
//! parameter that took part in the computation.
//!
//! Parameters live outside the tape in a [`ParamStore`], so a tape can be
//! thrown away after each example while the store persists across training.

mod graph;
mod optim;
mod params;

pub mod gradcheck;

pub use graph::{Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{Gradients, ParamId, ParamStore, StoreError, TensorRecord};

/// Dense row-major matrix used for every value on the tape.
pub type Mat = ndarray::Array2<f64>;
