//! Second-order input jets and reverse-mode parameter gradients.

mod activation;
mod jet;
mod tape;

pub use activation::{sigmoid, Activation, Fault};
pub use jet::{jet_seed, tri_index, Jet2, Partial, Primitive, MAX_DIM, MAX_HESS};
pub use tape::{JetBatch, Layout, NodeId, ParamSlot, Tape};

use ndarray::Array2;

use crate::error::Result;

/// Parameter gradient of a loss whose adjoint w.r.t. the jet components of
/// `root` is `loss_adjoint`.
pub fn loss_param_gradient(tape: &Tape<'_>, root: NodeId, loss_adjoint: &Array2<f64>) -> Result<Vec<f64>> {
    tape.backward(root, loss_adjoint)
}
