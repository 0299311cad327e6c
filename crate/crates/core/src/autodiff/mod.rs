//! Small dense autodiff engine: a define-by-run tape for reverse-mode
//! gradients, plus forward-mode tangents for derivatives with respect to a
//! scalar input.

mod dual;
mod tape;
mod tensor;

pub use dual::{DualNode, DualValue};
pub use tape::{Gradients, LeafKind, NodeId, Tape};
pub use tensor::Tensor;
