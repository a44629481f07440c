//! Minimal neural-network core: dense f64 tensors, a reverse-mode tape, and
//! the handful of primitives the diffusion model is built from.
//!
//! The op set is deliberately closed: matmul, softmax, layer norm, GELU,
//! elementwise arithmetic, concat/slice, and full reductions. Anything the
//! model needs is composed from these, which keeps the backward pass small
//! enough to verify exhaustively against central differences
//! (see [`gradcheck`]).
//!
//! Two execution paths share the same kernels:
//!
//! * [`tape::TensorTape`] records every op and can backpropagate. Used for
//!   training and gradient checks, where sizes are small.
//! * Plain [`tensor::Tensor`] functions evaluate without recording. Used for
//!   sampling and benchmarks, where clouds are large and retaining per-op
//!   buffers would exhaust memory.

pub mod attention;
pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport, GradMap};
pub use params::ParameterStore;
pub use tape::TensorTape;
pub use tensor::Tensor;

/// Errors from tensor and tape operations.
///
/// Shape errors carry the operation name and the offending shapes so a
/// failure deep inside a model forward is attributable.
#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected}, got shape {got:?}")]
    BadShape {
        op: &'static str,
        expected: &'static str,
        got: Vec<usize>,
    },
    #[error("attention: model dimension {dim} not divisible by {heads} heads")]
    HeadsMismatch { dim: usize, heads: usize },
    #[error("attention: empty key/value set")]
    EmptyKeys,
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("parameter store: {0}")]
    Params(String),
    #[error("parameter io: {0}")]
    Io(#[from] std::io::Error),
}
