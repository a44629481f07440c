//! Cross-domain correspondence from polycube clouds to surface samples.
//!
//! Registration runs in three stages. A similarity transform (scale,
//! rotation, translation) coarsely aligns the generated polycube cloud to
//! the input surface samples via ICP with a closed-form fit per round. A
//! Coherent Point Drift EM loop then refines the alignment non-rigidly,
//! bending the polycube cloud onto the samples with a smooth Gaussian
//! displacement field. Finally the deformed points are discretized into an
//! exact, indexable correspondence: each polycube point gets the nearest
//! surface sample and inherits its `(face_id, barycentric)` anchor, which
//! is what lets the hex-mesh stage pull grid vertices back onto the
//! original surface.

mod corr;
mod cpd;
mod similarity;

pub use corr::{
    build_correspondence, load_correspondence, save_correspondence, Anchor, CorrespondenceMap,
};
pub use cpd::{cpd_nonrigid, CpdConfig, CpdState};
pub use similarity::{rigid_align, similarity_from_correspondences, SimilarityTransform};

use thiserror::Error;

use crate::spatial::SpatialError;

/// Errors from alignment, refinement, and correspondence building.
#[derive(Debug, Error)]
pub enum RegisterError {
    /// A precondition on the inputs failed.
    #[error("{0}")]
    BadArgument(String),
    /// The point configuration cannot determine a transform.
    #[error("rank-deficient configuration: {0}")]
    RankDeficient(String),
    /// A matrix factorization or solve failed numerically.
    #[error("numerical failure: {0}")]
    Numeric(String),
    /// Grid construction rejected a cloud (non-finite coordinates).
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    /// Correspondence file I/O failed.
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// Correspondence file is malformed.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
