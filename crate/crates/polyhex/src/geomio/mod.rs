//! Mesh and point-cloud I/O, Poisson-disk surface sampling, and the
//! synthetic paired-shape generator.
//!
//! File formats are deliberately small: an OBJ subset (`v`/`f` records) for
//! meshes, an ASCII `pcd` format for clouds, a `prov` sidecar for sample
//! provenance, and a JSON shape spec for the generator.

pub mod cloud;
pub mod mesh;
pub mod poisson;
pub mod synth;

pub use cloud::{ConditionCloud, PolycubeCloud, RawCloud};
pub use mesh::TriMesh;
pub use poisson::{poisson_disk_sample, SampleStats};
pub use synth::{synth_pair, ShapeSpec};

use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum GeomError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad mesh: {0}")]
    BadMesh(String),
    #[error("bad shape spec: {0}")]
    BadSpec(String),
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}
