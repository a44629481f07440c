//! Polycube point-cloud generation and hexahedral meshing.
//!
//! The crate has two halves that meet at a point cloud:
//!
//! * A conditional diffusion model (`nn`, `diffusion`, `dualnet`) that maps a
//!   surface sample of a CAD-like shape to an axis-aligned polycube point
//!   cloud. The denoiser and condition encoder are two-stream transformers:
//!   a fixed-size latent token set does all self-attention work, and the
//!   point cloud is only touched by cross-attention reads and writes, so the
//!   per-call cost is linear in the number of points.
//! * A geometric pipeline (`geomio`, `cleanup`, `register`, `polycube`,
//!   `hexgen`) that turns a polycube cloud back into an all-hex mesh of the
//!   original surface: outlier removal, similarity + nonrigid registration
//!   onto the input samples, plane clustering and integer-grid snapping,
//!   parity voxelization, hex extraction, boundary anchoring, Laplacian
//!   smoothing, optional pillowing, and scaled-Jacobian quality reporting.
//!
//! `pipeline` chains the stages behind one config; the `polyhex` binary in
//! the sibling crate exposes each stage as a subcommand.
//!
//! Everything is f64. Training-scale runs on this code are desk scale by
//! design: the numerics are written for correctness and testability first,
//! with cache-friendly kernels so the resolution benchmarks stay honest.

/// Channels per generated point: position xyz followed by normal xyz.
pub const POINT_CHANNELS: usize = 6;

pub mod cleanup;
pub mod diffusion;
pub mod dualnet;
pub mod geomio;
pub mod hexgen;
pub mod nn;
pub mod pipeline;
pub mod polycube;
pub mod register;
pub mod spatial;
