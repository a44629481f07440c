//! Diffusion-frame normalization.
//!
//! Diffusion runs in a frame where the condition cloud's bounding-box long
//! axis spans [-1, 1]; raw CAD units are arbitrary and would mismatch the
//! unit-variance noise. The transform is uniform scale plus translation, so
//! normal channels are unaffected and only positions are mapped.

use crate::nn::tensor::Tensor;

use super::DiffusionError;

/// Invertible map between world positions and the diffusion frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub center: [f64; 3],
    /// World-to-frame scale; frame = (world - center) * scale.
    pub scale: f64,
}

impl Normalizer {
    /// Fits the bounding box of `positions`: center at the box center,
    /// scale chosen so the longest axis maps to exactly [-1, 1].
    pub fn fit(positions: &[[f64; 3]]) -> Result<Self, DiffusionError> {
        if positions.is_empty() {
            return Err(DiffusionError::DegenerateBounds);
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(DiffusionError::DegenerateBounds);
        }
        Ok(Normalizer {
            center: [
                0.5 * (lo[0] + hi[0]),
                0.5 * (lo[1] + hi[1]),
                0.5 * (lo[2] + hi[2]),
            ],
            scale: 2.0 / extent,
        })
    }

    pub fn to_frame(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.center[0]) * self.scale,
            (p[1] - self.center[1]) * self.scale,
            (p[2] - self.center[2]) * self.scale,
        ]
    }

    pub fn to_world(&self, p: [f64; 3]) -> [f64; 3] {
        [
            p[0] / self.scale + self.center[0],
            p[1] / self.scale + self.center[1],
            p[2] / self.scale + self.center[2],
        ]
    }

    /// Maps the first three channels of every row into the frame; any
    /// further channels (normals) pass through unchanged.
    pub fn cloud_to_frame(&self, cloud: &Tensor) -> Tensor {
        self.map_cloud(cloud, true)
    }

    /// Inverse of [`Self::cloud_to_frame`].
    pub fn cloud_to_world(&self, cloud: &Tensor) -> Tensor {
        self.map_cloud(cloud, false)
    }

    fn map_cloud(&self, cloud: &Tensor, forward: bool) -> Tensor {
        let c = cloud.cols();
        assert!(c >= 3, "cloud must have xyz channels");
        let mut out = cloud.clone();
        let rows = out.rows();
        let data = out.data_mut();
        for i in 0..rows {
            let p = [data[i * c], data[i * c + 1], data[i * c + 2]];
            let q = if forward {
                self.to_frame(p)
            } else {
                self.to_world(p)
            };
            data[i * c] = q[0];
            data[i * c + 1] = q[1];
            data[i * c + 2] = q[2];
        }
        out
    }
}
