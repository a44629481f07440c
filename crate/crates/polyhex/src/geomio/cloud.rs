//! Point-cloud containers and the ASCII `pcd`/`prov` file formats.
//!
//! `pcd` carries coordinates only: a header `pcd <count> <channels>` with
//! channels 3 (positions) or 6 (positions + normals), then one point per
//! line. Sample provenance travels in a separate `prov` sidecar so plain
//! clouds stay trivially consumable.

use std::fmt::Write as _;
use std::path::Path;

use crate::nn::Tensor;
use crate::POINT_CHANNELS;

use super::mesh::TriMesh;
use super::GeomError;

/// Unit-length tolerance for stored normals.
pub const NORMAL_TOL: f64 = 1e-6;
/// Barycentric / provenance reconstruction tolerance.
pub const BARY_TOL: f64 = 1e-9;

/// Untyped cloud: `count` rows of `channels` values.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCloud {
    channels: usize,
    data: Vec<f64>,
}

impl RawCloud {
    pub fn new(channels: usize, data: Vec<f64>) -> Result<Self, GeomError> {
        if channels != 3 && channels != POINT_CHANNELS {
            return Err(GeomError::BadArgument(format!(
                "cloud channels must be 3 or {POINT_CHANNELS}, got {channels}"
            )));
        }
        if data.len() % channels != 0 {
            return Err(GeomError::BadArgument(format!(
                "{} values do not divide into {channels}-channel points",
                data.len()
            )));
        }
        Ok(RawCloud { channels, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(vec![self.count(), self.channels], self.data.clone())
            .expect("row-count times channels matches data length")
    }
}

/// Writes the `pcd` format; exact round-trip (shortest f64 representation).
pub fn save_cloud(cloud: &RawCloud, path: &Path) -> Result<(), GeomError> {
    let mut out = String::new();
    writeln!(out, "pcd {} {}", cloud.count(), cloud.channels()).expect("string write");
    for i in 0..cloud.count() {
        let row = cloud.row(i);
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            write!(out, "{v}").expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_cloud(path: &Path) -> Result<RawCloud, GeomError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or(GeomError::Parse {
        line: 1,
        msg: "missing pcd header".into(),
    })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 3 || toks[0] != "pcd" {
        return Err(GeomError::Parse {
            line: 1,
            msg: format!("expected \"pcd <count> <channels>\", got {header:?}"),
        });
    }
    let count: usize = toks[1].parse().map_err(|_| GeomError::Parse {
        line: 1,
        msg: format!("bad count {:?}", toks[1]),
    })?;
    let channels: usize = toks[2].parse().map_err(|_| GeomError::Parse {
        line: 1,
        msg: format!("bad channel count {:?}", toks[2]),
    })?;
    if channels != 3 && channels != POINT_CHANNELS {
        return Err(GeomError::Parse {
            line: 1,
            msg: format!("channels must be 3 or {POINT_CHANNELS}, got {channels}"),
        });
    }

    let mut data = Vec::with_capacity(count * channels);
    let mut rows = 0usize;
    for (ln, raw) in lines {
        let line = ln + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let vals: Vec<&str> = raw.split_whitespace().collect();
        if vals.len() != channels {
            return Err(GeomError::Parse {
                line,
                msg: format!("expected {channels} values, got {}", vals.len()),
            });
        }
        for v in vals {
            data.push(v.parse().map_err(|_| GeomError::Parse {
                line,
                msg: format!("bad number {v:?}"),
            })?);
        }
        rows += 1;
    }
    if rows != count {
        return Err(GeomError::Parse {
            line: text.lines().count(),
            msg: format!("header says {count} points, file has {rows}"),
        });
    }
    RawCloud::new(channels, data)
}

/// Surface sample of a mesh with per-point provenance: the source face and
/// barycentric weights that reproduce each point.
#[derive(Debug, Clone)]
pub struct ConditionCloud {
    points: Vec<[f64; 3]>,
    face_id: Vec<usize>,
    bary: Vec<[f64; 3]>,
}

impl ConditionCloud {
    pub fn new(
        points: Vec<[f64; 3]>,
        face_id: Vec<usize>,
        bary: Vec<[f64; 3]>,
    ) -> Result<Self, GeomError> {
        if points.len() != face_id.len() || points.len() != bary.len() {
            return Err(GeomError::BadArgument(format!(
                "length mismatch: {} points, {} face ids, {} bary rows",
                points.len(),
                face_id.len(),
                bary.len()
            )));
        }
        for (i, b) in bary.iter().enumerate() {
            let sum = b[0] + b[1] + b[2];
            if b.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > BARY_TOL {
                return Err(GeomError::BadArgument(format!(
                    "bary row {i} = {b:?} is not a convex combination"
                )));
            }
        }
        Ok(ConditionCloud {
            points,
            face_id,
            bary,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn face_id(&self) -> &[usize] {
        &self.face_id
    }

    pub fn bary(&self) -> &[[f64; 3]] {
        &self.bary
    }

    /// Checks that each point reproduces from its provenance on `mesh`.
    pub fn validate_against(&self, mesh: &TriMesh) -> Result<(), GeomError> {
        for i in 0..self.len() {
            if self.face_id[i] >= mesh.faces().len() {
                return Err(GeomError::BadArgument(format!(
                    "point {i} references face {} of {}",
                    self.face_id[i],
                    mesh.faces().len()
                )));
            }
            let p = mesh.point_on_face(self.face_id[i], self.bary[i]);
            let d = (0..3)
                .map(|k| (p[k] - self.points[i][k]).abs())
                .fold(0.0_f64, f64::max);
            if d > BARY_TOL {
                return Err(GeomError::BadArgument(format!(
                    "point {i} is {d:.3e} from its provenance position"
                )));
            }
        }
        Ok(())
    }

    pub fn to_raw(&self) -> RawCloud {
        let data = self.points.iter().flatten().copied().collect();
        RawCloud::new(3, data).expect("3-channel data")
    }

    /// Positions as an `[n, 3]` tensor for the condition encoder.
    pub fn to_tensor(&self) -> Tensor {
        self.to_raw().to_tensor()
    }

    /// Writes positions to `points_path` (pcd) and provenance to
    /// `prov_path` (`prov <count>`, then `face b0 b1 b2` per line).
    pub fn save(&self, points_path: &Path, prov_path: &Path) -> Result<(), GeomError> {
        save_cloud(&self.to_raw(), points_path)?;
        let mut out = String::new();
        writeln!(out, "prov {}", self.len()).expect("string write");
        for i in 0..self.len() {
            writeln!(
                out,
                "{} {} {} {}",
                self.face_id[i], self.bary[i][0], self.bary[i][1], self.bary[i][2]
            )
            .expect("string write");
        }
        std::fs::write(prov_path, out)?;
        Ok(())
    }

    pub fn load(points_path: &Path, prov_path: &Path) -> Result<Self, GeomError> {
        let raw = load_cloud(points_path)?;
        if raw.channels() != 3 {
            return Err(GeomError::BadArgument(format!(
                "condition cloud must have 3 channels, got {}",
                raw.channels()
            )));
        }
        let points: Vec<[f64; 3]> = (0..raw.count())
            .map(|i| {
                let r = raw.row(i);
                [r[0], r[1], r[2]]
            })
            .collect();

        let text = std::fs::read_to_string(prov_path)?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(GeomError::Parse {
            line: 1,
            msg: "missing prov header".into(),
        })?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 2 || toks[0] != "prov" {
            return Err(GeomError::Parse {
                line: 1,
                msg: format!("expected \"prov <count>\", got {header:?}"),
            });
        }
        let count: usize = toks[1].parse().map_err(|_| GeomError::Parse {
            line: 1,
            msg: format!("bad count {:?}", toks[1]),
        })?;
        if count != points.len() {
            return Err(GeomError::Parse {
                line: 1,
                msg: format!("prov has {count} rows, cloud has {}", points.len()),
            });
        }

        let mut face_id = Vec::with_capacity(count);
        let mut bary = Vec::with_capacity(count);
        for (ln, raw_line) in lines {
            let line = ln + 1;
            if raw_line.trim().is_empty() {
                continue;
            }
            let vals: Vec<&str> = raw_line.split_whitespace().collect();
            if vals.len() != 4 {
                return Err(GeomError::Parse {
                    line,
                    msg: format!("expected \"face b0 b1 b2\", got {raw_line:?}"),
                });
            }
            face_id.push(vals[0].parse().map_err(|_| GeomError::Parse {
                line,
                msg: format!("bad face index {:?}", vals[0]),
            })?);
            let mut b = [0.0; 3];
            for k in 0..3 {
                b[k] = vals[k + 1].parse().map_err(|_| GeomError::Parse {
                    line,
                    msg: format!("bad number {:?}", vals[k + 1]),
                })?;
            }
            bary.push(b);
        }
        if face_id.len() != count {
            return Err(GeomError::Parse {
                line: text.lines().count(),
                msg: format!("prov header says {count} rows, file has {}", face_id.len()),
            });
        }
        ConditionCloud::new(points, face_id, bary)
    }
}

/// Generated polycube sample: positions plus outward unit normals.
#[derive(Debug, Clone)]
pub struct PolycubeCloud {
    points: Vec<[f64; 3]>,
    normals: Vec<[f64; 3]>,
}

impl PolycubeCloud {
    pub fn new(points: Vec<[f64; 3]>, normals: Vec<[f64; 3]>) -> Result<Self, GeomError> {
        if points.len() != normals.len() {
            return Err(GeomError::BadArgument(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        for (i, n) in normals.iter().enumerate() {
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if (len - 1.0).abs() > NORMAL_TOL {
                return Err(GeomError::BadArgument(format!(
                    "normal {i} has length {len}"
                )));
            }
        }
        Ok(PolycubeCloud { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn normals(&self) -> &[[f64; 3]] {
        &self.normals
    }

    pub fn to_raw(&self) -> RawCloud {
        let mut data = Vec::with_capacity(self.len() * POINT_CHANNELS);
        for i in 0..self.len() {
            data.extend_from_slice(&self.points[i]);
            data.extend_from_slice(&self.normals[i]);
        }
        RawCloud::new(POINT_CHANNELS, data).expect("6-channel data")
    }

    /// `[m, 6]` tensor: xyz then normal per row.
    pub fn to_tensor(&self) -> Tensor {
        self.to_raw().to_tensor()
    }

    pub fn from_raw(raw: &RawCloud) -> Result<Self, GeomError> {
        if raw.channels() != POINT_CHANNELS {
            return Err(GeomError::BadArgument(format!(
                "polycube cloud needs {POINT_CHANNELS} channels, got {}",
                raw.channels()
            )));
        }
        let mut points = Vec::with_capacity(raw.count());
        let mut normals = Vec::with_capacity(raw.count());
        for i in 0..raw.count() {
            let r = raw.row(i);
            points.push([r[0], r[1], r[2]]);
            normals.push([r[3], r[4], r[5]]);
        }
        PolycubeCloud::new(points, normals)
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self, GeomError> {
        if t.shape().len() != 2 || t.cols() != POINT_CHANNELS {
            return Err(GeomError::BadArgument(format!(
                "expected [m, {POINT_CHANNELS}] tensor, got {:?}",
                t.shape()
            )));
        }
        let raw = RawCloud::new(POINT_CHANNELS, t.data().to_vec())?;
        PolycubeCloud::from_raw(&raw)
    }
}
