//! Coherent Point Drift: non-rigid refinement of a coarse alignment.
//!
//! The moving cloud `Y` (the polycube points) is deformed toward the fixed
//! cloud `X` (the surface samples) by a Gaussian-process displacement
//! field: `T(Y) = Y + G W`, where `G` is the Gaussian kernel over `Y` and
//! `W` the learned coefficients. An EM loop alternates soft nearest point
//! assignments (with a uniform outlier component weighted by `w_out`)
//! against a regularized closed-form solve for `W`. Both clouds are
//! normalized to zero mean and unit RMS radius internally; the deformed
//! output is returned in the fixed cloud's original frame.

use std::f64::consts::PI;

use nalgebra::{DMatrix, MatrixXx3, Vector3};

use super::RegisterError;

/// Floor for the Gaussian variance; reaching it means exact overlap.
const SIGMA2_FLOOR: f64 = 1e-12;

/// EM parameters.
#[derive(Debug, Clone, Copy)]
pub struct CpdConfig {
    /// Kernel width of the displacement field, in normalized units.
    pub beta: f64,
    /// Regularization weight on the displacement field's energy.
    pub lambda: f64,
    /// Prior probability that a fixed-cloud point is an outlier, in [0, 1).
    pub w_out: f64,
    /// Maximum EM iterations.
    pub max_iters: usize,
    /// Stop when the relative change of sigma2 falls below this.
    pub tol: f64,
}

impl Default for CpdConfig {
    fn default() -> Self {
        CpdConfig { beta: 2.0, lambda: 3.0, w_out: 0.1, max_iters: 50, tol: 1e-5 }
    }
}

impl CpdConfig {
    fn validate(&self) -> Result<(), RegisterError> {
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(RegisterError::BadArgument(format!(
                "beta must be finite and positive, got {}",
                self.beta
            )));
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(RegisterError::BadArgument(format!(
                "lambda must be finite and positive, got {}",
                self.lambda
            )));
        }
        if !self.w_out.is_finite() || !(0.0..1.0).contains(&self.w_out) {
            return Err(RegisterError::BadArgument(format!(
                "w_out must lie in [0, 1), got {}",
                self.w_out
            )));
        }
        if self.max_iters == 0 {
            return Err(RegisterError::BadArgument("max_iters must be at least 1".into()));
        }
        if !self.tol.is_finite() || self.tol < 0.0 {
            return Err(RegisterError::BadArgument(format!(
                "tol must be finite and non-negative, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Converged EM state, all in the internal normalized frame.
#[derive(Debug, Clone)]
pub struct CpdState {
    pub beta: f64,
    pub lambda: f64,
    pub w_out: f64,
    /// Displacement coefficients, one row per moving point.
    pub w: MatrixXx3<f64>,
    /// Final Gaussian variance of the mixture.
    pub sigma2: f64,
    /// Kernel over the normalized moving cloud; symmetric, unit diagonal.
    pub g: DMatrix<f64>,
    /// EM iterations actually run.
    pub iterations: usize,
    /// True when the run stopped on tolerance or variance floor rather
    /// than on the iteration cap.
    pub converged: bool,
    /// Penalized negative log-likelihood at the start of each iteration;
    /// non-increasing up to floating-point noise.
    pub nll_trace: Vec<f64>,
}

/// Deforms `src` onto `dst`; returns the deformed points (in `dst`'s
/// frame) and the EM state.
pub fn cpd_nonrigid(
    src: &[[f64; 3]],
    dst: &[[f64; 3]],
    cfg: &CpdConfig,
) -> Result<(Vec<[f64; 3]>, CpdState), RegisterError> {
    cfg.validate()?;
    if src.is_empty() || dst.is_empty() {
        return Err(RegisterError::BadArgument(format!(
            "both clouds must be nonempty, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    let m = src.len();
    let n = dst.len();
    let (y, _mu_y, _scale_y) = normalize(src, "moving cloud")?;
    let (x, mu_x, scale_x) = normalize(dst, "fixed cloud")?;

    // Gaussian kernel over the moving cloud.
    let inv_2b2 = 1.0 / (2.0 * cfg.beta * cfg.beta);
    let g = DMatrix::from_fn(m, m, |i, j| {
        let d2 = (y.row(i) - y.row(j)).norm_squared();
        (-d2 * inv_2b2).exp()
    });

    // Initial variance: mean squared distance over all pairs, per axis.
    let sum_y: Vector3<f64> = y.row_sum().transpose();
    let sum_x: Vector3<f64> = x.row_sum().transpose();
    let sq_y: f64 = y.iter().map(|v| v * v).sum();
    let sq_x: f64 = x.iter().map(|v| v * v).sum();
    let pair_sq = n as f64 * sq_y + m as f64 * sq_x - 2.0 * sum_y.dot(&sum_x);
    let mut sigma2 = pair_sq / (3 * m * n) as f64;
    if !(sigma2 > 0.0) {
        sigma2 = SIGMA2_FLOOR;
    }

    let mut w = MatrixXx3::zeros(m);
    let mut deformed = y.clone();
    let mut p1 = vec![0.0; m];
    let mut pt1 = vec![0.0; n];
    let mut px = MatrixXx3::zeros(m);
    let mut weights = vec![0.0; m];
    let mut nll_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..cfg.max_iters {
        // E-step: soft assignments under the current deformation.
        let c_out = (2.0 * PI * sigma2).powf(1.5) * cfg.w_out / (1.0 - cfg.w_out) * m as f64
            / n as f64;
        p1.iter_mut().for_each(|v| *v = 0.0);
        px.fill(0.0);
        let mut np = 0.0;
        let mut nll = 0.0;
        for j in 0..n {
            let xj = [x[(j, 0)], x[(j, 1)], x[(j, 2)]];
            let mut den = c_out;
            for i in 0..m {
                let dx = xj[0] - deformed[(i, 0)];
                let dy = xj[1] - deformed[(i, 1)];
                let dz = xj[2] - deformed[(i, 2)];
                let e = (-(dx * dx + dy * dy + dz * dz) / (2.0 * sigma2)).exp();
                weights[i] = e;
                den += e;
            }
            let den = den.max(f64::MIN_POSITIVE);
            nll -= den.ln();
            let pt1_j = (den - c_out) / den;
            pt1[j] = pt1_j;
            np += pt1_j;
            for i in 0..m {
                let p = weights[i] / den;
                p1[i] += p;
                px[(i, 0)] += p * xj[0];
                px[(i, 1)] += p * xj[1];
                px[(i, 2)] += p * xj[2];
            }
        }
        nll += n as f64 * (1.5 * (2.0 * PI * sigma2).ln() + (m as f64 / (1.0 - cfg.w_out)).ln());
        // Penalized objective: add the field energy (lambda/2) tr(W' G W).
        // G W is exactly the current displacement.
        let displacement = &deformed - &y;
        nll += 0.5 * cfg.lambda * displacement.component_mul(&w).sum();
        nll_trace.push(nll);

        if np <= 0.0 {
            return Err(RegisterError::Numeric(
                "all fixed points assigned to the outlier component; clouds do not overlap"
                    .into(),
            ));
        }

        // M-step: (diag(P1) G + lambda sigma2 I) W = P X - diag(P1) Y.
        let mut a = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] = p1[i] * g[(i, j)];
            }
            a[(i, i)] += cfg.lambda * sigma2;
        }
        let mut rhs = px.clone();
        for i in 0..m {
            for c in 0..3 {
                rhs[(i, c)] -= p1[i] * y[(i, c)];
            }
        }
        w = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| RegisterError::Numeric("CPD linear solve failed".into()))?;
        deformed = &y + &g * &w;

        // Variance from the weighted residuals under the new deformation.
        let mut xx = 0.0;
        for j in 0..n {
            xx += pt1[j] * x.row(j).norm_squared();
        }
        let xt = px.component_mul(&deformed).sum();
        let mut tt = 0.0;
        for i in 0..m {
            tt += p1[i] * deformed.row(i).norm_squared();
        }
        let new_sigma2 = (xx - 2.0 * xt + tt) / (3.0 * np);
        iterations = iter + 1;
        if !(new_sigma2 > SIGMA2_FLOOR) {
            // Exact overlap: the mixture collapsed, nothing left to fit.
            sigma2 = new_sigma2.max(SIGMA2_FLOOR);
            converged = true;
            break;
        }
        let rel = (new_sigma2 - sigma2).abs() / sigma2;
        sigma2 = new_sigma2;
        if rel < cfg.tol {
            converged = true;
            break;
        }
    }

    // Back to the fixed cloud's frame.
    let out: Vec<[f64; 3]> = (0..m)
        .map(|i| {
            [
                deformed[(i, 0)] * scale_x + mu_x[0],
                deformed[(i, 1)] * scale_x + mu_x[1],
                deformed[(i, 2)] * scale_x + mu_x[2],
            ]
        })
        .collect();
    let state = CpdState {
        beta: cfg.beta,
        lambda: cfg.lambda,
        w_out: cfg.w_out,
        w,
        sigma2,
        g,
        iterations,
        converged,
        nll_trace,
    };
    Ok((out, state))
}

/// Zero-mean, unit-RMS-radius copy of a cloud plus the undo parameters.
fn normalize(
    pts: &[[f64; 3]],
    label: &str,
) -> Result<(MatrixXx3<f64>, [f64; 3], f64), RegisterError> {
    let n = pts.len() as f64;
    let mut mu = [0.0; 3];
    for p in pts {
        for a in 0..3 {
            mu[a] += p[a];
        }
    }
    for a in 0..3 {
        mu[a] /= n;
    }
    let ms: f64 = pts
        .iter()
        .map(|p| {
            let dx = p[0] - mu[0];
            let dy = p[1] - mu[1];
            let dz = p[2] - mu[2];
            dx * dx + dy * dy + dz * dz
        })
        .sum::<f64>()
        / n;
    let scale = ms.sqrt();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(RegisterError::RankDeficient(format!(
            "{label} has zero RMS radius"
        )));
    }
    let mat = MatrixXx3::from_fn(pts.len(), |i, c| (pts[i][c] - mu[c]) / scale);
    Ok((mat, mu, scale))
}
