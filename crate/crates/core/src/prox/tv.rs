use crate::error::{Error, Result};
use crate::image::ImageField;

use super::{NonSmoothTerm, ProxWorkspace};

const DUAL_STEP: f64 = 0.125;

/// Isotropic total variation with forward differences and a reflecting
/// boundary (the last difference in each direction is zero).
#[derive(Debug, Clone)]
pub struct TotalVariation {
    width: usize,
    height: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl TotalVariation {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input("TV image dimensions must be positive".into()));
        }
        Ok(Self {
            width,
            height,
            max_iter: 200,
            tol: 1e-5,
        })
    }

    pub fn with_solver(mut self, max_iter: usize, tol: f64) -> Result<Self> {
        if max_iter == 0 || !(tol > 0.0) {
            return Err(Error::Input(
                "Chambolle needs max_iter >= 1 and tol > 0".into(),
            ));
        }
        self.max_iter = max_iter;
        self.tol = tol;
        Ok(self)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// `sum_ij |(grad x)_ij|_2`.
pub fn total_variation(x: &[f64], width: usize, height: usize) -> f64 {
    let mut tv = 0.0;
    for i in 0..height {
        let row = &x[i * width..(i + 1) * width];
        for j in 0..width {
            let gx = if j + 1 < width {
                row[j + 1] - row[j]
            } else {
                0.0
            };
            let gy = if i + 1 < height {
                x[(i + 1) * width + j] - row[j]
            } else {
                0.0
            };
            tv += (gx * gx + gy * gy).sqrt();
        }
    }
    tv
}

/// Negative adjoint of the forward-difference gradient.
fn divergence(p: &[f64], width: usize, height: usize, out: &mut [f64]) {
    let d = width * height;
    let (px, py) = p.split_at(d);
    for i in 0..height {
        for j in 0..width {
            let k = i * width + j;
            let mut v = 0.0;
            if j + 1 < width {
                v += px[k];
            }
            if j > 0 {
                v -= px[k - 1];
            }
            if i + 1 < height {
                v += py[k];
            }
            if i > 0 {
                v -= py[k - width];
            }
            out[k] = v;
        }
    }
}

fn gradient(u: &[f64], width: usize, height: usize, out: &mut [f64]) {
    let d = width * height;
    let (gx, gy) = out.split_at_mut(d);
    for i in 0..height {
        for j in 0..width {
            let k = i * width + j;
            gx[k] = if j + 1 < width { u[k + 1] - u[k] } else { 0.0 };
            gy[k] = if i + 1 < height {
                u[k + width] - u[k]
            } else {
                0.0
            };
        }
    }
}

/// Outcome of a Chambolle solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChambolleReport {
    pub iterations: usize,
    pub converged: bool,
    pub relative_gap: f64,
}

/// Chambolle's dual projection iteration for
/// `argmin_y theta TV(y) + |x - y|^2 / 2`, warm-started from `ws.dual`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn chambolle(
    x: &[f64],
    width: usize,
    height: usize,
    theta: f64,
    max_iter: usize,
    tol: f64,
    out: &mut [f64],
    ws: &mut ProxWorkspace,
) -> ChambolleReport {
    let d = width * height;
    if theta == 0.0 {
        out.copy_from_slice(x);
        ws.last_iterations = 0;
        ws.last_converged = true;
        return ChambolleReport {
            iterations: 0,
            converged: true,
            relative_gap: 0.0,
        };
    }
    if ws.dual.len() != 2 * d {
        ws.dual = vec![0.0; 2 * d];
    }
    ws.buf.resize(3 * d, 0.0);
    let (divp, q) = ws.buf.split_at_mut(d);
    let p = &mut ws.dual;
    let inv_theta = 1.0 / theta;

    let mut iterations = 0;
    let mut converged = false;
    let mut rel_gap;
    loop {
        divergence(p, width, height, divp);
        // v = div p - x / theta; q = grad v = -grad(u) / theta
        for (dv, &xv) in divp.iter_mut().zip(x) {
            *dv -= xv * inv_theta;
        }
        gradient(divp, width, height, q);
        // Duality gap of the current dual point, scaled by theta^2.
        let (qx, qy) = q.split_at(d);
        let (px, py) = p.split_at(d);
        let mut tv = 0.0;
        let mut inner = 0.0;
        for k in 0..d {
            tv += (qx[k] * qx[k] + qy[k] * qy[k]).sqrt();
            inner += qx[k] * px[k] + qy[k] * py[k];
        }
        let mut div_sq = 0.0;
        for (dv, &xv) in divp.iter().zip(x) {
            let t = dv + xv * inv_theta;
            div_sq += t * t;
        }
        let gap = (tv - inner).max(0.0);
        let primal = tv + 0.5 * div_sq;
        rel_gap = if primal > 0.0 { gap / primal } else { 0.0 };
        if rel_gap <= tol {
            converged = true;
            break;
        }
        if iterations == max_iter {
            break;
        }
        let (px, py) = p.split_at_mut(d);
        for k in 0..d {
            let norm = (qx[k] * qx[k] + qy[k] * qy[k]).sqrt();
            let denom = 1.0 + DUAL_STEP * norm;
            px[k] = (px[k] + DUAL_STEP * qx[k]) / denom;
            py[k] = (py[k] + DUAL_STEP * qy[k]) / denom;
        }
        iterations += 1;
    }
    // divp currently holds div p - x/theta for the final p.
    for k in 0..d {
        out[k] = -theta * divp[k];
    }
    ws.last_iterations = iterations;
    ws.last_converged = converged;
    ChambolleReport {
        iterations,
        converged,
        relative_gap: rel_gap,
    }
}

impl NonSmoothTerm for TotalVariation {
    fn eval(&self, x: &[f64]) -> f64 {
        total_variation(x, self.width, self.height)
    }

    fn prox_into(&self, x: &[f64], theta: f64, out: &mut [f64], ws: &mut ProxWorkspace) {
        chambolle(
            x,
            self.width,
            self.height,
            theta,
            self.max_iter,
            self.tol,
            out,
            ws,
        );
    }

    fn lipschitz(&self) -> Option<f64> {
        // |grad| <= sqrt(8) for the forward-difference operator.
        Some(8f64.sqrt())
    }

    fn describe(&self) -> String {
        format!("tv({}x{})", self.width, self.height)
    }
}

/// Prox of `theta * TV` from a cold start.
pub fn prox_tv_chambolle(
    x: &ImageField,
    theta: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(ImageField, ChambolleReport)> {
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(
            "TV prox input contains non-finite pixels".into(),
        ));
    }
    if theta.is_nan() || theta < 0.0 {
        return Err(Error::Input(format!(
            "TV prox parameter must be >= 0, got {theta}"
        )));
    }
    if max_iter == 0 || !(tol > 0.0) {
        return Err(Error::Input(
            "Chambolle needs max_iter >= 1 and tol > 0".into(),
        ));
    }
    let mut out = vec![0.0; x.len()];
    let report = chambolle(
        &x.data,
        x.width,
        x.height,
        theta,
        max_iter,
        tol,
        &mut out,
        &mut ProxWorkspace::default(),
    );
    Ok((
        ImageField {
            data: out,
            width: x.width,
            height: x.height,
        },
        report,
    ))
}
