use crate::error::{Error, Result};
use crate::forward::CompositeModel;

use super::ProxWorkspace;

#[derive(Debug, Clone)]
pub struct FistaResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `U` of the accepted iterate after each iteration.
    pub objective: Vec<f64>,
}

/// MAP estimate by monotone FISTA with step `1 / L_f`.
pub fn map_fista(
    model: &CompositeModel,
    x0: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<FistaResult> {
    let d = model.dim();
    if x0.len() != d {
        return Err(Error::Input(format!(
            "initial point has length {}, model dimension is {d}",
            x0.len()
        )));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Input("FISTA needs max_iter >= 1 and tol > 0".into()));
    }
    let lf = model.lipschitz_f();
    let step = if lf > 0.0 { 1.0 / lf } else { 1.0 };
    let mut ws = ProxWorkspace::default();
    let mut x = x0.to_vec();
    let mut u_x = model.potential(&x);
    let mut y = x.clone();
    let mut z = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut t = 1.0_f64;
    let mut objective = Vec::new();
    for k in 0..max_iter {
        model.smooth.grad_into(&y, &mut grad);
        for (g, yv) in grad.iter_mut().zip(&y) {
            *g = yv - step * *g;
        }
        model.nonsmooth.prox_into(&grad, step, &mut z, &mut ws);
        let u_z = model.potential(&z);
        if u_z.is_nan() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                iteration: k,
                message: "FISTA iterate is not finite".into(),
                last_state: Some(x),
            });
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let accept = u_z <= u_x;
        for i in 0..d {
            let x_new = if accept { z[i] } else { x[i] };
            y[i] = x_new + (t / t_next) * (z[i] - x_new) + ((t - 1.0) / t_next) * (x_new - x[i]);
            x[i] = x_new;
        }
        let u_new = if accept { u_z } else { u_x };
        objective.push(u_new);
        let done = u_x.is_finite()
            && ((u_x - u_new).abs() <= tol * u_new.abs().max(f64::MIN_POSITIVE) || u_x == u_new);
        u_x = u_new;
        t = t_next;
        if done {
            return Ok(FistaResult {
                x,
                iterations: k + 1,
                converged: true,
                objective,
            });
        }
    }
    Ok(FistaResult {
        x,
        iterations: max_iter,
        converged: false,
        objective,
    })
}
