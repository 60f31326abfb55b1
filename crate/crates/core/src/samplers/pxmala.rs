use rand::Rng;

use super::{
    chain_rng, draw_noise, drift_into, step_cap, ChainOutput, ChainRng, KeptState, Recorder,
    SamplerConfig,
};
use crate::error::{Error, Result};
use crate::forward::CompositeModel;
use crate::prox::{envelope_from_prox, ProxWorkspace};
use crate::special::dist_sq;

/// Everything the proposal needs at a point: `U`, `grad f` and the prox.
struct Point {
    x: Vec<f64>,
    u: f64,
    grad: Vec<f64>,
    prox: Vec<f64>,
}

impl Point {
    fn empty(d: usize) -> Self {
        Self {
            x: vec![0.0; d],
            u: 0.0,
            grad: vec![0.0; d],
            prox: vec![0.0; d],
        }
    }

    /// Fills `u`; if finite also `grad` and `prox`. Returns whether finite.
    fn evaluate(&mut self, model: &CompositeModel, lambda: f64, ws: &mut ProxWorkspace) -> bool {
        let g = model.nonsmooth.eval(&self.x);
        if !g.is_finite() {
            self.u = f64::INFINITY;
            return false;
        }
        let f = model.smooth.eval_grad(&self.x, &mut self.grad);
        self.u = f + g;
        if !self.u.is_finite() {
            return false;
        }
        model
            .nonsmooth
            .prox_into(&self.x, lambda, &mut self.prox, ws);
        true
    }

    fn mean(&self, lambda: f64, gamma: f64, out: &mut [f64]) {
        drift_into(&self.x, &self.grad, &self.prox, lambda, gamma, out);
    }
}

/// `log [pi(y) q(x|y) / (pi(x) q(y|x))]`, with `-inf` when `U(y) = inf`.
fn log_ratio(cur: &Point, prop: &Point, lambda: f64, gamma: f64, mean_buf: &mut [f64]) -> f64 {
    if !prop.u.is_finite() {
        return f64::NEG_INFINITY;
    }
    cur.mean(lambda, gamma, mean_buf);
    let fwd = dist_sq(&prop.x, mean_buf);
    prop.mean(lambda, gamma, mean_buf);
    let bwd = dist_sq(&cur.x, mean_buf);
    (cur.u - prop.u) + (fwd - bwd) / (4.0 * gamma)
}

/// Log Metropolis-Hastings ratio for moving from `x` to `x_prop`.
pub fn pxmala_log_ratio(
    model: &CompositeModel,
    lambda: f64,
    gamma: f64,
    x: &[f64],
    x_prop: &[f64],
) -> Result<f64> {
    let mut ws = ProxWorkspace::default();
    let mut cur = Point::empty(x.len());
    cur.x.copy_from_slice(x);
    if !cur.evaluate(model, lambda, &mut ws) {
        return Err(Error::Input(
            "Px-MALA needs a state with finite potential".into(),
        ));
    }
    let mut prop = Point::empty(x.len());
    prop.x.copy_from_slice(x_prop);
    prop.evaluate(model, lambda, &mut ws);
    let mut buf = vec![0.0; x.len()];
    Ok(log_ratio(&cur, &prop, lambda, gamma, &mut buf))
}

/// One Px-MALA transition. Returns the new state and whether the proposal
/// was accepted.
pub fn pxmala_step(
    x: &[f64],
    model: &CompositeModel,
    lambda: f64,
    gamma: f64,
    rng: &mut ChainRng,
) -> Result<(Vec<f64>, bool)> {
    let d = x.len();
    if d != model.dim() {
        return Err(Error::Input("state has the wrong dimension".into()));
    }
    let mut ws = ProxWorkspace::default();
    let mut cur = Point::empty(d);
    cur.x.copy_from_slice(x);
    if !cur.evaluate(model, lambda, &mut ws) {
        return Err(Error::Input(
            "Px-MALA needs a state with finite potential".into(),
        ));
    }
    let mut prop = Point::empty(d);
    let mut buf = vec![0.0; d];
    let accepted = transition(
        model, lambda, gamma, rng, &mut cur, &mut prop, &mut buf, &mut ws,
    )
    .0;
    Ok((cur.x, accepted))
}

/// Proposes from `cur`, and on acceptance swaps the proposal into `cur`.
/// Returns (accepted, acceptance probability).
#[allow(clippy::too_many_arguments)]
fn transition(
    model: &CompositeModel,
    lambda: f64,
    gamma: f64,
    rng: &mut ChainRng,
    cur: &mut Point,
    prop: &mut Point,
    buf: &mut [f64],
    ws: &mut ProxWorkspace,
) -> (bool, f64) {
    cur.mean(lambda, gamma, &mut prop.x);
    draw_noise(rng, buf);
    let s = (2.0 * gamma).sqrt();
    for (p, z) in prop.x.iter_mut().zip(buf.iter()) {
        *p += s * z;
    }
    let u: f64 = rng.random();
    let finite = prop.x.iter().all(|v| v.is_finite()) && prop.evaluate(model, lambda, ws);
    let lr = if finite {
        log_ratio(cur, prop, lambda, gamma, buf)
    } else {
        f64::NEG_INFINITY
    };
    let prob = if lr >= 0.0 { 1.0 } else { lr.exp() };
    let accept = u < prob;
    if accept {
        std::mem::swap(cur, prop);
    }
    (accept, prob)
}

pub fn run_pxmala(model: &CompositeModel, cfg: &SamplerConfig, x0: &[f64]) -> Result<ChainOutput> {
    run_pxmala_with(model, cfg, x0, |_| {})
}

/// Px-MALA with the MYULA drift as proposal mean. When `cfg.adaptation` is
/// set the step size is tuned during burn-in and frozen afterwards.
pub fn run_pxmala_with<F>(
    model: &CompositeModel,
    cfg: &SamplerConfig,
    x0: &[f64],
    mut observer: F,
) -> Result<ChainOutput>
where
    F: FnMut(KeptState<'_>),
{
    cfg.validate(model)?;
    let d = model.dim();
    if x0.len() != d {
        return Err(Error::Input(format!(
            "initial state has length {}, model dimension is {d}",
            x0.len()
        )));
    }
    let mut rng = chain_rng(cfg.seed);
    let mut ws = ProxWorkspace::default();
    let mut cur = Point::empty(d);
    cur.x.copy_from_slice(x0);
    if !cur.evaluate(model, cfg.lambda, &mut ws) {
        return Err(Error::Config(
            "Px-MALA must start from a state with finite potential".into(),
        ));
    }
    let mut prop = Point::empty(d);
    let mut buf = vec![0.0; d];
    let mut rec = Recorder::new(cfg, d);
    let cap = step_cap(cfg.lambda, model.lipschitz_f());
    let mut log_gamma = cfg.gamma.ln();
    let mut accepted = 0usize;
    for k in 1..=cfg.n_iter {
        let gamma = log_gamma.exp();
        let (acc, prob) = transition(
            model, cfg.lambda, gamma, &mut rng, &mut cur, &mut prop, &mut buf, &mut ws,
        );
        if k <= cfg.burn_in {
            if let Some(a) = cfg.adaptation {
                log_gamma += a.rate / (k as f64).powf(0.6) * (prob - a.target);
                log_gamma = log_gamma.min(cap.ln());
            }
        } else if acc {
            accepted += 1;
        }
        if cfg.keeps(k) {
            let gbar = cfg.record_gbar.then(|| {
                let g = model.nonsmooth.eval(&cur.x);
                (envelope_from_prox(model.nonsmooth.as_ref(), cfg.lambda, &cur.x, &cur.prox) - g)
                    .min(0.0)
            });
            observer(KeptState {
                index: rec.kept,
                iteration: k,
                x: &cur.x,
                u: cur.u,
            });
            rec.record(cfg, &cur.x, cur.u, gbar);
        }
    }
    let gamma_final = log_gamma.exp();
    Ok(rec.finish(model, cfg, cur.x, Some(accepted), gamma_final))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::forward::ZeroSmooth;
    use crate::prox::BoxIndicator;
    use crate::samplers::tests::laplace_model;

    #[test]
    fn degenerate_proposal_has_unit_ratio() {
        let m = laplace_model();
        for &x in &[0.3, -1.7, 0.0] {
            let lr = pxmala_log_ratio(&m, 0.1, 0.05, &[x], &[x]).unwrap();
            assert_eq!(lr, 0.0);
        }
    }

    #[test]
    fn proposals_outside_the_box_are_rejected() {
        let m = CompositeModel::new(
            Arc::new(ZeroSmooth(1)),
            Arc::new(BoxIndicator::new(-1.0, 1.0).unwrap()),
            1.0,
            1.0,
            1,
            1,
            "uniform",
        )
        .unwrap();
        assert_eq!(
            pxmala_log_ratio(&m, 0.1, 0.1, &[0.9], &[1.5]).unwrap(),
            f64::NEG_INFINITY
        );
        let mut rng = chain_rng(3);
        let mut x = vec![0.99];
        for _ in 0..2000 {
            let (nx, acc) = pxmala_step(&x, &m, 0.1, 0.1, &mut rng).unwrap();
            if !acc {
                assert_eq!(nx, x);
            }
            assert!(nx[0].abs() <= 1.0);
            x = nx;
        }
    }

    #[test]
    fn adaptation_moves_toward_target() {
        let m = laplace_model();
        let mut cfg = SamplerConfig::new(1.0, 1.0, 20_000, 5);
        cfg.burn_in = 10_000;
        cfg.adaptation = Some(crate::samplers::StepAdaptation::default());
        let out = run_pxmala(&m, &cfg, &[0.0]).unwrap();
        let rate = out.acceptance_rate(&cfg).unwrap();
        assert!(out.gamma_final <= 1.0);
        assert!(rate > 0.3, "{rate}");
    }
}
