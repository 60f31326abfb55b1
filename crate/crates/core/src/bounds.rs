//! Non-asymptotic iteration budgets for MYULA under convexity (H3) and
//! strong convexity outside a ball (H4).
//!
//! Quantities that can overflow (`V_c`, `b_c`, `b~_c`, `A_1`, the exponential
//! factor in `kappa`) are carried as natural logarithms.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{log_add_exp, normal_quantile};

/// `Phi^{-1}(3/4)`.
pub fn phi_inv_three_quarters() -> f64 {
    normal_quantile(0.75)
}

fn omega_raw(r: f64) -> f64 {
    let q = 2.0 * phi_inv_three_quarters();
    r * r / (q * q)
}

/// `omega(r) = r^2 / (2 Phi^{-1}(3/4))^2`.
pub fn omega(r: f64) -> Result<f64> {
    if r.is_nan() || r < 0.0 {
        return Err(Error::Input(format!("omega needs r >= 0, got {r}")));
    }
    Ok(omega_raw(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexBoundInputs {
    pub eta_c: f64,
    pub r_c: f64,
    pub d: usize,
    pub l_lip: f64,
    pub gamma_bar: f64,
    pub epsilon: f64,
    pub x_dist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongBoundInputs {
    pub m: f64,
    pub r_s: f64,
    pub d: usize,
    pub l_lip: f64,
    pub gamma_bar: f64,
    pub epsilon: f64,
    pub x_dist: f64,
}

fn check_common(d: usize, l: f64, gamma_bar: f64, epsilon: f64, x_dist: f64) -> Result<()> {
    if d == 0 {
        return Err(Error::Input("dimension must be at least 1".into()));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Input(format!("L must be positive, got {l}")));
    }
    if !(gamma_bar > 0.0 && gamma_bar <= (1.0 / l) * (1.0 + 1e-12)) {
        return Err(Error::Input(format!(
            "gamma_bar = {gamma_bar} must lie in (0, 1/L = {}]",
            1.0 / l
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Input(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(x_dist >= 0.0 && x_dist.is_finite()) {
        return Err(Error::Input(format!(
            "distance to the minimiser must be >= 0, got {x_dist}"
        )));
    }
    Ok(())
}

impl ConvexBoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_c > 0.0 && self.eta_c.is_finite()) {
            return Err(Error::Input(format!(
                "eta_c must be positive, got {}",
                self.eta_c
            )));
        }
        if !(self.r_c >= 0.0 && self.r_c.is_finite()) {
            return Err(Error::Input(format!("R_c must be >= 0, got {}", self.r_c)));
        }
        check_common(
            self.d,
            self.l_lip,
            self.gamma_bar,
            self.epsilon,
            self.x_dist,
        )
    }
}

impl StrongBoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::Input(format!("m must be positive, got {}", self.m)));
        }
        if !(self.r_s >= 1.0 && self.r_s.is_finite()) {
            return Err(Error::Input(format!("R_S must be >= 1, got {}", self.r_s)));
        }
        check_common(
            self.d,
            self.l_lip,
            self.gamma_bar,
            self.epsilon,
            self.x_dist,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundBudget {
    pub t_horizon: f64,
    pub gamma_max: f64,
    /// Smallest integer `n` with `n > T / gamma_max`, or `u128::MAX` when
    /// that does not fit (see `n_min_saturated`).
    pub n_min: u128,
    pub n_min_saturated: bool,
    /// `ln(T / gamma_max)`, exact even when `n_min` saturates.
    pub log_n_min: f64,
    /// Every constant of the bound; `log_` entries are natural logarithms.
    pub intermediates: BTreeMap<String, f64>,
}

/// Foster-Lyapunov drift constants of the convex case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConstants {
    pub rho_c: f64,
    pub log_rho_c: f64,
    pub a_c: f64,
    pub log_b_c: f64,
    /// `log V_c(x)`.
    pub log_v_c: f64,
}

pub fn drift_constants(inputs: &ConvexBoundInputs) -> Result<DriftConstants> {
    inputs.validate()?;
    let eta = inputs.eta_c;
    let d = inputs.d as f64;
    let gb = inputs.gamma_bar;
    let log_rho = -eta * eta * (2f64.sqrt() - 1.0) / 16.0;
    let a_c = 1f64.max(2.0 * d / eta).max(inputs.r_c);
    let s = (eta * gb / 4.0) * (d + eta * gb / 4.0);
    let lead = (eta / 4.0) * (d + eta * gb / 4.0) - log_rho;
    let log_b = lead.ln() + eta * (a_c * a_c + 1.0).sqrt() / 4.0 + s;
    let log_v = (eta / 4.0) * (inputs.x_dist * inputs.x_dist + 1.0).sqrt();
    Ok(DriftConstants {
        rho_c: log_rho.exp(),
        log_rho_c: log_rho,
        a_c,
        log_b_c: log_b,
        log_v_c: log_v,
    })
}

/// Largest admissible step for horizon `t`:
/// `(-d + sqrt(d^2 + (2/3) A2 eps^2 / (L^2 T))) / (2 A2 / 3)`, capped at
/// `gamma_bar`. Written without cancellation.
fn gamma_bound(d: f64, a2: f64, eps: f64, l: f64, t: f64, gamma_bar: f64) -> f64 {
    let c = (2.0 / 3.0) * a2 * eps * eps / (l * l * t);
    let root = c / (d + (d * d + c).sqrt());
    (root / (2.0 * a2 / 3.0)).min(gamma_bar)
}

fn finish(t: f64, gamma: f64, mut map: BTreeMap<String, f64>) -> Result<BoundBudget> {
    map.insert("t_horizon".into(), t);
    map.insert("gamma_max".into(), gamma);
    if let Some((k, _)) = map.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numerical {
            iteration: 0,
            message: format!("bound constant {k} is not finite"),
            last_state: None,
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::numerical(
            0,
            "bound constant gamma_max is not positive",
        ));
    }
    let ratio = t / gamma;
    let saturated = !(ratio < 1.0e38);
    let n_min = if saturated {
        u128::MAX
    } else {
        ratio.floor() as u128 + 1
    };
    Ok(BoundBudget {
        t_horizon: t,
        gamma_max: gamma,
        n_min,
        n_min_saturated: saturated,
        log_n_min: t.ln() - gamma.ln(),
        intermediates: map,
    })
}

/// Iteration budget under H3 (convexity with linear growth).
///
/// The step `gamma` inside `A_1` and `A_2` is taken at `gamma_bar`, which
/// upper-bounds `(-rho^gamma log rho)^{-1}` over all admissible steps.
pub fn convex_budget(inputs: &ConvexBoundInputs) -> Result<BoundBudget> {
    let dc = drift_constants(inputs)?;
    let eta = inputs.eta_c;
    let d = inputs.d as f64;
    let l = inputs.l_lip;
    let eps = inputs.epsilon;
    let gb = inputs.gamma_bar;
    let ln_eta2 = 2.0 * eta.ln();

    let alpha_c = 1f64.max(4.0 * d / eta).max(inputs.r_c);
    let q = (alpha_c * alpha_c + 1.0).sqrt();
    let log_bt =
        ((eta / 4.0) * (eta * alpha_c / 4.0 + d)).ln() + (-q.ln() + eta * q / 4.0).max(0.0);
    let omega_arg = (8.0 / eta) * (32f64.ln() - ln_eta2 + log_bt);
    let log_e = eta * eta / 32.0 * omega_raw(omega_arg);

    // log { V_c + b_c (-rho^gamma log rho)^{-1} }
    let log_drift_term = dc.log_b_c - gb * dc.log_rho_c - (-dc.log_rho_c).ln();
    let log_s = log_add_exp(dc.log_v_c, log_drift_term);
    let log_a1 = log_add_exp(
        -LN_2 + log_add_exp(log_s, 8f64.ln() - ln_eta2 + log_bt),
        16f64.ln() - ln_eta2 + log_bt + log_e,
    );
    let a2 = l * l * (4.0 / eta * (1.0 + log_s)).powi(2);
    let log_kappa_den =
        8f64.ln() - ln_eta2 + log_bt + log_add_exp(3f64.ln(), 4f64.ln() - ln_eta2 + log_e) + LN_2;
    let log_kappa = -LN_2 * (eta * eta / 32.0) / log_kappa_den;

    let t = (32.0 / (eta * eta) * (8f64.ln() - eps.ln() + log_a1))
        .max((16.0 / eps).ln() / (-log_kappa));
    let gamma = gamma_bound(d, a2, eps, l, t, gb);

    let mut map = BTreeMap::new();
    map.insert("rho_c".into(), dc.rho_c);
    map.insert("log_rho_c".into(), dc.log_rho_c);
    map.insert("a_c".into(), dc.a_c);
    map.insert("log_b_c".into(), dc.log_b_c);
    map.insert("log_v_c".into(), dc.log_v_c);
    map.insert("alpha_c".into(), alpha_c);
    map.insert("log_b_tilde_c".into(), log_bt);
    map.insert("omega_arg".into(), omega_arg);
    map.insert("log_a1".into(), log_a1);
    map.insert("a2".into(), a2);
    map.insert("log_kappa".into(), log_kappa);
    finish(t, gamma, map)
}

/// Solves `A = 5 + c + sqrt(A) / L` by fixed-point iteration from 5.
fn strong_a1(c: f64, l: f64) -> Result<f64> {
    let mut a = 5.0f64;
    for _ in 0..10_000 {
        let next = 5.0 + c + a.sqrt() / l;
        if !next.is_finite() {
            break;
        }
        if (next - a).abs() <= 1e-14 * next {
            return Ok(next);
        }
        a = next;
    }
    Err(Error::numerical(
        0,
        "A_1 fixed-point iteration did not converge",
    ))
}

/// Iteration budget under H4 (strong convexity outside a ball).
pub fn strong_budget(inputs: &StrongBoundInputs) -> Result<BoundBudget> {
    inputs.validate()?;
    let m = inputs.m;
    let d = inputs.d as f64;
    let l = inputs.l_lip;
    let eps = inputs.epsilon;
    let gb = inputs.gamma_bar;
    let r = inputs.r_s;

    let a1 = strong_a1((d / m + r * r).sqrt(), l)?;
    let c2 = 2.0 * m + gb * l * l;
    // (e^{-gamma c2} / c2)^{-1} at gamma = gamma_bar.
    let inv = c2 * (gb * c2).exp();
    let a2 = l * l * (inputs.x_dist * inputs.x_dist + 2.0 * (d + m * r * r) * inv);
    let r1 = r.max(1.0);
    let log_kappa_den = log_add_exp(0.0, m * omega_raw(r1) / 4.0) + (1.0 + r1).ln() + LN_2;
    let log_kappa = -(LN_2 * m / 2.0) / log_kappa_den;
    let t = (a1.ln() - (eps / 2.0).ln()) / (-log_kappa);
    let gamma = gamma_bound(d, a2, eps, l, t, gb);

    let mut map = BTreeMap::new();
    map.insert("a1".into(), a1);
    map.insert("a2".into(), a2);
    map.insert("log_kappa".into(), log_kappa);
    map.insert("omega_r".into(), omega_raw(r1));
    finish(t, gamma, map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convex(d: usize, eps: f64) -> ConvexBoundInputs {
        ConvexBoundInputs {
            eta_c: 1.0,
            r_c: 1.0,
            d,
            l_lip: 2.0,
            gamma_bar: 0.5,
            epsilon: eps,
            x_dist: 1.0,
        }
    }

    #[test]
    fn omega_values() {
        assert_eq!(omega(0.0).unwrap(), 0.0);
        assert!((omega(1.0).unwrap() - 0.5495).abs() < 1e-4);
        for &r in &[0.3, 1.7, 12.0] {
            assert!(
                (omega(2.0 * r).unwrap() - 4.0 * omega(r).unwrap()).abs()
                    < 1e-12 * omega(r).unwrap() * 4.0
            );
        }
        assert!(omega(-1.0).is_err());
    }

    #[test]
    fn drift_examples() {
        let mut i = convex(1, 0.1);
        let dc = drift_constants(&i).unwrap();
        assert!((dc.rho_c - (-(2f64.sqrt() - 1.0) / 16.0).exp()).abs() < 1e-15);
        assert!((dc.rho_c - 0.9744).abs() < 1e-4);
        i.eta_c = 4.0;
        i.r_c = 0.0;
        i.gamma_bar = 0.5;
        i.x_dist = 0.0;
        let dc = drift_constants(&i).unwrap();
        assert_eq!(dc.a_c, 1.0);
        assert!((dc.log_v_c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn strong_fixed_point_matches_quadratic_root() {
        let (c, l) = (3.7, 0.8);
        let a = strong_a1(c, l).unwrap();
        let s = (1.0 / l + (1.0 / (l * l) + 4.0 * (5.0 + c)).sqrt()) / 2.0;
        assert!((a - s * s).abs() < 1e-10 * a);
    }

    /// The convex budget evaluated literally, without logarithms.
    fn convex_direct(i: &ConvexBoundInputs) -> (f64, f64) {
        let (eta, d, l, gb, eps, x) = (
            i.eta_c,
            i.d as f64,
            i.l_lip,
            i.gamma_bar,
            i.epsilon,
            i.x_dist,
        );
        let phi = 0.674_489_750_196_081_7_f64;
        let omega = |r: f64| r * r / (2.0 * phi).powi(2);
        let rho = (-(eta * eta) * (2f64.sqrt() - 1.0) / 16.0).exp();
        let a = 1f64.max(2.0 * d / eta).max(i.r_c);
        let k = (eta * gb / 4.0) * (d + eta * gb / 4.0);
        let b = ((eta / 4.0) * (d + eta * gb / 4.0) - rho.ln())
            * (eta * (a * a + 1.0).sqrt() / 4.0 + k).exp();
        let v = ((eta / 4.0) * (x * x + 1.0).sqrt()).exp();
        let alpha = 1f64.max(4.0 * d / eta).max(i.r_c);
        let bt = (eta / 4.0)
            * (eta * alpha / 4.0 + d)
            * 1f64.max(
                (alpha * alpha + 1.0).powf(-0.5) * (eta * (alpha * alpha + 1.0).sqrt() / 4.0).exp(),
            );
        let e = (eta * eta / 32.0 * omega((8.0 / eta) * (32.0 / (eta * eta) * bt).ln())).exp();
        let s = v + b / (-rho.powf(gb) * rho.ln());
        let a1 = 0.5 * (s + 8.0 / (eta * eta) * bt) + 16.0 / (eta * eta) * bt * e;
        let a2 = l * l * (4.0 / eta * (1.0 + s.ln())).powi(2);
        let log_kappa = -(2f64.ln()) * (eta * eta / 32.0)
            / ((8.0 / (eta * eta) * bt * (3.0 + 4.0 / (eta * eta) * e)).ln() + 2f64.ln());
        let t = (32.0 / (eta * eta) * (8.0 / eps * a1).ln()).max((16.0 / eps).ln() / -log_kappa);
        let g = ((-d + (d * d + (2.0 / 3.0) * a2 * eps * eps / (l * l * t)).sqrt())
            / (2.0 * a2 / 3.0))
            .min(gb);
        (t, g)
    }

    #[test]
    fn convex_budget_matches_direct_evaluation() {
        for inputs in [
            convex(10, 0.1),
            ConvexBoundInputs {
                eta_c: 0.5,
                r_c: 0.1,
                d: 1,
                l_lip: 10.0,
                gamma_bar: 0.1,
                epsilon: 0.1,
                x_dist: 5.0,
            },
            ConvexBoundInputs {
                eta_c: 2.0,
                r_c: 3.0,
                d: 3,
                l_lip: 1.0,
                gamma_bar: 0.7,
                epsilon: 0.3,
                x_dist: 0.0,
            },
        ] {
            let b = convex_budget(&inputs).unwrap();
            let (t, g) = convex_direct(&inputs);
            assert!((b.t_horizon - t).abs() < 1e-9 * t, "{} vs {t}", b.t_horizon);
            // the closed-form root cancels catastrophically when c << d^2
            assert!((b.gamma_max - g).abs() < 1e-4 * g, "{} vs {g}", b.gamma_max);
            assert_eq!(b.n_min, (b.t_horizon / b.gamma_max).floor() as u128 + 1);
        }
    }

    #[test]
    fn huge_budgets_saturate() {
        let b = convex_budget(&convex(10_000_000, 0.01)).unwrap();
        assert!(b.n_min_saturated);
        assert_eq!(b.n_min, u128::MAX);
        assert!(b.log_n_min.is_finite() && b.log_n_min > 38.0 * 10f64.ln());
    }

    #[test]
    fn invalid_inputs_rejected() {
        let mut i = convex(4, 0.1);
        i.gamma_bar = 0.6;
        assert!(convex_budget(&i).is_err());
        let mut i = convex(4, 0.1);
        i.epsilon = 1.0;
        assert!(convex_budget(&i).is_err());
        let s = StrongBoundInputs {
            m: 1.0,
            r_s: 0.5,
            d: 3,
            l_lip: 1.0,
            gamma_bar: 1.0,
            epsilon: 0.1,
            x_dist: 0.0,
        };
        assert!(strong_budget(&s).is_err());
    }
}
