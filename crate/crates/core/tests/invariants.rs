use std::sync::Arc;

use proptest::prelude::*;

use myula::bounds::{convex_budget, omega, ConvexBoundInputs};
use myula::diagnostics::{hpd_thresholds, quantile_sorted};
use myula::forward::{BlurOperator, Deconvolution, SmoothTerm};
use myula::io::{Checkpoint, GrayImage};
use myula::prox::{
    my_envelope_eval, BoxIndicator, GaussianTerm, Haar1d, L1Norm, L2Norm, MyEnvelope,
    NonSmoothTerm, OrthonormalL1, SharedTerm, TotalVariation, Weighted,
};
use myula::samplers::{SampleBlock, SamplerConfig};
use myula::ImageField;

fn term(kind: u8) -> SharedTerm {
    match kind % 7 {
        0 => Arc::new(L1Norm),
        1 => Arc::new(L2Norm),
        2 => Arc::new(BoxIndicator::new(-1.0, 0.5).unwrap()),
        3 => Arc::new(GaussianTerm::new(0.7).unwrap()),
        4 => Arc::new(OrthonormalL1::new(Arc::new(Haar1d::new(4, 2).unwrap())).unwrap()),
        5 => Arc::new(
            TotalVariation::new(2, 2)
                .unwrap()
                .with_solver(100_000, 1e-12)
                .unwrap(),
        ),
        _ => Arc::new(Weighted::new(Arc::new(L1Norm), 1.7).unwrap()),
    }
}

fn vec4() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, 4)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn objective(g: &dyn NonSmoothTerm, x: &[f64], p: &[f64], theta: f64) -> f64 {
    g.eval(p) + dist(x, p).powi(2) / (2.0 * theta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn envelope_sandwich_and_monotonicity(kind in 0u8..7, x in vec4(), l1 in 0.01..1.0f64, f in 1.01..10.0f64) {
        let g = term(kind);
        let e1 = my_envelope_eval(&MyEnvelope::new(g.clone(), l1).unwrap(), &x).unwrap();
        let e2 = my_envelope_eval(&MyEnvelope::new(g.clone(), l1 * f).unwrap(), &x).unwrap();
        let tol = 1e-9 * (1.0 + e1.abs());
        prop_assert!(e1 <= g.eval(&x) + tol);
        prop_assert!(e2 <= e1 + tol);
    }

    #[test]
    fn prox_is_nonexpansive(kind in 0u8..7, x in vec4(), y in vec4(), theta in 0.05..3.0f64) {
        let g = term(kind);
        let (px, py) = (g.prox(&x, theta), g.prox(&y, theta));
        prop_assert!(dist(&px, &py) <= dist(&x, &y) * (1.0 + 1e-6) + 1e-9);
    }

    #[test]
    fn prox_beats_random_competitors(kind in 0u8..7, x in vec4(), theta in 0.05..3.0f64,
                                     deltas in prop::collection::vec(vec4(), 8)) {
        let g = term(kind);
        let p = g.prox(&x, theta);
        let best = objective(g.as_ref(), &x, &p, theta);
        prop_assert!(best.is_finite());
        for d in &deltas {
            for scale in [1.0, 1e-2, 1e-4] {
                let q: Vec<f64> = p.iter().zip(d).map(|(a, b)| a + scale * b).collect();
                prop_assert!(best <= objective(g.as_ref(), &x, &q, theta) + 1e-9 * (1.0 + best.abs()));
            }
        }
    }

    #[test]
    fn terms_are_midpoint_convex(kind in 0u8..7, x in vec4(), y in vec4(), t in 0.0..1.0f64) {
        let g = term(kind);
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let (gx, gy) = (g.eval(&x), g.eval(&y));
        if gx.is_finite() && gy.is_finite() {
            prop_assert!(g.eval(&z) <= t * gx + (1.0 - t) * gy + 1e-9 * (1.0 + gx.abs() + gy.abs()));
        }
    }

    #[test]
    fn blur_gradient_respects_lipschitz_constant(k in 1usize..6, seed in 0u64..1000,
                                                 x in prop::collection::vec(-2.0..2.0f64, 64),
                                                 y in prop::collection::vec(-2.0..2.0f64, 64)) {
        let obs = ImageField::new((0..64).map(|i| ((i as u64 * 31 + seed) % 17) as f64 / 17.0).collect(), 8, 8).unwrap();
        let f = Deconvolution::new(&obs, BlurOperator::uniform(k, 8, 8).unwrap(), 0.5).unwrap();
        let (mut gx, mut gy) = (vec![0.0; 64], vec![0.0; 64]);
        f.grad_into(&x, &mut gx);
        f.grad_into(&y, &mut gy);
        prop_assert!(dist(&gx, &gy) <= f.lipschitz() * dist(&x, &y) * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn omega_is_homogeneous_of_degree_two(r in 1e-6..1e6f64, c in 1e-3..1e3f64) {
        let a = omega(c * r).unwrap();
        let b = c * c * omega(r).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * b);
    }

    #[test]
    fn budgets_grow_as_epsilon_shrinks(eps in 0.001..0.5f64, d in 1usize..500, x in 0.0..10.0f64) {
        let inputs = |e| ConvexBoundInputs { eta_c: 1.0, r_c: 1.0, d, l_lip: 1.0, gamma_bar: 1.0, epsilon: e, x_dist: x };
        let a = convex_budget(&inputs(eps)).unwrap();
        let b = convex_budget(&inputs(eps / 2.0)).unwrap();
        prop_assert!(b.log_n_min >= a.log_n_min);
        prop_assert!(b.t_horizon >= a.t_horizon);
    }

    #[test]
    fn quantiles_are_monotone(mut u in prop::collection::vec(-1e3..1e3f64, 1..200),
                              p in 0.0..1.0f64, q in 0.0..1.0f64) {
        u.sort_by(f64::total_cmp);
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(quantile_sorted(&u, lo) <= quantile_sorted(&u, hi));
        let h = hpd_thresholds(&u, &[0.05, 0.5, 0.95]).unwrap();
        prop_assert!(h[0].eta_alpha >= h[1].eta_alpha && h[1].eta_alpha >= h[2].eta_alpha);
        prop_assert!(h[0].eta_alpha <= u[u.len() - 1] && h[2].eta_alpha >= u[0]);
    }

    #[test]
    fn pgm_round_trip(w in 1usize..12, h in 1usize..12, wide in any::<bool>(), seed in any::<u64>()) {
        let maxval: u16 = if wide { 65535 } else { 255 };
        let data = (0..w * h).map(|i| ((i as u64).wrapping_mul(2654435761).wrapping_add(seed) % (maxval as u64 + 1)) as u16).collect();
        let img = GrayImage::new(w, h, maxval, data).unwrap();
        prop_assert_eq!(GrayImage::decode(&img.encode()).unwrap(), img);
    }

    #[test]
    fn checkpoint_round_trip(w in 1usize..6, h in 1usize..6, seed in any::<u64>(), it in any::<u32>(),
                             vals in prop::collection::vec(-1e6..1e6f64, 75), with_samples in any::<bool>()) {
        let n = w * h;
        let mut cfg = SamplerConfig::new(0.3, 0.1, it as usize, seed);
        cfg.thin = 3;
        let ck = Checkpoint {
            config: cfg,
            seed,
            iteration: it as u64,
            kept_count: (it / 3) as u64,
            mean: ImageField::new(vals[..n].to_vec(), w, h).unwrap(),
            variance: ImageField::new(vals[25..25 + n].to_vec(), w, h).unwrap(),
            state: vals[50..50 + n].to_vec(),
            samples: with_samples.then(|| SampleBlock { dim: n, stride: 2, data: vals[..2 * n].to_vec() }),
        };
        prop_assert_eq!(Checkpoint::decode(&ck.encode().unwrap()).unwrap(), ck);
    }
}
