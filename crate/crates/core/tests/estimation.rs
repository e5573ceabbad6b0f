mod common;

use proptest::prelude::*;
use recruit_core::estimation::{
    estimate_r_pooled, fit, grad_beta_binomial, grad_recruitment, grad_theta_prior,
    loglik_beta_binomial, loglik_recruitment, loglik_theta_prior, maximize_2d, OptimizerSettings,
};
use recruit_core::{generate_trial, take_snapshot, Error, ModelTag, RngHandle, TrialConfig};

use common::random_snapshot;

fn central_diff<F: Fn(f64, f64) -> f64>(f: F, a: f64, b: f64) -> (f64, f64) {
    let (ha, hb) = (1e-6 * a.max(1e-3), 1e-6 * b.max(1e-3));
    (
        (f(a + ha, b) - f(a - ha, b)) / (2.0 * ha),
        (f(a, b + hb) - f(a, b - hb)) / (2.0 * hb),
    )
}

fn assert_grad_close(name: &str, got: (f64, f64), fd: (f64, f64)) {
    for (g, d) in [(got.0, fd.0), (got.1, fd.1)] {
        assert!(
            (g - d).abs() <= 1e-5 * d.abs().max(1.0),
            "{name}: analytic {got:?} vs finite difference {fd:?}"
        );
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..10 {
        let snap = random_snapshot(seed, 8, 1.5, 0.2);
        for &(a, b) in &[(0.7, 2.0), (1.2, 3.5), (8.0, 0.4)] {
            assert_grad_close(
                "recruitment",
                grad_recruitment(a, b, &snap).unwrap(),
                central_diff(|x, y| loglik_recruitment(x, y, &snap).unwrap(), a, b),
            );
            for tilde in [false, true] {
                assert_grad_close(
                    "beta-binomial",
                    grad_beta_binomial(a, b, &snap, tilde).unwrap(),
                    central_diff(|x, y| loglik_beta_binomial(x, y, &snap, tilde).unwrap(), a, b),
                );
            }
            assert_grad_close(
                "theta prior",
                grad_theta_prior(a, b, &snap).unwrap(),
                central_diff(|x, y| loglik_theta_prior(x, y, &snap).unwrap(), a, b),
            );
        }
    }
}

/// A 600 × 600 log-spaced grid, refined once around its best cell.
fn grid_argmax<F: Fn(f64, f64) -> f64>(f: F, lo: [f64; 2], hi: [f64; 2]) -> ([f64; 2], f64) {
    let mut best = ([0.0; 2], f64::NEG_INFINITY);
    let (mut lo, mut hi) = ([lo[0].ln(), lo[1].ln()], [hi[0].ln(), hi[1].ln()]);
    for _ in 0..3 {
        let n = 600;
        let step = [(hi[0] - lo[0]) / n as f64, (hi[1] - lo[1]) / n as f64];
        for i in 0..=n {
            for j in 0..=n {
                let x = [(lo[0] + i as f64 * step[0]).exp(), (lo[1] + j as f64 * step[1]).exp()];
                let v = f(x[0], x[1]);
                if v > best.1 {
                    best = (x, v);
                }
            }
        }
        lo = [best.0[0].ln() - 2.0 * step[0], best.0[1].ln() - 2.0 * step[1]];
        hi = [best.0[0].ln() + 2.0 * step[0], best.0[1].ln() + 2.0 * step[1]];
    }
    best
}

#[test]
fn optimizer_matches_grid_oracle() {
    let cfg = TrialConfig::part_two();
    for seed in 0..3 {
        let trial = generate_trial(&cfg, RngHandle::new(seed, 0)).unwrap();
        let snap = take_snapshot(&trial, cfg.screening_window, 2.0).unwrap();
        let blocks: [(&str, Box<dyn Fn(f64, f64) -> f64>); 2] = [
            ("recruitment", Box::new(|a, m| loglik_recruitment(a, m, &snap).unwrap())),
            ("theta prior", Box::new(|a, b| loglik_theta_prior(a, b, &snap).unwrap())),
        ];
        for (name, f) in &blocks {
            let (grid_x, grid_v) = grid_argmax(f, [0.05, 0.05], [50.0, 50.0]);
            let m = maximize_2d(|a: f64, b: f64| f(a, b), &OptimizerSettings::default()).unwrap();
            assert!(m.value >= grid_v - 1e-9, "{name}: {} < grid {grid_v}", m.value);
            for k in 0..2 {
                assert!(
                    (m.argmax[k] - grid_x[k]).abs() < 1e-3 * grid_x[k],
                    "{name}: argmax {:?} vs grid {grid_x:?}",
                    m.argmax
                );
            }
        }
    }
}

#[test]
fn f32_fit_tracks_f64_fit() {
    let cfg = TrialConfig::part_two();
    let trial = generate_trial(&cfg, RngHandle::new(5, 0)).unwrap();
    let snap = take_snapshot(&trial, cfg.screening_window, 2.0).unwrap();
    let settings = OptimizerSettings {
        rel_tol: 1e-6,
        ..Default::default()
    };
    let f64_fit = fit(&snap, ModelTag::B3, &OptimizerSettings::default()).unwrap();
    let f32_fit = fit(&snap.cast::<f32>(), ModelTag::B3, &settings).unwrap();
    let close = |a: f32, b: f64| ((a as f64) - b).abs() < 2e-2 * b.abs().max(1.0);
    assert!(close(f32_fit.alpha, f64_fit.alpha), "{} vs {}", f32_fit.alpha, f64_fit.alpha);
    assert!(close(f32_fit.mu, f64_fit.mu));
    assert!(close(f32_fit.mean_r(), f64_fit.mean_r()));
    assert!(close(f32_fit.mu2_hat().unwrap(), f64_fit.mu2_hat().unwrap()));
}

#[test]
fn fit_errors_are_typed() {
    let cfg = TrialConfig::part_one();
    let trial = generate_trial(&cfg, RngHandle::new(1, 0)).unwrap();
    let early = take_snapshot(&trial, 0.0, 1e-6).unwrap();
    assert!(matches!(
        fit(&early, ModelTag::A1, &OptimizerSettings::default()),
        Err(Error::InsufficientData { .. })
    ));
    let snap = take_snapshot(&trial, 0.0, 1.0).unwrap();
    assert!(matches!(
        fit(&snap, ModelTag::B1, &OptimizerSettings::default()),
        Err(Error::DataMismatch(_))
    ));
    let bad = OptimizerSettings {
        max_evals: 10,
        ..Default::default()
    };
    assert!(matches!(fit(&snap, ModelTag::A2, &bad), Err(Error::Config { .. })));
}

#[test]
fn posteriors_are_conjugate_updates_of_the_fitted_priors() {
    let snap = random_snapshot(3, 12, 2.0, 0.2);
    let f = fit(&snap, ModelTag::B3, &OptimizerSettings::default()).unwrap();
    let psi = f.psi.unwrap();
    let prior = f.theta_prior.unwrap();
    for (c, p) in snap.centres.iter().zip(&f.centres) {
        assert_eq!(p.lambda.shape, f.alpha + c.n as f64);
        assert_eq!(p.lambda.rate, f.alpha / f.mu + c.tau);
        let r = p.r.unwrap();
        assert_eq!(r.a, psi.a + c.k_tilde as f64);
        assert_eq!(r.b, psi.b + (c.n - c.k_tilde) as f64);
        let th = p.theta.unwrap();
        assert_eq!(th.shape, prior.shape + c.l as f64);
        assert_eq!(th.rate, prior.rate + c.t_screen_sum);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn likelihoods_are_finite_on_valid_inputs(
        seed in 0u64..10_000,
        a in 1e-3f64..1e3,
        b in 1e-3f64..1e3,
    ) {
        let snap = random_snapshot(seed, 6, 1.0, 0.2);
        prop_assert!(loglik_recruitment(a, b, &snap).unwrap().is_finite());
        prop_assert!(loglik_beta_binomial(a, b, &snap, true).unwrap().is_finite());
        prop_assert!(loglik_beta_binomial(a, b, &snap, false).unwrap().is_finite());
        prop_assert!(loglik_theta_prior(a, b, &snap).unwrap().is_finite());
    }

    #[test]
    fn pooled_r_is_a_probability(seed in 0u64..10_000, tilde: bool) {
        let snap = random_snapshot(seed, 5, 1.0, 0.2);
        let r = estimate_r_pooled(&snap, tilde).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn optimizer_never_worsens_the_start(
        c0 in 0.01f64..100.0,
        c1 in 0.01f64..100.0,
        s0 in 0.01f64..100.0,
        s1 in 0.01f64..100.0,
    ) {
        let f = |x: f64, y: f64| -((x.ln() - c0.ln()).powi(2) + 3.0 * (y.ln() - c1.ln()).powi(2));
        let settings = OptimizerSettings { init: [s0, s1], ..Default::default() };
        let m = maximize_2d(f, &settings).unwrap();
        prop_assert!(m.value >= f(s0, s1));
        prop_assert!((m.argmax[0] / c0 - 1.0).abs() < 1e-4);
        prop_assert!((m.argmax[1] / c1 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn fitted_posteriors_are_proper(seed in 0u64..10_000) {
        let snap = random_snapshot(seed, 6, 1.5, 0.2);
        for model in ModelTag::ALL {
            let f = fit(&snap, model, &OptimizerSettings::default()).unwrap();
            prop_assert!(f.alpha > 0.0 && f.mu > 0.0);
            for c in &f.centres {
                prop_assert!(c.lambda.shape > 0.0 && c.lambda.rate > 0.0);
                if let Some(r) = c.r {
                    prop_assert!(r.a > 0.0 && r.b > 0.0);
                }
                if let Some(t) = c.theta {
                    prop_assert!(t.shape > 0.0 && t.rate > 0.0);
                }
            }
        }
    }
}
