mod common;

use proptest::prelude::*;
use rand::Rng;
use recruit_core::estimation::{fit, OptimizerSettings};
use recruit_core::kernel::GammaParams;
use recruit_core::prediction::{
    predictive_bounds, recruitment_time_forecast, simulate_predictive_paths, CentrePredictive,
    ForecastMethod, ForecastSettings, LaplacePosterior, Predictive, RPosterior, ThetaPosterior,
};
use recruit_core::{generate_trial, take_snapshot, Error, ModelTag, RngHandle, TrialConfig};

use common::{integrate, lanczos_ln_gamma, random_snapshot, rng};

fn gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    (shape * rate.ln() - lanczos_ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x).exp()
}

/// E[g(θ)] for θ ~ Ga(shape, rate), integrating over u = ln θ.
fn gamma_expectation<F: Fn(f64) -> f64>(g: F, shape: f64, rate: f64) -> f64 {
    let mode = (shape / rate).ln();
    let spread = 40.0 / shape.sqrt().min(1.0) + 10.0;
    integrate(
        |u| {
            let th = u.exp();
            th * gamma_pdf(th, shape, rate) * g(th)
        },
        mode - spread,
        mode + 6.0 + 3.0 * spread / shape.sqrt().max(1.0),
        2000,
    )
}

fn single_centre(model: ModelTag, theta: ThetaPosterior<f64>, pending: Vec<f64>) -> Predictive<f64> {
    Predictive {
        model,
        t1: 2.0,
        screening_window: 0.2,
        centres: vec![CentrePredictive {
            centre_id: 0,
            opening: 0.0,
            k: 7,
            lambda: GammaParams { shape: 9.0, rate: 2.5 },
            r: RPosterior::Point(0.8),
            theta,
            pending,
        }],
    }
}

/// The double-sum variance of the pending-patient count equals
/// E[Var(S | θ)] + Var(E[S | θ]) computed by quadrature.
#[test]
fn bernoulli_sum_variance_matches_total_variance() {
    let mut g = rng(2024);
    for case in 0..20 {
        let shape = g.random_range(0.3..30.0);
        let rate = g.random_range(0.2..20.0);
        let nu = g.random_range(1..8);
        let pending: Vec<f64> = (0..nu).map(|_| 2.0 - g.random_range(0.0..0.2)).collect();
        let theta = ThetaPosterior::Gamma(LaplacePosterior::new(shape, rate).unwrap());
        let pred = single_centre(ModelTag::B2, theta, pending.clone());
        let m = pred.moments_at(2.2).unwrap();

        let d: Vec<f64> = pending.iter().map(|a| a + 0.2 - 2.0).collect();
        let cond_mean = |th: f64| d.iter().map(|&di| (-th * di).exp()).sum::<f64>();
        let cond_var = |th: f64| {
            d.iter()
                .map(|&di| {
                    let p = (-th * di).exp();
                    p * (1.0 - p)
                })
                .sum::<f64>()
        };
        let e_mean = gamma_expectation(cond_mean, shape, rate);
        let e_mean2 = gamma_expectation(|th| cond_mean(th).powi(2), shape, rate);
        let e_var = gamma_expectation(cond_var, shape, rate);
        let total = e_var + e_mean2 - e_mean * e_mean;

        assert!((m.mean - 7.0 - e_mean).abs() < 1e-8, "case {case}: mean {} vs {}", m.mean - 7.0, e_mean);
        assert!((m.variance - total).abs() < 1e-8, "case {case}: var {} vs {total}", m.variance);
    }
}

#[test]
fn point_theta_posterior_reduces_b2_to_b1() {
    let pending = vec![1.83, 1.9, 1.97];
    let b1 = single_centre(ModelTag::B1, ThetaPosterior::Point(1.7), pending.clone());
    let b2 = single_centre(ModelTag::B2, ThetaPosterior::Point(1.7), pending.clone());
    for t in [2.05, 2.2, 2.7, 4.0] {
        assert_eq!(b1.moments_at(t).unwrap(), b2.moments_at(t).unwrap());
    }
    // A gamma posterior concentrating on 1.7 converges to the same moments.
    let tight = LaplacePosterior::new(1.7e10, 1e10).unwrap();
    let b2g = single_centre(ModelTag::B2, ThetaPosterior::Gamma(tight), pending);
    for t in [2.2, 4.0] {
        let (a, b) = (b1.moments_at(t).unwrap(), b2g.moments_at(t).unwrap());
        assert!((a.mean - b.mean).abs() < 1e-8 && (a.variance - b.variance).abs() < 1e-7);
    }
}

fn part_two_fit(seed: u64, t1: f64, model: ModelTag) -> (recruit_core::Fitted, recruit_core::Snapshot) {
    let cfg = TrialConfig::part_two();
    let trial = generate_trial(&cfg, RngHandle::new(seed, 0)).unwrap();
    let snap = take_snapshot(&trial, cfg.screening_window, t1).unwrap();
    let fm = fit(&snap, model, &OptimizerSettings::default()).unwrap();
    (fm, snap)
}

/// The normal-inversion median sits within two Monte Carlo standard errors
/// of the path median.
#[test]
fn path_and_normal_medians_agree() {
    let settings = ForecastSettings {
        n_paths: 10_000,
        grid_points: 50,
        ..Default::default()
    };
    for (seed, t1, model) in [(1, 1.0, ModelTag::B3), (2, 2.0, ModelTag::B2), (3, 3.0, ModelTag::B1)] {
        let (fm, snap) = part_two_fit(seed, t1, model);
        let r = recruitment_time_forecast(&fm, &snap, 750, &settings, RngHandle::new(seed, 1)).unwrap();
        let p = r.paths_summary.unwrap();
        let nrm = r.normal_summary.unwrap();
        // Sample-median SE √(π/2)·σ/√n under near-normality.
        let se = 1.2533 * p.sd / (settings.n_paths as f64).sqrt();
        assert!(
            (p.median - nrm.median).abs() <= 2.0 * se,
            "{model} t1 = {t1}: paths {} vs normal {} (se {se})",
            p.median,
            nrm.median
        );
    }
}

#[test]
fn bounds_cover_simulated_counts() {
    let (fm, snap) = part_two_fit(4, 2.0, ModelTag::B3);
    let ens = simulate_predictive_paths(&fm, &snap, 4.0, 4000, RngHandle::new(4, 9)).unwrap();
    let pred = Predictive::new(&fm, &snap).unwrap();
    for t in [2.5, 3.0, 4.0] {
        let m = pred.moments_at(t).unwrap();
        let (lo, hi) = predictive_bounds(&m, 0.05).unwrap();
        assert!(lo <= m.mean && m.mean <= hi && lo >= m.floor);
        let inside = ens
            .counts_at_time(t)
            .iter()
            .filter(|&&c| (lo..=hi).contains(&(c as f64)))
            .count() as f64
            / ens.n_paths() as f64;
        assert!((0.93..=0.99).contains(&inside), "t = {t}: coverage {inside}");
    }
}

#[test]
fn paths_are_monotone_and_start_at_observed() {
    let (fm, snap) = part_two_fit(5, 1.0, ModelTag::B2);
    let ens = simulate_predictive_paths(&fm, &snap, 6.0, 200, RngHandle::new(5, 0)).unwrap();
    let observed = snap.total_randomized();
    for p in 0..ens.n_paths() {
        let counts = ens.counts_at(p, &[1.0, 1.1, 1.2, 2.0, 4.0, 6.0]);
        assert_eq!(counts[0], observed);
        assert!(counts.windows(2).all(|w| w[0] <= w[1]));
        let t600 = ens.first_passage(p, 600);
        let t700 = ens.first_passage(p, 700);
        if let (Some(a), Some(b)) = (t600, t700) {
            assert!(a <= b);
        }
    }
    let again = simulate_predictive_paths(&fm, &snap, 6.0, 200, RngHandle::new(5, 0)).unwrap();
    assert_eq!(ens.first_passages(700), again.first_passages(700));
}

#[test]
fn forecast_errors_and_degenerate_case() {
    let (fm, snap) = part_two_fit(6, 2.0, ModelTag::B3);
    let short = ForecastSettings {
        n_paths: 500,
        horizon: Some(2.5),
        ..Default::default()
    };
    assert!(matches!(
        recruitment_time_forecast(&fm, &snap, 750, &short, RngHandle::new(1, 0)),
        Err(Error::Horizon(_))
    ));
    let normal = ForecastSettings {
        method: ForecastMethod::Normal,
        horizon: Some(2.5),
        ..Default::default()
    };
    assert!(matches!(
        recruitment_time_forecast(&fm, &snap, 750, &normal, RngHandle::new(1, 0)),
        Err(Error::Horizon(_))
    ));
    let met = snap.total_randomized();
    let r = recruitment_time_forecast(&fm, &snap, met, &ForecastSettings::default(), RngHandle::new(1, 0))
        .unwrap();
    assert!(r.degenerate && r.summary.median == 2.0 && r.notice.is_some());
}

#[test]
fn normal_method_needs_no_paths() {
    let (fm, snap) = part_two_fit(7, 3.0, ModelTag::B3);
    let s = ForecastSettings {
        method: ForecastMethod::Normal,
        ..Default::default()
    };
    let r = recruitment_time_forecast(&fm, &snap, 750, &s, RngHandle::new(1, 0)).unwrap();
    assert_eq!(r.n_paths, 0);
    assert!(r.paths_summary.is_none());
    assert!(r.summary.q025 < r.summary.median && r.summary.median < r.summary.q975);
    assert!(r.grid.windows(2).all(|w| w[0].p_reached <= w[1].p_reached + 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Once every centre is recruiting, the predictive mean is affine and
    /// non-decreasing in t.
    #[test]
    fn mean_is_affine_after_the_bridge(seed in 0u64..10_000, model_ix in 0usize..5) {
        let model = ModelTag::ALL[model_ix];
        let window = if model.has_screening() { 0.2 } else { 0.0 };
        let snap = random_snapshot(seed, 6, 1.5, window);
        let fm = fit(&snap, model, &OptimizerSettings::default()).unwrap();
        let pred = Predictive::new(&fm, &snap).unwrap();
        let start = 1.5 + window;
        let ts = [start + 1e-9, start + 0.4, start + 1.3, start + 5.0];
        let means: Vec<f64> = ts.iter().map(|&t| pred.moments_at(t).unwrap().mean).collect();
        let slope = (means[1] - means[0]) / (ts[1] - ts[0]);
        prop_assert!(slope >= 0.0);
        for i in 2..4 {
            let s = (means[i] - means[0]) / (ts[i] - ts[0]);
            prop_assert!((s - slope).abs() <= 1e-8 * slope.max(1.0));
        }
        let vars: Vec<f64> = ts.iter().map(|&t| pred.moments_at(t).unwrap().variance).collect();
        prop_assert!(vars.windows(2).all(|w| w[0] <= w[1] + 1e-9));
    }
}
