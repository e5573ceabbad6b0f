#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recruit_core::snapshot::{CentreSnapshot, InterimSnapshot};

/// ln Γ by the Lanczos approximation (g = 7, nine terms), with reflection.
pub fn lanczos_ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - lanczos_ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Composite Gauss–Legendre rule on [a, b] with `panels` panels of 10 nodes.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [
        0.148_874_338_981_631_2,
        0.433_395_394_129_247_2,
        0.679_409_568_299_024_4,
        0.865_063_366_688_984_5,
        0.973_906_528_517_171_7,
    ];
    const W: [f64; 5] = [
        0.295_524_224_714_752_9,
        0.269_266_719_309_996_4,
        0.219_086_362_515_982,
        0.149_451_349_150_580_6,
        0.066_671_344_308_688_14,
    ];
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (x, w) in X.iter().zip(W) {
            total += w * half * (f(mid - half * x) + f(mid + half * x));
        }
    }
    total
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A hand-rolled snapshot with random but internally consistent counts.
/// `window` > 0 produces screening data.
pub fn random_snapshot(seed: u64, n_centres: usize, t1: f64, window: f64) -> InterimSnapshot<f64> {
    let mut g = rng(seed);
    let centres = (0..n_centres)
        .map(|i| {
            let opening = if i == 0 { 0.0 } else { g.random_range(0.0..0.6 * t1) };
            let tau = t1 - opening;
            let n: u64 = g.random_range(3..40);
            let lost_on_arrival = g.random_range(0..=n / 3);
            let not_lost = n - lost_on_arrival;
            let (l, nu, pending, t_sum) = if window > 0.0 {
                let nu = g.random_range(0..=not_lost.min(4));
                let l = g.random_range(0..=(not_lost - nu) / 2);
                let pending: Vec<f64> = (0..nu)
                    .map(|_| t1 - g.random_range(0.0..window.min(tau)))
                    .collect();
                let t_sum = g.random_range(0.05..1.0) * window * not_lost as f64;
                (l, nu, pending, t_sum)
            } else {
                (0, 0, Vec::new(), 0.0)
            };
            CentreSnapshot {
                centre_id: i,
                opening,
                tau,
                n,
                k: not_lost - l - nu,
                k_tilde: not_lost,
                l,
                t_screen_sum: t_sum,
                pending_arrivals: pending,
            }
        })
        .collect();
    InterimSnapshot {
        t1,
        screening_window: window,
        centres,
    }
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}
