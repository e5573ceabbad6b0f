//! Bounded two-parameter maximisation by Nelder–Mead.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::RngHandle;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    /// Evaluation budget per run; at least 100.
    pub max_evals: usize,
    /// Relative tolerance on the simplex values and its log-scale diameter.
    pub rel_tol: f64,
    /// Starting point.
    pub init: [f64; 2],
    /// Search over the logarithm of the parameters.
    pub log_param: bool,
    /// Additional runs restarted from the incumbent with a rotated simplex.
    pub restarts: usize,
    /// Box applied to both coordinates.
    pub bounds: [f64; 2],
    /// Seed for the restart directions.
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            rel_tol: 1e-10,
            init: [1.0, 1.0],
            log_param: true,
            restarts: 3,
            bounds: [1e-6, 1e6],
            seed: 0x5eed,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_evals < 100 {
            return Err(Error::config("optimizer.max_evals", "must be at least 100"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::config("optimizer.rel_tol", "must lie in (0, 1)"));
        }
        let [lo, hi] = self.bounds;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) || (!self.log_param && lo <= 0.0) {
            return Err(Error::config("optimizer.bounds", "need 0 < lower < upper < inf"));
        }
        if !self.init.iter().all(|v| v.is_finite()) {
            return Err(Error::config("optimizer.init", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Maximum<T> {
    pub argmax: [T; 2],
    pub value: T,
    pub evals: usize,
    pub restarts_used: usize,
    pub converged: bool,
    /// Either coordinate of the maximiser sits on the box.
    pub at_bound: bool,
}

struct Problem<T, F> {
    f: F,
    log: bool,
    lo: [T; 2],
    hi: [T; 2],
    evals: usize,
}

impl<T: Real, F: FnMut(T, T) -> T> Problem<T, F> {
    fn to_param(&self, x: [T; 2]) -> [T; 2] {
        if self.log {
            [x[0].exp(), x[1].exp()]
        } else {
            x
        }
    }

    fn project(&self, x: [T; 2]) -> [T; 2] {
        [x[0].max(self.lo[0]).min(self.hi[0]), x[1].max(self.lo[1]).min(self.hi[1])]
    }

    /// Objective to minimise; non-finite values rank last.
    fn cost(&mut self, x: [T; 2]) -> T {
        self.evals += 1;
        let p = self.to_param(x);
        let v = (self.f)(p[0], p[1]);
        if v.is_finite() {
            -v
        } else {
            T::infinity()
        }
    }
}

fn lerp<T: Real>(a: [T; 2], b: [T; 2], t: T) -> [T; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

fn run_simplex<T: Real, F: FnMut(T, T) -> T>(
    prob: &mut Problem<T, F>,
    mut simplex: [([T; 2], T); 3],
    budget: usize,
    tol: T,
) -> (([T; 2], T), bool) {
    let start = prob.evals;
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    loop {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let (best, worst) = (simplex[0], simplex[2]);
        let spread = (worst.1 - best.1).abs();
        let diam = simplex
            .iter()
            .map(|(x, _)| (x[0] - best.0[0]).abs().max((x[1] - best.0[1]).abs()))
            .fold(T::zero(), T::max);
        if best.1.is_finite() && spread <= tol * (T::one() + best.1.abs()) && diam <= tol.sqrt() * T::lit(1e-2) {
            return (best, true);
        }
        if prob.evals - start >= budget {
            return (best, false);
        }
        let centroid = lerp(simplex[0].0, simplex[1].0, half);
        let xr = prob.project(lerp(worst.0, centroid, two));
        let fr = prob.cost(xr);
        if fr < best.1 {
            let xe = prob.project(lerp(worst.0, centroid, T::lit(3.0)));
            let fe = prob.cost(xe);
            simplex[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[1].1 {
            simplex[2] = (xr, fr);
            continue;
        }
        let (xc, fc, target) = if fr < worst.1 {
            let xc = lerp(centroid, xr, half);
            (xc, prob.cost(xc), fr)
        } else {
            let xc = lerp(centroid, worst.0, half);
            (xc, prob.cost(xc), worst.1)
        };
        if fc < target || (fc <= target && fc < worst.1) {
            simplex[2] = (xc, fc);
            continue;
        }
        for i in 1..3 {
            let x = lerp(best.0, simplex[i].0, half);
            simplex[i] = (x, prob.cost(x));
        }
    }
}

/// Maximises `f(p₀, p₁)` over the box `settings.bounds²`, starting from
/// `settings.init`. Non-finite values of `f` are treated as −∞.
pub fn maximize_2d<T: Real, F: FnMut(T, T) -> T>(f: F, settings: &OptimizerSettings) -> Result<Maximum<T>> {
    settings.validate()?;
    let [lo, hi] = settings.bounds;
    let map = |v: f64| if settings.log_param { T::lit(v.ln()) } else { T::lit(v) };
    let mut prob = Problem {
        f,
        log: settings.log_param,
        lo: [map(lo); 2],
        hi: [map(hi); 2],
        evals: 0,
    };
    let x0 = prob.project([map(settings.init[0]), map(settings.init[1])]);
    let step = if settings.log_param {
        T::lit(0.5)
    } else {
        T::lit(0.1) * (x0[0].abs() + x0[1].abs()).max(T::one())
    };
    let tol = T::lit(settings.rel_tol);

    let mut rng = RngHandle::new(settings.seed, 0).stream();
    let mut incumbent: Option<([T; 2], T)> = None;
    let mut converged = false;
    let mut restarts_used = 0;
    for run in 0..=settings.restarts {
        let (centre, angle) = match incumbent {
            None => (x0, T::zero()),
            Some((x, _)) => (x, T::lit(rng.random::<f64>() * std::f64::consts::TAU)),
        };
        let (s, c) = angle.sin_cos();
        let d1 = [step * c, step * s];
        let d2 = [-step * s, step * c];
        let verts = [
            centre,
            prob.project([centre[0] + d1[0], centre[1] + d1[1]]),
            prob.project([centre[0] + d2[0], centre[1] + d2[1]]),
        ];
        let mut simplex = verts.map(|x| (x, T::zero()));
        for v in simplex.iter_mut() {
            v.1 = prob.cost(v.0);
        }
        if !simplex.iter().any(|v| v.1.is_finite()) {
            if incumbent.is_none() {
                return Err(Error::Optimizer {
                    block: "",
                    detail: format!(
                        "objective is not finite anywhere on the initial simplex around {:?}",
                        prob.to_param(x0)
                    ),
                });
            }
            break;
        }
        let (found, ok) = run_simplex(&mut prob, simplex, settings.max_evals, tol);
        restarts_used = run;
        let improved = match incumbent {
            None => true,
            Some((_, fb)) => found.1 < fb - tol * (T::one() + fb.abs()),
        };
        if incumbent.map_or(true, |(_, fb)| found.1 <= fb) {
            incumbent = Some(found);
        }
        converged = ok;
        if run > 0 && !improved && ok {
            break;
        }
    }
    let (x, fx) = incumbent.expect("at least one run completed");
    if !fx.is_finite() {
        return Err(Error::Optimizer {
            block: "",
            detail: "no finite objective value found".into(),
        });
    }
    let edge = T::lit(1e-9);
    let at_bound = (0..2).any(|i| x[i] - prob.lo[i] <= edge.max(prob.lo[i].abs() * edge) || prob.hi[i] - x[i] <= edge.max(prob.hi[i].abs() * edge));
    Ok(Maximum {
        argmax: prob.to_param(x),
        value: -fx,
        evals: prob.evals,
        restarts_used,
        converged,
        at_bound,
    })
}
