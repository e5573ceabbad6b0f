//! Monte Carlo paths of the predictive randomization process.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::moments::{Predictive, RPosterior, ThetaPosterior};
use crate::error::{Error, Result};
use crate::estimation::FittedModel;
use crate::kernel::rng::{bernoulli_draw, beta_sampler, gamma_sampler};
use crate::kernel::{GammaParams, RngHandle, Stream};
use crate::snapshot::InterimSnapshot;

/// Posterior draws of one path. Future arrivals are not stored: they are
/// replayed on demand from `future`, so every query sees the same path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PathDraw {
    /// Randomization times of pending patients, ascending.
    bridge: Vec<f64>,
    /// Randomization rate added at each flow start.
    rates: Vec<f64>,
    future: RngHandle,
}

/// A set of independent predictive paths of the total randomized count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub t1: f64,
    pub horizon: f64,
    /// Σ k_i, common to every path.
    pub observed: u64,
    pub rng: RngHandle,
    /// Distinct times from which new arrivals produce randomizations.
    starts: Vec<f64>,
    paths: Vec<PathDraw>,
}

/// Event times of the superposed future Poisson process.
struct FutureEvents<'a> {
    starts: &'a [f64],
    rates: &'a [f64],
    rng: Stream,
    t: f64,
    active: usize,
    rate: f64,
}

impl Iterator for FutureEvents<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        loop {
            while self.active < self.starts.len() && self.starts[self.active] <= self.t {
                self.rate += self.rates[self.active];
                self.active += 1;
            }
            let next_start = self.starts.get(self.active).copied().unwrap_or(f64::INFINITY);
            if self.rate <= 0.0 {
                if next_start.is_infinite() {
                    return None;
                }
                self.t = next_start;
                continue;
            }
            let e: f64 = Exp1.sample(&mut self.rng);
            let cand = self.t + e / self.rate;
            if cand <= next_start {
                self.t = cand;
                return Some(cand);
            }
            // Memorylessness: restarting the clock at the boundary is exact.
            self.t = next_start;
        }
    }
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    fn future(&self, p: usize) -> FutureEvents<'_> {
        let d = &self.paths[p];
        FutureEvents {
            starts: &self.starts,
            rates: &d.rates,
            rng: d.future.stream(),
            t: self.starts.first().copied().unwrap_or(f64::INFINITY),
            active: 0,
            rate: 0.0,
        }
    }

    /// Randomized count of path `p` at time `t`.
    pub fn count_at(&self, p: usize, t: f64) -> u64 {
        self.counts_at(p, &[t])[0]
    }

    /// Counts of path `p` at each of `ts` (any order).
    pub fn counts_at(&self, p: usize, ts: &[f64]) -> Vec<u64> {
        let d = &self.paths[p];
        let t_max = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let future: Vec<f64> = self.future(p).take_while(|&e| e <= t_max).collect();
        ts.iter()
            .map(|&t| {
                let b = d.bridge.partition_point(|&x| x <= t);
                let f = future.partition_point(|&x| x <= t);
                self.observed + (b + f) as u64
            })
            .collect()
    }

    /// Counts of every path at `t`.
    pub fn counts_at_time(&self, t: f64) -> Vec<u64> {
        (0..self.paths.len())
            .into_par_iter()
            .map(|p| self.count_at(p, t))
            .collect()
    }

    /// Time at which path `p` reaches `target` randomized patients, or
    /// `None` if its rate is zero before it gets there.
    pub fn first_passage(&self, p: usize, target: u64) -> Option<f64> {
        if target <= self.observed {
            return Some(self.t1);
        }
        let need = (target - self.observed) as usize;
        let d = &self.paths[p];
        if need <= d.bridge.len() {
            return Some(d.bridge[need - 1]);
        }
        self.future(p).nth(need - d.bridge.len() - 1)
    }

    pub fn first_passages(&self, target: u64) -> Vec<Option<f64>> {
        (0..self.paths.len())
            .into_par_iter()
            .map(|p| self.first_passage(p, target))
            .collect()
    }

    /// Randomization times of path `p` up to the horizon.
    pub fn events(&self, p: usize) -> Vec<f64> {
        let mut ev: Vec<f64> = self.paths[p]
            .bridge
            .iter()
            .copied()
            .filter(|&t| t <= self.horizon)
            .collect();
        ev.extend(self.future(p).take_while(|&t| t <= self.horizon));
        ev
    }
}

fn draw_path(pred: &Predictive<f64>, group: &[usize], n_groups: usize, h: RngHandle) -> Result<PathDraw> {
    let mut rng = h.stream();
    let big_r = pred.screening_window;
    let screening = pred.model.has_screening();
    let mut rates = vec![0.0; n_groups];
    let mut bridge = Vec::new();
    for (c, &g) in pred.centres.iter().zip(group) {
        let lambda = gamma_sampler(&c.lambda)?.sample(&mut rng);
        let r = match c.r {
            RPosterior::Point(r) => r,
            RPosterior::Beta(b) => beta_sampler(&b)?.sample(&mut rng),
        };
        let theta = match c.theta {
            ThetaPosterior::Absent => 0.0,
            ThetaPosterior::Point(th) => th,
            ThetaPosterior::Gamma(lp) => {
                gamma_sampler(&GammaParams::new(lp.alpha_post, lp.rate_post)?)?.sample(&mut rng)
            }
        };
        rates[g] += r * (-theta * big_r).exp() * lambda;
        for &a in &c.pending {
            if screening {
                let delta = (a + big_r - pred.t1).max(0.0);
                if bernoulli_draw((-theta * delta).exp(), &mut rng) {
                    bridge.push(a + big_r);
                }
            } else {
                let hit = bernoulli_draw(r, &mut rng);
                let at = pred.t1 + big_r * rng.random::<f64>();
                if hit {
                    bridge.push(at);
                }
            }
        }
    }
    bridge.sort_by(f64::total_cmp);
    Ok(PathDraw {
        bridge,
        rates,
        future: h.child(u64::MAX),
    })
}

pub(crate) fn simulate(pred: &Predictive<f64>, horizon: f64, n_paths: usize, rng: RngHandle) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::domain("simulate_predictive_paths", "n_paths must be >= 1"));
    }
    if !(horizon > pred.t1) {
        return Err(Error::domain(
            "simulate_predictive_paths",
            format!("horizon {horizon} must exceed t1 = {}", pred.t1),
        ));
    }
    let flow: Vec<f64> = pred.centres.iter().map(|c| pred.flow_start(c)).collect();
    let mut starts = flow.clone();
    starts.sort_by(f64::total_cmp);
    starts.dedup();
    let group: Vec<usize> = flow
        .iter()
        .map(|f| starts.partition_point(|s| s < f))
        .collect();
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|p| draw_path(pred, &group, starts.len(), rng.child(p as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble {
        t1: pred.t1,
        horizon,
        observed: pred.observed(),
        rng,
        starts,
        paths,
    })
}

/// Simulates `n_paths` predictive paths up to `horizon`.
pub fn simulate_predictive_paths(
    fm: &FittedModel<f64>,
    snap: &InterimSnapshot<f64>,
    horizon: f64,
    n_paths: usize,
    rng: RngHandle,
) -> Result<PathEnsemble> {
    simulate(&Predictive::new(fm, snap)?, horizon, n_paths, rng)
}
