//! Generative model of a multicentre trial with patient dropout.
//!
//! Centre `i` opens at `u_i` and receives patients as a Poisson process of
//! rate `λ_i ~ Ga(α, β)`. Each arrival is lost immediately with probability
//! `1 − r_i`; under the screening models a surviving patient is lost again if
//! the exponential clock `Z ~ Exp(θ_i)` rings before the screening window
//! `R` ends, and is otherwise randomized at `arrival + R`.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::rng::{beta_sampler, bernoulli_draw, gamma_sampler};
use crate::kernel::{BetaParams, GammaParams, RngHandle};

/// The five dropout models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelTag {
    A1,
    A2,
    B1,
    B2,
    B3,
}

impl ModelTag {
    pub const ALL: [ModelTag; 5] = [ModelTag::A1, ModelTag::A2, ModelTag::B1, ModelTag::B2, ModelTag::B3];

    /// Models B.* observe the screening process.
    pub fn has_screening(self) -> bool {
        matches!(self, ModelTag::B1 | ModelTag::B2 | ModelTag::B3)
    }

    /// Models whose randomization probability varies by centre.
    pub fn random_r(self) -> bool {
        matches!(self, ModelTag::A2 | ModelTag::B3)
    }

    /// Models whose screening-dropout rate varies by centre.
    pub fn random_theta(self) -> bool {
        matches!(self, ModelTag::B2 | ModelTag::B3)
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelTag::A1 => "A1",
            ModelTag::A2 => "A2",
            ModelTag::B1 => "B1",
            ModelTag::B2 => "B2",
            ModelTag::B3 => "B3",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('.', "").as_str() {
            "A1" => Ok(ModelTag::A1),
            "A2" => Ok(ModelTag::A2),
            "B1" => Ok(ModelTag::B1),
            "B2" => Ok(ModelTag::B2),
            "B3" => Ok(ModelTag::B3),
            _ => Err(Error::config("model", format!("unknown model `{s}`, expected A1|A2|B1|B2|B3"))),
        }
    }
}

/// Dropout mechanism and its population parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum DropoutSpec {
    A1 { r: f64 },
    A2 { psi: BetaParams<f64> },
    B1 { r: f64, theta: f64 },
    B2 { r: f64, theta_prior: GammaParams<f64> },
    B3 { psi: BetaParams<f64>, theta_prior: GammaParams<f64> },
}

impl DropoutSpec {
    pub fn tag(&self) -> ModelTag {
        match self {
            DropoutSpec::A1 { .. } => ModelTag::A1,
            DropoutSpec::A2 { .. } => ModelTag::A2,
            DropoutSpec::B1 { .. } => ModelTag::B1,
            DropoutSpec::B2 { .. } => ModelTag::B2,
            DropoutSpec::B3 { .. } => ModelTag::B3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |r: f64| {
            if (0.0..=1.0).contains(&r) {
                Ok(())
            } else {
                Err(Error::config("dropout.r", format!("must lie in [0, 1], got {r}")))
            }
        };
        let beta = |p: &BetaParams<f64>| {
            BetaParams::new(p.a, p.b)
                .map(|_| ())
                .map_err(|e| Error::config("dropout.psi", e.to_string()))
        };
        let gamma = |p: &GammaParams<f64>| {
            GammaParams::new(p.shape, p.rate)
                .map(|_| ())
                .map_err(|e| Error::config("dropout.theta_prior", e.to_string()))
        };
        match self {
            DropoutSpec::A1 { r } => prob(*r),
            DropoutSpec::A2 { psi } => beta(psi),
            DropoutSpec::B1 { r, theta } => {
                prob(*r)?;
                if theta.is_finite() && *theta > 0.0 {
                    Ok(())
                } else {
                    Err(Error::config("dropout.theta", format!("must be > 0, got {theta}")))
                }
            }
            DropoutSpec::B2 { r, theta_prior } => {
                prob(*r)?;
                gamma(theta_prior)
            }
            DropoutSpec::B3 { psi, theta_prior } => {
                beta(psi)?;
                gamma(theta_prior)
            }
        }
    }

    /// E[r_i].
    pub fn mean_r(&self) -> f64 {
        match self {
            DropoutSpec::A1 { r } | DropoutSpec::B1 { r, .. } | DropoutSpec::B2 { r, .. } => *r,
            DropoutSpec::A2 { psi } | DropoutSpec::B3 { psi, .. } => psi.mean(),
        }
    }

    /// Probability that a patient who survives arrival also survives a
    /// screening window of length `window`.
    pub fn screening_survival(&self, window: f64) -> f64 {
        match self {
            DropoutSpec::A1 { .. } | DropoutSpec::A2 { .. } => 1.0,
            DropoutSpec::B1 { theta, .. } => (-theta * window).exp(),
            DropoutSpec::B2 { theta_prior, .. } | DropoutSpec::B3 { theta_prior, .. } => {
                theta_prior.laplace(window)
            }
        }
    }
}

/// Full generative specification of a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n_centres: usize,
    /// Number of randomized patients that completes recruitment.
    pub target: u64,
    pub recruitment: GammaParams<f64>,
    pub screening_window: f64,
    pub dropout: DropoutSpec,
    pub centre_openings: Vec<f64>,
    pub horizon: f64,
}

impl TrialConfig {
    /// Builds a config with simultaneous openings at 0 and the default horizon
    /// of four theoretical durations.
    pub fn new(
        n_centres: usize,
        target: u64,
        recruitment: GammaParams<f64>,
        screening_window: f64,
        dropout: DropoutSpec,
    ) -> Result<Self> {
        let mut cfg = TrialConfig {
            n_centres,
            target,
            recruitment,
            screening_window,
            dropout,
            centre_openings: vec![0.0; n_centres],
            horizon: f64::INFINITY,
        };
        cfg.horizon = 4.0 * cfg.theoretical_duration();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Dropout at arrival only: M = 75, N_R = 750, α = 1.2, μ = 3.5, r ~ Beta(4, 1).
    pub fn part_one() -> Self {
        TrialConfig::new(
            75,
            750,
            GammaParams::from_shape_mean(1.2, 3.5).expect("valid"),
            0.0,
            DropoutSpec::A2 {
                psi: BetaParams::new(4.0, 1.0).expect("valid"),
            },
        )
        .expect("valid built-in config")
    }

    /// Dropout at arrival and during a 0.2-year screening window, θ ~ Ga(1, 1/2).
    pub fn part_two() -> Self {
        TrialConfig::new(
            75,
            750,
            GammaParams::from_shape_mean(1.2, 3.5).expect("valid"),
            0.2,
            DropoutSpec::B3 {
                psi: BetaParams::new(4.0, 1.0).expect("valid"),
                theta_prior: GammaParams::from_shape_mean(1.0, 2.0).expect("valid"),
            },
        )
        .expect("valid built-in config")
    }

    /// Expected time to reach the target: N_R / (M μ E[r] E[e^{−θR}]) + R,
    /// counted from the latest centre opening.
    pub fn theoretical_duration(&self) -> f64 {
        let per_year = self.n_centres as f64
            * self.recruitment.mean()
            * self.dropout.mean_r()
            * self.dropout.screening_survival(self.screening_window);
        let last_open = self.centre_openings.iter().cloned().fold(0.0, f64::max);
        last_open + self.target as f64 / per_year + self.screening_window
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_centres == 0 {
            return Err(Error::config("n_centres", "must be at least 1"));
        }
        if self.target == 0 {
            return Err(Error::config("target", "must be at least 1"));
        }
        GammaParams::new(self.recruitment.shape, self.recruitment.rate)
            .map_err(|e| Error::config("recruitment", e.to_string()))?;
        if !(self.screening_window.is_finite() && self.screening_window >= 0.0) {
            return Err(Error::config("screening_window", "must be finite and >= 0"));
        }
        if !self.dropout.tag().has_screening() && self.screening_window != 0.0 {
            return Err(Error::config(
                "screening_window",
                "models A1/A2 have no screening window; set it to 0",
            ));
        }
        self.dropout.validate()?;
        if self.centre_openings.len() != self.n_centres {
            return Err(Error::config(
                "centre_openings",
                format!("expected {} entries, got {}", self.n_centres, self.centre_openings.len()),
            ));
        }
        if self.centre_openings.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
            return Err(Error::config("centre_openings", "times must be finite and >= 0"));
        }
        let last_open = self.centre_openings.iter().cloned().fold(0.0, f64::max);
        if !(self.horizon.is_finite() && self.horizon > last_open) {
            return Err(Error::config(
                "horizon",
                format!("must exceed the latest opening {last_open}, got {}", self.horizon),
            ));
        }
        Ok(())
    }
}

/// Latent centre parameters drawn at the start of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentreLatents {
    pub centre_id: usize,
    pub lambda: f64,
    pub r: f64,
    pub theta: Option<f64>,
}

/// One patient's latent variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub centre_id: usize,
    /// Arrival order within the centre.
    pub index: usize,
    pub arrival: f64,
    /// `true` when the patient is lost immediately upon arrival.
    pub chi: bool,
    /// Screening-dropout clock; absent under models A.
    pub z: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Randomized,
    LostOnArrival,
    LostInScreening,
    InScreening,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Randomized => "RANDOMIZED",
            Status::LostOnArrival => "LOST_ON_ARRIVAL",
            Status::LostInScreening => "LOST_IN_SCREENING",
            Status::InScreening => "IN_SCREENING",
        }
    }
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "RANDOMIZED" => Ok(Status::Randomized),
            "LOST_ON_ARRIVAL" => Ok(Status::LostOnArrival),
            "LOST_IN_SCREENING" => Ok(Status::LostInScreening),
            "IN_SCREENING" => Ok(Status::InScreening),
            other => Err(Error::DataMismatch(format!("unknown status `{other}`"))),
        }
    }
}

/// A patient's status at an interim time together with the last time
/// `s_{i,j}` the patient was seen in screening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientStatus {
    pub status: Status,
    pub last_seen: f64,
}

/// A generated trial: centre latents plus every patient up to the horizon,
/// ordered by `(arrival, centre_id, index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub latents: Vec<CentreLatents>,
    pub openings: Vec<f64>,
    pub patients: Vec<PatientRecord>,
    pub horizon: f64,
}

/// Draws `(λ_i, r_i, θ_i)` for one centre from its own stream.
fn draw_latents(
    config: &TrialConfig,
    centre_id: usize,
    rng: &mut crate::kernel::Stream,
) -> Result<CentreLatents> {
    use rand_distr::Distribution;
    let lambda = gamma_sampler(&config.recruitment)?.sample(rng);
    let (r, theta) = match &config.dropout {
        DropoutSpec::A1 { r } => (*r, None),
        DropoutSpec::A2 { psi } => (beta_sampler(psi)?.sample(rng), None),
        DropoutSpec::B1 { r, theta } => (*r, Some(*theta)),
        DropoutSpec::B2 { r, theta_prior } => (*r, Some(gamma_sampler(theta_prior)?.sample(rng))),
        DropoutSpec::B3 { psi, theta_prior } => {
            let r = beta_sampler(psi)?.sample(rng);
            (r, Some(gamma_sampler(theta_prior)?.sample(rng)))
        }
    };
    Ok(CentreLatents {
        centre_id,
        lambda,
        r,
        theta,
    })
}

/// Samples centre latents and patient arrivals. Centre `i` uses the
/// sub-stream `rng.child(i)`, so centres are generated independently of one
/// another and of any later use of the parent handle.
pub fn generate_trial(config: &TrialConfig, rng: RngHandle) -> Result<Trial> {
    config.validate()?;
    let mut latents = Vec::with_capacity(config.n_centres);
    let mut patients = Vec::new();
    for c in 0..config.n_centres {
        let mut stream = rng.child(c as u64).stream();
        let lat = draw_latents(config, c, &mut stream)?;
        let mut centre = generate_patients(config, &lat, config.centre_openings[c], &mut stream)?;
        latents.push(lat);
        patients.append(&mut centre);
    }
    patients.sort_by(|a, b| {
        a.arrival
            .total_cmp(&b.arrival)
            .then(a.centre_id.cmp(&b.centre_id))
            .then(a.index.cmp(&b.index))
    });
    Ok(Trial {
        latents,
        openings: config.centre_openings.clone(),
        patients,
        horizon: config.horizon,
    })
}

/// Arrivals of one centre on `[opening, horizon]` given its latents.
pub fn generate_patients(
    config: &TrialConfig,
    latents: &CentreLatents,
    opening: f64,
    rng: &mut crate::kernel::Stream,
) -> Result<Vec<PatientRecord>> {
    let mut out = Vec::new();
    if !(latents.lambda > 0.0) {
        return Ok(out);
    }
    let gap = Exp::new(latents.lambda)
        .map_err(|e| Error::domain("generate_patients", format!("{e:?}")))?;
    let clock = match latents.theta {
        Some(theta) if config.dropout.tag().has_screening() => Some(
            Exp::new(theta).map_err(|e| Error::domain("generate_patients", format!("{e:?}")))?,
        ),
        _ => None,
    };
    let mut t = opening;
    loop {
        t += gap.sample(rng);
        if t > config.horizon {
            break;
        }
        let chi = bernoulli_draw(1.0 - latents.r, rng);
        let z = clock.as_ref().map(|d| d.sample(rng));
        out.push(PatientRecord {
            centre_id: latents.centre_id,
            index: out.len(),
            arrival: t,
            chi,
            z,
        });
    }
    Ok(out)
}

/// Status of patient `p` at interim time `t1` with screening window `window`.
pub fn classify_patient(p: &PatientRecord, window: f64, t1: f64) -> Result<PatientStatus> {
    if p.arrival > t1 {
        return Err(Error::Precondition(format!(
            "patient arrived at {} after the interim time {t1}",
            p.arrival
        )));
    }
    let a = p.arrival;
    if p.chi {
        return Ok(PatientStatus {
            status: Status::LostOnArrival,
            last_seen: a,
        });
    }
    let elapsed = t1 - a;
    if let Some(z) = p.z {
        if z <= window.min(elapsed) {
            return Ok(PatientStatus {
                status: Status::LostInScreening,
                last_seen: a + z,
            });
        }
    }
    if a <= t1 - window {
        Ok(PatientStatus {
            status: Status::Randomized,
            last_seen: a + window,
        })
    } else {
        Ok(PatientStatus {
            status: Status::InScreening,
            last_seen: t1,
        })
    }
}

impl PatientRecord {
    /// Time of randomization if the patient survives screening.
    pub fn randomization_time(&self, window: f64) -> Option<f64> {
        if self.chi {
            return None;
        }
        match self.z {
            Some(z) if z <= window => None,
            _ => Some(self.arrival + window),
        }
    }
}

/// First time the cumulative number of randomized patients reaches the
/// target, or `None` if that does not happen before the horizon.
pub fn recruitment_stop_time(trial: &Trial, config: &TrialConfig) -> Option<f64> {
    let target = config.target as usize;
    let mut times: Vec<f64> = trial
        .patients
        .iter()
        .filter_map(|p| p.randomization_time(config.screening_window))
        .filter(|&t| t <= trial.horizon)
        .collect();
    if target == 0 || times.len() < target {
        return None;
    }
    let (_, nth, _) = times.select_nth_unstable_by(target - 1, f64::total_cmp);
    Some(*nth)
}
