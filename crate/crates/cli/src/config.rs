//! TOML run configuration. Every key is optional; omitted keys fall back to
//! the built-in scenario selected by `preset`.

use recruit_core::kernel::{BetaParams, GammaParams};
use recruit_core::{
    DropoutSpec, Error, ForecastSettings, ModelTag, OptimizerSettings, StudyPlan, TrialConfig,
};
use serde::{Deserialize, Serialize};

use crate::exit::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 75 centres, target 750, α = 1.2, μ = 3.5, A.2 dropout with ψ = (4, 1).
    #[default]
    Part1,
    /// As `part1` plus a 0.2-year screening window, B.3 dropout with θ ~ Ga(1, mean 2).
    Part2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DropoutSection {
    pub model: Option<ModelTag>,
    /// Shared randomization probability (A1, B1, B2). Default 0.8.
    pub r: Option<f64>,
    /// Beta population of the randomization probability (A2, B3). Default (4, 1).
    pub psi1: Option<f64>,
    pub psi2: Option<f64>,
    /// Shared screening-dropout rate (B1). Default 2.
    pub theta: Option<f64>,
    /// Gamma population of the screening-dropout rate (B2, B3), as shape and
    /// mean. Default (1, 2).
    pub alpha2: Option<f64>,
    pub mu2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSection {
    pub n_centres: Option<usize>,
    pub target: Option<u64>,
    /// Shape of the recruitment-rate population.
    pub alpha: Option<f64>,
    /// Mean recruitment rate per centre and year.
    pub mu: Option<f64>,
    pub screening_window: Option<f64>,
    /// Opening time of every centre; all zero by default.
    pub centre_openings: Option<Vec<f64>>,
    /// Simulation horizon; four theoretical durations by default.
    pub horizon: Option<f64>,
    pub dropout: Option<DropoutSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub name: Option<String>,
    pub interim_times: Option<Vec<f64>>,
    pub models: Option<Vec<ModelTag>>,
    pub n_replications: Option<usize>,
    pub base_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub trial: TrialSection,
    pub study: StudySection,
    pub optimizer: Option<OptimizerSettings>,
    pub forecast: Option<ForecastSettings>,
}

fn config_err(e: Error) -> CliError {
    CliError::config(e.to_string())
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("invalid configuration: {e}")))
    }

    pub fn preset(&self) -> Preset {
        self.preset.unwrap_or_default()
    }

    fn base_trial(&self) -> TrialConfig {
        match self.preset() {
            Preset::Part1 => TrialConfig::part_one(),
            Preset::Part2 => TrialConfig::part_two(),
        }
    }

    fn dropout(&self, base: DropoutSpec) -> Result<DropoutSpec, CliError> {
        let Some(d) = &self.trial.dropout else {
            return Ok(base);
        };
        let model = d.model.unwrap_or(base.tag());
        let r = d.r.unwrap_or(0.8);
        let psi = || BetaParams::new(d.psi1.unwrap_or(4.0), d.psi2.unwrap_or(1.0));
        let prior = || GammaParams::from_shape_mean(d.alpha2.unwrap_or(1.0), d.mu2.unwrap_or(2.0));
        let field = |f: &'static str| move |e: Error| CliError::config(format!("invalid configuration `trial.dropout.{f}`: {e}"));
        Ok(match model {
            ModelTag::A1 => DropoutSpec::A1 { r },
            ModelTag::A2 => DropoutSpec::A2 { psi: psi().map_err(field("psi"))? },
            ModelTag::B1 => DropoutSpec::B1 {
                r,
                theta: d.theta.unwrap_or(2.0),
            },
            ModelTag::B2 => DropoutSpec::B2 {
                r,
                theta_prior: prior().map_err(field("alpha2"))?,
            },
            ModelTag::B3 => DropoutSpec::B3 {
                psi: psi().map_err(field("psi"))?,
                theta_prior: prior().map_err(field("alpha2"))?,
            },
        })
    }

    /// The trial configuration after applying every override.
    pub fn trial_config(&self) -> Result<TrialConfig, CliError> {
        let base = self.base_trial();
        let t = &self.trial;
        let n = t.n_centres.unwrap_or(base.n_centres);
        let alpha = t.alpha.unwrap_or(base.recruitment.shape);
        let mu = t.mu.unwrap_or(base.recruitment.mean());
        let recruitment = GammaParams::from_shape_mean(alpha, mu).map_err(|e| {
            CliError::config(format!("invalid configuration `trial.alpha`/`trial.mu`: {e}"))
        })?;
        let mut cfg = TrialConfig {
            n_centres: n,
            target: t.target.unwrap_or(base.target),
            recruitment,
            screening_window: t.screening_window.unwrap_or(base.screening_window),
            dropout: self.dropout(base.dropout)?,
            centre_openings: t.centre_openings.clone().unwrap_or_else(|| vec![0.0; n]),
            horizon: 0.0,
        };
        if n == 0 {
            return Err(config_err(Error::Config {
                field: "trial.n_centres".into(),
                detail: "must be at least 1".into(),
            }));
        }
        cfg.horizon = match t.horizon {
            Some(h) => h,
            None => 4.0 * cfg.theoretical_duration(),
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn optimizer(&self) -> Result<OptimizerSettings, CliError> {
        let o = self.optimizer.clone().unwrap_or_default();
        o.validate().map_err(config_err)?;
        Ok(o)
    }

    pub fn forecast(&self, study: bool) -> ForecastSettings {
        self.forecast.clone().unwrap_or_else(|| {
            if study {
                StudyPlan::part_one().forecast
            } else {
                ForecastSettings::default()
            }
        })
    }

    /// The study plan after applying every override.
    pub fn study_plan(&self) -> Result<StudyPlan, CliError> {
        let base = match self.preset() {
            Preset::Part1 => StudyPlan::part_one(),
            Preset::Part2 => StudyPlan::part_two(),
        };
        let s = &self.study;
        let plan = StudyPlan {
            name: s.name.clone().unwrap_or(base.name),
            config: self.trial_config()?,
            interim_times: s.interim_times.clone().unwrap_or(base.interim_times),
            models: s.models.clone().unwrap_or(base.models),
            n_replications: s.n_replications.unwrap_or(base.n_replications),
            base_seed: s.base_seed.or(self.seed).unwrap_or(base.base_seed),
            forecast: self.forecast(true),
            optimizer: self.optimizer()?,
        };
        plan.validate().map_err(config_err)?;
        Ok(plan)
    }
}
