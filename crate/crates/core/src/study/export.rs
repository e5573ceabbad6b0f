use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ReplicationRecord, StudyReport};
use crate::error::Result;
use crate::trial::ModelTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureKind {
    /// Every parameter estimate.
    ParamDist,
    /// Point forecasts of the duration, with the observed durations.
    DurationDist,
}

/// One row of a long-format figure dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub replication: usize,
    pub t1: f64,
    pub model: ModelTag,
    pub quantity: String,
    pub value: f64,
}

pub fn export_figure_data(records: &[ReplicationRecord], kind: FigureKind) -> Vec<FigureRow> {
    let mut rows = Vec::new();
    for r in records {
        for c in &r.cells {
            let mut push = |quantity: &str, value: f64| {
                rows.push(FigureRow {
                    replication: r.replication,
                    t1: c.t1,
                    model: c.model,
                    quantity: quantity.to_string(),
                    value,
                })
            };
            match kind {
                FigureKind::ParamDist => {
                    for (name, &v) in &c.estimates {
                        push(name, v);
                    }
                }
                FigureKind::DurationDist => {
                    push("forecast_mean", c.forecast.mean);
                    push("forecast_median", c.forecast.median);
                    push("observed", r.observed_duration);
                }
            }
        }
    }
    rows
}

fn write_rows<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Table2Row<'a> {
    parameter: &'a str,
    model: ModelTag,
    t1: f64,
    mean: f64,
    sd: f64,
}

#[derive(Serialize)]
struct DurationCsvRow {
    model: ModelTag,
    t1: f64,
    mean: f64,
    sd: f64,
    pct_bias: f64,
    coverage: f64,
}

impl StudyReport {
    /// Writes `table2.csv`, the duration table, `figures/*.csv` and
    /// `report.json` into `dir`. Every file depends only on the plan.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("figures"))?;
        let t2: Vec<Table2Row> = self
            .estimates
            .iter()
            .map(|e| Table2Row {
                parameter: &e.parameter,
                model: e.model,
                t1: e.t1,
                mean: e.mean,
                sd: e.sd,
            })
            .collect();
        write_rows(&dir.join("table2.csv"), &t2)?;
        let td: Vec<DurationCsvRow> = self
            .durations
            .iter()
            .map(|d| DurationCsvRow {
                model: d.model,
                t1: d.t1,
                mean: d.mean,
                sd: d.sd,
                pct_bias: d.pct_bias,
                coverage: d.coverage,
            })
            .collect();
        write_rows(&dir.join(self.plan.duration_table()), &td)?;
        write_rows(
            &dir.join("figures/param_dist.csv"),
            &export_figure_data(&self.records, FigureKind::ParamDist),
        )?;
        write_rows(
            &dir.join("figures/duration_dist.csv"),
            &export_figure_data(&self.records, FigureKind::DurationDist),
        )?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
