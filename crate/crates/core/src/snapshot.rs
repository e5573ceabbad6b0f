//! Per-centre sufficient statistics at an interim time, and the flat
//! patient table used to exchange interim data.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::trial::{classify_patient, Status, Trial};

/// Interim data of one centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentreSnapshot<T> {
    pub centre_id: usize,
    pub opening: T,
    /// Time open at the interim, `max(t1 − u_i, 0)`.
    pub tau: T,
    /// Arrivals `n_i`.
    pub n: u64,
    /// Randomized `k_i`.
    pub k: u64,
    /// Not lost upon arrival, `k̃_i = k_i + l_i + ν_i`.
    pub k_tilde: u64,
    /// Lost during screening `l_i`.
    pub l: u64,
    /// `T_i = Σ_j (s_{i,j} − t_{i,j})` over all the centre's patients.
    pub t_screen_sum: T,
    /// Arrival times of patients still in screening (the set Ω_i).
    pub pending_arrivals: Vec<T>,
}

impl<T: Real> CentreSnapshot<T> {
    pub fn empty(centre_id: usize, opening: T, t1: T) -> Self {
        Self {
            centre_id,
            opening,
            tau: (t1 - opening).max(T::zero()),
            n: 0,
            k: 0,
            k_tilde: 0,
            l: 0,
            t_screen_sum: T::zero(),
            pending_arrivals: Vec::new(),
        }
    }

    /// ν_i = |Ω_i|.
    pub fn nu(&self) -> u64 {
        self.pending_arrivals.len() as u64
    }

    /// Patients with a known outcome, `n_i − ν_i`.
    pub fn resolved(&self) -> u64 {
        self.n - self.nu()
    }

    pub fn is_open(&self) -> bool {
        self.tau > T::zero()
    }

    fn record(&mut self, status: Status, arrival: T, last_seen: T) {
        self.n += 1;
        self.t_screen_sum = self.t_screen_sum + (last_seen - arrival).max(T::zero());
        match status {
            Status::LostOnArrival => {}
            Status::Randomized => {
                self.k += 1;
                self.k_tilde += 1;
            }
            Status::LostInScreening => {
                self.l += 1;
                self.k_tilde += 1;
            }
            Status::InScreening => {
                self.k_tilde += 1;
                self.pending_arrivals.push(arrival);
            }
        }
    }

    fn cast<U: Real>(&self) -> CentreSnapshot<U> {
        let c = |x: T| U::lit(x.as_f64());
        CentreSnapshot {
            centre_id: self.centre_id,
            opening: c(self.opening),
            tau: c(self.tau),
            n: self.n,
            k: self.k,
            k_tilde: self.k_tilde,
            l: self.l,
            t_screen_sum: c(self.t_screen_sum),
            pending_arrivals: self.pending_arrivals.iter().map(|&a| c(a)).collect(),
        }
    }
}

/// Sufficient statistics of every centre at interim time `t1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterimSnapshot<T> {
    pub t1: T,
    pub screening_window: T,
    pub centres: Vec<CentreSnapshot<T>>,
}

impl<T: Real> InterimSnapshot<T> {
    /// Centres open at the interim time; closed centres carry no information.
    pub fn open_centres(&self) -> impl Iterator<Item = &CentreSnapshot<T>> {
        self.centres.iter().filter(|c| c.is_open())
    }

    pub fn total_arrivals(&self) -> u64 {
        self.centres.iter().map(|c| c.n).sum()
    }

    pub fn total_randomized(&self) -> u64 {
        self.centres.iter().map(|c| c.k).sum()
    }

    pub fn total_pending(&self) -> u64 {
        self.centres.iter().map(|c| c.nu()).sum()
    }

    /// Converts the snapshot to another scalar type.
    pub fn cast<U: Real>(&self) -> InterimSnapshot<U> {
        InterimSnapshot {
            t1: U::lit(self.t1.as_f64()),
            screening_window: U::lit(self.screening_window.as_f64()),
            centres: self.centres.iter().map(|c| c.cast()).collect(),
        }
    }
}

/// Aggregates patient statuses at `t1` into per-centre statistics.
pub fn take_snapshot(trial: &Trial, window: f64, t1: f64) -> Result<InterimSnapshot<f64>> {
    if !(t1 > 0.0 && t1.is_finite()) {
        return Err(Error::Precondition(format!("interim time must be > 0, got {t1}")));
    }
    let mut centres: Vec<CentreSnapshot<f64>> = trial
        .openings
        .iter()
        .enumerate()
        .map(|(i, &u)| CentreSnapshot::empty(i, u, t1))
        .collect();
    for p in trial.patients.iter().take_while(|p| p.arrival <= t1) {
        let s = classify_patient(p, window, t1)?;
        centres[p.centre_id].record(s.status, p.arrival, s.last_seen);
    }
    Ok(InterimSnapshot {
        t1,
        screening_window: window,
        centres,
    })
}

/// One row of the patient interchange table. A row without an arrival time
/// declares a centre that has not recruited anyone yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRow {
    pub centre_id: usize,
    pub opening_time: f64,
    pub arrival_time: Option<f64>,
    pub last_seen_time: Option<f64>,
    pub status: Option<Status>,
}

/// Patient-level interim data, as exported by `simulate` and consumed by
/// `estimate` / `predict`.
///
/// Statuses describe each patient as of the time the table was written;
/// [`PatientTable::snapshot_at`] rewinds them to any earlier interim time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PatientTable {
    pub rows: Vec<PatientRow>,
}

pub const PATIENT_CSV_HEADER: [&str; 5] =
    ["centre_id", "opening_time", "arrival_time", "last_seen_time", "status"];

impl PatientTable {
    /// Observes a generated trial at time `t_obs`.
    pub fn from_trial(trial: &Trial, window: f64, t_obs: f64) -> Result<Self> {
        let mut rows = Vec::new();
        let mut seen = vec![false; trial.openings.len()];
        for p in trial.patients.iter().take_while(|p| p.arrival <= t_obs) {
            let s = classify_patient(p, window, t_obs)?;
            seen[p.centre_id] = true;
            rows.push(PatientRow {
                centre_id: p.centre_id,
                opening_time: trial.openings[p.centre_id],
                arrival_time: Some(p.arrival),
                last_seen_time: Some(s.last_seen),
                status: Some(s.status),
            });
        }
        for (c, _) in seen.iter().enumerate().filter(|(_, s)| !**s) {
            rows.push(PatientRow {
                centre_id: c,
                opening_time: trial.openings[c],
                arrival_time: None,
                last_seen_time: None,
                status: None,
            });
        }
        Ok(Self { rows })
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        for required in &PATIENT_CSV_HEADER[..4] {
            if !headers.iter().any(|h| h == *required) {
                return Err(Error::DataMismatch(format!("missing column `{required}`")));
            }
        }
        let status_col = headers.iter().position(|h| h == "status");
        let idx = |name: &str| headers.iter().position(|h| h == name).expect("checked above");
        let (ci, oi, ai, li) = (idx("centre_id"), idx("opening_time"), idx("arrival_time"), idx("last_seen_time"));
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let num = |i: usize, name: &str| -> Result<Option<f64>> {
                let s = field(i);
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::DataMismatch(format!("row {}: bad {name} `{s}`", line + 2)))
            };
            let centre_id = field(ci)
                .parse::<usize>()
                .map_err(|_| Error::DataMismatch(format!("row {}: bad centre_id", line + 2)))?;
            let opening_time = num(oi, "opening_time")?
                .ok_or_else(|| Error::DataMismatch(format!("row {}: missing opening_time", line + 2)))?;
            let status = match status_col.map(field) {
                Some(s) if !s.is_empty() => Some(s.parse::<Status>()?),
                _ => None,
            };
            rows.push(PatientRow {
                centre_id,
                opening_time,
                arrival_time: num(ai, "arrival_time")?,
                last_seen_time: num(li, "last_seen_time")?,
                status,
            });
        }
        Ok(Self { rows })
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(PATIENT_CSV_HEADER)?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.centre_id.to_string(),
                r.opening_time.to_string(),
                opt(r.arrival_time),
                opt(r.last_seen_time),
                r.status.map(|s| s.as_str().to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Whether every patient row carries an explicit status.
    pub fn has_status(&self) -> bool {
        self.rows
            .iter()
            .filter(|r| r.arrival_time.is_some())
            .all(|r| r.status.is_some())
    }

    /// Whether the rows distinguish screening losses from arrival losses
    /// (i.e. carry the information models B need).
    pub fn has_screening_detail(&self) -> bool {
        self.rows
            .iter()
            .filter(|r| r.arrival_time.is_some())
            .all(|r| r.last_seen_time.is_some() && r.status.is_some())
    }

    /// Screening window implied by the randomized rows, `s − t`, or 0 when
    /// nobody has been randomized.
    pub fn infer_screening_window(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.status == Some(Status::Randomized))
            .filter_map(|r| Some(r.last_seen_time? - r.arrival_time?))
            .fold(0.0, f64::max)
    }

    /// Rebuilds the snapshot at `t1` for screening window `window`.
    ///
    /// Rows without a status are derived from `last_seen − arrival`: zero
    /// means lost upon arrival (only meaningful when `window > 0`), a full
    /// window means randomized, anything shorter means still in screening.
    pub fn snapshot_at(&self, t1: f64, window: f64) -> Result<InterimSnapshot<f64>> {
        if !(t1 > 0.0 && t1.is_finite()) {
            return Err(Error::Precondition(format!("interim time must be > 0, got {t1}")));
        }
        let n_centres = self.rows.iter().map(|r| r.centre_id + 1).max().unwrap_or(0);
        let mut openings: Vec<Option<f64>> = vec![None; n_centres];
        for r in &self.rows {
            match openings[r.centre_id] {
                None => openings[r.centre_id] = Some(r.opening_time),
                Some(u) if u != r.opening_time => {
                    return Err(Error::DataMismatch(format!(
                        "centre {} has conflicting opening times {u} and {}",
                        r.centre_id, r.opening_time
                    )))
                }
                _ => {}
            }
        }
        let mut centres: Vec<CentreSnapshot<f64>> = openings
            .iter()
            .enumerate()
            .map(|(i, u)| CentreSnapshot::empty(i, u.unwrap_or(f64::INFINITY), t1))
            .collect();
        let tol = 1e-9;
        for r in &self.rows {
            let Some(a) = r.arrival_time else { continue };
            if a > t1 {
                continue;
            }
            if a < r.opening_time - tol {
                return Err(Error::DataMismatch(format!(
                    "centre {}: arrival {a} precedes opening {}",
                    r.centre_id, r.opening_time
                )));
            }
            let s = r.last_seen_time.ok_or_else(|| {
                Error::DataMismatch(format!("centre {}: arrival {a} has no last_seen_time", r.centre_id))
            })?;
            if s < a - tol {
                return Err(Error::DataMismatch(format!(
                    "centre {}: last_seen {s} precedes arrival {a}",
                    r.centre_id
                )));
            }
            let status = match r.status {
                Some(st) => st,
                None => derive_status(a, s, window)?,
            };
            let (status, last_seen) = rewind(status, a, s, t1);
            centres[r.centre_id].record(status, a, last_seen);
        }
        Ok(InterimSnapshot {
            t1,
            screening_window: window,
            centres,
        })
    }
}

fn derive_status(arrival: f64, last_seen: f64, window: f64) -> Result<Status> {
    let held = last_seen - arrival;
    if window <= 0.0 {
        return Err(Error::DataMismatch(
            "status column is required when there is no screening window".into(),
        ));
    }
    Ok(if held <= 0.0 {
        Status::LostOnArrival
    } else if held >= window - 1e-9 {
        Status::Randomized
    } else {
        Status::InScreening
    })
}

/// Status at `t1` of a patient whose status was recorded later.
fn rewind(status: Status, arrival: f64, last_seen: f64, t1: f64) -> (Status, f64) {
    match status {
        Status::LostOnArrival => (Status::LostOnArrival, arrival),
        Status::Randomized | Status::LostInScreening if last_seen <= t1 => (status, last_seen),
        Status::Randomized | Status::LostInScreening | Status::InScreening => {
            (Status::InScreening, last_seen.min(t1))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::PatientRecord;
    use approx::assert_abs_diff_eq;

    fn toy_trial() -> Trial {
        let p = |arrival, chi, z| PatientRecord {
            centre_id: 0,
            index: 0,
            arrival,
            chi,
            z,
        };
        Trial {
            latents: vec![],
            openings: vec![0.0],
            patients: vec![p(0.5, true, Some(1.0)), p(1.0, false, Some(0.5)), p(2.9, false, Some(0.5))],
            horizon: 10.0,
        }
    }

    #[test]
    fn empty_trial() {
        let trial = Trial {
            latents: vec![],
            openings: vec![0.0, 0.5],
            patients: vec![],
            horizon: 5.0,
        };
        let snap = take_snapshot(&trial, 0.2, 1.0).unwrap();
        assert_eq!(snap.centres.len(), 2);
        for c in &snap.centres {
            assert_eq!((c.n, c.k, c.k_tilde, c.l, c.nu()), (0, 0, 0, 0, 0));
            assert_eq!(c.t_screen_sum, 0.0);
        }
        assert_eq!(snap.centres[1].tau, 0.5);
    }

    #[test]
    fn hand_traced_centre() {
        let snap = take_snapshot(&toy_trial(), 0.2, 3.0).unwrap();
        let c = &snap.centres[0];
        assert_eq!((c.n, c.k, c.k_tilde, c.l, c.nu()), (3, 1, 2, 0, 1));
        assert_abs_diff_eq!(c.t_screen_sum, 0.3, epsilon = 1e-12);
        assert_eq!(c.pending_arrivals, vec![2.9]);
    }

    #[test]
    fn table_rewinds_to_earlier_interim() {
        let trial = toy_trial();
        let table = PatientTable::from_trial(&trial, 0.2, 10.0).unwrap();
        for t1 in [0.7, 1.1, 1.25, 3.0, 3.05, 9.0] {
            let direct = take_snapshot(&trial, 0.2, t1).unwrap();
            let rebuilt = table.snapshot_at(t1, 0.2).unwrap();
            assert_eq!(direct.centres[0].n, rebuilt.centres[0].n, "t1={t1}");
            assert_eq!(direct.centres[0].k, rebuilt.centres[0].k, "t1={t1}");
            assert_eq!(direct.centres[0].l, rebuilt.centres[0].l, "t1={t1}");
            assert_eq!(direct.centres[0].pending_arrivals, rebuilt.centres[0].pending_arrivals);
            assert_abs_diff_eq!(
                direct.centres[0].t_screen_sum,
                rebuilt.centres[0].t_screen_sum,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn csv_round_trip() {
        let table = PatientTable::from_trial(&toy_trial(), 0.2, 10.0).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = PatientTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(table, back);
    }

    #[test]
    fn status_derivation_without_column() {
        let csv = "centre_id,opening_time,arrival_time,last_seen_time\n0,0,1.0,1.0\n0,0,1.5,1.7\n0,0,2.95,3.0\n1,0.5,,\n";
        let table = PatientTable::read_csv(csv.as_bytes()).unwrap();
        assert!(!table.has_status());
        let snap = table.snapshot_at(3.0, 0.2).unwrap();
        let c = &snap.centres[0];
        assert_eq!((c.n, c.k, c.nu(), c.k_tilde), (3, 1, 1, 2));
        assert_eq!(snap.centres[1].n, 0);
        assert!(table.snapshot_at(3.0, 0.0).is_err());
    }

    #[test]
    fn missing_column_is_a_mismatch() {
        let csv = "centre_id,opening_time,arrival_time\n0,0,1.0\n";
        assert!(matches!(
            PatientTable::read_csv(csv.as_bytes()),
            Err(Error::DataMismatch(_))
        ));
    }
}
