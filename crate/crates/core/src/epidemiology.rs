//! Onset-time likelihood terms and the infector-relative transmission profile.
//!
//! All integrals over the unknown infection day are daily sums on the
//! internal day axis (days since the epidemic start).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{
    log_sum_exp, waiting_time_log_mass_unchecked, DistributionError, LogProb, WaitingTimeModel,
};
use crate::Day;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpidemiologyError {
    #[error("case `{id}`: {field} day {day} precedes the epidemic start day {start}")]
    BeforeEpidemicStart {
        id: String,
        field: &'static str,
        day: Day,
        start: Day,
    },
    #[error("case `{id}`: admission day {admission} is after onset day {onset}")]
    AdmissionAfterOnset { id: String, admission: Day, onset: Day },
    #[error("epidemic frame ends ({end}) before it starts ({start})")]
    InvalidFrame { start: Day, end: Day },
    #[error("invalid transmission profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// Epidemiological facts for one person, on the internal day axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub onset: Day,
    pub admission: Option<Day>,
    pub sample_time: Option<Day>,
    pub has_sequence: bool,
}

impl CaseRecord {
    pub fn new(id: impl Into<String>, onset: Day) -> Self {
        CaseRecord {
            id: id.into(),
            onset,
            admission: None,
            sample_time: None,
            has_sequence: false,
        }
    }

    pub fn with_admission(mut self, admission: Day) -> Self {
        self.admission = Some(admission);
        self
    }

    pub fn with_sample_time(mut self, sample_time: Day) -> Self {
        self.sample_time = Some(sample_time);
        self
    }

    /// Sampling day for genetic terms; falls back to onset when unrecorded.
    pub fn sampling_day(&self) -> Day {
        self.sample_time.unwrap_or(self.onset)
    }

    pub fn validate(&self, frame: &EpidemicFrame) -> Result<(), EpidemiologyError> {
        let before = |field, day| EpidemiologyError::BeforeEpidemicStart {
            id: self.id.clone(),
            field,
            day,
            start: frame.start,
        };
        if self.onset < frame.start {
            return Err(before("onset", self.onset));
        }
        if let Some(a) = self.admission {
            if a < frame.start {
                return Err(before("admission", a));
            }
            if a > self.onset {
                return Err(EpidemiologyError::AdmissionAfterOnset {
                    id: self.id.clone(),
                    admission: a,
                    onset: self.onset,
                });
            }
        }
        if let Some(s) = self.sample_time {
            if s < frame.start {
                return Err(before("sample", s));
            }
        }
        Ok(())
    }
}

/// Modelled window of the epidemic on the internal day axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpidemicFrame {
    pub start: Day,
    pub end: Day,
}

impl EpidemicFrame {
    pub fn new(start: Day, end: Day) -> Result<Self, EpidemiologyError> {
        if end < start {
            return Err(EpidemiologyError::InvalidFrame { start, end });
        }
        Ok(EpidemicFrame { start, end })
    }

    pub fn contains(&self, day: Day) -> bool {
        (self.start..=self.end).contains(&day)
    }
}

/// Probability of the infectee's infection day relative to the infector's
/// onset day, as a table over a contiguous run of offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionProfile {
    start_offset: i64,
    masses: Vec<f64>,
}

impl Default for TransmissionProfile {
    fn default() -> Self {
        TransmissionProfile::shifted_lognormal(-3, 7, 4.0, 4.0f64.ln(), 0.5)
            .expect("default profile parameters are valid")
    }
}

impl TransmissionProfile {
    pub fn new(start_offset: i64, masses: Vec<f64>) -> Result<Self, EpidemiologyError> {
        if masses.is_empty() {
            return Err(EpidemiologyError::InvalidProfile("no offsets".into()));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(EpidemiologyError::InvalidProfile(format!("mass {m} is not a probability")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EpidemiologyError::InvalidProfile(format!("masses sum to {total}, not 1")));
        }
        Ok(TransmissionProfile {
            start_offset,
            masses,
        })
    }

    /// Discretised `X - shift` with `X` lognormal, restricted to offsets
    /// `min_offset..=max_offset` and renormalised over that range.
    pub fn shifted_lognormal(
        min_offset: i64,
        max_offset: i64,
        shift: f64,
        meanlog: f64,
        sdlog: f64,
    ) -> Result<Self, EpidemiologyError> {
        if max_offset < min_offset {
            return Err(EpidemiologyError::InvalidProfile("empty offset range".into()));
        }
        let law = WaitingTimeModel::new(meanlog, sdlog, Default::default())?;
        let raw: Vec<f64> = (min_offset..=max_offset)
            .map(|k| {
                let lo = k as f64 + shift;
                (law.sf(lo) - law.sf(lo + 1.0)).max(0.0)
            })
            .collect();
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(EpidemiologyError::InvalidProfile("no mass in offset range".into()));
        }
        TransmissionProfile::new(min_offset, raw.iter().map(|m| m / total).collect())
    }

    pub fn start_offset(&self) -> i64 {
        self.start_offset
    }

    pub fn end_offset(&self) -> i64 {
        self.start_offset + self.masses.len() as i64 - 1
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, offset: i64) -> f64 {
        usize::try_from(offset - self.start_offset)
            .ok()
            .and_then(|i| self.masses.get(i))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Uniform infection day over `[from, to]`, followed by the waiting time to `onset`.
fn uniform_window_log_lik(onset: Day, from: Day, to: Day, wt: &WaitingTimeModel) -> LogProb {
    if to < from {
        return LogProb::ZERO;
    }
    let width = (to - from + 1) as f64;
    window_log_sum(onset, from, to, wt) + LogProb(-width.ln())
}

/// `log sum_{t=from}^{to} P(T_w = onset - t)`, unweighted.
pub fn window_log_sum(onset: Day, from: Day, to: Day, wt: &WaitingTimeModel) -> LogProb {
    if to < from {
        return LogProb::ZERO;
    }
    let terms: Vec<LogProb> = (from..=to)
        .map(|t| onset_given_infection_log_lik(onset, t, wt))
        .collect();
    log_sum_exp(&terms).expect("window is non-empty")
}

/// Onset likelihood for infection acquired outside hospital, i.e. between
/// the epidemic start and admission. Without an admission date it is 1.
pub fn onset_log_lik_community(
    b: &CaseRecord,
    wt: &WaitingTimeModel,
    frame: &EpidemicFrame,
) -> Result<LogProb, EpidemiologyError> {
    wt.validate()?;
    b.validate(frame)?;
    Ok(match b.admission {
        None => LogProb::ONE,
        Some(admission) => uniform_window_log_lik(b.onset, frame.start, admission, wt),
    })
}

/// Onset likelihood for infection acquired in hospital, i.e. between
/// admission and onset. Without an admission date it is 1.
pub fn onset_log_lik_hospital(
    b: &CaseRecord,
    wt: &WaitingTimeModel,
    frame: &EpidemicFrame,
) -> Result<LogProb, EpidemiologyError> {
    wt.validate()?;
    b.validate(frame)?;
    Ok(match b.admission {
        None => LogProb::ONE,
        Some(admission) => uniform_window_log_lik(b.onset, admission, b.onset, wt),
    })
}

/// Marginal onset likelihood of a candidate, infection uniform on `[start, onset]`.
pub fn candidate_onset_log_lik(
    a: &CaseRecord,
    wt: &WaitingTimeModel,
    frame: &EpidemicFrame,
) -> Result<LogProb, EpidemiologyError> {
    wt.validate()?;
    if a.onset < frame.start {
        return Err(EpidemiologyError::BeforeEpidemicStart {
            id: a.id.clone(),
            field: "onset",
            day: a.onset,
            start: frame.start,
        });
    }
    Ok(uniform_window_log_lik(a.onset, frame.start, a.onset, wt))
}

/// Probability that the focal case was infected on day `t` given the
/// infector's onset. Days outside `[frame.start, b_onset]` are impossible and
/// the clipped mass is not redistributed.
pub fn transmission_time_log_mass(
    t: Day,
    a_onset: Day,
    profile: &TransmissionProfile,
    frame: &EpidemicFrame,
    b_onset: Day,
) -> LogProb {
    if t < frame.start || t > b_onset {
        return LogProb::ZERO;
    }
    LogProb(profile.mass(t - a_onset).ln())
}

pub fn onset_given_infection_log_lik(b_onset: Day, t: Day, wt: &WaitingTimeModel) -> LogProb {
    if b_onset < t {
        return LogProb::ZERO;
    }
    waiting_time_log_mass_unchecked(b_onset - t, wt)
}
