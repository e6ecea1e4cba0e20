//! Co-location likelihoods for a candidate/focal pair.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::LogProb;
use crate::Day;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContactError {
    #[error("day {0} listed more than once in contact history")]
    DuplicateDay(Day),
    #[error("contact weight {weight} on day {day} is not a probability")]
    InvalidWeight { day: Day, weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "weight", rename_all = "lowercase")]
pub enum ContactStatus {
    Together,
    Apart,
    /// Not observed; the weight is the elicited probability of contact.
    Unknown(f64),
}

/// Day-by-day co-location of two people, sorted by day.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactHistory {
    days: Vec<(Day, ContactStatus)>,
}

impl ContactHistory {
    pub fn new(mut days: Vec<(Day, ContactStatus)>) -> Result<Self, ContactError> {
        days.sort_by_key(|(d, _)| *d);
        for pair in days.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(ContactError::DuplicateDay(pair[0].0));
            }
        }
        for &(day, status) in &days {
            if let ContactStatus::Unknown(w) = status {
                if !(0.0..=1.0).contains(&w) {
                    return Err(ContactError::InvalidWeight { day, weight: w });
                }
            }
        }
        Ok(ContactHistory { days })
    }

    pub fn days(&self) -> &[(Day, ContactStatus)] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn status_on(&self, day: Day) -> Option<ContactStatus> {
        self.days
            .binary_search_by_key(&day, |(d, _)| *d)
            .ok()
            .map(|i| self.days[i].1)
    }
}

/// Every listed day contributes 1/2 when the pair did not transmit, observed
/// or not.
pub fn null_contact_log_lik(h: &ContactHistory) -> LogProb {
    LogProb(-(h.len() as f64) * LN_2)
}

/// Co-location likelihood when infection happened on `t_infect`: contact on
/// that day is required, every other listed day contributes 1/2. An unlisted
/// infection day is treated as unobserved with `default_weight`.
pub fn direct_contact_log_lik(h: &ContactHistory, t_infect: Day, default_weight: f64) -> LogProb {
    let (others, infection_factor) = match h.status_on(t_infect) {
        Some(status) => {
            let factor = match status {
                ContactStatus::Together => 1.0,
                ContactStatus::Apart => 0.0,
                ContactStatus::Unknown(w) => w,
            };
            (h.len() - 1, factor)
        }
        None => (h.len(), default_weight),
    };
    LogProb(-(others as f64) * LN_2 + infection_factor.ln())
}
