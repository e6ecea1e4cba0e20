//! Hypothesis likelihoods, prior and posterior over infection sources.
//!
//! For a focal case `B` with candidates `A_1..A_n` the hypotheses are "A_z
//! infected B", "an unidentified hospital source" (H) and "the community"
//! (C). Every hypothesis shares the product of the candidates' null terms,
//! so the sum of null log-likelihoods is computed once and each candidate
//! hypothesis swaps its own null term for its direct-transmission term.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{direct_contact_log_lik, null_contact_log_lik, ContactHistory};
use crate::distributions::{log_sum_exp, LogProb};
use crate::epidemiology::{
    candidate_onset_log_lik, onset_given_infection_log_lik, onset_log_lik_community, onset_log_lik_hospital,
    transmission_time_log_mass, CaseRecord, EpidemiologyError,
};
use crate::genomics::{
    direct_genetic_log_lik, null_genetic_log_lik, GenomicsError, PairCache, PairwiseGeneticSummary,
};
use crate::ingest::{build_contact_history, WardSnapshot};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("focal case `{0}` cannot be its own candidate")]
    FocalIsCandidate(String),
    #[error("candidate `{0}` listed twice")]
    DuplicateCandidate(String),
    #[error("every hypothesis for `{0}` has zero likelihood under the prior")]
    DegenerateEvidence(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("invalid ablation order: {0}")]
    InvalidAblationOrder(String),
    #[error(transparent)]
    Epidemiology(#[from] EpidemiologyError),
    #[error(transparent)]
    Genomics(#[from] GenomicsError),
}

/// A possible source of the focal case's infection.
///
/// The derived ordering is the report order: candidates by id, then
/// hospital, then community.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum Hypothesis {
    Candidate(String),
    Hospital,
    Community,
}

impl Hypothesis {
    pub fn label(&self) -> &str {
        match self {
            Hypothesis::Candidate(id) => id,
            Hypothesis::Hospital => "Hospital",
            Hypothesis::Community => "Community",
        }
    }

    pub fn is_nosocomial(&self) -> bool {
        !matches!(self, Hypothesis::Community)
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::Candidate(id) => write!(f, "candidate:{id}"),
            Hypothesis::Hospital => f.write_str("hospital"),
            Hypothesis::Community => f.write_str("community"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Genetics,
    Locations,
    Admissions,
}

impl DataSource {
    pub const ALL: [DataSource; 3] = [DataSource::Genetics, DataSource::Locations, DataSource::Admissions];

    pub fn as_str(self) -> &'static str {
        match self {
            DataSource::Genetics => "genetics",
            DataSource::Locations => "locations",
            DataSource::Admissions => "admissions",
        }
    }
}

impl std::str::FromStr for DataSource {
    type Err = InferenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "genetics" => Ok(DataSource::Genetics),
            "locations" => Ok(DataSource::Locations),
            "admissions" => Ok(DataSource::Admissions),
            other => Err(InferenceError::InvalidAblationOrder(format!("unknown data source `{other}`"))),
        }
    }
}

/// Which optional data sources enter the likelihood. Onsets are always used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataToggles {
    pub use_genetics: bool,
    pub use_locations: bool,
    pub use_admissions: bool,
}

impl Default for DataToggles {
    fn default() -> Self {
        DataToggles::all()
    }
}

impl DataToggles {
    pub const fn all() -> Self {
        DataToggles {
            use_genetics: true,
            use_locations: true,
            use_admissions: true,
        }
    }

    pub const fn onsets_only() -> Self {
        DataToggles {
            use_genetics: false,
            use_locations: false,
            use_admissions: false,
        }
    }

    pub fn with(mut self, source: DataSource, on: bool) -> Self {
        match source {
            DataSource::Genetics => self.use_genetics = on,
            DataSource::Locations => self.use_locations = on,
            DataSource::Admissions => self.use_admissions = on,
        }
        self
    }

    pub fn uses(&self, source: DataSource) -> bool {
        match source {
            DataSource::Genetics => self.use_genetics,
            DataSource::Locations => self.use_locations,
            DataSource::Admissions => self.use_admissions,
        }
    }
}

/// Prior over the source hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "kebab-case")]
pub enum SourcePrior {
    /// Equal mass on every hypothesis.
    Uniform,
    /// Community gets `1 - p`; `p` is split equally over the candidates and H.
    NosocomialSplit(f64),
    /// Explicit non-negative weights, normalised over the hypotheses present.
    /// Hypotheses without a weight get zero.
    Weights(Vec<(Hypothesis, f64)>),
}

impl Default for SourcePrior {
    fn default() -> Self {
        SourcePrior::Uniform
    }
}

impl SourcePrior {
    /// Prior masses aligned with `hypotheses`, summing to 1.
    pub fn masses(&self, hypotheses: &[Hypothesis]) -> Result<Vec<f64>, InferenceError> {
        let n = hypotheses.len() as f64;
        match self {
            SourcePrior::Uniform => Ok(vec![1.0 / n; hypotheses.len()]),
            SourcePrior::NosocomialSplit(p) => {
                if !(0.0..=1.0).contains(p) {
                    return Err(InferenceError::InvalidPrior(format!(
                        "nosocomial probability {p} is outside [0, 1]"
                    )));
                }
                let share = p / (n - 1.0);
                Ok(hypotheses
                    .iter()
                    .map(|h| if h.is_nosocomial() { share } else { 1.0 - p })
                    .collect())
            }
            SourcePrior::Weights(weights) => {
                if let Some((h, w)) = weights.iter().find(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
                    return Err(InferenceError::InvalidPrior(format!("weight {w} for {h}")));
                }
                let raw: Vec<f64> = hypotheses
                    .iter()
                    .map(|h| weights.iter().filter(|(k, _)| k == h).map(|(_, w)| w).sum())
                    .collect();
                let total: f64 = raw.iter().sum();
                if total <= 0.0 {
                    return Err(InferenceError::InvalidPrior("weights sum to zero".into()));
                }
                Ok(raw.into_iter().map(|w| w / total).collect())
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            SourcePrior::Uniform => "uniform".into(),
            SourcePrior::NosocomialSplit(p) => format!("noso:{p}"),
            SourcePrior::Weights(_) => "weights".into(),
        }
    }
}

impl std::str::FromStr for SourcePrior {
    type Err = InferenceError;

    /// `uniform` or `noso:<p>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "uniform" {
            return Ok(SourcePrior::Uniform);
        }
        if let Some(p) = s.strip_prefix("noso:") {
            let p: f64 = p
                .parse()
                .map_err(|_| InferenceError::InvalidPrior(format!("`{p}` is not a number")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(InferenceError::InvalidPrior(format!(
                    "nosocomial probability {p} is outside [0, 1]"
                )));
            }
            return Ok(SourcePrior::NosocomialSplit(p));
        }
        Err(InferenceError::InvalidPrior(format!(
            "`{s}` (expected `uniform` or `noso:<p>`)"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEntry {
    pub hypothesis: Hypothesis,
    pub prior: f64,
    pub log_likelihood: LogProb,
    pub probability: f64,
}

/// Normalised posterior over all hypotheses for one focal case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePosterior {
    pub focal: String,
    /// In report order: candidates by id, then hospital, then community.
    pub entries: Vec<PosteriorEntry>,
    /// Sum of the candidate and hospital probabilities.
    pub nosocomial: f64,
    pub toggles: DataToggles,
}

impl SourcePosterior {
    pub fn probability(&self, hypothesis: &Hypothesis) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| &e.hypothesis == hypothesis)
            .map(|e| e.probability)
    }

    pub fn log_likelihood(&self, hypothesis: &Hypothesis) -> Option<LogProb> {
        self.entries
            .iter()
            .find(|e| &e.hypothesis == hypothesis)
            .map(|e| e.log_likelihood)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.probability).sum()
    }

    /// Most probable hypothesis; ties go to the first in report order, which
    /// for candidates is the lexicographically smallest id.
    pub fn most_likely(&self) -> &PosteriorEntry {
        self.entries
            .iter()
            .fold(&self.entries[0], |best, e| if e.probability > best.probability { e } else { best })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationStage {
    /// `onsets` for the first stage, otherwise the source added at this stage.
    pub stage: String,
    pub posterior: SourcePosterior,
}

/// Evidence shared by the null and direct terms of one candidate/focal pair.
struct PairEvidence<'w> {
    candidate: &'w CaseRecord,
    focal: &'w CaseRecord,
    onset: LogProb,
    genetics: Option<PairwiseGeneticSummary>,
    contact: Option<ContactHistory>,
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    if sum.is_finite() {
        sum + comp
    } else {
        sum
    }
}

/// Posterior engine over one immutable ward snapshot.
///
/// Pairwise alignment reductions are memoised for the lifetime of the engine;
/// the engine is `Sync` and may be shared across threads.
pub struct Engine<'w> {
    ward: &'w WardSnapshot,
    pairs: PairCache,
}

impl<'w> Engine<'w> {
    pub fn new(ward: &'w WardSnapshot) -> Self {
        Engine {
            ward,
            pairs: PairCache::new(),
        }
    }

    pub fn ward(&self) -> &'w WardSnapshot {
        self.ward
    }

    fn case(&self, id: &str) -> Result<&'w CaseRecord, InferenceError> {
        self.ward
            .case(id)
            .ok_or_else(|| InferenceError::UnknownCase(id.to_string()))
    }

    /// Every other case on the ward, in id order.
    pub fn candidates_for(&self, focal: &str) -> Vec<String> {
        self.ward.case_ids().filter(|id| *id != focal).map(str::to_string).collect()
    }

    fn pair_evidence(&self, az: &str, focal: &str, toggles: DataToggles) -> Result<PairEvidence<'w>, InferenceError> {
        let candidate = self.case(az)?;
        let focal_case = self.case(focal)?;
        let params = &self.ward.params;
        let onset = candidate_onset_log_lik(candidate, &params.waiting, &self.ward.frame)?;

        let genetics = match &self.ward.alignment {
            Some(aln) if toggles.use_genetics && candidate.has_sequence && focal_case.has_sequence => {
                let sites = self.pairs.sites(aln, az, focal)?;
                let gap = candidate.sampling_day().abs_diff(focal_case.sampling_day());
                let summary = PairwiseGeneticSummary::new(sites, u32::try_from(gap).unwrap_or(u32::MAX));
                (summary.effective_length > 0).then_some(summary)
            }
            _ => None,
        };
        let contact = if toggles.use_locations {
            Some(build_contact_history(self.ward, az, focal)).filter(|h| !h.is_empty())
        } else {
            None
        };
        Ok(PairEvidence {
            candidate,
            focal: focal_case,
            onset,
            genetics,
            contact,
        })
    }

    fn null_from(&self, ev: &PairEvidence<'_>) -> Result<LogProb, InferenceError> {
        let mut total = ev.onset;
        if let Some(summary) = &ev.genetics {
            total += null_genetic_log_lik(summary, &self.ward.params.genetic)?;
        }
        if let Some(history) = &ev.contact {
            total += null_contact_log_lik(history);
        }
        Ok(total)
    }

    fn direct_from(&self, ev: &PairEvidence<'_>) -> Result<LogProb, InferenceError> {
        let params = &self.ward.params;
        let frame = &self.ward.frame;
        let a_onset = ev.candidate.onset;
        let b_onset = ev.focal.onset;
        let first = frame.start.max(a_onset + params.profile.start_offset());
        let last = b_onset.min(a_onset + params.profile.end_offset());
        if last < first {
            return Ok(LogProb::ZERO);
        }
        let (sample_b, sample_a) = (ev.focal.sampling_day(), ev.candidate.sampling_day());
        let mut terms = Vec::with_capacity((last - first + 1) as usize);
        for t in first..=last {
            let mut term = transmission_time_log_mass(t, a_onset, &params.profile, frame, b_onset)
                + onset_given_infection_log_lik(b_onset, t, &params.waiting);
            if let Some(summary) = &ev.genetics {
                term += direct_genetic_log_lik(summary, t, sample_b, sample_a, &params.genetic)?;
            }
            if let Some(history) = &ev.contact {
                term += direct_contact_log_lik(history, t, params.default_contact_weight);
            }
            terms.push(term);
        }
        Ok(ev.onset + log_sum_exp(&terms).expect("window is non-empty"))
    }

    /// Likelihood of the candidate's data when it did not infect the focal case.
    pub fn log_lik_null_candidate(&self, az: &str, focal: &str, toggles: DataToggles) -> Result<LogProb, InferenceError> {
        let ev = self.pair_evidence(az, focal, toggles)?;
        self.null_from(&ev)
    }

    /// Joint likelihood of the pair's data when `az` infected `focal`, summed
    /// over the focal case's unknown infection day.
    pub fn log_lik_direct_pair(&self, az: &str, focal: &str, toggles: DataToggles) -> Result<LogProb, InferenceError> {
        let ev = self.pair_evidence(az, focal, toggles)?;
        self.direct_from(&ev)
    }

    fn checked_candidates(&self, focal: &str, candidates: &[String]) -> Result<Vec<String>, InferenceError> {
        self.case(focal)?;
        let mut seen = BTreeSet::new();
        for c in candidates {
            if c == focal {
                return Err(InferenceError::FocalIsCandidate(c.clone()));
            }
            self.case(c)?;
            if !seen.insert(c.clone()) {
                return Err(InferenceError::DuplicateCandidate(c.clone()));
            }
        }
        Ok(seen.into_iter().collect())
    }

    /// Log-likelihood of every hypothesis, in report order.
    pub fn hypothesis_log_liks(
        &self,
        focal: &str,
        candidates: &[String],
        toggles: DataToggles,
    ) -> Result<Vec<(Hypothesis, LogProb)>, InferenceError> {
        let candidates = self.checked_candidates(focal, candidates)?;
        let focal_case = self.case(focal)?;
        let mut nulls = Vec::with_capacity(candidates.len());
        let mut directs = Vec::with_capacity(candidates.len());
        for c in &candidates {
            let ev = self.pair_evidence(c, focal, toggles)?;
            nulls.push(self.null_from(&ev)?.0);
            directs.push(self.direct_from(&ev)?.0);
        }

        let mut out = Vec::with_capacity(candidates.len() + 2);
        let factorised = nulls.iter().all(|v| v.is_finite());
        let shared = compensated_sum(nulls.iter().copied());
        // residual of the rounded shared sum, carried into each swap
        let residual = if factorised {
            compensated_sum(nulls.iter().copied().chain([-shared]))
        } else {
            0.0
        };
        for (z, c) in candidates.iter().enumerate() {
            let ll = if factorised {
                compensated_sum([shared, residual, -nulls[z], directs[z]])
            } else {
                let others = nulls.iter().enumerate().filter(|(j, _)| *j != z).map(|(_, v)| *v);
                compensated_sum(others) + directs[z]
            };
            out.push((Hypothesis::Candidate(c.clone()), LogProb(ll)));
        }

        let mut focal_view = focal_case.clone();
        if !toggles.use_admissions {
            focal_view.admission = None;
        }
        let params = &self.ward.params;
        let hospital = onset_log_lik_hospital(&focal_view, &params.waiting, &self.ward.frame)?;
        let community = onset_log_lik_community(&focal_view, &params.waiting, &self.ward.frame)?;
        out.push((Hypothesis::Hospital, LogProb(hospital.0 + shared)));
        out.push((Hypothesis::Community, LogProb(community.0 + shared)));
        Ok(out)
    }

    /// Posterior probability of every source for `focal`.
    pub fn posterior(
        &self,
        focal: &str,
        candidates: &[String],
        prior: &SourcePrior,
        toggles: DataToggles,
    ) -> Result<SourcePosterior, InferenceError> {
        let log_liks = self.hypothesis_log_liks(focal, candidates, toggles)?;
        normalize(focal, log_liks, prior, toggles)
    }

    /// Posteriors after cumulatively enabling each source in `order`, starting
    /// from onsets only.
    pub fn ablation_sequence(
        &self,
        focal: &str,
        candidates: &[String],
        prior: &SourcePrior,
        order: &[DataSource],
    ) -> Result<Vec<AblationStage>, InferenceError> {
        let distinct: BTreeSet<_> = order.iter().collect();
        if order.len() != DataSource::ALL.len() || distinct.len() != order.len() {
            let names: Vec<_> = order.iter().map(|s| s.as_str()).collect();
            return Err(InferenceError::InvalidAblationOrder(format!(
                "`{}` is not a permutation of genetics, locations, admissions",
                names.join(",")
            )));
        }
        let mut toggles = DataToggles::onsets_only();
        let mut stages = vec![AblationStage {
            stage: "onsets".into(),
            posterior: self.posterior(focal, candidates, prior, toggles)?,
        }];
        for source in order {
            toggles = toggles.with(*source, true);
            stages.push(AblationStage {
                stage: source.as_str().into(),
                posterior: self.posterior(focal, candidates, prior, toggles)?,
            });
        }
        Ok(stages)
    }

    /// Posterior for every case on the ward against all other cases, in id order.
    pub fn all_posteriors(
        &self,
        prior: &SourcePrior,
        toggles: DataToggles,
    ) -> Vec<(String, Result<SourcePosterior, InferenceError>)> {
        self.ward
            .case_ids()
            .map(|focal| {
                let candidates = self.candidates_for(focal);
                (focal.to_string(), self.posterior(focal, &candidates, prior, toggles))
            })
            .collect()
    }
}

/// Applies the prior and normalises in log space.
pub fn normalize(
    focal: &str,
    log_liks: Vec<(Hypothesis, LogProb)>,
    prior: &SourcePrior,
    toggles: DataToggles,
) -> Result<SourcePosterior, InferenceError> {
    let hypotheses: Vec<Hypothesis> = log_liks.iter().map(|(h, _)| h.clone()).collect();
    let masses = prior.masses(&hypotheses)?;
    let joint: Vec<LogProb> = log_liks
        .iter()
        .zip(&masses)
        .map(|((_, ll), m)| if *m > 0.0 { LogProb(ll.0 + m.ln()) } else { LogProb::ZERO })
        .collect();
    let evidence = log_sum_exp(&joint).expect("at least hospital and community");
    if evidence.is_zero() || evidence.0.is_nan() {
        return Err(InferenceError::DegenerateEvidence(focal.to_string()));
    }
    let entries: Vec<PosteriorEntry> = log_liks
        .into_iter()
        .zip(masses)
        .zip(&joint)
        .map(|(((hypothesis, log_likelihood), prior), j)| PosteriorEntry {
            hypothesis,
            prior,
            log_likelihood,
            probability: (j.0 - evidence.0).exp(),
        })
        .collect();
    let nosocomial = entries
        .iter()
        .filter(|e| e.hypothesis.is_nosocomial())
        .map(|e| e.probability)
        .sum::<f64>()
        .min(1.0);
    Ok(SourcePosterior {
        focal: focal.to_string(),
        entries,
        nosocomial,
        toggles,
    })
}
