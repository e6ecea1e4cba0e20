//! Bayesian attribution of a hospital patient's infection source.
//!
//! Given a ward's symptom onsets, admissions, co-location records and
//! pathogen genomes, the engine scores each other patient as the direct
//! source, an unidentified hospital source, or the community, and returns
//! a normalised posterior over those hypotheses for each focal patient.
//!
//! Days are integers counted from the start of the modelled period.

pub mod contact;
pub mod distributions;
pub mod epidemiology;
pub mod genomics;
pub mod inference;
pub mod ingest;
pub mod report;
pub mod synth;

/// Day index relative to the start of the modelled period.
pub type Day = i64;

pub use contact::{ContactHistory, ContactStatus};
pub use distributions::{Discretization, LogProb, WaitingTimeModel};
pub use epidemiology::{CaseRecord, EpidemicFrame, TransmissionProfile};
pub use genomics::{Alignment, ErrorTerm, PathogenGeneticParams};
pub use inference::{
    AblationStage, DataSource, DataToggles, Engine, Hypothesis, InferenceError, PosteriorEntry, SourcePosterior,
    SourcePrior,
};
pub use ingest::{load_ward, IngestError, LoadedWard, ModelParams, WardInput, WardPaths, WardSnapshot, Warning};
