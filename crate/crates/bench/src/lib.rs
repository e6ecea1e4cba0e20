//! Benchmark fixtures.

use wardsource_core::synth::{synthetic_ward, SynthConfig};
use wardsource_core::WardSnapshot;

/// A fully observed ward with `candidates` cases over `days` days.
pub fn full_ward(candidates: usize, days: i64, genome_length: usize) -> WardSnapshot {
    synthetic_ward(&SynthConfig {
        seed: 2024,
        candidates,
        days,
        genome_length,
        sequenced_fraction: 1.0,
        admitted_fraction: 1.0,
        location_coverage: 0.9,
        weights: 40,
        ..SynthConfig::default()
    })
}
