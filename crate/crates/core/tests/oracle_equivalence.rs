mod oracle;

use oracle::{oracle_posterior, poisson_plus_geometric, relative_gap};
use wardsource_core::distributions::{delaporte_log_pmf, DelaporteParams};
use wardsource_core::synth::{synthetic_ward, SynthConfig};
use wardsource_core::{DataSource, DataToggles, Discretization, Engine, SourcePrior, WaitingTimeModel};

fn small_config(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        candidates: 1 + (seed % 4) as usize,
        days: 8 + (seed % 13) as i64,
        genome_length: 300,
        location_coverage: 0.5 + 0.1 * (seed % 5) as f64,
        weights: (seed % 4) as usize,
        ..SynthConfig::default()
    }
}

fn toggle_sets() -> Vec<DataToggles> {
    let mut out = vec![DataToggles::onsets_only()];
    let mut t = DataToggles::onsets_only();
    for s in DataSource::ALL {
        t = t.with(s, true);
        out.push(t);
    }
    out.push(DataToggles::onsets_only().with(DataSource::Locations, true));
    out
}

fn check(seed: u64, config: SynthConfig, prior: &SourcePrior) {
    let ward = synthetic_ward(&config);
    let engine = Engine::new(&ward);
    for focal in ward.case_ids() {
        let candidates = engine.candidates_for(focal);
        for toggles in toggle_sets() {
            let expected = oracle_posterior(&ward, focal, &candidates, prior, toggles);
            let got = match engine.posterior(focal, &candidates, prior, toggles) {
                Ok(p) => p,
                Err(e) => {
                    let evidence: f64 = expected.iter().map(|e| e.likelihood).sum();
                    assert_eq!(evidence, 0.0, "seed {seed} focal {focal}: engine failed with {e}");
                    continue;
                }
            };
            assert_eq!(got.entries.len(), expected.len());
            for (g, e) in got.entries.iter().zip(&expected) {
                assert_eq!(g.hypothesis, e.hypothesis);
                let gap = relative_gap(g.probability, e.probability);
                assert!(
                    gap <= 1e-9,
                    "seed {seed} focal {focal} {toggles:?} {}: engine {} oracle {}",
                    g.hypothesis,
                    g.probability,
                    e.probability
                );
                let lgap = relative_gap(g.log_likelihood.prob(), e.likelihood);
                assert!(lgap <= 1e-9, "likelihood of {} for seed {seed}", g.hypothesis);
            }
        }
    }
}

#[test]
fn engine_matches_enumeration_on_small_wards() {
    for seed in 0..150 {
        check(seed, small_config(seed), &SourcePrior::Uniform);
    }
}

#[test]
fn engine_matches_enumeration_with_nosocomial_prior() {
    for seed in 200..260 {
        check(seed, small_config(seed), &SourcePrior::NosocomialSplit(0.3));
    }
}

#[test]
fn engine_matches_enumeration_with_density_waiting_times_and_per_base_error() {
    for seed in 300..340 {
        let mut config = small_config(seed);
        config.params.waiting = WaitingTimeModel::new(1.434, 0.6612, Discretization::Density).unwrap();
        config.params.genetic.error = wardsource_core::ErrorTerm::PerBase(0.0005);
        check(seed, config, &SourcePrior::Uniform);
    }
}

#[test]
fn delaporte_matches_explicit_convolution() {
    for alpha in [0.01, 1.0, 30.68, 100.0] {
        for lambda in [0.0, 0.404, 2.0] {
            let params = DelaporteParams::new(alpha, 1.0, lambda).unwrap();
            for k in 0..=50u32 {
                let engine = delaporte_log_pmf(k, &params).unwrap().0;
                let reference = poisson_plus_geometric(u64::from(k), alpha, lambda).ln();
                assert!(
                    (engine - reference).abs() <= 1e-12,
                    "alpha {alpha} lambda {lambda} k {k}: {engine} vs {reference}"
                );
            }
        }
    }
}
