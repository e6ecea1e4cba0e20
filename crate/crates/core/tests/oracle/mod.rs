//! Naive reference implementation of the source posterior.
//!
//! Everything here is computed in plain probability space straight from the
//! ward's raw records: no log space, no shared null product, and an explicit
//! sum over the focal case's infection day for every candidate. It shares no
//! code with the engine beyond the input types.

#![allow(dead_code)]

use statrs::distribution::{Continuous, ContinuousCDF, LogNormal};
use wardsource_core::{DataToggles, Discretization, Hypothesis, SourcePrior, WardSnapshot};

pub struct OracleEntry {
    pub hypothesis: Hypothesis,
    pub likelihood: f64,
    pub probability: f64,
}

fn waiting_prob(ward: &WardSnapshot, days: i64) -> f64 {
    if days < 0 {
        return 0.0;
    }
    let wt = &ward.params.waiting;
    let law = LogNormal::new(wt.meanlog, wt.sdlog).unwrap();
    let x = days as f64;
    match wt.discretization {
        Discretization::DayBin => law.cdf(x + 1.0) - law.cdf(x),
        Discretization::Density => law.pdf(x),
    }
}

/// Mean of the waiting-time probability of `onset - t` over infection days `from..=to`.
fn uniform_window(ward: &WardSnapshot, onset: i64, from: i64, to: i64) -> f64 {
    let mut total = 0.0;
    for t in from..=to {
        total += waiting_prob(ward, onset - t);
    }
    total / (to - from + 1) as f64
}

fn candidate_onset(ward: &WardSnapshot, id: &str) -> f64 {
    let c = &ward.cases[id];
    uniform_window(ward, c.onset, ward.frame.start, c.onset)
}

fn profile_mass(ward: &WardSnapshot, offset: i64) -> f64 {
    let p = &ward.params.profile;
    let i = offset - p.start_offset();
    if i < 0 || i as usize >= p.masses().len() {
        0.0
    } else {
        p.masses()[i as usize]
    }
}

/// (snps, comparable sites) by walking the two residue strings.
fn compare_columns(ward: &WardSnapshot, a: &str, b: &str) -> Option<(u64, u64)> {
    let aln = ward.alignment.as_ref()?;
    let x = aln.get(a)?.residues();
    let y = aln.get(b)?.residues();
    let clean = |c: u8| matches!(c.to_ascii_uppercase(), b'A' | b'C' | b'G' | b'T');
    let (mut snps, mut sites) = (0, 0);
    for (p, q) in x.iter().zip(y) {
        if clean(*p) && clean(*q) {
            sites += 1;
            if !p.eq_ignore_ascii_case(q) {
                snps += 1;
            }
        }
    }
    (sites > 0).then_some((snps, sites))
}

fn poisson(k: u64, lambda: f64) -> f64 {
    let mut p = (-lambda).exp();
    for i in 1..=k {
        p *= lambda / i as f64;
    }
    p
}

/// Poisson(lambda) plus a geometric count with success probability 1/(1+alpha).
pub fn poisson_plus_geometric(k: u64, alpha: f64, lambda: f64) -> f64 {
    let success = 1.0 / (1.0 + alpha);
    let fail = alpha / (1.0 + alpha);
    let mut total = 0.0;
    for j in 0..=k {
        total += poisson(j, lambda) * success * fail.powi((k - j) as i32);
    }
    total
}

fn error_expectation(ward: &WardSnapshot, sites: u64) -> f64 {
    match ward.params.genetic.error {
        wardsource_core::ErrorTerm::Constant(c) => c,
        wardsource_core::ErrorTerm::PerBase(e) => 2.0 * e * sites as f64,
    }
}

fn sample_day(ward: &WardSnapshot, id: &str) -> i64 {
    let c = &ward.cases[id];
    c.sample_time.unwrap_or(c.onset)
}

fn genetics(ward: &WardSnapshot, a: &str, b: &str, toggles: DataToggles) -> Option<(u64, u64)> {
    if !toggles.use_genetics {
        return None;
    }
    compare_columns(ward, a, b)
}

/// Per-day contact state: Some(true) together, Some(false) apart, None unobserved with a weight.
fn contact_days(ward: &WardSnapshot, a: &str, b: &str, toggles: DataToggles) -> Vec<(i64, Option<bool>, f64)> {
    if !toggles.use_locations {
        return Vec::new();
    }
    let la = ward.locations.get(a);
    let lb = ward.locations.get(b);
    let key = if a < b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) };
    let weights = ward.contact_weights.get(&key);
    let mut out = Vec::new();
    for d in ward.frame.start..=ward.frame.end {
        let at_a = la.and_then(|m| m.get(&d));
        let at_b = lb.and_then(|m| m.get(&d));
        let w = weights.and_then(|m| m.get(&d));
        match (at_a, at_b) {
            (Some(x), Some(y)) => out.push((d, Some(x == y), 0.0)),
            (None, None) if w.is_none() => {}
            _ => out.push((d, None, *w.unwrap_or(&ward.params.default_contact_weight))),
        }
    }
    out
}

fn null_candidate(ward: &WardSnapshot, a: &str, focal: &str, toggles: DataToggles) -> f64 {
    let mut p = candidate_onset(ward, a);
    if let Some((snps, sites)) = genetics(ward, a, focal, toggles) {
        let g = &ward.params.genetic;
        let gap = (sample_day(ward, a) - sample_day(ward, focal)).abs() as f64;
        let alpha = 2.0 * g.mu * g.gen_time * g.ne * sites as f64;
        let lambda = error_expectation(ward, sites) + gap * g.mu * sites as f64;
        p *= poisson_plus_geometric(snps, alpha, lambda);
    }
    for _ in contact_days(ward, a, focal, toggles) {
        p *= 0.5;
    }
    p
}

fn direct_candidate(ward: &WardSnapshot, a: &str, focal: &str, toggles: DataToggles) -> f64 {
    let a_onset = ward.cases[a].onset;
    let b_onset = ward.cases[focal].onset;
    let gen = genetics(ward, a, focal, toggles);
    let contact = contact_days(ward, a, focal, toggles);
    let mut sum = 0.0;
    for t in ward.frame.start..=b_onset {
        let mut term = profile_mass(ward, t - a_onset) * waiting_prob(ward, b_onset - t);
        if let Some((snps, sites)) = gen {
            let g = &ward.params.genetic;
            let days = (sample_day(ward, focal) - t).abs() + (sample_day(ward, a) - t).abs();
            let lambda = days as f64 * g.mu * sites as f64 + error_expectation(ward, sites);
            term *= poisson(snps, lambda);
        }
        if !contact.is_empty() {
            let mut listed = false;
            for (d, state, w) in &contact {
                if *d == t {
                    listed = true;
                    term *= match state {
                        Some(true) => 1.0,
                        Some(false) => 0.0,
                        None => *w,
                    };
                } else {
                    term *= 0.5;
                }
            }
            if !listed {
                term *= ward.params.default_contact_weight;
            }
        }
        sum += term;
    }
    candidate_onset(ward, a) * sum
}

fn focal_onset(ward: &WardSnapshot, focal: &str, toggles: DataToggles, hospital: bool) -> f64 {
    let b = &ward.cases[focal];
    match b.admission {
        Some(ta) if toggles.use_admissions => {
            if hospital {
                uniform_window(ward, b.onset, ta, b.onset)
            } else {
                uniform_window(ward, b.onset, ward.frame.start, ta)
            }
        }
        _ => 1.0,
    }
}

fn prior_masses(prior: &SourcePrior, n_candidates: usize) -> Vec<f64> {
    let n = n_candidates + 2;
    match prior {
        SourcePrior::Uniform => vec![1.0 / n as f64; n],
        SourcePrior::NosocomialSplit(p) => {
            let mut m = vec![p / (n - 1) as f64; n];
            m[n - 1] = 1.0 - p;
            m
        }
        SourcePrior::Weights(_) => panic!("oracle supports uniform and nosocomial-split priors"),
    }
}

/// Posterior by direct enumeration, in report order.
pub fn oracle_posterior(
    ward: &WardSnapshot,
    focal: &str,
    candidates: &[String],
    prior: &SourcePrior,
    toggles: DataToggles,
) -> Vec<OracleEntry> {
    let mut cands = candidates.to_vec();
    cands.sort();
    let mut likelihoods = Vec::new();
    for (z, a) in cands.iter().enumerate() {
        let mut l = direct_candidate(ward, a, focal, toggles);
        for (j, other) in cands.iter().enumerate() {
            if j != z {
                l *= null_candidate(ward, other, focal, toggles);
            }
        }
        likelihoods.push((Hypothesis::Candidate(a.clone()), l));
    }
    for (hyp, hospital) in [(Hypothesis::Hospital, true), (Hypothesis::Community, false)] {
        let mut l = focal_onset(ward, focal, toggles, hospital);
        for a in &cands {
            l *= null_candidate(ward, a, focal, toggles);
        }
        likelihoods.push((hyp, l));
    }
    let masses = prior_masses(prior, cands.len());
    let evidence: f64 = likelihoods.iter().zip(&masses).map(|((_, l), m)| l * m).sum();
    likelihoods
        .into_iter()
        .zip(masses)
        .map(|((hypothesis, likelihood), m)| OracleEntry {
            hypothesis,
            likelihood,
            probability: likelihood * m / evidence,
        })
        .collect()
}

/// Relative difference, with exact zeros required to match exactly.
pub fn relative_gap(engine: f64, oracle: f64) -> f64 {
    if oracle == 0.0 || engine == 0.0 {
        if engine == oracle {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        ((engine - oracle) / oracle).abs()
    }
}
