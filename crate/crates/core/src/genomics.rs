//! Alignment ingestion, pairwise column reduction and the two genetic
//! likelihood terms.
//!
//! Sequences are packed into one bit-plane per nucleotide so that a pairwise
//! reduction over a ~30 kb genome is a few hundred word operations.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{delaporte_log_pmf, poisson_log_pmf, DelaporteParams, DistributionError, LogProb};
use crate::Day;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenomicsError {
    #[error("sequence `{0}` is not in the alignment")]
    UnknownSequence(String),
    #[error("duplicate FASTA record `{0}`")]
    DuplicateRecord(String),
    #[error("FASTA record `{id}` has length {found}, expected {expected}")]
    UnequalLength { id: String, expected: usize, found: usize },
    #[error("FASTA record `{id}` contains invalid residue `{residue}` at column {column}")]
    InvalidResidue { id: String, residue: char, column: usize },
    #[error("FASTA line {line}: sequence data before the first header")]
    MissingHeader { line: usize },
    #[error("FASTA record on line {line} has an empty identifier")]
    EmptyIdentifier { line: usize },
    #[error("alignment has no columns")]
    EmptyAlignment,
    #[error("pair has no comparable columns")]
    NoComparableSites,
    #[error("invalid genetic parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("failed to read FASTA: {0}")]
    Io(String),
}

const IUPAC: &[u8] = b"ACGTNRYSWKMBDHV-.?";

#[derive(Debug, Clone, PartialEq, Eq)]
struct PackedBases {
    a: Vec<u64>,
    c: Vec<u64>,
    g: Vec<u64>,
    t: Vec<u64>,
}

impl PackedBases {
    fn pack(residues: &[u8]) -> Self {
        let words = residues.len().div_ceil(64);
        let mut packed = PackedBases {
            a: vec![0; words],
            c: vec![0; words],
            g: vec![0; words],
            t: vec![0; words],
        };
        for (col, &r) in residues.iter().enumerate() {
            let plane = match r {
                b'A' => &mut packed.a,
                b'C' => &mut packed.c,
                b'G' => &mut packed.g,
                b'T' => &mut packed.t,
                _ => continue,
            };
            plane[col / 64] |= 1u64 << (col % 64);
        }
        packed
    }
}

/// One aligned sequence: the upper-cased residues plus their bit-planes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedSequence {
    residues: Vec<u8>,
    packed: PackedBases,
}

impl AlignedSequence {
    pub fn residues(&self) -> &[u8] {
        &self.residues
    }
}

/// A pre-computed multiple-sequence alignment keyed by case id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    length: usize,
    sequences: BTreeMap<String, AlignedSequence>,
}

impl Alignment {
    /// Builds an alignment from `(id, residues)` records. Residues are
    /// case-insensitive; every record must have the same length.
    pub fn from_records<I, S>(records: I) -> Result<Self, GenomicsError>
    where
        I: IntoIterator<Item = (String, S)>,
        S: AsRef<[u8]>,
    {
        let mut sequences = BTreeMap::new();
        let mut length = None;
        for (id, raw) in records {
            let raw = raw.as_ref();
            let expected = *length.get_or_insert(raw.len());
            if raw.len() != expected {
                return Err(GenomicsError::UnequalLength {
                    id,
                    expected,
                    found: raw.len(),
                });
            }
            let mut residues = Vec::with_capacity(raw.len());
            for (column, &b) in raw.iter().enumerate() {
                let up = b.to_ascii_uppercase();
                if !IUPAC.contains(&up) {
                    return Err(GenomicsError::InvalidResidue {
                        id,
                        residue: b as char,
                        column: column + 1,
                    });
                }
                residues.push(up);
            }
            let packed = PackedBases::pack(&residues);
            if sequences.contains_key(&id) {
                return Err(GenomicsError::DuplicateRecord(id));
            }
            sequences.insert(id, AlignedSequence { residues, packed });
        }
        let length = length.unwrap_or(0);
        if !sequences.is_empty() && length == 0 {
            return Err(GenomicsError::EmptyAlignment);
        }
        Ok(Alignment { length, sequences })
    }

    /// Parses FASTA text, wrapped or single-line. The record id is the first
    /// whitespace-delimited token of the header.
    pub fn from_fasta<R: BufRead>(reader: R) -> Result<Self, GenomicsError> {
        let mut records: Vec<(String, Vec<u8>)> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| GenomicsError::Io(e.to_string()))?;
            let line = line.trim_end();
            if let Some(header) = line.strip_prefix('>') {
                let id = header.split_whitespace().next().unwrap_or("");
                if id.is_empty() {
                    return Err(GenomicsError::EmptyIdentifier { line: idx + 1 });
                }
                records.push((id.to_string(), Vec::new()));
            } else if !line.is_empty() {
                match records.last_mut() {
                    Some((_, seq)) => seq.extend(line.bytes().filter(|b| !b.is_ascii_whitespace())),
                    None => return Err(GenomicsError::MissingHeader { line: idx + 1 }),
                }
            }
        }
        Alignment::from_records(records)
    }

    pub fn from_fasta_str(text: &str) -> Result<Self, GenomicsError> {
        Alignment::from_fasta(text.as_bytes())
    }

    /// Writes single-line FASTA, records in id order.
    pub fn to_fasta(&self) -> String {
        let mut out = String::with_capacity(self.sequences.len() * (self.length + 32));
        for (id, seq) in &self.sequences {
            out.push('>');
            out.push_str(id);
            out.push('\n');
            out.push_str(std::str::from_utf8(&seq.residues).expect("residues are ASCII"));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.sequences.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.sequences.keys().map(String::as_str)
    }

    pub fn get(&self, id: &str) -> Option<&AlignedSequence> {
        self.sequences.get(id)
    }

    /// Adds or replaces records from another alignment of the same width.
    pub fn merge(&mut self, other: Alignment) -> Result<(), GenomicsError> {
        if self.sequences.is_empty() {
            *self = other;
            return Ok(());
        }
        if other.sequences.is_empty() {
            return Ok(());
        }
        if other.length != self.length {
            let id = other.sequences.keys().next().cloned().unwrap_or_default();
            return Err(GenomicsError::UnequalLength {
                id,
                expected: self.length,
                found: other.length,
            });
        }
        self.sequences.extend(other.sequences);
        Ok(())
    }

    /// Number of `(mismatching, comparable)` columns between two records.
    pub fn compare(&self, i: &str, j: &str) -> Result<SiteComparison, GenomicsError> {
        let a = self
            .get(i)
            .ok_or_else(|| GenomicsError::UnknownSequence(i.to_string()))?;
        let b = self
            .get(j)
            .ok_or_else(|| GenomicsError::UnknownSequence(j.to_string()))?;
        let (pa, pb) = (&a.packed, &b.packed);
        let mut comparable = 0u32;
        let mut snps = 0u32;
        for w in 0..pa.a.len() {
            let va = pa.a[w] | pa.c[w] | pa.g[w] | pa.t[w];
            let vb = pb.a[w] | pb.c[w] | pb.g[w] | pb.t[w];
            let both = va & vb;
            let same = (pa.a[w] & pb.a[w]) | (pa.c[w] & pb.c[w]) | (pa.g[w] & pb.g[w]) | (pa.t[w] & pb.t[w]);
            comparable += both.count_ones();
            snps += (both & !same).count_ones();
        }
        Ok(SiteComparison {
            snps,
            effective_length: comparable,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SiteComparison {
    pub snps: u32,
    pub effective_length: u32,
}

/// SNP distance, effective genome length and sampling gap for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairwiseGeneticSummary {
    pub snps: u32,
    pub effective_length: u32,
    pub sample_gap_days: u32,
}

impl PairwiseGeneticSummary {
    pub fn new(sites: SiteComparison, sample_gap_days: u32) -> Self {
        PairwiseGeneticSummary {
            snps: sites.snps,
            effective_length: sites.effective_length,
            sample_gap_days,
        }
    }
}

fn sample_gap(sample_times: (Option<Day>, Option<Day>)) -> u32 {
    match sample_times {
        (Some(a), Some(b)) => u32::try_from(a.abs_diff(b)).unwrap_or(u32::MAX),
        _ => 0,
    }
}

/// Drops every column where either record is not one of A/C/G/T and counts
/// the mismatches among the rest.
pub fn reduce_pair(
    alignment: &Alignment,
    i: &str,
    j: &str,
    sample_times: (Option<Day>, Option<Day>),
) -> Result<PairwiseGeneticSummary, GenomicsError> {
    let sites = alignment.compare(i, j)?;
    Ok(PairwiseGeneticSummary::new(sites, sample_gap(sample_times)))
}

/// Per-snapshot memo of pairwise reductions keyed by unordered pair.
#[derive(Debug, Default)]
pub struct PairCache {
    inner: RwLock<HashMap<(String, String), SiteComparison>>,
}

impl PairCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sites(&self, alignment: &Alignment, i: &str, j: &str) -> Result<SiteComparison, GenomicsError> {
        let key = if i <= j {
            (i.to_string(), j.to_string())
        } else {
            (j.to_string(), i.to_string())
        };
        if let Some(hit) = self.inner.read().expect("pair cache poisoned").get(&key) {
            return Ok(*hit);
        }
        let sites = alignment.compare(&key.0, &key.1)?;
        self.inner
            .write()
            .expect("pair cache poisoned")
            .entry(key)
            .or_insert(sites);
        Ok(sites)
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("pair cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sequencing-error contribution to the expected SNP count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "kebab-case")]
pub enum ErrorTerm {
    /// A fixed expected number of error differences per pair.
    Constant(f64),
    /// Per-base error probability `E`; contributes `2 E G_ij`.
    PerBase(f64),
}

impl ErrorTerm {
    pub fn expected_errors(self, effective_length: u32) -> f64 {
        match self {
            ErrorTerm::Constant(c) => c,
            ErrorTerm::PerBase(e) => 2.0 * e * f64::from(effective_length),
        }
    }
}

/// Pathogen constants used by both genetic likelihoods.
///
/// `mu` is in mutations per site per day and `gen_time` in days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathogenGeneticParams {
    pub ne: f64,
    pub mu: f64,
    pub gen_time: f64,
    pub error: ErrorTerm,
}

impl Default for PathogenGeneticParams {
    fn default() -> Self {
        PathogenGeneticParams {
            ne: 51.0,
            mu: 1.829e-6,
            gen_time: 5.5,
            error: ErrorTerm::Constant(0.404),
        }
    }
}

impl PathogenGeneticParams {
    pub fn validate(&self) -> Result<(), GenomicsError> {
        let check = |name: &'static str, value: f64, strict: bool| {
            let ok = value.is_finite() && if strict { value > 0.0 } else { value >= 0.0 };
            if ok {
                Ok(())
            } else {
                Err(GenomicsError::InvalidParameter { name, value })
            }
        };
        check("ne", self.ne, true)?;
        check("gen_time", self.gen_time, true)?;
        check("mu", self.mu, false)?;
        match self.error {
            ErrorTerm::Constant(c) => check("error_constant", c, false),
            ErrorTerm::PerBase(e) => {
                check("error_per_base", e, false)?;
                if e > 1.0 {
                    return Err(GenomicsError::InvalidParameter {
                        name: "error_per_base",
                        value: e,
                    });
                }
                Ok(())
            }
        }
    }

    /// Delaporte parameters for a pair that is not a transmission pair.
    pub fn null_delaporte(&self, summary: &PairwiseGeneticSummary) -> DelaporteParams {
        let g_ij = f64::from(summary.effective_length);
        DelaporteParams {
            alpha: 2.0 * self.mu * self.gen_time * self.ne * g_ij,
            beta: 1.0,
            lambda: self.error.expected_errors(summary.effective_length)
                + f64::from(summary.sample_gap_days) * self.mu * g_ij,
        }
    }

    /// Poisson rate of SNPs between infector and infectee for infection on `t_infect`.
    pub fn direct_rate(&self, summary: &PairwiseGeneticSummary, t_infect: Day, t_sample_b: Day, t_sample_a: Day) -> f64 {
        let days = (t_sample_b - t_infect).abs() + (t_sample_a - t_infect).abs();
        days as f64 * self.mu * f64::from(summary.effective_length)
            + self.error.expected_errors(summary.effective_length)
    }
}

/// Coalescent background likelihood of the SNP count for a pair that did not
/// transmit to each other.
pub fn null_genetic_log_lik(
    summary: &PairwiseGeneticSummary,
    params: &PathogenGeneticParams,
) -> Result<LogProb, GenomicsError> {
    if summary.effective_length == 0 {
        return Err(GenomicsError::NoComparableSites);
    }
    params.validate()?;
    Ok(delaporte_log_pmf(summary.snps, &params.null_delaporte(summary))?)
}

/// Likelihood of the SNP count when `a` infected `b` on day `t_infect`.
pub fn direct_genetic_log_lik(
    summary: &PairwiseGeneticSummary,
    t_infect: Day,
    t_sample_b: Day,
    t_sample_a: Day,
    params: &PathogenGeneticParams,
) -> Result<LogProb, GenomicsError> {
    if summary.effective_length == 0 {
        return Err(GenomicsError::NoComparableSites);
    }
    params.validate()?;
    let rate = params.direct_rate(summary, t_infect, t_sample_b, t_sample_a);
    Ok(poisson_log_pmf(summary.snps, rate)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(a: &str, b: &str) -> Alignment {
        Alignment::from_records(vec![("i".to_string(), a), ("j".to_string(), b)]).unwrap()
    }

    fn brute(a: &[u8], b: &[u8]) -> (u32, u32) {
        let mut snps = 0;
        let mut len = 0;
        for (&x, &y) in a.iter().zip(b) {
            let ok = |c: u8| matches!(c.to_ascii_uppercase(), b'A' | b'C' | b'G' | b'T');
            if ok(x) && ok(y) {
                len += 1;
                if x.to_ascii_uppercase() != y.to_ascii_uppercase() {
                    snps += 1;
                }
            }
        }
        (snps, len)
    }

    #[test]
    fn reduce_identical() {
        let s = reduce_pair(&pair("ACGT", "ACGT"), "i", "j", (None, None)).unwrap();
        assert_eq!((s.snps, s.effective_length, s.sample_gap_days), (0, 4, 0));
    }

    #[test]
    fn reduce_single_mismatch() {
        let s = reduce_pair(&pair("ACGT", "ACGA"), "i", "j", (None, None)).unwrap();
        assert_eq!((s.snps, s.effective_length), (1, 4));
    }

    #[test]
    fn reduce_drops_gaps_and_ambiguity() {
        // columns 2 (C/N) and 3 (-/G) are dropped
        let s = reduce_pair(&pair("AC-T", "ANGT"), "i", "j", (None, None)).unwrap();
        assert_eq!((s.snps, s.effective_length), (0, 2));
    }

    #[test]
    fn reduce_sample_gap_and_unknown_id() {
        let aln = pair("acgt", "ACGT");
        let s = reduce_pair(&aln, "i", "j", (Some(3), Some(10))).unwrap();
        assert_eq!(s.sample_gap_days, 7);
        assert_eq!(
            reduce_pair(&aln, "i", "x", (None, None)),
            Err(GenomicsError::UnknownSequence("x".into()))
        );
    }

    #[test]
    fn reduce_all_columns_removed() {
        let s = reduce_pair(&pair("NN--", "ACGT"), "i", "j", (None, None)).unwrap();
        assert_eq!(s.effective_length, 0);
        assert_eq!(
            null_genetic_log_lik(&s, &PathogenGeneticParams::default()),
            Err(GenomicsError::NoComparableSites)
        );
    }

    #[test]
    fn fasta_parsing() {
        let text = ">a sample one\nACGT\nacgt\n>b\nACGTACGA\n";
        let aln = Alignment::from_fasta_str(text).unwrap();
        assert_eq!(aln.len(), 8);
        assert_eq!(aln.ids().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(aln.compare("a", "b").unwrap().snps, 1);

        let err = Alignment::from_fasta_str(">a\nACGT\n>b\nACG\n").unwrap_err();
        assert!(matches!(err, GenomicsError::UnequalLength { .. }));
        let err = Alignment::from_fasta_str(">a\nACXT\n").unwrap_err();
        assert!(matches!(err, GenomicsError::InvalidResidue { residue: 'X', column: 3, .. }));
        let err = Alignment::from_fasta_str("ACGT\n").unwrap_err();
        assert_eq!(err, GenomicsError::MissingHeader { line: 1 });
        let err = Alignment::from_fasta_str(">a\nA\n>a\nC\n").unwrap_err();
        assert_eq!(err, GenomicsError::DuplicateRecord("a".into()));
    }

    #[test]
    fn fasta_round_trip() {
        let aln = Alignment::from_fasta_str(">x\nAC-TN\n>y\nRCGTA\n").unwrap();
        assert_eq!(Alignment::from_fasta_str(&aln.to_fasta()).unwrap(), aln);
    }

    #[test]
    fn cuh_alpha_arithmetic() {
        let summary = PairwiseGeneticSummary {
            snps: 0,
            effective_length: 29903,
            sample_gap_days: 0,
        };
        let p = PathogenGeneticParams::default().null_delaporte(&summary);
        let alpha = 2.0 * 1.829e-6 * 5.5 * 51.0 * 29903.0;
        assert!((p.alpha - alpha).abs() < 1e-12);
        assert!((p.alpha - 30.68).abs() < 0.01);
        assert_eq!(p.lambda, 0.404);
        // geometric/Poisson at zero: exp(-lambda) / (1 + alpha)
        let expected = -0.404 - alpha.ln_1p();
        let got = null_genetic_log_lik(&summary, &PathogenGeneticParams::default()).unwrap();
        assert!((got.0 - expected).abs() < 1e-12);
    }

    #[test]
    fn null_degenerate_params() {
        let summary = PairwiseGeneticSummary {
            snps: 0,
            effective_length: 100,
            sample_gap_days: 0,
        };
        let params = PathogenGeneticParams {
            mu: 0.0,
            error: ErrorTerm::Constant(0.0),
            ..Default::default()
        };
        assert_eq!(null_genetic_log_lik(&summary, &params).unwrap(), LogProb::ONE);
    }

    #[test]
    fn null_decreases_with_sample_gap() {
        let params = PathogenGeneticParams::default();
        let mut s = PairwiseGeneticSummary {
            snps: 0,
            effective_length: 29903,
            sample_gap_days: 0,
        };
        let l0 = null_genetic_log_lik(&s, &params).unwrap();
        s.sample_gap_days = 10;
        let l10 = null_genetic_log_lik(&s, &params).unwrap();
        assert!(l10 < l0);
    }

    #[test]
    fn direct_examples() {
        let params = PathogenGeneticParams::default();
        let mut s = PairwiseGeneticSummary {
            snps: 0,
            effective_length: 29903,
            sample_gap_days: 0,
        };
        assert_eq!(direct_genetic_log_lik(&s, 5, 5, 5, &params).unwrap().0, -0.404);

        let flat = PathogenGeneticParams {
            mu: 0.0,
            error: ErrorTerm::Constant(0.0),
            ..params
        };
        assert_eq!(direct_genetic_log_lik(&s, 5, 9, 1, &flat).unwrap(), LogProb::ONE);

        s.snps = 1;
        let lambda: f64 = 10.0 * 1.829e-6 * 29903.0 + 0.404;
        assert!((lambda - 0.9510).abs() < 1e-4);
        let expected = ((-lambda).exp() * lambda).ln();
        let got = direct_genetic_log_lik(&s, 10, 15, 5, &params).unwrap();
        assert!((got.0 - expected).abs() < 1e-13);
    }

    #[test]
    fn per_base_error_mode() {
        let params = PathogenGeneticParams {
            error: ErrorTerm::PerBase(1e-5),
            ..Default::default()
        };
        let s = PairwiseGeneticSummary {
            snps: 0,
            effective_length: 20000,
            sample_gap_days: 0,
        };
        assert!((params.null_delaporte(&s).lambda - 0.4).abs() < 1e-12);
        assert!(PathogenGeneticParams {
            error: ErrorTerm::PerBase(2.0),
            ..params
        }
        .validate()
        .is_err());
    }

    #[test]
    fn direct_beats_null_for_identical_close_samples() {
        let params = PathogenGeneticParams::default();
        let s = PairwiseGeneticSummary {
            snps: 0,
            effective_length: 29903,
            sample_gap_days: 0,
        };
        let direct = direct_genetic_log_lik(&s, 3, 3, 3, &params).unwrap();
        let null = null_genetic_log_lik(&s, &params).unwrap();
        assert!(direct > null);
    }

    #[test]
    fn cache_is_symmetric_and_memoises() {
        let aln = pair("ACGTT", "ACGAN");
        let cache = PairCache::new();
        let a = cache.sites(&aln, "i", "j").unwrap();
        let b = cache.sites(&aln, "j", "i").unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.len(), 1);
    }

    fn residue() -> impl Strategy<Value = u8> {
        prop::sample::select(b"ACGTacgtNRY-".to_vec())
    }

    proptest! {
        #[test]
        fn packed_matches_brute_force(
            (a, b) in (1usize..200).prop_flat_map(|n| (
                prop::collection::vec(residue(), n),
                prop::collection::vec(residue(), n),
            ))
        ) {
            let aln = Alignment::from_records(vec![("i".to_string(), a.clone()), ("j".to_string(), b.clone())]).unwrap();
            let s = reduce_pair(&aln, "i", "j", (None, None)).unwrap();
            prop_assert_eq!((s.snps, s.effective_length), brute(&a, &b));
            prop_assert!(s.snps <= s.effective_length);
            prop_assert!(s.effective_length as usize <= aln.len());
            let r = reduce_pair(&aln, "j", "i", (None, None)).unwrap();
            prop_assert_eq!(s, r);
        }

        #[test]
        fn null_non_increasing_beyond_mode(g in 1000u32..30000, gap in 0u32..20) {
            let params = PathogenGeneticParams::default();
            let lik = |k: u32| null_genetic_log_lik(&PairwiseGeneticSummary { snps: k, effective_length: g, sample_gap_days: gap }, &params).unwrap().0;
            let values: Vec<f64> = (0..60).map(lik).collect();
            let mode = values
                .iter()
                .enumerate()
                .fold(0, |best, (k, v)| if *v > values[best] { k } else { best });
            for k in mode..59 {
                prop_assert!(values[k + 1] <= values[k] + 1e-12);
            }
        }
    }
}
