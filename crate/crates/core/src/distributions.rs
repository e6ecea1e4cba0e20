//! Probability kernels shared by every likelihood term.
//!
//! Everything here works on natural-log probabilities. A probability of
//! exactly zero is carried as `-inf`; the kernels never return `NaN` for
//! valid parameters.

use std::f64::consts::{LN_2, PI, SQRT_2};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("invalid parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("negative day offset {0}")]
    NegativeDays(i64),
    #[error("log-sum-exp of an empty sequence")]
    EmptyInput,
}

/// A natural-log probability.
#[derive(Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogProb(pub f64);

impl LogProb {
    /// log 1
    pub const ONE: LogProb = LogProb(0.0);
    /// log 0
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);

    pub fn from_prob(p: f64) -> LogProb {
        LogProb(p.ln())
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl fmt::Debug for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LogProb({})", self.0)
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl Add for LogProb {
    type Output = LogProb;

    #[inline]
    fn add(self, rhs: LogProb) -> LogProb {
        LogProb(self.0 + rhs.0)
    }
}

impl AddAssign for LogProb {
    #[inline]
    fn add_assign(&mut self, rhs: LogProb) {
        self.0 += rhs.0;
    }
}

impl Sub for LogProb {
    type Output = LogProb;

    #[inline]
    fn sub(self, rhs: LogProb) -> LogProb {
        LogProb(self.0 - rhs.0)
    }
}

impl Sum for LogProb {
    fn sum<I: Iterator<Item = LogProb>>(iter: I) -> LogProb {
        LogProb(iter.map(|l| l.0).sum())
    }
}

/// Parameters of a Delaporte law, read as `Poisson(lambda) + NB(r = beta, p = 1 / (1 + alpha))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaporteParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl DelaporteParams {
    pub fn new(alpha: f64, beta: f64, lambda: f64) -> Result<Self, DistributionError> {
        let params = DelaporteParams {
            alpha,
            beta,
            lambda,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(DistributionError::InvalidParameter {
                name: "alpha",
                value: self.alpha,
            });
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(DistributionError::InvalidParameter {
                name: "beta",
                value: self.beta,
            });
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(DistributionError::InvalidParameter {
                name: "lambda",
                value: self.lambda,
            });
        }
        Ok(())
    }
}

/// Negative-binomial log pmf with `p = 1 / (1 + alpha)`; for `beta == 1` this is geometric.
pub fn negative_binomial_log_pmf(n: u32, alpha: f64, beta: f64) -> LogProb {
    if alpha == 0.0 {
        return if n == 0 { LogProb::ONE } else { LogProb::ZERO };
    }
    let ln_p = -alpha.ln_1p();
    let ln_q = alpha.ln() - alpha.ln_1p();
    let n_f = f64::from(n);
    if beta == 1.0 {
        LogProb(ln_p + n_f * ln_q)
    } else {
        LogProb(
            ln_gamma(n_f + beta) - ln_gamma(beta) - ln_factorial(u64::from(n))
                + beta * ln_p
                + n_f * ln_q,
        )
    }
}

fn poisson_log_pmf_unchecked(k: u32, lambda: f64) -> LogProb {
    if lambda == 0.0 {
        return if k == 0 { LogProb::ONE } else { LogProb::ZERO };
    }
    if k == 0 {
        return LogProb(-lambda);
    }
    LogProb(-lambda + f64::from(k) * lambda.ln() - ln_factorial(u64::from(k)))
}

pub fn poisson_log_pmf(k: u32, lambda: f64) -> Result<LogProb, DistributionError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(DistributionError::InvalidParameter {
            name: "lambda",
            value: lambda,
        });
    }
    Ok(poisson_log_pmf_unchecked(k, lambda))
}

/// Log pmf of the Delaporte law at `k`, by exact convolution of its Poisson
/// and negative-binomial parts (`k + 1` terms).
pub fn delaporte_log_pmf(k: u32, params: &DelaporteParams) -> Result<LogProb, DistributionError> {
    params.validate()?;
    let DelaporteParams {
        alpha,
        beta,
        lambda,
    } = *params;
    if lambda == 0.0 {
        return Ok(negative_binomial_log_pmf(k, alpha, beta));
    }
    if alpha == 0.0 {
        return Ok(poisson_log_pmf_unchecked(k, lambda));
    }
    let terms: Vec<LogProb> = (0..=k)
        .map(|j| poisson_log_pmf_unchecked(j, lambda) + negative_binomial_log_pmf(k - j, alpha, beta))
        .collect();
    log_sum_exp(&terms)
}

/// `log(sum(exp(t)))` with the max shifted out. An all `-inf` input gives `-inf`.
pub fn log_sum_exp(terms: &[LogProb]) -> Result<LogProb, DistributionError> {
    if terms.is_empty() {
        return Err(DistributionError::EmptyInput);
    }
    let max = terms
        .iter()
        .map(|t| t.0)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(LogProb::ZERO);
    }
    if terms.len() == 1 {
        return Ok(terms[0]);
    }
    let scaled: f64 = terms.iter().map(|t| (t.0 - max).exp()).sum();
    Ok(LogProb(max + scaled.ln()))
}

/// How the continuous incubation law is turned into a per-day quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// Mass of the whole day bin `[d, d + 1)`.
    #[default]
    DayBin,
    /// Density evaluated at the integer offset `d`.
    Density,
}

impl Discretization {
    pub fn as_str(self) -> &'static str {
        match self {
            Discretization::DayBin => "day-bin",
            Discretization::Density => "density",
        }
    }
}

impl std::str::FromStr for Discretization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day-bin" => Ok(Discretization::DayBin),
            "density" => Ok(Discretization::Density),
            other => Err(format!("unknown discretization `{other}` (expected day-bin or density)")),
        }
    }
}

/// Lognormal infection-to-onset waiting time.
///
/// `meanlog` and `sdlog` are the parameters of the underlying normal, so the
/// median waiting time is `exp(meanlog)` days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitingTimeModel {
    pub meanlog: f64,
    pub sdlog: f64,
    #[serde(default)]
    pub discretization: Discretization,
}

impl Default for WaitingTimeModel {
    fn default() -> Self {
        WaitingTimeModel {
            meanlog: 1.434,
            sdlog: 0.6612,
            discretization: Discretization::DayBin,
        }
    }
}

impl WaitingTimeModel {
    pub fn new(meanlog: f64, sdlog: f64, discretization: Discretization) -> Result<Self, DistributionError> {
        let model = WaitingTimeModel {
            meanlog,
            sdlog,
            discretization,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        if !self.meanlog.is_finite() {
            return Err(DistributionError::InvalidParameter {
                name: "meanlog",
                value: self.meanlog,
            });
        }
        if !(self.sdlog.is_finite() && self.sdlog > 0.0) {
            return Err(DistributionError::InvalidParameter {
                name: "sdlog",
                value: self.sdlog,
            });
        }
        Ok(())
    }

    fn standardize(&self, x: f64) -> f64 {
        (x.ln() - self.meanlog) / (self.sdlog * SQRT_2)
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            0.5 * erfc(-self.standardize(x))
        }
    }

    pub(crate) fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            0.5 * erfc(self.standardize(x))
        }
    }

    /// Probability of the day bin `[days, days + 1)`.
    ///
    /// Below the median the lower CDF is differenced, above it the survival
    /// function, so tail bins keep their relative precision.
    pub fn day_mass(&self, days: u32) -> f64 {
        let lo = f64::from(days);
        let hi = lo + 1.0;
        if lo > 0.0 && lo.ln() >= self.meanlog {
            (self.sf(lo) - self.sf(hi)).max(0.0)
        } else {
            (self.cdf(hi) - self.cdf(lo)).max(0.0)
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let z = (x.ln() - self.meanlog) / self.sdlog;
        -x.ln() - self.sdlog.ln() - 0.5 * (LN_2 + PI.ln()) - 0.5 * z * z
    }
}

/// Log probability that the waiting time falls on day offset `days`.
pub fn waiting_time_log_mass(days: i64, wt: &WaitingTimeModel) -> Result<LogProb, DistributionError> {
    if days < 0 {
        return Err(DistributionError::NegativeDays(days));
    }
    wt.validate()?;
    Ok(waiting_time_log_mass_unchecked(days, wt))
}

pub(crate) fn waiting_time_log_mass_unchecked(days: i64, wt: &WaitingTimeModel) -> LogProb {
    match wt.discretization {
        Discretization::DayBin => {
            let days = u32::try_from(days).unwrap_or(u32::MAX);
            LogProb(wt.day_mass(days).ln())
        }
        Discretization::Density => LogProb(wt.log_density(days as f64)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn delaporte_degenerate_point_mass() {
        let p = DelaporteParams::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(delaporte_log_pmf(0, &p).unwrap(), LogProb::ONE);
        assert!(delaporte_log_pmf(3, &p).unwrap().is_zero());
    }

    #[test]
    fn delaporte_geometric_at_zero() {
        let p = DelaporteParams::new(1.0, 1.0, 0.0).unwrap();
        assert!(close(delaporte_log_pmf(0, &p).unwrap().0, 0.5f64.ln(), 1e-15));
    }

    #[test]
    fn delaporte_pure_poisson_at_zero() {
        let p = DelaporteParams::new(0.0, 1.0, 0.404).unwrap();
        assert_eq!(delaporte_log_pmf(0, &p).unwrap().0, -0.404);
    }

    #[test]
    fn delaporte_rejects_invalid_params() {
        assert!(DelaporteParams::new(-1.0, 1.0, 0.0).is_err());
        assert!(DelaporteParams::new(1.0, 0.0, 0.0).is_err());
        assert!(DelaporteParams::new(1.0, 1.0, -0.1).is_err());
        assert!(DelaporteParams::new(f64::NAN, 1.0, 0.1).is_err());
        let bad = DelaporteParams {
            alpha: 1.0,
            beta: 1.0,
            lambda: f64::INFINITY,
        };
        assert!(delaporte_log_pmf(0, &bad).is_err());
    }

    #[test]
    fn delaporte_general_beta_matches_geometric_at_one() {
        // the lgamma route at beta = 1 must agree with the closed geometric form
        for k in 0..20 {
            let geo = negative_binomial_log_pmf(k, 3.0, 1.0).0;
            let n = f64::from(k);
            let general = ln_gamma(n + 1.0) - ln_gamma(1.0) - ln_factorial(u64::from(k))
                - 3.0f64.ln_1p()
                + n * (3.0f64.ln() - 3.0f64.ln_1p());
            assert!(close(geo, general, 1e-12), "k={k}");
        }
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson_log_pmf(0, 0.404).unwrap().0, -0.404);
        assert_eq!(poisson_log_pmf(0, 0.0).unwrap(), LogProb::ONE);
        assert!(poisson_log_pmf(1, 0.0).unwrap().is_zero());
        let expected = ((-1.5f64).exp() * 1.5 * 1.5 / 2.0).ln();
        assert!(close(poisson_log_pmf(2, 1.5).unwrap().0, expected, 1e-14));
        assert!(poisson_log_pmf(2, -1.0).is_err());
    }

    #[test]
    fn log_sum_exp_examples() {
        let half = LogProb::from_prob(0.5);
        assert!(close(log_sum_exp(&[half, half]).unwrap().0, 0.0, 1e-15));
        let l = log_sum_exp(&[LogProb::ZERO, LogProb::from_prob(0.3)]).unwrap();
        assert_eq!(l, LogProb::from_prob(0.3));
        let tiny = vec![LogProb(1e-300f64.ln()); 1000];
        assert!(close(log_sum_exp(&tiny).unwrap().0, 1e-297f64.ln(), 1e-12));
        assert!(log_sum_exp(&[LogProb::ZERO, LogProb::ZERO]).unwrap().is_zero());
        assert_eq!(log_sum_exp(&[]), Err(DistributionError::EmptyInput));
    }

    #[test]
    fn waiting_time_mass_sums_to_one() {
        let wt = WaitingTimeModel::default();
        let total: f64 = (0..=100).map(|d| waiting_time_log_mass(d, &wt).unwrap().prob()).sum();
        assert!(total > 1.0 - 1e-6 && total <= 1.0 + 1e-12, "{total}");
    }

    #[test]
    fn waiting_time_rejects_negative_days() {
        let wt = WaitingTimeModel::default();
        assert_eq!(
            waiting_time_log_mass(-1, &wt),
            Err(DistributionError::NegativeDays(-1))
        );
        assert!(WaitingTimeModel::new(1.0, 0.0, Discretization::DayBin).is_err());
    }

    #[test]
    fn density_mode_is_zero_at_offset_zero() {
        let wt = WaitingTimeModel {
            discretization: Discretization::Density,
            ..WaitingTimeModel::default()
        };
        assert!(waiting_time_log_mass(0, &wt).unwrap().is_zero());
        let d4 = waiting_time_log_mass(4, &wt).unwrap().0;
        assert!(d4 < 0.0 && d4.is_finite());
    }
}
