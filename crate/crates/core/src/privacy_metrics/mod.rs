//! Privacy measures: exact small-population posteriors and mutual
//! information, plug-in lower bounds scored from attack outputs, symbol
//! error rates, the differential-privacy ratio, and the critical set.
//!
//! Information is measured in bits throughout.

mod critical;
mod posterior;
pub mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use critical::{critical_epsilon, critical_set, critical_set_for, in_window, CriticalSet};
pub use posterior::{
    assignment_posterior, exact_mi_small, exact_posterior_small, exact_posterior_small_with_cap, mi_from_runs,
    posterior_runs, PopulationSource, PosteriorRun, PosteriorTable, SmallRunConfig, DEFAULT_ENUMERATION_CAP,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiMethod {
    ExactSmall,
    PluginLowerBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub value_bits: f64,
    pub std_error: f64,
    pub method: MiMethod,
    pub trials: usize,
    /// Set when a marginal was constant and the estimate was forced to 0.
    pub degenerate: bool,
}

/// `h(p)` in bits.
pub fn binary_entropy(p: f64) -> f64 {
    [p, 1.0 - p]
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum()
}

pub const MIN_PLUGIN_PAIRS: usize = 100;

/// Plug-in mutual information of the empirical joint of `(x, x_hat)` with
/// the Miller-Madow correction, clamped at zero. The standard error is the
/// delta-method one, `sd(log2 p(x,y)/(p(x)p(y))) / sqrt(N)`.
pub fn plugin_mi_lower_bound(x: &[u8], x_hat: &[u8]) -> Result<MIEstimate> {
    if x.len() != x_hat.len() {
        return Err(Error::SizeMismatch(format!("{} truths, {} estimates", x.len(), x_hat.len())));
    }
    if x.len() < MIN_PLUGIN_PAIRS {
        return Err(Error::param(
            "trials",
            format!("need at least {MIN_PLUGIN_PAIRS} paired samples, got {}", x.len()),
        ));
    }
    let total = x.len() as f64;
    let k = x.iter().chain(x_hat).copied().max().unwrap_or(0) as usize + 1;
    let mut joint = vec![vec![0usize; k]; k];
    let mut px = vec![0usize; k];
    let mut py = vec![0usize; k];
    for (&a, &b) in x.iter().zip(x_hat) {
        joint[a as usize][b as usize] += 1;
        px[a as usize] += 1;
        py[b as usize] += 1;
    }
    let kx = px.iter().filter(|&&c| c > 0).count();
    let ky = py.iter().filter(|&&c| c > 0).count();
    if kx < 2 || ky < 2 {
        return Ok(MIEstimate {
            value_bits: 0.0,
            std_error: 0.0,
            method: MiMethod::PluginLowerBound,
            trials: x.len(),
            degenerate: true,
        });
    }
    let mut kxy = 0;
    let mut mean = 0.0;
    let mut second = 0.0;
    for (a, row) in joint.iter().enumerate() {
        for (b, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            kxy += 1;
            let pmi = (c as f64 * total / (px[a] as f64 * py[b] as f64)).log2();
            let w = c as f64 / total;
            mean += w * pmi;
            second += w * pmi * pmi;
        }
    }
    let correction = ((kx - 1) as f64 + (ky - 1) as f64 - (kxy - 1) as f64) / (2.0 * total * std::f64::consts::LN_2);
    Ok(MIEstimate {
        value_bits: (mean + correction).max(0.0),
        std_error: ((second - mean * mean).max(0.0) / total).sqrt(),
        method: MiMethod::PluginLowerBound,
        trials: x.len(),
        degenerate: false,
    })
}

/// One scored attack: the true sample, its estimate, and whether the
/// pseudonym was matched correctly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub truth: u8,
    pub estimate: u8,
    pub matched: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRate {
    /// Fraction of trials with a wrong symbol estimate.
    pub pe: f64,
    pub pe_std_error: f64,
    /// Fraction of trials where the pseudonym match was wrong.
    pub mismatch_rate: f64,
    pub trials: usize,
}

pub fn attack_error_rate(outcomes: &[AttackOutcome]) -> Result<ErrorRate> {
    if outcomes.is_empty() {
        return Err(Error::param("outcomes", "need at least one trial"));
    }
    let t = outcomes.len() as f64;
    let pe = outcomes.iter().filter(|o| o.truth != o.estimate).count() as f64 / t;
    Ok(ErrorRate {
        pe,
        pe_std_error: (pe * (1.0 - pe) / t).sqrt(),
        mismatch_rate: outcomes.iter().filter(|o| !o.matched).count() as f64 / t,
        trials: outcomes.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpEpsilon {
    /// `f64::INFINITY` when the posterior puts zero mass on a symbol.
    pub epsilon: f64,
    pub infinite: bool,
}

/// `max over (x1, x2) of ln[(P(x1|Y)/P(x2|Y)) / (P(x1)/P(x2))]` for a
/// binary sample; `posterior = (P(0|Y), P(1|Y))`, prior `P(1) = p1`.
pub fn dp_epsilon(posterior: [f64; 2], p1: f64) -> Result<DpEpsilon> {
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(Error::param("p1", format!("prior must lie in (0, 1), got {p1}")));
    }
    if posterior.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::param("posterior", format!("{posterior:?} is not a distribution")));
    }
    if posterior.iter().any(|&x| x == 0.0) {
        return Ok(DpEpsilon {
            epsilon: f64::INFINITY,
            infinite: true,
        });
    }
    let log_odds = (posterior[1] / posterior[0]).ln() - (p1 / (1.0 - p1)).ln();
    Ok(DpEpsilon {
        epsilon: log_odds.abs(),
        infinite: false,
    })
}
