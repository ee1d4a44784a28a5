//! Exact Bayesian posteriors for small two-state populations, by
//! enumeration of all `n!` assignments of users to pseudonyms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::log_noise_marginal;
use super::{binary_entropy, MIEstimate, MiMethod};
use crate::error::{Error, Result};
use crate::mechanisms::{anonymize, draw_noise_levels_with_cap, obfuscate, NoiseSchedule, ObservationSchedule, Permutation};
use crate::rng::{derive_seed, tag};
use crate::source_models::{generate_traces, sample_iid_profiles, DensityConfig, Stage, TraceMatrix, UserPopulation};

pub const DEFAULT_ENUMERATION_CAP: usize = 7;

/// Posterior of the first user's pseudonym and of their sample at one time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTable {
    /// `P(Pi(first user) = j | Y)` for every pseudonym `j`.
    pub perm_posterior: Vec<f64>,
    /// `P(X(k) = 1 | Y, Pi(first user) = j)` for every pseudonym `j`.
    pub data_given_match: Vec<f64>,
    pub time: usize,
    /// `(P(X(k) = 0 | Y), P(X(k) = 1 | Y))`.
    pub data_posterior: [f64; 2],
    /// Largest deviation from 1 of the sums of the distributions above,
    /// before the final renormalization.
    pub normalization_residual: f64,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + values.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// Visits every permutation of `0..n` (Heap's algorithm).
fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    visit(&perm);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// `P(Pi(0) = j | L)` for a matrix of log-likelihoods `log_l[u][j]` of
/// pseudonym `j`'s column under user `u`'s profile, uniform prior on Pi.
pub fn assignment_posterior(log_l: &[Vec<f64>]) -> Vec<f64> {
    let n = log_l.len();
    let mut by_first: Vec<Vec<f64>> = vec![Vec::new(); n];
    for_each_permutation(n, |perm| {
        let total: f64 = perm.iter().enumerate().map(|(u, &j)| log_l[u][j]).sum();
        by_first[perm[0]].push(total);
    });
    let logs: Vec<f64> = by_first.iter().map(|v| log_sum_exp(v)).collect();
    let norm = log_sum_exp(&logs);
    logs.iter().map(|l| (l - norm).exp()).collect()
}

fn check_two_state_release(y: &TraceMatrix, pop: &UserPopulation, cap: usize) -> Result<Vec<f64>> {
    if pop.n > cap {
        return Err(Error::EnumerationCap { n: pop.n, cap });
    }
    let ps = pop
        .bernoulli_params()
        .ok_or_else(|| Error::param("pop", "exact posteriors need a two-state i.i.d. population"))?;
    if y.stage() != Stage::Y || y.alphabet() != Some(2) {
        return Err(Error::param("y", "expected two-symbol stage-Y traces"));
    }
    if y.n() != pop.n {
        return Err(Error::SizeMismatch(format!("{} pseudonyms for {} users", y.n(), pop.n)));
    }
    Ok(ps)
}

pub fn exact_posterior_small(y: &TraceMatrix, pop: &UserPopulation, a_n: f64, k: usize) -> Result<PosteriorTable> {
    exact_posterior_small_with_cap(y, pop, a_n, k, DEFAULT_ENUMERATION_CAP)
}

/// Exact posterior of the first user's pseudonym and of their sample at
/// time `k`, marginalizing every `R_u ~ Uniform[0, a_n]` by quadrature.
pub fn exact_posterior_small_with_cap(
    y: &TraceMatrix,
    pop: &UserPopulation,
    a_n: f64,
    k: usize,
    cap: usize,
) -> Result<PosteriorTable> {
    let ps = check_two_state_release(y, pop, cap)?;
    let (m, n) = (y.m(), y.n());
    if k >= m {
        return Err(Error::param("k", format!("time {k} outside 0..{m}")));
    }
    let ones: Vec<u64> = y
        .symbol_columns()
        .map(|c| c.iter().filter(|&&s| s == 1).count() as u64)
        .collect();

    let mut log_l = vec![vec![0.0; n]; n];
    for (u, row) in log_l.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = log_noise_marginal(ps[u], ones[j], m as u64, a_n, (1.0, 0.0))?;
        }
    }
    let perm_posterior = assignment_posterior(&log_l);

    // Given the match, split the column likelihood on the sample at k:
    // P(z | X = 1, r) is 1 - r for z = 1 and r for z = 0.
    let p1 = ps[0];
    let data_given_match = (0..n)
        .map(|j| {
            let z = y.symbol_column(j)[k];
            let rest = ones[j] - z as u64;
            let (keep, flip) = ((1.0, -1.0), (0.0, 1.0));
            let (w1, w0) = if z == 1 { (keep, flip) } else { (flip, keep) };
            let l1 = p1.ln() + log_noise_marginal(p1, rest, m as u64 - 1, a_n, w1)?;
            let l0 = (1.0 - p1).ln() + log_noise_marginal(p1, rest, m as u64 - 1, a_n, w0)?;
            Ok(1.0 / (1.0 + (l0 - l1).exp()))
        })
        .collect::<Result<Vec<f64>>>()?;

    let one: f64 = perm_posterior.iter().zip(&data_given_match).map(|(w, d)| w * d).sum();
    let zero: f64 = perm_posterior.iter().zip(&data_given_match).map(|(w, d)| w * (1.0 - d)).sum();
    let residual = (perm_posterior.iter().sum::<f64>() - 1.0).abs().max((one + zero - 1.0).abs());
    Ok(PosteriorTable {
        perm_posterior,
        data_given_match,
        time: k,
        data_posterior: [zero / (one + zero), one / (one + zero)],
        normalization_residual: residual,
    })
}

/// Where the users of each Monte Carlo run come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationSource {
    /// The same profiles in every run.
    Fixed { population: UserPopulation },
    /// Fresh two-state profiles in every run.
    Random { n: usize, density: DensityConfig },
}

impl PopulationSource {
    pub fn n(&self) -> usize {
        match self {
            PopulationSource::Fixed { population } => population.n,
            PopulationSource::Random { n, .. } => *n,
        }
    }
}

/// One simulated release and the exact posterior computed from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRun {
    pub p1: f64,
    /// True sample of the first user at the queried time.
    pub x: u8,
    pub true_pseudonym: usize,
    pub table: PosteriorTable,
}

impl PosteriorRun {
    /// `H(X(k)) - H(X(k) | Y = y)` in bits for this run.
    pub fn information_bits(&self) -> f64 {
        binary_entropy(self.p1) - binary_entropy(self.table.data_posterior[1])
    }

    /// Maximum a posteriori estimate of the sample.
    pub fn map_estimate(&self) -> u8 {
        u8::from(self.table.data_posterior[1] > 0.5)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallRunConfig {
    pub population: PopulationSource,
    pub noise: NoiseSchedule,
    pub observations: ObservationSchedule,
    pub time: usize,
    pub trials: usize,
    pub seed: u64,
    pub enumeration_cap: usize,
}

/// Runs the full pipeline `trials` times and computes the exact posterior
/// of each release.
pub fn posterior_runs(cfg: &SmallRunConfig) -> Result<Vec<PosteriorRun>> {
    let n = cfg.population.n();
    if n == 0 {
        return Err(Error::param("n", "need at least one user"));
    }
    if n > cfg.enumeration_cap {
        return Err(Error::EnumerationCap {
            n,
            cap: cfg.enumeration_cap,
        });
    }
    if cfg.trials == 0 {
        return Err(Error::param("trials", "need at least one trial"));
    }
    let m = cfg.observations.samples(n);
    if cfg.time >= m {
        return Err(Error::param("time", format!("time {} outside 0..{m}", cfg.time)));
    }
    let a_n = cfg.noise.cap(n)?.value;
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = |stage: u64| derive_seed(cfg.seed, &[tag::TRIAL, t as u64, stage]);
            let pop = match &cfg.population {
                PopulationSource::Fixed { population } => population.clone(),
                PopulationSource::Random { n, density } => sample_iid_profiles(*n, 2, density, seed(tag::PROFILES))?,
            };
            let x = generate_traces(&pop, m, seed(tag::TRACES))?;
            let noise = draw_noise_levels_with_cap(n, a_n, seed(tag::NOISE))?;
            let z = obfuscate(&x, &noise, 2, seed(tag::CHANNEL))?;
            let perm = Permutation::random(n, seed(tag::PERMUTATION));
            let y = anonymize(&z, &perm)?;
            let table = exact_posterior_small_with_cap(&y, &pop, a_n, cfg.time, cfg.enumeration_cap)?;
            Ok(PosteriorRun {
                p1: pop.bernoulli_params().expect("two-state population")[0],
                x: x.symbol_column(0)[cfg.time],
                true_pseudonym: perm.pseudonym(0),
                table,
            })
        })
        .collect()
}

/// Monte Carlo estimate of `I(X(k); Y)` for the first user: the mean over
/// runs of the prior entropy minus the exact posterior entropy.
pub fn exact_mi_small(cfg: &SmallRunConfig) -> Result<MIEstimate> {
    Ok(mi_from_runs(&posterior_runs(cfg)?))
}

pub fn mi_from_runs(runs: &[PosteriorRun]) -> MIEstimate {
    let values: Vec<f64> = runs.iter().map(PosteriorRun::information_bits).collect();
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0)
    } else {
        0.0
    };
    MIEstimate {
        value_bits: mean,
        std_error: (var / t).sqrt(),
        method: MiMethod::ExactSmall,
        trials: values.len(),
        degenerate: false,
    }
}
