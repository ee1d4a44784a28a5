//! Desk-scale acceptance measurements. Each criterion runs its experiment,
//! compares against fixed thresholds, and reports a one-line summary.

use std::time::Instant;

use anonpriv::adversary::{gaussian_moment_attack, hmm_moment_attack, hmm_moments, odd_transition_estimates, solve_hmm_moments};
use anonpriv::experiments::{run_phase_sweep, ModelSpec, PhaseDiagram, PhaseLabel, SweepGrid, DEFAULT_SAMPLE_BUDGET};
use anonpriv::mechanisms::{obfuscate, obfuscate_gaussian, NoiseDraw, NoiseSchedule, ObservationSchedule};
use anonpriv::privacy_metrics::{
    dp_epsilon, mi_from_runs, posterior_runs, MIEstimate, PopulationSource, PosteriorRun, SmallRunConfig,
    DEFAULT_ENUMERATION_CAP,
};
use anonpriv::rng::derive_seed;
use anonpriv::source_models::{
    generate_traces, DensityConfig, MarkovProfile, Topology, TraceMatrix, UserPopulation,
};
use anonpriv::theory_oracles::{averaging_suite, conditioning_suite, growth_suite, overlap_suite};
use anonpriv::Result;
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct Criterion {
    pub id: String,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "criterion {:>2} [{}] {}: {} ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds
        )
    }
}

fn timed(id: &str, title: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Criterion {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Criterion {
        id: id.into(),
        title,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// A criterion whose shared measurements could not be produced.
pub fn unavailable(id: &str, error: &anonpriv::Error) -> Criterion {
    Criterion {
        id: id.into(),
        title: "exact posterior runs",
        passed: false,
        detail: format!("error: {error}"),
        seconds: 0.0,
    }
}

fn list(values: impl IntoIterator<Item = f64>, digits: usize) -> String {
    values
        .into_iter()
        .map(|v| format!("{v:.digits$}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub const SEED: u64 = 20_240_611;

pub fn converse_grid(seed: u64) -> SweepGrid {
    SweepGrid {
        model: ModelSpec::Iid2,
        n_values: vec![20, 50, 100],
        eta_values: vec![2.2],
        gamma_values: vec![1.1],
        c: 1.0,
        c_prime: 1.0,
        trials: 100,
        seed,
        density: DensityConfig::uniform(),
        budget: DEFAULT_SAMPLE_BUDGET,
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

/// Two-state converse: success rising to at least 0.90 and symbol error at
/// most 0.05 at n = 100.
pub fn converse_two_state(seed: u64) -> (Criterion, Option<PhaseDiagram>) {
    let mut diagram = None;
    let c = timed("1", "two-state converse", || {
        let d = run_phase_sweep(&converse_grid(seed))?;
        let success: Vec<f64> = d.cells.iter().map(|c| c.success_rate).collect();
        let pe_last = d.cells.last().map_or(1.0, |c| c.pe);
        let ok = d.failures.is_empty()
            && strictly_increasing(&success)
            && success.last().is_some_and(|&s| s >= 0.90)
            && pe_last <= 0.05;
        let detail = format!(
            "success at n = 20, 50, 100: {} (need strictly increasing, >= 0.90 at 100); P_e at 100 = {pe_last:.4} (need <= 0.05)",
            list(success.iter().copied(), 2)
        );
        diagram = Some(d);
        Ok((ok, detail))
    });
    (c, diagram)
}

pub fn small_config(n: usize, noise: NoiseSchedule, observations: ObservationSchedule, trials: usize, seed: u64) -> SmallRunConfig {
    SmallRunConfig {
        population: PopulationSource::Random {
            n,
            density: DensityConfig::uniform(),
        },
        noise,
        observations,
        time: 0,
        trials,
        seed,
        enumeration_cap: DEFAULT_ENUMERATION_CAP,
    }
}

pub const SMALL_TRIALS: usize = 2000;

/// Exact-posterior runs of the achievability setup (`m = 10^4`) for
/// `n = 3..=6`, plus the `gamma = 1.1` comparison at `n = 6`.
pub struct SmallRuns {
    pub private: Vec<(usize, Vec<PosteriorRun>)>,
    pub exposed: Vec<PosteriorRun>,
}

pub fn small_runs(seed: u64, trials: usize) -> Result<SmallRuns> {
    let m = ObservationSchedule::new(1e4, 0.0)?;
    let private = (3..=6)
        .map(|n| {
            let cfg = small_config(n, NoiseSchedule::new(1.0, 0.5)?, m, trials, derive_seed(seed, &[n as u64]));
            Ok((n, posterior_runs(&cfg)?))
        })
        .collect::<Result<_>>()?;
    let cfg = small_config(6, NoiseSchedule::new(1.0, 1.1)?, m, trials, derive_seed(seed, &[6, 1]));
    Ok(SmallRuns {
        private,
        exposed: posterior_runs(&cfg)?,
    })
}

fn combined(a: &MIEstimate, b: &MIEstimate) -> f64 {
    a.std_error.hypot(b.std_error)
}

pub fn achievability_mi(runs: &SmallRuns) -> Criterion {
    timed("2", "two-state achievability (exact MI)", || {
        let mi: Vec<MIEstimate> = runs.private.iter().map(|(_, r)| mi_from_runs(r)).collect();
        let exposed = mi_from_runs(&runs.exposed);
        let non_increasing = mi
            .windows(2)
            .all(|w| w[1].value_bits <= w[0].value_bits + 2.0 * combined(&w[0], &w[1]));
        let last = mi.last().expect("four sizes");
        let below = last.value_bits < 0.1;
        let gap = (exposed.value_bits - last.value_bits) / combined(&exposed, last);
        let detail = format!(
            "MI bits at n = 3..6: {} (se {}), need non-increasing within 2 se and < 0.1 at n = 6; gamma = 1.1 at n = 6: {:.4}, {gap:.1} se above (need >= 3)",
            list(mi.iter().map(|e| e.value_bits), 4),
            list(mi.iter().map(|e| e.std_error), 4),
            exposed.value_bits
        );
        Ok((non_increasing && below && gap >= 3.0, detail))
    })
}

fn median_epsilon(runs: &[PosteriorRun]) -> Result<f64> {
    let mut eps = runs
        .iter()
        .map(|r| dp_epsilon(r.table.data_posterior, r.p1).map(|e| e.epsilon))
        .collect::<Result<Vec<f64>>>()?;
    eps.sort_by(f64::total_cmp);
    let k = eps.len();
    Ok(if k % 2 == 1 {
        eps[k / 2]
    } else {
        0.5 * (eps[k / 2 - 1] + eps[k / 2])
    })
}

pub fn dp_relation(runs: &SmallRuns, seed: u64, trials: usize) -> Criterion {
    timed("8", "differential-privacy relation", || {
        let medians = runs
            .private
            .iter()
            .map(|(_, r)| median_epsilon(r))
            .collect::<Result<Vec<f64>>>()?;
        let cfg = small_config(
            6,
            NoiseSchedule::new(1.0, 1.1)?,
            ObservationSchedule::new(1.0, 2.2)?,
            trials,
            derive_seed(seed, &[8]),
        );
        let exposed = median_epsilon(&posterior_runs(&cfg)?)?;
        let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
        let last = *medians.last().expect("four sizes");
        let detail = format!(
            "median eps at n = 3..6 (gamma = 0.5): {} (need decreasing, < 0.25 at 6); no-privacy setup at n = 6: {exposed:.3} (need >= 1)",
            list(medians.iter().copied(), 3)
        );
        Ok((decreasing && last < 0.25 && exposed >= 1.0, detail))
    })
}

pub fn overlap_uniformity(seed: u64) -> Criterion {
    timed("3", "uniform overlap posterior", || {
        let r = overlap_suite(100, seed)?;
        Ok((r.passed, r.detail))
    })
}

pub fn critical_growth(seed: u64) -> Criterion {
    timed("4", "critical-set growth", || {
        let r = growth_suite(seed)?;
        Ok((r.passed, format!("{} (need slope in [0.10, 0.40], probability >= 0.95)", r.detail)))
    })
}

fn return_chain(p: f64) -> Result<UserPopulation> {
    UserPopulation::from_markov(Topology::two_state_return(), vec![MarkovProfile::two_state_return(p)?])
}

fn fixed_noise(levels: Vec<f64>) -> NoiseDraw {
    let a_n = levels.iter().copied().fold(0.0, f64::max);
    NoiseDraw {
        levels,
        a_n,
        clamped: false,
    }
}

pub fn hmm_attack(seed: u64) -> Criterion {
    timed("5", "hidden-Markov moment attack", || {
        let (p, r) = (0.5, 0.2);
        let pop = return_chain(p)?;
        let noise = fixed_noise(vec![r]);
        let hits = (0..100u64)
            .into_par_iter()
            .map(|t| {
                let x = generate_traces(&pop, 1_000_000, derive_seed(seed, &[5, t, 0]))?;
                let z = obfuscate(&x, &noise, 2, derive_seed(seed, &[5, t, 1]))?;
                let est = hmm_moment_attack(z.symbol_column(0))?;
                Ok((est.p - p).abs() <= 0.01 && (est.r - r).abs() <= 0.01)
            })
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .filter(|&h| h)
            .count();
        let mut worst: f64 = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                let (pg, rg) = (0.05 + 0.1 * i as f64, 0.05 * j as f64);
                let (t0, t01) = hmm_moments(pg, rg);
                worst = worst.max(solve_hmm_moments(t0, t01)?.residual);
            }
        }
        let detail = format!(
            "{hits}/100 sequences within 0.01 of (0.5, 0.2) (need >= 95); worst residual on a 10 x 10 grid {worst:.1e} (need < 1e-10)"
        );
        Ok((hits >= 95 && worst < 1e-10, detail))
    })
}

/// Pairwise correlations of odd-transition estimation errors across the
/// free coordinates of one profile, over independent obfuscated sequences.
pub fn odd_transition_correlations(
    topology: &Topology,
    profile: &MarkovProfile,
    r_u: f64,
    m: usize,
    sequences: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let pop = UserPopulation::from_markov(topology.clone(), vec![profile.clone()])?;
    let noise = fixed_noise(vec![r_u]);
    let estimates: Vec<Vec<f64>> = (0..sequences as u64)
        .into_par_iter()
        .map(|t| {
            let x = generate_traces(&pop, m, derive_seed(seed, &[t, 0]))?;
            let z: TraceMatrix = obfuscate(&x, &noise, topology.states(), derive_seed(seed, &[t, 1]))?;
            Ok(odd_transition_estimates(z.symbol_column(0), topology)
                .into_iter()
                .map(|e| e.unwrap_or(f64::NAN))
                .collect())
        })
        .collect::<Result<_>>()?;
    let rows: Vec<&Vec<f64>> = estimates.iter().filter(|v| v.iter().all(|x| x.is_finite())).collect();
    let d = topology.free_dim();
    let t = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|i| rows.iter().map(|v| v[i]).sum::<f64>() / t).collect();
    let cov = |i: usize, j: usize| rows.iter().map(|v| (v[i] - mean[i]) * (v[j] - mean[j])).sum::<f64>() / (t - 1.0);
    let mut out = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            out.push(cov(i, j) / (cov(i, i) * cov(j, j)).sqrt());
        }
    }
    Ok(out)
}

pub fn markov_converse(seed: u64) -> Criterion {
    timed("6", "Markov converse", || {
        let topology = Topology::ring_with_self_loops(3)?;
        let grid = SweepGrid {
            model: ModelSpec::Markov {
                topology: topology.clone(),
            },
            n_values: vec![50, 100, 200],
            eta_values: vec![2.0 / 3.0 + 0.3],
            gamma_values: vec![1.0 / 3.0 + 0.1],
            c: 50.0,
            c_prime: 1.0,
            trials: 100,
            seed,
            density: DensityConfig::uniform(),
            budget: DEFAULT_SAMPLE_BUDGET,
        };
        let d = run_phase_sweep(&grid)?;
        let success: Vec<f64> = d.cells.iter().map(|c| c.success_rate).collect();
        let profile = MarkovProfile::new(
            &topology,
            vec![vec![0.3, 0.7, 0.0], vec![0.0, 0.6, 0.4], vec![0.5, 0.0, 0.5]],
        )?;
        let a_n = NoiseSchedule::new(1.0, 1.0 / 3.0 + 0.1)?.cap(200)?.value;
        let rho = odd_transition_correlations(&topology, &profile, 0.5 * a_n, 10_000, 4000, derive_seed(seed, &[6]))?;
        let worst = rho.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        let ok = d.failures.is_empty()
            && strictly_increasing(&success)
            && success.last().is_some_and(|&s| s >= 0.85)
            && worst < 0.05;
        let detail = format!(
            "success at n = 50, 100, 200: {} (need increasing, >= 0.85 at 200); odd-transition error correlations {} (need |rho| < 0.05)",
            list(success.iter().copied(), 2),
            list(rho.iter().copied(), 3)
        );
        Ok((ok, detail))
    })
}

pub fn gaussian_leak(seed: u64) -> Criterion {
    timed("7", "Gaussian obfuscation leaks parameters", || {
        let (p, v) = (0.3, 0.04);
        let pop = UserPopulation::from_bernoulli(&[p])?;
        let noise = fixed_noise(vec![v]);
        let hits = (0..100u64)
            .into_par_iter()
            .map(|t| {
                let x = generate_traces(&pop, 1_000_000, derive_seed(seed, &[7, t, 0]))?;
                let z = obfuscate_gaussian(&x, &noise, derive_seed(seed, &[7, t, 1]))?;
                let est = gaussian_moment_attack(z.real_column(0))?;
                Ok((est.p - p).abs() <= 0.01 && (est.r - v).abs() <= 0.01)
            })
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .filter(|&h| h)
            .count();
        Ok((hits >= 95, format!("{hits}/100 sequences within 0.01 of (0.3, 0.04) (need >= 95)")))
    })
}

pub fn conditioning_and_averaging(seed: u64) -> Criterion {
    timed("9", "conditioning and averaging oracles", || {
        let a = conditioning_suite()?;
        let b = averaging_suite(seed)?;
        Ok((a.passed && b.passed, format!("{}; {}", a.detail, b.detail)))
    })
}

/// Re-runs the two-state converse sweep and compares exported CSV bytes.
pub fn determinism(first: Option<&PhaseDiagram>, seed: u64, dir: &std::path::Path) -> Criterion {
    timed("10", "determinism", || {
        let first = match first {
            Some(d) => d.clone(),
            None => run_phase_sweep(&converse_grid(seed))?,
        };
        let second = run_phase_sweep(&converse_grid(seed))?;
        let (a, b) = (dir.join("first.csv"), dir.join("second.csv"));
        anonpriv::experiments::write_csv(&first.cells, &a)?;
        anonpriv::experiments::write_csv(&second.cells, &b)?;
        let read = |p: &std::path::Path| {
            std::fs::read(p).map_err(|source| anonpriv::Error::Io {
                path: p.to_path_buf(),
                source,
            })
        };
        let (x, y) = (read(&a)?, read(&b)?);
        Ok((x == y, format!("{} bytes, identical: {}", x.len(), x == y)))
    })
}

/// The two-state sweep over eta in {1.0, 2.2} and gamma in {0.5, 1.1}:
/// (2.2, 1.1) should read no-privacy, every gamma = 0.5 region privacy.
pub fn sweep_labels(seed: u64) -> Criterion {
    timed("S", "two-state phase labels", || {
        let grid = SweepGrid {
            eta_values: vec![1.0, 2.2],
            gamma_values: vec![0.5, 1.1],
            ..converse_grid(seed)
        };
        let d = run_phase_sweep(&grid)?;
        let label = |eta: f64, gamma: f64| {
            d.classification
                .iter()
                .find(|l| l.eta == eta && l.gamma == gamma)
                .map(|l| l.label)
        };
        let ok = label(2.2, 1.1) == Some(PhaseLabel::NoPrivacyTrend)
            && label(1.0, 0.5) == Some(PhaseLabel::PrivacyTrend)
            && label(2.2, 0.5) == Some(PhaseLabel::PrivacyTrend);
        let detail = d
            .classification
            .iter()
            .map(|l| format!("({}, {}) {:?}", l.eta, l.gamma, l.label))
            .collect::<Vec<_>>()
            .join(", ");
        Ok((ok, detail))
    })
}
