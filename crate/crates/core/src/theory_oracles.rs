//! Brute-force checks of the probabilistic facts behind the privacy results, computed
//! independently of the attack pipeline.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::NoiseSchedule;
use crate::privacy_metrics::{assignment_posterior, critical_epsilon, in_window};
use crate::rng::{self, tag};
use crate::source_models::DensityConfig;

/// Independent uniforms `X_u ~ U[a_u, b_u]` and a set of observed values
/// whose assignment to the users is unknown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapInstance {
    pub intervals: Vec<(f64, f64)>,
    pub observed: Vec<f64>,
}

impl OverlapInstance {
    pub fn new(intervals: Vec<(f64, f64)>, observed: Vec<f64>) -> Result<Self> {
        if intervals.is_empty() || intervals.len() != observed.len() {
            return Err(Error::SizeMismatch(format!(
                "{} intervals, {} observed values",
                intervals.len(),
                observed.len()
            )));
        }
        if let Some(&(a, b)) = intervals.iter().find(|&&(a, b)| !(a < b)) {
            return Err(Error::param("intervals", format!("[{a}, {b}] is not a proper interval")));
        }
        for (i, x) in observed.iter().enumerate() {
            if observed[..i].contains(x) {
                return Err(Error::param("observed", format!("value {x} repeated")));
            }
        }
        Ok(Self { intervals, observed })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Whether every observed value lies in every interval.
    pub fn all_in_overlap(&self) -> bool {
        self.observed
            .iter()
            .all(|&g| self.intervals.iter().all(|&(a, b)| a <= g && g <= b))
    }

    fn log_density(&self, u: usize, x: f64) -> f64 {
        let (a, b) = self.intervals[u];
        if a <= x && x <= b {
            -(b - a).ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapPosterior {
    /// `P(X_0 = observed[j] | {X_u} = observed)`.
    pub probability: f64,
    pub all_in_overlap: bool,
    /// `|probability - 1/N|`.
    pub deviation_from_uniform: f64,
    /// True when the hypothesis holds and the posterior is `1/N` to 1e-12.
    pub uniform: bool,
}

/// Posterior of the first user's value by the permutation sum: the total
/// density of assignments giving user 0 the value `observed[j]`, over the
/// total density of all assignments.
pub fn uniform_overlap_posterior(inst: &OverlapInstance, j: usize) -> Result<OverlapPosterior> {
    let n = inst.len();
    if j >= n {
        return Err(Error::param("j", format!("{j} out of range for {n} values")));
    }
    if n > crate::privacy_metrics::DEFAULT_ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            n,
            cap: crate::privacy_metrics::DEFAULT_ENUMERATION_CAP,
        });
    }
    let log_l: Vec<Vec<f64>> = (0..n)
        .map(|u| inst.observed.iter().map(|&g| inst.log_density(u, g)).collect())
        .collect();
    let probability = assignment_posterior(&log_l)[j];
    let all_in_overlap = inst.all_in_overlap();
    let deviation = (probability - 1.0 / n as f64).abs();
    Ok(OverlapPosterior {
        probability,
        all_in_overlap,
        deviation_from_uniform: deviation,
        uniform: all_in_overlap && deviation <= 1e-12,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub accepted: usize,
    pub attempts: usize,
}

/// Rejection estimate of the same posterior: draw every `X_u`, accept when
/// each lands within `h` of a distinct observed value, and record which
/// value user 0 took. A draw is abandoned as soon as one user misses.
/// `h` must be below half the smallest gap between observed values.
pub fn overlap_posterior_monte_carlo(
    inst: &OverlapInstance,
    j: usize,
    h: f64,
    target_accepted: usize,
    max_attempts: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    let n = inst.len();
    let mut sorted = inst.observed.clone();
    sorted.sort_by(f64::total_cmp);
    let min_gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(h > 0.0 && 2.0 * h < min_gap) {
        return Err(Error::param("h", format!("need 0 < h < {}", min_gap / 2.0)));
    }
    let mut rng = rng::stream(seed, &[tag::ORACLE]);
    let (mut accepted, mut hits, mut attempts) = (0usize, 0usize, 0usize);
    let mut used = vec![false; n];
    while accepted < target_accepted && attempts < max_attempts {
        attempts += 1;
        used.iter_mut().for_each(|x| *x = false);
        let mut first = usize::MAX;
        let ok = inst.intervals.iter().enumerate().all(|(u, &(a, b))| {
            let x = rng.random_range(a..b);
            match inst.observed.iter().position(|&g| (x - g).abs() <= h) {
                Some(k) if !used[k] => {
                    used[k] = true;
                    if u == 0 {
                        first = k;
                    }
                    true
                }
                _ => false,
            }
        });
        if ok {
            accepted += 1;
            hits += usize::from(first == j);
        }
    }
    if accepted == 0 {
        return Err(Error::param("max_attempts", "no draw was accepted"));
    }
    let p = hits as f64 / accepted as f64;
    Ok(MonteCarloEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / accepted as f64).sqrt(),
        accepted,
        attempts,
    })
}

/// A random instance satisfying the overlap hypothesis: intervals that
/// share a common core, with `n` jittered, well-separated values inside
/// it. Returns the instance and the largest admissible rejection half-width.
pub fn random_overlap_instance(n: usize, seed: u64) -> Result<(OverlapInstance, f64)> {
    if n == 0 {
        return Err(Error::param("n", "need at least one value"));
    }
    let mut rng = rng::stream(seed, &[tag::ORACLE, n as u64]);
    let lo = rng.random_range(0.0..0.5);
    let width = rng.random_range(0.1..0.5);
    let intervals = (0..n)
        .map(|_| {
            let ext_lo = rng.random_range(0.0..0.1) * width;
            let ext_hi = rng.random_range(0.0..0.1) * width;
            (lo - ext_lo, lo + width + ext_hi)
        })
        .collect();
    let slot = width / n as f64;
    let observed = (0..n)
        .map(|k| lo + slot * (k as f64 + 0.5 + rng.random_range(-0.2..0.2)))
        .collect();
    // values sit at least 0.3 slots from each other and from the core's ends
    let h = 0.25 * slot;
    Ok((OverlapInstance::new(intervals, observed)?, h))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub zeta: f64,
    pub mean: f64,
    pub variance: f64,
    /// `max |Ybar - p_center|` over trials.
    pub max_abs_deviation: f64,
    /// `(p + zeta)(1 - p + zeta) / N`.
    pub variance_bound: f64,
    pub within_bound: bool,
    pub averages: Vec<f64>,
}

impl ConvergenceRow {
    pub fn fraction_within(&self, tolerance: f64, p_center: f64) -> f64 {
        self.averages
            .iter()
            .filter(|&&y| (y - p_center).abs() <= tolerance)
            .count() as f64
            / self.averages.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub p_center: f64,
    pub rows: Vec<ConvergenceRow>,
}

/// Averages of `N` independent Bernoulli(`p_u`) samples with every `p_u`
/// drawn uniformly from `[p - zeta_N, p + zeta_N] ∩ [0, 1]`.
pub fn bernoulli_average_convergence(
    p_center: f64,
    zeta: impl Fn(usize) -> f64 + Sync,
    n_list: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    if !(0.0..=1.0).contains(&p_center) {
        return Err(Error::param("p_center", format!("must lie in [0, 1], got {p_center}")));
    }
    if trials < 2 || n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::param("trials", "need at least two trials and positive sizes"));
    }
    let rows = n_list
        .iter()
        .map(|&n| {
            let z = zeta(n);
            if !(z >= 0.0) {
                return Err(Error::param("zeta", format!("zeta({n}) = {z} must be nonnegative")));
            }
            let (lo, hi) = ((p_center - z).max(0.0), (p_center + z).min(1.0));
            let averages: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = rng::stream(seed, &[tag::ORACLE, n as u64, t as u64]);
                    let ones = (0..n)
                        .filter(|_| {
                            let p = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                            rng.random::<f64>() < p
                        })
                        .count();
                    ones as f64 / n as f64
                })
                .collect();
            let t = trials as f64;
            let mean = averages.iter().sum::<f64>() / t;
            let variance = averages.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (t - 1.0);
            let bound = (p_center + z) * (1.0 - p_center + z) / n as f64;
            Ok(ConvergenceRow {
                n,
                zeta: z,
                mean,
                variance,
                max_abs_deviation: averages.iter().map(|y| (y - p_center).abs()).fold(0.0, f64::max),
                variance_bound: bound,
                within_bound: variance <= bound,
                averages,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ConvergenceReport { p_center, rows })
}

/// Mutual information in bits of a finite joint `joint[x][y]`, which need
/// not be normalized.
pub fn mutual_information(joint: &[Vec<f64>]) -> Result<f64> {
    let total: f64 = joint.iter().flatten().sum();
    if !(total > 0.0) || joint.iter().flatten().any(|&p| p < 0.0) {
        return Err(Error::param("joint", "needs nonnegative entries with positive mass"));
    }
    let cols = joint.first().map_or(0, Vec::len);
    if joint.iter().any(|r| r.len() != cols) {
        return Err(Error::SizeMismatch("ragged joint table".into()));
    }
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum::<f64>() / total).collect();
    let py: Vec<f64> = (0..cols).map(|y| joint.iter().map(|r| r[y]).sum::<f64>() / total).collect();
    let mut mi = 0.0;
    for (x, row) in joint.iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            if p > 0.0 {
                let p = p / total;
                mi += p * (p / (px[x] * py[y])).log2();
            }
        }
    }
    Ok(mi.max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub event_probability: f64,
    pub mi: f64,
    pub mi_conditional: f64,
    pub gap: f64,
}

/// Exact `I(X;Y)` against `I(X;Y | B)` for each event `B` given as a mask
/// over the `Y` values.
pub fn conditional_mi_gap(joint: &[Vec<f64>], events: &[Vec<bool>]) -> Result<Vec<GapRow>> {
    let mi = mutual_information(joint)?;
    let total: f64 = joint.iter().flatten().sum();
    events
        .iter()
        .map(|mask| {
            if joint.iter().any(|r| r.len() != mask.len()) {
                return Err(Error::SizeMismatch("event mask does not match the Y alphabet".into()));
            }
            let restricted: Vec<Vec<f64>> = joint
                .iter()
                .map(|r| r.iter().zip(mask).map(|(&p, &keep)| if keep { p } else { 0.0 }).collect())
                .collect();
            let mass: f64 = restricted.iter().flatten().sum::<f64>() / total;
            if !(mass > 0.0) {
                return Err(Error::param("events", "zero-probability event"));
            }
            let mi_conditional = mutual_information(&restricted)?;
            Ok(GapRow {
                event_probability: mass,
                mi,
                mi_conditional,
                gap: (mi - mi_conditional).abs(),
            })
        })
        .collect()
}

/// Joint of a binary `X` with a `Y` arranged in levels of decreasing mass
/// (`0.9, 0.09, 0.009, ...`, the last level taking the remainder). Within
/// each level `Y` is a binary symmetric observation of `X` whose crossover
/// probability falls with the level, so rarer levels are more revealing.
/// Event `k` is the union of the first `k + 1` levels, with probability
/// `1 - 10^-(k+1)`.
pub fn leveled_joint(levels: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<bool>>)> {
    if levels < 2 {
        return Err(Error::param("levels", "need at least two levels"));
    }
    let mass: Vec<f64> = (0..levels)
        .map(|l| {
            if l + 1 < levels {
                0.9 * 0.1f64.powi(l as i32)
            } else {
                0.1f64.powi(l as i32)
            }
        })
        .collect();
    let mut joint = vec![vec![0.0; 2 * levels]; 2];
    for (l, &w) in mass.iter().enumerate() {
        let flip = 0.4 / (l as f64 + 1.0);
        for x in 0..2 {
            for b in 0..2 {
                joint[x][2 * l + b] = w * 0.5 * if x == b { 1.0 - flip } else { flip };
            }
        }
    }
    let events = (0..levels - 1)
        .map(|k| (0..2 * levels).map(|y| y / 2 <= k).collect())
        .collect();
    Ok((joint, events))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub n: usize,
    pub a_n: f64,
    pub epsilon_n: f64,
    pub mean_size: f64,
    pub threshold: f64,
    pub exceed_probability: f64,
    pub contains_reference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub beta: f64,
    pub p1: f64,
    /// `E[N] / n^(beta/2)` at the smallest `n`.
    pub lambda_hat: f64,
    /// Least-squares slope of `ln E[N]` against `ln n`.
    pub slope: f64,
    pub rows: Vec<GrowthRow>,
}

/// Monte Carlo size of the two-state critical set around a reference user
/// with parameter `p1`, among `n` users drawn from `density`.
pub fn critical_set_growth(
    n_list: &[usize],
    beta: f64,
    p1: f64,
    density: &DensityConfig,
    noise: &NoiseSchedule,
    trials: usize,
    seed: u64,
) -> Result<GrowthReport> {
    if n_list.len() < 2 || trials == 0 {
        return Err(Error::param("n_list", "need at least two sizes and one trial"));
    }
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(Error::param("p1", format!("must lie in (0, 1), got {p1}")));
    }
    density.validate(1.0)?;
    let mut rows = Vec::with_capacity(n_list.len());
    let mut all_sizes = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let a_n = noise.cap(n)?.value;
        let eps = critical_epsilon(n, 2, beta);
        let sizes: Vec<(usize, bool)> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::stream(seed, &[tag::ORACLE, n as u64, t as u64]);
                let member = |rng: &mut rng::SimRng, p: f64| {
                    let q = p + (1.0 - 2.0 * p) * rng.random::<f64>() * a_n;
                    in_window(p1, p, q, 2, eps, a_n) && in_window(1.0 - p1, 1.0 - p, 1.0 - q, 2, eps, a_n)
                };
                let reference = member(&mut rng, p1);
                let others = (1..n)
                    .filter(|_| {
                        let p = density.sample_unit(&mut rng);
                        member(&mut rng, p)
                    })
                    .count();
                (others + usize::from(reference), reference)
            })
            .collect();
        rows.push(GrowthRow {
            n,
            a_n,
            epsilon_n: eps,
            mean_size: sizes.iter().map(|&(s, _)| s as f64).sum::<f64>() / trials as f64,
            threshold: f64::NAN,
            exceed_probability: f64::NAN,
            contains_reference: sizes.iter().filter(|&&(_, r)| r).count() as f64 / trials as f64,
        });
        all_sizes.push(sizes);
    }
    let lambda_hat = rows[0].mean_size / (rows[0].n as f64).powf(beta / 2.0);
    for (row, sizes) in rows.iter_mut().zip(&all_sizes) {
        row.threshold = 0.5 * lambda_hat * (row.n as f64).powf(beta / 2.0);
        row.exceed_probability =
            sizes.iter().filter(|&&(s, _)| s as f64 > row.threshold).count() as f64 / trials as f64;
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_size.max(f64::MIN_POSITIVE).ln()).collect();
    Ok(GrowthReport {
        beta,
        p1,
        lambda_hat,
        slope: least_squares_slope(&xs, &ys),
        rows,
    })
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Posterior of 100 random overlap instances (sizes 2 to 6) against `1/N`
/// and against the rejection sampler.
pub fn overlap_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut worst_exact: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    for i in 0..instances {
        let n = 2 + i % 5;
        let inst_seed = rng::derive_seed(seed, &[i as u64]);
        let (inst, h) = random_overlap_instance(n, inst_seed)?;
        for j in 0..n {
            worst_exact = worst_exact.max(uniform_overlap_posterior(&inst, j)?.deviation_from_uniform);
        }
        let mc = overlap_posterior_monte_carlo(&inst, 0, h, 400, 50_000_000, inst_seed)?;
        let sigma = ((1.0 / n as f64) * (1.0 - 1.0 / n as f64) / mc.accepted as f64).sqrt();
        worst_z = worst_z.max((mc.estimate - 1.0 / n as f64).abs() / sigma);
    }
    Ok(SuiteReport {
        name: "uniform-overlap-posterior".into(),
        passed: worst_exact <= 1e-12 && worst_z <= 4.0,
        detail: format!(
            "{instances} instances: max |posterior - 1/N| = {worst_exact:.2e}, max Monte Carlo deviation = {worst_z:.2} sigma"
        ),
    })
}

pub fn growth_suite(seed: u64) -> Result<SuiteReport> {
    let beta = 0.5;
    let report = critical_set_growth(
        &[1_000, 10_000, 100_000],
        beta,
        0.2,
        &DensityConfig::uniform(),
        &NoiseSchedule::new(1.0, 1.0 - beta)?,
        200,
        seed,
    )?;
    let last = report.rows.last().expect("three sizes");
    Ok(SuiteReport {
        name: "critical-set-growth".into(),
        passed: (0.10..=0.40).contains(&report.slope) && last.exceed_probability >= 0.95,
        detail: format!(
            "slope of ln E[N] = {:.3}, P(N > lambda/2 n^(beta/2)) at n = {} is {:.3}",
            report.slope, last.n, last.exceed_probability
        ),
    })
}

pub fn conditioning_suite() -> Result<SuiteReport> {
    let (joint, mut events) = leveled_joint(4)?;
    events.push(vec![true; joint[0].len()]);
    let rows = conditional_mi_gap(&joint, &events)?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    Ok(SuiteReport {
        name: "conditional-mi-gap".into(),
        passed: decreasing && gaps.last() == Some(&0.0),
        detail: format!("gaps {gaps:?} for P(B) = {:?}", rows.iter().map(|r| r.event_probability).collect::<Vec<_>>()),
    })
}

pub fn averaging_suite(seed: u64) -> Result<SuiteReport> {
    let report = bernoulli_average_convergence(0.3, |n| (n as f64).powf(-0.5), &[100, 10_000], 1_000, seed)?;
    let ratio = report.rows[0].variance / report.rows[1].variance;
    let scale = ratio / 100.0;
    // the bound is on the true variance; allow three standard errors of the
    // sample variance (chi-square, 1000 trials)
    let slack = 1.0 + 3.0 * (2.0 / 999.0f64).sqrt();
    let bounded = report.rows.iter().all(|r| r.variance <= slack * r.variance_bound);
    Ok(SuiteReport {
        name: "bernoulli-average-convergence".into(),
        passed: (1.0 / 1.3..=1.3).contains(&scale) && bounded,
        detail: format!("variance ratio N=100 vs N=10^4 is {ratio:.1} (expected 100)"),
    })
}

/// All four oracle suites with their default sizes.
pub fn run_verification_suites(seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        overlap_suite(100, seed)?,
        growth_suite(seed)?,
        conditioning_suite()?,
        averaging_suite(seed)?,
    ])
}
