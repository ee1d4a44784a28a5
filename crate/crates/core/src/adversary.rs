//! Statistical matching attacks on anonymized traces.
//!
//! Every attack sees only the released matrix `Y`, the users' profiles and
//! the noise cap `a_n`; the permutation and the realized `R_u` never enter
//! these functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source_models::{Stage, Topology, TraceMatrix, UserPopulation};

/// Side information and tuning for a matching attack.
///
/// `target_user` is a zero-based user index; the first user is the usual
/// target.
#[derive(Clone, Copy, Debug)]
pub struct AttackConfig<'a> {
    pub alpha: f64,
    pub target_user: usize,
    pub known_profiles: &'a UserPopulation,
    pub a_n: f64,
}

impl<'a> AttackConfig<'a> {
    pub fn new(known_profiles: &'a UserPopulation, alpha: f64, a_n: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            target_user: 0,
            known_profiles,
            a_n,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_target(mut self, target_user: usize) -> Result<Self> {
        self.target_user = target_user;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if self.target_user >= self.known_profiles.n {
            return Err(Error::param(
                "target_user",
                format!("{} out of range for {} users", self.target_user, self.known_profiles.n),
            ));
        }
        if !(self.a_n >= 0.0 && self.a_n <= 1.0) {
            return Err(Error::param("a_n", format!("must lie in [0, 1], got {}", self.a_n)));
        }
        Ok(())
    }
}

/// Outcome of one matching attack.
///
/// `claimed_pseudonym` is set only when the band around the target's
/// profile holds at least one pseudonym; with several candidates the
/// nearest one is claimed and the report is marked ambiguous.
/// `fallback_pseudonym` is always the pseudonym nearest to the target's
/// profile in the max norm, and is what the attack decodes with when the
/// band is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub claimed_pseudonym: Option<usize>,
    pub fallback_pseudonym: usize,
    pub band_width: f64,
    pub candidates_in_band: usize,
    pub ambiguous: bool,
    /// Whether the decoded pseudonym is the target's; set by the harness.
    pub success_flag: Option<bool>,
    /// Identity decode of the target's samples: the decoded column verbatim.
    pub sample_estimates: Vec<u8>,
}

impl MatchReport {
    /// The pseudonym the attack attributes to the target.
    pub fn decoded_pseudonym(&self) -> usize {
        self.claimed_pseudonym.unwrap_or(self.fallback_pseudonym)
    }

    /// True when exactly one pseudonym fell in the band.
    pub fn strict(&self) -> bool {
        self.claimed_pseudonym.is_some() && !self.ambiguous
    }

    pub fn score(&mut self, true_pseudonym: usize) -> bool {
        let ok = self.decoded_pseudonym() == true_pseudonym;
        self.success_flag = Some(ok);
        ok
    }
}

/// `Delta = n^-(1/(r-1) + alpha/4)`; for two symbols `n^-(1 + alpha/4)`.
pub fn iid_band_width(n: usize, r: usize, alpha: f64) -> f64 {
    (n as f64).powf(-(1.0 / (r as f64 - 1.0) + alpha / 4.0))
}

/// `Delta'' = n^-(1/d + alpha/4)` with `d = |E| - r` free transitions.
pub fn markov_band_width(n: usize, free_dim: usize, alpha: f64) -> f64 {
    (n as f64).powf(-(1.0 / free_dim as f64 + alpha / 4.0))
}

fn check_released(y: &TraceMatrix, pop: &UserPopulation) -> Result<usize> {
    if y.stage() != Stage::Y {
        return Err(Error::param("y", format!("expected stage Y, got {:?}", y.stage())));
    }
    if y.n() != pop.n {
        return Err(Error::SizeMismatch(format!("{} pseudonyms for {} known users", y.n(), pop.n)));
    }
    let r = y.alphabet().expect("stage Y holds symbols");
    if r != pop.symbols() {
        return Err(Error::SizeMismatch(format!(
            "traces use {r} symbols, profiles use {}",
            pop.symbols()
        )));
    }
    Ok(r)
}

/// Per-pseudonym empirical frequencies of symbols `1..r`, i.e. the
/// coordinates the profiles are matched on. For two symbols this is the
/// single fraction of ones.
pub fn empirical_frequencies(y: &TraceMatrix) -> Result<Vec<Vec<f64>>> {
    let r = y
        .alphabet()
        .ok_or_else(|| Error::param("y", "frequencies need symbol traces"))?;
    if y.m() == 0 {
        return Err(Error::param("m", "need at least one sample"));
    }
    let m = y.m() as f64;
    Ok((0..y.n())
        .into_par_iter()
        .map(|j| {
            let mut counts = vec![0usize; r];
            for &s in y.symbol_column(j) {
                counts[s as usize] += 1;
            }
            counts[1..].iter().map(|&c| c as f64 / m).collect()
        })
        .collect())
}

/// Max-norm distance over the coordinates that are defined on both sides.
/// `None` when no coordinate is defined.
fn linf(target: &[f64], estimate: &[Option<f64>]) -> Option<f64> {
    target
        .iter()
        .zip(estimate)
        .filter_map(|(t, e)| e.map(|e| (t - e).abs()))
        .fold(None, |acc, d| Some(acc.map_or(d, |a: f64| a.max(d))))
}

fn band_match(target: &[f64], estimates: &[Vec<Option<f64>>], width: f64, y: &TraceMatrix) -> MatchReport {
    let distances: Vec<f64> = estimates
        .iter()
        .map(|e| linf(target, e).unwrap_or(f64::INFINITY))
        .collect();
    // Ties go to the lower pseudonym so the result is deterministic.
    let nearest = distances
        .iter()
        .enumerate()
        .fold(0, |best, (j, &d)| if d < distances[best] { j } else { best });
    let candidates = distances.iter().filter(|&&d| d <= width).count();
    let claimed = (candidates > 0).then_some(nearest);
    let decoded = claimed.unwrap_or(nearest);
    MatchReport {
        claimed_pseudonym: claimed,
        fallback_pseudonym: nearest,
        band_width: width,
        candidates_in_band: candidates,
        ambiguous: candidates != 1,
        success_flag: None,
        sample_estimates: y.symbol_column(decoded).to_vec(),
    }
}

/// Matches the target to the pseudonym whose empirical symbol frequencies
/// fall in the band of half-width `iid_band_width` around the target's
/// profile.
pub fn match_iid(y: &TraceMatrix, cfg: &AttackConfig) -> Result<MatchReport> {
    let pop = cfg.known_profiles;
    let r = check_released(y, pop)?;
    if pop.iid().is_none() {
        return Err(Error::param("known_profiles", "match_iid needs i.i.d. profiles"));
    }
    let target = pop.coordinates(cfg.target_user);
    let estimates: Vec<Vec<Option<f64>>> = empirical_frequencies(y)?
        .into_iter()
        .map(|v| v.into_iter().map(Some).collect())
        .collect();
    Ok(band_match(&target, &estimates, iid_band_width(pop.n, r, cfg.alpha), y))
}

/// Number of disjoint transitions `(y[0], y[1]), (y[2], y[3]), ...` in a
/// sequence of length `m`.
pub fn odd_transition_count(m: usize) -> usize {
    m / 2
}

/// Transition estimates for one sequence from the disjoint pairs
/// `(y[2t], y[2t+1])` only, so that the channel errors of different pairs
/// are independent. Coordinates follow `Topology::free_edges`; a
/// coordinate whose source state never starts a pair is `None`.
pub fn odd_transition_estimates(column: &[u8], topology: &Topology) -> Vec<Option<f64>> {
    let r = topology.states();
    let mut visits = vec![0usize; r];
    let mut counts = vec![0usize; r * r];
    for pair in column.chunks_exact(2) {
        let (a, b) = (pair[0] as usize, pair[1] as usize);
        visits[a] += 1;
        counts[a * r + b] += 1;
    }
    topology
        .free_edges()
        .into_iter()
        .map(|(i, l)| (visits[i] > 0).then(|| counts[i * r + l] as f64 / visits[i] as f64))
        .collect()
}

pub fn markov_transition_frequencies(y: &TraceMatrix, topology: &Topology) -> Result<Vec<Vec<Option<f64>>>> {
    let r = y
        .alphabet()
        .ok_or_else(|| Error::param("y", "transition frequencies need symbol traces"))?;
    if r != topology.states() {
        return Err(Error::SizeMismatch(format!(
            "traces use {r} symbols, topology has {} states",
            topology.states()
        )));
    }
    if y.m() < 3 {
        return Err(Error::param("m", format!("need at least 3 samples, got {}", y.m())));
    }
    Ok((0..y.n())
        .into_par_iter()
        .map(|j| odd_transition_estimates(y.symbol_column(j), topology))
        .collect())
}

/// Band matching on the free transition probabilities; undefined estimate
/// coordinates are left out of the distance.
pub fn match_markov(y: &TraceMatrix, cfg: &AttackConfig) -> Result<MatchReport> {
    let pop = cfg.known_profiles;
    check_released(y, pop)?;
    let (topology, _) = pop
        .markov()
        .ok_or_else(|| Error::param("known_profiles", "match_markov needs Markov profiles"))?;
    let d = topology.free_dim();
    if d == 0 {
        return Err(Error::Topology("no free transition probabilities to match on".into()));
    }
    let target = pop.coordinates(cfg.target_user);
    let estimates = markov_transition_frequencies(y, topology)?;
    Ok(band_match(&target, &estimates, markov_band_width(pop.n, d, cfg.alpha), y))
}

/// Recovered parameters of the two-state return chain seen through a
/// binary symmetric channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmEstimate {
    pub p: f64,
    pub r: f64,
    pub residual: f64,
}

/// Exact `(theta_0, theta_01)` for the return chain (`0 -> 1` always,
/// `1 -> 0` with probability `p`) observed with flip probability `r`:
/// the stationary fraction of zeros and of `0 -> 1` transitions.
pub fn hmm_moments(p: f64, r: f64) -> (f64, f64) {
    let theta0 = ((1.0 - r) * p + r) / (1.0 + p);
    let theta01 = (p * (1.0 - r).powi(2) + r * (p * r + (1.0 - p) * (1.0 - r))) / (1.0 + p);
    (theta0, theta01)
}

fn hmm_jacobian(p: f64, r: f64) -> [[f64; 2]; 2] {
    let s = 1.0 + p;
    let n0 = (1.0 - r) * p + r;
    let n01 = p * (1.0 - r).powi(2) + r * (p * r + (1.0 - p) * (1.0 - r));
    let dn0_dp = 1.0 - r;
    let dn0_dr = 1.0 - p;
    let dn01_dp = (1.0 - r).powi(2) + r * (r - (1.0 - r));
    let dn01_dr = -2.0 * p * (1.0 - r) + (p * r + (1.0 - p) * (1.0 - r)) + r * (p - (1.0 - p));
    [
        [(dn0_dp * s - n0) / (s * s), dn0_dr / s],
        [(dn01_dp * s - n01) / (s * s), dn01_dr / s],
    ]
}

const HMM_TOLERANCE: f64 = 1e-10;
const P_RANGE: (f64, f64) = (1e-9, 1.0 - 1e-9);
const R_RANGE: (f64, f64) = (0.0, 0.5 - 1e-9);

fn project(p: f64, r: f64) -> (f64, f64) {
    (p.clamp(P_RANGE.0, P_RANGE.1), r.clamp(R_RANGE.0, R_RANGE.1))
}

fn newton_from(start: (f64, f64), target: (f64, f64)) -> (f64, f64, f64) {
    let residual = |p: f64, r: f64| {
        let (a, b) = hmm_moments(p, r);
        (a - target.0, b - target.1)
    };
    let norm = |f: (f64, f64)| f.0.abs().max(f.1.abs());
    let (mut p, mut r) = start;
    let mut f = residual(p, r);
    for _ in 0..100 {
        if norm(f) < 1e-15 {
            break;
        }
        let [[a, b], [c, d]] = hmm_jacobian(p, r);
        let det = a * d - b * c;
        if det.abs() < 1e-300 {
            break;
        }
        // Full Newton step first; when the projection onto the domain spoils
        // it (root on the boundary), least-squares steps in one coordinate.
        let directions = [
            ((d * f.0 - b * f.1) / det, (a * f.1 - c * f.0) / det),
            ((a * f.0 + c * f.1) / (a * a + c * c), 0.0),
            (0.0, (b * f.0 + d * f.1) / (b * b + d * d)),
        ];
        let mut improved = false;
        'search: for (dp, dr) in directions {
            if !(dp.is_finite() && dr.is_finite()) {
                continue;
            }
            let mut step = 1.0;
            while step > 1e-8 {
                let (np, nr) = project(p - step * dp, r - step * dr);
                let nf = residual(np, nr);
                if norm(nf) < norm(f) {
                    (p, r, f) = (np, nr, nf);
                    improved = true;
                    break 'search;
                }
                step *= 0.5;
            }
        }
        if !improved {
            break;
        }
    }
    (p, r, norm(f))
}

/// Solves `hmm_moments(p, r) = (theta0, theta01)` over
/// `(0, 1) x [0, 1/2)` by damped Newton from a 4x4 grid of starts.
pub fn solve_hmm_moments(theta0: f64, theta01: f64) -> Result<HmmEstimate> {
    const STARTS: [f64; 4] = [0.125, 0.375, 0.625, 0.875];
    let mut best = HmmEstimate {
        p: f64::NAN,
        r: f64::NAN,
        residual: f64::INFINITY,
    };
    for &ps in &STARTS {
        for &rs in &STARTS {
            let (p, r, residual) = newton_from((ps, rs * 0.5), (theta0, theta01));
            if residual < best.residual {
                best = HmmEstimate { p, r, residual };
            }
        }
    }
    if best.residual < HMM_TOLERANCE {
        Ok(best)
    } else {
        Err(Error::InconsistentMoments {
            residual: best.residual,
        })
    }
}

/// Moment attack on a single observed sequence of the two-state return
/// chain: matches the fraction of zeros and of `0 -> 1` transitions.
pub fn hmm_moment_attack(y_col: &[u8]) -> Result<HmmEstimate> {
    if y_col.len() < 2 {
        return Err(Error::param("y_col", "need at least two samples"));
    }
    if let Some(&s) = y_col.iter().find(|&&s| s > 1) {
        return Err(Error::param("y_col", format!("symbol {s} in a two-state sequence")));
    }
    let zeros = y_col.iter().filter(|&&s| s == 0).count();
    let up = y_col.windows(2).filter(|w| w[0] == 0 && w[1] == 1).count();
    let theta0 = zeros as f64 / y_col.len() as f64;
    let theta01 = up as f64 / (y_col.len() - 1) as f64;
    solve_hmm_moments(theta0, theta01)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianEstimate {
    pub p: f64,
    /// Estimated noise variance.
    pub r: f64,
}

/// `p = mean` clamped to `[0, 1]`, `R = max(0, var - p(1 - p))`.
pub fn gaussian_moment_attack(z_col: &[f64]) -> Result<GaussianEstimate> {
    if z_col.len() < 2 {
        return Err(Error::param("z_col", "need at least two samples"));
    }
    let m = z_col.len() as f64;
    let mean = z_col.iter().sum::<f64>() / m;
    let var = z_col.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let p = mean.clamp(0.0, 1.0);
    Ok(GaussianEstimate {
        p,
        r: (var - p * (1.0 - p)).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{anonymize, draw_noise_levels_with_cap, obfuscate, obfuscate_gaussian, Permutation};
    use crate::source_models::{generate_traces, MarkovProfile};

    fn released(columns: Vec<Vec<u8>>, r: usize) -> TraceMatrix {
        TraceMatrix::from_symbol_columns(Stage::Y, r, columns).unwrap()
    }

    #[test]
    fn frequencies_by_direct_count() {
        let y = released(vec![vec![1; 10], vec![1, 0, 1, 0, 1, 0, 1, 0, 1, 0]], 2);
        assert_eq!(empirical_frequencies(&y).unwrap(), vec![vec![1.0], vec![0.5]]);
    }

    #[test]
    fn band_width_values() {
        assert!((iid_band_width(100, 2, 0.2) - 100f64.powf(-1.05)).abs() < 1e-15);
        assert!((iid_band_width(100, 2, 0.2) - 0.00794).abs() < 5e-6);
        // 100^-(1/3 + 0.075) = 10^-0.81667, not 0.0152
        assert!((markov_band_width(100, 3, 0.3) - 0.15252).abs() < 5e-5);
        assert!(iid_band_width(100, 2, 0.4) < iid_band_width(100, 2, 0.2));
        assert!(iid_band_width(200, 2, 0.2) < iid_band_width(100, 2, 0.2));
    }

    #[test]
    fn noiseless_identity_pipeline_recovers_target() {
        let pop = UserPopulation::from_bernoulli(&[0.2, 0.5, 0.8]).unwrap();
        let x = generate_traces(&pop, 20_000, 1).unwrap();
        let y = anonymize(
            &TraceMatrix::from_symbol_columns(Stage::Z, 2, x.symbol_columns().map(<[u8]>::to_vec).collect())
                .unwrap(),
            &Permutation::identity(3),
        )
        .unwrap();
        let cfg = AttackConfig::new(&pop, 0.2, 0.0).unwrap();
        let mut report = match_iid(&y, &cfg).unwrap();
        assert_eq!(report.decoded_pseudonym(), 0);
        assert!(report.score(0));
        assert_eq!(report.sample_estimates, x.symbol_column(0));
    }

    #[test]
    fn permuted_match_follows_the_permutation() {
        let pop = UserPopulation::from_bernoulli(&[0.1, 0.5, 0.9, 0.3]).unwrap();
        let x = generate_traces(&pop, 5_000, 4).unwrap();
        let noise = draw_noise_levels_with_cap(4, 1e-3, 5).unwrap();
        let z = obfuscate(&x, &noise, 2, 6).unwrap();
        let perm = Permutation::from_forward(vec![2, 0, 3, 1]).unwrap();
        let y = anonymize(&z, &perm).unwrap();
        for u in 0..4 {
            let cfg = AttackConfig::new(&pop, 0.2, 1e-3).unwrap().with_target(u).unwrap();
            assert_eq!(match_iid(&y, &cfg).unwrap().decoded_pseudonym(), perm.pseudonym(u));
        }
    }

    #[test]
    fn ambiguity_is_reported() {
        let pop = UserPopulation::from_bernoulli(&[0.5, 0.5]).unwrap();
        let y = released(vec![vec![0, 1, 0, 1], vec![1, 0, 1, 0]], 2);
        let report = match_iid(&y, &AttackConfig::new(&pop, 0.2, 0.0).unwrap()).unwrap();
        assert_eq!(report.candidates_in_band, 2);
        assert!(report.ambiguous);
        assert_eq!(report.claimed_pseudonym, Some(0));

        let y = released(vec![vec![1, 1, 1, 1], vec![0, 0, 0, 0]], 2);
        let report = match_iid(&y, &AttackConfig::new(&pop, 0.2, 0.0).unwrap()).unwrap();
        assert_eq!(report.candidates_in_band, 0);
        assert_eq!(report.claimed_pseudonym, None);
        assert!(report.ambiguous);
        assert_eq!(report.sample_estimates.len(), 4);
    }

    #[test]
    fn attack_rejects_unreleased_stage() {
        let pop = UserPopulation::from_bernoulli(&[0.5]).unwrap();
        let x = generate_traces(&pop, 4, 0).unwrap();
        assert!(match_iid(&x, &AttackConfig::new(&pop, 0.2, 0.0).unwrap()).is_err());
    }

    #[test]
    fn odd_transitions_consume_disjoint_pairs() {
        assert_eq!(odd_transition_count(4), 2);
        assert_eq!(odd_transition_count(5), 2);
        let topo = Topology::two_state_return();
        // pairs (0,1), (1,1): the (1,0) transition between them is skipped
        let est = odd_transition_estimates(&[0, 1, 1, 1], &topo);
        assert_eq!(topo.free_edges(), vec![(1, 0)]);
        assert_eq!(est, vec![Some(0.0)]);
        // state 1 never starts a pair
        assert_eq!(odd_transition_estimates(&[0, 1, 0, 1], &topo), vec![None]);
    }

    #[test]
    fn deterministic_cycle_frequencies_are_one() {
        let col: Vec<u8> = (0..30).map(|k| (k % 3) as u8).collect();
        for topo in [Topology::ring_with_self_loops(3).unwrap(), Topology::complete(3).unwrap()] {
            let est = odd_transition_estimates(&col, &topo);
            for ((i, l), e) in topo.free_edges().into_iter().zip(est) {
                assert_eq!(e, Some(if l == (i + 1) % 3 { 1.0 } else { 0.0 }));
            }
        }
    }

    #[test]
    fn markov_match_unpermuted_noiseless() {
        let topo = Topology::ring_with_self_loops(3).unwrap();
        let rows = |a: f64, b: f64, c: f64| {
            MarkovProfile::new(
                &topo,
                vec![vec![a, 1.0 - a, 0.0], vec![0.0, b, 1.0 - b], vec![1.0 - c, 0.0, c]],
            )
            .unwrap()
        };
        let pop = UserPopulation::from_markov(
            topo.clone(),
            vec![rows(0.2, 0.3, 0.4), rows(0.6, 0.7, 0.8), rows(0.4, 0.2, 0.6)],
        )
        .unwrap();
        let x = generate_traces(&pop, 50_000, 2).unwrap();
        let y = TraceMatrix::from_symbol_columns(Stage::Y, 3, x.symbol_columns().map(<[u8]>::to_vec).collect())
            .unwrap();
        for u in 0..3 {
            let cfg = AttackConfig::new(&pop, 0.3, 0.0).unwrap().with_target(u).unwrap();
            assert_eq!(match_markov(&y, &cfg).unwrap().decoded_pseudonym(), u);
        }
    }

    #[test]
    fn hmm_moment_values() {
        let (t0, t01) = hmm_moments(0.5, 0.2);
        assert!((t0 - 0.4).abs() < 1e-15);
        assert!((t01 - 0.28).abs() < 1e-15);
    }

    #[test]
    fn hmm_jacobian_matches_finite_differences() {
        for &(p, r) in &[(0.5, 0.2), (0.1, 0.4), (0.9, 0.05)] {
            let j = hmm_jacobian(p, r);
            let h = 1e-6;
            let (a1, b1) = hmm_moments(p + h, r);
            let (a0, b0) = hmm_moments(p - h, r);
            assert!((j[0][0] - (a1 - a0) / (2.0 * h)).abs() < 1e-8);
            assert!((j[1][0] - (b1 - b0) / (2.0 * h)).abs() < 1e-8);
            let (a1, b1) = hmm_moments(p, r + h);
            let (a0, b0) = hmm_moments(p, r - h);
            assert!((j[0][1] - (a1 - a0) / (2.0 * h)).abs() < 1e-8);
            assert!((j[1][1] - (b1 - b0) / (2.0 * h)).abs() < 1e-8);
        }
    }

    #[test]
    fn hmm_solver_inverts_exact_moments() {
        let est = solve_hmm_moments(0.4, 0.28).unwrap();
        assert!((est.p - 0.5).abs() < 1e-8 && (est.r - 0.2).abs() < 1e-8, "{est:?}");
    }

    #[test]
    fn hmm_solver_reports_inconsistent_moments() {
        // more 0 -> 1 transitions than zeros is impossible
        assert!(matches!(
            solve_hmm_moments(0.2, 0.6),
            Err(Error::InconsistentMoments { .. })
        ));
    }

    #[test]
    fn gaussian_attack_degenerate_and_noiseless() {
        let est = gaussian_moment_attack(&[1.0; 50]).unwrap();
        assert_eq!((est.p, est.r), (1.0, 0.0));

        let pop = UserPopulation::from_bernoulli(&[0.3]).unwrap();
        let x = generate_traces(&pop, 200_000, 8).unwrap();
        let z = obfuscate_gaussian(&x, &draw_noise_levels_with_cap(1, 1e-12, 0).unwrap(), 9).unwrap();
        let est = gaussian_moment_attack(z.real_column(0)).unwrap();
        assert!((est.p - 0.3).abs() < 0.005);
        assert!(est.r < 0.003);
    }
}
