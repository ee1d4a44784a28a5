//! Monte Carlo sweeps over the (observation exponent, noise exponent)
//! plane: end-to-end attack trials per cell, trend classification, and
//! CSV / JSON export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{match_iid, match_markov, AttackConfig};
use crate::error::{Error, Result};
use crate::mechanisms::{anonymize, draw_noise_levels, obfuscate, NoiseSchedule, ObservationSchedule, Permutation};
use crate::privacy_metrics::{plugin_mi_lower_bound, MIN_PLUGIN_PAIRS};
use crate::rng::{derive_seed, tag};
use crate::source_models::{
    generate_traces, sample_iid_profiles, sample_markov_profiles, DensityConfig, Topology, UserPopulation,
};

/// Default cap on `m * n * trials` symbol draws per cell.
pub const DEFAULT_SAMPLE_BUDGET: f64 = 2e9;
/// Success rate the largest `n` must reach for a no-privacy trend.
pub const NO_PRIVACY_SUCCESS: f64 = 0.9;
/// Plug-in MI ceiling (bits) for a privacy trend.
pub const PRIVACY_MI_BITS: f64 = 0.05;
pub const TREND_SIGMAS: f64 = 3.0;
/// Smallest band exponent used when `eta` is at or below the matching
/// threshold `2 / dim`.
pub const ALPHA_FLOOR: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    #[serde(rename = "iid-2")]
    Iid2,
    IidR { r: usize },
    Markov { topology: Topology },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[serde(rename = "iid-2")]
    Iid2,
    IidR,
    Markov,
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Iid2 => ModelKind::Iid2,
            ModelSpec::IidR { .. } => ModelKind::IidR,
            ModelSpec::Markov { .. } => ModelKind::Markov,
        }
    }

    pub fn symbols(&self) -> usize {
        match self {
            ModelSpec::Iid2 => 2,
            ModelSpec::IidR { r } => *r,
            ModelSpec::Markov { topology } => topology.states(),
        }
    }

    /// Dimension of the matched parameter: `r - 1` for i.i.d. users, the
    /// free transition count `d` for Markov users.
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Markov { topology } => topology.free_dim(),
            _ => self.symbols() - 1,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::IidR { r } if !(2..=256).contains(r) => {
                Err(Error::param("model.r", format!("need 2 <= r <= 256, got {r}")))
            }
            ModelSpec::Markov { topology } if topology.free_dim() == 0 => {
                Err(Error::Topology("no free transition probabilities".into()))
            }
            _ => Ok(()),
        }
    }

    fn sample(&self, n: usize, density: &DensityConfig, seed: u64) -> Result<UserPopulation> {
        match self {
            ModelSpec::Markov { topology } => sample_markov_profiles(n, topology, density, seed),
            _ => sample_iid_profiles(n, self.symbols(), density, seed),
        }
    }
}

/// Band exponent for observation exponent `eta`: `eta - 2/dim`, floored.
pub fn band_alpha(eta: f64, dim: usize) -> f64 {
    (eta - 2.0 / dim as f64).max(ALPHA_FLOOR)
}

/// One cell of the plane at one population size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub observations: ObservationSchedule,
    pub noise: NoiseSchedule,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default = "default_budget")]
    pub budget: f64,
    /// Same profiles in every trial instead of fresh draws.
    #[serde(default)]
    pub fixed_population: Option<UserPopulation>,
}

fn default_budget() -> f64 {
    DEFAULT_SAMPLE_BUDGET
}

impl CellConfig {
    pub fn required_draws(&self) -> f64 {
        self.observations.samples(self.n) as f64 * self.n as f64 * self.trials as f64
    }
}

/// Aggregate of one cell; the fields are exactly the CSV columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model: ModelKind,
    pub r_or_d: usize,
    pub n: usize,
    pub eta: f64,
    pub gamma: f64,
    pub c: f64,
    pub c_prime: f64,
    pub trials: usize,
    pub seed: u64,
    /// Fraction of trials where the target's pseudonym was decoded.
    pub success_rate: f64,
    /// Fraction of trials with more than one pseudonym in the band.
    pub ambiguity_rate: f64,
    /// Symbol error rate of the decoded samples, averaged over time.
    pub pe: f64,
    /// Plug-in MI of `(X_1(0), estimate)`; absent below 100 trials.
    pub mi_lb: Option<f64>,
    pub mi_se: Option<f64>,
}

impl CellResult {
    pub fn success_std_error(&self) -> f64 {
        (self.success_rate * (1.0 - self.success_rate) / self.trials as f64).sqrt()
    }
}

struct TrialOutcome {
    success: bool,
    ambiguous: bool,
    symbol_errors: usize,
    m: usize,
    truth: u8,
    estimate: u8,
}

fn run_trial(cfg: &CellConfig, t: usize, m: usize, alpha: f64) -> Result<TrialOutcome> {
    let seed = |stage: u64| derive_seed(cfg.seed, &[tag::TRIAL, t as u64, stage]);
    let n = cfg.n;
    let sampled;
    let pop = match &cfg.fixed_population {
        Some(p) => p,
        None => {
            sampled = cfg.model.sample(n, &cfg.density, seed(tag::PROFILES))?;
            &sampled
        }
    };
    let x = generate_traces(pop, m, seed(tag::TRACES))?;
    let noise = draw_noise_levels(n, &cfg.noise, seed(tag::NOISE))?;
    let z = obfuscate(&x, &noise, cfg.model.symbols(), seed(tag::CHANNEL))?;
    let perm = Permutation::random(n, seed(tag::PERMUTATION));
    let y = anonymize(&z, &perm)?;
    let attack = AttackConfig::new(pop, alpha, noise.a_n)?;
    let mut report = match cfg.model {
        ModelSpec::Markov { .. } => match_markov(&y, &attack)?,
        _ => match_iid(&y, &attack)?,
    };
    let success = report.score(perm.pseudonym(0));
    let truth = x.symbol_column(0);
    let symbol_errors = truth
        .iter()
        .zip(&report.sample_estimates)
        .filter(|(a, b)| a != b)
        .count();
    Ok(TrialOutcome {
        success,
        ambiguous: report.ambiguous,
        symbol_errors,
        m,
        truth: truth[0],
        estimate: report.sample_estimates[0],
    })
}

/// Runs `trials` independent end-to-end trials (profiles, traces, noise,
/// channel, permutation, attack on the first user, scoring).
pub fn run_phase_cell(cfg: &CellConfig) -> Result<CellResult> {
    cfg.model.validate()?;
    if cfg.trials == 0 {
        return Err(Error::param("trials", "need at least one trial"));
    }
    if cfg.n < 2 {
        return Err(Error::param("n", format!("need at least two users, got {}", cfg.n)));
    }
    if let Some(pop) = &cfg.fixed_population {
        if pop.n != cfg.n || pop.symbols() != cfg.model.symbols() || pop.markov().is_some() != matches!(cfg.model, ModelSpec::Markov { .. }) {
            return Err(Error::param("fixed_population", "does not match the cell's model and n"));
        }
    }
    let required = cfg.required_draws();
    if required > cfg.budget {
        return Err(Error::Budget {
            required,
            budget: cfg.budget,
        });
    }
    let m = cfg.observations.samples(cfg.n);
    let alpha = band_alpha(cfg.observations.eta, cfg.model.dim());
    let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t, m, alpha))
        .collect::<Result<_>>()?;
    let t = cfg.trials as f64;
    let frac = |f: fn(&TrialOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / t;
    let pe = outcomes.iter().map(|o| o.symbol_errors as f64 / o.m as f64).sum::<f64>() / t;
    let (mi_lb, mi_se) = if cfg.trials >= MIN_PLUGIN_PAIRS {
        let x: Vec<u8> = outcomes.iter().map(|o| o.truth).collect();
        let est: Vec<u8> = outcomes.iter().map(|o| o.estimate).collect();
        let mi = plugin_mi_lower_bound(&x, &est)?;
        (Some(mi.value_bits), Some(mi.std_error))
    } else {
        (None, None)
    };
    Ok(CellResult {
        model: cfg.model.kind(),
        r_or_d: match &cfg.model {
            ModelSpec::Markov { topology } => topology.free_dim(),
            other => other.symbols(),
        },
        n: cfg.n,
        eta: cfg.observations.eta,
        gamma: cfg.noise.gamma,
        c: cfg.observations.c,
        c_prime: cfg.noise.c_prime,
        trials: cfg.trials,
        seed: cfg.seed,
        success_rate: frac(|o| o.success),
        ambiguity_rate: frac(|o| o.ambiguous),
        pe,
        mi_lb,
        mi_se,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub model: ModelSpec,
    pub n_values: Vec<usize>,
    pub eta_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
    pub c: f64,
    pub c_prime: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default = "default_budget")]
    pub budget: f64,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::param("n_values", "must not be empty"));
        }
        if self.eta_values.is_empty() {
            return Err(Error::param("eta_values", "must not be empty"));
        }
        if self.gamma_values.is_empty() {
            return Err(Error::param("gamma_values", "must not be empty"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "need at least one trial"));
        }
        if !(self.budget > 0.0) {
            return Err(Error::param("budget", "must be positive"));
        }
        ObservationSchedule::new(self.c, 1.0)?;
        NoiseSchedule::new(self.c_prime, 1.0)?;
        self.model.validate()
    }

    /// Seed of the cell at `(n, eta, gamma)`.
    pub fn cell_seed(&self, n: usize, eta: f64, gamma: f64) -> u64 {
        derive_seed(self.seed, &[n as u64, eta.to_bits(), gamma.to_bits()])
    }

    pub fn cell(&self, n: usize, eta: f64, gamma: f64) -> Result<CellConfig> {
        Ok(CellConfig {
            model: self.model.clone(),
            n,
            observations: ObservationSchedule::new(self.c, eta)?,
            noise: NoiseSchedule::new(self.c_prime, gamma)?,
            trials: self.trials,
            seed: self.cell_seed(n, eta, gamma),
            density: self.density.clone(),
            budget: self.budget,
            fixed_population: None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseLabel {
    NoPrivacyTrend,
    PrivacyTrend,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionLabel {
    pub eta: f64,
    pub gamma: f64,
    pub label: PhaseLabel,
}

/// A cell that was skipped; budget errors carry the required draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub n: usize,
    pub eta: f64,
    pub gamma: f64,
    pub message: String,
    pub required_draws: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub cells: Vec<CellResult>,
    pub classification: Vec<RegionLabel>,
    #[serde(default)]
    pub failures: Vec<CellFailure>,
}

/// Label of one `(eta, gamma)` region from its cells (any order of `n`).
///
/// No-privacy trend: success non-decreasing in `n` up to 3 combined
/// standard errors between consecutive sizes, and at least 0.9 at the
/// largest `n`. Privacy trend: success within 3 standard errors of the
/// chance level `1/n` at every `n`, and plug-in MI below 0.05 bits
/// everywhere.
pub fn classify_region(cells: &[&CellResult]) -> PhaseLabel {
    if cells.is_empty() {
        return PhaseLabel::Inconclusive;
    }
    let mut sorted = cells.to_vec();
    sorted.sort_by_key(|c| c.n);
    let rising = sorted.windows(2).all(|w| {
        let slack = TREND_SIGMAS * w[0].success_std_error().hypot(w[1].success_std_error());
        w[1].success_rate >= w[0].success_rate - slack
    });
    let top = sorted.last().expect("nonempty");
    if rising && top.success_rate >= NO_PRIVACY_SUCCESS {
        return PhaseLabel::NoPrivacyTrend;
    }
    let near_chance = sorted.iter().all(|c| {
        let chance = 1.0 / c.n as f64;
        let sigma = (chance * (1.0 - chance) / c.trials as f64).sqrt();
        (c.success_rate - chance).abs() <= TREND_SIGMAS * sigma
    });
    let low_mi = sorted.iter().all(|c| matches!(c.mi_lb, Some(v) if v < PRIVACY_MI_BITS));
    if near_chance && low_mi {
        PhaseLabel::PrivacyTrend
    } else {
        PhaseLabel::Inconclusive
    }
}

/// Labels every `(eta, gamma)` pair present in `cells`, in order of first
/// appearance.
pub fn classify(cells: &[CellResult]) -> Vec<RegionLabel> {
    let mut regions: Vec<(f64, f64)> = Vec::new();
    for c in cells {
        if !regions.iter().any(|&(e, g)| e == c.eta && g == c.gamma) {
            regions.push((c.eta, c.gamma));
        }
    }
    regions
        .into_iter()
        .map(|(eta, gamma)| {
            let members: Vec<&CellResult> = cells.iter().filter(|c| c.eta == eta && c.gamma == gamma).collect();
            RegionLabel {
                eta,
                gamma,
                label: classify_region(&members),
            }
        })
        .collect()
}

/// Evaluates every `(eta, gamma, n)` cell; ordering is eta, then gamma,
/// then `n`. Budget and other per-cell errors are collected, not fatal.
pub fn run_phase_sweep(grid: &SweepGrid) -> Result<PhaseDiagram> {
    grid.validate()?;
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for &eta in &grid.eta_values {
        for &gamma in &grid.gamma_values {
            for &n in &grid.n_values {
                match grid.cell(n, eta, gamma).and_then(|cfg| run_phase_cell(&cfg)) {
                    Ok(cell) => cells.push(cell),
                    Err(e) => failures.push(CellFailure {
                        n,
                        eta,
                        gamma,
                        required_draws: match e {
                            Error::Budget { required, .. } => Some(required),
                            _ => None,
                        },
                        message: e.to_string(),
                    }),
                }
            }
        }
    }
    let mut classification = classify(&cells);
    for f in &failures {
        if !classification.iter().any(|l| l.eta == f.eta && l.gamma == f.gamma) {
            classification.push(RegionLabel {
                eta: f.eta,
                gamma: f.gamma,
                label: PhaseLabel::Inconclusive,
            });
        }
    }
    Ok(PhaseDiagram {
        cells,
        classification,
        failures,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportFormat {
    Csv,
    Record,
}

pub fn export(diagram: &PhaseDiagram, path: &Path, format: ExportFormat) -> Result<()> {
    match format {
        ExportFormat::Csv => write_csv(&diagram.cells, path),
        ExportFormat::Record => write_json(diagram, path),
    }
}

pub fn write_csv(cells: &[CellResult], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if cells.is_empty() {
        w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    }
    for c in cells {
        w.serialize(c).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const CSV_COLUMNS: [&str; 14] = [
    "model",
    "r_or_d",
    "n",
    "eta",
    "gamma",
    "c",
    "c_prime",
    "trials",
    "seed",
    "success_rate",
    "ambiguity_rate",
    "pe",
    "mi_lb",
    "mi_se",
];

pub fn import_csv(path: &Path) -> Result<Vec<CellResult>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_COLUMNS) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Run-metadata sidecar written next to every export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub version: String,
    pub budget: f64,
    pub wall_time_seconds: f64,
    pub no_privacy_success: f64,
    pub privacy_mi_bits: f64,
    pub trend_sigmas: f64,
    pub alpha_floor: f64,
    pub classification_rule: String,
}

impl RunMetadata {
    pub fn new(seed: u64, budget: f64, wall_time_seconds: f64) -> Self {
        Self {
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            budget,
            wall_time_seconds,
            no_privacy_success: NO_PRIVACY_SUCCESS,
            privacy_mi_bits: PRIVACY_MI_BITS,
            trend_sigmas: TREND_SIGMAS,
            alpha_floor: ALPHA_FLOOR,
            classification_rule: "no-privacy-trend: success non-decreasing in n within trend_sigmas and >= \
                                  no_privacy_success at the largest n; privacy-trend: success within trend_sigmas \
                                  of 1/n at every n and mi_lb < privacy_mi_bits; otherwise inconclusive"
                .into(),
        }
    }

    /// `<path>.meta.json`.
    pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta.json");
        s.into()
    }

    pub fn write_beside(&self, path: &Path) -> Result<()> {
        write_json(self, &Self::sidecar_path(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_cell(n: usize, eta: f64, gamma: f64, trials: usize) -> CellConfig {
        CellConfig {
            model: ModelSpec::Iid2,
            n,
            observations: ObservationSchedule::new(1.0, eta).unwrap(),
            noise: NoiseSchedule::new(1.0, gamma).unwrap(),
            trials,
            seed: 11,
            density: DensityConfig::uniform(),
            budget: DEFAULT_SAMPLE_BUDGET,
            fixed_population: None,
        }
    }

    fn result(n: usize, success_rate: f64, mi_lb: Option<f64>) -> CellResult {
        CellResult {
            model: ModelKind::Iid2,
            r_or_d: 2,
            n,
            eta: 1.0,
            gamma: 0.5,
            c: 1.0,
            c_prime: 1.0,
            trials: 100,
            seed: 0,
            success_rate,
            ambiguity_rate: 0.0,
            pe: 0.0,
            mi_lb,
            mi_se: mi_lb.map(|_| 0.01),
        }
    }

    #[test]
    fn noiseless_distinct_pair_is_matched() {
        let mut cfg = two_state_cell(2, 1.0, 60.0, 50);
        cfg.observations = ObservationSchedule::new(5.0, 1.0).unwrap();
        cfg.fixed_population = Some(UserPopulation::from_bernoulli(&[0.05, 0.95]).unwrap());
        let cell = run_phase_cell(&cfg).unwrap();
        assert!(cell.success_rate >= 0.98, "{}", cell.success_rate);
        assert!(cell.mi_lb.is_none());
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = two_state_cell(10, 1.5, 1.0, 20);
        assert_eq!(run_phase_cell(&cfg).unwrap(), run_phase_cell(&cfg).unwrap());
    }

    #[test]
    fn budget_guard_reports_required_draws() {
        let mut cfg = two_state_cell(100, 2.0, 1.0, 10);
        cfg.budget = 1e5;
        match run_phase_cell(&cfg) {
            Err(Error::Budget { required, budget }) => {
                assert_eq!(required, 1e4 * 100.0 * 10.0);
                assert_eq!(budget, 1e5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(run_phase_cell(&two_state_cell(10, 1.0, 1.0, 0)).is_err());
        let grid = SweepGrid {
            model: ModelSpec::Iid2,
            n_values: vec![10],
            eta_values: vec![1.0],
            gamma_values: vec![],
            c: 1.0,
            c_prime: 1.0,
            trials: 5,
            seed: 1,
            density: DensityConfig::uniform(),
            budget: DEFAULT_SAMPLE_BUDGET,
        };
        assert!(run_phase_sweep(&grid).is_err());
        assert!(run_phase_sweep(&SweepGrid { gamma_values: vec![1.0], trials: 0, ..grid }).is_err());
    }

    #[test]
    fn alpha_floor() {
        assert!((band_alpha(2.2, 1) - 0.2).abs() < 1e-12);
        assert_eq!(band_alpha(1.0, 1), ALPHA_FLOOR);
        assert!((band_alpha(2.0 / 3.0 + 0.3, 3) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn classification_rules() {
        let rising = [result(20, 0.7, Some(0.5)), result(50, 0.85, Some(0.6)), result(100, 0.95, Some(0.7))];
        assert_eq!(classify_region(&rising.iter().collect::<Vec<_>>()), PhaseLabel::NoPrivacyTrend);
        let chance = [result(20, 0.05, Some(0.0)), result(100, 0.01, Some(0.01))];
        assert_eq!(classify_region(&chance.iter().collect::<Vec<_>>()), PhaseLabel::PrivacyTrend);
        let no_mi = [result(20, 0.05, None)];
        assert_eq!(classify_region(&no_mi.iter().collect::<Vec<_>>()), PhaseLabel::Inconclusive);
        let falling = [result(20, 1.0, Some(0.5)), result(100, 0.9, Some(0.5))];
        assert_eq!(classify_region(&falling.iter().collect::<Vec<_>>()), PhaseLabel::Inconclusive);
    }

    #[test]
    fn sweep_collects_budget_failures() {
        let grid = SweepGrid {
            model: ModelSpec::Iid2,
            n_values: vec![5, 1000],
            eta_values: vec![1.0],
            gamma_values: vec![1.0],
            c: 1.0,
            c_prime: 1.0,
            trials: 4,
            seed: 3,
            density: DensityConfig::uniform(),
            budget: 1e5,
        };
        let d = run_phase_sweep(&grid).unwrap();
        assert_eq!(d.cells.len(), 1);
        assert_eq!(d.failures.len(), 1);
        assert_eq!(d.failures[0].required_draws, Some(1000.0 * 1000.0 * 4.0));
        assert_eq!(d.classification.len(), 1);
    }

    #[test]
    fn csv_round_trip_and_byte_identity() {
        let dir = tempfile::tempdir().unwrap();
        let cells = vec![result(20, 0.123_456_789_012_345_67, Some(0.25)), result(50, 1.0 / 3.0, None)];
        let diagram = PhaseDiagram {
            classification: classify(&cells),
            cells,
            failures: vec![],
        };
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        export(&diagram, &a, ExportFormat::Csv).unwrap();
        export(&diagram, &b, ExportFormat::Csv).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let text = std::fs::read_to_string(&a).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(import_csv(&a).unwrap(), diagram.cells);
        assert_eq!(classify(&import_csv(&a).unwrap()), diagram.classification);
    }

    #[test]
    fn markov_cell_runs() {
        let cfg = CellConfig {
            model: ModelSpec::Markov {
                topology: Topology::ring_with_self_loops(3).unwrap(),
            },
            ..two_state_cell(8, 1.5, 1.0, 4)
        };
        let cell = run_phase_cell(&cfg).unwrap();
        assert_eq!(cell.r_or_d, 3);
        assert_eq!(cell.model, ModelKind::Markov);
    }
}
