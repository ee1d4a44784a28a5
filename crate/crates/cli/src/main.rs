use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anonpriv::adversary::{gaussian_moment_attack, hmm_moment_attack, match_iid, match_markov, AttackConfig};
use anonpriv::experiments::{
    export, run_phase_cell, run_phase_sweep, write_json, CellConfig, ExportFormat, ModelSpec, RunMetadata, SweepGrid,
};
use anonpriv::mechanisms::{
    anonymize, draw_noise_levels, obfuscate, obfuscate_gaussian, NoiseSchedule, ObservationSchedule, Permutation,
};
use anonpriv::privacy_metrics::{dp_epsilon, mi_from_runs, posterior_runs, MIEstimate, MiMethod, SmallRunConfig};
use anonpriv::rng::{derive_seed, tag};
use anonpriv::source_models::{
    generate_traces, sample_iid_profiles, sample_markov_profiles, DensityConfig, Stage, TraceMatrix, UserPopulation,
};
use anonpriv::theory_oracles::run_verification_suites;
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "anonpriv", version, about = "Matching attacks on anonymized, obfuscated traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (directory for `generate`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configuration seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads (0 = one per core)
    #[arg(long, global = true, env = "ANONPRIV_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Sample a population, its traces and a release
    Generate,
    /// Run one attack on stored traces
    Attack,
    /// Monte Carlo sweep over the (eta, gamma) plane
    Sweep,
    /// Mutual information: exact small-population or plug-in bound
    Mi,
    /// Run the theory oracle suites
    Verify,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Format {
    Csv,
    Record,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Budget(String),
    Verification(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Verification(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Budget(m) | CliError::Verification(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<anonpriv::Error> for CliError {
    fn from(e: anonpriv::Error) -> Self {
        use anonpriv::Error as E;
        match e {
            E::Budget { .. } => CliError::Budget(e.to_string()),
            E::InvalidParameter { .. } | E::Topology(_) | E::SizeMismatch(_) | E::EnumerationCap { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn load_config<T: DeserializeOwned>(path: Option<&Path>) -> CliResult<T> {
    let path = path.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        CliError::Config(format!("{}: at `{key}`: {}", path.display(), e.into_inner()))
    })
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base.and_then(Path::parent) {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

fn write_output<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    match out {
        Some(path) => write_json(value, path).map_err(CliError::from),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

#[derive(Deserialize, Debug, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
enum Channel {
    #[default]
    Symmetric,
    Gaussian,
}

fn default_true() -> bool {
    true
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct GenerateConfig {
    model: ModelSpec,
    n: usize,
    observations: ObservationSchedule,
    noise: NoiseSchedule,
    #[serde(default)]
    density: DensityConfig,
    #[serde(default)]
    channel: Channel,
    #[serde(default = "default_true")]
    permute: bool,
    seed: u64,
}

#[derive(Serialize)]
struct GroundTruth {
    seed: u64,
    m: usize,
    a_n: f64,
    clamped: bool,
    noise_levels: Vec<f64>,
    /// `permutation[u]` is the pseudonym of user `u`.
    permutation: Permutation,
}

fn generate(cli: &Cli) -> CliResult<String> {
    let mut cfg: GenerateConfig = load_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli
        .out
        .as_deref()
        .ok_or_else(|| CliError::Config("--out <directory> is required for generate".into()))?;
    let seed = |stage| derive_seed(cfg.seed, &[stage]);
    let pop = match &cfg.model {
        ModelSpec::Markov { topology } => sample_markov_profiles(cfg.n, topology, &cfg.density, seed(tag::PROFILES))?,
        model => sample_iid_profiles(cfg.n, model.symbols(), &cfg.density, seed(tag::PROFILES))?,
    };
    if cfg.channel == Channel::Gaussian && cfg.model != ModelSpec::Iid2 {
        return Err(CliError::Config("channel: gaussian obfuscation needs model iid-2".into()));
    }
    let m = cfg.observations.samples(cfg.n);
    let x = generate_traces(&pop, m, seed(tag::TRACES))?;
    let noise = draw_noise_levels(cfg.n, &cfg.noise, seed(tag::NOISE))?;
    let z = match cfg.channel {
        Channel::Symmetric => obfuscate(&x, &noise, cfg.model.symbols(), seed(tag::CHANNEL))?,
        Channel::Gaussian => obfuscate_gaussian(&x, &noise, seed(tag::CHANNEL))?,
    };
    let perm = if cfg.permute {
        Permutation::random(cfg.n, seed(tag::PERMUTATION))
    } else {
        Permutation::identity(cfg.n)
    };
    let y = anonymize(&z, &perm)?;
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    write_json(&pop, &out.join("population.json"))?;
    x.write_csv(&out.join("x.csv"))?;
    z.write_csv(&out.join("z.csv"))?;
    y.write_csv(&out.join("y.csv"))?;
    write_json(
        &GroundTruth {
            seed: cfg.seed,
            m,
            a_n: noise.a_n,
            clamped: noise.clamped,
            noise_levels: noise.levels,
            permutation: perm,
        },
        &out.join("truth.json"),
    )?;
    Ok(format!("generated n = {}, m = {m} into {} (seed {})", cfg.n, out.display(), cfg.seed))
}

#[derive(Deserialize, Debug)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum AttackMethod {
    Match {
        alpha: f64,
        a_n: f64,
        #[serde(default)]
        target: usize,
    },
    HmmMoments {
        pseudonym: usize,
    },
    GaussianMoments {
        pseudonym: usize,
    },
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct AttackFileConfig {
    /// Population JSON; required for matching.
    population: Option<PathBuf>,
    /// Released traces (stage Y, or Y-real for the Gaussian attack).
    traces: PathBuf,
    #[serde(default)]
    symbols: Option<usize>,
    method: AttackMethod,
    /// Scores the match when given.
    #[serde(default)]
    true_pseudonym: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum AttackOutput {
    Match {
        seed: Option<u64>,
        report: anonpriv::adversary::MatchReport,
    },
    HmmMoments {
        seed: Option<u64>,
        estimate: anonpriv::adversary::HmmEstimate,
    },
    GaussianMoments {
        seed: Option<u64>,
        estimate: anonpriv::adversary::GaussianEstimate,
    },
}

fn column(y: &TraceMatrix, j: usize) -> CliResult<()> {
    if j >= y.n() {
        return Err(CliError::Config(format!("method.pseudonym: {j} out of range 0..{}", y.n())));
    }
    Ok(())
}

fn attack(cli: &Cli) -> CliResult<String> {
    let cfg: AttackFileConfig = load_config(cli.config.as_deref())?;
    let seed = cli.seed.or(cfg.seed);
    let base = cli.config.as_deref();
    let traces = resolve(base, &cfg.traces);
    let population = match &cfg.population {
        Some(p) => {
            let path = resolve(base, p);
            let text = fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let pop: UserPopulation = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            pop.validate()?;
            Some(pop)
        }
        None => None,
    };
    let (output, summary) = match cfg.method {
        AttackMethod::Match { alpha, a_n, target } => {
            let pop = population.ok_or_else(|| CliError::Config("population: required for matching".into()))?;
            let y = TraceMatrix::read_csv(&traces, Stage::Y, Some(pop.symbols()))?;
            let attack = AttackConfig::new(&pop, alpha, a_n)?.with_target(target)?;
            let mut report = if pop.markov().is_some() {
                match_markov(&y, &attack)?
            } else {
                match_iid(&y, &attack)?
            };
            if let Some(truth) = cfg.true_pseudonym {
                report.score(truth);
            }
            let summary = format!(
                "user {target} -> pseudonym {} ({} in band{})",
                report.decoded_pseudonym(),
                report.candidates_in_band,
                match report.success_flag {
                    Some(true) => ", correct",
                    Some(false) => ", wrong",
                    None => "",
                }
            );
            (AttackOutput::Match { seed, report }, summary)
        }
        AttackMethod::HmmMoments { pseudonym } => {
            let y = TraceMatrix::read_csv(&traces, Stage::Y, Some(cfg.symbols.unwrap_or(2)))?;
            column(&y, pseudonym)?;
            let estimate = hmm_moment_attack(y.symbol_column(pseudonym))?;
            let summary = format!("p = {:.6}, R = {:.6}", estimate.p, estimate.r);
            (AttackOutput::HmmMoments { seed, estimate }, summary)
        }
        AttackMethod::GaussianMoments { pseudonym } => {
            let y = TraceMatrix::read_csv(&traces, Stage::YReal, None)?;
            column(&y, pseudonym)?;
            let estimate = gaussian_moment_attack(y.real_column(pseudonym))?;
            let summary = format!("p = {:.6}, R = {:.6}", estimate.p, estimate.r);
            (AttackOutput::GaussianMoments { seed, estimate }, summary)
        }
    };
    write_output(cli.out.as_deref(), &output)?;
    Ok(summary)
}

fn sweep(cli: &Cli) -> CliResult<String> {
    let mut grid: SweepGrid = load_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        grid.seed = s;
    }
    grid.validate()?;
    let out = cli
        .out
        .as_deref()
        .ok_or_else(|| CliError::Config("--out is required for sweep".into()))?;
    let start = Instant::now();
    let diagram = run_phase_sweep(&grid)?;
    let format = match cli.format {
        Format::Csv => ExportFormat::Csv,
        Format::Record => ExportFormat::Record,
    };
    export(&diagram, out, format)?;
    RunMetadata::new(grid.seed, grid.budget, start.elapsed().as_secs_f64()).write_beside(out)?;
    if !cli.quiet {
        for l in &diagram.classification {
            eprintln!("eta = {}, gamma = {}: {:?}", l.eta, l.gamma, l.label);
        }
    }
    if let Some(worst) = diagram
        .failures
        .iter()
        .filter_map(|f| f.required_draws)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
    {
        return Err(CliError::Budget(format!(
            "{} cell(s) exceeded the sample budget {:.3e}; largest needs {worst:.3e} draws",
            diagram.failures.iter().filter(|f| f.required_draws.is_some()).count(),
            grid.budget
        )));
    }
    if let Some(f) = diagram.failures.first() {
        return Err(CliError::Runtime(format!("cell n = {}, eta = {}, gamma = {}: {}", f.n, f.eta, f.gamma, f.message)));
    }
    Ok(format!("{} cells written to {} (seed {})", diagram.cells.len(), out.display(), grid.seed))
}

#[derive(Deserialize, Debug)]
#[serde(tag = "method", rename_all = "kebab-case")]
enum MiConfig {
    ExactSmall(SmallRunConfig),
    PluginLowerBound(CellConfig),
}

#[derive(Serialize)]
struct MiOutput {
    seed: u64,
    estimate: MIEstimate,
    /// Median of the per-run differential-privacy ratio (exact method only).
    median_dp_epsilon: Option<f64>,
}

fn mi(cli: &Cli) -> CliResult<String> {
    let cfg: MiConfig = load_config(cli.config.as_deref())?;
    let output = match cfg {
        MiConfig::ExactSmall(mut c) => {
            if let Some(s) = cli.seed {
                c.seed = s;
            }
            let runs = posterior_runs(&c)?;
            let mut eps = runs
                .iter()
                .map(|r| dp_epsilon(r.table.data_posterior, r.p1).map(|e| e.epsilon))
                .collect::<anonpriv::Result<Vec<f64>>>()?;
            eps.sort_by(f64::total_cmp);
            MiOutput {
                seed: c.seed,
                estimate: mi_from_runs(&runs),
                median_dp_epsilon: Some(eps[eps.len() / 2]),
            }
        }
        MiConfig::PluginLowerBound(mut c) => {
            if let Some(s) = cli.seed {
                c.seed = s;
            }
            let cell = run_phase_cell(&c)?;
            let value_bits = cell.mi_lb.ok_or_else(|| {
                CliError::Config(format!("trials: the plug-in bound needs at least 100 trials, got {}", c.trials))
            })?;
            MiOutput {
                seed: c.seed,
                estimate: MIEstimate {
                    value_bits,
                    std_error: cell.mi_se.unwrap_or(0.0),
                    method: MiMethod::PluginLowerBound,
                    trials: cell.trials,
                    degenerate: false,
                },
                median_dp_epsilon: None,
            }
        }
    };
    write_output(cli.out.as_deref(), &output)?;
    Ok(format!(
        "I = {:.4} ± {:.4} bits ({} trials, seed {})",
        output.estimate.value_bits, output.estimate.std_error, output.estimate.trials, output.seed
    ))
}

#[derive(Serialize)]
struct VerifyOutput {
    seed: u64,
    suites: Vec<anonpriv::theory_oracles::SuiteReport>,
}

fn verify(cli: &Cli) -> CliResult<String> {
    let seed = cli.seed.unwrap_or(0);
    let suites = run_verification_suites(seed)?;
    for s in &suites {
        println!("{} {}: {}", if s.passed { "PASS" } else { "FAIL" }, s.name, s.detail);
    }
    let failed = suites.iter().filter(|s| !s.passed).count();
    if let Some(out) = cli.out.as_deref() {
        write_json(&VerifyOutput { seed, suites }, out)?;
    }
    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} suite(s) failed (seed {seed})")));
    }
    Ok(format!("all suites passed (seed {seed})"))
}

fn run(cli: &Cli) -> CliResult<String> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Generate => generate(cli),
        Command::Attack => attack(cli),
        Command::Sweep => sweep(cli),
        Command::Mi => mi(cli),
        Command::Verify => verify(cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            if !cli.quiet {
                eprintln!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
