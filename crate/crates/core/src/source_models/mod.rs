//! User profiles and ground-truth traces.
//!
//! A population is `n` independent profiles drawn from a bounded density:
//! either i.i.d. symbol distributions over `r` symbols or transition
//! matrices on a fixed Markov topology. Traces are the `m x n` matrix `X` of
//! true samples, one column per user.

mod density;
mod markov;
mod traces;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use density::{DensityConfig, DensityKind, INTERIOR_MARGIN};
pub use markov::{stationary_distribution, MarkovProfile, Topology};
pub use traces::{generate_traces, generate_traces_with, MarkovStart, Stage, TraceMatrix, TraceValues};

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use density::{sample_simplex, simplex_volume};

/// Symbol distribution of an i.i.d. user. For two symbols `pmf[1]` is `p_u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidProfile {
    pub pmf: Vec<f64>,
}

impl IidProfile {
    /// Accepts any probability vector with at least two entries. Sampled
    /// profiles are additionally strictly interior; hand-built ones may sit
    /// on the boundary.
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        if pmf.len() < 2 {
            return Err(Error::param("pmf", "need at least 2 symbols"));
        }
        if pmf.len() > u8::MAX as usize + 1 {
            return Err(Error::param("pmf", "at most 256 symbols supported"));
        }
        if pmf.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::param("pmf", format!("entries must lie in [0,1]: {pmf:?}")));
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::param("pmf", format!("sums to {sum}")));
        }
        Ok(Self { pmf })
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::new(vec![1.0 - p, p])
    }

    pub fn symbols(&self) -> usize {
        self.pmf.len()
    }

    /// Probability of symbol 1 (the two-state parameter).
    pub fn p(&self) -> f64 {
        self.pmf[1]
    }

    /// The `r - 1` coordinates `(p(1), ..., p(r-1))` used for matching.
    pub fn coordinates(&self) -> &[f64] {
        &self.pmf[1..]
    }

    pub fn is_interior(&self) -> bool {
        self.pmf.iter().all(|&x| x > 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profiles {
    Iid {
        symbols: usize,
        profiles: Vec<IidProfile>,
    },
    Markov {
        topology: Topology,
        profiles: Vec<MarkovProfile>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserPopulation {
    pub n: usize,
    pub profiles: Profiles,
    pub density: DensityConfig,
    /// Seed the profiles were sampled with; `None` for hand-built populations.
    pub seed: Option<u64>,
}

impl UserPopulation {
    pub fn from_iid(profiles: Vec<IidProfile>) -> Result<Self> {
        let symbols = profiles
            .first()
            .ok_or_else(|| Error::param("profiles", "population is empty"))?
            .symbols();
        if profiles.iter().any(|p| p.symbols() != symbols) {
            return Err(Error::param("profiles", "mixed symbol counts"));
        }
        Ok(Self {
            n: profiles.len(),
            profiles: Profiles::Iid { symbols, profiles },
            density: DensityConfig::uniform(),
            seed: None,
        })
    }

    pub fn from_bernoulli(ps: &[f64]) -> Result<Self> {
        Self::from_iid(ps.iter().map(|&p| IidProfile::bernoulli(p)).collect::<Result<_>>()?)
    }

    pub fn from_markov(topology: Topology, profiles: Vec<MarkovProfile>) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::param("profiles", "population is empty"));
        }
        for p in &profiles {
            MarkovProfile::new(&topology, p.transitions.clone())?;
        }
        Ok(Self {
            n: profiles.len(),
            profiles: Profiles::Markov { topology, profiles },
            density: DensityConfig::uniform(),
            seed: None,
        })
    }

    /// Re-checks a population that was deserialized rather than built.
    pub fn validate(&self) -> Result<()> {
        let len = match &self.profiles {
            Profiles::Iid { symbols, profiles } => {
                for p in profiles {
                    IidProfile::new(p.pmf.clone())?;
                    if p.symbols() != *symbols {
                        return Err(Error::param("profiles", "mixed symbol counts"));
                    }
                }
                profiles.len()
            }
            Profiles::Markov { topology, profiles } => {
                for p in profiles {
                    MarkovProfile::new(topology, p.transitions.clone())?;
                }
                profiles.len()
            }
        };
        if len == 0 || len != self.n {
            return Err(Error::param("n", format!("n = {} but {len} profiles", self.n)));
        }
        Ok(())
    }

    /// Number of symbols / states.
    pub fn symbols(&self) -> usize {
        match &self.profiles {
            Profiles::Iid { symbols, .. } => *symbols,
            Profiles::Markov { topology, .. } => topology.states(),
        }
    }

    pub fn iid(&self) -> Option<&[IidProfile]> {
        match &self.profiles {
            Profiles::Iid { profiles, .. } => Some(profiles),
            Profiles::Markov { .. } => None,
        }
    }

    pub fn markov(&self) -> Option<(&Topology, &[MarkovProfile])> {
        match &self.profiles {
            Profiles::Markov { topology, profiles } => Some((topology, profiles)),
            Profiles::Iid { .. } => None,
        }
    }

    /// Two-state parameters `p_u`, if this is a two-symbol i.i.d. population.
    pub fn bernoulli_params(&self) -> Option<Vec<f64>> {
        match self.iid() {
            Some(profiles) if self.symbols() == 2 => Some(profiles.iter().map(IidProfile::p).collect()),
            _ => None,
        }
    }

    /// Matching coordinates of user `u`: `r - 1` symbol probabilities for
    /// i.i.d. users, the `|E| - r` free transition probabilities for Markov.
    pub fn coordinates(&self, u: usize) -> Vec<f64> {
        match &self.profiles {
            Profiles::Iid { profiles, .. } => profiles[u].coordinates().to_vec(),
            Profiles::Markov { topology, profiles } => profiles[u].free_coordinates(topology),
        }
    }
}

/// Draws `n` i.i.d. profiles over `r` symbols.
pub fn sample_iid_profiles(n: usize, r: usize, density: &DensityConfig, seed: u64) -> Result<UserPopulation> {
    if n == 0 {
        return Err(Error::param("n", "need at least one user"));
    }
    if !(2..=256).contains(&r) {
        return Err(Error::param("r", format!("need 2 <= r <= 256, got {r}")));
    }
    density.validate(simplex_volume(r))?;
    if matches!(density.kind, DensityKind::TruncatedCustom { .. }) && r != 2 {
        return Err(Error::param("density", "custom densities need r = 2"));
    }
    let profiles = (0..n)
        .map(|u| {
            let mut rng = rng::stream(seed, &[tag::PROFILES, u as u64]);
            let pmf = if r == 2 {
                let p = density.sample_unit(&mut rng);
                vec![1.0 - p, p]
            } else {
                sample_simplex(&mut rng, r)
            };
            IidProfile { pmf }
        })
        .collect();
    Ok(UserPopulation {
        n,
        profiles: Profiles::Iid { symbols: r, profiles },
        density: density.clone(),
        seed: Some(seed),
    })
}

/// Draws `n` transition matrices on `topology`, each row uniform on the
/// simplex over that row's edges.
pub fn sample_markov_profiles(
    n: usize,
    topology: &Topology,
    density: &DensityConfig,
    seed: u64,
) -> Result<UserPopulation> {
    if n == 0 {
        return Err(Error::param("n", "need at least one user"));
    }
    if topology.free_dim() == 0 {
        return Err(Error::Topology(
            "no free transition probabilities (|E| = r); users are indistinguishable".into(),
        ));
    }
    let r = topology.states();
    let volume: f64 = (0..r).map(|i| simplex_volume(topology.row_edges(i).len())).product();
    density.validate(volume)?;
    if matches!(density.kind, DensityKind::TruncatedCustom { .. }) {
        return Err(Error::param("density", "custom densities are only supported for two-state i.i.d. users"));
    }
    let profiles = (0..n)
        .map(|u| {
            let mut rng = rng::stream(seed, &[tag::PROFILES, u as u64]);
            let mut transitions = vec![vec![0.0; r]; r];
            for (i, row) in transitions.iter_mut().enumerate() {
                let edges = topology.row_edges(i);
                for (&(_, l), w) in edges.iter().zip(sample_simplex(&mut rng, edges.len())) {
                    row[l] = w;
                }
            }
            MarkovProfile { states: r, transitions }
        })
        .collect();
    Ok(UserPopulation {
        n,
        profiles: Profiles::Markov {
            topology: topology.clone(),
            profiles,
        },
        density: density.clone(),
        seed: Some(seed),
    })
}

/// Draws a symbol from a cumulative distribution.
#[inline]
pub(crate) fn draw_from_cdf<R: Rng + ?Sized>(rng: &mut R, cdf: &[f64]) -> u8 {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1) as u8
}

pub(crate) fn cdf(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    pmf.iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_user_is_interior() {
        let pop = sample_iid_profiles(1, 2, &DensityConfig::uniform(), 7).unwrap();
        let p = pop.bernoulli_params().unwrap()[0];
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn mean_of_uniform_profiles() {
        let pop = sample_iid_profiles(1000, 2, &DensityConfig::uniform(), 11).unwrap();
        let ps = pop.bernoulli_params().unwrap();
        let mean = ps.iter().sum::<f64>() / ps.len() as f64;
        // sd of the mean = sqrt(1/12 / 1000) ~ 0.0091
        assert!((mean - 0.5).abs() < 0.03, "{mean}");
    }

    #[test]
    fn three_symbol_profiles_inside_range() {
        let pop = sample_iid_profiles(500, 3, &DensityConfig::uniform(), 5).unwrap();
        for p in pop.iid().unwrap() {
            assert!(p.pmf[1] + p.pmf[2] < 1.0);
            assert!(p.is_interior());
            assert!((p.pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let d = DensityConfig::uniform();
        assert!(sample_iid_profiles(3, 1, &d, 0).is_err());
        assert!(sample_iid_profiles(0, 2, &d, 0).is_err());
        let heavy = DensityConfig {
            delta_lo: 1.5,
            delta_hi: 2.0,
            kind: DensityKind::UniformOnSupport,
        };
        assert!(sample_iid_profiles(3, 2, &heavy, 0).is_err());
        // volume of the 3-simplex is 1/2, so delta_lo = 1.5 is normalizable there
        assert!(sample_iid_profiles(3, 3, &heavy, 0).is_ok());
    }

    #[test]
    fn return_chain_shape() {
        let t = Topology::two_state_return();
        let pop = sample_markov_profiles(1, &t, &DensityConfig::uniform(), 3).unwrap();
        let (_, profiles) = pop.markov().unwrap();
        let m = &profiles[0].transitions;
        assert_eq!(m[0], vec![0.0, 1.0]);
        let p = m[1][0];
        assert!(p > 0.0 && p < 1.0);
        assert!((m[1][1] - (1.0 - p)).abs() < 1e-15);
    }

    #[test]
    fn markov_sampling_is_deterministic() {
        let t = Topology::complete(3).unwrap();
        let a = sample_markov_profiles(4, &t, &DensityConfig::uniform(), 99).unwrap();
        let b = sample_markov_profiles(4, &t, &DensityConfig::uniform(), 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn complete_topology_profiles_are_ergodic() {
        let t = Topology::complete(3).unwrap();
        let pop = sample_markov_profiles(200, &t, &DensityConfig::uniform(), 1).unwrap();
        for p in pop.markov().unwrap().1 {
            assert!(MarkovProfile::new(&t, p.transitions.clone()).is_ok());
            let pi = p.stationary_distribution().unwrap();
            assert!(pi.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn population_json_roundtrip_is_exact() {
        let pop = sample_iid_profiles(5, 3, &DensityConfig::uniform(), 2).unwrap();
        let back: UserPopulation = serde_json::from_str(&serde_json::to_string(&pop).unwrap()).unwrap();
        assert_eq!(pop, back);
    }
}
