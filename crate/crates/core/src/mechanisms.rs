//! Privacy-protection mechanisms: per-user noise levels, the r-ary
//! symmetric obfuscation channel, additive Gaussian obfuscation, and
//! permutation anonymization.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::source_models::{IidProfile, MarkovProfile, Stage, TraceMatrix, TraceValues};

/// Noise level law `a_n = c' n^(-gamma)`, clamped into `(0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub c_prime: f64,
    pub gamma: f64,
}

/// A realized noise cap and whether `c' n^(-gamma)` had to be clamped to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseCap {
    pub value: f64,
    pub clamped: bool,
}

impl NoiseSchedule {
    pub fn new(c_prime: f64, gamma: f64) -> Result<Self> {
        if !(c_prime > 0.0 && c_prime.is_finite()) {
            return Err(Error::param("c_prime", format!("must be positive and finite, got {c_prime}")));
        }
        if !gamma.is_finite() {
            return Err(Error::param("gamma", "must be finite"));
        }
        Ok(Self { c_prime, gamma })
    }

    pub fn cap(&self, n: usize) -> Result<NoiseCap> {
        let raw = self.c_prime * (n as f64).powf(-self.gamma);
        if !(raw > 0.0) {
            return Err(Error::param(
                "a_n",
                format!("noise cap must be > 0 (c'={}, gamma={}, n={n})", self.c_prime, self.gamma),
            ));
        }
        Ok(NoiseCap {
            value: raw.min(1.0),
            clamped: raw > 1.0,
        })
    }
}

/// Observation law `m(n) = ceil(c n^eta)`, at least one sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSchedule {
    pub c: f64,
    pub eta: f64,
}

impl ObservationSchedule {
    pub fn new(c: f64, eta: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::param("c", format!("must be positive and finite, got {c}")));
        }
        if !eta.is_finite() {
            return Err(Error::param("eta", "must be finite"));
        }
        Ok(Self { c, eta })
    }

    pub fn samples(&self, n: usize) -> usize {
        let raw = self.c * (n as f64).powf(self.eta);
        // Absorb rounding noise so that exact integers are not bumped up.
        (raw * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }
}

/// Realized per-user error probabilities `R_u ~ Uniform[0, a_n]`.
///
/// Ground truth for scoring and debugging; attacks never take it as input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub levels: Vec<f64>,
    pub a_n: f64,
    pub clamped: bool,
}

pub fn draw_noise_levels(n: usize, sched: &NoiseSchedule, seed: u64) -> Result<NoiseDraw> {
    let cap = sched.cap(n)?;
    let mut draw = draw_noise_levels_with_cap(n, cap.value, seed)?;
    draw.clamped = cap.clamped;
    Ok(draw)
}

pub fn draw_noise_levels_with_cap(n: usize, a_n: f64, seed: u64) -> Result<NoiseDraw> {
    if n == 0 {
        return Err(Error::param("n", "need at least one user"));
    }
    if !(a_n > 0.0 && a_n <= 1.0) {
        return Err(Error::param("a_n", format!("must lie in (0, 1], got {a_n}")));
    }
    let levels = (0..n)
        .map(|u| rng::stream(seed, &[tag::NOISE, u as u64]).random::<f64>() * a_n)
        .collect();
    Ok(NoiseDraw {
        levels,
        a_n,
        clamped: false,
    })
}

/// Channel options. With `regenerate_every = Some(t)` each user's error
/// probability is redrawn from `Uniform[0, a_n]` at the start of every
/// block of `t` samples after the first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationOptions {
    pub regenerate_every: Option<usize>,
}

/// Passes every sample of `x` through the r-ary symmetric channel: kept
/// with probability `1 - R_u`, otherwise replaced by one of the other
/// `r - 1` symbols chosen uniformly.
pub fn obfuscate(x: &TraceMatrix, noise: &NoiseDraw, r: usize, seed: u64) -> Result<TraceMatrix> {
    obfuscate_with(x, noise, r, seed, &ObfuscationOptions::default())
}

pub fn obfuscate_with(
    x: &TraceMatrix,
    noise: &NoiseDraw,
    r: usize,
    seed: u64,
    opts: &ObfuscationOptions,
) -> Result<TraceMatrix> {
    let data = check_source(x, noise)?;
    if x.alphabet() != Some(r) {
        return Err(Error::SizeMismatch(format!(
            "channel over {r} symbols applied to traces over {:?}",
            x.alphabet()
        )));
    }
    if opts.regenerate_every == Some(0) {
        return Err(Error::param("regenerate_every", "block length must be positive"));
    }
    let m = x.m();
    let mut out = data.to_vec();
    out.par_chunks_mut(m).enumerate().for_each(|(u, col)| {
        let mut rng = rng::stream(seed, &[tag::CHANNEL, u as u64]);
        let mut level = noise.levels[u];
        for (k, s) in col.iter_mut().enumerate() {
            if let Some(t) = opts.regenerate_every {
                if k > 0 && k % t == 0 {
                    level = rng.random::<f64>() * noise.a_n;
                }
            }
            if rng.random::<f64>() < level {
                *s = if r == 2 {
                    1 - *s
                } else {
                    let alt = rng.random_range(0..r as u8 - 1);
                    if alt >= *s {
                        alt + 1
                    } else {
                        alt
                    }
                };
            }
        }
    });
    Ok(TraceMatrix::from_parts(
        m,
        x.n(),
        Stage::Z,
        TraceValues::Symbols { alphabet: r, data: out },
    ))
}

/// Adds `N(0, R_u)` noise to every sample of two-symbol traces. `R_u` is
/// the noise *variance*.
pub fn obfuscate_gaussian(x: &TraceMatrix, noise: &NoiseDraw, seed: u64) -> Result<TraceMatrix> {
    let data = check_source(x, noise)?;
    if x.alphabet() != Some(2) {
        return Err(Error::param("x", "Gaussian obfuscation needs two-symbol traces"));
    }
    let m = x.m();
    let mut out = vec![0.0; data.len()];
    out.par_chunks_mut(m).enumerate().for_each(|(u, col)| {
        let mut rng = rng::stream(seed, &[tag::CHANNEL, u as u64]);
        let sd = noise.levels[u].sqrt();
        for (z, &s) in col.iter_mut().zip(&data[u * m..(u + 1) * m]) {
            let e: f64 = rng.sample(StandardNormal);
            *z = s as f64 + sd * e;
        }
    });
    Ok(TraceMatrix::from_parts(m, x.n(), Stage::ZReal, TraceValues::Reals(out)))
}

fn check_source<'a>(x: &'a TraceMatrix, noise: &NoiseDraw) -> Result<&'a [u8]> {
    if x.stage() != Stage::X {
        return Err(Error::param("x", format!("expected stage X, got {:?}", x.stage())));
    }
    if noise.levels.len() != x.n() {
        return Err(Error::SizeMismatch(format!(
            "{} noise levels for {} users",
            noise.levels.len(),
            x.n()
        )));
    }
    match x.values() {
        TraceValues::Symbols { data, .. } => Ok(data),
        TraceValues::Reals(_) => unreachable!("stage X holds symbols"),
    }
}

#[derive(Clone, Copy, Debug)]
pub enum ProfileRef<'a> {
    Iid(&'a IidProfile),
    Markov(&'a MarkovProfile),
}

impl<'a> From<&'a IidProfile> for ProfileRef<'a> {
    fn from(p: &'a IidProfile) -> Self {
        ProfileRef::Iid(p)
    }
}

impl<'a> From<&'a MarkovProfile> for ProfileRef<'a> {
    fn from(p: &'a MarkovProfile) -> Self {
        ProfileRef::Markov(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParameters {
    /// Symbol distribution after the channel (for Markov users, the
    /// stationary distribution after the channel).
    pub q: Vec<f64>,
    /// Probability that an observed transition differs from the true one,
    /// `R(2 - R)`; Markov users only.
    pub transition_error: Option<f64>,
}

/// `Q(i) = P(i) + (1 - r P(i)) R / (r - 1)`.
pub fn obfuscated_pmf(pmf: &[f64], r_u: f64) -> Vec<f64> {
    let r = pmf.len() as f64;
    pmf.iter().map(|&p| p + (1.0 - r * p) * r_u / (r - 1.0)).collect()
}

pub fn effective_parameters<'a>(profile: impl Into<ProfileRef<'a>>, r_u: f64) -> Result<EffectiveParameters> {
    if !(0.0..=1.0).contains(&r_u) {
        return Err(Error::param("r_u", format!("must lie in [0, 1], got {r_u}")));
    }
    Ok(match profile.into() {
        ProfileRef::Iid(p) => EffectiveParameters {
            q: obfuscated_pmf(&p.pmf, r_u),
            transition_error: None,
        },
        ProfileRef::Markov(p) => EffectiveParameters {
            q: obfuscated_pmf(&p.stationary_distribution()?, r_u),
            transition_error: Some(r_u * (2.0 - r_u)),
        },
    })
}

/// A bijection on `0..n`; user `u` receives pseudonym `forward[u]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(forward: Vec<usize>) -> Result<Self> {
        Permutation::from_forward(forward)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.forward
    }
}

impl Permutation {
    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut inverse = vec![usize::MAX; n];
        for (u, &j) in forward.iter().enumerate() {
            if j >= n || inverse[j] != usize::MAX {
                return Err(Error::param("permutation", format!("{forward:?} is not a bijection")));
            }
            inverse[j] = u;
        }
        Ok(Self { forward, inverse })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            forward: (0..n).collect(),
            inverse: (0..n).collect(),
        }
    }

    /// Uniformly random permutation.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut forward: Vec<usize> = (0..n).collect();
        forward.shuffle(&mut rng::stream(seed, &[tag::PERMUTATION]));
        Self::from_forward(forward).expect("shuffle is a bijection")
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Pseudonym of user `u`.
    pub fn pseudonym(&self, u: usize) -> usize {
        self.forward[u]
    }

    /// User behind pseudonym `j`.
    pub fn user(&self, j: usize) -> usize {
        self.inverse[j]
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> Self {
        Self {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }
}

/// `Y_{perm(u)} = Z_u`: column `j` of the output is column `perm^-1(j)`.
pub fn anonymize(z: &TraceMatrix, perm: &Permutation) -> Result<TraceMatrix> {
    let stage = match z.stage() {
        Stage::Z => Stage::Y,
        Stage::ZReal => Stage::YReal,
        other => return Err(Error::param("z", format!("expected an obfuscated stage, got {other:?}"))),
    };
    permute_columns(z, perm, stage)
}

/// Undoes [`anonymize`] given the permutation.
pub fn deanonymize(y: &TraceMatrix, perm: &Permutation) -> Result<TraceMatrix> {
    let stage = match y.stage() {
        Stage::Y => Stage::Z,
        Stage::YReal => Stage::ZReal,
        other => return Err(Error::param("y", format!("expected an anonymized stage, got {other:?}"))),
    };
    permute_columns(y, &perm.inverse(), stage)
}

fn permute_columns(src: &TraceMatrix, perm: &Permutation, stage: Stage) -> Result<TraceMatrix> {
    if perm.len() != src.n() {
        return Err(Error::SizeMismatch(format!(
            "permutation over {} users applied to {} columns",
            perm.len(),
            src.n()
        )));
    }
    let m = src.m();
    let values = match src.values() {
        TraceValues::Symbols { alphabet, data } => TraceValues::Symbols {
            alphabet: *alphabet,
            data: (0..src.n())
                .flat_map(|j| data[perm.user(j) * m..(perm.user(j) + 1) * m].iter().copied())
                .collect(),
        },
        TraceValues::Reals(data) => TraceValues::Reals(
            (0..src.n())
                .flat_map(|j| data[perm.user(j) * m..(perm.user(j) + 1) * m].iter().copied())
                .collect(),
        ),
    };
    Ok(TraceMatrix::from_parts(m, src.n(), stage, values))
}
