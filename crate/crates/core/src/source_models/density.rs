use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Margin used to keep sampled coordinates strictly inside the support.
pub const INTERIOR_MARGIN: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityKind {
    /// Uniform on the open support: (0,1) for one free coordinate, the open
    /// simplex otherwise.
    UniformOnSupport,
    /// Piecewise-constant density on (0,1) with equal-width bins. Only valid
    /// where the profile has a single free coordinate (two-state i.i.d.).
    TruncatedCustom { bin_densities: Vec<f64> },
}

/// Bounded density of the profile parameters, `delta_lo <= f <= delta_hi`
/// on the support and zero outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub delta_lo: f64,
    pub delta_hi: f64,
    #[serde(flatten)]
    pub kind: DensityKind,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self::uniform()
    }
}

impl DensityConfig {
    pub fn uniform() -> Self {
        Self {
            delta_lo: 1.0,
            delta_hi: 1.0,
            kind: DensityKind::UniformOnSupport,
        }
    }

    pub fn custom(delta_lo: f64, delta_hi: f64, bin_densities: Vec<f64>) -> Self {
        Self {
            delta_lo,
            delta_hi,
            kind: DensityKind::TruncatedCustom { bin_densities },
        }
    }

    /// Checks the bounds against a support of the given Lebesgue volume.
    pub(crate) fn validate(&self, support_volume: f64) -> Result<()> {
        if !(self.delta_lo > 0.0 && self.delta_lo <= self.delta_hi) {
            return Err(Error::param(
                "density",
                format!(
                    "need 0 < delta_lo <= delta_hi, got ({}, {})",
                    self.delta_lo, self.delta_hi
                ),
            ));
        }
        if self.delta_lo * support_volume > 1.0 {
            return Err(Error::param(
                "density",
                format!(
                    "non-normalizable: delta_lo * volume = {} > 1",
                    self.delta_lo * support_volume
                ),
            ));
        }
        if let DensityKind::TruncatedCustom { bin_densities } = &self.kind {
            if bin_densities.is_empty() {
                return Err(Error::param("density", "custom density has no bins"));
            }
            if let Some(bad) = bin_densities
                .iter()
                .find(|&&f| !(f >= self.delta_lo && f <= self.delta_hi))
            {
                return Err(Error::param(
                    "density",
                    format!("bin density {bad} outside [delta_lo, delta_hi]"),
                ));
            }
            let mass = bin_densities.iter().sum::<f64>() / bin_densities.len() as f64;
            if (mass - 1.0).abs() > 1e-9 {
                return Err(Error::param(
                    "density",
                    format!("custom density integrates to {mass}, not 1"),
                ));
            }
        }
        Ok(())
    }

    /// Draws one point of (0,1) from a one-coordinate density.
    pub(crate) fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = match &self.kind {
                DensityKind::UniformOnSupport => rng.random::<f64>(),
                DensityKind::TruncatedCustom { bin_densities } => {
                    let k = bin_densities.len();
                    let target = rng.random::<f64>() * k as f64;
                    let mut acc = 0.0;
                    let mut bin = k - 1;
                    for (i, f) in bin_densities.iter().enumerate() {
                        acc += f;
                        if target < acc {
                            bin = i;
                            break;
                        }
                    }
                    (bin as f64 + rng.random::<f64>()) / k as f64
                }
            };
            if x > INTERIOR_MARGIN && x < 1.0 - INTERIOR_MARGIN {
                return x;
            }
        }
    }
}

/// Uniform draw from the open probability simplex with `k` entries, by
/// normalized exponential spacings. Rejects points within the interior
/// margin of the boundary.
pub(crate) fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    loop {
        let e: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|x| x / total).collect();
        if p.iter().all(|&x| x > INTERIOR_MARGIN) {
            return p;
        }
    }
}

/// Volume of the open simplex `{x in (0,1)^(k-1) : sum x < 1}`.
pub(crate) fn simplex_volume(k: usize) -> f64 {
    (1..k).fold(1.0, |acc, i| acc / i as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn rejects_bad_bounds() {
        let mut d = DensityConfig::uniform();
        d.delta_lo = 2.0;
        assert!(d.validate(1.0).is_err(), "lo > hi");
        d.delta_hi = 3.0;
        assert!(d.validate(1.0).is_err(), "lo * vol > 1");
        assert!(d.validate(0.5).is_ok());
    }

    #[test]
    fn custom_density_mass_and_bounds() {
        assert!(DensityConfig::custom(0.5, 1.5, vec![0.5, 1.5]).validate(1.0).is_ok());
        assert!(DensityConfig::custom(0.5, 1.5, vec![0.5, 1.0]).validate(1.0).is_err());
        assert!(DensityConfig::custom(0.6, 1.5, vec![0.5, 1.5]).validate(1.0).is_err());
    }

    #[test]
    fn custom_density_shifts_mass() {
        let d = DensityConfig::custom(0.5, 1.5, vec![0.5, 1.5]);
        let mut rng = rng::stream(3, &[]);
        let upper = (0..20_000)
            .filter(|_| d.sample_unit(&mut rng) > 0.5)
            .count() as f64
            / 20_000.0;
        // P(x > 1/2) = 0.75; sigma ~ 0.003
        assert!((upper - 0.75).abs() < 0.015, "{upper}");
    }

    #[test]
    fn simplex_volume_values() {
        assert_eq!(simplex_volume(2), 1.0);
        assert_eq!(simplex_volume(3), 0.5);
        assert!((simplex_volume(4) - 1.0 / 6.0).abs() < 1e-15);
    }
}
