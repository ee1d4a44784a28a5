use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::NoiseSchedule;
use crate::source_models::UserPopulation;

/// Users whose true and obfuscated probabilities both fall in the window
/// around the first user's profile where obfuscation hides the match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalSet {
    pub members: Vec<usize>,
    pub size: usize,
    pub epsilon_n: f64,
    pub a_n: f64,
}

/// `eps_n = n^-(1/(r-1) - beta/2)`.
pub fn critical_epsilon(n: usize, r: usize, beta: f64) -> f64 {
    (n as f64).powf(-(1.0 / (r as f64 - 1.0) - beta / 2.0))
}

/// Membership of one symbol coordinate. With `p1 < 1/r` the channel pushes
/// `Q` up from `P`; otherwise it pushes it down, and the window is mirrored
/// around `p1`.
#[inline]
pub fn in_window(p1: f64, p: f64, q: f64, r: usize, eps: f64, a_n: f64) -> bool {
    let rf = r as f64;
    let slope = (1.0 - rf * p1) / (rf - 1.0);
    let s = if p1 < 1.0 / rf { 1.0 } else { -1.0 };
    let dp = s * (p - p1);
    let dq = s * (q - p1);
    (0.0..=eps).contains(&dp) && dq >= eps && dq <= slope.abs() * a_n
}

/// `J = ∩_i J_i` over all symbols `i`, for realized obfuscated pmfs
/// `q_draws[u]`. `p1` is the full pmf of the reference user.
pub fn critical_set_for(
    profiles: &[Vec<f64>],
    q_draws: &[Vec<f64>],
    p1: &[f64],
    beta: f64,
    a_n: f64,
) -> Result<CriticalSet> {
    if profiles.len() != q_draws.len() {
        return Err(Error::SizeMismatch(format!(
            "{} profiles, {} obfuscated pmfs",
            profiles.len(),
            q_draws.len()
        )));
    }
    let r = p1.len();
    if r < 2 {
        return Err(Error::param("p1", "need at least two symbols"));
    }
    let eps = critical_epsilon(profiles.len(), r, beta);
    let members: Vec<usize> = profiles
        .iter()
        .zip(q_draws)
        .enumerate()
        .filter(|(_, (p, q))| (0..r).all(|i| in_window(p1[i], p[i], q[i], r, eps, a_n)))
        .map(|(u, _)| u)
        .collect();
    Ok(CriticalSet {
        size: members.len(),
        members,
        epsilon_n: eps,
        a_n,
    })
}

/// Critical set of an i.i.d. population around `p1` (a full pmf; for two
/// symbols `[1 - p, p]`), with `a_n` taken from the noise schedule.
pub fn critical_set(
    pop: &UserPopulation,
    q_draws: &[Vec<f64>],
    p1: &[f64],
    beta: f64,
    noise: &NoiseSchedule,
) -> Result<CriticalSet> {
    let profiles: Vec<Vec<f64>> = pop
        .iid()
        .ok_or_else(|| Error::param("pop", "critical sets need i.i.d. profiles"))?
        .iter()
        .map(|p| p.pmf.clone())
        .collect();
    if p1.len() != pop.symbols() {
        return Err(Error::SizeMismatch(format!("p1 has {} entries for {} symbols", p1.len(), pop.symbols())));
    }
    critical_set_for(&profiles, q_draws, p1, beta, noise.cap(pop.n)?.value)
}
