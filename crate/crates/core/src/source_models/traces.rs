use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cdf, draw_from_cdf, Profiles, UserPopulation};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Pipeline stage of a trace matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// True user data.
    X,
    /// Obfuscated by the symmetric channel.
    Z,
    /// Obfuscated and anonymized.
    Y,
    /// Obfuscated with additive Gaussian noise.
    ZReal,
    /// Gaussian-obfuscated and anonymized.
    YReal,
}

impl Stage {
    pub fn is_real(self) -> bool {
        matches!(self, Stage::ZReal | Stage::YReal)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceValues {
    Symbols { alphabet: usize, data: Vec<u8> },
    Reals(Vec<f64>),
}

/// `m x n` trace matrix stored column-major: column `u` holds the `m`
/// samples of user (or pseudonym) `u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMatrix {
    m: usize,
    n: usize,
    stage: Stage,
    values: TraceValues,
}

impl TraceMatrix {
    pub fn from_symbol_columns(stage: Stage, alphabet: usize, columns: Vec<Vec<u8>>) -> Result<Self> {
        if stage.is_real() {
            return Err(Error::param("stage", format!("{stage:?} holds real values")));
        }
        if !(2..=256).contains(&alphabet) {
            return Err(Error::param("alphabet", format!("need 2..=256 symbols, got {alphabet}")));
        }
        let (m, n) = shape(&columns)?;
        let data: Vec<u8> = columns.into_iter().flatten().collect();
        if let Some(&s) = data.iter().find(|&&s| s as usize >= alphabet) {
            return Err(Error::param("traces", format!("symbol {s} outside alphabet of {alphabet}")));
        }
        Ok(Self {
            m,
            n,
            stage,
            values: TraceValues::Symbols { alphabet, data },
        })
    }

    pub fn from_real_columns(stage: Stage, columns: Vec<Vec<f64>>) -> Result<Self> {
        if !stage.is_real() {
            return Err(Error::param("stage", format!("{stage:?} holds symbols")));
        }
        let (m, n) = shape(&columns)?;
        Ok(Self {
            m,
            n,
            stage,
            values: TraceValues::Reals(columns.into_iter().flatten().collect()),
        })
    }

    pub(crate) fn from_parts(m: usize, n: usize, stage: Stage, values: TraceValues) -> Self {
        debug_assert_eq!(
            match &values {
                TraceValues::Symbols { data, .. } => data.len(),
                TraceValues::Reals(v) => v.len(),
            },
            m * n
        );
        Self { m, n, stage, values }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn values(&self) -> &TraceValues {
        &self.values
    }

    pub fn alphabet(&self) -> Option<usize> {
        match self.values {
            TraceValues::Symbols { alphabet, .. } => Some(alphabet),
            TraceValues::Reals(_) => None,
        }
    }

    /// Samples of column `u`.
    ///
    /// # Panics
    /// If the matrix holds real values.
    pub fn symbol_column(&self, u: usize) -> &[u8] {
        match &self.values {
            TraceValues::Symbols { data, .. } => &data[u * self.m..(u + 1) * self.m],
            TraceValues::Reals(_) => panic!("symbol_column on a real-valued {:?} matrix", self.stage),
        }
    }

    /// # Panics
    /// If the matrix holds symbols.
    pub fn real_column(&self, u: usize) -> &[f64] {
        match &self.values {
            TraceValues::Reals(data) => &data[u * self.m..(u + 1) * self.m],
            TraceValues::Symbols { .. } => panic!("real_column on a symbol {:?} matrix", self.stage),
        }
    }

    pub fn symbol_columns(&self) -> impl Iterator<Item = &[u8]> {
        (0..self.n).map(|u| self.symbol_column(u))
    }

    /// Writes one row per column: the user index, then its `m` values.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = Vec::with_capacity(self.m + 1);
        header.push("user".to_string());
        header.extend((1..=self.m).map(|k| k.to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for u in 0..self.n {
            let mut row = Vec::with_capacity(self.m + 1);
            row.push(u.to_string());
            match &self.values {
                TraceValues::Symbols { .. } => {
                    row.extend(self.symbol_column(u).iter().map(|s| s.to_string()))
                }
                TraceValues::Reals(_) => row.extend(self.real_column(u).iter().map(|x| x.to_string())),
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads a matrix written by [`TraceMatrix::write_csv`]. `alphabet` is
    /// required for symbol stages.
    pub fn read_csv(path: &Path, stage: Stage, alphabet: Option<usize>) -> Result<Self> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let format_err = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
        let m = rdr.headers().map_err(csv_err)?.len().saturating_sub(1);
        let mut sym_cols = Vec::new();
        let mut real_cols = Vec::new();
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let user: usize = record[0]
                .parse()
                .map_err(|_| format_err(format!("row {row_idx}: bad user index {:?}", &record[0])))?;
            if user != row_idx {
                return Err(format_err(format!("row {row_idx} holds user {user}; rows must be in order")));
            }
            if stage.is_real() {
                let col = record
                    .iter()
                    .skip(1)
                    .map(|v| v.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| format_err(format!("row {row_idx}: {e}")))?;
                real_cols.push(col);
            } else {
                let col = record
                    .iter()
                    .skip(1)
                    .map(|v| v.parse::<u8>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| format_err(format!("row {row_idx}: {e}")))?;
                sym_cols.push(col);
            }
        }
        let matrix = if stage.is_real() {
            Self::from_real_columns(stage, real_cols)
        } else {
            let alphabet = alphabet.ok_or_else(|| Error::param("alphabet", "required for symbol traces"))?;
            Self::from_symbol_columns(stage, alphabet, sym_cols)
        };
        let matrix = matrix.map_err(|e| format_err(e.to_string()))?;
        if matrix.m != m {
            return Err(format_err(format!("header announces {m} samples, rows hold {}", matrix.m)));
        }
        Ok(matrix)
    }
}

fn shape<T>(columns: &[Vec<T>]) -> Result<(usize, usize)> {
    let n = columns.len();
    let m = columns.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(Error::param("traces", "need at least one column and one sample"));
    }
    if columns.iter().any(|c| c.len() != m) {
        return Err(Error::SizeMismatch("columns have different lengths".into()));
    }
    Ok((m, n))
}

/// Initial state of Markov traces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkovStart {
    #[default]
    Stationary,
    Fixed(u8),
}

/// Ground-truth traces `X` with stationary Markov starts.
pub fn generate_traces(pop: &UserPopulation, m: usize, seed: u64) -> Result<TraceMatrix> {
    generate_traces_with(pop, m, seed, MarkovStart::Stationary)
}

pub fn generate_traces_with(pop: &UserPopulation, m: usize, seed: u64, start: MarkovStart) -> Result<TraceMatrix> {
    if m == 0 {
        return Err(Error::param("m", "need at least one sample per user"));
    }
    let r = pop.symbols();
    let mut data = vec![0u8; m * pop.n];
    match &pop.profiles {
        Profiles::Iid { profiles, .. } => {
            data.par_chunks_mut(m).enumerate().for_each(|(u, col)| {
                let mut rng = rng::stream(seed, &[tag::TRACES, u as u64]);
                let pmf = &profiles[u].pmf;
                if r == 2 {
                    let p = pmf[1];
                    for x in col.iter_mut() {
                        *x = (rng.random::<f64>() < p) as u8;
                    }
                } else {
                    let cdf = cdf(pmf);
                    for x in col.iter_mut() {
                        *x = draw_from_cdf(&mut rng, &cdf);
                    }
                }
            });
        }
        Profiles::Markov { profiles, .. } => {
            if let MarkovStart::Fixed(s) = start {
                if s as usize >= r {
                    return Err(Error::param("start", format!("state {s} out of range")));
                }
            }
            let initial: Vec<Vec<f64>> = match start {
                MarkovStart::Stationary => profiles
                    .iter()
                    .map(|p| p.stationary_distribution().map(|pi| cdf(&pi)))
                    .collect::<Result<_>>()?,
                MarkovStart::Fixed(_) => Vec::new(),
            };
            data.par_chunks_mut(m).enumerate().for_each(|(u, col)| {
                let mut rng = rng::stream(seed, &[tag::TRACES, u as u64]);
                let rows: Vec<Vec<f64>> = profiles[u].transitions.iter().map(|row| cdf(row)).collect();
                let mut state = match start {
                    MarkovStart::Stationary => draw_from_cdf(&mut rng, &initial[u]),
                    MarkovStart::Fixed(s) => s,
                };
                col[0] = state;
                for x in col.iter_mut().skip(1) {
                    state = draw_from_cdf(&mut rng, &rows[state as usize]);
                    *x = state;
                }
            });
        }
    }
    Ok(TraceMatrix::from_parts(
        m,
        pop.n,
        Stage::X,
        TraceValues::Symbols { alphabet: r, data },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source_models::{sample_markov_profiles, DensityConfig, MarkovProfile, Topology};

    #[test]
    fn degenerate_pmf_gives_constant_column() {
        let pop = UserPopulation::from_bernoulli(&[1.0]).unwrap();
        let x = generate_traces(&pop, 10, 1).unwrap();
        assert_eq!(x.symbol_column(0), &[1u8; 10]);
        assert_eq!(x.stage(), Stage::X);
    }

    #[test]
    fn bernoulli_column_mean() {
        let pop = UserPopulation::from_bernoulli(&[0.3]).unwrap();
        let x = generate_traces(&pop, 100_000, 4).unwrap();
        let mean = x.symbol_column(0).iter().map(|&s| s as f64).sum::<f64>() / 1e5;
        // sd = sqrt(0.21 / 1e5) ~ 0.00145
        assert!((mean - 0.3).abs() < 0.005, "{mean}");
    }

    #[test]
    fn return_chain_occupancy() {
        let pop = UserPopulation::from_markov(
            Topology::two_state_return(),
            vec![MarkovProfile::two_state_return(0.5).unwrap()],
        )
        .unwrap();
        let x = generate_traces(&pop, 1_000_000, 8).unwrap();
        let zeros = x.symbol_column(0).iter().filter(|&&s| s == 0).count() as f64 / 1e6;
        assert!((zeros - 1.0 / 3.0).abs() < 0.002, "{zeros}");
    }

    #[test]
    fn fixed_start_and_transition_support() {
        let t = Topology::ring_with_self_loops(3).unwrap();
        let pop = sample_markov_profiles(3, &t, &DensityConfig::uniform(), 5).unwrap();
        let x = generate_traces_with(&pop, 500, 2, MarkovStart::Fixed(2)).unwrap();
        for col in x.symbol_columns() {
            assert_eq!(col[0], 2);
            assert!(col.windows(2).all(|w| t.contains(w[0] as usize, w[1] as usize)));
        }
        assert!(generate_traces_with(&pop, 5, 2, MarkovStart::Fixed(3)).is_err());
    }

    #[test]
    fn rejects_empty_traces() {
        let pop = UserPopulation::from_bernoulli(&[0.5]).unwrap();
        assert!(generate_traces(&pop, 0, 1).is_err());
        assert!(TraceMatrix::from_symbol_columns(Stage::X, 2, vec![vec![0, 2]]).is_err());
        assert!(TraceMatrix::from_symbol_columns(Stage::ZReal, 2, vec![vec![0]]).is_err());
        assert!(TraceMatrix::from_real_columns(Stage::ZReal, vec![vec![0.1], vec![]]).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let pop = UserPopulation::from_bernoulli(&[0.2, 0.7, 0.5]).unwrap();
        let x = generate_traces(&pop, 17, 9).unwrap();
        let path = dir.path().join("x.csv");
        x.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("user,1,2,3,"));
        assert_eq!(text.lines().count(), 4);
        assert_eq!(TraceMatrix::read_csv(&path, Stage::X, Some(2)).unwrap(), x);

        let z = TraceMatrix::from_real_columns(Stage::ZReal, vec![vec![0.1, -1.0 / 3.0], vec![2.5, 1e-300]]).unwrap();
        let path = dir.path().join("z.csv");
        z.write_csv(&path).unwrap();
        assert_eq!(TraceMatrix::read_csv(&path, Stage::ZReal, None).unwrap(), z);
    }
}
