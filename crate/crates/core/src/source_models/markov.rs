use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed edge set of a Markov chain over `states` states.
///
/// Edges are kept sorted by `(from, to)`. Within each row the last edge is
/// the dependent one; every other edge is a free coordinate, so the free
/// dimension is `|E| - r`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTopology", into = "RawTopology")]
pub struct Topology {
    states: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct RawTopology {
    states: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<RawTopology> for Topology {
    type Error = Error;

    fn try_from(raw: RawTopology) -> Result<Self> {
        Topology::new(raw.states, raw.edges)
    }
}

impl From<Topology> for RawTopology {
    fn from(t: Topology) -> Self {
        RawTopology {
            states: t.states,
            edges: t.edges,
        }
    }
}

impl Topology {
    /// Validates the edge set: every state has an outgoing edge and the
    /// chain is irreducible and aperiodic for every positive weighting.
    pub fn new(states: usize, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        if states < 2 {
            return Err(Error::Topology(format!("need at least 2 states, got {states}")));
        }
        if states > u8::MAX as usize + 1 {
            return Err(Error::Topology(format!("at most 256 states supported, got {states}")));
        }
        edges.sort_unstable();
        edges.dedup();
        if let Some(&(i, l)) = edges.iter().find(|&&(i, l)| i >= states || l >= states) {
            return Err(Error::Topology(format!("edge ({i},{l}) out of range")));
        }
        let topo = Self { states, edges };
        for i in 0..states {
            if topo.row_edges(i).is_empty() {
                return Err(Error::Topology(format!(
                    "state {i} has no outgoing edge; its row cannot carry probability mass"
                )));
            }
        }
        if !topo.is_irreducible() {
            return Err(Error::Topology("chain is reducible".into()));
        }
        let period = topo.period();
        if period != 1 {
            return Err(Error::Topology(format!("chain is periodic with period {period}")));
        }
        Ok(topo)
    }

    /// Two-state chain where state 0 always moves to 1 and state 1 returns
    /// to 0 with the free probability `p`.
    pub fn two_state_return() -> Self {
        Self::new(2, vec![(0, 1), (1, 0), (1, 1)]).expect("valid topology")
    }

    /// Ring `i -> i+1` with a self loop at every state; free dimension `r`.
    pub fn ring_with_self_loops(states: usize) -> Result<Self> {
        let edges = (0..states)
            .flat_map(|i| [(i, i), (i, (i + 1) % states)])
            .collect();
        Self::new(states, edges)
    }

    pub fn complete(states: usize) -> Result<Self> {
        let edges = (0..states)
            .flat_map(|i| (0..states).map(move |l| (i, l)))
            .collect();
        Self::new(states, edges)
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn free_dim(&self) -> usize {
        self.edges.len() - self.states
    }

    pub fn row_edges(&self, i: usize) -> &[(usize, usize)] {
        let start = self.edges.partition_point(|&(a, _)| a < i);
        let end = self.edges.partition_point(|&(a, _)| a <= i);
        &self.edges[start..end]
    }

    /// The free coordinates, in order: all edges of each row except its last.
    pub fn free_edges(&self) -> Vec<(usize, usize)> {
        (0..self.states)
            .flat_map(|i| {
                let row = self.row_edges(i);
                row[..row.len() - 1].iter().copied()
            })
            .collect()
    }

    pub fn contains(&self, i: usize, l: usize) -> bool {
        self.edges.binary_search(&(i, l)).is_ok()
    }

    fn bfs_levels(&self, reversed: bool) -> Vec<Option<usize>> {
        let mut level = vec![None; self.states];
        level[0] = Some(0);
        let mut queue = VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            let d = level[v].unwrap();
            for &(a, b) in &self.edges {
                let (from, to) = if reversed { (b, a) } else { (a, b) };
                if from == v && level[to].is_none() {
                    level[to] = Some(d + 1);
                    queue.push_back(to);
                }
            }
        }
        level
    }

    fn is_irreducible(&self) -> bool {
        self.bfs_levels(false).iter().all(Option::is_some)
            && self.bfs_levels(true).iter().all(Option::is_some)
    }

    /// gcd of `level(a) + 1 - level(b)` over all edges, for BFS levels from
    /// state 0. Equals the period of a strongly connected graph.
    fn period(&self) -> usize {
        let level = self.bfs_levels(false);
        self.edges.iter().fold(0usize, |g, &(a, b)| {
            let diff = (level[a].unwrap() as i64 + 1 - level[b].unwrap() as i64).unsigned_abs();
            gcd(g, diff as usize)
        })
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Row-stochastic transition matrix supported exactly on a topology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovProfile {
    pub states: usize,
    pub transitions: Vec<Vec<f64>>,
}

impl MarkovProfile {
    pub fn new(topology: &Topology, transitions: Vec<Vec<f64>>) -> Result<Self> {
        let r = topology.states();
        if transitions.len() != r || transitions.iter().any(|row| row.len() != r) {
            return Err(Error::SizeMismatch(format!("transition matrix must be {r}x{r}")));
        }
        for (i, row) in transitions.iter().enumerate() {
            for (l, &p) in row.iter().enumerate() {
                let on_edge = topology.contains(i, l);
                if on_edge && !(p > 0.0 && p <= 1.0) {
                    return Err(Error::param(
                        "transitions",
                        format!("entry ({i},{l}) = {p} must be positive on an edge"),
                    ));
                }
                if !on_edge && p != 0.0 {
                    return Err(Error::param(
                        "transitions",
                        format!("entry ({i},{l}) = {p} must be zero off the edge set"),
                    ));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::param("transitions", format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self {
            states: r,
            transitions,
        })
    }

    /// Two-state return chain with `P(1 -> 0) = p`.
    pub fn two_state_return(p: f64) -> Result<Self> {
        Self::new(
            &Topology::two_state_return(),
            vec![vec![0.0, 1.0], vec![p, 1.0 - p]],
        )
    }

    pub fn free_coordinates(&self, topology: &Topology) -> Vec<f64> {
        topology
            .free_edges()
            .into_iter()
            .map(|(i, l)| self.transitions[i][l])
            .collect()
    }

    /// Solves `pi P = pi`, `sum pi = 1` by Gaussian elimination with
    /// partial pivoting and checks the residual.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        stationary_distribution(&self.transitions)
    }
}

pub fn stationary_distribution(transitions: &[Vec<f64>]) -> Result<Vec<f64>> {
    let r = transitions.len();
    // Rows 0..r-1 of (P^T - I) plus the normalization row.
    let mut a = vec![vec![0.0; r + 1]; r];
    for (i, row) in a.iter_mut().enumerate().take(r - 1) {
        for (j, cell) in row.iter_mut().enumerate().take(r) {
            *cell = transitions[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[r - 1] = vec![1.0; r + 1];

    for col in 0..r {
        let pivot = (col..r)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::Stationary("singular balance system".into()));
        }
        a.swap(col, pivot);
        for row in 0..r {
            if row != col {
                let factor = a[row][col] / a[col][col];
                if factor != 0.0 {
                    for k in col..=r {
                        a[row][k] -= factor * a[col][k];
                    }
                }
            }
        }
    }
    let pi: Vec<f64> = (0..r).map(|i| a[i][r] / a[i][i]).collect();

    let residual = (0..r)
        .map(|l| ((0..r).map(|i| pi[i] * transitions[i][l]).sum::<f64>() - pi[l]).abs())
        .fold(0.0, f64::max);
    let mass: f64 = pi.iter().sum();
    if residual > 1e-10 || (mass - 1.0).abs() > 1e-10 || pi.iter().any(|&x| x <= 0.0) {
        return Err(Error::Stationary(format!(
            "residual {residual:.2e}, mass {mass}, pi {pi:?}"
        )));
    }
    Ok(pi)
}
