use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{metropolis_weights, WeightedDigraph};
use crate::error::{Error, Result};

/// A sequence of communication graphs `A_0, A_1, …` with the constants it
/// claims to satisfy: minimum weight `a` and connectivity window `Q`.
pub trait GraphSchedule: Send + Sync {
    fn name(&self) -> &str;

    fn agents(&self) -> usize;

    /// `A_t`. Deterministic in `t`.
    fn graph_at(&self, t: usize) -> Cow<'_, WeightedDigraph>;

    fn declared_a(&self) -> f64;

    fn declared_q(&self) -> usize;

    /// Period of the sequence, if it repeats.
    fn period(&self) -> Option<usize>;

    /// Seed of a generated schedule.
    fn seed(&self) -> Option<u64> {
        None
    }

    fn audit(&self) -> ScheduleAudit {
        let matrices = self
            .period()
            .map(|p| (0..p).map(|t| self.graph_at(t).row_major().to_vec()).collect());
        ScheduleAudit {
            name: self.name().to_string(),
            agents: self.agents(),
            declared_a: self.declared_a(),
            declared_q: self.declared_q(),
            period: self.period(),
            seed: self.seed(),
            matrices,
        }
    }
}

/// Schedule description written into run manifests. Periodic schedules carry
/// their matrices row-major; generated ones are re-derived from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleAudit {
    pub name: String,
    pub agents: usize,
    pub declared_a: f64,
    pub declared_q: usize,
    pub period: Option<usize>,
    pub seed: Option<u64>,
    pub matrices: Option<Vec<Vec<f64>>>,
}

fn default_a(graphs: &[WeightedDigraph]) -> f64 {
    graphs
        .iter()
        .map(WeightedDigraph::min_positive_entry)
        .fold(0.5, f64::min)
}

fn check_declared(a: f64, q: usize) -> Result<()> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidArgument(format!("declared a = {a} is not in (0, 1)")));
    }
    if q == 0 {
        return Err(Error::InvalidArgument("declared Q must be at least 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct StaticSchedule {
    graph: WeightedDigraph,
    a: f64,
    q: usize,
}

impl StaticSchedule {
    /// `a` defaults to `min(0.5, smallest positive entry)`, `Q` to 1.
    pub fn new(graph: WeightedDigraph, a: Option<f64>, q: Option<usize>) -> Result<Self> {
        let a = a.unwrap_or_else(|| default_a(std::slice::from_ref(&graph)));
        let q = q.unwrap_or(1);
        check_declared(a, q)?;
        Ok(Self { graph, a, q })
    }
}

impl GraphSchedule for StaticSchedule {
    fn name(&self) -> &str {
        "static"
    }
    fn agents(&self) -> usize {
        self.graph.agents()
    }
    fn graph_at(&self, _t: usize) -> Cow<'_, WeightedDigraph> {
        Cow::Borrowed(&self.graph)
    }
    fn declared_a(&self) -> f64 {
        self.a
    }
    fn declared_q(&self) -> usize {
        self.q
    }
    fn period(&self) -> Option<usize> {
        Some(1)
    }
}

/// `A_t = graphs[t mod period]`.
#[derive(Debug, Clone)]
pub struct CyclicSchedule {
    graphs: Vec<WeightedDigraph>,
    a: f64,
    q: usize,
    name: &'static str,
}

impl CyclicSchedule {
    /// `Q` defaults to the period.
    pub fn new(graphs: Vec<WeightedDigraph>, a: Option<f64>, q: Option<usize>) -> Result<Self> {
        let first = graphs
            .first()
            .ok_or_else(|| Error::InvalidArgument("cyclic schedule with no graphs".into()))?;
        let n = first.agents();
        if graphs.iter().any(|g| g.agents() != n) {
            return Err(Error::InvalidArgument("graphs of a cycle differ in size".into()));
        }
        let a = a.unwrap_or_else(|| default_a(&graphs));
        let q = q.unwrap_or(graphs.len());
        check_declared(a, q)?;
        Ok(Self {
            graphs,
            a,
            q,
            name: "cyclic",
        })
    }

    pub fn graphs(&self) -> &[WeightedDigraph] {
        &self.graphs
    }
}

impl GraphSchedule for CyclicSchedule {
    fn name(&self) -> &str {
        self.name
    }
    fn agents(&self) -> usize {
        self.graphs[0].agents()
    }
    fn graph_at(&self, t: usize) -> Cow<'_, WeightedDigraph> {
        Cow::Borrowed(&self.graphs[t % self.graphs.len()])
    }
    fn declared_a(&self) -> f64 {
        self.a
    }
    fn declared_q(&self) -> usize {
        self.q
    }
    fn period(&self) -> Option<usize> {
        Some(self.graphs.len())
    }
}

/// Edges of a random spanning tree on `n` nodes.
fn random_tree(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    (1..n)
        .map(|k| (order[rng.random_range(0..k)], order[k]))
        .collect()
}

/// A ring (or single edge for two nodes) plus `n/2` random chords.
fn connected_base(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = match n {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
    };
    let has = |edges: &[(usize, usize)], a: usize, b: usize| {
        edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
    };
    if n >= 4 {
        let mut added = 0;
        let mut attempts = 0;
        while added < n / 2 && attempts < 50 * n {
            attempts += 1;
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b && !has(&edges, a, b) {
                edges.push((a, b));
                added += 1;
            }
        }
    }
    edges
}

/// Splits a connected base graph's edges into `Q` groups and activates group
/// `t mod Q` at round `t` with Metropolis weights. The union of any `Q`
/// consecutive graphs is the base graph, so the schedule is `Q`-strongly
/// connected by construction.
pub fn make_q_cyclic_schedule(n: usize, q: usize, seed: u64) -> Result<CyclicSchedule> {
    if n == 0 || q == 0 {
        return Err(Error::InvalidArgument(format!(
            "q-cyclic schedule needs N ≥ 1 and Q ≥ 1, got N={n}, Q={q}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = connected_base(n, &mut rng);
    edges.shuffle(&mut rng);
    let mut groups = vec![Vec::new(); q];
    for (k, e) in edges.into_iter().enumerate() {
        groups[k % q].push(e);
    }
    let graphs = groups
        .iter()
        .map(|g| metropolis_weights(g, n, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let mut schedule = CyclicSchedule::new(graphs, None, Some(q))?;
    schedule.name = "q_cyclic";
    Ok(schedule)
}

/// A fresh connected random graph every round, re-derived from `(seed, t)`:
/// a random spanning tree plus each remaining pair with probability
/// `edge_prob`, Metropolis-weighted. Every Metropolis entry is at least
/// `1/N`, which is the declared `a` (capped at 0.5); `Q = 1`.
#[derive(Debug, Clone)]
pub struct GeneratedSchedule {
    n: usize,
    seed: u64,
    edge_prob: f64,
}

impl GeneratedSchedule {
    pub fn new(n: usize, seed: u64, edge_prob: f64) -> Result<Self> {
        if n == 0 || !(0.0..=1.0).contains(&edge_prob) {
            return Err(Error::InvalidArgument(format!(
                "generated schedule needs N ≥ 1 and edge_prob in [0, 1], got N={n}, p={edge_prob}"
            )));
        }
        Ok(Self { n, seed, edge_prob })
    }
}

impl GraphSchedule for GeneratedSchedule {
    fn name(&self) -> &str {
        "generated"
    }
    fn agents(&self) -> usize {
        self.n
    }
    fn graph_at(&self, t: usize) -> Cow<'_, WeightedDigraph> {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(t as u64).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        let mut edges = random_tree(self.n, &mut rng);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if rng.random_bool(self.edge_prob) {
                    edges.push((i, j));
                }
            }
        }
        Cow::Owned(metropolis_weights(&edges, self.n, 0.0).expect("metropolis on valid edges"))
    }
    fn declared_a(&self) -> f64 {
        (1.0 / self.n as f64).min(0.5)
    }
    fn declared_q(&self) -> usize {
        1
    }
    fn period(&self) -> Option<usize> {
        None
    }
    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}
