use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::{GraphSchedule, WeightedDigraph, STOCHASTIC_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DoublyStochastic,
    MinWeight,
    Connectivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Round of the offending graph, or the first round of the offending window.
    pub t: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub doubly_stochastic: bool,
    pub min_weight: bool,
    pub q_connected: bool,
    pub declared_a: f64,
    pub declared_q: usize,
    /// Number of window start times probed.
    pub window: usize,
    /// First violation of each failing check, in check order.
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.doubly_stochastic && self.min_weight && self.q_connected
    }

    pub fn first_violation(&self) -> Option<&Violation> {
        self.violations.first()
    }

    pub fn failed(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
        writeln!(f, "doubly stochastic     : {}", mark(self.doubly_stochastic))?;
        writeln!(
            f,
            "minimum weight a={:<8.4}: {}",
            self.declared_a,
            mark(self.min_weight)
        )?;
        writeln!(
            f,
            "{}-strong connectivity : {} ({} windows probed)",
            self.declared_q,
            mark(self.q_connected),
            self.window
        )?;
        for v in &self.violations {
            writeln!(f, "  violation {:?} at t={}: {}", v.kind, v.t, v.detail)?;
        }
        Ok(())
    }
}

fn stochasticity_violation(g: &WeightedDigraph) -> Option<String> {
    let n = g.agents();
    for i in 0..n {
        for j in 0..n {
            let w = g.weight(i, j);
            if w > 1.0 {
                return Some(format!("entry a[{i}][{j}] = {w} exceeds 1"));
            }
        }
    }
    for i in 0..n {
        let s: f64 = g.row(i).iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Some(format!("row {i} sums to {s}"));
        }
    }
    for j in 0..n {
        let s: f64 = (0..n).map(|i| g.weight(i, j)).sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Some(format!("column {j} sums to {s}"));
        }
    }
    None
}

fn min_weight_violation(g: &WeightedDigraph, a: f64) -> Option<String> {
    let n = g.agents();
    let floor = a - STOCHASTIC_TOL;
    for i in 0..n {
        if g.weight(i, i) < floor {
            return Some(format!("self weight a[{i}][{i}] = {} below a = {a}", g.weight(i, i)));
        }
        for j in 0..n {
            let w = g.weight(i, j);
            if w > 0.0 && w < floor {
                return Some(format!("positive weight a[{i}][{j}] = {w} below a = {a}"));
            }
        }
    }
    None
}

fn union_is_strongly_connected(graphs: &[std::borrow::Cow<'_, WeightedDigraph>], n: usize) -> bool {
    if n <= 1 {
        return true;
    }
    let mut union = DiGraph::<(), ()>::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| union.add_node(())).collect();
    let mut seen = vec![false; n * n];
    for g in graphs {
        for (from, to) in g.edges() {
            if !seen[from * n + to] {
                seen[from * n + to] = true;
                union.add_edge(nodes[from], nodes[to], ());
            }
        }
    }
    tarjan_scc(&union).len() == 1
}

/// Checks the schedule's graphs for rounds `0 .. window + Q − 1` and the
/// union graphs of the `window` windows starting at `0 .. window`.
pub fn validate_schedule(schedule: &dyn GraphSchedule, window: usize) -> ValidationReport {
    let window = window.max(1);
    let a = schedule.declared_a();
    let q = schedule.declared_q().max(1);
    let n = schedule.agents();
    let graphs: Vec<_> = (0..window + q - 1).map(|t| schedule.graph_at(t)).collect();

    let mut violations = Vec::new();
    let stochastic = graphs
        .iter()
        .enumerate()
        .find_map(|(t, g)| stochasticity_violation(g).map(|d| (t, d)));
    if let Some((t, detail)) = &stochastic {
        violations.push(Violation {
            kind: ViolationKind::DoublyStochastic,
            t: *t,
            detail: detail.clone(),
        });
    }

    let weight = if a > 0.0 && a < 1.0 {
        graphs
            .iter()
            .enumerate()
            .find_map(|(t, g)| min_weight_violation(g, a).map(|d| (t, d)))
    } else {
        Some((0, format!("declared a = {a} is not in (0, 1)")))
    };
    if let Some((t, detail)) = &weight {
        violations.push(Violation {
            kind: ViolationKind::MinWeight,
            t: *t,
            detail: detail.clone(),
        });
    }

    let disconnected = (0..window).find(|&k| !union_is_strongly_connected(&graphs[k..k + q], n));
    if let Some(k) = disconnected {
        violations.push(Violation {
            kind: ViolationKind::Connectivity,
            t: k,
            detail: format!("union of graphs {k}..{} is not strongly connected", k + q - 1),
        });
    }

    ValidationReport {
        doubly_stochastic: stochastic.is_none(),
        min_weight: weight.is_none(),
        q_connected: disconnected.is_none(),
        declared_a: a,
        declared_q: q,
        window,
        violations,
    }
}
