//! Brute-force reference solvers, used only by tests to cross-check the
//! search engine. They share the problem statements with the engine but none
//! of its machinery: plain Dijkstra, exhaustive minimax, exhaustive tour
//! enumeration, and exhaustive schedule enumeration for small step systems.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use cost_calculus::encodings::{GameTreeProblem, GraphProblem, TspProblem};
use cost_calculus::Name;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub witness: Vec<Name>,
}

#[derive(Debug, PartialEq)]
pub enum OracleError {
    Unreachable,
    TooLarge,
}

impl std::fmt::Display for OracleError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleError::Unreachable => write!(f, "goal unreachable"),
            OracleError::TooLarge => write!(f, "instance too large for brute force"),
        }
    }
}

impl std::error::Error for OracleError {}

#[derive(PartialEq)]
struct HeapEntry(f64, Name);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

/// Exact shortest-path cost from the start to the nearest goal.
pub fn dijkstra(g: &GraphProblem) -> Result<OracleResult, OracleError> {
    let mut adj: BTreeMap<&Name, Vec<(&Name, f64)>> = BTreeMap::new();
    for (u, v, w) in &g.edges {
        adj.entry(u).or_default().push((v, *w));
    }
    let mut dist: BTreeMap<Name, f64> = BTreeMap::new();
    let mut prev: BTreeMap<Name, Name> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(g.start.clone(), 0.0);
    heap.push(HeapEntry(0.0, g.start.clone()));
    while let Some(HeapEntry(d, u)) = heap.pop() {
        if d > dist.get(&u).copied().unwrap_or(f64::INFINITY) {
            continue;
        }
        if g.goals.contains(&u) {
            let mut witness = vec![u.clone()];
            let mut cur = u.clone();
            while let Some(p) = prev.get(&cur) {
                witness.push(p.clone());
                cur = p.clone();
            }
            witness.reverse();
            return Ok(OracleResult { value: d, witness });
        }
        if let Some(edges) = adj.get(&u) {
            for (v, w) in edges {
                let nd = d + w;
                if nd < dist.get(*v).copied().unwrap_or(f64::INFINITY) {
                    dist.insert((*v).clone(), nd);
                    prev.insert((*v).clone(), u.clone());
                    heap.push(HeapEntry(nd, (*v).clone()));
                }
            }
        }
    }
    Err(OracleError::Unreachable)
}

/// Exact distances from every vertex to the nearest goal (Dijkstra on the
/// reversed graph). Handy for building admissible heuristics in tests.
pub fn distances_to_goal(g: &GraphProblem) -> BTreeMap<Name, f64> {
    let mut radj: BTreeMap<&Name, Vec<(&Name, f64)>> = BTreeMap::new();
    for (u, v, w) in &g.edges {
        radj.entry(v).or_default().push((u, *w));
    }
    let mut dist: BTreeMap<Name, f64> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    for goal in &g.goals {
        dist.insert(goal.clone(), 0.0);
        heap.push(HeapEntry(0.0, goal.clone()));
    }
    while let Some(HeapEntry(d, u)) = heap.pop() {
        if d > dist.get(&u).copied().unwrap_or(f64::INFINITY) {
            continue;
        }
        if let Some(edges) = radj.get(&u) {
            for (v, w) in edges {
                let nd = d + w;
                if nd < dist.get(*v).copied().unwrap_or(f64::INFINITY) {
                    dist.insert((*v).clone(), nd);
                    heap.push(HeapEntry(nd, (*v).clone()));
                }
            }
        }
    }
    dist
}

/// Exact alternating min/max backup of a complete game tree; the root
/// minimizes.
pub fn brute_minimax(t: &GameTreeProblem) -> OracleResult {
    fn value(t: &GameTreeProblem, level: u32, offset: usize, span: usize) -> f64 {
        if level == t.depth {
            return t.leaves[offset];
        }
        let child_span = span / t.branching;
        let child_values =
            (0..t.branching).map(|i| value(t, level + 1, offset + i * child_span, child_span));
        if level % 2 == 0 {
            child_values.fold(f64::INFINITY, f64::min)
        } else {
            child_values.fold(f64::NEG_INFINITY, f64::max)
        }
    }
    let span = t.leaves.len();
    OracleResult {
        value: value(t, 0, 0, span),
        witness: Vec::new(),
    }
}

/// Exact optimum over all (m-1)! closed tours from city 0.
pub fn brute_tsp(p: &TspProblem) -> Result<OracleResult, OracleError> {
    let m = p.size();
    if m > 10 {
        return Err(OracleError::TooLarge);
    }
    let mut rest: Vec<usize> = (1..m).collect();
    let mut best = f64::INFINITY;
    let mut best_tour: Vec<usize> = Vec::new();
    permute(&mut rest, 0, &mut |perm| {
        let mut cost = 0.0;
        let mut cur = 0usize;
        for &city in perm.iter() {
            cost += p.distances[cur][city];
            cur = city;
        }
        cost += p.distances[cur][0];
        if cost < best {
            best = cost;
            best_tour = perm.to_vec();
        }
    });
    Ok(OracleResult {
        value: best,
        witness: best_tour
            .iter()
            .map(|c| Name::new(format!("{c}")))
            .collect(),
    })
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// One agent's script in a toy step system: a chain of named actions.
pub type Chain = Vec<String>;

/// A schedule: per elementary step, the set of (agent, action-name) pairs
/// that fired together.
pub type Schedule = Vec<BTreeSet<(usize, String)>>;

/// Exhaustively enumerate every complete schedule of independent agent
/// chains, where each elementary step advances any nonempty subset of the
/// unfinished agents by one action. This is combinatorial bookkeeping only —
/// none of the engine is involved.
pub fn enumerate_chain_schedules(chains: &[Chain]) -> BTreeSet<Schedule> {
    let mut out = BTreeSet::new();
    let positions = vec![0usize; chains.len()];
    let mut prefix: Schedule = Vec::new();
    recurse(chains, positions, &mut prefix, &mut out);
    out
}

fn recurse(
    chains: &[Chain],
    positions: Vec<usize>,
    prefix: &mut Schedule,
    out: &mut BTreeSet<Schedule>,
) {
    let active: Vec<usize> = (0..chains.len())
        .filter(|i| positions[*i] < chains[*i].len())
        .collect();
    if active.is_empty() {
        out.insert(prefix.clone());
        return;
    }
    // all nonempty subsets of the active agents
    let count = 1usize << active.len();
    for subset in 1..count {
        let mut step = BTreeSet::new();
        let mut next = positions.clone();
        for (bit, agent) in active.iter().enumerate() {
            if subset & (1 << bit) != 0 {
                step.insert((*agent, chains[*agent][positions[*agent]].clone()));
                next[*agent] += 1;
            }
        }
        prefix.push(step);
        recurse(chains, next, prefix, out);
        prefix.pop();
    }
}
