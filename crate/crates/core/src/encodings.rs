//! Classic search algorithms expressed as settings of the one search engine:
//! best-first shortest path (A* when a heuristic is supplied), game-tree
//! minimax via nested cost/adversary choices, greedy hill climbing, and
//! traveling-salesman tours. Also the text formats and seeded generators for
//! the demo problems.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ast::{DefTable, Definition, Expr, Name};
use crate::cost::{Aggregator, CostTable};
use crate::komega::{EpsEstimator, Extent, Overrides};
use crate::lts::Config;

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("bad problem input: {0}")]
    Bad(String),
}

// ---------------------------------------------------------------------------
// Problem statements

/// Weighted directed graph with a start vertex and goal set.
#[derive(Clone, Debug)]
pub struct GraphProblem {
    pub vertices: BTreeSet<Name>,
    pub edges: Vec<(Name, Name, f64)>,
    pub start: Name,
    pub goals: BTreeSet<Name>,
    /// Optional heuristic: estimated remaining cost per vertex; zero at goals.
    pub heuristic: Option<BTreeMap<Name, f64>>,
}

impl GraphProblem {
    pub fn validate(&self) -> Result<(), ProblemError> {
        for (u, v, w) in &self.edges {
            if *w < 0.0 || !w.is_finite() {
                return Err(ProblemError::Bad(format!(
                    "edge {u}->{v} has weight {w}; weights must be finite and nonnegative"
                )));
            }
        }
        if !self.vertices.contains(&self.start) {
            return Err(ProblemError::Bad("start vertex unknown".into()));
        }
        if self.goals.is_empty() {
            return Err(ProblemError::Bad("no goal vertices".into()));
        }
        if let Some(h) = &self.heuristic {
            for g in &self.goals {
                if h.get(g).copied().unwrap_or(0.0) != 0.0 {
                    return Err(ProblemError::Bad(format!(
                        "heuristic must be zero at goal `{g}`"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Edge-list text: `u v w` lines plus `start u` and `goal v` lines and
    /// optional `h v value` lines. `#` comments.
    pub fn parse(text: &str) -> Result<GraphProblem, ProblemError> {
        let mut vertices = BTreeSet::new();
        let mut edges = Vec::new();
        let mut start = None;
        let mut goals = BTreeSet::new();
        let mut heuristic: BTreeMap<Name, f64> = BTreeMap::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["start", v] => {
                    start = Some(Name::new(*v));
                    vertices.insert(Name::new(*v));
                }
                ["goal", v] => {
                    goals.insert(Name::new(*v));
                    vertices.insert(Name::new(*v));
                }
                ["h", v, value] => {
                    let value: f64 = value
                        .parse()
                        .map_err(|_| ProblemError::Bad(format!("bad h value on `{line}`")))?;
                    heuristic.insert(Name::new(*v), value);
                }
                [u, v, w] => {
                    let w: f64 = w
                        .parse()
                        .map_err(|_| ProblemError::Bad(format!("bad weight on `{line}`")))?;
                    vertices.insert(Name::new(*u));
                    vertices.insert(Name::new(*v));
                    edges.push((Name::new(*u), Name::new(*v), w));
                }
                _ => return Err(ProblemError::Bad(format!("unrecognized line `{line}`"))),
            }
        }
        let problem = GraphProblem {
            vertices,
            edges,
            start: start.ok_or_else(|| ProblemError::Bad("missing start line".into()))?,
            goals,
            heuristic: if heuristic.is_empty() {
                None
            } else {
                Some(heuristic)
            },
        };
        problem.validate()?;
        Ok(problem)
    }
}

/// Complete game tree with alternating minimizing/maximizing levels; the
/// root level minimizes.
#[derive(Clone, Debug)]
pub struct GameTreeProblem {
    pub depth: u32,
    pub branching: usize,
    /// Leaf values in left-to-right order; length = branching^depth.
    pub leaves: Vec<f64>,
}

impl GameTreeProblem {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let expected = (self.branching as u64).pow(self.depth) as usize;
        if self.leaves.len() != expected {
            return Err(ProblemError::Bad(format!(
                "complete tree of depth {} and branching {} needs {} leaves, got {}",
                self.depth,
                self.branching,
                expected,
                self.leaves.len()
            )));
        }
        if self.branching == 0 {
            return Err(ProblemError::Bad("branching must be positive".into()));
        }
        Ok(())
    }

    /// Nested parenthesized leaf values, e.g. `((1 4) (2 3))`.
    pub fn parse(text: &str) -> Result<GameTreeProblem, ProblemError> {
        #[derive(Debug)]
        enum Nested {
            Leaf(f64),
            List(Vec<Nested>),
        }
        fn read(tokens: &[String], pos: &mut usize) -> Result<Nested, ProblemError> {
            if *pos >= tokens.len() {
                return Err(ProblemError::Bad("unexpected end of tree".into()));
            }
            let tok = tokens[*pos].clone();
            *pos += 1;
            match tok.as_str() {
                "(" => {
                    let mut items = Vec::new();
                    while *pos < tokens.len() && tokens[*pos] != ")" {
                        items.push(read(tokens, pos)?);
                    }
                    if *pos >= tokens.len() {
                        return Err(ProblemError::Bad("unbalanced `(`".into()));
                    }
                    *pos += 1;
                    Ok(Nested::List(items))
                }
                ")" => Err(ProblemError::Bad("unbalanced `)`".into())),
                n => n
                    .parse::<f64>()
                    .map(Nested::Leaf)
                    .map_err(|_| ProblemError::Bad(format!("bad leaf value `{n}`"))),
            }
        }
        let mut tokens = Vec::new();
        let mut cur = String::new();
        for c in text.chars() {
            match c {
                '(' | ')' => {
                    if !cur.is_empty() {
                        tokens.push(std::mem::take(&mut cur));
                    }
                    tokens.push(c.to_string());
                }
                c if c.is_whitespace() => {
                    if !cur.is_empty() {
                        tokens.push(std::mem::take(&mut cur));
                    }
                }
                c => cur.push(c),
            }
        }
        if !cur.is_empty() {
            tokens.push(cur);
        }
        let mut pos = 0;
        let nested = read(&tokens, &mut pos)?;

        fn shape(n: &Nested) -> Result<(u32, usize), ProblemError> {
            match n {
                Nested::Leaf(_) => Ok((0, 0)),
                Nested::List(items) => {
                    if items.is_empty() {
                        return Err(ProblemError::Bad("empty level".into()));
                    }
                    let (d, _) = shape(&items[0])?;
                    for it in items {
                        let (di, _) = shape(it)?;
                        if di != d {
                            return Err(ProblemError::Bad("tree is not complete".into()));
                        }
                    }
                    Ok((d + 1, items.len()))
                }
            }
        }
        fn collect(n: &Nested, out: &mut Vec<f64>) {
            match n {
                Nested::Leaf(v) => out.push(*v),
                Nested::List(items) => items.iter().for_each(|i| collect(i, out)),
            }
        }
        let (depth, branching) = shape(&nested)?;
        let mut leaves = Vec::new();
        collect(&nested, &mut leaves);
        let problem = GameTreeProblem {
            depth,
            branching: branching.max(1),
            leaves,
        };
        problem.validate()?;
        Ok(problem)
    }
}

/// Symmetric travelling-salesman instance.
#[derive(Clone, Debug)]
pub struct TspProblem {
    pub distances: Vec<Vec<f64>>,
}

impl TspProblem {
    pub fn size(&self) -> usize {
        self.distances.len()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let m = self.size();
        if m < 3 {
            return Err(ProblemError::Bad("a tour needs at least 3 cities".into()));
        }
        for (i, row) in self.distances.iter().enumerate() {
            if row.len() != m {
                return Err(ProblemError::Bad("distance matrix is not square".into()));
            }
            if row[i] != 0.0 {
                return Err(ProblemError::Bad("diagonal must be zero".into()));
            }
            for (j, d) in row.iter().enumerate() {
                if (*d - self.distances[j][i]).abs() > 1e-9 {
                    return Err(ProblemError::Bad("matrix must be symmetric".into()));
                }
            }
        }
        Ok(())
    }

    /// Whitespace matrix, one row per line.
    pub fn parse(text: &str) -> Result<TspProblem, ProblemError> {
        let mut distances = Vec::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> = line.split_whitespace().map(|t| t.parse()).collect();
            distances
                .push(row.map_err(|_| ProblemError::Bad(format!("bad matrix row `{line}`")))?);
        }
        let p = TspProblem { distances };
        p.validate()?;
        Ok(p)
    }
}

// ---------------------------------------------------------------------------
// Encoders

/// A problem lowered to the calculus: program, definitions, atomic costs,
/// and the loop settings that make the engine behave like the algorithm.
pub struct Encoded {
    pub program: Expr,
    pub defs: DefTable,
    pub costs: CostTable,
    pub overrides: Overrides,
}

fn edge_label(u: &Name, v: &Name) -> Name {
    Name::new(format!("e_{}_{}", u, v))
}

fn graph_defs(g: &GraphProblem) -> (DefTable, CostTable) {
    let mut defs = DefTable::new();
    let mut costs = CostTable::new();
    let mut outgoing: BTreeMap<Name, Vec<(Name, f64)>> = BTreeMap::new();
    for (u, v, w) in &g.edges {
        outgoing.entry(u.clone()).or_default().push((v.clone(), *w));
    }
    for v in &g.vertices {
        let body = if g.goals.contains(v) {
            // goal vertices terminate the walk
            Expr::Epsilon
        } else {
            let branches: Vec<Expr> = outgoing
                .get(v)
                .map(|succs| {
                    succs
                        .iter()
                        .map(|(to, _)| {
                            Expr::seq(
                                Expr::simple(edge_label(v, to)),
                                vec![Expr::proc_call(to.clone(), vec![])],
                            )
                        })
                        .collect()
                })
                .unwrap_or_default();
            if branches.is_empty() {
                Expr::Bottom
            } else {
                Expr::CostChoice(branches)
            }
        };
        defs.insert(Definition {
            name: v.clone(),
            params: vec![],
            body,
            atomic_body: false,
        })
        .expect("vertex names are unique");
    }
    for (u, v, w) in &g.edges {
        costs.set(edge_label(u, v), *w);
    }
    (defs, costs)
}

/// Estimator reading the walk's current vertex out of the configuration.
fn graph_estimator(h: BTreeMap<Name, f64>) -> EpsEstimator {
    Arc::new(move |config: &Config| {
        for (_, e) in config.agents() {
            if let Expr::ProcCall { name, .. } = e {
                return h.get(name).copied().unwrap_or(0.0);
            }
        }
        0.0
    })
}

/// Offline best-first search over the graph: expand the most promising
/// frontier node each cycle (n = 0, one ply per select), merging duplicate
/// vertices. With a heuristic the silent frontier estimate makes this A*;
/// without one it is uniform-cost search.
pub fn encode_astar(g: &GraphProblem, seed: u64) -> Result<Encoded, ProblemError> {
    g.validate()?;
    let (defs, costs) = graph_defs(g);
    let mut overrides = Overrides {
        program: Some(Expr::proc_call(g.start.clone(), vec![])),
        k: Some(Extent::Finite(1)),
        b: Some(Extent::Infinite),
        n: Some(Extent::ZERO),
        costs: Some(costs.clone()),
        dedupe: Some(true),
        seed: Some(seed),
        iteration_budget: Some(1_000_000),
        ..Default::default()
    };
    if let Some(h) = &g.heuristic {
        overrides.strongcong = Some(true);
        overrides.eps_estimator = Some(graph_estimator(h.clone()));
    }
    Ok(Encoded {
        program: Expr::proc_call(g.start.clone(), vec![]),
        defs,
        costs,
        overrides,
    })
}

/// Greedy online descent: branching factor one, one-ply lookahead, one step
/// executed per cycle.
pub fn encode_hillclimb(g: &GraphProblem, seed: u64) -> Result<Encoded, ProblemError> {
    g.validate()?;
    let (defs, costs) = graph_defs(g);
    let overrides = Overrides {
        program: Some(Expr::proc_call(g.start.clone(), vec![])),
        k: Some(Extent::Finite(1)),
        b: Some(Extent::Finite(1)),
        n: Some(Extent::Finite(1)),
        costs: Some(costs.clone()),
        seed: Some(seed),
        iteration_budget: Some(10_000),
        ..Default::default()
    };
    Ok(Encoded {
        program: Expr::proc_call(g.start.clone(), vec![]),
        defs,
        costs,
        overrides,
    })
}

fn leaf_label(idx: usize) -> Name {
    Name::new(format!("leaf{idx}"))
}

/// Nested cost (our ply) / adversary (their ply) choices over leaf-valued
/// actions. A single elementary step resolves the whole chain of choices, so
/// the examine phase's root value is the game value.
pub fn encode_minimax(t: &GameTreeProblem, seed: u64) -> Result<Encoded, ProblemError> {
    t.validate()?;
    fn build(
        t: &GameTreeProblem,
        level: u32,
        offset: usize,
        span: usize,
        next_leaf: &mut usize,
    ) -> Expr {
        if level == t.depth {
            let idx = *next_leaf;
            *next_leaf += 1;
            return Expr::seq(Expr::simple(leaf_label(idx)), vec![Expr::Epsilon]);
        }
        let child_span = span / t.branching;
        let children: Vec<Expr> = (0..t.branching)
            .map(|i| build(t, level + 1, offset + i * child_span, child_span, next_leaf))
            .collect();
        if level % 2 == 0 {
            Expr::CostChoice(children)
        } else {
            Expr::AdvChoice(children)
        }
    }
    let mut next_leaf = 0;
    let program = build(t, 0, 0, t.leaves.len(), &mut next_leaf);
    let mut costs = CostTable::new();
    for (i, v) in t.leaves.iter().enumerate() {
        costs.set(leaf_label(i), *v);
    }
    let overrides = Overrides {
        program: Some(program.clone()),
        k: Some(Extent::Finite(t.depth.max(1) as u64)),
        b: Some(Extent::Infinite),
        n: Some(Extent::ZERO),
        costs: Some(costs.clone()),
        seed: Some(seed),
        ..Default::default()
    };
    Ok(Encoded {
        program,
        defs: DefTable::new(),
        costs,
        overrides,
    })
}

fn tour_def_name(city: usize, mask: u64) -> Name {
    Name::new(format!("t{city}_m{mask:x}"))
}

fn dist_label(i: usize, j: usize) -> Name {
    Name::new(format!("d{i}_{j}"))
}

/// Tours as nested cost choices over unvisited-city extensions; the visited
/// set is baked into per-(city, set) definitions so the choice tree unfolds
/// lazily. Small instances get complete search (uniform-cost to the optimal
/// tour); larger ones run elitist restarts with a short lookahead and random
/// reactive completion.
pub fn encode_tsp(p: &TspProblem, seed: u64, iterations: u64) -> Result<Encoded, ProblemError> {
    p.validate()?;
    let m = p.size();
    let full: u64 = (1 << m) - 1;
    let mut defs = DefTable::new();
    let mut costs = CostTable::new();
    for i in 0..m {
        for j in 0..m {
            if i != j {
                costs.set(dist_label(i, j), p.distances[i][j]);
            }
        }
    }
    // Definitions for every reachable (current city, visited set) pair.
    let mut stack = vec![(0usize, 1u64)];
    let mut seen = BTreeSet::new();
    while let Some((city, mask)) = stack.pop() {
        if !seen.insert((city, mask)) {
            continue;
        }
        let body = if mask == full {
            Expr::seq(Expr::simple(dist_label(city, 0)), vec![Expr::Epsilon])
        } else {
            let branches: Vec<Expr> = (0..m)
                .filter(|j| mask & (1 << j) == 0)
                .map(|j| {
                    let next_mask = mask | (1 << j);
                    stack.push((j, next_mask));
                    Expr::seq(
                        Expr::simple(dist_label(city, j)),
                        vec![Expr::proc_call(tour_def_name(j, next_mask), vec![])],
                    )
                })
                .collect();
            Expr::CostChoice(branches)
        };
        defs.insert(Definition {
            name: tour_def_name(city, mask),
            params: vec![],
            body,
            atomic_body: false,
        })
        .expect("tour states are unique");
    }
    let program = Expr::proc_call(tour_def_name(0, 1), vec![]);

    let overrides = if m <= 9 {
        Overrides {
            program: Some(program.clone()),
            k: Some(Extent::Finite(1)),
            b: Some(Extent::Infinite),
            n: Some(Extent::ZERO),
            costs: Some(costs.clone()),
            dedupe: Some(true),
            seed: Some(seed),
            iteration_budget: Some(1_000_000),
            ..Default::default()
        }
    } else {
        Overrides {
            program: Some(program.clone()),
            k: Some(Extent::Finite(2)),
            b: Some(Extent::Infinite),
            n: Some(Extent::Infinite),
            costs: Some(costs.clone()),
            seed: Some(seed),
            iteration_budget: Some(iterations),
            reinit_on_goal: Some(true),
            // pure solution quality: tour cost only
            agg: Some(Aggregator::Weighted {
                w_search: 0.0,
                w_solution: 1.0,
            }),
            ..Default::default()
        }
    };
    Ok(Encoded {
        program,
        defs,
        costs,
        overrides,
    })
}

// ---------------------------------------------------------------------------
// Seeded instance generators for demos and tests

/// Random digraph: a random spanning path from the start keeps every vertex
/// reachable, then extra edges are sprinkled on top. Integer weights.
pub fn random_graph(
    seed: u64,
    vertices: usize,
    edges: usize,
    w_min: u64,
    w_max: u64,
) -> GraphProblem {
    assert!(vertices >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<Name> = (0..vertices).map(|i| Name::new(format!("v{i}"))).collect();
    let mut edge_set: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut order: Vec<usize> = (1..vertices).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut backbone = vec![0usize];
    backbone.extend(order);
    for w in backbone.windows(2) {
        edge_set.insert((w[0], w[1]));
    }
    while edge_set.len() < edges {
        let u = rng.gen_range(0..vertices);
        let v = rng.gen_range(0..vertices);
        if u != v {
            edge_set.insert((u, v));
        }
    }
    let goal = backbone[vertices - 1];
    let edges: Vec<(Name, Name, f64)> = edge_set
        .into_iter()
        .map(|(u, v)| {
            (
                names[u].clone(),
                names[v].clone(),
                rng.gen_range(w_min..=w_max) as f64,
            )
        })
        .collect();
    GraphProblem {
        vertices: names.iter().cloned().collect(),
        edges,
        start: names[0].clone(),
        goals: BTreeSet::from([names[goal].clone()]),
        heuristic: None,
    }
}

/// Complete binary game tree with random integer leaves in [0, 100).
pub fn random_game_tree(seed: u64, depth: u32) -> GameTreeProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaves: Vec<f64> = (0..(1u64 << depth))
        .map(|_| rng.gen_range(0..100) as f64)
        .collect();
    GameTreeProblem {
        depth,
        branching: 2,
        leaves,
    }
}

/// Random symmetric distance matrix with integer distances in [1, 99].
pub fn random_tsp(seed: u64, m: usize) -> TspProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let w = rng.gen_range(1..100) as f64;
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    TspProblem { distances: d }
}

/// The two-route diamond used as the standing example: start -> {a, b} ->
/// goal with costs 1+10 on one route and 2+3 on the other.
pub fn diamond_graph() -> GraphProblem {
    let v = |s: &str| Name::new(s);
    GraphProblem {
        vertices: BTreeSet::from([v("s"), v("a"), v("b"), v("g")]),
        edges: vec![
            (v("s"), v("a"), 1.0),
            (v("a"), v("g"), 10.0),
            (v("s"), v("b"), 2.0),
            (v("b"), v("g"), 3.0),
        ],
        start: v("s"),
        goals: BTreeSet::from([v("g")]),
        heuristic: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::komega::{init, run_config, RunError};
    use crate::parser::{parse, print_unit};

    fn run_encoded(e: &Encoded) -> Result<crate::komega::RunResult, RunError> {
        let defs = Arc::new(e.defs.clone());
        let (cfg, config) = init(e.overrides.clone(), &defs)?;
        run_config(config, cfg)
    }

    #[test]
    fn single_edge_graph_costs_its_weight() {
        let g = GraphProblem {
            vertices: BTreeSet::from([Name::new("s"), Name::new("g")]),
            edges: vec![(Name::new("s"), Name::new("g"), 5.0)],
            start: Name::new("s"),
            goals: BTreeSet::from([Name::new("g")]),
            heuristic: None,
        };
        let e = encode_astar(&g, 0).unwrap();
        let r = run_encoded(&e).unwrap();
        assert!(r.goal_reached);
        assert_eq!(r.best_solution_cost, 5.0);
    }

    #[test]
    fn diamond_takes_the_cheap_route() {
        let e = encode_astar(&diamond_graph(), 0).unwrap();
        let r = run_encoded(&e).unwrap();
        assert_eq!(r.best_solution_cost, 5.0);
    }

    #[test]
    fn minimax_depth_one_and_two() {
        let t1 = GameTreeProblem {
            depth: 1,
            branching: 2,
            leaves: vec![3.0, 5.0],
        };
        let e1 = encode_minimax(&t1, 0).unwrap();
        let defs = Arc::new(e1.defs.clone());
        let (cfg, config) = init(e1.overrides.clone(), &defs).unwrap();
        assert_eq!(crate::komega::evaluate_root(config, cfg).unwrap(), 3.0);

        let t2 = GameTreeProblem {
            depth: 2,
            branching: 2,
            leaves: vec![1.0, 4.0, 2.0, 3.0],
        };
        let e2 = encode_minimax(&t2, 0).unwrap();
        let defs = Arc::new(e2.defs.clone());
        let (cfg, config) = init(e2.overrides.clone(), &defs).unwrap();
        // min(max(1,4), max(2,3)) = 3
        assert_eq!(crate::komega::evaluate_root(config, cfg).unwrap(), 3.0);
    }

    #[test]
    fn hillclimb_walks_a_monotone_chain() {
        let v = |s: &str| Name::new(s);
        let g = GraphProblem {
            vertices: BTreeSet::from([v("s"), v("m"), v("g")]),
            edges: vec![(v("s"), v("m"), 1.0), (v("m"), v("g"), 2.0)],
            start: v("s"),
            goals: BTreeSet::from([v("g")]),
            heuristic: None,
        };
        let e = encode_hillclimb(&g, 0).unwrap();
        let r = run_encoded(&e).unwrap();
        assert!(r.goal_reached);
        assert_eq!(r.best_solution_cost, 3.0);
    }

    #[test]
    fn hillclimb_greedy_trap_is_no_better_than_oracle() {
        // from s: cheap first step leads into the expensive route
        let v = |s: &str| Name::new(s);
        let g = GraphProblem {
            vertices: BTreeSet::from([v("s"), v("a"), v("b"), v("g")]),
            edges: vec![
                (v("s"), v("a"), 1.0),
                (v("a"), v("g"), 10.0),
                (v("s"), v("b"), 2.0),
                (v("b"), v("g"), 3.0),
            ],
            start: v("s"),
            goals: BTreeSet::from([v("g")]),
            heuristic: None,
        };
        let e = encode_hillclimb(&g, 0).unwrap();
        let r = run_encoded(&e).unwrap();
        // greedy goes s->a->g for 11; the optimum is 5
        assert_eq!(r.best_solution_cost, 11.0);
        assert!(r.best_solution_cost >= 5.0);
    }

    #[test]
    fn hillclimb_trees_have_single_children() {
        let e = encode_hillclimb(&diamond_graph(), 0).unwrap();
        let defs = Arc::new(e.defs.clone());
        let (mut cfg, config) = init(e.overrides.clone(), &defs).unwrap();
        let mut tree = crate::komega::SearchTree::new(config);
        crate::komega::select(&mut cfg, &mut tree).unwrap();
        for node in &tree.nodes {
            assert!(node.children.len() <= 1);
        }
    }

    #[test]
    fn triangle_tour_costs_six() {
        let p = TspProblem {
            distances: vec![
                vec![0.0, 1.0, 3.0],
                vec![1.0, 0.0, 2.0],
                vec![3.0, 2.0, 0.0],
            ],
        };
        let e = encode_tsp(&p, 0, 100).unwrap();
        let r = run_encoded(&e).unwrap();
        assert_eq!(r.best_solution_cost, 6.0);
    }

    #[test]
    fn encoder_outputs_parse_back() {
        let encs = vec![
            encode_astar(&diamond_graph(), 0).unwrap(),
            encode_minimax(&random_game_tree(1, 3), 0).unwrap(),
            encode_tsp(&random_tsp(2, 4), 0, 10).unwrap(),
        ];
        for e in encs {
            let printed = print_unit(&[e.program.clone()], &e.defs);
            let (programs, defs2) = parse(&printed).unwrap();
            assert_eq!(programs.len(), 1);
            assert_eq!(defs2.len(), e.defs.len());
            assert!(crate::ast::structural_equal(&programs[0], &e.program));
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let g1 = random_graph(7, 20, 60, 1, 10);
        let g2 = random_graph(7, 20, 60, 1, 10);
        assert_eq!(g1.edges, g2.edges);
        let t1 = random_tsp(3, 8);
        let t2 = random_tsp(3, 8);
        assert_eq!(t1.distances, t2.distances);
    }

    #[test]
    fn game_tree_text_round_trip() {
        let t = GameTreeProblem::parse("((1 4) (2 3))").unwrap();
        assert_eq!(t.depth, 2);
        assert_eq!(t.branching, 2);
        assert_eq!(t.leaves, vec![1.0, 4.0, 2.0, 3.0]);
        assert!(GameTreeProblem::parse("((1 2) (3))").is_err());
    }

    #[test]
    fn graph_text_round_trip() {
        let g = GraphProblem::parse(
            "# demo\nstart s\ngoal g\ns a 1\na g 10\ns b 2\nb g 3\nh a 4\nh b 3\nh g 0\n",
        )
        .unwrap();
        assert_eq!(g.edges.len(), 4);
        assert_eq!(g.heuristic.as_ref().unwrap()[&Name::new("a")], 4.0);
    }
}
