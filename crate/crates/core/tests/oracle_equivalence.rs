//! Cross-checks of the search engine against independent brute-force
//! solvers: shortest paths against Dijkstra, game values against exhaustive
//! minimax, tours against exhaustive permutation, and reactive schedules
//! against exhaustive schedule enumeration.

use std::collections::BTreeSet;
use std::sync::Arc;

use cost_calculus::ast::{DefTable, Expr};
use cost_calculus::encodings::{
    diamond_graph, encode_astar, encode_hillclimb, encode_minimax, encode_tsp, random_game_tree,
    random_graph, random_tsp, Encoded,
};
use cost_calculus::komega::{evaluate_root, init, run_config, Extent, RunError, RunResult};
use cost_calculus::lts::{run_reactive, Config};
use cost_calculus::Name;
use cost_calculus_oracles as oracles;

fn run_encoded(e: &Encoded) -> Result<RunResult, RunError> {
    let defs = Arc::new(e.defs.clone());
    let (cfg, config) = init(e.overrides.clone(), &defs)?;
    run_config(config, cfg)
}

#[test]
fn best_first_matches_dijkstra_on_seeded_graphs() {
    for seed in 0..15u64 {
        let g = random_graph(seed, 12, 30, 1, 10);
        let oracle = oracles::dijkstra(&g).expect("backbone keeps the goal reachable");
        let enc = encode_astar(&g, seed).unwrap();
        let result = run_encoded(&enc).unwrap();
        assert!(result.goal_reached, "seed {seed}");
        assert_eq!(result.best_solution_cost, oracle.value, "seed {seed}");
    }
}

#[test]
fn best_first_with_admissible_heuristic_stays_exact() {
    for seed in 20..30u64 {
        let mut g = random_graph(seed, 12, 30, 1, 10);
        let exact = oracles::distances_to_goal(&g);
        // scale the true remaining distance: admissible and consistent
        g.heuristic = Some(
            exact
                .iter()
                .map(|(v, d)| (v.clone(), 0.6 * d))
                .collect(),
        );
        let oracle = oracles::dijkstra(&g).unwrap();
        let enc = encode_astar(&g, seed).unwrap();
        let result = run_encoded(&enc).unwrap();
        assert_eq!(result.best_solution_cost, oracle.value, "seed {seed}");
    }
}

#[test]
fn reactive_mode_never_beats_the_oracle() {
    // k = 0 means no deliberation: the walk is random, its cost at best the
    // optimum.
    let g = diamond_graph();
    let oracle = oracles::dijkstra(&g).unwrap().value;
    let enc = encode_astar(&g, 0).unwrap();
    let defs = Arc::new(enc.defs.clone());
    let mut overrides = enc.overrides.clone();
    overrides.k = Some(Extent::ZERO);
    overrides.n = Some(Extent::Finite(1));
    for seed in 0..10u64 {
        overrides.seed = Some(seed);
        let (cfg, config) = init(overrides.clone(), &defs).unwrap();
        let result = match run_config(config, cfg) {
            Ok(r) => r,
            Err(RunError::BudgetExhausted(r)) => *r,
            Err(e) => panic!("{e}"),
        };
        if result.goal_reached {
            assert!(result.best_solution_cost >= oracle - 1e-12, "seed {seed}");
        }
    }
}

#[test]
fn minimax_root_values_match_brute_force() {
    for seed in 0..10u64 {
        let t = random_game_tree(seed, 3);
        let oracle = oracles::brute_minimax(&t).value;
        let enc = encode_minimax(&t, seed).unwrap();
        let defs = Arc::new(enc.defs.clone());
        let (cfg, config) = init(enc.overrides.clone(), &defs).unwrap();
        let value = evaluate_root(config, cfg).unwrap();
        assert_eq!(value, oracle, "seed {seed}");
    }
    // one deeper tree
    let t = random_game_tree(99, 5);
    let oracle = oracles::brute_minimax(&t).value;
    let enc = encode_minimax(&t, 99).unwrap();
    let defs = Arc::new(enc.defs.clone());
    let (cfg, config) = init(enc.overrides.clone(), &defs).unwrap();
    assert_eq!(evaluate_root(config, cfg).unwrap(), oracle);
}

#[test]
fn small_tours_match_exhaustive_search() {
    for seed in 0..4u64 {
        let p = random_tsp(seed, 6);
        let oracle = oracles::brute_tsp(&p).unwrap().value;
        let enc = encode_tsp(&p, seed, 100).unwrap();
        let result = run_encoded(&enc).unwrap();
        assert_eq!(result.best_solution_cost, oracle, "seed {seed}");
    }
}

#[test]
fn best_first_never_loses_to_hill_climbing() {
    for seed in 40..50u64 {
        let g = random_graph(seed, 10, 25, 1, 10);
        let astar = run_encoded(&encode_astar(&g, seed).unwrap()).unwrap();
        let hc = match run_encoded(&encode_hillclimb(&g, seed).unwrap()) {
            Ok(r) => r,
            Err(RunError::BudgetExhausted(r)) => *r,
            Err(e) => panic!("{e}"),
        };
        if hc.goal_reached {
            assert!(
                astar.best_solution_cost <= hc.best_solution_cost + 1e-12,
                "seed {seed}: astar {} vs hillclimb {}",
                astar.best_solution_cost,
                hc.best_solution_cost
            );
        }
    }
}

#[test]
fn reactive_schedules_are_sound() {
    // three agents with independent chains; every seeded reactive trace must
    // be one of the exhaustively enumerated schedules
    let chains: Vec<Vec<String>> = vec![
        vec!["a1".into(), "a2".into()],
        vec!["b1".into()],
        vec!["c1".into()],
    ];
    let expected = oracles::enumerate_chain_schedules(&chains);

    let defs = Arc::new(DefTable::new());
    let agent_expr = |labels: &[String]| {
        let mut e = Expr::Epsilon;
        for l in labels.iter().rev() {
            e = Expr::seq(Expr::simple(l.as_str()), vec![e]);
        }
        e
    };
    let config = Config::new(
        chains
            .iter()
            .enumerate()
            .map(|(i, c)| (cost_calculus::AgentId(i as u32), agent_expr(c)))
            .collect(),
        defs,
    )
    .unwrap();

    for seed in 0..40u64 {
        let trace = run_reactive(&config, 16, seed);
        assert!(trace.last().map(|(_, c)| c.is_terminal()).unwrap_or(false));
        let schedule: Vec<BTreeSet<(usize, String)>> = trace
            .iter()
            .map(|(action, _)| {
                action
                    .parts
                    .iter()
                    .map(|(agent, label)| (agent.0 as usize, label.to_string()))
                    .collect()
            })
            .collect();
        assert!(
            expected.contains(&schedule),
            "seed {seed}: schedule {schedule:?} not in oracle set"
        );
    }
}

#[test]
fn diamond_with_admissible_estimates_returns_shortest_path() {
    let mut g = diamond_graph();
    let exact = oracles::distances_to_goal(&g);
    g.heuristic = Some(exact.clone());
    let oracle = oracles::dijkstra(&g).unwrap().value;
    let enc = encode_astar(&g, 7).unwrap();
    let result = run_encoded(&enc).unwrap();
    assert_eq!(result.best_solution_cost, oracle);
    assert_eq!(oracle, 5.0);
    let _ = Name::new("anchor");
}
