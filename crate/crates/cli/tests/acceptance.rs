//! Acceptance suite: one test per criterion, each printing a pass line and
//! checked against its runtime budget. Expected values come from independent
//! brute-force solvers or hand-frozen tables, never from the engine itself.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cost_calculus::ast::{structural_equal, DefTable, Expr};
use cost_calculus::cost::{
    expr_cost, expr_cost_with, register_metric, rl_update, CombineInput, CostTable, CostValue,
    OperatorKind, RlTransition,
};
use cost_calculus::encodings::{
    diamond_graph, encode_astar, encode_minimax, encode_tsp, random_game_tree, random_graph,
    random_tsp,
};
use cost_calculus::komega::{
    evaluate_root, init, run_config, self_modify, self_tune, Extent, RunError, TuneParams,
};
use cost_calculus::lts::{run_reactive, Config};
use cost_calculus::parser::{parse, print};
use cost_calculus::{AgentId, CostWeight, MetricRegistry, Name};
use cost_calculus_oracles as oracles;

fn budget_check(name: &str, start: Instant, budget: Duration) {
    let elapsed = start.elapsed();
    assert!(
        elapsed <= budget,
        "{name} exceeded its budget: {elapsed:?} > {budget:?}"
    );
    println!("[acceptance] {name}: PASS ({elapsed:?})");
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_01_standard_cost_laws() {
    let start = Instant::now();
    let reg = MetricRegistry::new();
    let mut t = CostTable::new();
    t.set("a", 2.0);
    t.set("b", 3.0);
    t.set("x", 3.0);
    t.set("y", 5.0);
    t.set("p", 2.0);
    t.set("q", 4.0);
    t.set("r", 10.0);

    let seq = Expr::seq(Expr::simple("a"), vec![Expr::simple("b")]);
    assert_eq!(expr_cost(&seq, &t, &reg).unwrap().value(), 5.0);

    let xs = vec![Expr::simple("x"), Expr::simple("y")];
    assert_eq!(
        expr_cost(&Expr::CostChoice(xs.clone()), &t, &reg).unwrap().value(),
        3.0
    );
    assert_eq!(
        expr_cost(&Expr::AdvChoice(xs), &t, &reg).unwrap().value(),
        5.0
    );

    let avg = Expr::GenChoice(vec![
        (CostWeight::Probability(0.5), Expr::simple("p")),
        (CostWeight::Probability(0.5), Expr::simple("q")),
    ]);
    assert!((expr_cost(&avg, &t, &reg).unwrap().value() - 3.0).abs() < 1e-12);

    // fuzzy: products 0.9*2 = 1.8 vs 0.4*10 = 4.0, so the r branch's cost
    let fuzzy = Expr::GenChoice(vec![
        (CostWeight::Fuzzy(0.9), Expr::simple("p")),
        (CostWeight::Fuzzy(0.4), Expr::simple("r")),
    ]);
    assert_eq!(expr_cost(&fuzzy, &t, &reg).unwrap().value(), 10.0);

    assert_eq!(expr_cost(&Expr::Epsilon, &t, &reg).unwrap().value(), 0.0);
    assert_eq!(
        expr_cost(&Expr::Bottom, &t, &reg).unwrap(),
        CostValue::INFINITE
    );

    budget_check(
        "criterion 1 (standard cost laws)",
        start,
        Duration::from_secs(1),
    );
}

// ---------------------------------------------------------------------------

struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> u64 {
        // xorshift64*
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_f491_4f6c_dd1d)
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}

fn gen_expr(rng: &mut Lcg, depth: u32) -> Expr {
    let names = ["alpha", "beta", "gamma", "delta", "omega"];
    let name = |rng: &mut Lcg| Name::new(names[rng.below(names.len() as u64) as usize]);
    if depth == 0 || rng.below(4) == 0 {
        return match rng.below(4) {
            0 => Expr::Bottom,
            1 => Expr::Epsilon,
            2 => Expr::simple(name(rng)),
            _ => Expr::negated(name(rng)),
        };
    }
    let kids = |rng: &mut Lcg, lo: u64, hi: u64, depth: u32| -> Vec<Expr> {
        let n = lo + rng.below(hi - lo + 1);
        (0..n).map(|_| gen_expr(rng, depth - 1)).collect()
    };
    match rng.below(8) {
        0 => Expr::Cost(kids(rng, 1, 3, depth)),
        1 => Expr::Suppress(kids(rng, 1, 2, depth)),
        2 => Expr::Par(kids(rng, 1, 3, depth)),
        3 => Expr::CostChoice(kids(rng, 1, 3, depth)),
        4 => Expr::AdvChoice(kids(rng, 1, 3, depth)),
        5 => {
            let cs = kids(rng, 2, 3, depth);
            let w = 1.0 / cs.len() as f64;
            Expr::GenChoice(
                cs.into_iter()
                    .map(|c| (CostWeight::Probability(w), c))
                    .collect(),
            )
        }
        6 => Expr::Send {
            channel: name(rng),
            args: kids(rng, 0, 2, depth),
        },
        _ => {
            let head = gen_expr(rng, depth - 1);
            let tail = kids(rng, 0, 2, depth);
            Expr::seq(head, tail)
        }
    }
}

#[test]
fn criterion_02_parser_round_trip() {
    let start = Instant::now();
    let mut rng = Lcg(0x00c0_ffee_0000_0001);
    for i in 0..1000 {
        let e = gen_expr(&mut rng, 8);
        let text = print(&e);
        let (programs, _) = parse(&text)
            .unwrap_or_else(|err| panic!("case {i}: printed form failed to parse: {err}"));
        assert_eq!(programs.len(), 1, "case {i}");
        assert!(
            structural_equal(&programs[0], &e),
            "case {i}: round trip mismatch on `{text}`"
        );
    }
    budget_check(
        "criterion 2 (parser round-trip, 1000 cases)",
        start,
        Duration::from_secs(5),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_03_best_first_equals_dijkstra() {
    let start = Instant::now();
    for seed in 0..100u64 {
        let mut g = random_graph(seed, 20, 60, 1, 10);
        let oracle = oracles::dijkstra(&g).expect("generator keeps goals reachable");

        // h == 0: uniform-cost search
        let enc = encode_astar(&g, seed).unwrap();
        let defs = Arc::new(enc.defs.clone());
        let (cfg, config) = init(enc.overrides.clone(), &defs).unwrap();
        let result = run_config(config, cfg).unwrap();
        assert_eq!(
            result.best_solution_cost, oracle.value,
            "seed {seed} with zero heuristic"
        );

        // nontrivial admissible (and consistent) h: scaled true distance
        let exact = oracles::distances_to_goal(&g);
        g.heuristic = Some(exact.iter().map(|(v, d)| (v.clone(), 0.6 * d)).collect());
        let enc = encode_astar(&g, seed).unwrap();
        let defs = Arc::new(enc.defs.clone());
        let (cfg, config) = init(enc.overrides.clone(), &defs).unwrap();
        let result = run_config(config, cfg).unwrap();
        assert_eq!(
            result.best_solution_cost, oracle.value,
            "seed {seed} with scaled heuristic"
        );
    }
    budget_check(
        "criterion 3 (shortest-path equivalence, 100 graphs x 2 heuristics)",
        start,
        Duration::from_secs(30),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_04_minimax_equivalence() {
    let start = Instant::now();
    for seed in 0..50u64 {
        let t = random_game_tree(seed, 3);
        let oracle = oracles::brute_minimax(&t).value;
        let enc = encode_minimax(&t, seed).unwrap();
        let defs = Arc::new(enc.defs.clone());
        let (cfg, config) = init(enc.overrides.clone(), &defs).unwrap();
        assert_eq!(evaluate_root(config, cfg).unwrap(), oracle, "seed {seed}");
    }
    for seed in 100..110u64 {
        let t = random_game_tree(seed, 5);
        let oracle = oracles::brute_minimax(&t).value;
        let enc = encode_minimax(&t, seed).unwrap();
        let defs = Arc::new(enc.defs.clone());
        let (cfg, config) = init(enc.overrides.clone(), &defs).unwrap();
        assert_eq!(evaluate_root(config, cfg).unwrap(), oracle, "seed {seed}");
    }
    budget_check(
        "criterion 4 (minimax equivalence, 50 depth-3 + 10 depth-5)",
        start,
        Duration::from_secs(10),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_05_tsp_exact_at_eight_cities() {
    let start = Instant::now();
    for seed in 0..10u64 {
        let p = random_tsp(seed, 8);
        let oracle = oracles::brute_tsp(&p).unwrap().value;
        let enc = encode_tsp(&p, seed, 0).unwrap();
        let defs = Arc::new(enc.defs.clone());
        let (cfg, config) = init(enc.overrides.clone(), &defs).unwrap();
        let result = run_config(config, cfg).unwrap();
        assert_eq!(result.best_solution_cost, oracle, "seed {seed}");
    }
    budget_check(
        "criterion 5 (8-city tours exact, 10 matrices)",
        start,
        Duration::from_secs(60),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_06_update_rule_table() {
    let start = Instant::now();
    let fin = Extent::Finite;
    let inf = Extent::Infinite;
    let b = fin(2);
    // (interrupted, n, k) -> expected (k', b', n'), frozen by hand from the
    // self-modification clauses
    let table: Vec<((bool, Extent, Extent), (Extent, Extent, Extent))> = vec![
        // interrupted: the clause chain
        ((true, fin(0), fin(1)), (fin(0), b, fin(0))),
        ((true, fin(0), fin(3)), (fin(2), b, fin(0))),
        ((true, fin(0), inf), (fin(10), b, fin(0))),
        ((true, fin(1), fin(1)), (fin(1), b, fin(0))),
        ((true, fin(1), fin(3)), (fin(3), b, fin(0))),
        ((true, fin(1), inf), (inf, b, fin(0))),
        ((true, fin(3), fin(1)), (fin(1), b, fin(2))),
        ((true, fin(3), fin(3)), (fin(3), b, fin(2))),
        ((true, fin(3), inf), (inf, b, fin(2))),
        ((true, inf, fin(1)), (fin(1), b, fin(10))),
        ((true, inf, fin(3)), (fin(3), b, fin(10))),
        ((true, inf, inf), (inf, b, fin(10))),
        // not interrupted: increment pending 0 < n <= k, promotion at n = k
        ((false, fin(0), fin(1)), (fin(1), b, fin(1))),
        ((false, fin(0), fin(3)), (fin(3), b, fin(1))),
        ((false, fin(0), inf), (inf, b, fin(1))),
        ((false, fin(1), fin(1)), (fin(2), fin(3), fin(2))),
        ((false, fin(1), fin(3)), (fin(3), b, fin(2))),
        ((false, fin(1), inf), (inf, b, fin(2))),
        ((false, fin(3), fin(1)), (fin(1), b, fin(3))),
        ((false, fin(3), fin(3)), (fin(4), fin(3), fin(4))),
        ((false, fin(3), inf), (inf, b, fin(4))),
        ((false, inf, fin(1)), (fin(1), b, inf)),
        ((false, inf, fin(3)), (fin(3), b, inf)),
        ((false, inf, inf), (inf, fin(3), inf)),
    ];
    assert_eq!(table.len(), 24);
    for ((interrupted, n, k), (k2, b2, n2)) in table {
        let got = self_modify(k, b, n, interrupted);
        assert_eq!(
            got,
            (k2, b2, n2),
            "clause mismatch at interrupted={interrupted}, n={n}, k={k}"
        );
    }
    budget_check(
        "criterion 6 (update-rule table, 24 cases exact)",
        start,
        Duration::from_secs(1),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_07_elite_monotonicity_on_large_tours() {
    let start = Instant::now();
    for seed in 0..5u64 {
        let p = random_tsp(1000 + seed, 12);
        let enc = encode_tsp(&p, seed, 200).unwrap();
        let defs = Arc::new(enc.defs.clone());
        let (cfg, config) = init(enc.overrides.clone(), &defs).unwrap();
        let result = match run_config(config, cfg) {
            Ok(r) => r,
            Err(RunError::BudgetExhausted(r)) => *r,
            Err(e) => panic!("{e}"),
        };
        assert_eq!(result.iterations, 200, "seed {seed}");
        assert!(
            result.best_series.last().copied().unwrap_or(f64::INFINITY) < f64::INFINITY,
            "seed {seed}: no tour was ever completed"
        );
        for (i, w) in result.best_series.windows(2).enumerate() {
            assert!(
                w[1] <= w[0] + 1e-12,
                "seed {seed}: best-so-far increased at step {i}: {} -> {}",
                w[0],
                w[1]
            );
        }
    }
    budget_check(
        "criterion 7 (elitist best-so-far non-increasing, 12 cities x 5 seeds)",
        start,
        Duration::from_secs(60),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_08_metric_registry_is_open() {
    let start = Instant::now();
    let reg = MetricRegistry::new();
    let mut t = CostTable::new();
    t.set("a", 2.0);
    t.set("b", 3.0);
    let seq = Expr::seq(Expr::simple("a"), vec![Expr::simple("b")]);
    assert_eq!(expr_cost(&seq, &t, &reg).unwrap().value(), 5.0);

    let reg2 = register_metric(
        &reg,
        "maxwise",
        OperatorKind::Seq,
        Arc::new(|i: &CombineInput| {
            i.children
                .iter()
                .fold(CostValue::new(f64::NEG_INFINITY), |a, c| a.max(*c))
        }),
    )
    .unwrap();
    let defs = DefTable::new();
    assert_eq!(
        expr_cost_with(&seq, &t, &reg2, Some("maxwise"), &defs)
            .unwrap()
            .value(),
        3.0
    );
    // the standard result is unchanged afterwards
    assert_eq!(expr_cost(&seq, &t, &reg2).unwrap().value(), 5.0);
    budget_check(
        "criterion 8 (open metric registry)",
        start,
        Duration::from_secs(1),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_09_self_tuning_never_regresses() {
    let start = Instant::now();
    let graph = diamond_graph();
    for seed in 0..5u64 {
        let g = graph.clone();
        let benchmark = move |p: &TuneParams| -> f64 {
            let enc = encode_astar(&g, seed).unwrap();
            let mut overrides = enc.overrides.clone();
            overrides.k = Some(p.k);
            overrides.b = Some(p.b);
            overrides.n = Some(p.n);
            overrides.search_threshold = p.threshold;
            let defs = Arc::new(enc.defs.clone());
            match init(overrides, &defs).and_then(|(cfg, config)| run_config(config, cfg)) {
                Ok(r) => r.aggregated.ordering_key(),
                Err(RunError::BudgetExhausted(r)) => r.aggregated.ordering_key(),
                Err(_) => f64::INFINITY,
            }
        };
        let initial = TuneParams {
            k: Extent::Finite(1),
            b: Extent::Infinite,
            n: Extent::ZERO,
            threshold: None,
        };
        let tuned = self_tune(&benchmark, initial, 8, seed).unwrap();
        assert!(
            tuned.tuned_cost <= tuned.initial_cost,
            "seed {seed}: tuned {} worse than initial {}",
            tuned.tuned_cost,
            tuned.initial_cost
        );
    }
    budget_check(
        "criterion 9 (self-tuning elitism, 5 seeds)",
        start,
        Duration::from_secs(30),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_10_reinforcement_cost_profiling() {
    let start = Instant::now();
    let true_costs = [("cheap", 1.0f64), ("dear", 9.0f64)];
    let mut table = CostTable::new();
    table.alpha = 0.1;
    table.gamma = 0.0;

    // independent oracle: simulate the recurrence directly over the same
    // seeded pick sequence
    let mut oracle_q = [0.0f64, 0.0f64];
    let mut rng = Lcg(0xfeed_0000_0000_0001);
    let mut picks = Vec::with_capacity(1000);
    for _ in 0..1000 {
        picks.push(rng.below(2) as usize);
    }
    for &pick in &picks {
        oracle_q[pick] += 0.1 * (true_costs[pick].1 - oracle_q[pick]);
    }

    let mut learned = table.clone();
    for &pick in &picks {
        learned = rl_update(
            &learned,
            &RlTransition {
                label: Name::new(true_costs[pick].0),
                observed_cost: true_costs[pick].1,
                next_best_estimate: 0.0,
            },
        );
    }
    let q_cheap = learned.lookup(&Name::new("cheap")).unwrap().value();
    let q_dear = learned.lookup(&Name::new("dear")).unwrap().value();
    assert!((q_cheap - oracle_q[0]).abs() < 1e-12);
    assert!((q_dear - oracle_q[1]).abs() < 1e-12);
    assert!(q_cheap < q_dear, "learned ordering wrong");
    assert!((q_cheap - 1.0).abs() < 0.5, "cheap is off: {q_cheap}");
    assert!((q_dear - 9.0).abs() < 0.5, "dear is off: {q_dear}");
    budget_check(
        "criterion 10 (reinforcement cost profiling)",
        start,
        Duration::from_secs(1),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_11_cli_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let graph_path = dir.path().join("diamond.graph");
    std::fs::write(
        &graph_path,
        "start s\ngoal g\ns a 1\na g 10\ns b 2\nb g 3\n",
    )
    .unwrap();
    let trace1 = dir.path().join("t1.trace");
    let trace2 = dir.path().join("t2.trace");

    let invoke = |trace: &std::path::Path| -> (i32, String, String) {
        let args: Vec<String> = [
            "costcalc",
            "search",
            graph_path.to_str().unwrap(),
            "--demo",
            "astar",
            "--seed",
            "7",
            "--trace",
            trace.to_str().unwrap(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let mut out = String::new();
        let mut err = String::new();
        let code = cost_calculus_cli::run_cli(&args, &mut out, &mut err);
        (code, out, err)
    };

    let (code1, out1, err1) = invoke(&trace1);
    let (code2, out2, err2) = invoke(&trace2);
    assert_eq!(code1, 0, "stderr: {err1}");
    assert_eq!(code1, code2);
    assert_eq!(out1, out2, "stdout must be byte-identical");
    assert!(err1.is_empty() && err2.is_empty());
    let t1 = std::fs::read(&trace1).unwrap();
    let t2 = std::fs::read(&trace2).unwrap();
    assert_eq!(t1, t2, "trace files must be byte-identical");
    assert!(!t1.is_empty());
    // and the reported cost is the oracle's
    assert!(out1.contains("solution-cost: 5"));
    budget_check(
        "criterion 11 (byte-identical reruns)",
        start,
        Duration::from_secs(10),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_12_reactive_schedules_are_members_of_the_oracle_set() {
    let start = Instant::now();
    let universes: Vec<Vec<Vec<String>>> = vec![
        vec![
            vec!["a1".into(), "a2".into()],
            vec!["b1".into()],
            vec!["c1".into()],
        ],
        vec![vec!["p".into()], vec!["q".into()], vec!["r".into()]],
        vec![
            vec!["m1".into(), "m2".into()],
            vec!["n1".into(), "n2".into()],
            vec!["o1".into()],
        ],
    ];
    for (ui, chains) in universes.iter().enumerate() {
        let expected = oracles::enumerate_chain_schedules(chains);
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
                .map(|(i, c)| (AgentId(i as u32), agent_expr(c)))
                .collect(),
            Arc::new(DefTable::new()),
        )
        .unwrap();
        for seed in 0..25u64 {
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
                "universe {ui} seed {seed}: schedule not in the enumerated set"
            );
        }
    }
    budget_check(
        "criterion 12 (schedule soundness, 3-agent universes)",
        start,
        Duration::from_secs(10),
    );
}
