//! Command-line front end. The whole CLI is a library function over string
//! writers so tests can capture output byte-for-byte; `main` is a thin shim.
//!
//! Exit codes: 0 success, 1 domain errors (parse, cost, validation),
//! 2 usage errors.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cost_calculus::agents::load_scenario;
use cost_calculus::ast::AgentId;
use cost_calculus::cost::{expr_cost_with, CostTable};
use cost_calculus::encodings::{
    encode_astar, encode_hillclimb, encode_minimax, encode_tsp, GameTreeProblem, GraphProblem,
    TspProblem,
};
use cost_calculus::komega::{
    evaluate_root, init, run_config, self_tune, Extent, Overrides, RunError, RunResult,
    TuneParams,
};
use cost_calculus::lts::{format_trace, run_reactive, Config};
use cost_calculus::parser::{parse, print_definition, print_pretty, print_unit};
use cost_calculus::{Aggregated, MetricRegistry};

#[derive(Parser)]
#[command(
    name = "costcalc",
    about = "Interpreter and cost-directed search engine for cost expressions",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a source file and print its canonical form
    Parse(ParseArgs),
    /// Compute the static cost of each top-level program
    Cost(CostArgs),
    /// Execute reactively (no optimization), printing the trace
    Run(RunArgs),
    /// Run the optimizing search loop
    Search(SearchArgs),
    /// Run a bundled algorithm demo on a problem file
    Demo(DemoArgs),
    /// Self-tune the search parameters on a benchmark graph
    Tune(TuneArgs),
}

#[derive(Args)]
struct ParseArgs {
    file: PathBuf,
    /// Print with the traditional glyphs instead of the canonical form
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct CostArgs {
    file: PathBuf,
    /// Cost table file (label<TAB>cost lines)
    #[arg(long)]
    costs: Option<PathBuf>,
    /// Metric set to compute under
    #[arg(long)]
    metric: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    file: PathBuf,
    #[arg(long)]
    costs: Option<PathBuf>,
    /// Maximum number of elementary steps
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the executed trace to this file
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum DemoKind {
    Astar,
    Hillclimb,
    Minimax,
    Tsp,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Args)]
struct SearchArgs {
    file: PathBuf,
    #[arg(long)]
    costs: Option<PathBuf>,
    /// Deliberation depth (natural or `inf`)
    #[arg(long)]
    k: Option<Extent>,
    /// Branching factor (natural or `inf`)
    #[arg(long)]
    b: Option<Extent>,
    /// Steps executed per cycle (natural or `inf`; 0 = offline)
    #[arg(long)]
    n: Option<Extent>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Iteration budget
    #[arg(long, default_value_t = 10000)]
    budget: u64,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    metric: Option<String>,
    /// Estimate masked costs instead of zeroing them
    #[arg(long)]
    strongcong: bool,
    /// Enable the self-modification of k, b, n after each cycle
    #[arg(long)]
    update: bool,
    /// Learn costs of executed actions by reinforcement
    #[arg(long)]
    reinf: bool,
    /// Treat the file as a scenario with per-agent directives
    #[arg(long)]
    agents: bool,
    /// Round budget for scenario runs
    #[arg(long, default_value_t = 100)]
    rounds: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    /// Interpret the file as a demo problem instead of a program
    #[arg(long, value_enum)]
    demo: Option<DemoKind>,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(value_enum)]
    algo: DemoKind,
    file: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    budget: u64,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args)]
struct TuneArgs {
    /// Benchmark graph file
    file: PathBuf,
    #[arg(long, default_value_t = 8)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial deliberation depth to tune from
    #[arg(long, default_value = "1")]
    k: Extent,
}

/// Run the CLI against explicit writers; returns the process exit code.
pub fn run_cli(args: &[String], out: &mut String, err: &mut String) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // help/version render on stdout with exit 0
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 2;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn read(path: &PathBuf) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn load_costs(path: &Option<PathBuf>) -> Result<CostTable, String> {
    match path {
        None => Ok(CostTable::new()),
        Some(p) => CostTable::parse(&read(p)?).map_err(|e| e.to_string()),
    }
}

fn finish_run(outcome: Result<RunResult, RunError>) -> Result<RunResult, String> {
    match outcome {
        Ok(r) => Ok(r),
        Err(RunError::BudgetExhausted(r)) => Ok(*r),
        Err(e) => Err(e.to_string()),
    }
}

fn dispatch(cli: Cli, out: &mut String) -> Result<(), String> {
    match cli.command {
        Command::Parse(a) => {
            let text = read(&a.file)?;
            let (programs, defs) = parse(&text).map_err(|e| e.to_string())?;
            if a.pretty {
                for def in defs.iter() {
                    let _ = writeln!(out, "{}", print_definition(def));
                }
                for p in &programs {
                    let _ = writeln!(out, "{}", print_pretty(p));
                }
            } else {
                let _ = write!(out, "{}", print_unit(&programs, &defs));
            }
            Ok(())
        }
        Command::Cost(a) => {
            let text = read(&a.file)?;
            let (programs, defs) = parse(&text).map_err(|e| e.to_string())?;
            let costs = load_costs(&a.costs)?;
            let registry = MetricRegistry::new();
            for p in &programs {
                let c = expr_cost_with(p, &costs, &registry, a.metric.as_deref(), &defs)
                    .map_err(|e| e.to_string())?;
                let _ = writeln!(out, "{c}");
            }
            Ok(())
        }
        Command::Run(a) => {
            let source = read(&a.file)?;
            let (programs, defs) = parse(&source).map_err(|e| e.to_string())?;
            if programs.is_empty() {
                return Err("no programs in file".into());
            }
            let costs = load_costs(&a.costs)?;
            let defs = Arc::new(defs);
            let config = Config::new(
                programs
                    .into_iter()
                    .enumerate()
                    .map(|(i, p)| (AgentId(i as u32), p))
                    .collect(),
                defs.clone(),
            )
            .map_err(|e| e.to_string())?;
            let trace = run_reactive(&config, a.steps, a.seed);
            let registry = MetricRegistry::new();
            let trace_text = format_trace(&trace, &costs, &registry, &defs);
            let _ = write!(out, "{trace_text}");
            let terminal = trace
                .last()
                .map(|(_, c)| c.is_terminal())
                .unwrap_or_else(|| config.is_terminal());
            let _ = writeln!(out, "steps: {}", trace.len());
            let _ = writeln!(out, "terminal: {terminal}");
            if let Some(path) = a.trace {
                fs::write(&path, trace_text).map_err(|e| e.to_string())?;
            }
            Ok(())
        }
        Command::Search(a) => {
            if let Some(demo) = a.demo {
                return run_demo(
                    demo,
                    &a.file,
                    a.seed,
                    a.budget,
                    a.trace.as_ref(),
                    a.format,
                    out,
                );
            }
            if a.agents {
                return run_scenario(&a, out);
            }
            let source = read(&a.file)?;
            let (programs, defs) = parse(&source).map_err(|e| e.to_string())?;
            if programs.is_empty() {
                return Err("no programs in file".into());
            }
            let defs = Arc::new(defs);
            let config = Config::new(
                programs
                    .iter()
                    .cloned()
                    .enumerate()
                    .map(|(i, p)| (AgentId(i as u32), p))
                    .collect(),
                defs.clone(),
            )
            .map_err(|e| e.to_string())?;
            let overrides = Overrides {
                k: a.k,
                b: a.b,
                n: a.n,
                seed: Some(a.seed),
                iteration_budget: Some(a.budget),
                costs: Some(load_costs(&a.costs)?),
                metric: a.metric.clone(),
                strongcong: Some(a.strongcong),
                update: Some(a.update),
                reinf: Some(a.reinf),
                // the multi-agent config is built above; init only shapes cfg
                program: Some(programs[0].clone()),
                ..Default::default()
            };
            let (cfg, _) = init(overrides, &defs).map_err(|e| e.to_string())?;
            let result = finish_run(run_config(config, cfg))?;
            emit_result(&result, a.format, a.trace.as_ref(), out)
        }
        Command::Demo(a) => run_demo(
            a.algo,
            &a.file,
            a.seed,
            a.budget,
            a.trace.as_ref(),
            a.format,
            out,
        ),
        Command::Tune(a) => {
            let text = read(&a.file)?;
            let graph = GraphProblem::parse(&text).map_err(|e| e.to_string())?;
            let bench_seed = a.seed;
            let graph_for_bench = graph.clone();
            let benchmark = move |p: &TuneParams| -> f64 {
                let enc = match encode_astar(&graph_for_bench, bench_seed) {
                    Ok(e) => e,
                    Err(_) => return f64::INFINITY,
                };
                let mut overrides = enc.overrides.clone();
                overrides.k = Some(p.k);
                overrides.b = Some(p.b);
                overrides.n = Some(p.n);
                overrides.search_threshold = p.threshold;
                let defs = Arc::new(enc.defs.clone());
                let outcome =
                    init(overrides, &defs).and_then(|(cfg, config)| run_config(config, cfg));
                match outcome {
                    Ok(r) => r.aggregated.ordering_key(),
                    Err(RunError::BudgetExhausted(r)) => r.aggregated.ordering_key(),
                    Err(_) => f64::INFINITY,
                }
            };
            let initial = TuneParams {
                k: a.k,
                b: Extent::Infinite,
                n: Extent::ZERO,
                threshold: None,
            };
            let tuned =
                self_tune(&benchmark, initial, a.rounds, a.seed).map_err(|e| e.to_string())?;
            let _ = writeln!(
                out,
                "initial: k={} b={} n={} cost={}",
                tuned.initial.k, tuned.initial.b, tuned.initial.n, tuned.initial_cost
            );
            let _ = writeln!(
                out,
                "tuned: k={} b={} n={} cost={}",
                tuned.tuned.k, tuned.tuned.b, tuned.tuned.n, tuned.tuned_cost
            );
            Ok(())
        }
    }
}

fn run_scenario(a: &SearchArgs, out: &mut String) -> Result<(), String> {
    let text = read(&a.file)?;
    let mut universe = load_scenario(&text, a.seed).map_err(|e| e.to_string())?;
    let rounds = universe.run_rounds(a.rounds).map_err(|e| e.to_string())?;
    for (i, round) in rounds.iter().enumerate() {
        for r in round {
            let _ = writeln!(
                out,
                "round {} agent {} steps {} cost {} value {}",
                i, r.agent, r.steps, r.cost, r.root_value
            );
        }
    }
    let _ = writeln!(out, "rounds: {}", rounds.len());
    Ok(())
}

fn emit_result(
    result: &RunResult,
    format: OutputFormat,
    trace: Option<&PathBuf>,
    out: &mut String,
) -> Result<(), String> {
    match format {
        OutputFormat::Text => {
            let _ = write!(out, "{}", result.to_text());
        }
        OutputFormat::Json => {
            let _ = writeln!(out, "{}", result_json(result));
        }
    }
    if let Some(path) = trace {
        fs::write(path, result.trace_text()).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn json_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "\"inf\"".to_string()
    }
}

fn result_json(r: &RunResult) -> String {
    let aggregated = match r.aggregated {
        Aggregated::Scalar(c) => json_f64(c.value()),
        Aggregated::Pair(a, b) => format!("[{}, {}]", json_f64(a.value()), json_f64(b.value())),
    };
    let root = r
        .root_value
        .map(json_f64)
        .unwrap_or_else(|| "null".to_string());
    format!(
        "{{\"iterations\": {}, \"search_cost\": {}, \"solution_cost\": {}, \"aggregated\": {}, \"goal_reached\": {}, \"elapsed_steps\": {}, \"root_value\": {}}}",
        r.iterations,
        json_f64(r.best_search_cost),
        json_f64(r.best_solution_cost),
        aggregated,
        r.goal_reached,
        r.elapsed_steps,
        root
    )
}

fn run_demo(
    algo: DemoKind,
    file: &PathBuf,
    seed: u64,
    budget: u64,
    trace: Option<&PathBuf>,
    format: OutputFormat,
    out: &mut String,
) -> Result<(), String> {
    let text = read(file)?;
    match algo {
        DemoKind::Astar | DemoKind::Hillclimb => {
            let graph = GraphProblem::parse(&text).map_err(|e| e.to_string())?;
            let enc = if algo == DemoKind::Astar {
                encode_astar(&graph, seed).map_err(|e| e.to_string())?
            } else {
                encode_hillclimb(&graph, seed).map_err(|e| e.to_string())?
            };
            let defs = Arc::new(enc.defs.clone());
            let (cfg, config) = init(enc.overrides.clone(), &defs).map_err(|e| e.to_string())?;
            let result = finish_run(run_config(config, cfg))?;
            emit_result(&result, format, trace, out)
        }
        DemoKind::Minimax => {
            let t = GameTreeProblem::parse(&text).map_err(|e| e.to_string())?;
            let enc = encode_minimax(&t, seed).map_err(|e| e.to_string())?;
            let defs = Arc::new(enc.defs.clone());
            let (cfg, config) = init(enc.overrides.clone(), &defs).map_err(|e| e.to_string())?;
            let value = evaluate_root(config, cfg).map_err(|e| e.to_string())?;
            let _ = writeln!(out, "root-value: {value}");
            Ok(())
        }
        DemoKind::Tsp => {
            let p = TspProblem::parse(&text).map_err(|e| e.to_string())?;
            let enc = encode_tsp(&p, seed, budget).map_err(|e| e.to_string())?;
            let defs = Arc::new(enc.defs.clone());
            let (cfg, config) = init(enc.overrides.clone(), &defs).map_err(|e| e.to_string())?;
            let result = finish_run(run_config(config, cfg))?;
            emit_result(&result, format, trace, out)
        }
    }
}
