//! Multi-agent universes: spawning agents with disjoint alphabets, shared
//! channels, and round-robin scheduling of the per-agent search loops.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::ast::{AgentId, AstError, DefTable, Definition, Expr, Name};
use crate::komega::{
    examine, execute, goal_eval, select, Extent, KOmegaConfig, Overrides, RunError, SearchTree,
};
use crate::lts::{Action, Config, LtsError};
use crate::parser::{parse, ParseError};

#[derive(Debug, Error)]
pub enum UniverseError {
    #[error(transparent)]
    Ast(#[from] AstError),
    #[error(transparent)]
    Lts(#[from] LtsError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("scenario references agent {0} but no program was assigned to it")]
    MissingProgram(u32),
    #[error("bad scenario directive: {0}")]
    BadDirective(String),
    #[error("agent population is capped at {0}")]
    TooManyAgents(usize),
}

/// One agent's slot in the universe: its search configuration plus its
/// accumulated solution cost.
pub struct UniverseAgent {
    pub id: AgentId,
    pub cfg: KOmegaConfig,
    pub solution_cost: f64,
}

/// Cap on the population size: the model allows an unbounded universe, the
/// implementation truncates it.
pub const DEFAULT_MAX_AGENTS: usize = 1024;

/// A population of agents over one shared configuration and definition table.
/// Channels are a shared namespace; action and definition names are made
/// disjoint per agent on spawn.
pub struct Universe {
    pub agents: Vec<UniverseAgent>,
    pub config: Config,
    pub defs: Arc<DefTable>,
    pub seed: u64,
    pub executed: Vec<(Action, f64)>,
    pub max_agents: usize,
    next_id: u32,
}

/// What one agent did during one round.
#[derive(Clone, Debug)]
pub struct RoundReport {
    pub agent: AgentId,
    pub root_value: f64,
    pub steps: u64,
    pub cost: f64,
    pub goal_reached: bool,
}

fn suffix_name(name: &Name, id: AgentId) -> Name {
    Name::new(format!("{}#{}", name, id))
}

fn rename_actions(e: &Expr, map: &BTreeMap<Name, Name>) -> Expr {
    match e {
        Expr::SimpleCall {
            name,
            args,
            negated,
        } => Expr::SimpleCall {
            name: map.get(name).cloned().unwrap_or_else(|| name.clone()),
            args: args.iter().map(|a| rename_actions(a, map)).collect(),
            negated: *negated,
        },
        Expr::ProcCall {
            name,
            args,
            force_once,
        } => Expr::ProcCall {
            name: map.get(name).cloned().unwrap_or_else(|| name.clone()),
            args: args.iter().map(|a| rename_actions(a, map)).collect(),
            force_once: *force_once,
        },
        Expr::Cost(cs) => Expr::Cost(cs.iter().map(|c| rename_actions(c, map)).collect()),
        Expr::Suppress(cs) => Expr::Suppress(cs.iter().map(|c| rename_actions(c, map)).collect()),
        Expr::Par(cs) => Expr::Par(cs.iter().map(|c| rename_actions(c, map)).collect()),
        Expr::CostChoice(cs) => {
            Expr::CostChoice(cs.iter().map(|c| rename_actions(c, map)).collect())
        }
        Expr::AdvChoice(cs) => {
            Expr::AdvChoice(cs.iter().map(|c| rename_actions(c, map)).collect())
        }
        Expr::GenChoice(cs) => Expr::GenChoice(
            cs.iter()
                .map(|(w, c)| (*w, rename_actions(c, map)))
                .collect(),
        ),
        Expr::Send { channel, args } => Expr::Send {
            channel: channel.clone(),
            args: args.iter().map(|a| rename_actions(a, map)).collect(),
        },
        Expr::Seq { head, tail } => Expr::Seq {
            head: Box::new(rename_actions(head, map)),
            tail: tail.iter().map(|t| rename_actions(t, map)).collect(),
        },
        other => other.clone(),
    }
}

impl Universe {
    pub fn new(defs: DefTable, seed: u64) -> Result<Universe, UniverseError> {
        let defs = Arc::new(defs);
        let config = Config::new(Vec::new(), defs.clone())?;
        Ok(Universe {
            agents: Vec::new(),
            config,
            defs,
            seed,
            executed: Vec::new(),
            max_agents: DEFAULT_MAX_AGENTS,
            next_id: 0,
        })
    }

    /// Add an agent running `program`. With auto-suffixing on (the default),
    /// every action and definition name the program uses is indexed by the
    /// new agent's id, which keeps alphabets disjoint; channel names are left
    /// shared so rendezvous across agents still meet. Definitions used by
    /// the program are cloned under the suffixed names.
    pub fn spawn(
        &mut self,
        program: &Expr,
        program_defs: &DefTable,
        mut overrides: Overrides,
        auto_suffix: bool,
    ) -> Result<AgentId, UniverseError> {
        if self.agents.len() >= self.max_agents {
            return Err(UniverseError::TooManyAgents(self.max_agents));
        }
        let id = AgentId(self.next_id);
        self.next_id += 1;

        let mut names: BTreeSet<Name> = program.action_names();
        for def in program_defs.iter() {
            names.insert(def.name.clone());
            names.extend(def.body.action_names());
        }

        let (program, rename) = if auto_suffix {
            let map: BTreeMap<Name, Name> =
                names.iter().map(|n| (n.clone(), suffix_name(n, id))).collect();
            (rename_actions(program, &map), map)
        } else {
            (program.clone(), BTreeMap::new())
        };

        let mut defs = (*self.defs).clone();
        for def in program_defs.iter() {
            let name = rename
                .get(&def.name)
                .cloned()
                .unwrap_or_else(|| def.name.clone());
            let body = rename_actions(&def.body, &rename);
            defs.insert(Definition {
                name,
                params: def.params.clone(),
                body,
                atomic_body: def.atomic_body,
            })?;
        }

        let alphabet: BTreeSet<Name> = if auto_suffix {
            rename.values().cloned().collect()
        } else {
            names
        };
        defs.claim_alphabet(id, alphabet.clone())?;

        // Costs of suffixed labels: mirror the override table under the new
        // names so per-agent tables keep working.
        if let Some(costs) = overrides.costs.take() {
            let mut renamed = costs.clone();
            for (old, new) in &rename {
                if let Some(c) = costs.get(old) {
                    renamed.set(new.clone(), c);
                }
            }
            overrides.costs = Some(renamed);
        }

        if overrides.alphabet.is_none() {
            overrides.alphabet = Some(alphabet.clone());
        }
        if overrides.omega.is_none() {
            overrides.omega = Some(alphabet);
        }
        overrides.seed = overrides.seed.or(Some(self.seed ^ id.0 as u64));
        overrides.program = Some(program.clone());

        let defs = Arc::new(defs);
        let (cfg, _) = crate::komega::init(overrides, &defs)?;

        let mut agents: Vec<(AgentId, Expr)> = self.config.agents().to_vec();
        agents.push((id, program));
        self.defs = defs;
        self.config = Config::new(agents, self.defs.clone())?;
        self.agents.push(UniverseAgent {
            id,
            cfg,
            solution_cost: 0.0,
        });
        Ok(id)
    }

    /// One round: every agent performs one loop iteration (select, examine,
    /// execute) against the shared configuration, in id order. Rendezvous
    /// across agents resolve inside the shared configuration as part of
    /// whichever agent's execution commits them.
    pub fn round(&mut self) -> Result<Vec<RoundReport>, UniverseError> {
        let mut reports = Vec::new();
        for i in 0..self.agents.len() {
            let id = self.agents[i].id;
            let cfg = &mut self.agents[i].cfg;

            if goal_eval(&cfg.goal, &self.config) {
                reports.push(RoundReport {
                    agent: id,
                    root_value: 0.0,
                    steps: 0,
                    cost: 0.0,
                    goal_reached: true,
                });
                continue;
            }

            let mut tree = SearchTree::new(self.config.clone());
            select(cfg, &mut tree)?;
            let root_value = examine(cfg, &mut tree);
            let report = execute(cfg, &mut tree, &mut self.config, &mut self.executed)?;
            self.agents[i].solution_cost += report.path_cost;
            reports.push(RoundReport {
                agent: id,
                root_value,
                steps: report.steps,
                cost: report.path_cost,
                goal_reached: report.reached_goal_leaf,
            });
        }
        Ok(reports)
    }

    /// Run rounds until every agent's goal holds or the round budget is hit.
    /// Returns the per-round reports.
    pub fn run_rounds(&mut self, max_rounds: u64) -> Result<Vec<Vec<RoundReport>>, UniverseError> {
        let mut all = Vec::new();
        for _ in 0..max_rounds {
            let done = self
                .agents
                .iter()
                .all(|a| goal_eval(&a.cfg.goal, &self.config));
            if done {
                break;
            }
            all.push(self.round()?);
        }
        Ok(all)
    }
}

/// Scenario files: leading `agent <id> [k=..] [b=..] [n=..] [seed=..]
/// [omega=name,name,...]` directives, then an ordinary source text whose i-th
/// top-level program belongs to the i-th declared agent (or to a fresh agent
/// when no directive mentions it). Name suffixing is off in scenario files:
/// the author controls the namespace.
pub fn load_scenario(text: &str, seed: u64) -> Result<Universe, UniverseError> {
    let mut directives: Vec<(u32, Overrides)> = Vec::new();
    let mut source = String::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("agent ") {
            let mut parts = rest.split_whitespace();
            let id: u32 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| UniverseError::BadDirective(trimmed.to_string()))?;
            let mut o = Overrides::default();
            for opt in parts {
                let (key, value) = opt
                    .split_once('=')
                    .ok_or_else(|| UniverseError::BadDirective(opt.to_string()))?;
                match key {
                    "k" => {
                        o.k = Some(value.parse::<Extent>().map_err(UniverseError::BadDirective)?)
                    }
                    "b" => {
                        o.b = Some(value.parse::<Extent>().map_err(UniverseError::BadDirective)?)
                    }
                    "n" => {
                        o.n = Some(value.parse::<Extent>().map_err(UniverseError::BadDirective)?)
                    }
                    "seed" => {
                        o.seed = Some(value.parse().map_err(|_| {
                            UniverseError::BadDirective(opt.to_string())
                        })?)
                    }
                    "omega" => {
                        o.omega = Some(value.split(',').map(Name::new).collect());
                    }
                    "strongcong" => {
                        o.strongcong = Some(value == "1" || value == "true");
                    }
                    _ => return Err(UniverseError::BadDirective(opt.to_string())),
                }
            }
            directives.push((id, o));
        } else {
            source.push_str(line);
            source.push('\n');
        }
    }

    let (programs, defs) = parse(&source)?;
    let mut universe = Universe::new(DefTable::new(), seed)?;
    for (i, program) in programs.iter().enumerate() {
        let overrides = directives
            .iter()
            .find(|(id, _)| *id as usize == i)
            .map(|(_, o)| o.clone())
            .unwrap_or_default();
        universe.spawn(program, &defs, overrides, false)?;
    }
    for (id, _) in &directives {
        if *id as usize >= programs.len() {
            return Err(UniverseError::MissingProgram(*id));
        }
    }
    Ok(universe)
}
