//! Operational semantics: a labeled transition system over agent
//! configurations. One elementary step is a multiset of simple actions — a
//! single agent's atomic action, a parallel subset within one agent, a joint
//! step of several agents, or a send/receive rendezvous fused into one
//! communication.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ast::{expand_call, substitute, AgentId, DefTable, Expr, Name};
use crate::cost::{expr_cost_with, CostError, CostTable, CostValue, CostWeight, MetricRegistry};

/// Cap on the number of parallel subsets enumerated for one composition.
pub const PAR_SUBSET_CAP: usize = 256;
/// Cap on chained definition expansions while looking for a move; a call
/// chain that never exposes an action within this bound is treated as
/// blocked.
const EXPAND_LIMIT: usize = 64;

/// Label of one simple action inside a step.
#[derive(Clone, Debug, PartialEq)]
pub enum SimpleLabel {
    /// A named simple action; `atomic_body` carries the expanded definition
    /// body for calls that evaluate atomically (its cost is the body's cost).
    Named {
        name: Name,
        negated: bool,
        atomic_body: Option<Arc<Expr>>,
    },
    /// A matched send/receive pair on a channel, fused into one action.
    Comm { channel: Name },
    /// The cost operator firing: probes the cost of its children.
    CostProbe { body: Arc<Vec<Expr>> },
    /// An invisible step (quote execution, masked action).
    Silent,
}

impl fmt::Display for SimpleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimpleLabel::Named { name, negated, .. } => {
                if *negated {
                    write!(f, "!{}", name)
                } else {
                    write!(f, "{}", name)
                }
            }
            SimpleLabel::Comm { channel } => write!(f, "ch:{}", channel),
            SimpleLabel::CostProbe { .. } => write!(f, "$"),
            SimpleLabel::Silent => write!(f, "eps"),
        }
    }
}

/// One step: a multiset of (agent, label) pairs firing together.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub parts: Vec<(AgentId, SimpleLabel)>,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (agent, label) in &self.parts {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{}:{}", agent, label)?;
            first = false;
        }
        Ok(())
    }
}

/// Which choice operator a branch decision came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChoiceKind {
    Cost,
    Adv,
    Gen,
}

/// One resolved branch on the way from an expression root to a move.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceStep {
    pub kind: ChoiceKind,
    pub branch: usize,
    pub arity: usize,
    pub weight: Option<CostWeight>,
}

/// An enabled transition: the action, the successor configuration, and the
/// chain of choice branches the action resolves (outermost first). The chain
/// is what lets the examine phase back costs up through nested choices.
#[derive(Clone, Debug)]
pub struct Move {
    pub action: Action,
    pub successor: Config,
    pub choice_path: Vec<ChoiceStep>,
}

#[derive(Debug, Error, PartialEq)]
pub enum LtsError {
    #[error("action is not enabled in this configuration")]
    IllegalAction,
    #[error("agent {0} holds an open expression (free variables)")]
    OpenAgent(AgentId),
    #[error("agent ids must be unique; {0} appears twice")]
    DuplicateAgent(AgentId),
    #[error("call of undefined process `{0}`")]
    UndefinedProcess(Name),
}

/// A universe snapshot: every agent's remaining expression plus the shared
/// definitions. Configurations are immutable values; stepping returns a new
/// one.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    agents: Vec<(AgentId, Expr)>,
    defs: Arc<DefTable>,
    /// Default random stream for reactive runs that do not pass their own.
    pub seed: u64,
}

impl Config {
    pub fn new(agents: Vec<(AgentId, Expr)>, defs: Arc<DefTable>) -> Result<Config, LtsError> {
        let mut seen = Vec::new();
        for (id, expr) in &agents {
            if seen.contains(id) {
                return Err(LtsError::DuplicateAgent(*id));
            }
            seen.push(*id);
            if !expr.free_vars().is_empty() {
                return Err(LtsError::OpenAgent(*id));
            }
            let mut undefined = None;
            expr_walk_proc_calls(expr, &mut |name| {
                if !defs.contains(name) && undefined.is_none() {
                    undefined = Some(name.clone());
                }
            });
            if let Some(name) = undefined {
                return Err(LtsError::UndefinedProcess(name));
            }
        }
        Ok(Config {
            agents,
            defs,
            seed: 0,
        })
    }

    pub fn single(program: Expr, defs: Arc<DefTable>) -> Result<Config, LtsError> {
        Config::new(vec![(AgentId(0), program)], defs)
    }

    pub fn agents(&self) -> &[(AgentId, Expr)] {
        &self.agents
    }

    pub fn defs(&self) -> &Arc<DefTable> {
        &self.defs
    }

    pub fn agent_expr(&self, id: AgentId) -> Option<&Expr> {
        self.agents.iter().find(|(a, _)| *a == id).map(|(_, e)| e)
    }

    fn replace_agent(&self, id: AgentId, expr: Expr) -> Config {
        let mut agents = self.agents.clone();
        if let Some(slot) = agents.iter_mut().find(|(a, _)| *a == id) {
            slot.1 = expr;
        }
        Config {
            agents,
            defs: self.defs.clone(),
            seed: self.seed,
        }
    }

    /// All agents reduced to epsilon: successful termination.
    pub fn is_terminal(&self) -> bool {
        self.agents.iter().all(|(_, e)| *e == Expr::Epsilon)
    }

    /// Canonical string identity, used for duplicate detection in search.
    pub fn canonical_key(&self) -> String {
        let mut out = String::new();
        for (id, e) in &self.agents {
            out.push_str(&format!("{}={};", id, crate::parser::print(e)));
        }
        out
    }
}

fn expr_walk_proc_calls(e: &Expr, f: &mut impl FnMut(&Name)) {
    match e {
        Expr::ProcCall { name, args, .. } => {
            f(name);
            args.iter().for_each(|a| expr_walk_proc_calls(a, f));
        }
        Expr::Cost(cs) | Expr::Par(cs) => cs.iter().for_each(|c| expr_walk_proc_calls(c, f)),
        Expr::CostChoice(cs) | Expr::AdvChoice(cs) => {
            cs.iter().for_each(|c| expr_walk_proc_calls(c, f))
        }
        Expr::GenChoice(cs) => cs.iter().for_each(|(_, c)| expr_walk_proc_calls(c, f)),
        Expr::Send { args, .. } | Expr::SimpleCall { args, .. } => {
            args.iter().for_each(|a| expr_walk_proc_calls(a, f))
        }
        Expr::Seq { head, tail } => {
            expr_walk_proc_calls(head, f);
            tail.iter().for_each(|t| expr_walk_proc_calls(t, f));
        }
        // Quoted subtrees are data; calls inside them are not reachable.
        Expr::Suppress(_) => {}
        Expr::Receive { .. } | Expr::Bottom | Expr::Epsilon | Expr::Var(_) => {}
    }
}

// ---------------------------------------------------------------------------
// Per-expression offer enumeration

#[derive(Clone, Debug)]
struct LocalMove {
    labels: Vec<SimpleLabel>,
    succ: Expr,
    path: Vec<ChoiceStep>,
}

#[derive(Clone, Debug)]
struct SendOffer {
    channel: Name,
    args: Vec<Expr>,
    succ: Expr,
    path: Vec<ChoiceStep>,
}

#[derive(Clone, Debug)]
struct RecvOffer {
    channel: Name,
    vars: Vec<Name>,
    /// Continuation with the receive variables still free; bound at match time.
    succ: Expr,
    path: Vec<ChoiceStep>,
}

#[derive(Clone, Debug, Default)]
struct Offers {
    moves: Vec<LocalMove>,
    sends: Vec<SendOffer>,
    recvs: Vec<RecvOffer>,
}

impl Offers {
    fn is_blocked(&self) -> bool {
        self.moves.is_empty() && self.sends.is_empty() && self.recvs.is_empty()
    }

    fn prepend_path(mut self, step: ChoiceStep) -> Offers {
        for m in &mut self.moves {
            m.path.insert(0, step.clone());
        }
        for s in &mut self.sends {
            s.path.insert(0, step.clone());
        }
        for r in &mut self.recvs {
            r.path.insert(0, step.clone());
        }
        self
    }
}

/// Continuation of a sequence once the head has reduced to `done`.
fn seq_join(done: Expr, tail: &[Expr]) -> Expr {
    if done == Expr::Epsilon {
        match tail.split_first() {
            None => Expr::Epsilon,
            Some((next, rest)) => seq_push(next.clone(), rest),
        }
    } else {
        Expr::Seq {
            head: Box::new(done),
            tail: tail.to_vec(),
        }
    }
}

fn seq_push(head: Expr, rest: &[Expr]) -> Expr {
    if head == Expr::Epsilon {
        match rest.split_first() {
            None => Expr::Epsilon,
            Some((next, more)) => seq_push(next.clone(), more),
        }
    } else if rest.is_empty() {
        head
    } else {
        Expr::Seq {
            head: Box::new(head),
            tail: rest.to_vec(),
        }
    }
}

/// Parallel continuation: replace child `idx`, drop finished children, and
/// collapse to epsilon when everything has terminated.
fn par_join(children: &[Expr], replaced: &[(usize, Expr)]) -> Expr {
    let mut out = Vec::with_capacity(children.len());
    for (i, c) in children.iter().enumerate() {
        let next = replaced
            .iter()
            .find(|(j, _)| *j == i)
            .map(|(_, e)| e.clone())
            .unwrap_or_else(|| c.clone());
        if next != Expr::Epsilon {
            out.push(next);
        }
    }
    match out.len() {
        0 => Expr::Epsilon,
        1 => out.into_iter().next().unwrap(),
        _ => Expr::Par(out),
    }
}

fn offers(e: &Expr, defs: &DefTable, expansions: usize) -> Offers {
    match e {
        Expr::Bottom | Expr::Epsilon | Expr::Var(_) => Offers::default(),
        Expr::Suppress(_) => Offers {
            moves: vec![LocalMove {
                labels: vec![SimpleLabel::Silent],
                succ: Expr::Epsilon,
                path: Vec::new(),
            }],
            ..Default::default()
        },
        Expr::Cost(children) => Offers {
            moves: vec![LocalMove {
                labels: vec![SimpleLabel::CostProbe {
                    body: Arc::new(children.clone()),
                }],
                succ: Expr::Epsilon,
                path: Vec::new(),
            }],
            ..Default::default()
        },
        Expr::Send { channel, args } => Offers {
            sends: vec![SendOffer {
                channel: channel.clone(),
                args: args.clone(),
                succ: Expr::Epsilon,
                path: Vec::new(),
            }],
            ..Default::default()
        },
        Expr::Receive { channel, vars } => Offers {
            recvs: vec![RecvOffer {
                channel: channel.clone(),
                vars: vars.clone(),
                succ: Expr::Epsilon,
                path: Vec::new(),
            }],
            ..Default::default()
        },
        Expr::SimpleCall {
            name,
            args,
            negated,
        } => {
            let positive = simple_call_offers(name, args, defs, expansions);
            if !negated {
                return positive;
            }
            // Guard semantics: the negated call fires exactly when the plain
            // call is blocked, and costs nothing.
            if positive.is_blocked() {
                Offers {
                    moves: vec![LocalMove {
                        labels: vec![SimpleLabel::Named {
                            name: name.clone(),
                            negated: true,
                            atomic_body: None,
                        }],
                        succ: Expr::Epsilon,
                        path: Vec::new(),
                    }],
                    ..Default::default()
                }
            } else {
                Offers::default()
            }
        }
        Expr::ProcCall { name, .. } => {
            if expansions >= EXPAND_LIMIT {
                return Offers::default();
            }
            match expand_call(e, defs) {
                Ok(body) => offers(&body, defs, expansions + 1),
                Err(_) => {
                    debug_assert!(false, "undefined process `{name}` survived validation");
                    Offers::default()
                }
            }
        }
        Expr::Seq { head, tail } => {
            if **head == Expr::Epsilon {
                return offers(&seq_join(Expr::Epsilon, tail), defs, expansions);
            }
            let inner = offers(head, defs, expansions);
            Offers {
                moves: inner
                    .moves
                    .into_iter()
                    .map(|m| LocalMove {
                        succ: seq_join(m.succ, tail),
                        ..m
                    })
                    .collect(),
                sends: inner
                    .sends
                    .into_iter()
                    .map(|s| SendOffer {
                        succ: seq_join(s.succ, tail),
                        ..s
                    })
                    .collect(),
                recvs: inner
                    .recvs
                    .into_iter()
                    .map(|r| RecvOffer {
                        succ: seq_join(r.succ, tail),
                        ..r
                    })
                    .collect(),
            }
        }
        Expr::Par(children) => par_offers(children, defs, expansions),
        Expr::CostChoice(children) => {
            choice_offers(children.iter(), ChoiceKind::Cost, children.len(), defs, expansions)
        }
        Expr::AdvChoice(children) => {
            choice_offers(children.iter(), ChoiceKind::Adv, children.len(), defs, expansions)
        }
        Expr::GenChoice(children) => {
            let mut out = Offers::default();
            let arity = children.len();
            for (i, (w, c)) in children.iter().enumerate() {
                let branch = offers(c, defs, expansions).prepend_path(ChoiceStep {
                    kind: ChoiceKind::Gen,
                    branch: i,
                    arity,
                    weight: Some(*w),
                });
                out.moves.extend(branch.moves);
                out.sends.extend(branch.sends);
                out.recvs.extend(branch.recvs);
            }
            out
        }
    }
}

fn simple_call_offers(name: &Name, args: &[Expr], defs: &DefTable, expansions: usize) -> Offers {
    match defs.get(name) {
        Ok(def) if def.atomic_body => {
            let call = Expr::SimpleCall {
                name: name.clone(),
                args: args.to_vec(),
                negated: false,
            };
            match expand_call(&call, defs) {
                Ok(body) => {
                    if body.normalize() == Expr::Bottom {
                        Offers::default()
                    } else {
                        Offers {
                            moves: vec![LocalMove {
                                labels: vec![SimpleLabel::Named {
                                    name: name.clone(),
                                    negated: false,
                                    atomic_body: Some(Arc::new(body)),
                                }],
                                succ: Expr::Epsilon,
                                path: Vec::new(),
                            }],
                            ..Default::default()
                        }
                    }
                }
                Err(_) => Offers::default(),
            }
        }
        Ok(_) => {
            // A simple call resolving to a process definition unfolds like a
            // process call.
            let call = Expr::ProcCall {
                name: name.clone(),
                args: args.to_vec(),
                force_once: false,
            };
            if expansions >= EXPAND_LIMIT {
                return Offers::default();
            }
            match expand_call(&call, defs) {
                Ok(body) => offers(&body, defs, expansions + 1),
                Err(_) => Offers::default(),
            }
        }
        Err(_) => Offers {
            // Undefined simple names are opaque one-step actions whose cost
            // comes from the table.
            moves: vec![LocalMove {
                labels: vec![SimpleLabel::Named {
                    name: name.clone(),
                    negated: false,
                    atomic_body: None,
                }],
                succ: Expr::Epsilon,
                path: Vec::new(),
            }],
            ..Default::default()
        },
    }
}

fn choice_offers<'a>(
    children: impl Iterator<Item = &'a Expr>,
    kind: ChoiceKind,
    arity: usize,
    defs: &DefTable,
    expansions: usize,
) -> Offers {
    let mut out = Offers::default();
    for (i, c) in children.enumerate() {
        let branch = offers(c, defs, expansions).prepend_path(ChoiceStep {
            kind,
            branch: i,
            arity,
            weight: None,
        });
        out.moves.extend(branch.moves);
        out.sends.extend(branch.sends);
        out.recvs.extend(branch.recvs);
    }
    out
}

fn par_offers(children: &[Expr], defs: &DefTable, expansions: usize) -> Offers {
    let child_offers: Vec<Offers> = children
        .iter()
        .map(|c| offers(c, defs, expansions))
        .collect();
    let mut out = Offers::default();

    // Internal rendezvous: a send in one child matched by a receive in a
    // different child fuses into one communication step.
    for (i, ci) in child_offers.iter().enumerate() {
        for send in &ci.sends {
            for (j, cj) in child_offers.iter().enumerate() {
                if i == j {
                    continue;
                }
                for recv in &cj.recvs {
                    if recv.channel == send.channel && recv.vars.len() == send.args.len() {
                        let bindings: BTreeMap<Name, Expr> = recv
                            .vars
                            .iter()
                            .cloned()
                            .zip(send.args.iter().cloned())
                            .collect();
                        let recv_succ = substitute(&recv.succ, &bindings);
                        out.moves.push(LocalMove {
                            labels: vec![SimpleLabel::Comm {
                                channel: send.channel.clone(),
                            }],
                            succ: par_join(
                                children,
                                &[(i, send.succ.clone()), (j, recv_succ)],
                            ),
                            path: Vec::new(),
                        });
                    }
                }
            }
        }
    }

    // Every nonempty subset of non-blocked children, one move per chosen
    // child, enumerated odometer-style and capped.
    let option_counts: Vec<usize> = child_offers.iter().map(|o| o.moves.len()).collect();
    let mut digits = vec![0usize; children.len()];
    let mut emitted = 0usize;
    'outer: loop {
        // advance the odometer
        let mut pos = 0;
        loop {
            if pos >= digits.len() {
                break 'outer;
            }
            if digits[pos] < option_counts[pos] {
                digits[pos] += 1;
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
        let mut labels = Vec::new();
        let mut replaced = Vec::new();
        let mut participants = Vec::new();
        for (i, d) in digits.iter().enumerate() {
            if *d == 0 {
                continue;
            }
            let m = &child_offers[i].moves[*d - 1];
            labels.extend(m.labels.iter().cloned());
            replaced.push((i, m.succ.clone()));
            participants.push(i);
        }
        let path = if participants.len() == 1 {
            let i = participants[0];
            child_offers[i].moves[digits[i] - 1].path.clone()
        } else {
            Vec::new()
        };
        out.moves.push(LocalMove {
            labels,
            succ: par_join(children, &replaced),
            path,
        });
        emitted += 1;
        if emitted >= PAR_SUBSET_CAP {
            break;
        }
    }

    // Unmatched halves are exported so an enclosing composition (or another
    // agent) can complete them.
    for (i, ci) in child_offers.iter().enumerate() {
        for send in &ci.sends {
            out.sends.push(SendOffer {
                channel: send.channel.clone(),
                args: send.args.clone(),
                succ: par_join(children, &[(i, send.succ.clone())]),
                path: send.path.clone(),
            });
        }
        for recv in &ci.recvs {
            out.recvs.push(RecvOffer {
                channel: recv.channel.clone(),
                vars: recv.vars.clone(),
                succ: par_join(children, &[(i, recv.succ.clone())]),
                path: recv.path.clone(),
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Configuration-level enumeration

/// Enumerate every enabled step of the configuration: per-agent moves, joint
/// multi-agent subsets (capped), and cross-agent rendezvous. Blocked
/// configurations return the empty list.
pub fn enabled(config: &Config) -> Vec<Move> {
    let defs = config.defs.as_ref();
    let agent_offers: Vec<(AgentId, Offers)> = config
        .agents
        .iter()
        .map(|(id, e)| (*id, offers(e, defs, 0)))
        .collect();

    let mut moves = Vec::new();

    // Joint subsets of agents' ready moves.
    let option_counts: Vec<usize> = agent_offers.iter().map(|(_, o)| o.moves.len()).collect();
    let mut digits = vec![0usize; agent_offers.len()];
    let mut emitted = 0usize;
    'outer: loop {
        let mut pos = 0;
        loop {
            if pos >= digits.len() {
                break 'outer;
            }
            if digits[pos] < option_counts[pos] {
                digits[pos] += 1;
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
        let mut parts = Vec::new();
        let mut successor = config.clone();
        let mut participant_paths = Vec::new();
        for (i, d) in digits.iter().enumerate() {
            if *d == 0 {
                continue;
            }
            let (agent, ref agent_offer) = agent_offers[i];
            let m = &agent_offer.moves[*d - 1];
            for label in &m.labels {
                parts.push((agent, label.clone()));
            }
            successor = successor.replace_agent(agent, m.succ.clone());
            participant_paths.push(m.path.clone());
        }
        let choice_path = if participant_paths.len() == 1 {
            participant_paths.pop().unwrap()
        } else {
            Vec::new()
        };
        moves.push(Move {
            action: Action { parts },
            successor,
            choice_path,
        });
        emitted += 1;
        if emitted >= PAR_SUBSET_CAP {
            break;
        }
    }

    // Cross-agent rendezvous.
    for (i, (sender, si)) in agent_offers.iter().enumerate() {
        for send in &si.sends {
            for (j, (receiver, rj)) in agent_offers.iter().enumerate() {
                if i == j {
                    continue;
                }
                for recv in &rj.recvs {
                    if recv.channel == send.channel && recv.vars.len() == send.args.len() {
                        let bindings: BTreeMap<Name, Expr> = recv
                            .vars
                            .iter()
                            .cloned()
                            .zip(send.args.iter().cloned())
                            .collect();
                        let recv_succ = substitute(&recv.succ, &bindings);
                        let successor = config
                            .replace_agent(*sender, send.succ.clone())
                            .replace_agent(*receiver, recv_succ);
                        let choice_path = if recv.path.is_empty() {
                            send.path.clone()
                        } else if send.path.is_empty() {
                            recv.path.clone()
                        } else {
                            Vec::new()
                        };
                        moves.push(Move {
                            action: Action {
                                parts: vec![(
                                    *sender,
                                    SimpleLabel::Comm {
                                        channel: send.channel.clone(),
                                    },
                                )],
                            },
                            successor,
                            choice_path,
                        });
                    }
                }
            }
        }
    }

    moves
}

/// Commit one enabled action. The action must come from `enabled` on this
/// exact configuration; anything stale is an error.
pub fn step(config: &Config, action: &Action) -> Result<Config, LtsError> {
    for m in enabled(config) {
        if m.action == *action {
            return Ok(m.successor);
        }
    }
    Err(LtsError::IllegalAction)
}

/// Run without optimization: repeatedly pick uniformly at random among the
/// enabled steps until nothing is enabled or the step budget runs out.
/// Deterministic for a fixed seed.
pub fn run_reactive(config: &Config, max_steps: usize, seed: u64) -> Vec<(Action, Config)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();
    let mut cur = config.clone();
    for _ in 0..max_steps {
        let moves = enabled(&cur);
        if moves.is_empty() {
            break;
        }
        let pick = rng.gen_range(0..moves.len());
        let m = moves.into_iter().nth(pick).unwrap();
        cur = m.successor.clone();
        trace.push((m.action, m.successor));
    }
    trace
}

/// Real cost of one label under a cost table.
pub fn label_cost(
    label: &SimpleLabel,
    table: &CostTable,
    registry: &MetricRegistry,
    metric: Option<&str>,
    defs: &DefTable,
) -> Result<CostValue, CostError> {
    match label {
        SimpleLabel::Silent => Ok(CostValue::ZERO),
        SimpleLabel::Named { negated: true, .. } => Ok(CostValue::ZERO),
        SimpleLabel::Named {
            atomic_body: Some(body),
            ..
        } => expr_cost_with(body, table, registry, metric, defs),
        SimpleLabel::Named { name, .. } => table.lookup(name),
        SimpleLabel::Comm { channel } => table.lookup(channel),
        SimpleLabel::CostProbe { body } => {
            let mut acc = CostValue::ZERO;
            for child in body.iter() {
                acc = acc + expr_cost_with(child, table, registry, metric, defs)?;
            }
            Ok(acc)
        }
    }
}

/// Real cost of a whole action: the sum over its parts.
pub fn action_cost(
    action: &Action,
    table: &CostTable,
    registry: &MetricRegistry,
    metric: Option<&str>,
    defs: &DefTable,
) -> Result<CostValue, CostError> {
    let mut acc = CostValue::ZERO;
    for (_, label) in &action.parts {
        acc = acc + label_cost(label, table, registry, metric, defs)?;
    }
    Ok(acc)
}

/// One trace line per action part: `step-index agent-id label cost`,
/// tab-separated.
pub fn format_trace(
    trace: &[(Action, Config)],
    table: &CostTable,
    registry: &MetricRegistry,
    defs: &DefTable,
) -> String {
    let mut out = String::new();
    for (idx, (action, _)) in trace.iter().enumerate() {
        for (agent, label) in &action.parts {
            let cost = label_cost(label, table, registry, None, defs)
                .map(|c| c.to_string())
                .unwrap_or_else(|_| "?".to_string());
            out.push_str(&format!("{}\t{}\t{}\t{}\n", idx, agent, label, cost));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Definition;

    fn defs() -> Arc<DefTable> {
        Arc::new(DefTable::new())
    }

    fn named(name: &str) -> SimpleLabel {
        SimpleLabel::Named {
            name: Name::new(name),
            negated: false,
            atomic_body: None,
        }
    }

    #[test]
    fn seq_exposes_its_head() {
        let c = Config::single(Expr::seq(Expr::simple("a"), vec![Expr::Epsilon]), defs()).unwrap();
        let moves = enabled(&c);
        assert_eq!(moves.len(), 1);
        assert_eq!(moves[0].action.parts, vec![(AgentId(0), named("a"))]);
        assert!(moves[0].successor.is_terminal());
    }

    #[test]
    fn bottom_offers_nothing() {
        let c = Config::single(Expr::Bottom, defs()).unwrap();
        assert!(enabled(&c).is_empty());
        assert!(run_reactive(&c, 10, 7).is_empty());
    }

    #[test]
    fn rendezvous_binds_the_receiver() {
        let sender = Expr::Send {
            channel: Name::new("ch"),
            args: vec![Expr::Epsilon],
        };
        let receiver = Expr::seq(
            Expr::Receive {
                channel: Name::new("ch"),
                vars: vec![Name::new("x")],
            },
            vec![Expr::var("x")],
        );
        let c = Config::new(
            vec![(AgentId(0), sender), (AgentId(1), receiver)],
            defs(),
        )
        .unwrap();
        let moves = enabled(&c);
        assert_eq!(moves.len(), 1);
        assert_eq!(
            moves[0].action.parts,
            vec![(
                AgentId(0),
                SimpleLabel::Comm {
                    channel: Name::new("ch")
                }
            )]
        );
        // receiver continues with x bound to eps, which terminates it
        assert!(moves[0].successor.is_terminal());
    }

    #[test]
    fn blocked_general_choice_branch_excluded() {
        let e = Expr::GenChoice(vec![
            (CostWeight::Probability(0.5), Expr::simple("a")),
            (CostWeight::Probability(0.5), Expr::Bottom),
        ]);
        let c = Config::single(e, defs()).unwrap();
        let moves = enabled(&c);
        assert_eq!(moves.len(), 1);
        assert_eq!(moves[0].action.parts, vec![(AgentId(0), named("a"))]);
        assert_eq!(moves[0].choice_path.len(), 1);
        assert_eq!(moves[0].choice_path[0].kind, ChoiceKind::Gen);
        assert_eq!(moves[0].choice_path[0].branch, 0);
    }

    #[test]
    fn step_commits_and_rejects_stale_actions() {
        let c = Config::single(Expr::seq(Expr::simple("a"), vec![Expr::simple("b")]), defs())
            .unwrap();
        let a = Action {
            parts: vec![(AgentId(0), named("a"))],
        };
        let next = step(&c, &a).unwrap();
        assert_eq!(
            next.agent_expr(AgentId(0)),
            Some(&Expr::simple("b"))
        );
        // `a` is no longer enabled after the step
        assert_eq!(step(&next, &a), Err(LtsError::IllegalAction));
    }

    #[test]
    fn definition_call_expands_on_the_way() {
        let mut table = DefTable::new();
        table
            .insert(Definition::new("f", vec![], Expr::Epsilon, false).unwrap())
            .unwrap();
        let c = Config::single(
            Expr::seq(Expr::simple("go"), vec![Expr::proc_call("f", vec![])]),
            Arc::new(table),
        )
        .unwrap();
        let moves = enabled(&c);
        assert_eq!(moves.len(), 1);
        let after = &moves[0].successor;
        // f expands to eps, so the agent is done after one step
        assert!(after.is_terminal() || enabled(after).is_empty());
    }

    #[test]
    fn force_once_body_runs_exactly_once() {
        let mut table = DefTable::new();
        table
            .insert(
                Definition::new(
                    "f",
                    vec![],
                    Expr::seq(Expr::simple("a"), vec![Expr::Epsilon]),
                    false,
                )
                .unwrap(),
            )
            .unwrap();
        let c = Config::single(
            Expr::ProcCall {
                name: Name::new("f"),
                args: vec![],
                force_once: true,
            },
            Arc::new(table),
        )
        .unwrap();
        let trace = run_reactive(&c, 10, 1);
        assert_eq!(trace.len(), 1);
        assert!(trace.last().unwrap().1.is_terminal());
    }

    #[test]
    fn negated_call_of_undefined_name_never_fires() {
        // `free` is undefined, so the positive call is always enabled and the
        // negation never fires.
        let c = Config::single(Expr::negated("free"), defs()).unwrap();
        assert!(enabled(&c).is_empty());
    }

    #[test]
    fn negated_call_fires_on_blocked_definition() {
        let mut table = DefTable::new();
        table
            .insert(Definition::new("jam", vec![], Expr::Bottom, false).unwrap())
            .unwrap();
        let defs = Arc::new(table);
        let positive = Config::single(Expr::simple("jam"), defs.clone()).unwrap();
        assert!(enabled(&positive).is_empty());
        let negative = Config::single(Expr::negated("jam"), defs).unwrap();
        let moves = enabled(&negative);
        assert_eq!(moves.len(), 1);
        assert!(matches!(
            moves[0].action.parts[0].1,
            SimpleLabel::Named { negated: true, .. }
        ));
    }

    #[test]
    fn reactive_chain_is_deterministic() {
        let e = Expr::seq(
            Expr::simple("a"),
            vec![Expr::seq(Expr::simple("b"), vec![Expr::Epsilon])],
        );
        let c = Config::single(e, defs()).unwrap();
        let t1 = run_reactive(&c, 10, 42);
        let t2 = run_reactive(&c, 10, 42);
        assert_eq!(t1.len(), 2);
        assert_eq!(t1.iter().map(|(a, _)| a.clone()).collect::<Vec<_>>(),
                   t2.iter().map(|(a, _)| a.clone()).collect::<Vec<_>>());
        let labels: Vec<String> = t1.iter().map(|(a, _)| a.to_string()).collect();
        assert_eq!(labels, vec!["0:a", "0:b"]);
        assert!(t1.last().unwrap().1.is_terminal());
    }

    #[test]
    fn par_of_two_agents_offers_joint_and_interleaved() {
        let c = Config::new(
            vec![
                (AgentId(0), Expr::simple("a")),
                (AgentId(1), Expr::simple("b")),
            ],
            defs(),
        )
        .unwrap();
        let moves = enabled(&c);
        // {a}, {b}, {a,b}
        assert_eq!(moves.len(), 3);
        for seed in 0..20u64 {
            let trace = run_reactive(&c, 10, seed);
            assert!(trace.len() == 1 || trace.len() == 2);
            let mut labels: Vec<String> = trace
                .iter()
                .flat_map(|(a, _)| a.parts.iter().map(|(_, l)| l.to_string()))
                .collect();
            labels.sort();
            assert_eq!(labels, vec!["a", "b"]);
            assert!(trace.last().unwrap().1.is_terminal());
        }
    }

    #[test]
    fn par_subset_within_one_agent() {
        let e = Expr::Par(vec![Expr::simple("a"), Expr::simple("b")]);
        let c = Config::single(e, defs()).unwrap();
        let moves = enabled(&c);
        assert_eq!(moves.len(), 3);
        let sizes: Vec<usize> = moves.iter().map(|m| m.action.parts.len()).collect();
        assert!(sizes.contains(&1));
        assert!(sizes.contains(&2));
    }

    #[test]
    fn self_communication_within_one_agent() {
        let e = Expr::Par(vec![
            Expr::Send {
                channel: Name::new("c"),
                args: vec![],
            },
            Expr::seq(
                Expr::Receive {
                    channel: Name::new("c"),
                    vars: vec![],
                },
                vec![Expr::simple("done")],
            ),
        ]);
        let c = Config::single(e, defs()).unwrap();
        let moves = enabled(&c);
        assert_eq!(moves.len(), 1);
        assert!(matches!(moves[0].action.parts[0].1, SimpleLabel::Comm { .. }));
    }

    #[test]
    fn rendezvous_conserves_send_receive_pairs() {
        let sender = Expr::seq(
            Expr::Send {
                channel: Name::new("c"),
                args: vec![Expr::Epsilon],
            },
            vec![Expr::simple("after")],
        );
        let receiver = Expr::seq(
            Expr::Receive {
                channel: Name::new("c"),
                vars: vec![Name::new("x")],
            },
            vec![Expr::simple("got")],
        );
        let c = Config::new(
            vec![(AgentId(0), sender), (AgentId(1), receiver)],
            defs(),
        )
        .unwrap();
        let count = |cfg: &Config, pred: &dyn Fn(&Expr) -> bool| -> usize {
            let mut n = 0;
            for (_, e) in cfg.agents() {
                let mut stack = vec![e];
                while let Some(x) = stack.pop() {
                    if pred(x) {
                        n += 1;
                    }
                    match x {
                        Expr::Seq { head, tail } => {
                            stack.push(head);
                            stack.extend(tail.iter());
                        }
                        Expr::Par(cs) => stack.extend(cs.iter()),
                        _ => {}
                    }
                }
            }
            n
        };
        let is_send = |e: &Expr| matches!(e, Expr::Send { .. });
        let is_recv = |e: &Expr| matches!(e, Expr::Receive { .. });
        assert_eq!(count(&c, &is_send), 1);
        assert_eq!(count(&c, &is_recv), 1);
        let moves = enabled(&c);
        let comm = moves
            .iter()
            .find(|m| matches!(m.action.parts[0].1, SimpleLabel::Comm { .. }))
            .expect("rendezvous enabled");
        assert_eq!(count(&comm.successor, &is_send), 0);
        assert_eq!(count(&comm.successor, &is_recv), 0);
    }

    #[test]
    fn trace_format_is_tab_separated() {
        let mut t = CostTable::new();
        t.set("a", 2.0);
        let c = Config::single(Expr::seq(Expr::simple("a"), vec![Expr::Epsilon]), defs()).unwrap();
        let trace = run_reactive(&c, 5, 0);
        let text = format_trace(&trace, &t, &MetricRegistry::new(), &DefTable::new());
        assert_eq!(text, "0\t0\ta\t2\n");
    }

    #[test]
    fn stepping_preserves_closedness() {
        let receiver = Expr::seq(
            Expr::Receive {
                channel: Name::new("c"),
                vars: vec![Name::new("x")],
            },
            vec![Expr::var("x"), Expr::var("x")],
        );
        let sender = Expr::Send {
            channel: Name::new("c"),
            args: vec![Expr::seq(Expr::simple("payload"), vec![Expr::Epsilon])],
        };
        let c = Config::new(
            vec![(AgentId(0), sender), (AgentId(1), receiver)],
            defs(),
        )
        .unwrap();
        let mut cur = c;
        for _ in 0..10 {
            let moves = enabled(&cur);
            if moves.is_empty() {
                break;
            }
            cur = moves[0].successor.clone();
            for (_, e) in cur.agents() {
                assert!(e.free_vars().is_empty());
            }
        }
    }
}
