//! The meta-search loop: init, then goal / select / examine / execute /
//! update cycles. `k` bounds the deliberation depth, `b` the branching
//! factor, `n` the number of steps executed per cycle (0 = offline), and the
//! interest scope Omega decides which labels stay visible; everything outside
//! it is masked by silent actions whose cost is zero (weak congruence) or
//! estimated (strong congruence).

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ast::{DefTable, Expr, Name};
use crate::cost::{
    aggregate, rl_update, Aggregated, Aggregator, CostError, CostTable, CostValue, CostWeight,
    MetricRegistry, OperatorKind, RlTransition,
};
use crate::lts::{
    action_cost, enabled, Action, ChoiceKind, ChoiceStep, Config, LtsError, Move, SimpleLabel,
};

// ---------------------------------------------------------------------------
// Extents: naturals extended with infinity

/// A search parameter value: a natural number or infinity. Infinity is
/// absorbing under increment and decrement and orders above every natural.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extent {
    Finite(u64),
    Infinite,
}

impl Extent {
    pub const ZERO: Extent = Extent::Finite(0);

    pub fn is_zero(self) -> bool {
        self == Extent::Finite(0)
    }

    pub fn succ(self) -> Extent {
        match self {
            Extent::Finite(n) => Extent::Finite(n + 1),
            Extent::Infinite => Extent::Infinite,
        }
    }

    /// Decrement, saturating at zero; infinity stays infinity.
    pub fn pred(self) -> Extent {
        match self {
            Extent::Finite(n) => Extent::Finite(n.saturating_sub(1)),
            Extent::Infinite => Extent::Infinite,
        }
    }

    pub fn finite(self) -> Option<u64> {
        match self {
            Extent::Finite(n) => Some(n),
            Extent::Infinite => None,
        }
    }
}

impl PartialOrd for Extent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Extent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self, other) {
            (Extent::Finite(a), Extent::Finite(b)) => a.cmp(b),
            (Extent::Finite(_), Extent::Infinite) => std::cmp::Ordering::Less,
            (Extent::Infinite, Extent::Finite(_)) => std::cmp::Ordering::Greater,
            (Extent::Infinite, Extent::Infinite) => std::cmp::Ordering::Equal,
        }
    }
}

impl fmt::Display for Extent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extent::Finite(n) => write!(f, "{}", n),
            Extent::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Extent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inf" | "infinity" | "∞" => Ok(Extent::Infinite),
            n => n
                .parse::<u64>()
                .map(Extent::Finite)
                .map_err(|_| format!("not a natural number or `inf`: `{s}`")),
        }
    }
}

// ---------------------------------------------------------------------------
// Goals

/// Step budget for one goal evaluation. When it runs out the evaluation is
/// abandoned and counts as "not reached".
pub struct GoalBudget {
    remaining: u64,
    pub expired: bool,
}

impl GoalBudget {
    pub fn new(quantum: u64) -> Self {
        GoalBudget {
            remaining: quantum,
            expired: false,
        }
    }

    /// Spend budget; returns false (and marks expiry) once exhausted.
    pub fn spend(&mut self, units: u64) -> bool {
        if self.remaining < units {
            self.remaining = 0;
            self.expired = true;
            return false;
        }
        self.remaining -= units;
        true
    }
}

#[derive(Clone)]
pub enum GoalKind {
    /// Every agent has terminated (reduced to epsilon).
    Terminal,
    /// Some agent's remaining expression equals this one structurally.
    MatchExpr(Expr),
    /// Arbitrary user predicate, metered by the goal budget.
    Predicate(Arc<dyn Fn(&mut GoalBudget, &Config) -> bool + Send + Sync>),
}

#[derive(Clone)]
pub struct Goal {
    pub kind: GoalKind,
    pub time_quantum: u64,
}

impl fmt::Debug for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            GoalKind::Terminal => "Terminal".to_string(),
            GoalKind::MatchExpr(e) => format!("MatchExpr({})", crate::parser::print(e)),
            GoalKind::Predicate(_) => "Predicate".to_string(),
        };
        write!(f, "Goal({kind}, quantum={})", self.time_quantum)
    }
}

impl Default for Goal {
    fn default() -> Self {
        Goal {
            kind: GoalKind::Terminal,
            time_quantum: DEFAULT_TIME_QUANTUM,
        }
    }
}

/// Does the expression reduce to epsilon by silent definition expansion
/// alone? Detects termination through trailing process calls like a goal
/// vertex defined as epsilon.
fn expr_terminated(e: &Expr, defs: &DefTable, depth: usize) -> bool {
    match e {
        Expr::Epsilon => true,
        Expr::ProcCall { .. } => {
            if depth >= 64 {
                return false;
            }
            match crate::ast::expand_call(e, defs) {
                Ok(body) => expr_terminated(&body, defs, depth + 1),
                Err(_) => false,
            }
        }
        Expr::Par(children) => children.iter().all(|c| expr_terminated(c, defs, depth)),
        _ => false,
    }
}

/// Config-level termination through silent expansion.
pub fn config_terminated(config: &Config) -> bool {
    config
        .agents()
        .iter()
        .all(|(_, e)| expr_terminated(e, config.defs(), 0))
}

/// Evaluate the goal under its time quantum; expiry counts as false.
pub fn goal_eval(goal: &Goal, config: &Config) -> bool {
    let mut budget = GoalBudget::new(goal.time_quantum);
    match &goal.kind {
        GoalKind::Terminal => budget.spend(1) && config_terminated(config),
        GoalKind::MatchExpr(target) => {
            budget.spend(1)
                && config
                    .agents()
                    .iter()
                    .any(|(_, e)| crate::ast::structural_equal(e, target))
        }
        GoalKind::Predicate(p) => {
            let hit = p(&mut budget, config);
            hit && !budget.expired
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration of one search loop

pub type EpsEstimator = Arc<dyn Fn(&Config) -> f64 + Send + Sync>;

pub const DEFAULT_ITERATION_BUDGET: u64 = 10_000;
pub const DEFAULT_TIME_QUANTUM: u64 = 10_000;
const SELECT_NODE_CAP: usize = 1 << 20;

/// The search-state record of one agent's loop.
#[derive(Clone)]
pub struct KOmegaConfig {
    /// Deliberation depth per select.
    pub k: Extent,
    /// Branching factor: children kept per node; the rest are masked.
    pub b: Extent,
    /// Steps executed per cycle; 0 = offline.
    pub n: Extent,
    /// Interest scope: labels outside `alphabet ∪ omega` are masked. `None`
    /// means the whole universe alphabet.
    pub omega: Option<BTreeSet<Name>>,
    /// The agent's own alphabet; `None` means everything.
    pub alphabet: Option<BTreeSet<Name>>,
    pub gp: bool,
    pub reinf: bool,
    pub strongcong: bool,
    pub update: bool,
    pub goal: Goal,
    pub costs: CostTable,
    pub metrics: MetricRegistry,
    /// Active metric set; `None` is the standard set.
    pub metric: Option<String>,
    pub agg: Aggregator,
    /// Estimated cost of a strongly congruent silent action, given the
    /// configuration it hides. Defaults to zero when absent.
    pub eps_estimator: Option<EpsEstimator>,
    pub seed: u64,
    pub iteration_budget: u64,
    /// Search-cost threshold driving the self-modification of `k`; armed to
    /// ten times the first iteration's search cost when not set by the user.
    pub search_threshold: Option<f64>,
    /// Also adjust `b` on threshold crossings, not only `k`.
    pub adjust_b_on_threshold: bool,
    /// Merge duplicate configurations reached by different paths.
    pub dedupe: bool,
    /// Keep looping after a goal (reset to the initial configuration).
    pub reinit_on_goal: bool,
    /// Accumulated search cost (node expansions) across the run.
    pub search_cost_meter: f64,
    /// Test hook standing in for an environment that invalidates plans
    /// mid-execution; called before each executed step.
    pub interruptor: Option<Arc<dyn Fn(&Config, u64) -> bool + Send + Sync>>,
    /// Set by init when cond_init forced a re-initialization.
    pub reinit_triggered: bool,
}

impl fmt::Debug for KOmegaConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "KOmegaConfig(k={}, b={}, n={}, gp={}, reinf={}, strongcong={}, update={}, seed={})",
            self.k, self.b, self.n, self.gp, self.reinf, self.strongcong, self.update, self.seed
        )
    }
}

impl Default for KOmegaConfig {
    fn default() -> Self {
        KOmegaConfig {
            k: Extent::Infinite,
            b: Extent::Infinite,
            n: Extent::Infinite,
            omega: None,
            alphabet: None,
            gp: false,
            reinf: false,
            strongcong: false,
            update: false,
            goal: Goal::default(),
            costs: CostTable::new(),
            metrics: MetricRegistry::new(),
            metric: None,
            agg: Aggregator::Addition,
            eps_estimator: None,
            seed: 0,
            iteration_budget: DEFAULT_ITERATION_BUDGET,
            search_threshold: None,
            adjust_b_on_threshold: false,
            dedupe: false,
            reinit_on_goal: false,
            search_cost_meter: 0.0,
            interruptor: None,
            reinit_triggered: false,
        }
    }
}

impl KOmegaConfig {
    /// Is a label name visible to this agent's optimization (in A ∪ Omega)?
    fn visible(&self, name: &Name) -> bool {
        match (&self.alphabet, &self.omega) {
            (None, _) | (_, None) => true,
            (Some(a), Some(o)) => a.contains(name) || o.contains(name),
        }
    }

    /// Is a label in A − Omega (own but uninteresting, costed as zero)?
    fn own_but_ignored(&self, name: &Name) -> bool {
        match (&self.alphabet, &self.omega) {
            (Some(a), Some(o)) => a.contains(name) && !o.contains(name),
            _ => false,
        }
    }

    fn estimate(&self, config: &Config) -> f64 {
        if self.strongcong {
            self.eps_estimator.as_ref().map(|h| h(config)).unwrap_or(0.0)
        } else {
            0.0
        }
    }
}

/// User-supplied values applied over the defaults in the init phase.
#[derive(Clone, Default)]
pub struct Overrides {
    pub k: Option<Extent>,
    pub b: Option<Extent>,
    pub n: Option<Extent>,
    pub omega: Option<BTreeSet<Name>>,
    pub alphabet: Option<BTreeSet<Name>>,
    pub gp: Option<bool>,
    pub reinf: Option<bool>,
    pub strongcong: Option<bool>,
    pub update: Option<bool>,
    pub goal: Option<Goal>,
    pub costs: Option<CostTable>,
    pub metric: Option<String>,
    pub metrics: Option<MetricRegistry>,
    pub agg: Option<Aggregator>,
    pub eps_estimator: Option<EpsEstimator>,
    pub seed: Option<u64>,
    pub iteration_budget: Option<u64>,
    pub search_threshold: Option<f64>,
    pub adjust_b_on_threshold: Option<bool>,
    pub dedupe: Option<bool>,
    pub reinit_on_goal: Option<bool>,
    /// Initial program; generated randomly (and gp set) when absent.
    pub program: Option<Expr>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid override: {0}")]
    InvalidOverride(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Lts(#[from] LtsError),
    #[error("iteration budget exhausted before the goal was reached")]
    BudgetExhausted(Box<RunResult>),
}

fn mix(a: u64, b: u64, c: u64) -> u64 {
    // splitmix64 over the combined words; used to key deterministic
    // tie-breaking to node identity rather than visit order.
    let mut z = a
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(b.rotate_left(17))
        .wrapping_add(c.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn random_expr(rng: &mut ChaCha8Rng, names: &[Name], depth: usize) -> Expr {
    if names.is_empty() {
        return Expr::Epsilon;
    }
    let leaf = |rng: &mut ChaCha8Rng| {
        let name = names[rng.gen_range(0..names.len())].clone();
        Expr::SimpleCall {
            name,
            args: vec![],
            negated: false,
        }
    };
    if depth == 0 {
        return leaf(rng);
    }
    match rng.gen_range(0..5) {
        0 => leaf(rng),
        1 => Expr::seq(leaf(rng), vec![random_expr(rng, names, depth - 1)]),
        2 => Expr::CostChoice(vec![
            random_expr(rng, names, depth - 1),
            random_expr(rng, names, depth - 1),
        ]),
        3 => Expr::GenChoice(vec![
            (CostWeight::Probability(0.5), random_expr(rng, names, depth - 1)),
            (CostWeight::Probability(0.5), random_expr(rng, names, depth - 1)),
        ]),
        _ => Expr::Par(vec![
            random_expr(rng, names, depth - 1),
            random_expr(rng, names, depth - 1),
        ]),
    }
}

/// Initialization: defaults, then user overrides; a missing program is
/// generated randomly in genetic-programming style (setting the gp flag), and
/// missing costs are randomized when reinforcement learning is requested.
/// cond_init (program bottom, or k = n = 0) forces a re-initialization of the
/// offending parameters.
pub fn init(
    overrides: Overrides,
    defs: &Arc<DefTable>,
) -> Result<(KOmegaConfig, Config), RunError> {
    let mut cfg = KOmegaConfig::default();
    if let Some(budget) = overrides.iteration_budget {
        if budget == 0 {
            return Err(RunError::InvalidOverride("iteration budget must be >= 1".into()));
        }
        cfg.iteration_budget = budget;
    }
    if let Some(goal) = overrides.goal {
        if goal.time_quantum == 0 {
            return Err(RunError::InvalidOverride("time quantum must be >= 1".into()));
        }
        cfg.goal = goal;
    }
    if let Some(metrics) = overrides.metrics {
        cfg.metrics = metrics;
    }
    if let Some(metric) = overrides.metric {
        if !cfg.metrics.has_set(&metric) {
            return Err(RunError::InvalidOverride(format!(
                "unknown metric set `{metric}`"
            )));
        }
        cfg.metric = Some(metric);
    }
    cfg.k = overrides.k.unwrap_or(cfg.k);
    cfg.b = overrides.b.unwrap_or(cfg.b);
    cfg.n = overrides.n.unwrap_or(cfg.n);
    cfg.omega = overrides.omega;
    cfg.alphabet = overrides.alphabet;
    cfg.reinf = overrides.reinf.unwrap_or(cfg.reinf);
    cfg.strongcong = overrides.strongcong.unwrap_or(cfg.strongcong);
    cfg.update = overrides.update.unwrap_or(cfg.update);
    cfg.agg = overrides.agg.unwrap_or(cfg.agg);
    cfg.eps_estimator = overrides.eps_estimator;
    cfg.seed = overrides.seed.unwrap_or(cfg.seed);
    cfg.search_threshold = overrides.search_threshold;
    cfg.adjust_b_on_threshold = overrides.adjust_b_on_threshold.unwrap_or(false);
    cfg.dedupe = overrides.dedupe.unwrap_or(false);
    cfg.reinit_on_goal = overrides.reinit_on_goal.unwrap_or(false);

    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x1217, 0));
    let name_pool: Vec<Name> = match &cfg.alphabet {
        Some(a) if !a.is_empty() => a.iter().cloned().collect(),
        _ => {
            let from_defs: Vec<Name> = defs.iter().map(|d| d.name.clone()).collect();
            if from_defs.is_empty() {
                (0..4).map(|i| Name::new(format!("act{i}"))).collect()
            } else {
                from_defs
            }
        }
    };

    let mut program = match overrides.program {
        Some(p) => {
            cfg.gp = overrides.gp.unwrap_or(false);
            p
        }
        None => {
            cfg.gp = overrides.gp.unwrap_or(true);
            random_expr(&mut rng, &name_pool, 2)
        }
    };

    match overrides.costs {
        Some(costs) => cfg.costs = costs,
        None => {
            if cfg.reinf {
                let mut t = CostTable::new();
                for name in &name_pool {
                    t.set(name.clone(), rng.gen_range(0.0..1.0));
                }
                cfg.costs = t;
            }
        }
    }

    // cond_init: re-initialize when the program is bottom or both k and n
    // collapsed to zero.
    if program.normalize() == Expr::Bottom {
        cfg.reinit_triggered = true;
        program = random_expr(&mut rng, &name_pool, 2);
        cfg.gp = true;
    }
    if cfg.k.is_zero() && cfg.n.is_zero() {
        cfg.reinit_triggered = true;
        cfg.k = Extent::Infinite;
        cfg.n = Extent::Infinite;
    }

    let config = Config::single(program, defs.clone())?;
    Ok((cfg, config))
}

// ---------------------------------------------------------------------------
// Search tree

/// How an edge got hidden from the optimization view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaskKind {
    /// Beyond the branching factor.
    Width,
    /// Label outside the agent's alphabet and interest scope.
    Scope,
}

#[derive(Clone, Debug)]
pub struct TreeEdge {
    pub action: Action,
    pub choice_path: Vec<ChoiceStep>,
    /// Real cost charged when the action executes.
    pub true_cost: f64,
    /// Cost seen by the examine backup (scope masking applied).
    pub opt_cost: f64,
    pub target: usize,
    /// Survives examine's pruning (on the selected branch of every choice).
    pub kept: bool,
}

/// An edge the optimization knows exists but cannot see: it contributes an
/// estimated cost to the backup and is neither executable nor expandable.
#[derive(Clone, Debug)]
pub struct HiddenEdge {
    pub choice_path: Vec<ChoiceStep>,
    pub est_cost: f64,
    pub mask: MaskKind,
}

#[derive(Clone, Debug)]
pub struct TreeNode {
    pub config: Config,
    pub parent: Option<(usize, usize)>,
    pub children: Vec<TreeEdge>,
    pub hidden: Vec<HiddenEdge>,
    pub expanded: bool,
    pub is_goal: bool,
    /// Dominated duplicate or dead end; never selected or expanded.
    pub dead: bool,
    /// Real cost accumulated from the root.
    pub g: f64,
    /// Leaf estimate: 0 for goals, the silent-cost estimate at the horizon,
    /// +inf for stuck dead ends.
    pub intrinsic: f64,
    /// Backed-up value from the last examine.
    pub value: f64,
    pub depth: u32,
    /// Stable identity for tie-break randomness.
    pub path_key: u64,
}

#[derive(Clone, Copy)]
struct FrontierEntry {
    f: f64,
    tie: u64,
    node: usize,
}

impl PartialEq for FrontierEntry {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f && self.tie == other.tie && self.node == other.node
    }
}

impl Eq for FrontierEntry {}

impl PartialOrd for FrontierEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FrontierEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap; invert so the smallest f pops first.
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.tie.cmp(&self.tie))
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// The select-phase tree: configurations as nodes, actions as edges.
#[derive(Clone)]
pub struct SearchTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
    /// Expansion root for the next select (the paper's "current node").
    pub current: usize,
    dedupe_map: BTreeMap<String, f64>,
    frontier: BinaryHeap<FrontierEntry>,
}

impl SearchTree {
    pub fn new(root_config: Config) -> Self {
        let root = TreeNode {
            config: root_config,
            parent: None,
            children: Vec::new(),
            hidden: Vec::new(),
            expanded: false,
            is_goal: false,
            dead: false,
            g: 0.0,
            intrinsic: 0.0,
            value: 0.0,
            depth: 0,
            path_key: 0x5eed,
        };
        SearchTree {
            nodes: vec![root],
            root: 0,
            current: 0,
            dedupe_map: BTreeMap::new(),
            frontier: BinaryHeap::new(),
        }
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn is_live_leaf(&self, id: usize) -> bool {
        let n = &self.nodes[id];
        !n.expanded && !n.dead && n.intrinsic.is_finite()
    }

    fn push_frontier(&mut self, id: usize, seed: u64) {
        let n = &self.nodes[id];
        let f = n.g + n.intrinsic;
        if f.is_finite() {
            let tie = mix(seed, n.path_key, 0xf05);
            self.frontier.push(FrontierEntry { f, tie, node: id });
        }
    }

    /// Best live leaf by g + estimate, skipping stale heap entries.
    fn frontier_best(&mut self) -> Option<usize> {
        while let Some(entry) = self.frontier.peek().copied() {
            let n = &self.nodes[entry.node];
            let current_f = n.g + n.intrinsic;
            if self.is_live_leaf(entry.node) && current_f == entry.f {
                return Some(entry.node);
            }
            self.frontier.pop();
        }
        None
    }

    /// Path of edges from the root to a node.
    pub fn path_to(&self, id: usize) -> Vec<(usize, usize)> {
        let mut path = Vec::new();
        let mut cur = id;
        while let Some((parent, edge)) = self.nodes[cur].parent {
            path.push((parent, edge));
            cur = parent;
        }
        path.reverse();
        path
    }
}

// ---------------------------------------------------------------------------
// Select

fn label_name(label: &SimpleLabel) -> Option<Name> {
    match label {
        SimpleLabel::Named { name, .. } => Some(name.clone()),
        SimpleLabel::Comm { channel } => Some(channel.clone()),
        SimpleLabel::CostProbe { .. } | SimpleLabel::Silent => None,
    }
}

/// Optimization-view cost of one move: own-but-ignored labels count zero,
/// invisible labels count their silent estimate. Returns `None` when every
/// label is invisible, meaning the whole edge must be hidden.
fn move_opt_cost(
    cfg: &KOmegaConfig,
    mv: &Move,
    true_costs: &BTreeMap<usize, f64>,
    idx: usize,
) -> Option<f64> {
    let mut any_visible = false;
    let mut acc = 0.0;
    for (_, label) in &mv.action.parts {
        match label_name(label) {
            None => {
                any_visible = true;
            }
            Some(name) => {
                if !cfg.visible(&name) {
                    acc += cfg.estimate(&mv.successor);
                } else {
                    any_visible = true;
                    if !cfg.own_but_ignored(&name) {
                        // visible and interesting: charge the real label cost
                        // (approximated by an even split of the action cost
                        // when several labels fire together).
                        let parts = mv.action.parts.len() as f64;
                        acc += true_costs[&idx] / parts;
                    }
                }
            }
        }
    }
    if any_visible {
        Some(acc)
    } else {
        None
    }
}

/// The select phase: expand the tree from the current node, `k` plies deep
/// and `b` children wide. Skipped entirely when k or b is zero. Children
/// beyond the branching factor or outside the agent's scope stay in the tree
/// as silent hidden edges with estimated (strong congruence) or zero (weak)
/// cost. Goal nodes become leaves. With the gp flag set, one extra child is
/// grown by crossover/mutation of frontier expressions and connected by a
/// silent zero-cost edge.
pub fn select(cfg: &mut KOmegaConfig, tree: &mut SearchTree) -> Result<(), RunError> {
    if cfg.k.is_zero() || cfg.b.is_zero() {
        return Ok(());
    }
    let base_depth = tree.nodes[tree.current].depth;
    let mut queue = VecDeque::new();
    queue.push_back(tree.current);
    let mut expanded_this_select = 0usize;

    while let Some(id) = queue.pop_front() {
        if tree.nodes[id].expanded || tree.nodes[id].dead || tree.nodes[id].is_goal {
            continue;
        }
        let rel_depth = (tree.nodes[id].depth - base_depth) as u64;
        if let Extent::Finite(k) = cfg.k {
            if rel_depth >= k {
                continue;
            }
        }
        if expanded_this_select >= SELECT_NODE_CAP {
            break;
        }

        let config = tree.nodes[id].config.clone();
        let moves = enabled(&config);
        cfg.search_cost_meter += 1.0;
        expanded_this_select += 1;
        tree.nodes[id].expanded = true;

        if moves.is_empty() {
            // Terminal or stuck: dead end unless it satisfies the goal, which
            // was checked at node creation.
            tree.nodes[id].expanded = false;
            tree.nodes[id].intrinsic = f64::INFINITY;
            tree.nodes[id].dead = true;
            continue;
        }

        // Real action costs, then the optimization view with masking.
        let mut true_costs = BTreeMap::new();
        for (i, m) in moves.iter().enumerate() {
            let c = action_cost(
                &m.action,
                &cfg.costs,
                &cfg.metrics,
                cfg.metric.as_deref(),
                config.defs(),
            )?;
            true_costs.insert(i, c.value());
        }

        let mut visible_moves = Vec::new();
        for (i, m) in moves.iter().enumerate() {
            match move_opt_cost(cfg, m, &true_costs, i) {
                Some(opt) => visible_moves.push((i, opt)),
                None => {
                    // Entire action is outside A ∪ Omega: a hidden edge.
                    tree.nodes[id].hidden.push(HiddenEdge {
                        choice_path: m.choice_path.clone(),
                        est_cost: cfg.estimate(&m.successor),
                        mask: MaskKind::Scope,
                    });
                }
            }
        }

        // Order candidates by real edge cost, ties broken by seeded draws
        // keyed to the node, then keep the first b.
        visible_moves.sort_by(|(i, _), (j, _)| {
            let (a, b) = (true_costs[i], true_costs[j]);
            a.total_cmp(&b)
                .then_with(|| {
                    mix(cfg.seed, tree.nodes[id].path_key, *i as u64)
                        .cmp(&mix(cfg.seed, tree.nodes[id].path_key, *j as u64))
                })
        });
        let keep = match cfg.b {
            Extent::Finite(b) => (b as usize).min(visible_moves.len()),
            Extent::Infinite => visible_moves.len(),
        };

        for (rank, (i, opt_cost)) in visible_moves.iter().enumerate() {
            let m = &moves[*i];
            if rank >= keep {
                tree.nodes[id].hidden.push(HiddenEdge {
                    choice_path: m.choice_path.clone(),
                    est_cost: if cfg.strongcong {
                        cfg.estimate(&m.successor)
                    } else {
                        0.0
                    },
                    mask: MaskKind::Width,
                });
                continue;
            }
            let child_id = attach_child(cfg, tree, id, m, true_costs[i], *opt_cost);
            if let Some(child_id) = child_id {
                queue.push_back(child_id);
            }
        }

        if cfg.gp && id == tree.current {
            grow_variation_child(cfg, tree, id);
        }
    }
    Ok(())
}

/// Create a child node for a move, handling goal marking, the silent-horizon
/// estimate, and duplicate detection. Returns the node id when the child is
/// live for further expansion.
fn attach_child(
    cfg: &mut KOmegaConfig,
    tree: &mut SearchTree,
    parent: usize,
    m: &Move,
    true_cost: f64,
    opt_cost: f64,
) -> Option<usize> {
    let g = tree.nodes[parent].g + true_cost;
    let depth = tree.nodes[parent].depth + 1;
    let edge_idx = tree.nodes[parent].children.len();
    let path_key = mix(tree.nodes[parent].path_key, 0xed6e, edge_idx as u64);
    let config = m.successor.clone();

    let is_goal = goal_eval(&cfg.goal, &config);
    let mut dead = false;
    if cfg.dedupe {
        let key = config.canonical_key();
        match tree.dedupe_map.get(&key) {
            Some(best_g) if *best_g <= g + 1e-12 => {
                dead = true;
            }
            _ => {
                tree.dedupe_map.insert(key, g);
            }
        }
    }

    let intrinsic = if is_goal {
        0.0
    } else if dead {
        f64::INFINITY
    } else {
        cfg.estimate(&config)
    };

    let node_id = tree.nodes.len();
    tree.nodes.push(TreeNode {
        config,
        parent: Some((parent, edge_idx)),
        children: Vec::new(),
        hidden: Vec::new(),
        expanded: false,
        is_goal,
        dead,
        g,
        intrinsic,
        value: intrinsic,
        depth,
        path_key,
    });
    tree.nodes[parent].children.push(TreeEdge {
        action: m.action.clone(),
        choice_path: m.choice_path.clone(),
        true_cost,
        opt_cost,
        target: node_id,
        kept: false,
    });
    if !dead {
        tree.push_frontier(node_id, cfg.seed);
    }
    if is_goal || dead {
        None
    } else {
        Some(node_id)
    }
}

/// Preorder subtree access for the variation operators.
fn get_subtree(e: &Expr, idx: &mut usize) -> Option<Expr> {
    if *idx == 0 {
        return Some(e.clone());
    }
    *idx -= 1;
    match e {
        Expr::Cost(cs) | Expr::Suppress(cs) | Expr::Par(cs) => {
            cs.iter().find_map(|c| get_subtree(c, idx))
        }
        Expr::CostChoice(cs) | Expr::AdvChoice(cs) => cs.iter().find_map(|c| get_subtree(c, idx)),
        Expr::GenChoice(cs) => cs.iter().find_map(|(_, c)| get_subtree(c, idx)),
        Expr::Send { args, .. } => args.iter().find_map(|c| get_subtree(c, idx)),
        Expr::SimpleCall { args, .. } | Expr::ProcCall { args, .. } => {
            args.iter().find_map(|c| get_subtree(c, idx))
        }
        Expr::Seq { head, tail } => get_subtree(head, idx)
            .or_else(|| tail.iter().find_map(|c| get_subtree(c, idx))),
        _ => None,
    }
}

fn replace_subtree(e: &Expr, idx: &mut usize, new: &Expr) -> Expr {
    if *idx == 0 {
        *idx = usize::MAX; // consumed
        return new.clone();
    }
    *idx -= 1;
    let rec_all = |cs: &[Expr], idx: &mut usize| -> Vec<Expr> {
        cs.iter().map(|c| replace_subtree(c, idx, new)).collect()
    };
    match e {
        Expr::Cost(cs) => Expr::Cost(rec_all(cs, idx)),
        Expr::Suppress(cs) => Expr::Suppress(rec_all(cs, idx)),
        Expr::Par(cs) => Expr::Par(rec_all(cs, idx)),
        Expr::CostChoice(cs) => Expr::CostChoice(rec_all(cs, idx)),
        Expr::AdvChoice(cs) => Expr::AdvChoice(rec_all(cs, idx)),
        Expr::GenChoice(cs) => Expr::GenChoice(
            cs.iter()
                .map(|(w, c)| (*w, replace_subtree(c, idx, new)))
                .collect(),
        ),
        Expr::Send { channel, args } => Expr::Send {
            channel: channel.clone(),
            args: rec_all(args, idx),
        },
        Expr::SimpleCall {
            name,
            args,
            negated,
        } => Expr::SimpleCall {
            name: name.clone(),
            args: rec_all(args, idx),
            negated: *negated,
        },
        Expr::ProcCall {
            name,
            args,
            force_once,
        } => Expr::ProcCall {
            name: name.clone(),
            args: rec_all(args, idx),
            force_once: *force_once,
        },
        Expr::Seq { head, tail } => {
            let new_head = replace_subtree(head, idx, new);
            Expr::Seq {
                head: Box::new(new_head),
                tail: rec_all(tail, idx),
            }
        }
        other => other.clone(),
    }
}

/// gp-mode variation: crossover (swap a uniformly chosen subtree with a
/// partner frontier expression) at rate 0.9, otherwise mutation (replace a
/// subtree by a small random expression over the visible names). The child
/// hangs off a silent zero-cost edge.
fn grow_variation_child(cfg: &mut KOmegaConfig, tree: &mut SearchTree, id: usize) {
    let node = &tree.nodes[id];
    let agents = node.config.agents();
    let Some((agent_id, base_expr)) = agents.first().map(|(a, e)| (*a, e.clone())) else {
        return;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, node.path_key, 0x69));
    let base_size = base_expr.size();
    let slot = rng.gen_range(0..base_size);

    let offspring = if rng.gen_range(0.0..1.0) < 0.9 && tree.nodes.len() > 1 {
        // crossover with another node's expression
        let partner_id = rng.gen_range(0..tree.nodes.len());
        let partner = tree.nodes[partner_id]
            .config
            .agent_expr(agent_id)
            .cloned()
            .unwrap_or(Expr::Epsilon);
        let mut pick = rng.gen_range(0..partner.size());
        let graft = get_subtree(&partner, &mut pick).unwrap_or(Expr::Epsilon);
        let mut at = slot;
        replace_subtree(&base_expr, &mut at, &graft)
    } else {
        let names: Vec<Name> = match (&cfg.alphabet, &cfg.omega) {
            (Some(a), Some(o)) => a.union(o).cloned().collect(),
            (Some(a), None) => a.iter().cloned().collect(),
            _ => base_expr.action_names().into_iter().collect(),
        };
        let graft = random_expr(&mut rng, &names, 2);
        let mut at = slot;
        replace_subtree(&base_expr, &mut at, &graft)
    };

    if offspring.free_vars().is_empty() {
        let mv = Move {
            action: Action {
                parts: vec![(agent_id, SimpleLabel::Silent)],
            },
            successor: match Config::new(
                node.config
                    .agents()
                    .iter()
                    .map(|(a, e)| {
                        if *a == agent_id {
                            (*a, offspring.clone())
                        } else {
                            (*a, e.clone())
                        }
                    })
                    .collect(),
                node.config.defs().clone(),
            ) {
                Ok(c) => c,
                Err(_) => return,
            },
            choice_path: Vec::new(),
        };
        attach_child(cfg, tree, id, &mv, 0.0, 0.0);
    }
}

// ---------------------------------------------------------------------------
// Examine

fn combinator_value(
    cfg: &KOmegaConfig,
    kind: ChoiceKind,
    values: &[f64],
    weights: Option<&[CostWeight]>,
) -> f64 {
    let op = match kind {
        ChoiceKind::Cost => OperatorKind::CostChoice,
        ChoiceKind::Adv => OperatorKind::AdvChoice,
        ChoiceKind::Gen => OperatorKind::GenChoice,
    };
    let comb = cfg
        .metrics
        .combinator(cfg.metric.as_deref(), op)
        .expect("active metric validated at init");
    let children: Vec<CostValue> = values.iter().map(|v| CostValue::new(*v)).collect();
    comb(&crate::cost::CombineInput {
        children: &children,
        weights,
    })
    .value()
}

/// Hierarchical backup of one node's outgoing entries through the choice
/// branches they resolve. Entries that resolve no further choice compete by
/// plain minimum (the agent schedules its own steps as cheaply as possible).
fn combine_entries(cfg: &KOmegaConfig, entries: &[(Vec<ChoiceStep>, f64)], level: usize) -> f64 {
    let mut direct: Vec<f64> = Vec::new();
    let mut groups: BTreeMap<usize, (ChoiceKind, Option<CostWeight>, Vec<(Vec<ChoiceStep>, f64)>)> =
        BTreeMap::new();
    let mut kind_seen: Option<ChoiceKind> = None;
    for (path, total) in entries {
        if path.len() <= level {
            direct.push(*total);
        } else {
            let step = &path[level];
            kind_seen.get_or_insert(step.kind);
            groups
                .entry(step.branch)
                .or_insert_with(|| (step.kind, step.weight, Vec::new()))
                .2
                .push((path.clone(), *total));
        }
    }
    let mut candidates: Vec<f64> = Vec::new();
    if !direct.is_empty() {
        candidates.push(direct.iter().fold(f64::INFINITY, |a, v| a.min(*v)));
    }
    if !groups.is_empty() {
        let kind = kind_seen.unwrap();
        let mut branch_values = Vec::new();
        let mut branch_weights = Vec::new();
        for (_, (_, weight, sub)) in &groups {
            branch_values.push(combine_entries(cfg, sub, level + 1));
            if let Some(w) = weight {
                branch_weights.push(*w);
            }
        }
        let weights = if branch_weights.len() == branch_values.len() {
            Some(branch_weights.as_slice())
        } else {
            None
        };
        candidates.push(combinator_value(cfg, kind, &branch_values, weights));
    }
    candidates.into_iter().fold(f64::INFINITY, f64::min)
}

fn backup(cfg: &KOmegaConfig, tree: &mut SearchTree, id: usize) -> f64 {
    if tree.nodes[id].dead {
        tree.nodes[id].value = f64::INFINITY;
        return f64::INFINITY;
    }
    if tree.nodes[id].is_goal || !tree.nodes[id].expanded {
        let v = tree.nodes[id].intrinsic;
        tree.nodes[id].value = v;
        return v;
    }
    let child_edges: Vec<(Vec<ChoiceStep>, usize, f64)> = tree.nodes[id]
        .children
        .iter()
        .map(|e| (e.choice_path.clone(), e.target, e.opt_cost))
        .collect();
    let mut entries: Vec<(Vec<ChoiceStep>, f64)> = Vec::new();
    for (path, target, opt_cost) in child_edges {
        let sub = backup(cfg, tree, target);
        entries.push((path, opt_cost + sub));
    }
    for h in &tree.nodes[id].hidden {
        entries.push((h.choice_path.clone(), h.est_cost));
    }
    let v = if entries.is_empty() {
        f64::INFINITY
    } else {
        combine_entries(cfg, &entries, 0)
    };
    tree.nodes[id].value = v;
    v
}

/// Pick the preferred outgoing edge of a node after backup: follow the
/// cheapest branch of cost choices, the most expensive of adversary choices,
/// the sampled branch of general choices, the cheapest total otherwise. Ties
/// break by seeded draws keyed to the node. Hidden edges are never picked.
fn pick_edge(cfg: &KOmegaConfig, tree: &SearchTree, id: usize) -> Option<usize> {
    let node = &tree.nodes[id];
    let entries: Vec<(usize, Vec<ChoiceStep>, f64)> = node
        .children
        .iter()
        .enumerate()
        .filter(|(_, e)| !tree.nodes[e.target].dead)
        .map(|(i, e)| {
            (
                i,
                e.choice_path.clone(),
                e.opt_cost + tree.nodes[e.target].value,
            )
        })
        .collect();
    if entries.is_empty() {
        return None;
    }
    pick_among(cfg, node.path_key, &entries, 0)
}

fn pick_among(
    cfg: &KOmegaConfig,
    node_key: u64,
    entries: &[(usize, Vec<ChoiceStep>, f64)],
    level: usize,
) -> Option<usize> {
    let direct: Vec<&(usize, Vec<ChoiceStep>, f64)> =
        entries.iter().filter(|(_, p, _)| p.len() <= level).collect();
    let mut groups: BTreeMap<usize, (ChoiceKind, Option<CostWeight>, Vec<(usize, Vec<ChoiceStep>, f64)>)> =
        BTreeMap::new();
    for e in entries {
        if e.1.len() > level {
            let step = &e.1[level];
            groups
                .entry(step.branch)
                .or_insert_with(|| (step.kind, step.weight, Vec::new()))
                .2
                .push(e.clone());
        }
    }

    let best_direct = direct.iter().min_by(|a, b| {
        a.2.total_cmp(&b.2)
            .then_with(|| mix(cfg.seed, node_key, a.0 as u64).cmp(&mix(cfg.seed, node_key, b.0 as u64)))
    });

    if groups.is_empty() {
        return best_direct.map(|e| e.0);
    }

    let kind = groups.values().next().unwrap().0;
    let branch_vals: Vec<(usize, f64, Option<CostWeight>)> = groups
        .iter()
        .map(|(branch, (_, w, sub))| {
            let paths: Vec<(Vec<ChoiceStep>, f64)> =
                sub.iter().map(|(_, p, t)| (p.clone(), *t)).collect();
            (*branch, combine_entries(cfg, &paths, level + 1), *w)
        })
        .collect();

    let chosen_branch = match kind {
        ChoiceKind::Cost => branch_vals
            .iter()
            .min_by(|a, b| {
                a.1.total_cmp(&b.1).then_with(|| {
                    mix(cfg.seed, node_key, 0xc0 + a.0 as u64)
                        .cmp(&mix(cfg.seed, node_key, 0xc0 + b.0 as u64))
                })
            })
            .map(|(b, _, _)| *b),
        ChoiceKind::Adv => branch_vals
            .iter()
            .max_by(|a, b| {
                a.1.total_cmp(&b.1).then_with(|| {
                    mix(cfg.seed, node_key, 0xad + b.0 as u64)
                        .cmp(&mix(cfg.seed, node_key, 0xad + a.0 as u64))
                })
            })
            .map(|(b, _, _)| *b),
        ChoiceKind::Gen => {
            let fuzzy = branch_vals
                .iter()
                .any(|(_, _, w)| matches!(w, Some(CostWeight::Fuzzy(_))));
            if fuzzy {
                branch_vals
                    .iter()
                    .max_by(|a, b| {
                        let pa = a.2.map(|w| w.raw()).unwrap_or(1.0) * a.1;
                        let pb = b.2.map(|w| w.raw()).unwrap_or(1.0) * b.1;
                        pa.total_cmp(&pb)
                    })
                    .map(|(b, _, _)| *b)
            } else {
                // weighted sample among the materialized branches
                let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, node_key, 0x6e4));
                let total: f64 = branch_vals
                    .iter()
                    .map(|(_, _, w)| w.map(|w| w.raw()).unwrap_or(1.0))
                    .sum();
                let mut draw = rng.gen_range(0.0..1.0) * total.max(f64::MIN_POSITIVE);
                let mut chosen = branch_vals.last().map(|(b, _, _)| *b);
                for (b, _, w) in &branch_vals {
                    let w = w.map(|w| w.raw()).unwrap_or(1.0);
                    if draw < w {
                        chosen = Some(*b);
                        break;
                    }
                    draw -= w;
                }
                chosen
            }
        }
    };
    let chosen_branch = chosen_branch?;

    // When plain edges compete with the choice (mixed shapes), prefer the
    // cheaper side under min semantics.
    if let Some(best) = best_direct {
        let branch_value = branch_vals
            .iter()
            .find(|(b, _, _)| *b == chosen_branch)
            .map(|(_, v, _)| *v)
            .unwrap_or(f64::INFINITY);
        if best.2 <= branch_value {
            return Some(best.0);
        }
    }

    let (_, _, sub) = &groups[&chosen_branch];
    pick_among(cfg, node_key, sub, level + 1)
}

/// The examine phase: bottom-up cost backup over the subtree rooted at the
/// current node, marking the surviving edge of every decision. Skipped under
/// the same guard as select. Returns the current node's backed-up value.
pub fn examine(cfg: &KOmegaConfig, tree: &mut SearchTree) -> f64 {
    if cfg.k.is_zero() || cfg.b.is_zero() {
        return tree.nodes[tree.current].value;
    }
    let v = backup(cfg, tree, tree.current);
    // mark kept edges along every expanded node of the subtree
    let mut stack = vec![tree.current];
    while let Some(id) = stack.pop() {
        for i in 0..tree.nodes[id].children.len() {
            tree.nodes[id].children[i].kept = false;
        }
        if let Some(edge) = pick_edge(cfg, tree, id) {
            tree.nodes[id].children[edge].kept = true;
        }
        let targets: Vec<usize> = tree.nodes[id].children.iter().map(|e| e.target).collect();
        stack.extend(targets);
    }
    v
}

// ---------------------------------------------------------------------------
// Execute

#[derive(Clone, Debug, Default)]
pub struct ExecReport {
    pub steps: u64,
    pub interrupted: bool,
    /// The frontier is empty: nothing left to expand or execute.
    pub exhausted: bool,
    /// Offline search completed a path to a goal leaf.
    pub reached_goal_leaf: bool,
    /// Real cost of the executed actions (the solution-cost increment).
    pub path_cost: f64,
    /// Labels executed with their observed costs, for cost profiling.
    pub executed: Vec<(Name, f64)>,
    /// Search cost spent this cycle.
    pub search_cost: f64,
}

/// The execute phase.
///
/// Offline (n = 0): when the most promising leaf (minimal g + estimate) is a
/// goal, execute the tree path from the root to it; otherwise just promote
/// that leaf to the current node so the next select expands it — pruning from
/// earlier cycles does not bind it.
///
/// Online (n != 0): follow the kept edges from the current node for up to n
/// steps; steps beyond the deliberation depth run reactively at random.
pub fn execute(
    cfg: &mut KOmegaConfig,
    tree: &mut SearchTree,
    world: &mut Config,
    executed: &mut Vec<(Action, f64)>,
) -> Result<ExecReport, RunError> {
    let mut report = ExecReport::default();

    if cfg.n.is_zero() {
        let Some(best) = tree.frontier_best() else {
            report.exhausted = true;
            return Ok(report);
        };
        if tree.nodes[best].is_goal {
            // commit the plan
            let path = tree.path_to(best);
            for (node_id, edge_idx) in path {
                let edge = tree.nodes[node_id].children[edge_idx].clone();
                if let Some(interrupt) = &cfg.interruptor {
                    if interrupt(world, report.steps) {
                        report.interrupted = true;
                        return Ok(report);
                    }
                }
                *world = tree.nodes[edge.target].config.clone();
                report.steps += 1;
                report.path_cost += edge.true_cost;
                record_exec(&edge.action, edge.true_cost, &mut report, executed);
            }
            report.reached_goal_leaf = true;
            tree.current = best;
        } else {
            tree.current = best;
        }
        return Ok(report);
    }

    // online: optimal path first ...
    let mut cur = tree.current;
    let mut steps_left = cfg.n;
    while !steps_left.is_zero() {
        let Some(edge_idx) = tree.nodes[cur]
            .children
            .iter()
            .position(|e| e.kept && !tree.nodes[e.target].dead)
        else {
            break;
        };
        if let Some(interrupt) = &cfg.interruptor {
            if interrupt(world, report.steps) {
                report.interrupted = true;
                break;
            }
        }
        let edge = tree.nodes[cur].children[edge_idx].clone();
        *world = tree.nodes[edge.target].config.clone();
        report.steps += 1;
        report.path_cost += edge.true_cost;
        record_exec(&edge.action, edge.true_cost, &mut report, executed);
        cur = edge.target;
        steps_left = steps_left.pred();
        if tree.nodes[cur].is_goal {
            report.reached_goal_leaf = true;
            break;
        }
    }

    // ... then reactively beyond the deliberation horizon.
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0xea, tree.nodes[cur].path_key));
    let mut reactive_guard = cfg.goal.time_quantum;
    while !steps_left.is_zero() && !report.interrupted && reactive_guard > 0 {
        if goal_eval(&cfg.goal, world) {
            break;
        }
        let moves = enabled(world);
        if moves.is_empty() {
            break;
        }
        if let Some(interrupt) = &cfg.interruptor {
            if interrupt(world, report.steps) {
                report.interrupted = true;
                break;
            }
        }
        let pick = rng.gen_range(0..moves.len());
        let m = &moves[pick];
        let cost = action_cost(
            &m.action,
            &cfg.costs,
            &cfg.metrics,
            cfg.metric.as_deref(),
            world.defs(),
        )?
        .value();
        *world = m.successor.clone();
        report.steps += 1;
        report.path_cost += cost;
        record_exec(&m.action, cost, &mut report, executed);
        steps_left = steps_left.pred();
        reactive_guard -= 1;
    }

    Ok(report)
}

fn record_exec(
    action: &Action,
    cost: f64,
    report: &mut ExecReport,
    executed: &mut Vec<(Action, f64)>,
) {
    executed.push((action.clone(), cost));
    let parts = action.parts.len().max(1) as f64;
    for (_, label) in &action.parts {
        if let Some(name) = label_name(label) {
            report.executed.push((name, cost / parts));
        }
    }
}

// ---------------------------------------------------------------------------
// Update

/// The self-modification arithmetic on (k, b, n).
///
/// Interrupted: n = 10 if n was infinite, else n - 1 if n != 0, else k = 10
/// if k was infinite, else k - 1.
///
/// Not interrupted: if n = k, first promote k and b by one; then n = n + 1
/// provided the result stays within 0 < n <= k.
pub fn self_modify(
    k: Extent,
    b: Extent,
    n: Extent,
    interrupted: bool,
) -> (Extent, Extent, Extent) {
    if interrupted {
        if n == Extent::Infinite {
            return (k, b, Extent::Finite(10));
        }
        if !n.is_zero() {
            return (k, b, n.pred());
        }
        if k == Extent::Infinite {
            return (Extent::Finite(10), b, n);
        }
        return (k.pred(), b, n);
    }
    let mut k = k;
    let mut b = b;
    let mut n = n;
    if n == k {
        k = k.succ();
        b = b.succ();
    }
    let candidate = n.succ();
    if !candidate.is_zero() && candidate <= k {
        n = candidate;
    }
    (k, b, n)
}

/// The update phase: with the update flag off it does nothing. Otherwise the
/// self-modification arithmetic runs, the search-cost threshold nudges k (and
/// optionally b), and with reinforcement learning on, executed labels update
/// the learned cost table.
pub fn update(cfg: &mut KOmegaConfig, report: &ExecReport) {
    if !cfg.update {
        return;
    }
    let (k, b, n) = self_modify(cfg.k, cfg.b, cfg.n, report.interrupted);
    cfg.k = k;
    cfg.b = b;
    cfg.n = n;

    if let Some(threshold) = cfg.search_threshold {
        if report.search_cost > threshold {
            cfg.k = match cfg.k {
                Extent::Finite(v) => Extent::Finite(v.saturating_sub(1).max(1)),
                Extent::Infinite => Extent::Infinite,
            };
            if cfg.adjust_b_on_threshold {
                cfg.b = match cfg.b {
                    Extent::Finite(v) => Extent::Finite(v.saturating_sub(1).max(1)),
                    Extent::Infinite => Extent::Infinite,
                };
            }
        } else {
            cfg.k = cfg.k.succ();
            if cfg.adjust_b_on_threshold {
                cfg.b = cfg.b.succ();
            }
        }
    }

    if cfg.reinf {
        for (label, observed) in &report.executed {
            cfg.costs = rl_update(
                &cfg.costs,
                &RlTransition {
                    label: label.clone(),
                    observed_cost: *observed,
                    next_best_estimate: 0.0,
                },
            );
        }
    }
}

// ---------------------------------------------------------------------------
// The loop

#[derive(Clone, Debug)]
pub struct RunResult {
    pub iterations: u64,
    pub best_search_cost: f64,
    pub best_solution_cost: f64,
    pub aggregated: Aggregated,
    pub goal_reached: bool,
    pub elapsed_steps: u64,
    /// Backed-up value of the last examined tree root.
    pub root_value: Option<f64>,
    pub best_config: Option<Config>,
    /// Best-so-far aggregated objective after each iteration.
    pub best_series: Vec<f64>,
    /// Every executed action with its real cost, across all iterations.
    pub executed: Vec<(Action, f64)>,
}

impl RunResult {
    /// Stable line-oriented serialization consumed by the CLI and tests.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("iterations: {}\n", self.iterations));
        out.push_str(&format!("search-cost: {}\n", fmt_f64(self.best_search_cost)));
        out.push_str(&format!(
            "solution-cost: {}\n",
            fmt_f64(self.best_solution_cost)
        ));
        out.push_str(&format!("aggregated: {}\n", self.aggregated));
        out.push_str(&format!("goal-reached: {}\n", self.goal_reached));
        out.push_str(&format!("elapsed-steps: {}\n", self.elapsed_steps));
        if let Some(v) = self.root_value {
            out.push_str(&format!("root-value: {}\n", fmt_f64(v)));
        }
        out
    }

    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for (idx, (action, cost)) in self.executed.iter().enumerate() {
            for (agent, label) in &action.parts {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    idx,
                    agent,
                    label,
                    fmt_f64(*cost)
                ));
            }
        }
        out
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{}", v)
    }
}

#[derive(Clone, Debug)]
struct Best {
    search_cost: f64,
    solution_cost: f64,
    key: f64,
    config: Config,
}

/// One agent's live search: the loop state between iterations.
pub struct KOmegaRun {
    pub cfg: KOmegaConfig,
    pub tree: SearchTree,
    pub world: Config,
    initial: Config,
    pub solution_cost: f64,
    pub executed: Vec<(Action, f64)>,
    pub iterations: u64,
    pub elapsed_steps: u64,
    best: Option<Best>,
    best_series: Vec<f64>,
    goal_reached: bool,
    root_value: Option<f64>,
    threshold_armed: bool,
}

/// What one loop iteration did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IterationOutcome {
    /// The goal was satisfied at the top of the cycle (and recorded).
    GoalReached,
    Progress,
    /// Nothing to expand or execute; the search cannot continue.
    Exhausted,
}

impl KOmegaRun {
    pub fn new(initial: Config, cfg: KOmegaConfig) -> Self {
        let tree = SearchTree::new(initial.clone());
        KOmegaRun {
            cfg,
            tree,
            world: initial.clone(),
            initial,
            solution_cost: 0.0,
            executed: Vec::new(),
            iterations: 0,
            elapsed_steps: 0,
            best: None,
            best_series: Vec::new(),
            goal_reached: false,
            root_value: None,
            threshold_armed: false,
        }
    }

    fn record_candidate(&mut self) {
        let search = self.cfg.search_cost_meter;
        let solution = self.solution_cost;
        let key = aggregate(
            CostValue::new(search),
            CostValue::new(solution),
            self.cfg.agg,
        )
        .ordering_key();
        let better = self.best.as_ref().map(|b| key < b.key).unwrap_or(true);
        if better {
            self.best = Some(Best {
                search_cost: search,
                solution_cost: solution,
                key,
                config: self.world.clone(),
            });
        }
    }

    fn push_series(&mut self) {
        let key = self.best.as_ref().map(|b| b.key).unwrap_or(f64::INFINITY);
        self.best_series.push(key);
    }

    /// One select-examine-execute-update cycle, goal check first.
    pub fn iterate(&mut self) -> Result<IterationOutcome, RunError> {
        self.iterations += 1;
        if goal_eval(&self.cfg.goal, &self.world) {
            self.goal_reached = true;
            self.record_candidate();
            self.push_series();
            if self.cfg.reinit_on_goal {
                self.world = self.initial.clone();
                self.tree = SearchTree::new(self.initial.clone());
                self.solution_cost = 0.0;
            }
            return Ok(IterationOutcome::GoalReached);
        }

        let meter_before = self.cfg.search_cost_meter;
        let online = !self.cfg.n.is_zero();
        if online {
            // stale snapshots are worthless once the world moved
            self.tree = SearchTree::new(self.world.clone());
        }
        select(&mut self.cfg, &mut self.tree)?;
        let root_value = examine(&self.cfg, &mut self.tree);
        self.root_value = Some(root_value);

        let mut report = execute(
            &mut self.cfg,
            &mut self.tree,
            &mut self.world,
            &mut self.executed,
        )?;
        report.search_cost = self.cfg.search_cost_meter - meter_before;
        self.elapsed_steps += report.steps;
        self.solution_cost += report.path_cost;

        if self.cfg.update && !self.threshold_armed && self.cfg.search_threshold.is_none() {
            // default threshold: ten times the first cycle's search cost
            self.cfg.search_threshold = Some(report.search_cost * 10.0);
        }
        self.threshold_armed = true;
        update(&mut self.cfg, &report);

        self.push_series();
        if report.exhausted {
            return Ok(IterationOutcome::Exhausted);
        }
        Ok(IterationOutcome::Progress)
    }

    fn result(&self) -> RunResult {
        let (search, solution, config) = match &self.best {
            Some(b) => (b.search_cost, b.solution_cost, Some(b.config.clone())),
            None => (f64::INFINITY, f64::INFINITY, None),
        };
        RunResult {
            iterations: self.iterations,
            best_search_cost: search,
            best_solution_cost: solution,
            aggregated: aggregate(
                CostValue::new(search),
                CostValue::new(solution),
                self.cfg.agg,
            ),
            goal_reached: self.goal_reached,
            elapsed_steps: self.elapsed_steps,
            root_value: self.root_value,
            best_config: config,
            best_series: self.best_series.clone(),
            executed: self.executed.clone(),
        }
    }

    /// Loop until the goal (or, with reinit-on-goal, the budget). The best
    /// solution ever seen is retained regardless of later fluctuation.
    pub fn run(&mut self) -> Result<RunResult, RunError> {
        while self.iterations < self.cfg.iteration_budget {
            match self.iterate()? {
                IterationOutcome::GoalReached => {
                    if !self.cfg.reinit_on_goal {
                        return Ok(self.result());
                    }
                }
                IterationOutcome::Progress => {}
                IterationOutcome::Exhausted => break,
            }
        }
        if self.goal_reached {
            Ok(self.result())
        } else {
            Err(RunError::BudgetExhausted(Box::new(self.result())))
        }
    }
}

/// Run the loop for a single initial configuration.
pub fn run_config(initial: Config, cfg: KOmegaConfig) -> Result<RunResult, RunError> {
    KOmegaRun::new(initial, cfg).run()
}

/// Initialize from overrides and run an explicit program.
pub fn run_program(
    program: Expr,
    defs: &Arc<DefTable>,
    mut overrides: Overrides,
) -> Result<RunResult, RunError> {
    overrides.program = Some(program);
    let (cfg, config) = init(overrides, defs)?;
    run_config(config, cfg)
}

/// Build a one-shot tree (single select + examine) and return the root value.
/// This is the evaluation mode for game-tree style problems where the answer
/// is the backed-up root value rather than an executed path.
pub fn evaluate_root(initial: Config, mut cfg: KOmegaConfig) -> Result<f64, RunError> {
    let mut tree = SearchTree::new(initial);
    select(&mut cfg, &mut tree)?;
    Ok(examine(&cfg, &mut tree))
}

// ---------------------------------------------------------------------------
// Self-tuning

/// The tunable slice of the loop parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuneParams {
    pub k: Extent,
    pub b: Extent,
    pub n: Extent,
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TuneResult {
    pub initial: TuneParams,
    pub initial_cost: f64,
    pub tuned: TuneParams,
    pub tuned_cost: f64,
}

/// Feed the search's own parameters through the search: candidate parameter
/// settings become branches of a cost choice whose action costs are the
/// measured benchmark objectives, and a one-ply run picks the elite. The
/// initial setting is always a candidate, so the returned configuration never
/// measures worse than it.
pub fn self_tune(
    benchmark: &dyn Fn(&TuneParams) -> f64,
    initial: TuneParams,
    rounds: usize,
    seed: u64,
) -> Result<TuneResult, RunError> {
    assert!(rounds >= 1, "self-tuning needs at least one round");
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x7d6e, 0));
    let mut candidates = vec![initial];
    while candidates.len() < rounds {
        let base = candidates[rng.gen_range(0..candidates.len())];
        let mut cand = base;
        match rng.gen_range(0..4) {
            0 => cand.k = if rng.gen_bool(0.5) { cand.k.succ() } else { cand.k.pred() },
            1 => cand.b = if rng.gen_bool(0.5) { cand.b.succ() } else { cand.b.pred() },
            2 => cand.n = if rng.gen_bool(0.5) { cand.n.succ() } else { cand.n.pred() },
            _ => {
                cand.threshold = match cand.threshold {
                    None => Some(100.0),
                    Some(t) => Some(if rng.gen_bool(0.5) { t * 2.0 } else { t / 2.0 }),
                }
            }
        }
        if cand.k.is_zero() && cand.n.is_zero() {
            cand.k = Extent::Finite(1);
        }
        if !candidates.contains(&cand) {
            candidates.push(cand);
        } else {
            candidates.push(base); // keep the count moving on duplicates
        }
    }

    let measured: Vec<f64> = candidates.iter().map(|c| benchmark(c)).collect();

    // The outer level is itself a search: one cost choice over the candidate
    // settings, each an atomic action charged its measured objective.
    let mut table = CostTable::new();
    let mut branches = Vec::new();
    for (i, _) in candidates.iter().enumerate() {
        let label = Name::new(format!("setting{i}"));
        table.set(label.clone(), measured[i]);
        branches.push(Expr::seq(
            Expr::SimpleCall {
                name: label,
                args: vec![],
                negated: false,
            },
            vec![Expr::Epsilon],
        ));
    }
    let outer_program = if branches.len() == 1 {
        branches.into_iter().next().unwrap()
    } else {
        Expr::CostChoice(branches)
    };
    let defs = Arc::new(DefTable::new());
    let outer_cfg = KOmegaConfig {
        k: Extent::Finite(1),
        b: Extent::Infinite,
        n: Extent::ZERO,
        costs: table,
        seed,
        ..KOmegaConfig::default()
    };
    let outer = run_config(Config::single(outer_program, defs)?, outer_cfg)?;
    let winner = outer.best_solution_cost;

    let mut best_idx = 0;
    for (i, m) in measured.iter().enumerate() {
        if *m < measured[best_idx] {
            best_idx = i;
        }
    }
    debug_assert!((measured[best_idx] - winner).abs() < 1e-9 || !winner.is_finite());

    Ok(TuneResult {
        initial,
        initial_cost: measured[0],
        tuned: candidates[best_idx],
        tuned_cost: measured[best_idx],
    })
}
