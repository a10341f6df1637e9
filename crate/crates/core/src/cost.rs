//! Cost semantics: atomic cost tables, the standard cost function over
//! expressions, aggregation of search and solution costs, reinforcement
//! updates of learned costs, and the open metric registry.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::ast::{expand_call, DefTable, Expr, Name};

/// Extended-real cost: a finite float or +inf, never NaN.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct CostValue(f64);

impl CostValue {
    pub const ZERO: CostValue = CostValue(0.0);
    pub const INFINITE: CostValue = CostValue(f64::INFINITY);

    pub fn new(v: f64) -> CostValue {
        assert!(!v.is_nan(), "cost values must not be NaN");
        CostValue(v)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn min(self, other: CostValue) -> CostValue {
        if self.0 <= other.0 {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: CostValue) -> CostValue {
        if self.0 >= other.0 {
            self
        } else {
            other
        }
    }
}

impl std::ops::Add for CostValue {
    type Output = CostValue;
    fn add(self, rhs: CostValue) -> CostValue {
        CostValue(self.0 + rhs.0)
    }
}

impl fmt::Display for CostValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Debug for CostValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CostValue({})", self)
    }
}

/// Uncertainty weight attached to a general-choice branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CostWeight {
    /// Probabilities on one choice must sum to 1.
    Probability(f64),
    /// Fuzzy memberships are individually in [0,1], no sum constraint.
    Fuzzy(f64),
}

impl CostWeight {
    pub fn raw(self) -> f64 {
        match self {
            CostWeight::Probability(w) | CostWeight::Fuzzy(w) => w,
        }
    }

    pub fn is_fuzzy(self) -> bool {
        matches!(self, CostWeight::Fuzzy(_))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("unknown label `{0}` and the cost table is in error mode")]
    UnknownLabel(Name),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("metric set name `{0}` is reserved")]
    ReservedName(String),
    #[error("unknown metric set `{0}`")]
    UnknownMetric(String),
    #[error("expression has free variables; costs are defined on closed expressions")]
    OpenExpression,
    #[error("call of undefined process `{0}` while costing")]
    UndefinedCall(Name),
}

/// Behavior of a table lookup for labels without an entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DefaultCost {
    Value(f64),
    Error,
}

/// Costs of simple expressions, plus the reinforcement-learning knobs used to
/// refine them from observations. Stored values double as the Q estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTable {
    entries: BTreeMap<Name, (f64, Option<CostWeight>)>,
    default: DefaultCost,
    /// Q-learning step size.
    pub alpha: f64,
    /// Q-learning discount.
    pub gamma: f64,
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable {
            entries: BTreeMap::new(),
            default: DefaultCost::Value(0.0),
            alpha: 0.1,
            gamma: 0.0,
        }
    }
}

impl CostTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(mut self, default: DefaultCost) -> Self {
        self.default = default;
        self
    }

    pub fn set(&mut self, label: impl Into<Name>, cost: f64) {
        assert!(!cost.is_nan());
        self.entries.insert(label.into(), (cost, None));
    }

    pub fn set_weighted(&mut self, label: impl Into<Name>, cost: f64, weight: CostWeight) {
        assert!(!cost.is_nan());
        self.entries.insert(label.into(), (cost, Some(weight)));
    }

    /// Entry lookup without the default fallback.
    pub fn get(&self, label: &Name) -> Option<f64> {
        self.entries.get(label).map(|(c, _)| *c)
    }

    pub fn lookup(&self, label: &Name) -> Result<CostValue, CostError> {
        match self.entries.get(label) {
            Some((c, _)) => Ok(CostValue::new(*c)),
            None => match self.default {
                DefaultCost::Value(v) => Ok(CostValue::new(v)),
                DefaultCost::Error => Err(CostError::UnknownLabel(label.clone())),
            },
        }
    }

    pub fn weight_of(&self, label: &Name) -> Option<CostWeight> {
        self.entries.get(label).and_then(|(_, w)| *w)
    }

    pub fn labels(&self) -> impl Iterator<Item = &Name> {
        self.entries.keys()
    }

    pub fn default_mode(&self) -> DefaultCost {
        self.default
    }

    /// Parse the on-disk format: an optional `default=<value|error>` header,
    /// then `label<TAB>cost` lines with an optional `p=<w>` / `f=<w>` field.
    /// `#` starts a line comment.
    pub fn parse(text: &str) -> Result<CostTable, CostError> {
        let mut table = CostTable::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("default=") {
                table.default = match rest.trim() {
                    "error" => DefaultCost::Error,
                    v => DefaultCost::Value(v.parse::<f64>().map_err(|_| {
                        CostError::InvalidWeights(format!("bad default `{v}`"))
                    })?),
                };
                continue;
            }
            let mut fields = line.split_whitespace();
            let label = fields
                .next()
                .ok_or_else(|| CostError::InvalidWeights("empty line".into()))?;
            let cost: f64 = fields
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| CostError::InvalidWeights(format!("bad cost on `{line}`")))?;
            match fields.next() {
                None => table.set(label, cost),
                Some(w) => {
                    let weight = if let Some(p) = w.strip_prefix("p=") {
                        CostWeight::Probability(p.parse().map_err(|_| {
                            CostError::InvalidWeights(format!("bad weight `{w}`"))
                        })?)
                    } else if let Some(fz) = w.strip_prefix("f=") {
                        CostWeight::Fuzzy(fz.parse().map_err(|_| {
                            CostError::InvalidWeights(format!("bad weight `{w}`"))
                        })?)
                    } else {
                        return Err(CostError::InvalidWeights(format!(
                            "unknown field `{w}` on `{line}`"
                        )));
                    };
                    table.set_weighted(label, cost, weight);
                }
            }
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self.default {
            DefaultCost::Value(v) => out.push_str(&format!("default={}\n", v)),
            DefaultCost::Error => out.push_str("default=error\n"),
        }
        for (label, (cost, weight)) in &self.entries {
            match weight {
                None => out.push_str(&format!("{}\t{}\n", label, cost)),
                Some(CostWeight::Probability(w)) => {
                    out.push_str(&format!("{}\t{}\tp={}\n", label, cost, w))
                }
                Some(CostWeight::Fuzzy(w)) => {
                    out.push_str(&format!("{}\t{}\tf={}\n", label, cost, w))
                }
            }
        }
        out
    }
}

/// One observed transition used to refine a learned cost.
#[derive(Clone, Debug)]
pub struct RlTransition {
    pub label: Name,
    pub observed_cost: f64,
    pub next_best_estimate: f64,
}

/// One Q-learning / temporal-difference step on a label's cost estimate:
/// Q <- Q + alpha * (observed + gamma * next_best - Q). Returns the updated
/// table; the input is untouched.
pub fn rl_update(table: &CostTable, transition: &RlTransition) -> CostTable {
    let mut out = table.clone();
    let q = match out.entries.get(&transition.label) {
        Some((q, _)) => *q,
        None => match out.default {
            DefaultCost::Value(v) => v,
            DefaultCost::Error => 0.0,
        },
    };
    let target = transition.observed_cost + out.gamma * transition.next_best_estimate;
    let weight = out.entries.get(&transition.label).and_then(|(_, w)| *w);
    let updated = q + out.alpha * (target - q);
    out.entries
        .insert(transition.label.clone(), (updated, weight));
    out
}

/// Operators whose combination rule can be replaced in a metric set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum OperatorKind {
    Seq,
    Par,
    CostChoice,
    AdvChoice,
    GenChoice,
    CostProbe,
}

/// Inputs handed to a combinator: child costs plus the general-choice weights
/// when the operator has them.
pub struct CombineInput<'a> {
    pub children: &'a [CostValue],
    pub weights: Option<&'a [CostWeight]>,
}

pub type Combinator = Arc<dyn Fn(&CombineInput) -> CostValue + Send + Sync>;

pub const STANDARD_METRIC: &str = "standard";

/// Named sets of per-operator combinators. The standard set is always present
/// and can never be overwritten; custom sets fall through to it for operators
/// they do not mention.
#[derive(Clone)]
pub struct MetricRegistry {
    sets: BTreeMap<String, BTreeMap<OperatorKind, Combinator>>,
}

impl Default for MetricRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for MetricRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sets: Vec<(&String, Vec<OperatorKind>)> = self
            .sets
            .iter()
            .map(|(name, ops)| (name, ops.keys().copied().collect()))
            .collect();
        write!(f, "MetricRegistry({:?})", sets)
    }
}

fn weighted_sum(input: &CombineInput) -> CostValue {
    let weights = input.weights.expect("general choice carries weights");
    let mut acc = 0.0;
    for (c, w) in input.children.iter().zip(weights) {
        let w = w.raw();
        // Convention: a zero-weight branch contributes nothing even if its
        // cost is infinite (avoids 0 * inf = NaN).
        if w != 0.0 {
            acc += w * c.value();
        }
    }
    CostValue::new(acc)
}

fn fuzzy_max_product(input: &CombineInput) -> CostValue {
    let weights = input.weights.expect("general choice carries weights");
    let mut best: Option<(f64, CostValue)> = None;
    for (c, w) in input.children.iter().zip(weights) {
        let w = w.raw();
        let product = if w == 0.0 { 0.0 } else { w * c.value() };
        match best {
            Some((bp, _)) if bp >= product => {}
            _ => best = Some((product, *c)),
        }
    }
    best.map(|(_, c)| c).unwrap_or(CostValue::INFINITE)
}

fn standard_set() -> BTreeMap<OperatorKind, Combinator> {
    let mut set: BTreeMap<OperatorKind, Combinator> = BTreeMap::new();
    let sum: Combinator = Arc::new(|i: &CombineInput| {
        i.children
            .iter()
            .fold(CostValue::ZERO, |acc, c| acc + *c)
    });
    set.insert(OperatorKind::Seq, sum.clone());
    set.insert(OperatorKind::Par, sum.clone());
    set.insert(OperatorKind::CostProbe, sum);
    set.insert(
        OperatorKind::CostChoice,
        Arc::new(|i: &CombineInput| {
            i.children
                .iter()
                .fold(CostValue::INFINITE, |acc, c| acc.min(*c))
        }),
    );
    set.insert(
        OperatorKind::AdvChoice,
        Arc::new(|i: &CombineInput| {
            i.children
                .iter()
                .fold(CostValue::new(f64::NEG_INFINITY), |acc, c| acc.max(*c))
        }),
    );
    set.insert(
        OperatorKind::GenChoice,
        Arc::new(|i: &CombineInput| {
            let fuzzy = i
                .weights
                .map(|ws| ws.iter().any(|w| w.is_fuzzy()))
                .unwrap_or(false);
            if fuzzy {
                fuzzy_max_product(i)
            } else {
                weighted_sum(i)
            }
        }),
    );
    set
}

impl MetricRegistry {
    pub fn new() -> Self {
        let mut sets = BTreeMap::new();
        sets.insert(STANDARD_METRIC.to_string(), standard_set());
        // Alternative parallel rule: makespan instead of summed expenditure.
        let mut makespan: BTreeMap<OperatorKind, Combinator> = BTreeMap::new();
        makespan.insert(
            OperatorKind::Par,
            Arc::new(|i: &CombineInput| {
                i.children
                    .iter()
                    .fold(CostValue::ZERO, |acc, c| acc.max(*c))
            }),
        );
        sets.insert("makespan".to_string(), makespan);
        MetricRegistry { sets }
    }

    pub fn set_names(&self) -> impl Iterator<Item = &str> {
        self.sets.keys().map(|s| s.as_str())
    }

    pub fn has_set(&self, name: &str) -> bool {
        self.sets.contains_key(name)
    }

    /// Resolve the combinator for an operator under a named set, falling
    /// through to the standard set for operators the set does not define.
    pub fn combinator(
        &self,
        set: Option<&str>,
        op: OperatorKind,
    ) -> Result<Combinator, CostError> {
        let standard = &self.sets[STANDARD_METRIC];
        match set {
            None => Ok(standard[&op].clone()),
            Some(name) => {
                let custom = self
                    .sets
                    .get(name)
                    .ok_or_else(|| CostError::UnknownMetric(name.to_string()))?;
                Ok(custom.get(&op).unwrap_or(&standard[&op]).clone())
            }
        }
    }
}

/// Register a combinator for one operator under a named metric set, returning
/// the extended registry. The standard set cannot be modified in place.
pub fn register_metric(
    registry: &MetricRegistry,
    name: &str,
    op: OperatorKind,
    combinator: Combinator,
) -> Result<MetricRegistry, CostError> {
    if name == STANDARD_METRIC {
        return Err(CostError::ReservedName(name.to_string()));
    }
    let mut out = registry.clone();
    out.sets
        .entry(name.to_string())
        .or_default()
        .insert(op, combinator);
    Ok(out)
}

fn validate_weights(weights: &[CostWeight]) -> Result<(), CostError> {
    let fuzzy = weights.iter().any(|w| w.is_fuzzy());
    if fuzzy {
        if weights.iter().any(|w| !w.is_fuzzy()) {
            return Err(CostError::InvalidWeights(
                "mixed probability and fuzzy weights on one choice".into(),
            ));
        }
        for w in weights {
            let v = w.raw();
            if !(0.0..=1.0).contains(&v) {
                return Err(CostError::InvalidWeights(format!(
                    "fuzzy membership {v} outside [0,1]"
                )));
            }
        }
    } else {
        let sum: f64 = weights.iter().map(|w| w.raw()).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CostError::InvalidWeights(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        for w in weights {
            let v = w.raw();
            if !(0.0..=1.0).contains(&v) {
                return Err(CostError::InvalidWeights(format!(
                    "probability {v} outside [0,1]"
                )));
            }
        }
    }
    Ok(())
}

const COST_RECURSION_LIMIT: usize = 64;

/// Static cost of a closed expression under the standard metric.
pub fn expr_cost(e: &Expr, table: &CostTable, registry: &MetricRegistry) -> Result<CostValue, CostError> {
    expr_cost_with(e, table, registry, None, &DefTable::new())
}

/// Static cost under a named metric set, consulting `defs` for call bodies.
pub fn expr_cost_with(
    e: &Expr,
    table: &CostTable,
    registry: &MetricRegistry,
    metric: Option<&str>,
    defs: &DefTable,
) -> Result<CostValue, CostError> {
    if let Some(name) = metric {
        if !registry.has_set(name) {
            return Err(CostError::UnknownMetric(name.to_string()));
        }
    }
    cost_rec(e, table, registry, metric, defs, 0)
}

fn cost_rec(
    e: &Expr,
    table: &CostTable,
    registry: &MetricRegistry,
    metric: Option<&str>,
    defs: &DefTable,
    depth: usize,
) -> Result<CostValue, CostError> {
    if depth > COST_RECURSION_LIMIT {
        // Unbounded recursion means the expression never terminates; its
        // cost diverges.
        return Ok(CostValue::INFINITE);
    }
    let metric = match metric {
        Some(STANDARD_METRIC) => None,
        m => m,
    };
    match e {
        Expr::Epsilon => Ok(CostValue::ZERO),
        Expr::Bottom => Ok(CostValue::INFINITE),
        Expr::Var(_) => Err(CostError::OpenExpression),
        Expr::Suppress(_) => Ok(CostValue::ZERO),
        Expr::Send { channel, .. } | Expr::Receive { channel, .. } => table.lookup(channel),
        Expr::SimpleCall { name, negated, .. } => {
            if *negated {
                // Guards test blocking; they charge nothing.
                return Ok(CostValue::ZERO);
            }
            if defs.contains(name) {
                let body = expand_call(e, defs).map_err(|_| CostError::UndefinedCall(name.clone()))?;
                cost_rec(&body, table, registry, metric, defs, depth + 1)
            } else {
                table.lookup(name)
            }
        }
        Expr::ProcCall { name, .. } => {
            if defs.contains(name) {
                let body = expand_call(e, defs).map_err(|_| CostError::UndefinedCall(name.clone()))?;
                cost_rec(&body, table, registry, metric, defs, depth + 1)
            } else {
                Err(CostError::UndefinedCall(name.clone()))
            }
        }
        Expr::Cost(children) => {
            let costs = children
                .iter()
                .map(|c| cost_rec(c, table, registry, metric, defs, depth + 1))
                .collect::<Result<Vec<_>, _>>()?;
            let comb = registry.combinator(metric, OperatorKind::CostProbe)?;
            Ok(comb(&CombineInput {
                children: &costs,
                weights: None,
            }))
        }
        Expr::Seq { head, tail } => {
            let mut costs = vec![cost_rec(head, table, registry, metric, defs, depth + 1)?];
            for t in tail {
                costs.push(cost_rec(t, table, registry, metric, defs, depth + 1)?);
            }
            let comb = registry.combinator(metric, OperatorKind::Seq)?;
            Ok(comb(&CombineInput {
                children: &costs,
                weights: None,
            }))
        }
        Expr::Par(children) => {
            if children.is_empty() {
                return Ok(CostValue::INFINITE);
            }
            let costs = children
                .iter()
                .map(|c| cost_rec(c, table, registry, metric, defs, depth + 1))
                .collect::<Result<Vec<_>, _>>()?;
            let comb = registry.combinator(metric, OperatorKind::Par)?;
            Ok(comb(&CombineInput {
                children: &costs,
                weights: None,
            }))
        }
        Expr::CostChoice(children) => {
            if children.is_empty() {
                return Ok(CostValue::INFINITE);
            }
            let costs = children
                .iter()
                .map(|c| cost_rec(c, table, registry, metric, defs, depth + 1))
                .collect::<Result<Vec<_>, _>>()?;
            let comb = registry.combinator(metric, OperatorKind::CostChoice)?;
            Ok(comb(&CombineInput {
                children: &costs,
                weights: None,
            }))
        }
        Expr::AdvChoice(children) => {
            if children.is_empty() {
                return Ok(CostValue::INFINITE);
            }
            let costs = children
                .iter()
                .map(|c| cost_rec(c, table, registry, metric, defs, depth + 1))
                .collect::<Result<Vec<_>, _>>()?;
            let comb = registry.combinator(metric, OperatorKind::AdvChoice)?;
            Ok(comb(&CombineInput {
                children: &costs,
                weights: None,
            }))
        }
        Expr::GenChoice(children) => {
            if children.is_empty() {
                return Ok(CostValue::INFINITE);
            }
            let weights: Vec<CostWeight> = children.iter().map(|(w, _)| *w).collect();
            validate_weights(&weights)?;
            let costs = children
                .iter()
                .map(|(_, c)| cost_rec(c, table, registry, metric, defs, depth + 1))
                .collect::<Result<Vec<_>, _>>()?;
            let comb = registry.combinator(metric, OperatorKind::GenChoice)?;
            Ok(comb(&CombineInput {
                children: &costs,
                weights: Some(&weights),
            }))
        }
    }
}

/// How search cost and solution cost are folded into one objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Aggregator {
    /// Total optimization: search + solution.
    Addition,
    /// Weighted total: w_search * search + w_solution * solution.
    Weighted { w_search: f64, w_solution: f64 },
    /// Pareto: keep the objectives separate.
    Identity,
}

/// Result of aggregation: a scalar, or the unreduced Pareto pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Aggregated {
    Scalar(CostValue),
    Pair(CostValue, CostValue),
}

impl Aggregated {
    /// Scalar used for ordering candidates; Pareto pairs order by their sum so
    /// elitist bookkeeping stays total.
    pub fn ordering_key(&self) -> f64 {
        match self {
            Aggregated::Scalar(c) => c.value(),
            Aggregated::Pair(a, b) => a.value() + b.value(),
        }
    }
}

impl fmt::Display for Aggregated {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregated::Scalar(c) => write!(f, "{}", c),
            Aggregated::Pair(a, b) => write!(f, "({}, {})", a, b),
        }
    }
}

/// Combine the search-cost and solution-cost components.
pub fn aggregate(search: CostValue, solution: CostValue, agg: Aggregator) -> Aggregated {
    match agg {
        Aggregator::Addition => Aggregated::Scalar(search + solution),
        Aggregator::Weighted {
            w_search,
            w_solution,
        } => {
            let s = if w_search == 0.0 {
                0.0
            } else {
                w_search * search.value()
            };
            let x = if w_solution == 0.0 {
                0.0
            } else {
                w_solution * solution.value()
            };
            Aggregated::Scalar(CostValue::new(s + x))
        }
        Aggregator::Identity => Aggregated::Pair(search, solution),
    }
}
