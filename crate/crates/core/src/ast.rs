//! Abstract syntax of cost expressions.
//!
//! Everything the engine manipulates is an [`Expr`]: agent programs, messages,
//! goals, even the data shipped over channels. Simple expressions (cost probe,
//! send, receive, suppress, simple calls) execute in one atomic step; composite
//! expressions (sequence, parallel, the three choices, process calls) can be
//! interrupted between steps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::cost::CostWeight;

/// Interned identifier for actions, channels, definitions and variables.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(Arc<str>);

impl Name {
    pub fn new(s: impl AsRef<str>) -> Self {
        Name(Arc::from(s.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name::new(s)
    }
}

impl From<String> for Name {
    fn from(s: String) -> Self {
        Name::new(s)
    }
}

/// A cost expression.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    /// `$` operator: probe the cost of the children as one atomic step.
    Cost(Vec<Expr>),
    /// Send the argument expressions through a channel (rendezvous half).
    Send { channel: Name, args: Vec<Expr> },
    /// Receive values from a channel, binding them to variables in the
    /// sequential continuation (rendezvous half).
    Receive { channel: Name, vars: Vec<Name> },
    /// Quote: one atomic no-op step; the children are data, never evaluated.
    Suppress(Vec<Expr>),
    /// Call of a simple (atomic) name. `negated` gives guard semantics: the
    /// negated call is enabled exactly when the plain call is blocked.
    SimpleCall {
        name: Name,
        args: Vec<Expr>,
        negated: bool,
    },
    /// Sequential composition: run `head`, then the tail items in order.
    Seq { head: Box<Expr>, tail: Vec<Expr> },
    /// Parallel composition: any nonempty subset of non-blocked children may
    /// fire in one step.
    Par(Vec<Expr>),
    /// Cost choice: resolved to the cheapest branch during examine.
    CostChoice(Vec<Expr>),
    /// Adversary choice: resolved to the most expensive branch.
    AdvChoice(Vec<Expr>),
    /// General choice: random pick among non-blocked branches; weights feed
    /// the cost semantics (probability or fuzzy membership).
    GenChoice(Vec<(CostWeight, Expr)>),
    /// Call of a defined process. `force_once` marks the single-shot form.
    ProcCall {
        name: Name,
        args: Vec<Expr>,
        force_once: bool,
    },
    /// Blocking expression: no transitions, cost +inf.
    Bottom,
    /// Invisible transparent action: terminated / masked, cost 0.
    Epsilon,
    /// Syntactic variable; only meaningful under a binder or definition.
    Var(Name),
}

#[derive(Debug, Error, PartialEq)]
pub enum AstError {
    #[error("undefined name `{0}`")]
    UndefinedName(Name),
    #[error("call of `{name}` with {got} arguments, definition takes {want}")]
    ArityMismatch { name: Name, want: usize, got: usize },
    #[error("duplicate definition of `{0}`")]
    DuplicateDefinition(Name),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(Name),
    #[error("duplicate receive variable `{0}`")]
    DuplicateReceiveVar(Name),
    #[error("free variable `{0}` in definition body")]
    FreeVariable(Name),
    #[error("agent alphabets must be disjoint; `{0}` is claimed twice")]
    AlphabetClash(Name),
}

impl Expr {
    pub fn var(name: impl Into<Name>) -> Expr {
        Expr::Var(name.into())
    }

    /// Plain call of a simple name with no arguments.
    pub fn simple(name: impl Into<Name>) -> Expr {
        Expr::SimpleCall {
            name: name.into(),
            args: Vec::new(),
            negated: false,
        }
    }

    pub fn negated(name: impl Into<Name>) -> Expr {
        Expr::SimpleCall {
            name: name.into(),
            args: Vec::new(),
            negated: true,
        }
    }

    pub fn proc_call(name: impl Into<Name>, args: Vec<Expr>) -> Expr {
        Expr::ProcCall {
            name: name.into(),
            args,
            force_once: false,
        }
    }

    pub fn seq(head: Expr, tail: Vec<Expr>) -> Expr {
        Expr::Seq {
            head: Box::new(head),
            tail,
        }
    }

    /// Two-step sequence, a common shape in encodings.
    pub fn then(head: Expr, next: Expr) -> Expr {
        Expr::seq(head, vec![next])
    }

    /// Materialize a "countably infinite" parallel composition: children are
    /// drawn from `gen` until it runs dry or the expansion bound is hit.
    pub fn par_from_generator<F>(gen: F, bound: usize) -> Expr
    where
        F: Fn(usize) -> Option<Expr>,
    {
        Expr::Par(materialize(gen, bound))
    }

    /// Same lazy materialization for cost choices.
    pub fn cost_choice_from_generator<F>(gen: F, bound: usize) -> Expr
    where
        F: Fn(usize) -> Option<Expr>,
    {
        Expr::CostChoice(materialize(gen, bound))
    }

    /// Number of AST nodes, counting this one.
    pub fn size(&self) -> usize {
        match self {
            Expr::Cost(cs) | Expr::Suppress(cs) | Expr::Par(cs) => {
                1 + cs.iter().map(Expr::size).sum::<usize>()
            }
            Expr::CostChoice(cs) | Expr::AdvChoice(cs) => {
                1 + cs.iter().map(Expr::size).sum::<usize>()
            }
            Expr::GenChoice(cs) => 1 + cs.iter().map(|(_, c)| c.size()).sum::<usize>(),
            Expr::Send { args, .. } => 1 + args.iter().map(Expr::size).sum::<usize>(),
            Expr::Receive { .. } => 1,
            Expr::SimpleCall { args, .. } | Expr::ProcCall { args, .. } => {
                1 + args.iter().map(Expr::size).sum::<usize>()
            }
            Expr::Seq { head, tail } => {
                1 + head.size() + tail.iter().map(Expr::size).sum::<usize>()
            }
            Expr::Bottom | Expr::Epsilon | Expr::Var(_) => 1,
        }
    }

    /// Free variables. `Receive` binds its variables over the tail of the
    /// enclosing sequence, which is the only binder form.
    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut acc = BTreeSet::new();
        self.collect_free(&mut acc);
        acc
    }

    fn collect_free(&self, acc: &mut BTreeSet<Name>) {
        match self {
            Expr::Var(v) => {
                acc.insert(v.clone());
            }
            Expr::Cost(cs) | Expr::Suppress(cs) | Expr::Par(cs) => {
                cs.iter().for_each(|c| c.collect_free(acc))
            }
            Expr::CostChoice(cs) | Expr::AdvChoice(cs) => {
                cs.iter().for_each(|c| c.collect_free(acc))
            }
            Expr::GenChoice(cs) => cs.iter().for_each(|(_, c)| c.collect_free(acc)),
            Expr::Send { args, .. } => args.iter().for_each(|c| c.collect_free(acc)),
            Expr::Receive { .. } => {}
            Expr::SimpleCall { args, .. } | Expr::ProcCall { args, .. } => {
                args.iter().for_each(|c| c.collect_free(acc))
            }
            Expr::Seq { head, tail } => {
                head.collect_free(acc);
                let mut tail_free = BTreeSet::new();
                tail.iter().for_each(|c| c.collect_free(&mut tail_free));
                if let Expr::Receive { vars, .. } = head.as_ref() {
                    for v in vars {
                        tail_free.remove(v);
                    }
                }
                acc.extend(tail_free);
            }
            Expr::Bottom | Expr::Epsilon => {}
        }
    }

    /// All simple-call and process-call names occurring in the expression.
    pub fn action_names(&self) -> BTreeSet<Name> {
        let mut acc = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::SimpleCall { name, .. } | Expr::ProcCall { name, .. } = e {
                acc.insert(name.clone());
            }
        });
        acc
    }

    /// All channel names occurring in sends and receives.
    pub fn channel_names(&self) -> BTreeSet<Name> {
        let mut acc = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Send { channel, .. } | Expr::Receive { channel, .. } = e {
                acc.insert(channel.clone());
            }
        });
        acc
    }

    fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Cost(cs) | Expr::Suppress(cs) | Expr::Par(cs) => {
                cs.iter().for_each(|c| c.walk(f))
            }
            Expr::CostChoice(cs) | Expr::AdvChoice(cs) => cs.iter().for_each(|c| c.walk(f)),
            Expr::GenChoice(cs) => cs.iter().for_each(|(_, c)| c.walk(f)),
            Expr::Send { args, .. } => args.iter().for_each(|c| c.walk(f)),
            Expr::SimpleCall { args, .. } | Expr::ProcCall { args, .. } => {
                args.iter().for_each(|c| c.walk(f))
            }
            Expr::Seq { head, tail } => {
                head.walk(f);
                tail.iter().for_each(|c| c.walk(f));
            }
            Expr::Receive { .. } | Expr::Bottom | Expr::Epsilon | Expr::Var(_) => {}
        }
    }

    /// Apply the empty-operator conventions bottom-up: empty parallel
    /// composition and empty choices collapse to bottom, an empty sequence
    /// headed by epsilon collapses to epsilon.
    pub fn normalize(&self) -> Expr {
        match self {
            Expr::Par(cs) => {
                let cs: Vec<Expr> = cs.iter().map(Expr::normalize).collect();
                if cs.is_empty() {
                    Expr::Bottom
                } else {
                    Expr::Par(cs)
                }
            }
            Expr::CostChoice(cs) => {
                let cs: Vec<Expr> = cs.iter().map(Expr::normalize).collect();
                if cs.is_empty() {
                    Expr::Bottom
                } else {
                    Expr::CostChoice(cs)
                }
            }
            Expr::AdvChoice(cs) => {
                let cs: Vec<Expr> = cs.iter().map(Expr::normalize).collect();
                if cs.is_empty() {
                    Expr::Bottom
                } else {
                    Expr::AdvChoice(cs)
                }
            }
            Expr::GenChoice(cs) => {
                let cs: Vec<(CostWeight, Expr)> =
                    cs.iter().map(|(w, c)| (*w, c.normalize())).collect();
                if cs.is_empty() {
                    Expr::Bottom
                } else {
                    Expr::GenChoice(cs)
                }
            }
            Expr::Seq { head, tail } => {
                let head = head.normalize();
                let tail: Vec<Expr> = tail.iter().map(Expr::normalize).collect();
                if head == Expr::Epsilon && tail.is_empty() {
                    Expr::Epsilon
                } else {
                    Expr::Seq {
                        head: Box::new(head),
                        tail,
                    }
                }
            }
            Expr::Cost(cs) => Expr::Cost(cs.iter().map(Expr::normalize).collect()),
            Expr::Suppress(cs) => Expr::Suppress(cs.iter().map(Expr::normalize).collect()),
            Expr::Send { channel, args } => Expr::Send {
                channel: channel.clone(),
                args: args.iter().map(Expr::normalize).collect(),
            },
            Expr::SimpleCall {
                name,
                args,
                negated,
            } => Expr::SimpleCall {
                name: name.clone(),
                args: args.iter().map(Expr::normalize).collect(),
                negated: *negated,
            },
            Expr::ProcCall {
                name,
                args,
                force_once,
            } => Expr::ProcCall {
                name: name.clone(),
                args: args.iter().map(Expr::normalize).collect(),
                force_once: *force_once,
            },
            other => other.clone(),
        }
    }
}

fn materialize<F>(gen: F, bound: usize) -> Vec<Expr>
where
    F: Fn(usize) -> Option<Expr>,
{
    let mut out = Vec::new();
    for i in 0..bound {
        match gen(i) {
            Some(e) => out.push(e),
            None => break,
        }
    }
    out
}

/// Default expansion bound for generator-built compositions.
pub const DEFAULT_EXPANSION_BOUND: usize = 64;

/// Equality up to the empty-operator conventions.
pub fn structural_equal(a: &Expr, b: &Expr) -> bool {
    a.normalize() == b.normalize()
}

/// Capture-avoiding substitution of variables. Suppressed subtrees are
/// substituted like any other (they are data that travels).
pub fn substitute(e: &Expr, bindings: &BTreeMap<Name, Expr>) -> Expr {
    if bindings.is_empty() {
        return e.clone();
    }
    match e {
        Expr::Var(v) => bindings.get(v).cloned().unwrap_or_else(|| e.clone()),
        Expr::Cost(cs) => Expr::Cost(sub_all(cs, bindings)),
        Expr::Suppress(cs) => Expr::Suppress(sub_all(cs, bindings)),
        Expr::Par(cs) => Expr::Par(sub_all(cs, bindings)),
        Expr::CostChoice(cs) => Expr::CostChoice(sub_all(cs, bindings)),
        Expr::AdvChoice(cs) => Expr::AdvChoice(sub_all(cs, bindings)),
        Expr::GenChoice(cs) => Expr::GenChoice(
            cs.iter()
                .map(|(w, c)| (*w, substitute(c, bindings)))
                .collect(),
        ),
        Expr::Send { channel, args } => Expr::Send {
            channel: channel.clone(),
            args: sub_all(args, bindings),
        },
        Expr::Receive { .. } => e.clone(),
        Expr::SimpleCall {
            name,
            args,
            negated,
        } => Expr::SimpleCall {
            name: name.clone(),
            args: sub_all(args, bindings),
            negated: *negated,
        },
        Expr::ProcCall {
            name,
            args,
            force_once,
        } => Expr::ProcCall {
            name: name.clone(),
            args: sub_all(args, bindings),
            force_once: *force_once,
        },
        Expr::Seq { head, tail } => {
            if let Expr::Receive { channel, vars } = head.as_ref() {
                // Receive binds its variables over the tail: shadow them, and
                // rename binders that would capture free variables of images.
                let mut inner: BTreeMap<Name, Expr> = bindings
                    .iter()
                    .filter(|(k, _)| !vars.contains(k))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                let image_free: BTreeSet<Name> = inner
                    .values()
                    .flat_map(|v| v.free_vars().into_iter())
                    .collect();
                let mut vars = vars.clone();
                let mut tail = tail.clone();
                for v in vars.clone() {
                    if image_free.contains(&v) {
                        let fresh = fresh_name(&v, &image_free);
                        let mut rename = BTreeMap::new();
                        rename.insert(v.clone(), Expr::Var(fresh.clone()));
                        tail = tail.iter().map(|t| substitute(t, &rename)).collect();
                        for slot in vars.iter_mut() {
                            if *slot == v {
                                *slot = fresh.clone();
                            }
                        }
                        inner.remove(&v);
                    }
                }
                Expr::Seq {
                    head: Box::new(Expr::Receive {
                        channel: channel.clone(),
                        vars,
                    }),
                    tail: tail.iter().map(|t| substitute(t, &inner)).collect(),
                }
            } else {
                Expr::Seq {
                    head: Box::new(substitute(head, bindings)),
                    tail: sub_all(tail, bindings),
                }
            }
        }
        Expr::Bottom | Expr::Epsilon => e.clone(),
    }
}

fn sub_all(es: &[Expr], bindings: &BTreeMap<Name, Expr>) -> Vec<Expr> {
    es.iter().map(|e| substitute(e, bindings)).collect()
}

fn fresh_name(base: &Name, taken: &BTreeSet<Name>) -> Name {
    let mut i = 1;
    loop {
        let candidate = Name::new(format!("{}%{}", base, i));
        if !taken.contains(&candidate) {
            return candidate;
        }
        i += 1;
    }
}

/// A named definition `(def (f x...) body)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Definition {
    pub name: Name,
    pub params: Vec<Name>,
    pub body: Expr,
    /// Simple-expression bodies evaluate atomically in one step; process
    /// bodies are suppressed until called and unfold stepwise.
    pub atomic_body: bool,
}

impl Definition {
    pub fn new(
        name: impl Into<Name>,
        params: Vec<Name>,
        body: Expr,
        atomic_body: bool,
    ) -> Result<Self, AstError> {
        let mut seen = BTreeSet::new();
        for p in &params {
            if !seen.insert(p.clone()) {
                return Err(AstError::DuplicateParam(p.clone()));
            }
        }
        Ok(Definition {
            name: name.into(),
            params,
            body,
            atomic_body,
        })
    }
}

/// Agent identifier inside a universe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Environment of definitions plus the per-agent alphabet partition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DefTable {
    defs: BTreeMap<Name, Definition>,
    alphabets: BTreeMap<AgentId, BTreeSet<Name>>,
}

impl DefTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, def: Definition) -> Result<(), AstError> {
        if self.defs.contains_key(&def.name) {
            return Err(AstError::DuplicateDefinition(def.name));
        }
        // Body may refer to its parameters and to any defined name (calls to
        // not-yet-defined names are resolved in a later pass); bare variables
        // outside the parameter list are rejected when the table is sealed.
        self.defs.insert(def.name.clone(), def);
        Ok(())
    }

    /// Check that every definition body is closed under its parameters.
    pub fn validate(&self) -> Result<(), AstError> {
        for def in self.defs.values() {
            for v in def.body.free_vars() {
                if !def.params.contains(&v) {
                    return Err(AstError::FreeVariable(v));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &Name) -> Result<&Definition, AstError> {
        self.defs
            .get(name)
            .ok_or_else(|| AstError::UndefinedName(name.clone()))
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.defs.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Definition> {
        self.defs.values()
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    /// Claim a set of names as agent `id`'s alphabet. Alphabets of distinct
    /// agents must stay disjoint.
    pub fn claim_alphabet(&mut self, id: AgentId, names: BTreeSet<Name>) -> Result<(), AstError> {
        for (other, set) in &self.alphabets {
            if *other != id {
                if let Some(clash) = set.intersection(&names).next() {
                    return Err(AstError::AlphabetClash(clash.clone()));
                }
            }
        }
        self.alphabets.entry(id).or_default().extend(names);
        Ok(())
    }

    pub fn alphabet_of(&self, id: AgentId) -> Option<&BTreeSet<Name>> {
        self.alphabets.get(&id)
    }

    pub fn alphabets(&self) -> &BTreeMap<AgentId, BTreeSet<Name>> {
        &self.alphabets
    }
}

/// Expand a defined call: substitute arguments for parameters in the body.
/// Works for both process calls and simple calls with a defined body; the
/// caller decides what to do with the atomicity flag on the definition.
pub fn expand_call(call: &Expr, defs: &DefTable) -> Result<Expr, AstError> {
    let (name, args) = match call {
        Expr::ProcCall { name, args, .. } => (name, args),
        Expr::SimpleCall { name, args, .. } => (name, args),
        _ => panic!("expand_call expects a call expression"),
    };
    let def = defs.get(name)?;
    if def.params.len() != args.len() {
        return Err(AstError::ArityMismatch {
            name: name.clone(),
            want: def.params.len(),
            got: args.len(),
        });
    }
    let bindings: BTreeMap<Name, Expr> = def
        .params
        .iter()
        .cloned()
        .zip(args.iter().cloned())
        .collect();
    Ok(substitute(&def.body, &bindings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a() -> Expr {
        Expr::simple("a")
    }

    fn b() -> Expr {
        Expr::simple("b")
    }

    #[test]
    fn empty_par_equals_bottom() {
        assert!(structural_equal(&Expr::Par(vec![]), &Expr::Bottom));
        assert!(structural_equal(&Expr::GenChoice(vec![]), &Expr::Bottom));
        assert!(structural_equal(&Expr::CostChoice(vec![]), &Expr::Bottom));
    }

    #[test]
    fn empty_seq_equals_epsilon() {
        assert!(structural_equal(
            &Expr::seq(Expr::Epsilon, vec![]),
            &Expr::Epsilon
        ));
    }

    #[test]
    fn different_arity_not_equal() {
        let one = Expr::CostChoice(vec![a()]);
        let two = Expr::CostChoice(vec![a(), b()]);
        assert!(!structural_equal(&one, &two));
    }

    #[test]
    fn substitute_direct_hit_miss_and_congruence() {
        let mut sigma = BTreeMap::new();
        sigma.insert(Name::new("x"), Expr::Epsilon);
        assert_eq!(substitute(&Expr::var("x"), &sigma), Expr::Epsilon);
        assert_eq!(substitute(&Expr::var("y"), &sigma), Expr::var("y"));

        let mut bottom = BTreeMap::new();
        bottom.insert(Name::new("x"), Expr::Bottom);
        let e = Expr::seq(a(), vec![Expr::var("x")]);
        assert_eq!(
            substitute(&e, &bottom),
            Expr::seq(a(), vec![Expr::Bottom])
        );
    }

    #[test]
    fn substitute_idempotent_for_closed_images() {
        let mut sigma = BTreeMap::new();
        sigma.insert(Name::new("x"), Expr::seq(a(), vec![b()]));
        let e = Expr::Par(vec![Expr::var("x"), Expr::var("y"), a()]);
        let once = substitute(&e, &sigma);
        let twice = substitute(&once, &sigma);
        assert_eq!(once, twice);
    }

    #[test]
    fn receive_shadows_bindings() {
        let mut sigma = BTreeMap::new();
        sigma.insert(Name::new("x"), Expr::Epsilon);
        let e = Expr::seq(
            Expr::Receive {
                channel: Name::new("c"),
                vars: vec![Name::new("x")],
            },
            vec![Expr::var("x")],
        );
        // x is rebound by the receive, so the outer binding must not reach it.
        assert_eq!(substitute(&e, &sigma), e);
    }

    #[test]
    fn receive_binder_avoids_capture() {
        // Substituting x := y under a receive binding y must rename the binder.
        let mut sigma = BTreeMap::new();
        sigma.insert(Name::new("x"), Expr::var("y"));
        let e = Expr::seq(
            Expr::Receive {
                channel: Name::new("c"),
                vars: vec![Name::new("y")],
            },
            vec![Expr::var("x"), Expr::var("y")],
        );
        let out = substitute(&e, &sigma);
        if let Expr::Seq { head, tail } = &out {
            let bound = match head.as_ref() {
                Expr::Receive { vars, .. } => vars[0].clone(),
                _ => panic!("head must stay a receive"),
            };
            assert_ne!(bound, Name::new("y"));
            assert_eq!(tail[0], Expr::var("y"));
            assert_eq!(tail[1], Expr::Var(bound));
        } else {
            panic!("expected seq");
        }
    }

    #[test]
    fn expand_identity_and_duplication() {
        let mut defs = DefTable::new();
        defs.insert(
            Definition::new("id", vec![Name::new("x")], Expr::var("x"), false).unwrap(),
        )
        .unwrap();
        defs.insert(
            Definition::new(
                "two",
                vec![Name::new("x")],
                Expr::seq(Expr::var("x"), vec![Expr::var("x")]),
                false,
            )
            .unwrap(),
        )
        .unwrap();

        let id_call = Expr::proc_call("id", vec![Expr::Epsilon]);
        assert_eq!(expand_call(&id_call, &defs).unwrap(), Expr::Epsilon);

        let two_call = Expr::proc_call("two", vec![a()]);
        assert_eq!(
            expand_call(&two_call, &defs).unwrap(),
            Expr::seq(a(), vec![a()])
        );
    }

    #[test]
    fn expand_undefined_is_an_error() {
        let defs = DefTable::new();
        let call = Expr::proc_call("g", vec![Expr::Epsilon]);
        assert_eq!(
            expand_call(&call, &defs),
            Err(AstError::UndefinedName(Name::new("g")))
        );
    }

    #[test]
    fn expand_arity_mismatch() {
        let mut defs = DefTable::new();
        defs.insert(
            Definition::new("id", vec![Name::new("x")], Expr::var("x"), false).unwrap(),
        )
        .unwrap();
        let call = Expr::proc_call("id", vec![]);
        assert!(matches!(
            expand_call(&call, &defs),
            Err(AstError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn expansion_preserves_node_accounting() {
        // result size = body size + sum over occurrences (arg size - 1)
        let mut defs = DefTable::new();
        let body = Expr::seq(Expr::var("x"), vec![Expr::var("x"), b()]);
        defs.insert(Definition::new("f", vec![Name::new("x")], body.clone(), false).unwrap())
            .unwrap();
        let arg = Expr::seq(a(), vec![b()]);
        let call = Expr::proc_call("f", vec![arg.clone()]);
        let expanded = expand_call(&call, &defs).unwrap();
        let occurrences = 2;
        assert_eq!(
            expanded.size(),
            body.size() + occurrences * (arg.size() - 1)
        );
    }

    #[test]
    fn alphabet_disjointness_enforced() {
        let mut defs = DefTable::new();
        let mut s1 = BTreeSet::new();
        s1.insert(Name::new("a"));
        defs.claim_alphabet(AgentId(0), s1.clone()).unwrap();
        assert_eq!(
            defs.claim_alphabet(AgentId(1), s1),
            Err(AstError::AlphabetClash(Name::new("a")))
        );
    }

    #[test]
    fn generator_respects_bound() {
        let e = Expr::par_from_generator(|_| Some(Expr::simple("tick")), 64);
        if let Expr::Par(cs) = e {
            assert_eq!(cs.len(), 64);
        } else {
            panic!("expected par");
        }
        let finite = Expr::cost_choice_from_generator(
            |i| if i < 3 { Some(Expr::simple("c")) } else { None },
            64,
        );
        if let Expr::CostChoice(cs) = finite {
            assert_eq!(cs.len(), 3);
        } else {
            panic!("expected choice");
        }
    }
}
