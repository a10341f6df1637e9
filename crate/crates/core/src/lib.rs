//! A process algebra whose operators carry cost semantics, together with the
//! resource-bounded meta-search loop that evaluates, prunes, and executes
//! cost expressions. Classic algorithms (best-first shortest path, minimax,
//! hill climbing, travelling-salesman search) are provided as settings of the
//! one engine.
//!
//! Modules:
//! - [`ast`]: expression syntax, definitions, substitution
//! - [`parser`]: S-expression concrete syntax and printer
//! - [`lts`]: operational semantics (enabled steps, rendezvous, reactive runs)
//! - [`cost`]: cost tables, the standard cost function, the metric registry
//! - [`komega`]: the select/examine/execute/update search loop
//! - [`agents`]: multi-agent universes and round-robin scheduling
//! - [`encodings`]: demo problems and algorithm encodings

pub mod agents;
pub mod ast;
pub mod cost;
pub mod encodings;
pub mod komega;
pub mod lts;
pub mod parser;

pub use ast::{AgentId, DefTable, Definition, Expr, Name};
pub use cost::{Aggregated, Aggregator, CostTable, CostValue, CostWeight, MetricRegistry};
pub use komega::{Extent, Goal, GoalKind, KOmegaConfig, KOmegaRun, Overrides, RunResult};
pub use lts::{Action, Config, SimpleLabel};
