//! Exact probabilistic query evaluation on tuple-independent graph databases.
//!
//! Everything here works on *instances*: finite sets of binary facts `R(a, b)`
//! over an arity-two signature. On top of that data model the crate provides:
//!
//! - [`instance`] — facts, oriented (inverse-closed) views, Gaifman edges,
//!   covered facts, edge copying, and incident pairs;
//! - [`hom`] — budgeted backtracking search for homomorphisms and isomorphisms;
//! - [`query`] — evaluators for three homomorphism-closed query classes:
//!   unions of conjunctive queries, regular path queries with inverses, and
//!   negation-free Datalog;
//! - [`rewrite`] — the instance transformations: edge iteration, dissociation,
//!   fine dissociation, and star collapse;
//! - [`mixed`] — instances and queries over signatures mixing arity 1 and 2,
//!   and the translation that rewrites unary relations into binary self-loops;
//! - [`pattern`] — edge metrics, iterability probing, model minimization, and
//!   the search for minimal tight patterns;
//! - [`prob`] — tuple-independent databases with exact rational probabilities
//!   and exact query probability by possible-world enumeration;
//! - [`reduction`] — codings of bipartite-graph counting and of undirected
//!   source-target reliability into query probability, brute-force counters
//!   for both source problems, and end-to-end equality verification;
//! - [`cli`] — the `pqe` command-line tool.
//!
//! All values are immutable after construction and all operations are pure,
//! so everything can be called concurrently. Outputs are deterministic:
//! collections are ordered, fresh names are derived from the inputs, and the
//! sampling paths take an explicit RNG seed.
//!
//! The `examples/` directory has one runnable program per capability; start
//! with `cargo run --example eval_queries`.

pub mod cli;
pub mod hom;
pub mod instance;
pub mod mixed;
pub mod pattern;
pub mod prob;
pub mod query;
pub mod reduction;
pub mod rewrite;

use thiserror::Error;

/// Errors shared by the whole crate.
///
/// Limit-style outcomes ([`Error::BudgetExhausted`], [`Error::WorldCapExceeded`])
/// are deliberately distinct from negative answers: a search that ran out of
/// budget is never reported as "no homomorphism", and an enumeration that
/// would exceed the world cap is refused rather than truncated.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("({0}, {1}) is not an edge of the instance")]
    NotAnEdge(String, String),

    #[error("({0}, {1}) is a leaf edge")]
    LeafEdge(String, String),

    #[error("invalid incident pair: {0}")]
    InvalidIncidentPair(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("homomorphism search budget exhausted after {0} steps")]
    BudgetExhausted(u64),

    #[error("{needed} possible worlds exceed the cap of {cap}")]
    WorldCapExceeded { needed: u128, cap: u128 },

    #[error("relation name clash: {0}")]
    NameClash(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
