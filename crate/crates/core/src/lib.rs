//! Symbolic regression over a small grammar of rational expressions, with
//! asymptotic leading-power constraints.
//!
//! The pieces, bottom-up: [`grammar`] (derivations, parsing, masks),
//! [`rational`] (exact leading powers and canonical keys), [`objective`]
//! (data and power errors), [`corpus`] (dataset generation), [`policy`]
//! (next-rule distributions), [`mcts`] and [`ea`] (search), [`metrics`]
//! (generative-model evaluation), [`batch`] (many-target runs and summaries).

pub mod arith;
pub mod batch;
pub mod corpus;
pub mod ea;
pub mod grammar;
pub mod mcts;
pub mod metrics;
pub mod objective;
pub mod policy;
pub mod poly;
pub mod rational;

pub use arith::Arith;
pub use grammar::{DerivationState, Expr, RuleId};
pub use rational::{CanonicalKey, Condition, LeadingPowers};
