//! Forward-chaining metric temporal planner.
//!
//! The planner searches over time-stamped states ([`state`]) with A*
//! ([`search`]), guided by heuristics ([`heuristics`]) read off a relaxed
//! temporal planning graph with time-sensitive cost functions ([`rtpg`]).
//! Solutions can be relaxed into precedence-constrained plans
//! ([`partialize`]).

pub mod model;
pub mod state;
pub mod rtpg;
pub mod heuristics;
pub mod search;
pub mod partialize;
pub mod cli;
