//! A* over time-stamped states.
//!
//! A node's `g` mirrors the objective: `alpha·(execution cost so far) +
//! (1 - alpha)·(time committed so far)`, where committed time covers the
//! clock, scheduled events and the ends of started actions. `h` comes from
//! [`crate::heuristics`] with makespan measured from that committed time.
//! Successors are every applicable action plus advancing the clock.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

pub use crate::heuristics::{HeuristicMode, ObjectiveConfig};
use crate::heuristics::Heuristic;
use crate::model::Problem;
use crate::state::{PCPlan, State, StateKey};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Limits {
    pub timeout: Option<Duration>,
    pub max_expansions: Option<usize>,
}

impl Limits {
    pub fn timeout(seconds: f64) -> Self {
        Limits { timeout: Some(Duration::from_secs_f64(seconds)), max_expansions: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub expanded: usize,
    pub generated: usize,
    pub pruned: usize,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SearchError {
    #[error("no plan exists ({} states expanded)", .0.expanded)]
    Unsolvable(SearchStats),
    #[error("search limit reached after {} expansions", .0.expanded)]
    ResourceLimit(SearchStats),
    #[error("invalid objective: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub state: State,
    pub g: f64,
    pub h: f64,
    pub f: f64,
    pub seq: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub plan: PCPlan,
    pub state: State,
    pub cost: f64,
    pub makespan: f64,
    pub stats: SearchStats,
}

/// Path term of a node under `config`.
pub fn path_value(state: &State, config: &ObjectiveConfig) -> f64 {
    config.objective(state.g_cost, state.committed_time())
}

/// `(g, h)` for `state`.
pub fn evaluate(state: &State, heuristic: &Heuristic) -> (f64, f64) {
    let g = path_value(state, &heuristic.config);
    let h = heuristic.evaluate(state, state.committed_time()).value;
    (g, h)
}

struct Entry {
    f: f64,
    g: f64,
    cost: f64,
    seq: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // max-heap: smaller f, then cheaper so far, then larger g, then older first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(other.cost.total_cmp(&self.cost))
            .then(self.g.total_cmp(&other.g))
            .then(other.seq.cmp(&self.seq))
    }
}

fn validate(config: &ObjectiveConfig) -> Result<(), SearchError> {
    if !(0.0..=1.0).contains(&config.alpha) {
        return Err(SearchError::Config(format!("alpha must lie in [0, 1], got {}", config.alpha)));
    }
    Ok(())
}

/// Best-first search from the initial state.
pub fn plan(problem: &Problem, config: &ObjectiveConfig, limits: &Limits) -> Result<Solution, SearchError> {
    validate(config)?;
    let started = Instant::now();
    let heuristic = Heuristic::new(problem, *config);
    let mut stats = SearchStats::default();
    let mut nodes: Vec<SearchNode> = Vec::new();
    let mut open = BinaryHeap::new();
    let mut closed: HashMap<StateKey, Vec<(f64, f64)>> = HashMap::new();

    let push = |state: State, nodes: &mut Vec<SearchNode>, open: &mut BinaryHeap<Entry>, stats: &mut SearchStats| {
        let (g, h) = evaluate(&state, &heuristic);
        stats.generated += 1;
        if !h.is_finite() {
            stats.pruned += 1;
            return;
        }
        let seq = nodes.len();
        open.push(Entry { f: g + h, g, cost: state.g_cost, seq });
        nodes.push(SearchNode { state, g, h, f: g + h, seq });
    };
    push(State::initial(problem), &mut nodes, &mut open, &mut stats);

    while let Some(Entry { seq, .. }) = open.pop() {
        if limits.timeout.is_some_and(|t| started.elapsed() >= t)
            || limits.max_expansions.is_some_and(|m| stats.expanded >= m)
        {
            return Err(SearchError::ResourceLimit(stats));
        }
        let node = &nodes[seq];
        let key = node.state.key(problem);
        let (t, g) = (node.state.time, node.g);
        let seen = closed.entry(key).or_default();
        if seen.iter().any(|&(t0, g0)| t0 <= t && g0 <= g) {
            stats.pruned += 1;
            continue;
        }
        seen.push((t, g));
        let state = node.state.clone();
        if state.goal_satisfied(problem) {
            log::debug!("solved after {} expansions", stats.expanded);
            let plan = state.plan();
            return Ok(Solution {
                cost: plan.cost(problem),
                makespan: plan.makespan(),
                plan,
                state,
                stats,
            });
        }
        stats.expanded += 1;
        for id in problem.action_ids() {
            if let Ok(child) = state.try_apply(problem, id) {
                push(child, &mut nodes, &mut open, &mut stats);
            }
        }
        if !state.queue.is_empty() {
            match state.advance_time() {
                Ok(child) => push(child, &mut nodes, &mut open, &mut stats),
                Err(e) => log::debug!("advance failed at {:.3}: {e}", state.time),
            }
        }
    }
    Err(SearchError::Unsolvable(stats))
}
