//! Relaxed temporal planning graph with time-sensitive cost propagation.
//!
//! Starting from a state, the graph tracks for every fact and action a
//! non-increasing step function `C(x, t)`: the cheapest known cost of having
//! `x` by time `t`. Delete effects and resource constraints are ignored.
//! Propagation is event driven: popping `⟨f, t, c, A⟩` lowers `C(f, ·)` from
//! `t` on, which may lower the cost of actions needing `f`, which in turn
//! schedule their add effects at `t + offset`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::model::{ActionId, FactId, Goal, Problem};
use crate::state::State;

/// Where a fact's cost at some time comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Source {
    /// True in (or already scheduled by) the evaluated state.
    State,
    Action(ActionId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Breakpoint {
    pub time: f64,
    pub cost: f64,
    pub source: Option<Source>,
}

/// Piecewise-constant, non-increasing function of time; `+∞` before the
/// first breakpoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CostFunction {
    points: Vec<Breakpoint>,
}

impl CostFunction {
    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.points
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|b| (b.time, b.cost)).collect()
    }

    fn index_at(&self, t: f64) -> Option<usize> {
        let n = self.points.partition_point(|b| b.time <= t);
        n.checked_sub(1)
    }

    pub fn query(&self, t: f64) -> f64 {
        self.index_at(t).map_or(f64::INFINITY, |i| self.points[i].cost)
    }

    /// Supporter at time `t` (the source of the active breakpoint).
    pub fn source_at(&self, t: f64) -> Option<Source> {
        self.index_at(t).and_then(|i| self.points[i].source)
    }

    pub fn first_finite(&self) -> Option<f64> {
        self.points.first().map(|b| b.time)
    }

    pub fn min_cost(&self) -> f64 {
        self.points.last().map_or(f64::INFINITY, |b| b.cost)
    }

    pub fn is_finite(&self) -> bool {
        !self.points.is_empty()
    }

    /// Lowers the function to `cost` from `time` on. Returns false (and
    /// changes nothing) unless this is a strict improvement at `time`.
    pub fn improve(&mut self, time: f64, cost: f64, source: Option<Source>) -> bool {
        if cost >= self.query(time) {
            return false;
        }
        let at = self.points.partition_point(|b| b.time < time);
        let mut end = at;
        while end < self.points.len() && self.points[end].cost >= cost {
            end += 1;
        }
        self.points.splice(at..end, [Breakpoint { time, cost, source }]);
        debug_assert!(self.is_well_formed());
        true
    }

    /// Times strictly increase and costs strictly decrease.
    pub fn is_well_formed(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[0].time < w[1].time && w[0].cost > w[1].cost)
            && self.points.iter().all(|b| b.cost >= 0.0 && !b.cost.is_nan())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PropagationRule {
    Max,
    Sum,
}

impl PropagationRule {
    pub fn combine<I: IntoIterator<Item = f64>>(self, costs: I) -> f64 {
        match self {
            PropagationRule::Max => costs.into_iter().fold(0.0, f64::max),
            PropagationRule::Sum => costs.into_iter().sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    /// Run until no queued event can lower a cost, ignoring events after the
    /// latest goal deadline.
    Deadline,
    /// Run until the queue is empty.
    Fixpoint,
    /// Once every goal is reachable, process `k` more sweeps of the queue.
    Lookahead(u32),
}

#[derive(Debug, Clone, Copy)]
struct GraphEvent {
    time: f64,
    cost: f64,
    fact: FactId,
    source: Source,
    seq: u64,
}

impl PartialEq for GraphEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for GraphEvent {}

impl PartialOrd for GraphEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GraphEvent {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Rtpg {
    pub facts: Vec<CostFunction>,
    pub actions: Vec<CostFunction>,
    /// Durations evaluated in the source state; `None` when undefined there.
    pub durations: Vec<Option<f64>>,
    pub goals: Vec<Goal>,
    pub origin: f64,
    /// Latest event time processed.
    pub tau_inf: f64,
    pub events_processed: usize,
}

impl Rtpg {
    pub fn fact_cost(&self, f: FactId, t: f64) -> f64 {
        self.facts[f.index()].query(t)
    }

    pub fn action_cost(&self, a: ActionId, t: f64) -> f64 {
        self.actions[a.index()].query(t)
    }

    pub fn duration(&self, a: ActionId) -> Option<f64> {
        self.durations[a.index()]
    }

    /// Earliest time at which every goal has finite cost.
    pub fn tau0(&self) -> Option<f64> {
        let mut t = self.origin;
        for g in &self.goals {
            t = t.max(self.facts[g.fact.index()].first_finite()?);
        }
        Some(t)
    }

    pub fn goals_reachable(&self) -> bool {
        self.goals.iter().all(|g| self.facts[g.fact.index()].query(g.deadline) < f64::INFINITY)
    }

    /// `fact,time,cost,supporter` rows for every fact breakpoint.
    pub fn to_csv(&self, problem: &Problem) -> String {
        let mut out = String::from("fact,time,cost,supporter\n");
        for (i, f) in self.facts.iter().enumerate() {
            for b in f.breakpoints() {
                let who = match b.source {
                    Some(Source::State) | None => "init".to_string(),
                    Some(Source::Action(a)) => problem.action(a).label(),
                };
                let _ = writeln!(out, "\"{}\",{},{},\"{}\"", problem.facts[i], b.time, b.cost, who);
            }
        }
        out
    }
}

/// Builds the graph for `state` towards `goals` (typically the goals not yet
/// satisfied in `state`).
pub fn propagate(
    state: &State,
    problem: &Problem,
    goals: &[Goal],
    rule: PropagationRule,
    termination: Termination,
) -> Rtpg {
    let origin = state.time;
    let n_actions = problem.actions.len();
    let durations: Vec<Option<f64>> = problem
        .actions
        .iter()
        .map(|a| {
            let d = a.eval_duration(&state.resources).ok()?;
            a.check_offsets(d).ok()?;
            Some(d)
        })
        .collect();
    let mut g = Rtpg {
        facts: vec![CostFunction::default(); problem.facts.len()],
        actions: vec![CostFunction::default(); n_actions],
        durations,
        goals: goals.to_vec(),
        origin,
        tau_inf: origin,
        events_processed: 0,
    };
    let horizon = goals.iter().map(|g| g.deadline).fold(f64::NEG_INFINITY, f64::max);
    let horizon = if goals.is_empty() { f64::INFINITY } else { horizon };

    let mut seq = 0u64;
    let mut current: BinaryHeap<GraphEvent> = BinaryHeap::new();
    let mut next: BinaryHeap<GraphEvent> = BinaryHeap::new();
    let mut push = |heap: &mut BinaryHeap<GraphEvent>, time, cost, fact, source| {
        heap.push(GraphEvent { time, cost, fact, source, seq });
        seq += 1;
    };
    for f in state.facts.keys() {
        push(&mut current, origin, 0.0, *f, Source::State);
    }
    for e in &state.queue {
        if let crate::state::EventKind::Add(f) = e.kind {
            push(&mut current, e.time, 0.0, f, Source::State);
        }
    }
    // actions without logical conditions are enabled right away
    let mut enabled_now = Vec::new();
    for id in problem.action_ids() {
        if problem.action(id).conditions.is_empty() && g.durations[id.index()].is_some() {
            g.actions[id.index()].improve(origin, 0.0, None);
            enabled_now.push(id);
        }
    }
    for id in enabled_now {
        schedule(problem, &g, id, origin, 0.0, &mut |t, c, f, s| push(&mut current, t, c, f, s));
    }

    let lookahead = match termination {
        Termination::Lookahead(k) => Some(k),
        Termination::Fixpoint | Termination::Deadline => None,
    };
    // Some(t) once all goals became reachable at time t
    let mut reached: Option<f64> = None;
    let mut sweep: u32 = 0;
    let mut sweeping = false;

    loop {
        let e = match current.pop() {
            Some(e) => e,
            None => {
                if sweeping && lookahead.is_some_and(|k| sweep < k) && !next.is_empty() {
                    std::mem::swap(&mut current, &mut next);
                    sweep += 1;
                    continue;
                }
                break;
            }
        };
        if e.time > horizon {
            continue;
        }
        if let (Some(k), Some(t_reach), false) = (lookahead, reached, sweeping) {
            if e.time > t_reach {
                if k == 0 {
                    break;
                }
                sweeping = true;
                sweep = 1;
            }
        }
        g.events_processed += 1;
        g.tau_inf = g.tau_inf.max(e.time);
        if !g.facts[e.fact.index()].improve(e.time, e.cost, Some(e.source)) {
            continue;
        }
        // Deadline rule 2: a goal missed its deadline
        if !sweeping && goals.iter().any(|gl| gl.deadline < e.time && !g.facts[gl.fact.index()].is_finite()) {
            break;
        }
        if reached.is_none() && !goals.is_empty() && goals.iter().all(|gl| g.facts[gl.fact.index()].is_finite()) {
            reached = Some(e.time);
        }
        for &a in problem.consumers(e.fact) {
            if g.durations[a.index()].is_none() {
                continue;
            }
            let c = aggregate(problem, &g, a, e.time, rule);
            if c.is_finite() && g.actions[a.index()].improve(e.time, c, None) {
                let target = if sweeping { &mut next } else { &mut current };
                schedule(problem, &g, a, e.time, c, &mut |t, cost, f, s| push(target, t, cost, f, s));
            }
        }
    }
    g
}

/// Cost of enabling `a` at `t` under `rule`.
pub fn aggregate(problem: &Problem, g: &Rtpg, a: ActionId, t: f64, rule: PropagationRule) -> f64 {
    rule.combine(problem.action(a).preconditions().map(|f| g.fact_cost(f, t)))
}

fn schedule(
    problem: &Problem,
    g: &Rtpg,
    a: ActionId,
    t: f64,
    cost: f64,
    push: &mut dyn FnMut(f64, f64, FactId, Source),
) {
    let action = problem.action(a);
    let d = g.durations[a.index()].unwrap_or_default();
    for e in action.adds() {
        push(t + e.when.offset(d), cost + action.exec_cost, e.fact, Source::Action(a));
    }
}
