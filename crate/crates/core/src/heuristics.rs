//! Heuristic estimates read off the relaxed temporal planning graph.
//!
//! All estimates trade cost against time through
//! `f = alpha·cost + (1 - alpha)·time`, where time is measured from a
//! caller-supplied origin (the time already committed in the evaluated
//! state).
//!
//! * [`direct_heuristic`] minimises `f` over the breakpoints of the goal cost
//!   functions.
//! * [`extract_relaxed_plan`] walks back from the goals choosing, for each
//!   open condition, the achiever that minimises `f` of the partial relaxed
//!   plan plus the direct estimate of what is still open. Its makespan can be
//!   tightened with static mutexes ([`mutex_adjust`]) and its cost with a
//!   resource balance ([`ResourceLedger`]).

use std::collections::VecDeque;

use serde::Serialize;

use crate::model::{compute_static_mutexes, ActionId, FactId, Goal, MutexTable, Problem, ResourceId, UpdateOp};
use crate::rtpg::{propagate, PropagationRule, Rtpg, Termination};
use crate::state::{EventKind, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HeuristicMode {
    Direct,
    RelaxedPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveConfig {
    pub alpha: f64,
    /// `None` propagates to the fixpoint.
    pub lookahead: Option<u32>,
    pub propagation: PropagationRule,
    /// How goal costs are combined in direct estimates.
    pub aggregation: PropagationRule,
    pub mode: HeuristicMode,
    pub mutex_adjust: bool,
    pub resource_adjust: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            alpha: 1.0,
            lookahead: None,
            propagation: PropagationRule::Sum,
            aggregation: PropagationRule::Sum,
            mode: HeuristicMode::RelaxedPlan,
            mutex_adjust: false,
            resource_adjust: true,
        }
    }
}

impl ObjectiveConfig {
    /// Max propagation and aggregation, direct estimate, no adjustments.
    pub fn admissible(alpha: f64) -> Self {
        ObjectiveConfig {
            alpha,
            lookahead: None,
            propagation: PropagationRule::Max,
            aggregation: PropagationRule::Max,
            mode: HeuristicMode::Direct,
            mutex_adjust: false,
            resource_adjust: false,
        }
    }

    pub fn termination(&self) -> Termination {
        match self.lookahead {
            Some(k) => Termination::Lookahead(k),
            None => Termination::Fixpoint,
        }
    }

    pub fn objective(&self, cost: f64, time: f64) -> f64 {
        self.alpha * cost + (1.0 - self.alpha) * time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectEstimate {
    pub value: f64,
    /// Time point at which the minimum is reached.
    pub time: f64,
    pub cost: f64,
}

impl DirectEstimate {
    pub const INFINITE: DirectEstimate =
        DirectEstimate { value: f64::INFINITY, time: f64::INFINITY, cost: f64::INFINITY };
}

/// `min_t alpha·agg_g C(g, min(t, t_g)) + (1 - alpha)·max(0, t - origin)`
/// over the breakpoints of the given `(fact, required time)` items.
pub fn direct_estimate(
    g: &Rtpg,
    items: &[(FactId, f64)],
    alpha: f64,
    aggregation: PropagationRule,
    origin: f64,
) -> DirectEstimate {
    if items.is_empty() {
        return DirectEstimate { value: 0.0, time: origin, cost: 0.0 };
    }
    let mut times: Vec<f64> = items
        .iter()
        .flat_map(|(f, until)| {
            g.facts[f.index()].breakpoints().iter().map(|b| b.time).filter(move |t| *t <= *until)
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut best = DirectEstimate::INFINITE;
    for t in times {
        let cost = aggregation.combine(items.iter().map(|(f, until)| g.fact_cost(*f, t.min(*until))));
        if !cost.is_finite() {
            continue;
        }
        let value = alpha * cost + (1.0 - alpha) * (t - origin).max(0.0);
        if value < best.value {
            best = DirectEstimate { value, time: t, cost };
        }
    }
    best
}

/// Direct estimate over the goals of the graph at their deadlines.
pub fn direct_heuristic(g: &Rtpg, alpha: f64, aggregation: PropagationRule, origin: f64) -> DirectEstimate {
    let items: Vec<(FactId, f64)> = g.goals.iter().map(|gl| (gl.fact, gl.deadline)).collect();
    direct_estimate(g, &items, alpha, aggregation, origin)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SlackMode {
    Min,
    Max,
    Sum,
}

/// Aggregated distance between each goal's first reachable time and its
/// deadline; `None` if a goal is unreachable.
pub fn slack_estimate(g: &Rtpg, mode: SlackMode) -> Option<f64> {
    let mut slacks = Vec::with_capacity(g.goals.len());
    for gl in &g.goals {
        let first = g.facts[gl.fact.index()].first_finite()?;
        slacks.push(gl.deadline - first);
    }
    Some(match mode {
        SlackMode::Min => slacks.into_iter().fold(f64::INFINITY, f64::min),
        SlackMode::Max => slacks.into_iter().fold(f64::NEG_INFINITY, f64::max),
        SlackMode::Sum => slacks.into_iter().sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Producer {
    /// Supplied by the state, available from the given time.
    State(f64),
    Step(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Consumer {
    Goal(usize),
    Step(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CausalLink {
    pub producer: Producer,
    pub fact: FactId,
    pub consumer: Consumer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RpStep {
    pub action: ActionId,
    /// Latest start time that still meets the consumer's requirement.
    pub required_start: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxedPlan {
    pub steps: Vec<RpStep>,
    pub links: Vec<CausalLink>,
    /// `(x, y)`: step `y` starts after step `x` ends.
    pub orderings: Vec<(usize, usize)>,
    /// Earliest start of each step under links and orderings.
    pub schedule: Vec<f64>,
    pub cost: f64,
    pub makespan: f64,
    /// Earliest time any step may start.
    pub start: f64,
    /// Makespan is measured from here.
    pub origin: f64,
}

impl RelaxedPlan {
    fn empty(start: f64, origin: f64) -> Self {
        RelaxedPlan {
            steps: Vec::new(),
            links: Vec::new(),
            orderings: Vec::new(),
            schedule: Vec::new(),
            cost: 0.0,
            makespan: 0.0,
            start,
            origin,
        }
    }

    pub fn actions(&self) -> Vec<ActionId> {
        self.steps.iter().map(|s| s.action).collect()
    }

    /// Sorted labels of the plan's actions.
    pub fn labels(&self, problem: &Problem) -> Vec<String> {
        let mut v: Vec<String> = self.steps.iter().map(|s| problem.action(s.action).label()).collect();
        v.sort();
        v
    }

    /// Recomputes earliest starts and makespan from links and orderings.
    pub fn reschedule(&mut self, problem: &Problem) {
        let n = self.steps.len();
        let mut es = vec![self.start; n];
        let mut end = self.start;
        // edges: (from, to, lag)
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        for l in &self.links {
            match (l.producer, l.consumer) {
                (Producer::State(t), Consumer::Step(c)) => es[c] = es[c].max(t),
                (Producer::State(t), Consumer::Goal(_)) => end = end.max(t),
                (Producer::Step(p), Consumer::Step(c)) => {
                    let off = problem.action(self.steps[p].action).add_offset(l.fact, self.steps[p].duration);
                    edges.push((p, c, off.unwrap_or(self.steps[p].duration)));
                }
                (Producer::Step(_), Consumer::Goal(_)) => {}
            }
        }
        for &(x, y) in &self.orderings {
            edges.push((x, y, self.steps[x].duration));
        }
        for _ in 0..=n {
            let mut changed = false;
            for &(a, b, lag) in &edges {
                if es[a] + lag > es[b] + 1e-12 {
                    es[b] = es[a] + lag;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for (i, s) in self.steps.iter().enumerate() {
            end = end.max(es[i] + s.duration);
        }
        self.schedule = es;
        self.makespan = (end - self.origin).max(0.0);
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.steps.len()];
        for l in &self.links {
            if let (Producer::Step(p), Consumer::Step(c)) = (l.producer, l.consumer) {
                adj[p].push(c);
            }
        }
        for &(x, y) in &self.orderings {
            adj[x].push(y);
        }
        let mut seen = vec![false; self.steps.len()];
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            if v == to {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            queue.extend(adj[v].iter().copied());
        }
        false
    }

    /// Causal links that `x ≺ y` would cut: links into `y` on a fact `x`
    /// deletes, from a producer other than `x`.
    fn invalidated(&self, problem: &Problem, x: usize, y: usize) -> usize {
        let deleter = problem.action(self.steps[x].action);
        self.links
            .iter()
            .filter(|l| l.consumer == Consumer::Step(y) && l.producer != Producer::Step(x))
            .filter(|l| deleter.deletes().any(|e| e.fact == l.fact))
            .count()
    }
}

/// Orders every statically mutex pair of steps, choosing for each pair the
/// direction that cuts fewer causal links (earlier step first on ties) and
/// never closing a cycle, then reschedules.
pub fn mutex_adjust(rp: &RelaxedPlan, problem: &Problem, mutexes: &MutexTable) -> RelaxedPlan {
    let mut out = rp.clone();
    out.orderings.clear();
    let n = out.steps.len();
    for i in 0..n {
        for j in i + 1..n {
            if !mutexes.is_mutex(out.steps[i].action, out.steps[j].action) {
                continue;
            }
            let forward_ok = !out.reaches(j, i);
            let backward_ok = !out.reaches(i, j);
            let pair = match (forward_ok, backward_ok) {
                (true, false) => (i, j),
                (false, true) => (j, i),
                (true, true) => {
                    if out.invalidated(problem, j, i) < out.invalidated(problem, i, j) {
                        (j, i)
                    } else {
                        (i, j)
                    }
                }
                (false, false) => continue,
            };
            out.orderings.push(pair);
        }
    }
    out.reschedule(problem);
    out
}

/// When a relaxed plan consumes more of a resource than the state holds plus
/// what the plan produces, charges the cost of the producer actions needed
/// to cover the deficit.
#[derive(Debug, Clone)]
pub struct ResourceLedger {
    /// Resources checked by some resource condition.
    tracked: Vec<ResourceId>,
    /// Best producer per tracked resource: `(action, Δ, cost)`.
    producers: Vec<Option<(ActionId, f64, f64)>>,
}

/// `⌈deficit / Δ⌉·C(A_R)` for `deficit = con - (init + pro)`, zero when there
/// is no deficit and infinite when there is no producer.
pub fn resource_adjustment(con: f64, init: f64, pro: f64, producer: Option<(f64, f64)>) -> f64 {
    let deficit = con - (init + pro);
    if deficit <= 1e-9 {
        return 0.0;
    }
    match producer {
        Some((delta, cost)) if delta > 0.0 => (deficit / delta - 1e-9).ceil() * cost,
        _ => f64::INFINITY,
    }
}

fn static_amount(problem: &Problem, a: ActionId, r: ResourceId, resources: &[f64], duration: f64) -> (f64, f64) {
    let mut con = 0.0;
    let mut pro = 0.0;
    for u in problem.action(a).resource_updates.iter().filter(|u| u.resource == r) {
        let Ok(v) = u.rhs.eval(resources, Some(duration)) else { continue };
        match u.op {
            UpdateOp::Increase if v >= 0.0 => pro += v,
            UpdateOp::Increase => con -= v,
            UpdateOp::Decrease if v >= 0.0 => con += v,
            UpdateOp::Decrease => pro -= v,
            _ => {}
        }
    }
    (con, pro)
}

impl ResourceLedger {
    pub fn new(problem: &Problem) -> Self {
        let mut tracked = Vec::new();
        let mut buf = Vec::new();
        for a in &problem.actions {
            for c in &a.resource_conditions {
                c.lhs.resources(&mut buf);
                c.rhs.resources(&mut buf);
            }
        }
        for r in buf {
            if !tracked.contains(&r) {
                tracked.push(r);
            }
        }
        tracked.sort();
        let producers = tracked
            .iter()
            .map(|&r| {
                let mut best: Option<(ActionId, f64, f64)> = None;
                for id in problem.action_ids() {
                    let a = problem.action(id);
                    let Some(d) = a.duration.as_const() else { continue };
                    let (_, pro) = static_amount(problem, id, r, &[], d);
                    let better = match best {
                        None => pro > 0.0,
                        Some((_, delta, cost)) => pro > delta || (pro == delta && a.exec_cost < cost),
                    };
                    if better {
                        best = Some((id, pro, a.exec_cost));
                    }
                }
                best
            })
            .collect();
        ResourceLedger { tracked, producers }
    }

    pub fn tracked(&self) -> &[ResourceId] {
        &self.tracked
    }

    pub fn producer(&self, r: ResourceId) -> Option<(ActionId, f64, f64)> {
        let i = self.tracked.iter().position(|x| *x == r)?;
        self.producers[i]
    }

    /// Extra cost for `rp` evaluated from `state`.
    pub fn adjust(&self, problem: &Problem, rp: &RelaxedPlan, state: &State) -> f64 {
        let mut extra = 0.0;
        for (i, &r) in self.tracked.iter().enumerate() {
            let mut init = state.resources[r.index()];
            if init.is_nan() {
                continue;
            }
            for e in &state.queue {
                if let EventKind::Update { resource, op, value } = e.kind {
                    if resource == r {
                        match op {
                            UpdateOp::Increase => init += value,
                            UpdateOp::Decrease => init -= value,
                            _ => {}
                        }
                    }
                }
            }
            let (mut con, mut pro) = (0.0, 0.0);
            for s in &rp.steps {
                let (c, p) = static_amount(problem, s.action, r, &state.resources, s.duration);
                con += c;
                pro += p;
            }
            extra += resource_adjustment(con, init, pro, self.producers[i].map(|(_, d, c)| (d, c)));
        }
        extra
    }
}

#[derive(Debug, Clone)]
struct Open {
    fact: FactId,
    time: f64,
    consumer: Consumer,
    seq: usize,
}

fn state_support(state: &State, fact: FactId, by: f64) -> Option<f64> {
    if state.holds(fact) {
        return Some(state.time);
    }
    state.pending_add(fact).filter(|t| *t <= by)
}

/// Existing step adding `fact` no later than `by`, earliest add first.
fn step_support(problem: &Problem, rp: &RelaxedPlan, fact: FactId, by: f64) -> Option<usize> {
    rp.steps
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let off = problem.action(s.action).add_offset(fact, s.duration)?;
            let at = s.required_start + off;
            (at <= by + 1e-9).then_some((i, at))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

struct Extractor<'a> {
    problem: &'a Problem,
    graph: &'a Rtpg,
    state: &'a State,
    config: &'a ObjectiveConfig,
    mutexes: Option<&'a MutexTable>,
}

impl Extractor<'_> {
    fn finalize(&self, rp: &mut RelaxedPlan) {
        match self.mutexes {
            Some(m) => *rp = mutex_adjust(rp, self.problem, m),
            None => rp.reschedule(self.problem),
        }
    }

    /// Adds step `a` for `open`, linking its preconditions and closing any
    /// open conditions it satisfies. Returns the new open conditions.
    fn add_step(&self, rp: &mut RelaxedPlan, open: &mut Vec<Open>, seq: &mut usize, item: &Open, a: ActionId, t_a: f64) {
        let action = self.problem.action(a);
        let d = self.graph.duration(a).unwrap_or_default();
        let idx = rp.steps.len();
        rp.steps.push(RpStep { action: a, required_start: t_a, duration: d });
        rp.cost += action.exec_cost;
        rp.links.push(CausalLink { producer: Producer::Step(idx), fact: item.fact, consumer: item.consumer });
        open.retain(|o| {
            match action.add_offset(o.fact, d) {
                Some(off) if t_a + off <= o.time + 1e-9 => {
                    rp.links.push(CausalLink { producer: Producer::Step(idx), fact: o.fact, consumer: o.consumer });
                    false
                }
                _ => true,
            }
        });
        for p in action.preconditions() {
            if let Some(t) = state_support(self.state, p, t_a) {
                rp.links.push(CausalLink { producer: Producer::State(t), fact: p, consumer: Consumer::Step(idx) });
            } else if let Some(s) = step_support(self.problem, rp, p, t_a).filter(|s| *s != idx) {
                rp.links.push(CausalLink { producer: Producer::Step(s), fact: p, consumer: Consumer::Step(idx) });
            } else {
                open.push(Open { fact: p, time: t_a, consumer: Consumer::Step(idx), seq: *seq });
                *seq += 1;
            }
        }
    }

    /// Achievers of `fact` able to add it by `time`, skipping those that need
    /// a fact from `chain` (the facts this support is ultimately for).
    fn candidates(&self, fact: FactId, time: f64, chain: &[FactId]) -> Vec<(ActionId, f64)> {
        let all = self.reachable_achievers(fact, time);
        let acyclic: Vec<_> = all
            .iter()
            .copied()
            .filter(|(a, _)| !self.problem.action(*a).preconditions().any(|p| chain.contains(&p)))
            .collect();
        if acyclic.is_empty() {
            all
        } else {
            acyclic
        }
    }

    fn reachable_achievers(&self, fact: FactId, time: f64) -> Vec<(ActionId, f64)> {
        self.problem
            .achievers(fact)
            .iter()
            .filter_map(|&a| {
                let action = self.problem.action(a);
                let d = self.graph.duration(a)?;
                let off = action.add_offset(fact, d)?;
                // the achieving event must have been reached by propagation
                if self.graph.actions[a.index()].first_finite()? + off > self.graph.tau_inf + 1e-9 {
                    return None;
                }
                let t_a = time - off;
                (self.graph.action_cost(a, t_a).is_finite()).then_some((a, t_a))
            })
            .collect()
    }

    /// Objective of the plan with `a` added plus the estimate of what stays
    /// open, and the execution cost part of that.
    fn score(&self, rp: &RelaxedPlan, open: &[Open], item: &Open, a: ActionId, t_a: f64) -> (f64, f64) {
        let mut trial = rp.clone();
        let mut rest = open.to_vec();
        let mut seq = usize::MAX / 2;
        self.add_step(&mut trial, &mut rest, &mut seq, item, a, t_a);
        self.finalize(&mut trial);
        let items: Vec<(FactId, f64)> = rest.iter().map(|o| (o.fact, o.time)).collect();
        let h_rest = direct_estimate(self.graph, &items, self.config.alpha, self.config.aggregation, trial.origin);
        (self.config.objective(trial.cost, trial.makespan) + h_rest.value, trial.cost + h_rest.cost)
    }

    fn run(&self, origin: f64) -> Option<RelaxedPlan> {
        let g = self.graph;
        let mut rp = RelaxedPlan::empty(self.state.time, origin);
        let mut open: Vec<Open> = Vec::new();
        // per step: the fact it was added for and that fact's consumer
        let mut parents: Vec<(FactId, Consumer)> = Vec::new();
        let mut seq = 0;
        for (i, goal) in g.goals.iter().enumerate() {
            let time = if goal.deadline.is_finite() { goal.deadline } else { g.tau_inf };
            open.push(Open { fact: goal.fact, time, consumer: Consumer::Goal(i), seq });
            seq += 1;
        }
        let cap = 4 * (self.problem.facts.len() + 1) * (self.problem.actions.len() + 1);
        let mut iterations = 0;
        while !open.is_empty() {
            iterations += 1;
            if iterations > cap {
                return None;
            }
            let pick = (0..open.len())
                .max_by(|&a, &b| open[a].time.total_cmp(&open[b].time).then(open[b].seq.cmp(&open[a].seq)))
                .unwrap_or(0);
            let mut item = open.remove(pick);
            if let Some(t) = state_support(self.state, item.fact, item.time) {
                rp.links.push(CausalLink { producer: Producer::State(t), fact: item.fact, consumer: item.consumer });
                continue;
            }
            if let Some(s) = step_support(self.problem, &rp, item.fact, item.time) {
                rp.links.push(CausalLink { producer: Producer::Step(s), fact: item.fact, consumer: item.consumer });
                continue;
            }
            let mut chain = vec![item.fact];
            let mut up = item.consumer;
            while let Consumer::Step(j) = up {
                chain.push(parents[j].0);
                up = parents[j].1;
            }
            let mut cands = self.candidates(item.fact, item.time, &chain);
            if cands.is_empty() {
                // not reachable by the required time: settle for the earliest
                let first = g.facts[item.fact.index()].first_finite()?;
                item.time = first;
                if let Some(t) = state_support(self.state, item.fact, first) {
                    rp.links.push(CausalLink { producer: Producer::State(t), fact: item.fact, consumer: item.consumer });
                    continue;
                }
                cands = self.candidates(item.fact, first, &chain);
                if cands.is_empty() {
                    return None;
                }
            }
            let mut best: Option<(f64, f64, f64, String, ActionId, f64)> = None;
            for (a, t_a) in cands {
                let (score, total) = self.score(&rp, &open, &item, a, t_a);
                let action = self.problem.action(a);
                let better = match &best {
                    None => true,
                    Some((s, tc, c, l, _, _)) => {
                        score < *s - 1e-9
                            || ((score - *s).abs() <= 1e-9
                                && (total < *tc - 1e-9
                                    || ((total - *tc).abs() <= 1e-9
                                        && (action.exec_cost < *c || (action.exec_cost == *c && action.label() < *l)))))
                    }
                };
                if better {
                    best = Some((score, total, action.exec_cost, action.label(), a, t_a));
                }
            }
            let (_, _, _, _, a, t_a) = best?;
            self.add_step(&mut rp, &mut open, &mut seq, &item, a, t_a);
            parents.push((item.fact, item.consumer));
        }
        self.finalize(&mut rp);
        Some(rp)
    }
}

/// Backward relaxed-plan extraction from the goals of `graph`. Goals are
/// required by their deadlines, or by the end of propagation when they have
/// none. `None` if some goal cannot be supported at all.
pub fn extract_relaxed_plan(
    graph: &Rtpg,
    state: &State,
    problem: &Problem,
    config: &ObjectiveConfig,
    mutexes: Option<&MutexTable>,
    origin: f64,
) -> Option<RelaxedPlan> {
    Extractor { problem, graph, state, config, mutexes }.run(origin)
}

/// Result of evaluating a state.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub value: f64,
    pub relaxed_plan: Option<RelaxedPlan>,
    pub direct: Option<DirectEstimate>,
}

impl Estimate {
    fn infinite() -> Self {
        Estimate { value: f64::INFINITY, relaxed_plan: None, direct: None }
    }
}

/// Heuristic evaluator bound to one problem and configuration.
#[derive(Debug, Clone)]
pub struct Heuristic<'a> {
    pub problem: &'a Problem,
    pub config: ObjectiveConfig,
    mutexes: Option<MutexTable>,
    ledger: Option<ResourceLedger>,
}

impl<'a> Heuristic<'a> {
    pub fn new(problem: &'a Problem, config: ObjectiveConfig) -> Self {
        let mutexes = config.mutex_adjust.then(|| compute_static_mutexes(&problem.actions));
        let ledger = config.resource_adjust.then(|| ResourceLedger::new(problem));
        Heuristic { problem, config, mutexes, ledger }
    }

    pub fn open_goals(&self, state: &State) -> Vec<Goal> {
        self.problem.goals.iter().filter(|g| !state.goal_holds(g.fact, g.deadline)).cloned().collect()
    }

    pub fn graph(&self, state: &State) -> Rtpg {
        let goals = self.open_goals(state);
        propagate(state, self.problem, &goals, self.config.propagation, self.config.termination())
    }

    /// `h(state)`, with makespan measured from `origin`.
    pub fn evaluate(&self, state: &State, origin: f64) -> Estimate {
        let goals = self.open_goals(state);
        if goals.is_empty() {
            return Estimate { value: 0.0, relaxed_plan: None, direct: None };
        }
        let graph = propagate(state, self.problem, &goals, self.config.propagation, self.config.termination());
        if !graph.goals_reachable() {
            return Estimate::infinite();
        }
        match self.config.mode {
            HeuristicMode::Direct => {
                let d = direct_heuristic(&graph, self.config.alpha, self.config.aggregation, origin);
                Estimate { value: d.value, relaxed_plan: None, direct: Some(d) }
            }
            HeuristicMode::RelaxedPlan => {
                let Some(rp) =
                    extract_relaxed_plan(&graph, state, self.problem, &self.config, self.mutexes.as_ref(), origin)
                else {
                    return Estimate::infinite();
                };
                let extra = self.ledger.as_ref().map_or(0.0, |l| l.adjust(self.problem, &rp, state));
                let value = self.config.objective(rp.cost + extra, rp.makespan);
                Estimate { value, relaxed_plan: Some(rp), direct: None }
            }
        }
    }
}
