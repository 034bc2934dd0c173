//! Time-stamped states `(P, M, Π, Q, t)` and their transitions.
//!
//! `P` maps every true fact to the last time it was achieved, `M` holds the
//! resource values, `Π` the conditions that must persist until some future
//! time, and `Q` the events scheduled by already-started actions. Applying an
//! action never moves the clock; [`State::advance_time`] jumps to the next
//! event and applies everything scheduled for that instant.
//!
//! On top of the tuple a state carries the plan prefix that produced it, the
//! accumulated execution cost and the resource access windows of running
//! actions (used to keep concurrent resource accesses serialisable).

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    ActionId, CondTime, EvalError, FactId, GroundAction, Problem, ResourceId, UpdateOp,
};

/// Owner token for events and protections that come from the problem itself.
pub const INIT_OWNER: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EventKind {
    Add(FactId),
    Delete(FactId),
    /// `value` is the update amount, evaluated when the action started.
    Update { resource: ResourceId, op: UpdateOp, value: f64 },
    EndPersist(FactId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub owner: u32,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Protection {
    pub fact: FactId,
    pub until: f64,
    pub owner: u32,
}

/// Access window of a running action on one resource.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lock {
    pub resource: ResourceId,
    pub until: f64,
    pub owner: u32,
    pub writes: bool,
    /// Only `increase`/`decrease` writes and no reads: commutes with others
    /// of the same kind.
    pub commutes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanStep {
    pub action: ActionId,
    pub start: f64,
    pub duration: f64,
}

impl PlanStep {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Position-constrained plan: every action has a fixed start time.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct PCPlan {
    pub steps: Vec<PlanStep>,
}

impl PCPlan {
    pub fn new(steps: Vec<PlanStep>) -> Self {
        PCPlan { steps }
    }

    pub fn makespan(&self) -> f64 {
        self.steps.iter().map(PlanStep::end).fold(0.0, f64::max)
    }

    pub fn cost(&self, problem: &Problem) -> f64 {
        self.steps.iter().map(|s| problem.action(s.action).exec_cost).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Why an action cannot be started in a state.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Rejection {
    #[error("condition {0:?} does not hold")]
    MissingFact(FactId),
    #[error("resource condition #{0} does not hold")]
    ResourceCondition(usize),
    #[error("effect on {0:?} contradicts a scheduled event")]
    ContradictsEvent(FactId),
    #[error("deleting {0:?} breaks a protected condition")]
    BreaksProtection(FactId),
    #[error("scheduled deletion of {0:?} falls inside a condition window")]
    ThreatenedCondition(FactId),
    #[error("resource {0:?} is in use by a running action")]
    ResourceBusy(ResourceId),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl Rejection {
    pub fn describe(&self, problem: &Problem) -> String {
        match self {
            Rejection::MissingFact(f) => format!("condition {} does not hold", problem.fact_name(*f)),
            Rejection::ContradictsEvent(f) => {
                format!("effect on {} contradicts a scheduled event", problem.fact_name(*f))
            }
            Rejection::BreaksProtection(f) => {
                format!("deleting {} breaks a protected condition", problem.fact_name(*f))
            }
            Rejection::ThreatenedCondition(f) => {
                format!("scheduled deletion of {} falls inside the condition window", problem.fact_name(*f))
            }
            Rejection::ResourceBusy(r) => {
                format!("resource {} is in use by a running action", problem.resource_name(*r))
            }
            Rejection::ResourceCondition(_) | Rejection::Eval(_) => self.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdvanceError {
    #[error("no pending events")]
    EmptyQueue,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct State {
    pub facts: BTreeMap<FactId, f64>,
    pub resources: Vec<f64>,
    pub protections: Vec<Protection>,
    /// Sorted by `(time, seq)`.
    pub queue: Vec<Event>,
    pub locks: Vec<Lock>,
    pub time: f64,
    pub prefix: Vec<PlanStep>,
    pub g_cost: f64,
    next_seq: u64,
}

/// Hashable content of a state, excluding the plan prefix and event
/// ownership. Pending times are taken relative to the clock, so two states
/// that differ only by a shift in time share a key; achievement times only
/// count as "before the deadline or not" for goals. Duplicate logical events
/// collapse.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateKey {
    facts: Vec<(FactId, bool)>,
    resources: Vec<u64>,
    protections: Vec<(FactId, i64)>,
    queue: Vec<(bool, i64, u8, u32, u8, u64)>,
    locks: Vec<(ResourceId, i64, bool, bool)>,
}

/// Per-resource summary of how an action touches it. The resource is
/// locked from the start for `window_end` time units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Access {
    pub resource: ResourceId,
    pub reads: bool,
    pub writes: bool,
    pub additive_only: bool,
    pub window_end: f64,
}

impl Access {
    /// Only `increase`/`decrease` writes that read nothing.
    pub fn commutes(&self) -> bool {
        self.writes && self.additive_only && !self.reads
    }

    pub fn conflicts(&self, other: &Access) -> bool {
        self.resource == other.resource && (self.writes || other.writes) && !(self.commutes() && other.commutes())
    }
}

pub fn accesses(action: &GroundAction, duration: f64) -> Vec<Access> {
    let mut out: Vec<Access> = Vec::new();
    fn slot(out: &mut Vec<Access>, r: ResourceId) -> &mut Access {
        if let Some(i) = out.iter().position(|a| a.resource == r) {
            return &mut out[i];
        }
        out.push(Access { resource: r, reads: false, writes: false, additive_only: true, window_end: 0.0 });
        out.last_mut().unwrap()
    }
    let mut buf = Vec::new();
    action.duration.resources(&mut buf);
    for r in buf.drain(..) {
        slot(&mut out, r).reads = true;
    }
    for c in &action.resource_conditions {
        c.lhs.resources(&mut buf);
        c.rhs.resources(&mut buf);
        let end = c.when.window_end(duration);
        for r in buf.drain(..) {
            let a = slot(&mut out, r);
            a.reads = true;
            a.window_end = a.window_end.max(end);
        }
    }
    for u in &action.resource_updates {
        let at = u.when.offset(duration);
        u.rhs.resources(&mut buf);
        for r in buf.drain(..) {
            let a = slot(&mut out, r);
            a.reads = true;
            a.window_end = a.window_end.max(at);
        }
        let a = slot(&mut out, u.resource);
        a.writes = true;
        a.additive_only &= u.op.is_additive();
        a.window_end = a.window_end.max(at);
    }
    out
}

impl State {
    pub fn initial(problem: &Problem) -> State {
        let mut s = State {
            facts: problem.init_facts.iter().map(|f| (*f, 0.0)).collect(),
            resources: problem.init_resources.clone(),
            protections: Vec::new(),
            queue: Vec::new(),
            locks: Vec::new(),
            time: 0.0,
            prefix: Vec::new(),
            g_cost: 0.0,
            next_seq: 0,
        };
        for e in &problem.init_events {
            let kind = if e.add { EventKind::Add(e.fact) } else { EventKind::Delete(e.fact) };
            s.push_event(e.time, INIT_OWNER, kind);
        }
        s
    }

    fn push_event(&mut self, time: f64, owner: u32, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let idx = self.queue.partition_point(|e| (e.time, e.seq) <= (time, seq));
        self.queue.insert(idx, Event { time, seq, owner, kind });
    }

    pub fn holds(&self, fact: FactId) -> bool {
        self.facts.contains_key(&fact)
    }

    pub fn last_event_time(&self) -> Option<f64> {
        self.queue.last().map(|e| e.time)
    }

    /// Latest of the clock, the last scheduled event and the end of every
    /// started action.
    pub fn committed_time(&self) -> f64 {
        let ends = self.prefix.iter().map(PlanStep::end).fold(self.time, f64::max);
        ends.max(self.last_event_time().unwrap_or(self.time))
    }

    pub fn plan(&self) -> PCPlan {
        PCPlan::new(self.prefix.clone())
    }

    fn pending(&self, fact: FactId, add: bool) -> impl Iterator<Item = &Event> + '_ {
        self.queue.iter().filter(move |e| match e.kind {
            EventKind::Add(f) => add && f == fact,
            EventKind::Delete(f) => !add && f == fact,
            _ => false,
        })
    }

    /// Earliest pending add of `fact`, if any.
    pub fn pending_add(&self, fact: FactId) -> Option<f64> {
        self.pending(fact, true).map(|e| e.time).next()
    }

    pub fn has_pending_delete(&self, fact: FactId) -> bool {
        self.pending(fact, false).next().is_some()
    }

    /// A goal `(p, d)` holds if `p` is true (or about to be added) strictly
    /// before `d` and no deletion of `p` is scheduled.
    pub fn goal_holds(&self, fact: FactId, deadline: f64) -> bool {
        if self.has_pending_delete(fact) {
            return false;
        }
        match self.facts.get(&fact) {
            Some(t) if *t < deadline => true,
            _ => self.pending_add(fact).is_some_and(|t| t < deadline),
        }
    }

    pub fn goal_satisfied(&self, problem: &Problem) -> bool {
        problem.goals.iter().all(|g| self.goal_holds(g.fact, g.deadline))
    }

    pub fn applicable(&self, problem: &Problem, id: ActionId) -> Result<bool, EvalError> {
        match self.try_apply(problem, id) {
            Ok(_) => Ok(true),
            Err(Rejection::Eval(e)) => Err(e),
            Err(_) => Ok(false),
        }
    }

    /// Panics if the action is not applicable; use [`State::try_apply`] to
    /// learn why.
    pub fn apply(&self, problem: &Problem, id: ActionId) -> State {
        match self.try_apply(problem, id) {
            Ok(s) => s,
            Err(r) => panic!("{} is not applicable: {}", problem.action(id).label(), r.describe(problem)),
        }
    }

    pub fn try_apply(&self, problem: &Problem, id: ActionId) -> Result<State, Rejection> {
        let action = problem.action(id);
        let t = self.time;
        let duration = action.eval_duration(&self.resources)?;
        action.check_offsets(duration)?;

        for c in &action.conditions {
            if !self.holds(c.fact) {
                return Err(Rejection::MissingFact(c.fact));
            }
        }
        for (i, c) in action.resource_conditions.iter().enumerate() {
            let lhs = c.lhs.eval(&self.resources, None)?;
            let rhs = c.rhs.eval(&self.resources, None)?;
            if !c.comparator.holds(lhs, rhs) {
                return Err(Rejection::ResourceCondition(i));
            }
        }

        // New protections: every condition with a window of positive length.
        let own: Vec<(FactId, f64)> = action
            .conditions
            .iter()
            .filter(|c| !matches!(c.when, CondTime::AtStart))
            .map(|c| (c.fact, t + c.when.window_end(duration)))
            .filter(|(_, until)| *until > t)
            .collect();

        // A pending deletion must not fall inside one of our windows.
        for (fact, until) in &own {
            if let Some(e) = self.pending(*fact, false).find(|e| e.time < *until) {
                let _ = e;
                return Err(Rejection::ThreatenedCondition(*fact));
            }
        }

        for (i, e) in action.effects.iter().enumerate() {
            let at = t + e.when.offset(duration);
            if self.pending(e.fact, !e.add).next().is_some() {
                return Err(Rejection::ContradictsEvent(e.fact));
            }
            if at > t {
                let clash = action.effects.iter().enumerate().any(|(j, o)| {
                    j != i && o.fact == e.fact && o.add != e.add && o.when.offset(duration) > 0.0
                });
                if clash {
                    return Err(Rejection::ContradictsEvent(e.fact));
                }
            }
            if !e.add {
                let protected = self
                    .protections
                    .iter()
                    .map(|p| (p.fact, p.until))
                    .chain(own.iter().copied())
                    .any(|(f, until)| f == e.fact && at < until);
                if protected {
                    return Err(Rejection::BreaksProtection(e.fact));
                }
            }
        }

        let access = accesses(action, duration);
        for a in &access {
            let busy = self.locks.iter().any(|l| {
                l.resource == a.resource
                    && l.until > t
                    && (l.writes || a.writes)
                    && !(l.commutes && a.commutes())
            });
            if busy {
                return Err(Rejection::ResourceBusy(a.resource));
            }
        }

        // Update amounts are fixed now, against the current M.
        let mut updates = Vec::with_capacity(action.resource_updates.len());
        for u in &action.resource_updates {
            let value = u.rhs.eval(&self.resources, Some(duration))?;
            if u.op == UpdateOp::ScaleDown && value == 0.0 {
                return Err(EvalError::DivisionByZero.into());
            }
            updates.push((u, value));
        }

        let mut next = self.clone();
        let owner = self.prefix.len() as u32;
        for e in action.deletes().filter(|e| e.when.offset(duration) == 0.0) {
            next.facts.remove(&e.fact);
        }
        for e in action.adds().filter(|e| e.when.offset(duration) == 0.0) {
            next.facts.insert(e.fact, t);
        }
        for (u, value) in &updates {
            let off = u.when.offset(duration);
            if off == 0.0 {
                let cur = next.resources[u.resource.index()];
                if cur.is_nan() && u.op.reads_target() {
                    return Err(EvalError::Undefined(problem.resource_name(u.resource)).into());
                }
                next.resources[u.resource.index()] = u.op.apply(cur, *value)?;
            }
        }
        for e in &action.effects {
            let off = e.when.offset(duration);
            if off > 0.0 {
                let kind = if e.add { EventKind::Add(e.fact) } else { EventKind::Delete(e.fact) };
                next.push_event(t + off, owner, kind);
            }
        }
        for (u, value) in &updates {
            let off = u.when.offset(duration);
            if off > 0.0 {
                let kind = EventKind::Update { resource: u.resource, op: u.op, value: *value };
                next.push_event(t + off, owner, kind);
            }
        }
        for (fact, until) in own {
            next.protections.push(Protection { fact, until, owner });
            next.push_event(until, owner, EventKind::EndPersist(fact));
        }
        for a in access {
            if a.window_end > 0.0 {
                next.locks.push(Lock {
                    resource: a.resource,
                    until: t + a.window_end,
                    owner,
                    writes: a.writes,
                    commutes: a.commutes(),
                });
            }
        }
        next.prefix.push(PlanStep { action: id, start: t, duration });
        next.g_cost += action.exec_cost;
        Ok(next)
    }

    /// Jumps to the earliest scheduled event and applies every event at that
    /// instant: deletions, then additions, resource updates in scheduling
    /// order, and protection ends.
    pub fn advance_time(&self) -> Result<State, AdvanceError> {
        let first = self.queue.first().ok_or(AdvanceError::EmptyQueue)?;
        let te = first.time;
        let mut next = self.clone();
        let split = next.queue.partition_point(|e| e.time <= te);
        let batch: Vec<Event> = next.queue.drain(..split).collect();
        next.time = te;
        for e in &batch {
            if let EventKind::Delete(f) = e.kind {
                next.facts.remove(&f);
            }
        }
        for e in &batch {
            match e.kind {
                EventKind::Add(f) => {
                    next.facts.insert(f, te);
                }
                EventKind::Update { resource, op, value } => {
                    let cur = next.resources[resource.index()];
                    if cur.is_nan() && op.reads_target() {
                        return Err(EvalError::Undefined(format!("#{}", resource.0)).into());
                    }
                    next.resources[resource.index()] = op.apply(cur, value)?;
                }
                EventKind::EndPersist(f) => {
                    if let Some(i) = next
                        .protections
                        .iter()
                        .position(|p| p.fact == f && p.owner == e.owner && p.until == te)
                    {
                        next.protections.remove(i);
                    }
                }
                EventKind::Delete(_) => {}
            }
        }
        next.locks.retain(|l| l.until > te);
        Ok(next)
    }

    /// Applies every event up to and including `time`, then sets the clock
    /// to `time`. Used to replay plans whose start times are not event times.
    pub fn advance_to(&self, time: f64) -> Result<State, AdvanceError> {
        let mut s = self.clone();
        while s.queue.first().is_some_and(|e| e.time <= time) {
            s = s.advance_time()?;
        }
        if time > s.time {
            s.time = time;
            s.locks.retain(|l| l.until > time);
        }
        Ok(s)
    }

    pub fn key(&self, problem: &Problem) -> StateKey {
        // nanosecond grid, relative to the clock
        let rel = |t: f64| ((t - self.time) * 1e9).round() as i64;
        let mut protections: Vec<(FactId, i64)> = self.protections.iter().map(|p| (p.fact, rel(p.until))).collect();
        protections.sort();
        protections.dedup();
        let mut queue: Vec<(bool, i64, u8, u32, u8, u64)> = self
            .queue
            .iter()
            .map(|e| {
                // problem-supplied events stay anchored to absolute time
                let exogenous = e.owner == INIT_OWNER;
                let t = if exogenous { (e.time * 1e9).round() as i64 } else { rel(e.time) };
                match e.kind {
                    EventKind::Add(f) => (exogenous, t, 1, f.0, 0, 0),
                    EventKind::Delete(f) => (exogenous, t, 0, f.0, 0, 0),
                    EventKind::Update { resource, op, value } => {
                        (exogenous, t, 2, resource.0, op as u8, value.to_bits())
                    }
                    EventKind::EndPersist(f) => (exogenous, t, 3, f.0, 0, 0),
                }
            })
            .collect();
        // stable: updates at one instant keep their application order
        queue.sort_by_key(|&(x, t, class, id, _, _)| (x, t, class, if class == 2 { 0 } else { id }));
        queue.dedup_by(|a, b| a == b && a.2 != 2);
        let mut locks: Vec<_> = self.locks.iter().map(|l| (l.resource, rel(l.until), l.writes, l.commutes)).collect();
        locks.sort();
        locks.dedup();
        StateKey {
            facts: self
                .facts
                .iter()
                .map(|(f, t)| (*f, problem.goals.iter().any(|g| g.fact == *f && *t < g.deadline)))
                .collect(),
            resources: self.resources.iter().map(|v| v.to_bits()).collect(),
            protections,
            queue,
            locks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message}")]
pub struct ValidationError {
    pub time: f64,
    pub step: Option<usize>,
    pub message: String,
}

/// Final state of a successful replay.
#[derive(Debug, Clone)]
pub struct Replay {
    pub state: State,
    pub makespan: f64,
    pub cost: f64,
}

impl fmt::Display for Replay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "makespan {:.3}, cost {:.3}", self.makespan, self.cost)
    }
}

/// Replays a plan from the initial state. Steps are started in order of
/// start time (ties keep plan order); the goal must hold once the last step
/// has started, and all remaining events must apply cleanly.
pub fn replay(problem: &Problem, plan: &PCPlan) -> Result<Replay, ValidationError> {
    let mut order: Vec<usize> = (0..plan.steps.len()).collect();
    order.sort_by(|a, b| plan.steps[*a].start.total_cmp(&plan.steps[*b].start).then(a.cmp(b)));
    replay_in_order(problem, plan, &order)
}

pub fn replay_in_order(problem: &Problem, plan: &PCPlan, order: &[usize]) -> Result<Replay, ValidationError> {
    let mut s = State::initial(problem);
    let fail = |time, step, message: String| ValidationError { time, step, message };
    for &i in order {
        let step = &plan.steps[i];
        if step.start < s.time {
            return Err(fail(step.start, Some(i), format!("step {} starts before {:.3}", i, s.time)));
        }
        s = s
            .advance_to(step.start)
            .map_err(|e| fail(step.start, Some(i), format!("while advancing to {:.3}: {e}", step.start)))?;
        let label = problem.action(step.action).label();
        s = s.try_apply(problem, step.action).map_err(|r| {
            fail(step.start, Some(i), format!("{label} at {:.3}: {}", step.start, r.describe(problem)))
        })?;
        let d = s.prefix.last().map(|p| p.duration).unwrap_or_default();
        if (d - step.duration).abs() > 1e-6 {
            return Err(fail(
                step.start,
                Some(i),
                format!("{label} at {:.3}: duration is {d:.3}, plan says {:.3}", step.start, step.duration),
            ));
        }
    }
    for g in &problem.goals {
        if !s.goal_holds(g.fact, g.deadline) {
            let message = if g.deadline.is_finite() {
                format!("goal {} is not achieved before its deadline {:.3}", problem.fact_name(g.fact), g.deadline)
            } else {
                format!("goal {} is not achieved", problem.fact_name(g.fact))
            };
            return Err(fail(s.committed_time(), None, message));
        }
    }
    let mut end = s.clone();
    while !end.queue.is_empty() {
        end = end
            .advance_time()
            .map_err(|e| fail(end.time, None, format!("while applying scheduled events: {e}")))?;
    }
    Ok(Replay { makespan: plan.makespan(), cost: plan.cost(problem), state: s })
}
