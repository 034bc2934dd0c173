//! Conversion of position-constrained plans into order-constrained plans.
//!
//! Every precondition gets the earliest supporter that is not undone before
//! it is needed, interfering pairs are ordered as they happen in the input
//! schedule, and so are conflicting resource accesses. The result keeps the
//! input schedule as one of its dispatches, so its earliest dispatch is never
//! longer.
//!
//! Orderings are strict: two time points at the same instant are told apart
//! by a tick count, and a dispatch is replayed with each tick a tiny fraction
//! of a time unit.

use std::cmp::Ordering as CmpOrdering;
use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::model::{CondTime, FactId, Problem, ResourceId};
use crate::state::{accesses, replay, replay_in_order, Access, PCPlan, PlanStep, ValidationError};

/// Real time separating consecutive ticks when a dispatch is replayed.
pub const TICK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Node {
    Init,
    Step(usize),
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Anchor {
    Start,
    End,
    ConditionStart(FactId),
    ConditionEnd(FactId),
    Effect { fact: FactId, add: bool },
    ResourceStart(ResourceId),
    ResourceEnd(ResourceId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimePoint {
    pub node: Node,
    pub anchor: Anchor,
    /// Fixed distance from the start of `node`.
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Reason {
    Frame,
    CausalLink,
    Interference,
    Resource,
}

/// `before ≺ after`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ordering {
    pub before: TimePoint,
    pub after: TimePoint,
    pub reason: Reason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OcLink {
    pub producer: Node,
    pub fact: FactId,
    pub consumer: Node,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OCPlan {
    /// Actions with the durations and start times of the input plan.
    pub steps: Vec<PlanStep>,
    pub links: Vec<OcLink>,
    pub orderings: Vec<Ordering>,
    /// Causal links found threatened after all orderings were added.
    pub retractions: usize,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PartializeError {
    #[error("input plan is invalid: {0}")]
    InvalidPlan(#[from] ValidationError),
    #[error("orderings are inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dispatch {
    pub time: f64,
    pub ticks: u32,
}

impl Dispatch {
    fn real(self) -> f64 {
        self.time + self.ticks as f64 * TICK
    }
}

/// Position of a time point in the input schedule: time, then phase (window
/// ends, deletions, additions, action starts), then start order.
type Key = (f64, u8, usize);

fn cmp_key(a: &Key, b: &Key) -> CmpOrdering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

struct Schedule<'a> {
    problem: &'a Problem,
    steps: &'a [PlanStep],
    /// Start order of each step.
    rank: Vec<usize>,
}

impl Schedule<'_> {
    fn start(&self, node: Node) -> f64 {
        match node {
            Node::Init => 0.0,
            Node::Step(i) => self.steps[i].start,
            Node::Goal => f64::INFINITY,
        }
    }

    fn key(&self, p: &TimePoint) -> Key {
        match p.node {
            Node::Init if p.offset == 0.0 => (0.0, 0, 0),
            Node::Goal => (f64::INFINITY, 0, 0),
            _ => {
                let rank = match p.node {
                    Node::Step(i) => self.rank[i] + 1,
                    _ => 0,
                };
                if p.offset == 0.0 {
                    return (self.start(p.node), 4, rank);
                }
                let phase = match p.anchor {
                    Anchor::ConditionEnd(_) | Anchor::ResourceEnd(_) => 1,
                    Anchor::Effect { add: false, .. } => 2,
                    _ => 3,
                };
                (self.start(p.node) + p.offset, phase, rank)
            }
        }
    }

    fn before(&self, a: &TimePoint, b: &TimePoint) -> bool {
        cmp_key(&self.key(a), &self.key(b)) == CmpOrdering::Less
    }

    fn label(&self, node: Node) -> String {
        describe_node(self.problem, self.steps, node)
    }
}

fn describe_node(problem: &Problem, steps: &[PlanStep], node: Node) -> String {
    match node {
        Node::Init => "init".into(),
        Node::Goal => "goal".into(),
        Node::Step(i) => format!("#{i} {}", problem.action(steps[i].action).label()),
    }
}

fn point(node: Node, anchor: Anchor, offset: f64) -> TimePoint {
    TimePoint { node, anchor, offset }
}

struct Condition {
    fact: FactId,
    start: TimePoint,
    end: TimePoint,
}

/// Effects, conditions and resource accesses of a node as time points.
struct Profile {
    effects: Vec<(FactId, bool, TimePoint)>,
    conditions: Vec<Condition>,
    access: Vec<(Access, TimePoint, TimePoint)>,
}

fn profile(problem: &Problem, steps: &[PlanStep], node: Node) -> Profile {
    match node {
        Node::Init => {
            let mut effects: Vec<_> = problem
                .init_facts
                .iter()
                .map(|f| (*f, true, point(node, Anchor::Effect { fact: *f, add: true }, 0.0)))
                .collect();
            for e in &problem.init_events {
                effects.push((e.fact, e.add, point(node, Anchor::Effect { fact: e.fact, add: e.add }, e.time)));
            }
            Profile { effects, conditions: Vec::new(), access: Vec::new() }
        }
        Node::Goal => Profile {
            effects: Vec::new(),
            conditions: problem
                .goals
                .iter()
                .map(|g| {
                    let p = point(node, Anchor::ConditionStart(g.fact), 0.0);
                    Condition { fact: g.fact, start: p, end: p }
                })
                .collect(),
            access: Vec::new(),
        },
        Node::Step(i) => {
            let step = &steps[i];
            let a = problem.action(step.action);
            let d = step.duration;
            let effects = a
                .effects
                .iter()
                .map(|e| (e.fact, e.add, point(node, Anchor::Effect { fact: e.fact, add: e.add }, e.when.offset(d))))
                .collect();
            let conditions = a
                .conditions
                .iter()
                .map(|c| {
                    let start = point(node, Anchor::ConditionStart(c.fact), 0.0);
                    let end = match c.when {
                        CondTime::AtStart => start,
                        w => point(node, Anchor::ConditionEnd(c.fact), w.window_end(d)),
                    };
                    Condition { fact: c.fact, start, end }
                })
                .collect();
            let access = accesses(a, d)
                .into_iter()
                .map(|x| {
                    let s = point(node, Anchor::ResourceStart(x.resource), 0.0);
                    let e = if x.window_end > 0.0 { point(node, Anchor::ResourceEnd(x.resource), x.window_end) } else { s };
                    (x, s, e)
                })
                .collect();
            Profile { effects, conditions, access }
        }
    }
}

/// Builds the order-constrained plan for a valid position-constrained plan.
pub fn partialize(pc: &PCPlan, problem: &Problem) -> Result<OCPlan, PartializeError> {
    replay(problem, pc)?;
    let steps = &pc.steps;
    let n = steps.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| steps[*a].start.total_cmp(&steps[*b].start).then(a.cmp(b)));
    let mut rank = vec![0; n];
    for (r, i) in order.iter().enumerate() {
        rank[*i] = r;
    }
    let sched = Schedule { problem, steps, rank };
    let nodes: Vec<Node> = std::iter::once(Node::Init).chain((0..n).map(Node::Step)).chain([Node::Goal]).collect();
    let profiles: Vec<Profile> = nodes.iter().map(|&nd| profile(problem, steps, nd)).collect();

    let mut links = Vec::new();
    let mut orderings: Vec<Ordering> = Vec::new();
    let add = |orderings: &mut Vec<Ordering>, before: TimePoint, after: TimePoint, reason: Reason| {
        if !orderings.iter().any(|o| o.before == before && o.after == after) {
            orderings.push(Ordering { before, after, reason });
        }
    };

    for (i, s) in steps.iter().enumerate() {
        add(&mut orderings, point(Node::Init, Anchor::Start, 0.0), point(Node::Step(i), Anchor::Start, 0.0), Reason::Frame);
        add(
            &mut orderings,
            point(Node::Step(i), Anchor::End, s.duration),
            point(Node::Goal, Anchor::Start, 0.0),
            Reason::Frame,
        );
    }

    // supporters
    for (ci, consumer) in profiles.iter().enumerate() {
        for c in &consumer.conditions {
            let adds = profiles.iter().flat_map(|p| &p.effects).filter(|(f, a, _)| *f == c.fact && *a);
            let best = adds
                .filter(|(_, _, pt)| pt.node != nodes[ci] && sched.before(pt, &c.start))
                .filter(|(_, _, pt)| {
                    !profiles.iter().flat_map(|p| &p.effects).any(|(f, a, del)| {
                        *f == c.fact && !*a && sched.before(pt, del) && sched.before(del, &c.start)
                    })
                })
                .min_by(|x, y| {
                    cmp_key(&sched.key(&x.2), &sched.key(&y.2))
                        .then(sched.start(x.2.node).total_cmp(&sched.start(y.2.node)))
                        .then_with(|| sched.label(x.2.node).cmp(&sched.label(y.2.node)))
                });
            let Some(&(_, _, pt)) = best else {
                return Err(PartializeError::Inconsistent(format!(
                    "no supporter for {} of {}",
                    problem.fact_name(c.fact),
                    sched.label(nodes[ci])
                )));
            };
            links.push(OcLink { producer: pt.node, fact: c.fact, consumer: nodes[ci] });
            add(&mut orderings, pt, c.start, Reason::CausalLink);
        }
    }

    // interference between every pair of nodes that both act
    for xi in 0..nodes.len() - 1 {
        for yi in xi + 1..nodes.len() - 1 {
            let (x, y) = (&profiles[xi], &profiles[yi]);
            // the earlier starter's effect must have happened before the
            // later one starts when they disagree on a fact
            let (first, second, second_node) =
                if sched.before(&point(nodes[xi], Anchor::Start, 0.0), &point(nodes[yi], Anchor::Start, 0.0)) {
                    (x, y, nodes[yi])
                } else {
                    (y, x, nodes[xi])
                };
            let second_start = point(second_node, Anchor::Start, 0.0);
            for (f, a, pt) in &first.effects {
                if pt.node == Node::Init && pt.offset == 0.0 {
                    continue;
                }
                if second.effects.iter().any(|(g, b, _)| g == f && a != b) {
                    if !sched.before(pt, &second_start) {
                        return Err(PartializeError::Inconsistent(format!(
                            "{} and {} disagree on {} while both are pending",
                            sched.label(pt.node),
                            sched.label(second_node),
                            problem.fact_name(*f)
                        )));
                    }
                    add(&mut orderings, *pt, second_start, Reason::Interference);
                }
            }
            for (cons, del) in [(x, y), (y, x)] {
                for c in &cons.conditions {
                    for (f, a, d) in &del.effects {
                        if *f != c.fact || *a {
                            continue;
                        }
                        if sched.before(&c.end, d) {
                            add(&mut orderings, c.end, *d, Reason::Interference);
                        } else if sched.before(d, &c.start) {
                            add(&mut orderings, *d, c.start, Reason::Interference);
                        } else {
                            return Err(PartializeError::Inconsistent(format!(
                                "{} deletes {} while {} needs it",
                                sched.label(d.node),
                                problem.fact_name(*f),
                                sched.label(c.start.node)
                            )));
                        }
                    }
                }
            }
            for (ax, xs, xe) in &x.access {
                for (ay, ys, ye) in &y.access {
                    if !ax.conflicts(ay) {
                        continue;
                    }
                    if sched.before(xe, ys) {
                        add(&mut orderings, *xe, *ys, Reason::Resource);
                    } else if sched.before(ye, xs) {
                        add(&mut orderings, *ye, *xs, Reason::Resource);
                    } else {
                        return Err(PartializeError::Inconsistent(format!(
                            "{} and {} overlap on {}",
                            sched.label(xs.node),
                            sched.label(ys.node),
                            problem.resource_name(ax.resource)
                        )));
                    }
                }
            }
        }
    }

    let mut oc = OCPlan { steps: steps.clone(), links, orderings, retractions: 0 };
    oc.retractions = oc.threatened_links(problem).len();
    Ok(oc)
}

impl OCPlan {
    fn node_index(&self, node: Node) -> usize {
        match node {
            Node::Init => 0,
            Node::Step(i) => i + 1,
            Node::Goal => self.steps.len() + 1,
        }
    }

    /// `reach[a][b]`: the orderings force node `a` to start before node `b`.
    fn reachability(&self) -> Vec<Vec<bool>> {
        let m = self.steps.len() + 2;
        let mut adj = vec![Vec::new(); m];
        for o in &self.orderings {
            adj[self.node_index(o.before.node)].push(self.node_index(o.after.node));
        }
        (0..m)
            .map(|s| {
                let mut seen = vec![false; m];
                let mut q = VecDeque::from(adj[s].clone());
                while let Some(v) = q.pop_front() {
                    if !std::mem::replace(&mut seen[v], true) {
                        q.extend(adj[v].iter().copied());
                    }
                }
                seen
            })
            .collect()
    }

    fn deleters(&self, problem: &Problem, fact: FactId) -> Vec<Node> {
        (0..self.steps.len())
            .filter(|&i| problem.action(self.steps[i].action).deletes().any(|e| e.fact == fact))
            .map(Node::Step)
            .collect()
    }

    /// Links with a deleting action ordered neither before the producer nor
    /// after the consumer.
    pub fn threatened_links(&self, problem: &Problem) -> Vec<OcLink> {
        let reach = self.reachability();
        let ix = |n| self.node_index(n);
        self.links
            .iter()
            .filter(|l| {
                self.deleters(problem, l.fact).into_iter().any(|b| {
                    b != l.producer
                        && b != l.consumer
                        && !reach[ix(b)][ix(l.producer)]
                        && !reach[ix(l.consumer)][ix(b)]
                })
            })
            .copied()
            .collect()
    }

    /// Earliest start of every node (`init`, steps, `goal`) under the
    /// orderings, with intra-action offsets fixed.
    pub fn earliest_dispatch(&self) -> Result<Vec<Dispatch>, PartializeError> {
        let m = self.steps.len() + 2;
        let mut at = vec![(0.0f64, 0u32); m];
        let greater = |a: (f64, u32), b: (f64, u32)| a.0 > b.0 + 1e-9 || ((a.0 - b.0).abs() <= 1e-9 && a.1 > b.1);
        for round in 0..=m {
            let mut changed = false;
            for o in &self.orderings {
                let (u, v) = (self.node_index(o.before.node), self.node_index(o.after.node));
                let cand = (at[u].0 + o.before.offset - o.after.offset, at[u].1 + 1);
                if greater(cand, at[v]) {
                    if v == 0 {
                        return Err(PartializeError::Inconsistent("an ordering precedes the initial state".into()));
                    }
                    at[v] = (cand.0.max(at[v].0), cand.1);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            if round == m {
                return Err(PartializeError::Inconsistent("ordering cycle".into()));
            }
        }
        Ok(at.into_iter().map(|(time, ticks)| Dispatch { time, ticks }).collect())
    }

    /// Makespan of the earliest dispatch.
    pub fn makespan(&self) -> Result<f64, PartializeError> {
        let d = self.earliest_dispatch()?;
        Ok(self.steps.iter().enumerate().map(|(i, s)| d[i + 1].time + s.duration).fold(0.0, f64::max))
    }

    /// The earliest dispatch as a position-constrained plan (ticks dropped).
    pub fn dispatch_plan(&self) -> Result<PCPlan, PartializeError> {
        let d = self.earliest_dispatch()?;
        let steps = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| PlanStep { start: d[i + 1].time, ..*s })
            .collect();
        Ok(PCPlan::new(steps))
    }

    /// True if the input start times satisfy every ordering.
    pub fn admits(&self, pc: &PCPlan) -> bool {
        let start = |n: Node| match n {
            Node::Init => 0.0,
            Node::Step(i) => pc.steps[i].start,
            Node::Goal => f64::INFINITY,
        };
        self.orderings.iter().all(|o| {
            let (b, a) = (start(o.before.node) + o.before.offset, start(o.after.node) + o.after.offset);
            b <= a + 1e-9 || a.is_infinite()
        })
    }

    pub fn to_text(&self, problem: &Problem) -> String {
        let name = |n| describe_node(problem, &self.steps, n);
        let pt = |p: &TimePoint| {
            let what = match p.anchor {
                Anchor::Start => "start".to_string(),
                Anchor::End => "end".to_string(),
                Anchor::ConditionStart(f) => format!("needs {}", problem.fact_name(f)),
                Anchor::ConditionEnd(f) => format!("releases {}", problem.fact_name(f)),
                Anchor::Effect { fact, add: true } => format!("adds {}", problem.fact_name(fact)),
                Anchor::Effect { fact, add: false } => format!("deletes {}", problem.fact_name(fact)),
                Anchor::ResourceStart(r) => format!("locks {}", problem.resource_name(r)),
                Anchor::ResourceEnd(r) => format!("unlocks {}", problem.resource_name(r)),
            };
            format!("{} {what}", name(p.node))
        };
        let mut out = String::from("; causal links\n");
        for l in &self.links {
            let _ = writeln!(out, ";   {} -> {} -> {}", name(l.producer), problem.fact_name(l.fact), name(l.consumer));
        }
        out.push_str("; orderings\n");
        for o in self.orderings.iter().filter(|o| o.reason != Reason::Frame) {
            let _ = writeln!(out, ";   {} < {}", pt(&o.before), pt(&o.after));
        }
        out
    }

    pub fn to_dot(&self, problem: &Problem) -> String {
        let id = |n: Node| match n {
            Node::Init => "init".to_string(),
            Node::Goal => "goal".to_string(),
            Node::Step(i) => format!("s{i}"),
        };
        let mut out = String::from("digraph plan {\n  rankdir=LR;\n  init [shape=box];\n  goal [shape=box];\n");
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(out, "  s{i} [label=\"{} [{:.3}]\"];", problem.action(s.action).label(), s.duration);
        }
        let mut seen: Vec<(Node, Node)> = Vec::new();
        for l in &self.links {
            let _ = writeln!(
                out,
                "  {} -> {} [label=\"{}\"];",
                id(l.producer),
                id(l.consumer),
                problem.fact_name(l.fact)
            );
            seen.push((l.producer, l.consumer));
        }
        for o in &self.orderings {
            let pair = (o.before.node, o.after.node);
            if o.reason == Reason::Frame || pair.0 == pair.1 || seen.contains(&pair) {
                continue;
            }
            seen.push(pair);
            let _ = writeln!(out, "  {} -> {} [style=dashed];", id(pair.0), id(pair.1));
        }
        out.push_str("}\n");
        out
    }
}

fn interfere(problem: &Problem, x: &PlanStep, y: &PlanStep) -> bool {
    let (a, b) = (problem.action(x.action), problem.action(y.action));
    let clash = |p: &crate::model::GroundAction, q: &crate::model::GroundAction| {
        p.deletes().any(|d| q.adds().any(|e| e.fact == d.fact) || q.preconditions().any(|f| f == d.fact))
    };
    if clash(a, b) || clash(b, a) {
        return true;
    }
    let (ra, rb) = (accesses(a, x.duration), accesses(b, y.duration));
    ra.iter().any(|p| rb.iter().any(|q| p.conflicts(q)))
}

/// Checks an order-constrained plan: one causal link per condition with a
/// matching ordering, interfering actions ordered, consistent orderings, and
/// a clean replay of the earliest dispatch.
pub fn validate_oc(oc: &OCPlan, problem: &Problem) -> Result<(), String> {
    let nodes: Vec<Node> = (0..oc.steps.len()).map(Node::Step).chain([Node::Goal]).collect();
    for &node in &nodes {
        let conds: Vec<FactId> = match node {
            Node::Step(i) => problem.action(oc.steps[i].action).preconditions().collect(),
            _ => problem.goals.iter().map(|g| g.fact).collect(),
        };
        let name = describe_node(problem, &oc.steps, node);
        for f in conds {
            let links: Vec<&OcLink> = oc.links.iter().filter(|l| l.consumer == node && l.fact == f).collect();
            let [link] = links.as_slice() else {
                return Err(format!("{name} has {} causal links for {}", links.len(), problem.fact_name(f)));
            };
            let produces = match link.producer {
                Node::Init => problem.init_facts.contains(&f) || problem.init_events.iter().any(|e| e.fact == f && e.add),
                Node::Step(i) => problem.action(oc.steps[i].action).adds().any(|e| e.fact == f),
                Node::Goal => false,
            };
            if !produces {
                return Err(format!("causal link for {} into {name} has a producer that does not add it", problem.fact_name(f)));
            }
            let ordered = oc.orderings.iter().any(|o| {
                o.reason == Reason::CausalLink
                    && o.before.node == link.producer
                    && o.after.node == node
                    && o.after.anchor == Anchor::ConditionStart(f)
            });
            if !ordered {
                return Err(format!("causal link for {} into {name} is not ordered", problem.fact_name(f)));
            }
        }
    }
    let reach = oc.reachability();
    for i in 0..oc.steps.len() {
        for j in i + 1..oc.steps.len() {
            if interfere(problem, &oc.steps[i], &oc.steps[j]) && !reach[i + 1][j + 1] && !reach[j + 1][i + 1] {
                return Err(format!(
                    "{} and {} interfere but are unordered",
                    describe_node(problem, &oc.steps, Node::Step(i)),
                    describe_node(problem, &oc.steps, Node::Step(j))
                ));
            }
        }
    }
    let threatened = oc.threatened_links(problem);
    if let Some(l) = threatened.first() {
        return Err(format!("causal link for {} into {} is threatened", problem.fact_name(l.fact), describe_node(problem, &oc.steps, l.consumer)));
    }
    let d = oc.earliest_dispatch().map_err(|e| e.to_string())?;
    let shifted = PCPlan::new(
        oc.steps
            .iter()
            .enumerate()
            .map(|(i, s)| PlanStep { start: d[i + 1].real(), ..*s })
            .collect(),
    );
    let mut order: Vec<usize> = (0..oc.steps.len()).collect();
    order.sort_by(|a, b| {
        let (x, y) = (d[a + 1], d[b + 1]);
        x.time.total_cmp(&y.time).then(x.ticks.cmp(&y.ticks)).then(a.cmp(b))
    });
    replay_in_order(problem, &shifted, &order).map_err(|e| format!("earliest dispatch fails: {e}"))?;
    Ok(())
}
