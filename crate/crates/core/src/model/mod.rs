//! Ground problem representation: facts, resources, durative actions with
//! timed conditions and effects, deadline goals and the optional metric.
//!
//! Everything in here is immutable once [`Problem`] is built and can be
//! shared freely between threads.

mod metric;
mod mutex;
mod parse;
pub mod sexpr;

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use metric::{decompile_metric, static_net_change, DecompiledMetric, Metric, MetricError, MetricTerm};
pub use mutex::{compute_static_mutexes, MutexTable};
pub use parse::parse_problem;
pub use sexpr::Pos;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{}{message}", pos.map(|p| format!("{p}: ")).unwrap_or_default())]
pub struct ParseError {
    pub pos: Option<Pos>,
    pub message: String,
    /// Which input the position refers to.
    pub file: Option<InputFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InputFile {
    Domain,
    Problem,
}

impl ParseError {
    pub fn at(pos: Pos, message: impl Into<String>) -> Self {
        ParseError { pos: Some(pos), message: message.into(), file: None }
    }

    pub fn bare(message: impl Into<String>) -> Self {
        ParseError { pos: None, message: message.into(), file: None }
    }

    fn in_file(mut self, file: InputFile) -> Self {
        if self.pos.is_some() {
            self.file.get_or_insert(file);
        }
        self
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("resource {0} has no value")]
    Undefined(String),
    #[error("?duration used outside of an effect")]
    NoDuration,
    #[error("action duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("offset {offset} exceeds duration {duration}")]
    OffsetBeyondDuration { offset: f64, duration: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FactId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ResourceId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ActionId(pub u32);

impl FactId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ResourceId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ActionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A ground atom: predicate or function name applied to object names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Atom {
    pub name: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new(name: &str, args: &[&str]) -> Self {
        Atom { name: name.to_string(), args: args.iter().map(|a| a.to_string()).collect() }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Expr {
    Const(f64),
    Resource(ResourceId),
    /// `?duration` of the enclosing action.
    Duration,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, resources: &[f64], duration: Option<f64>) -> Result<f64, EvalError> {
        match self {
            Expr::Const(v) => Ok(*v),
            Expr::Resource(r) => {
                let v = resources[r.index()];
                if v.is_nan() {
                    Err(EvalError::Undefined(format!("#{}", r.0)))
                } else {
                    Ok(v)
                }
            }
            Expr::Duration => duration.ok_or(EvalError::NoDuration),
            Expr::Neg(e) => Ok(-e.eval(resources, duration)?),
            Expr::Binary(op, a, b) => {
                let a = a.eval(resources, duration)?;
                let b = b.eval(resources, duration)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div if b == 0.0 => Err(EvalError::DivisionByZero),
                    BinOp::Div => Ok(a / b),
                }
            }
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn mentions_duration(&self) -> bool {
        match self {
            Expr::Duration => true,
            Expr::Const(_) | Expr::Resource(_) => false,
            Expr::Neg(e) => e.mentions_duration(),
            Expr::Binary(_, a, b) => a.mentions_duration() || b.mentions_duration(),
        }
    }

    pub fn resources(&self, out: &mut Vec<ResourceId>) {
        match self {
            Expr::Resource(r) => {
                if !out.contains(r) {
                    out.push(*r);
                }
            }
            Expr::Const(_) | Expr::Duration => {}
            Expr::Neg(e) => e.resources(out),
            Expr::Binary(_, a, b) => {
                a.resources(out);
                b.resources(out);
            }
        }
    }
}

/// When a logical or numeric condition must hold, relative to the action start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CondTime {
    AtStart,
    AtEnd,
    OverAll,
    /// Over `[start, start + d]`.
    Over(f64),
}

impl CondTime {
    /// End offset of the window over which the condition is protected.
    ///
    /// At-end conditions are required when the action starts and protected
    /// until it ends; this keeps them checkable by a forward progression.
    pub fn window_end(self, duration: f64) -> f64 {
        match self {
            CondTime::AtStart => 0.0,
            CondTime::AtEnd | CondTime::OverAll => duration,
            CondTime::Over(d) => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EffectTime {
    AtStart,
    AtEnd,
    /// Delayed effect at `start + d`.
    At(f64),
}

impl EffectTime {
    pub fn offset(self, duration: f64) -> f64 {
        match self {
            EffectTime::AtStart => 0.0,
            EffectTime::AtEnd => duration,
            EffectTime::At(d) => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparator {
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
}

impl Comparator {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Eq => lhs == rhs,
            Comparator::Lt => lhs < rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Ge => lhs >= rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UpdateOp {
    Assign,
    Increase,
    Decrease,
    ScaleUp,
    ScaleDown,
}

impl UpdateOp {
    pub fn apply(self, current: f64, value: f64) -> Result<f64, EvalError> {
        match self {
            UpdateOp::Assign => Ok(value),
            UpdateOp::Increase => Ok(current + value),
            UpdateOp::Decrease => Ok(current - value),
            UpdateOp::ScaleUp => Ok(current * value),
            UpdateOp::ScaleDown if value == 0.0 => Err(EvalError::DivisionByZero),
            UpdateOp::ScaleDown => Ok(current / value),
        }
    }

    /// `+=` and `-=` commute with each other.
    pub fn is_additive(self) -> bool {
        matches!(self, UpdateOp::Increase | UpdateOp::Decrease)
    }

    /// Whether the update needs the current value of its target.
    pub fn reads_target(self) -> bool {
        !matches!(self, UpdateOp::Assign)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimedCondition {
    pub fact: FactId,
    pub when: CondTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimedEffect {
    pub fact: FactId,
    pub add: bool,
    pub when: EffectTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResourceCondition {
    pub lhs: Expr,
    pub comparator: Comparator,
    pub rhs: Expr,
    pub when: CondTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResourceUpdate {
    pub resource: ResourceId,
    pub op: UpdateOp,
    pub rhs: Expr,
    pub when: EffectTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundAction {
    pub name: String,
    pub args: Vec<String>,
    pub duration: Expr,
    pub conditions: Vec<TimedCondition>,
    pub resource_conditions: Vec<ResourceCondition>,
    pub effects: Vec<TimedEffect>,
    pub resource_updates: Vec<ResourceUpdate>,
    pub exec_cost: f64,
}

impl GroundAction {
    /// `(name arg1 arg2 ...)`
    pub fn label(&self) -> String {
        let mut s = format!("({}", self.name);
        for a in &self.args {
            s.push(' ');
            s.push_str(a);
        }
        s.push(')');
        s
    }

    pub fn preconditions(&self) -> impl Iterator<Item = FactId> + '_ {
        self.conditions.iter().map(|c| c.fact)
    }

    pub fn adds(&self) -> impl Iterator<Item = &TimedEffect> + '_ {
        self.effects.iter().filter(|e| e.add)
    }

    pub fn deletes(&self) -> impl Iterator<Item = &TimedEffect> + '_ {
        self.effects.iter().filter(|e| !e.add)
    }

    /// Evaluated duration against the given resource values; must be positive.
    pub fn eval_duration(&self, resources: &[f64]) -> Result<f64, EvalError> {
        let d = self.duration.eval(resources, None)?;
        if d <= 0.0 || !d.is_finite() {
            return Err(EvalError::NonPositiveDuration(d));
        }
        Ok(d)
    }

    /// Checks that every fixed offset lies within `duration`.
    pub fn check_offsets(&self, duration: f64) -> Result<(), EvalError> {
        let offsets = self
            .conditions
            .iter()
            .map(|c| c.when)
            .chain(self.resource_conditions.iter().map(|c| c.when))
            .filter_map(|w| match w {
                CondTime::Over(d) => Some(d),
                _ => None,
            })
            .chain(
                self.effects
                    .iter()
                    .map(|e| e.when)
                    .chain(self.resource_updates.iter().map(|u| u.when))
                    .filter_map(|w| match w {
                        EffectTime::At(d) => Some(d),
                        _ => None,
                    }),
            );
        for offset in offsets {
            if offset > duration {
                return Err(EvalError::OffsetBeyondDuration { offset, duration });
            }
        }
        Ok(())
    }

    /// The fact added at the given offset, if this action adds `fact`.
    pub fn add_offset(&self, fact: FactId, duration: f64) -> Option<f64> {
        self.adds()
            .filter(|e| e.fact == fact)
            .map(|e| e.when.offset(duration))
            .reduce(f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Goal {
    pub fact: FactId,
    /// `f64::INFINITY` when the goal carries no deadline.
    pub deadline: f64,
}

/// A timed literal supplied by the problem's initial state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitEvent {
    pub fact: FactId,
    pub add: bool,
    pub time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Problem {
    pub domain_name: String,
    pub problem_name: String,
    pub facts: Vec<Atom>,
    pub resources: Vec<Atom>,
    pub actions: Vec<GroundAction>,
    pub init_facts: Vec<FactId>,
    pub init_events: Vec<InitEvent>,
    /// Initial value of every resource, NaN where undefined.
    pub init_resources: Vec<f64>,
    pub goals: Vec<Goal>,
    pub metric: Option<Metric>,
    #[serde(skip)]
    consumers: Vec<Vec<ActionId>>,
    #[serde(skip)]
    achievers: Vec<Vec<ActionId>>,
}

impl Problem {
    /// Assembles a problem and builds the fact → action indexes.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        domain_name: String,
        problem_name: String,
        facts: Vec<Atom>,
        resources: Vec<Atom>,
        actions: Vec<GroundAction>,
        init_facts: Vec<FactId>,
        init_events: Vec<InitEvent>,
        init_resources: Vec<f64>,
        goals: Vec<Goal>,
        metric: Option<Metric>,
    ) -> Self {
        let mut consumers = vec![Vec::new(); facts.len()];
        let mut achievers = vec![Vec::new(); facts.len()];
        for (i, a) in actions.iter().enumerate() {
            let id = ActionId(i as u32);
            for f in a.preconditions() {
                let list: &mut Vec<ActionId> = &mut consumers[f.index()];
                if !list.contains(&id) {
                    list.push(id);
                }
            }
            for e in a.adds() {
                let list: &mut Vec<ActionId> = &mut achievers[e.fact.index()];
                if !list.contains(&id) {
                    list.push(id);
                }
            }
        }
        Problem {
            domain_name,
            problem_name,
            facts,
            resources,
            actions,
            init_facts,
            init_events,
            init_resources,
            goals,
            metric,
            consumers,
            achievers,
        }
    }

    pub fn action(&self, id: ActionId) -> &GroundAction {
        &self.actions[id.index()]
    }

    pub fn action_ids(&self) -> impl Iterator<Item = ActionId> {
        (0..self.actions.len() as u32).map(ActionId)
    }

    /// Actions with `fact` among their logical conditions.
    pub fn consumers(&self, fact: FactId) -> &[ActionId] {
        &self.consumers[fact.index()]
    }

    /// Actions adding `fact`.
    pub fn achievers(&self, fact: FactId) -> &[ActionId] {
        &self.achievers[fact.index()]
    }

    pub fn fact_id(&self, atom: &Atom) -> Option<FactId> {
        self.facts.iter().position(|a| a == atom).map(|i| FactId(i as u32))
    }

    /// Looks a fact up from its textual form, e.g. `"(at la)"` or `"at la"`.
    pub fn find_fact(&self, text: &str) -> Option<FactId> {
        let atom = atom_from_text(text)?;
        self.fact_id(&atom)
    }

    pub fn find_resource(&self, text: &str) -> Option<ResourceId> {
        let atom = atom_from_text(text)?;
        self.resources.iter().position(|a| *a == atom).map(|i| ResourceId(i as u32))
    }

    /// Looks an action up from its label, e.g. `"(fly phoenix la)"`.
    pub fn find_action(&self, text: &str) -> Option<ActionId> {
        let atom = atom_from_text(text)?;
        self.actions
            .iter()
            .position(|a| a.name == atom.name && a.args == atom.args)
            .map(|i| ActionId(i as u32))
    }

    pub fn fact_name(&self, id: FactId) -> String {
        self.facts[id.index()].to_string()
    }

    pub fn resource_name(&self, id: ResourceId) -> String {
        self.resources[id.index()].to_string()
    }

    /// Lookup table from action label to id.
    pub fn action_index(&self) -> HashMap<String, ActionId> {
        self.actions
            .iter()
            .enumerate()
            .map(|(i, a)| (a.label(), ActionId(i as u32)))
            .collect()
    }

    /// Replaces execution costs, e.g. with the output of [`decompile_metric`].
    pub fn with_exec_costs(mut self, costs: &[f64]) -> Self {
        for (a, c) in self.actions.iter_mut().zip(costs) {
            a.exec_cost = *c;
        }
        self
    }

    /// Replaces the goal list (used to set or change deadlines).
    pub fn with_goals(mut self, goals: Vec<Goal>) -> Self {
        self.goals = goals;
        self
    }

    /// Copy with the deadline of `fact` set to `deadline`.
    pub fn with_deadline(self, fact: FactId, deadline: f64) -> Self {
        let goals = self
            .goals
            .iter()
            .map(|g| if g.fact == fact { Goal { fact, deadline } } else { g.clone() })
            .collect();
        self.with_goals(goals)
    }
}

fn atom_from_text(text: &str) -> Option<Atom> {
    let trimmed = text.trim().trim_start_matches('(').trim_end_matches(')');
    let mut parts = trimmed.split_whitespace().map(|s| s.to_ascii_lowercase());
    let name = parts.next()?;
    Some(Atom { name, args: parts.collect() })
}
