//! Domain/problem reader and grounder.
//!
//! The accepted language is the durative-action fragment of PDDL2.1 with a
//! few extensions:
//!
//! * `(at <t> <effect>)` inside `:effect` schedules a delayed effect at
//!   `start + t`;
//! * `(over <d> <condition>)` inside `:condition` requires the condition over
//!   `[start, start + d]`;
//! * `:cost <expr>` on a durative action sets its execution cost (the
//!   expression must only mention static functions);
//! * `(:deadline <t> <literal>)` in the problem attaches a deadline to a goal.
//!
//! Grounding instantiates every schema over the declared objects of matching
//! types. Groundings whose static conditions are false in the initial state,
//! or whose static numeric terms are undefined, are dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use super::metric::{Metric, MetricTerm};
use super::sexpr::{self, Pos, Sexp};
use super::{
    Atom, BinOp, Comparator, CondTime, EffectTime, Expr, FactId, GroundAction, Goal, InitEvent, InputFile,
    ParseError, Problem, ResourceCondition, ResourceId, ResourceUpdate, TimedCondition,
    TimedEffect, UpdateOp,
};

type Result<T> = std::result::Result<T, ParseError>;

pub fn parse_problem(domain_text: &str, problem_text: &str) -> Result<Problem> {
    let domain = Domain::read(domain_text).map_err(|e| e.in_file(InputFile::Domain))?;
    let task = Task::read(problem_text, &domain).map_err(|e| e.in_file(InputFile::Problem))?;
    // positioned grounding errors point into the problem
    Grounder::new(&domain, &task).run().map_err(|e| e.in_file(InputFile::Problem))
}

#[derive(Debug, Clone, PartialEq)]
enum Term {
    Var(usize),
    Obj(String),
}

#[derive(Debug, Clone)]
struct LAtom {
    name: String,
    args: Vec<Term>,
}

#[derive(Debug, Clone)]
enum LExpr {
    Const(f64),
    Func(LAtom),
    Duration,
    Neg(Box<LExpr>),
    Bin(BinOp, Box<LExpr>, Box<LExpr>),
}

#[derive(Debug, Clone)]
enum LCond {
    Fact(LAtom, CondTime),
    Num(LExpr, Comparator, LExpr, CondTime),
}

#[derive(Debug, Clone)]
enum LEffect {
    Lit(LAtom, bool, EffectTime),
    Update(LAtom, UpdateOp, LExpr, EffectTime),
}

#[derive(Debug)]
struct Schema {
    name: String,
    params: Vec<(String, String)>,
    duration: LExpr,
    cost: Option<LExpr>,
    conditions: Vec<LCond>,
    effects: Vec<LEffect>,
}

#[derive(Debug, Default)]
struct Domain {
    name: String,
    /// type → parent
    types: BTreeMap<String, String>,
    constants: Vec<(String, String)>,
    predicates: HashMap<String, usize>,
    functions: HashMap<String, usize>,
    schemas: Vec<Schema>,
}

fn err<T>(pos: Pos, msg: impl Into<String>) -> Result<T> {
    Err(ParseError::at(pos, msg))
}

fn symbol(s: &Sexp) -> Result<&str> {
    match s.as_symbol() {
        Some(v) => Ok(v),
        None => err(s.pos(), "expected a symbol"),
    }
}

fn list(s: &Sexp) -> Result<&[Sexp]> {
    match s.as_list() {
        Some(v) => Ok(v),
        None => err(s.pos(), "expected a list"),
    }
}

fn single_define(text: &str, kind: &str) -> Result<Sexp> {
    let forms = sexpr::parse(text)?;
    let mut iter = forms.into_iter();
    let form = iter.next().ok_or_else(|| ParseError::bare(format!("empty {kind} file")))?;
    if let Some(extra) = iter.next() {
        return err(extra.pos(), "unexpected form after (define ...)");
    }
    if form.head() != Some("define") {
        return err(form.pos(), "expected (define ...)");
    }
    Ok(form)
}

/// `a b - t c` → [(a, t), (b, t), (c, object)]
fn typed_list(items: &[Sexp]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let s = symbol(&items[i])?;
        if s == "-" {
            let ty = items
                .get(i + 1)
                .ok_or_else(|| ParseError::at(items[i].pos(), "missing type after '-'"))?;
            let ty = match ty.head() {
                Some("either") => return err(ty.pos(), "(either ...) types are not supported"),
                _ => symbol(ty)?,
            };
            out.extend(pending.drain(..).map(|n| (n, ty.to_string())));
            i += 2;
        } else {
            pending.push(s.to_string());
            i += 1;
        }
    }
    out.extend(pending.into_iter().map(|n| (n, "object".to_string())));
    Ok(out)
}

impl Domain {
    fn read(text: &str) -> Result<Domain> {
        let form = single_define(text, "domain")?;
        let items = list(&form)?;
        let mut d = Domain::default();
        let header = items.get(1).ok_or_else(|| ParseError::at(form.pos(), "missing (domain NAME)"))?;
        match list(header)? {
            [kw, name] if kw.as_symbol() == Some("domain") => d.name = symbol(name)?.to_string(),
            _ => return err(header.pos(), "expected (domain NAME)"),
        }
        for section in &items[2..] {
            let parts = list(section)?;
            let head = parts.first().and_then(Sexp::as_symbol).unwrap_or("");
            match head {
                ":requirements" => {}
                ":types" => {
                    for (t, parent) in typed_list(&parts[1..])? {
                        d.types.insert(t, parent);
                    }
                }
                ":constants" => d.constants.extend(typed_list(&parts[1..])?),
                ":predicates" => {
                    for p in &parts[1..] {
                        let pl = list(p)?;
                        let name = symbol(pl.first().ok_or_else(|| ParseError::at(p.pos(), "empty predicate"))?)?;
                        d.predicates.insert(name.to_string(), typed_list(&pl[1..])?.len());
                    }
                }
                ":functions" => {
                    let mut i = 1;
                    while i < parts.len() {
                        let p = &parts[i];
                        if p.as_symbol() == Some("-") {
                            i += 2;
                            continue;
                        }
                        let pl = list(p)?;
                        let name = symbol(pl.first().ok_or_else(|| ParseError::at(p.pos(), "empty function"))?)?;
                        d.functions.insert(name.to_string(), typed_list(&pl[1..])?.len());
                        i += 1;
                    }
                }
                ":durative-action" => {
                    let schema = d.read_schema(parts, section.pos())?;
                    d.schemas.push(schema);
                }
                ":action" => return err(section.pos(), "instantaneous :action is not supported; use :durative-action"),
                _ => return err(section.pos(), format!("unknown domain section '{head}'")),
            }
        }
        Ok(d)
    }

    fn read_schema(&self, parts: &[Sexp], pos: Pos) -> Result<Schema> {
        let name = symbol(parts.get(1).ok_or_else(|| ParseError::at(pos, "missing action name"))?)?.to_string();
        let mut params = Vec::new();
        let mut duration = None;
        let mut cost = None;
        let mut cond_form = None;
        let mut eff_form = None;
        let mut i = 2;
        while i < parts.len() {
            let key = symbol(&parts[i])?;
            let value = parts
                .get(i + 1)
                .ok_or_else(|| ParseError::at(parts[i].pos(), format!("missing value for {key}")))?;
            match key {
                ":parameters" => params = typed_list(list(value)?)?,
                ":duration" => duration = Some(value),
                ":cost" => cost = Some(value),
                ":condition" => cond_form = Some(value),
                ":effect" => eff_form = Some(value),
                _ => return err(parts[i].pos(), format!("unknown action field '{key}'")),
            }
            i += 2;
        }
        for (v, _) in &params {
            if !v.starts_with('?') {
                return err(pos, format!("parameter '{v}' must start with '?'"));
            }
        }
        let ctx = SchemaCtx { domain: self, params: &params };
        let duration = match duration {
            None => return err(pos, format!("action '{name}' has no :duration")),
            Some(d) => match d.as_list() {
                Some([eq, var, e]) if eq.as_symbol() == Some("=") && var.as_symbol() == Some("?duration") => {
                    ctx.expr(e, false)?
                }
                _ => return err(d.pos(), "expected (= ?duration <expr>)"),
            },
        };
        let cost = cost.map(|c| ctx.expr(c, false)).transpose()?;
        let mut conditions = Vec::new();
        if let Some(c) = cond_form {
            ctx.conditions(c, None, &mut conditions)?;
        }
        let mut effects = Vec::new();
        if let Some(e) = eff_form {
            ctx.effects(e, None, &mut effects)?;
        }
        Ok(Schema { name, params, duration, cost, conditions, effects })
    }

    fn is_subtype(&self, ty: &str, of: &str) -> bool {
        let mut cur = ty;
        let mut guard = 0;
        loop {
            if cur == of {
                return true;
            }
            match self.types.get(cur) {
                Some(p) if guard < 64 => {
                    cur = p;
                    guard += 1;
                }
                _ => return of == "object",
            }
        }
    }
}

struct SchemaCtx<'a> {
    domain: &'a Domain,
    params: &'a [(String, String)],
}

impl SchemaCtx<'_> {
    fn term(&self, s: &Sexp) -> Result<Term> {
        let name = symbol(s)?;
        if name.starts_with('?') {
            match self.params.iter().position(|(v, _)| v == name) {
                Some(i) => Ok(Term::Var(i)),
                None => err(s.pos(), format!("unknown variable '{name}'")),
            }
        } else {
            Ok(Term::Obj(name.to_string()))
        }
    }

    fn atom(&self, s: &Sexp, table: &HashMap<String, usize>, what: &str) -> Result<LAtom> {
        let items = list(s)?;
        let name = symbol(items.first().ok_or_else(|| ParseError::at(s.pos(), format!("empty {what}")))?)?;
        match table.get(name) {
            None => return err(s.pos(), format!("unknown {what} '{name}'")),
            Some(&arity) if arity != items.len() - 1 => {
                return err(s.pos(), format!("{what} '{name}' expects {arity} arguments"))
            }
            _ => {}
        }
        let args = items[1..].iter().map(|a| self.term(a)).collect::<Result<_>>()?;
        Ok(LAtom { name: name.to_string(), args })
    }

    fn expr(&self, s: &Sexp, allow_duration: bool) -> Result<LExpr> {
        if let Some(v) = s.as_number() {
            return Ok(LExpr::Const(v));
        }
        if let Some(sym) = s.as_symbol() {
            if sym == "?duration" {
                if allow_duration {
                    return Ok(LExpr::Duration);
                }
                return err(s.pos(), "?duration is only allowed in effects");
            }
            return err(s.pos(), format!("unexpected symbol '{sym}' in expression"));
        }
        let items = list(s)?;
        let head = items.first().and_then(Sexp::as_symbol).unwrap_or("");
        let op = match head {
            "+" => Some(BinOp::Add),
            "-" => Some(BinOp::Sub),
            "*" => Some(BinOp::Mul),
            "/" => Some(BinOp::Div),
            _ => None,
        };
        match op {
            Some(BinOp::Sub) if items.len() == 2 => Ok(LExpr::Neg(Box::new(self.expr(&items[1], allow_duration)?))),
            Some(op) => {
                if items.len() < 3 {
                    return err(s.pos(), format!("'{head}' needs at least two operands"));
                }
                if items.len() > 3 && matches!(op, BinOp::Sub | BinOp::Div) {
                    return err(s.pos(), format!("'{head}' takes exactly two operands"));
                }
                let mut acc = self.expr(&items[1], allow_duration)?;
                for operand in &items[2..] {
                    acc = LExpr::Bin(op, Box::new(acc), Box::new(self.expr(operand, allow_duration)?));
                }
                Ok(acc)
            }
            None => {
                if !self.domain.functions.contains_key(head) {
                    return err(s.pos(), format!("undeclared function '{head}'"));
                }
                Ok(LExpr::Func(self.atom(s, &self.domain.functions, "function")?))
            }
        }
    }

    fn conditions(&self, s: &Sexp, when: Option<CondTime>, out: &mut Vec<LCond>) -> Result<()> {
        let items = list(s)?;
        if items.is_empty() {
            return Ok(());
        }
        let head = symbol(&items[0])?;
        match head {
            "and" => {
                for c in &items[1..] {
                    self.conditions(c, when, out)?;
                }
                Ok(())
            }
            "at" | "over" if when.is_none() && items.len() == 3 && items[2].as_list().is_some() => {
                let timing = match (head, symbol(&items[1])?) {
                    ("at", "start") => CondTime::AtStart,
                    ("at", "end") => CondTime::AtEnd,
                    ("over", "all") => CondTime::OverAll,
                    ("over", d) => match d.parse::<f64>() {
                        Ok(v) if v > 0.0 => CondTime::Over(v),
                        _ => return err(items[1].pos(), "over-window length must be a positive number"),
                    },
                    _ => return err(items[1].pos(), "expected 'start' or 'end'"),
                };
                self.conditions(&items[2], Some(timing), out)
            }
            "not" | "or" | "imply" | "forall" | "exists" => {
                err(s.pos(), format!("'{head}' conditions are not supported"))
            }
            "=" | "<" | ">" | "<=" | ">=" => {
                let when = when.ok_or_else(|| ParseError::at(s.pos(), "condition needs a time specifier"))?;
                if items.len() != 3 {
                    return err(s.pos(), "comparison takes two operands");
                }
                let cmp = match head {
                    "=" => Comparator::Eq,
                    "<" => Comparator::Lt,
                    ">" => Comparator::Gt,
                    "<=" => Comparator::Le,
                    _ => Comparator::Ge,
                };
                out.push(LCond::Num(self.expr(&items[1], false)?, cmp, self.expr(&items[2], false)?, when));
                Ok(())
            }
            _ => {
                let when = when.ok_or_else(|| ParseError::at(s.pos(), "condition needs a time specifier"))?;
                out.push(LCond::Fact(self.atom(s, &self.domain.predicates, "predicate")?, when));
                Ok(())
            }
        }
    }

    fn effects(&self, s: &Sexp, when: Option<EffectTime>, out: &mut Vec<LEffect>) -> Result<()> {
        let items = list(s)?;
        if items.is_empty() {
            return Ok(());
        }
        let head = symbol(&items[0])?;
        match head {
            "and" => {
                for e in &items[1..] {
                    self.effects(e, when, out)?;
                }
                Ok(())
            }
            "at" if when.is_none() && items.len() == 3 && items[2].as_list().is_some() => {
                let timing = match symbol(&items[1])? {
                    "start" => EffectTime::AtStart,
                    "end" => EffectTime::AtEnd,
                    d => match d.parse::<f64>() {
                        Ok(v) if v > 0.0 => EffectTime::At(v),
                        Ok(0.0) => EffectTime::AtStart,
                        _ => return err(items[1].pos(), "expected 'start', 'end' or a non-negative offset"),
                    },
                };
                self.effects(&items[2], Some(timing), out)
            }
            "not" => {
                let when = when.ok_or_else(|| ParseError::at(s.pos(), "effect needs a time specifier"))?;
                let inner = items.get(1).ok_or_else(|| ParseError::at(s.pos(), "empty (not)"))?;
                out.push(LEffect::Lit(self.atom(inner, &self.domain.predicates, "predicate")?, false, when));
                Ok(())
            }
            "increase" | "decrease" | "assign" | "scale-up" | "scale-down" => {
                let when = when.ok_or_else(|| ParseError::at(s.pos(), "effect needs a time specifier"))?;
                if items.len() != 3 {
                    return err(s.pos(), format!("'{head}' takes two operands"));
                }
                let op = match head {
                    "increase" => UpdateOp::Increase,
                    "decrease" => UpdateOp::Decrease,
                    "assign" => UpdateOp::Assign,
                    "scale-up" => UpdateOp::ScaleUp,
                    _ => UpdateOp::ScaleDown,
                };
                let target = self.atom(&items[1], &self.domain.functions, "function")?;
                out.push(LEffect::Update(target, op, self.expr(&items[2], true)?, when));
                Ok(())
            }
            "forall" | "when" => err(s.pos(), format!("'{head}' effects are not supported")),
            _ => {
                let when = when.ok_or_else(|| ParseError::at(s.pos(), "effect needs a time specifier"))?;
                out.push(LEffect::Lit(self.atom(s, &self.domain.predicates, "predicate")?, true, when));
                Ok(())
            }
        }
    }
}

#[derive(Debug, Default)]
struct Task {
    name: String,
    objects: Vec<(String, String)>,
    init_atoms: Vec<Atom>,
    init_values: Vec<(Atom, f64)>,
    init_events: Vec<(Atom, bool, f64)>,
    goals: Vec<Atom>,
    deadlines: Vec<(Atom, f64)>,
    metric: Option<(Sexp, Pos)>,
    positions: HashMap<Atom, Pos>,
}

fn ground_atom(s: &Sexp, table: &HashMap<String, usize>, what: &str) -> Result<Atom> {
    let items = list(s)?;
    let name = symbol(items.first().ok_or_else(|| ParseError::at(s.pos(), format!("empty {what}")))?)?;
    match table.get(name) {
        None => return err(s.pos(), format!("unknown {what} '{name}'")),
        Some(&arity) if arity != items.len() - 1 => {
            return err(s.pos(), format!("{what} '{name}' expects {arity} arguments"))
        }
        _ => {}
    }
    let args = items[1..]
        .iter()
        .map(|a| {
            let v = symbol(a)?;
            if v.starts_with('?') {
                err(a.pos(), "variables are not allowed in the problem file")
            } else {
                Ok(v.to_string())
            }
        })
        .collect::<Result<_>>()?;
    Ok(Atom { name: name.to_string(), args })
}

impl Task {
    fn atom(&mut self, s: &Sexp, table: &HashMap<String, usize>, what: &str) -> Result<Atom> {
        let a = ground_atom(s, table, what)?;
        self.positions.entry(a.clone()).or_insert(s.pos());
        Ok(a)
    }

    fn pos(&self, a: &Atom) -> Pos {
        self.positions.get(a).copied().unwrap_or_default()
    }

    fn read(text: &str, domain: &Domain) -> Result<Task> {
        let form = single_define(text, "problem")?;
        let items = list(&form)?;
        let mut t = Task::default();
        let header = items.get(1).ok_or_else(|| ParseError::at(form.pos(), "missing (problem NAME)"))?;
        match list(header)? {
            [kw, name] if kw.as_symbol() == Some("problem") => t.name = symbol(name)?.to_string(),
            _ => return err(header.pos(), "expected (problem NAME)"),
        }
        for section in &items[2..] {
            let parts = list(section)?;
            let head = parts.first().and_then(Sexp::as_symbol).unwrap_or("");
            match head {
                ":domain" => {
                    let name = symbol(parts.get(1).ok_or_else(|| ParseError::at(section.pos(), "missing domain name"))?)?;
                    if name != domain.name {
                        return err(section.pos(), format!("problem is for domain '{name}', not '{}'", domain.name));
                    }
                }
                ":requirements" => {}
                ":objects" => t.objects.extend(typed_list(&parts[1..])?),
                ":init" => {
                    for lit in &parts[1..] {
                        t.read_init(lit, domain)?;
                    }
                }
                ":goal" => {
                    let g = parts.get(1).ok_or_else(|| ParseError::at(section.pos(), "empty :goal"))?;
                    t.read_goal(g, domain)?;
                }
                ":deadline" => {
                    let (time, lit) = match &parts[1..] {
                        [time, lit] => (time, lit),
                        _ => return err(section.pos(), "expected (:deadline <time> <literal>)"),
                    };
                    let time = match time.as_number() {
                        Some(v) if v >= 0.0 => v,
                        _ => return err(time.pos(), "deadline must be a non-negative number"),
                    };
                    let a = t.atom(lit, &domain.predicates, "predicate")?;
                    t.deadlines.push((a, time));
                }
                ":metric" => match &parts[1..] {
                    [dir, e] if dir.as_symbol() == Some("minimize") => t.metric = Some((e.clone(), e.pos())),
                    [dir, _] => return err(dir.pos(), "only 'minimize' metrics are supported"),
                    _ => return err(section.pos(), "expected (:metric minimize <expr>)"),
                },
                _ => return err(section.pos(), format!("unknown problem section '{head}'")),
            }
        }
        Ok(t)
    }

    fn read_init(&mut self, lit: &Sexp, domain: &Domain) -> Result<()> {
        let items = list(lit)?;
        match items.first().and_then(Sexp::as_symbol) {
            Some("=") => {
                let [_, f, v] = items else { return err(lit.pos(), "expected (= (f ...) value)") };
                let value = v.as_number().ok_or_else(|| ParseError::at(v.pos(), "expected a number"))?;
                let a = self.atom(f, &domain.functions, "function")?;
                self.init_values.push((a, value));
            }
            Some("at") if items.len() == 3 && items[1].as_number().is_some() => {
                let time = items[1].as_number().unwrap_or_default();
                if time <= 0.0 {
                    return err(items[1].pos(), "timed initial literals need a positive time");
                }
                let (atom, add) = match items[2].head() {
                    Some("not") => {
                        let inner = items[2].as_list().and_then(|l| l.get(1));
                        let inner = inner.ok_or_else(|| ParseError::at(items[2].pos(), "empty (not)"))?;
                        (self.atom(inner, &domain.predicates, "predicate")?, false)
                    }
                    _ => (self.atom(&items[2], &domain.predicates, "predicate")?, true),
                };
                self.init_events.push((atom, add, time));
            }
            _ => {
                let a = self.atom(lit, &domain.predicates, "predicate")?;
                self.init_atoms.push(a);
            }
        }
        Ok(())
    }

    fn read_goal(&mut self, g: &Sexp, domain: &Domain) -> Result<()> {
        match g.head() {
            Some("and") => {
                for sub in &list(g)?[1..] {
                    self.read_goal(sub, domain)?;
                }
                Ok(())
            }
            Some("not") | Some("or") | Some("forall") | Some("exists") | Some("imply") => {
                err(g.pos(), "only conjunctions of positive literals are supported as goals")
            }
            _ => {
                let a = self.atom(g, &domain.predicates, "predicate")?;
                self.goals.push(a);
                Ok(())
            }
        }
    }
}

struct Grounder<'a> {
    domain: &'a Domain,
    task: &'a Task,
    objects: Vec<(String, String)>,
    static_preds: HashSet<String>,
    static_funcs: HashSet<String>,
    static_true: HashSet<Atom>,
    static_values: HashMap<Atom, f64>,
    fact_ids: HashMap<Atom, FactId>,
    facts: Vec<Atom>,
    resource_ids: HashMap<Atom, ResourceId>,
    resources: Vec<Atom>,
}

/// Marker for groundings that are silently dropped.
struct Dropped;

impl<'a> Grounder<'a> {
    fn new(domain: &'a Domain, task: &'a Task) -> Self {
        let mut objects: Vec<(String, String)> = domain.constants.clone();
        for o in &task.objects {
            if !objects.iter().any(|(n, _)| n == &o.0) {
                objects.push(o.clone());
            }
        }
        let mut dynamic_preds = HashSet::new();
        let mut dynamic_funcs = HashSet::new();
        for s in &domain.schemas {
            for e in &s.effects {
                match e {
                    LEffect::Lit(a, ..) => {
                        dynamic_preds.insert(a.name.clone());
                    }
                    LEffect::Update(a, ..) => {
                        dynamic_funcs.insert(a.name.clone());
                    }
                }
            }
        }
        for (a, ..) in &task.init_events {
            dynamic_preds.insert(a.name.clone());
        }
        let static_preds: HashSet<String> =
            domain.predicates.keys().filter(|p| !dynamic_preds.contains(*p)).cloned().collect();
        let static_funcs: HashSet<String> =
            domain.functions.keys().filter(|f| !dynamic_funcs.contains(*f)).cloned().collect();
        let static_true = task.init_atoms.iter().filter(|a| static_preds.contains(&a.name)).cloned().collect();
        let static_values = task
            .init_values
            .iter()
            .filter(|(a, _)| static_funcs.contains(&a.name))
            .cloned()
            .collect();
        Grounder {
            domain,
            task,
            objects,
            static_preds,
            static_funcs,
            static_true,
            static_values,
            fact_ids: HashMap::new(),
            facts: Vec::new(),
            resource_ids: HashMap::new(),
            resources: Vec::new(),
        }
    }

    fn check_objects(&self, atom: &Atom, pos: Pos) -> Result<()> {
        for a in &atom.args {
            if !self.objects.iter().any(|(n, _)| n == a) {
                return err(pos, format!("unknown object '{a}' in {atom}"));
            }
        }
        Ok(())
    }

    fn fact(&mut self, atom: Atom) -> FactId {
        if let Some(id) = self.fact_ids.get(&atom) {
            return *id;
        }
        let id = FactId(self.facts.len() as u32);
        self.facts.push(atom.clone());
        self.fact_ids.insert(atom, id);
        id
    }

    fn resource(&mut self, atom: Atom) -> ResourceId {
        if let Some(id) = self.resource_ids.get(&atom) {
            return *id;
        }
        let id = ResourceId(self.resources.len() as u32);
        self.resources.push(atom.clone());
        self.resource_ids.insert(atom, id);
        id
    }

    fn run(mut self) -> Result<Problem> {
        let task = self.task;
        // Objects referenced by schemas must exist too.
        for s in &self.domain.schemas {
            for c in &s.conditions {
                if let LCond::Fact(a, _) = c {
                    for t in &a.args {
                        if let Term::Obj(o) = t {
                            if !self.objects.iter().any(|(n, _)| n == o) {
                                return Err(ParseError::bare(format!("unknown object '{o}' in action '{}'", s.name)));
                            }
                        }
                    }
                }
            }
        }
        let mut init_facts = Vec::new();
        for a in &task.init_atoms {
            self.check_objects(a, task.pos(a))?;
            if !self.static_preds.contains(&a.name) {
                let id = self.fact(a.clone());
                if !init_facts.contains(&id) {
                    init_facts.push(id);
                }
            }
        }
        let mut init_events = Vec::new();
        for (a, add, time) in &task.init_events {
            self.check_objects(a, task.pos(a))?;
            let fact = self.fact(a.clone());
            init_events.push(InitEvent { fact, add: *add, time: *time });
        }
        for (a, _) in &task.init_values {
            self.check_objects(a, task.pos(a))?;
            if !self.static_funcs.contains(&a.name) {
                self.resource(a.clone());
            }
        }
        let mut goals: Vec<Goal> = Vec::new();
        for a in task.goals.iter().chain(task.deadlines.iter().map(|(a, _)| a)) {
            self.check_objects(a, task.pos(a))?;
            let fact = self.fact(a.clone());
            if !goals.iter().any(|g| g.fact == fact) {
                goals.push(Goal { fact, deadline: f64::INFINITY });
            }
        }
        for (a, t) in &task.deadlines {
            let fact = self.fact(a.clone());
            for g in goals.iter_mut().filter(|g| g.fact == fact) {
                g.deadline = g.deadline.min(*t);
            }
        }

        let mut actions = Vec::new();
        for schema in &self.domain.schemas {
            let domains: Vec<Vec<String>> = schema
                .params
                .iter()
                .map(|(_, ty)| {
                    self.objects
                        .iter()
                        .filter(|(_, oty)| self.domain.is_subtype(oty, ty))
                        .map(|(n, _)| n.clone())
                        .collect()
                })
                .collect();
            if domains.iter().any(Vec::is_empty) {
                continue;
            }
            let mut idx = vec![0usize; domains.len()];
            loop {
                let binding: Vec<String> = idx.iter().zip(&domains).map(|(i, d)| d[*i].clone()).collect();
                if let Ok(a) = self.instantiate(schema, &binding)? {
                    actions.push(a);
                }
                // odometer increment
                let mut k = domains.len();
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < domains[k].len() {
                        break;
                    }
                    idx[k] = 0;
                    if k == 0 {
                        k = usize::MAX;
                        break;
                    }
                }
                if domains.is_empty() || k == usize::MAX {
                    break;
                }
            }
        }
        actions.sort_by(|a: &GroundAction, b: &GroundAction| (&a.name, &a.args).cmp(&(&b.name, &b.args)));

        let mut init_resources = vec![f64::NAN; self.resources.len()];
        for (a, v) in &task.init_values {
            if let Some(id) = self.resource_ids.get(a) {
                init_resources[id.index()] = *v;
            }
        }
        let metric = match &task.metric {
            None => None,
            Some((e, pos)) => Some(self.metric(e, *pos)?),
        };
        // init_resources may have grown while grounding the metric
        init_resources.resize(self.resources.len(), f64::NAN);
        for (a, v) in &task.init_values {
            if let Some(id) = self.resource_ids.get(a) {
                init_resources[id.index()] = *v;
            }
        }

        let init_set: BTreeSet<FactId> = init_facts.iter().copied().collect();
        for e in &init_events {
            if !e.add && e.time == 0.0 && init_set.contains(&e.fact) {
                return Err(ParseError::bare("initial fact deleted at time 0"));
            }
        }

        Ok(Problem::new(
            self.domain.name.clone(),
            task.name.clone(),
            self.facts,
            self.resources,
            actions,
            init_facts,
            init_events,
            init_resources,
            goals,
            metric,
        ))
    }

    fn bind(&self, atom: &LAtom, binding: &[String]) -> Atom {
        Atom {
            name: atom.name.clone(),
            args: atom
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(i) => binding[*i].clone(),
                    Term::Obj(o) => o.clone(),
                })
                .collect(),
        }
    }

    fn ground_expr(&mut self, e: &LExpr, binding: &[String]) -> std::result::Result<Expr, Dropped> {
        Ok(match e {
            LExpr::Const(v) => Expr::Const(*v),
            LExpr::Duration => Expr::Duration,
            LExpr::Func(a) => {
                let atom = self.bind(a, binding);
                if self.static_funcs.contains(&a.name) {
                    match self.static_values.get(&atom) {
                        Some(v) => Expr::Const(*v),
                        None => return Err(Dropped),
                    }
                } else {
                    Expr::Resource(self.resource(atom))
                }
            }
            LExpr::Neg(inner) => match self.ground_expr(inner, binding)? {
                Expr::Const(v) => Expr::Const(-v),
                g => Expr::Neg(Box::new(g)),
            },
            LExpr::Bin(op, a, b) => {
                let a = self.ground_expr(a, binding)?;
                let b = self.ground_expr(b, binding)?;
                match (&a, &b) {
                    (Expr::Const(x), Expr::Const(y)) => {
                        let folded = Expr::Binary(*op, Box::new(Expr::Const(*x)), Box::new(Expr::Const(*y)));
                        match folded.eval(&[], None) {
                            Ok(v) => Expr::Const(v),
                            Err(_) => return Err(Dropped),
                        }
                    }
                    _ => Expr::Binary(*op, Box::new(a), Box::new(b)),
                }
            }
        })
    }

    fn instantiate(
        &mut self,
        schema: &Schema,
        binding: &[String],
    ) -> Result<std::result::Result<GroundAction, Dropped>> {
        // Static conditions first: they prune most bindings.
        for c in &schema.conditions {
            if let LCond::Fact(a, _) = c {
                if self.static_preds.contains(&a.name) && !self.static_true.contains(&self.bind(a, binding)) {
                    return Ok(Err(Dropped));
                }
            }
        }
        let duration = match self.ground_expr(&schema.duration, binding) {
            Ok(d) => d,
            Err(Dropped) => return Ok(Err(Dropped)),
        };
        let exec_cost = match &schema.cost {
            None => 0.0,
            Some(c) => match self.ground_expr(c, binding) {
                Ok(Expr::Const(v)) if v >= 0.0 => v,
                Ok(Expr::Const(v)) => {
                    return Err(ParseError::bare(format!("action '{}' has negative cost {v}", schema.name)))
                }
                Ok(_) => {
                    return Err(ParseError::bare(format!(
                        "cost of action '{}' must only use static functions",
                        schema.name
                    )))
                }
                Err(Dropped) => return Ok(Err(Dropped)),
            },
        };
        let mut conditions = Vec::new();
        let mut resource_conditions = Vec::new();
        for c in &schema.conditions {
            match c {
                LCond::Fact(a, when) => {
                    if self.static_preds.contains(&a.name) {
                        continue;
                    }
                    let fact = self.fact(self.bind(a, binding));
                    conditions.push(TimedCondition { fact, when: *when });
                }
                LCond::Num(l, cmp, r, when) => {
                    let (l, r) = match (self.ground_expr(l, binding), self.ground_expr(r, binding)) {
                        (Ok(l), Ok(r)) => (l, r),
                        _ => return Ok(Err(Dropped)),
                    };
                    if let (Some(x), Some(y)) = (l.as_const(), r.as_const()) {
                        if cmp.holds(x, y) {
                            continue;
                        }
                        return Ok(Err(Dropped));
                    }
                    resource_conditions.push(ResourceCondition { lhs: l, comparator: *cmp, rhs: r, when: *when });
                }
            }
        }
        let mut effects = Vec::new();
        let mut resource_updates = Vec::new();
        for e in &schema.effects {
            match e {
                LEffect::Lit(a, add, when) => {
                    let fact = self.fact(self.bind(a, binding));
                    effects.push(TimedEffect { fact, add: *add, when: *when });
                }
                LEffect::Update(a, op, rhs, when) => {
                    let target = self.bind(a, binding);
                    let resource = self.resource(target);
                    let rhs = match self.ground_expr(rhs, binding) {
                        Ok(r) => r,
                        Err(Dropped) => return Ok(Err(Dropped)),
                    };
                    resource_updates.push(ResourceUpdate { resource, op: *op, rhs, when: *when });
                }
            }
        }
        let action = GroundAction {
            name: schema.name.clone(),
            args: binding.to_vec(),
            duration,
            conditions,
            resource_conditions,
            effects,
            resource_updates,
            exec_cost,
        };
        if let Some(d) = action.duration.as_const() {
            if d <= 0.0 {
                return Err(ParseError::bare(format!("{} has non-positive duration {d}", action.label())));
            }
            if let Err(e) = action.check_offsets(d) {
                return Err(ParseError::bare(format!("{}: {e}", action.label())));
            }
        }
        Ok(Ok(action))
    }

    fn metric(&mut self, e: &Sexp, pos: Pos) -> Result<Metric> {
        let mut terms: BTreeMap<MetricTerm, f64> = BTreeMap::new();
        let constant = self.linear(e, 1.0, &mut terms)?;
        let _ = pos;
        Ok(Metric { terms: terms.into_iter().filter(|(_, w)| *w != 0.0).collect(), constant })
    }

    /// Adds `scale * e` into `terms`, returning the constant part.
    fn linear(&mut self, e: &Sexp, scale: f64, terms: &mut BTreeMap<MetricTerm, f64>) -> Result<f64> {
        if let Some(v) = e.as_number() {
            return Ok(scale * v);
        }
        if e.as_symbol() == Some("total-time") {
            *terms.entry(MetricTerm::TotalTime).or_default() += scale;
            return Ok(0.0);
        }
        let items = list(e)?;
        let head = items.first().and_then(Sexp::as_symbol).unwrap_or("");
        match head {
            "total-time" if items.len() == 1 => {
                *terms.entry(MetricTerm::TotalTime).or_default() += scale;
                Ok(0.0)
            }
            "+" => {
                let mut c = 0.0;
                for x in &items[1..] {
                    c += self.linear(x, scale, terms)?;
                }
                Ok(c)
            }
            "-" if items.len() == 2 => self.linear(&items[1], -scale, terms),
            "-" if items.len() == 3 => {
                Ok(self.linear(&items[1], scale, terms)? + self.linear(&items[2], -scale, terms)?)
            }
            "*" | "/" => {
                if items.len() != 3 {
                    return err(e.pos(), format!("'{head}' takes two operands in a metric"));
                }
                let lhs_const = constant_value(&items[1]);
                let rhs_const = constant_value(&items[2]);
                match (head, lhs_const, rhs_const) {
                    ("*", Some(k), _) => self.linear(&items[2], scale * k, terms),
                    ("*", None, Some(k)) => self.linear(&items[1], scale * k, terms),
                    ("/", _, Some(k)) if k != 0.0 => self.linear(&items[1], scale / k, terms),
                    _ => err(e.pos(), "metric is not a linear combination of total-time and resources"),
                }
            }
            _ => {
                let atom = ground_atom(e, &self.domain.functions, "function")?;
                self.check_objects(&atom, e.pos())?;
                if self.static_funcs.contains(&atom.name) {
                    let v = self.static_values.get(&atom).copied().unwrap_or(0.0);
                    return Ok(scale * v);
                }
                let r = self.resource(atom);
                *terms.entry(MetricTerm::Resource(r)).or_default() += scale;
                Ok(0.0)
            }
        }
    }
}

fn constant_value(e: &Sexp) -> Option<f64> {
    if let Some(v) = e.as_number() {
        return Some(v);
    }
    let items = e.as_list()?;
    let head = items.first()?.as_symbol()?;
    let vals: Option<Vec<f64>> = items[1..].iter().map(constant_value).collect();
    let vals = vals?;
    match (head, vals.as_slice()) {
        ("+", v) => Some(v.iter().sum()),
        ("*", v) => Some(v.iter().product()),
        ("-", [x]) => Some(-x),
        ("-", [x, y]) => Some(x - y),
        ("/", [x, y]) if *y != 0.0 => Some(x / y),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOMAIN: &str = r#"
    (define (domain demo)
      (:types vehicle place - object truck - vehicle)
      (:predicates (at ?v - vehicle ?p - place) (road ?a ?b - place) (visited ?p - place))
      (:functions (fuel ?v - vehicle) (dist ?a ?b - place))
      (:durative-action drive
        :parameters (?v - vehicle ?a ?b - place)
        :duration (= ?duration (dist ?a ?b))
        :cost (* 2 (dist ?a ?b))
        :condition (and (at start (at ?v ?a)) (at start (road ?a ?b)) (at start (>= (fuel ?v) 1)))
        :effect (and (at start (not (at ?v ?a)))
                     (at 0.5 (visited ?b))
                     (at end (at ?v ?b))
                     (at end (decrease (fuel ?v) (* 0.5 ?duration))))))
    "#;

    const PROBLEM: &str = r#"
    (define (problem p1) (:domain demo)
      (:objects t1 - truck x y z - place)
      (:init (at t1 x) (road x y) (road y z) (= (fuel t1) 10) (= (dist x y) 2) (= (dist y z) 3)
             (at 4.0 (visited z)))
      (:goal (and (at t1 z)))
      (:deadline 9.5 (at t1 z))
      (:metric minimize (+ (* 2 (total-time)) (fuel t1))))
    "#;

    #[test]
    fn grounds_only_static_consistent_bindings() {
        let p = parse_problem(DOMAIN, PROBLEM).unwrap();
        let labels: Vec<String> = p.actions.iter().map(GroundAction::label).collect();
        assert_eq!(labels, vec!["(drive t1 x y)", "(drive t1 y z)"]);
        let a = &p.actions[0];
        assert_eq!(a.duration, Expr::Const(2.0));
        assert_eq!(a.exec_cost, 4.0);
        assert_eq!(a.conditions.len(), 1, "static road condition is compiled away");
        assert_eq!(a.resource_conditions.len(), 1);
        assert_eq!(a.effects.len(), 3);
        assert_eq!(a.effects[1].when, EffectTime::At(0.5));
        assert_eq!(p.goals.len(), 1);
        assert_eq!(p.goals[0].deadline, 9.5);
        assert_eq!(p.init_events.len(), 1);
        let fuel = p.find_resource("(fuel t1)").unwrap();
        assert_eq!(p.init_resources[fuel.index()], 10.0);
        let m = p.metric.as_ref().unwrap();
        assert_eq!(m.terms, vec![(MetricTerm::TotalTime, 2.0), (MetricTerm::Resource(fuel), 1.0)]);
    }

    #[test]
    fn grounding_is_deterministic() {
        let a = parse_problem(DOMAIN, PROBLEM).unwrap();
        let b = parse_problem(DOMAIN, PROBLEM).unwrap();
        assert_eq!(a.facts, b.facts);
        assert_eq!(a.actions, b.actions);
    }

    #[test]
    fn empty_domain_has_no_actions() {
        let d = "(define (domain e) (:predicates (p)))";
        let p = parse_problem(d, "(define (problem q) (:domain e) (:init (p)) (:goal (p)))").unwrap();
        assert!(p.actions.is_empty());
        assert_eq!(p.goals.len(), 1);
    }

    #[test]
    fn syntax_error_carries_line_and_column() {
        let e = parse_problem("(define (domain d)\n  (:predicates (p)\n", "").unwrap_err();
        assert_eq!(e.pos, Some(Pos { line: 2, col: 3 }));
    }

    #[test]
    fn unknown_names_are_rejected() {
        let e = parse_problem(DOMAIN, &PROBLEM.replace("(at t1 z))", "(at t9 z))")).unwrap_err();
        assert!(e.message.contains("unknown object 't9'"), "{e}");
        let e = parse_problem(DOMAIN, &PROBLEM.replace("(road x y)", "(rood x y)")).unwrap_err();
        assert!(e.message.contains("unknown predicate 'rood'"), "{e}");
        let bad = DOMAIN.replace("(= ?duration (dist ?a ?b))", "(= ?duration (speed ?v))");
        let e = parse_problem(&bad, PROBLEM).unwrap_err();
        assert!(e.message.contains("undeclared function 'speed'"), "{e}");
    }

    #[test]
    fn offsets_beyond_constant_duration_are_rejected() {
        let bad = DOMAIN.replace("(at 0.5 (visited ?b))", "(at 2.5 (visited ?b))");
        let e = parse_problem(&bad, PROBLEM).unwrap_err();
        assert!(e.message.contains("exceeds duration"), "{e}");
    }

    #[test]
    fn non_linear_metric_is_rejected() {
        let bad = PROBLEM.replace("(* 2 (total-time))", "(* (total-time) (fuel t1))");
        let e = parse_problem(DOMAIN, &bad).unwrap_err();
        assert!(e.message.contains("not a linear combination"), "{e}");
    }
}
