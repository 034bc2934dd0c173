//! Command-line front end.
//!
//! ```text
//! chronoplan plan DOMAIN PROBLEM [--alpha F] [--lookahead N|inf] [--prop max|sum]
//!                                [--adjust none|mutex|resource|both] [--no-partialize]
//!                                [--timeout S] [--format plan|json|dot]
//! chronoplan validate DOMAIN PROBLEM PLAN
//! chronoplan rtpg DOMAIN PROBLEM [--lookahead N|inf] [--prop max|sum]
//! ```
//!
//! Exit status: 0 on success, 1 when no plan is found (or a plan is
//! invalid), 2 on input errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::heuristics::{HeuristicMode, ObjectiveConfig};
use crate::model::{decompile_metric, parse_problem, InputFile, Problem};
use crate::partialize::{partialize, Node, OCPlan};
use crate::rtpg::{propagate, PropagationRule};
use crate::search::{plan, Limits, SearchError, Solution};
use crate::state::{replay, PCPlan, PlanStep, State};

#[derive(Debug, Parser)]
#[command(name = "chronoplan", version, about = "Metric temporal planner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for a plan.
    Plan(PlanArgs),
    /// Check a plan by replaying it.
    Validate(ValidateArgs),
    /// Print the relaxed planning graph's cost functions as CSV.
    Rtpg(RtpgArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Prop {
    Max,
    Sum,
}

impl From<Prop> for PropagationRule {
    fn from(p: Prop) -> Self {
        match p {
            Prop::Max => PropagationRule::Max,
            Prop::Sum => PropagationRule::Sum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Adjust {
    None,
    Mutex,
    Resource,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Direct,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Plan,
    Json,
    Dot,
}

/// Propagation depth; `None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lookahead(pub Option<u32>);

fn parse_lookahead(s: &str) -> Result<Lookahead, String> {
    match s {
        "inf" | "infinity" | "∞" => Ok(Lookahead(None)),
        _ => s
            .parse()
            .map(|k| Lookahead(Some(k)))
            .map_err(|_| format!("expected a non-negative integer or 'inf', got '{s}'")),
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(a) if (0.0..=1.0).contains(&a) => Ok(a),
        _ => Err(format!("alpha must be a number in [0, 1], got '{s}'")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct ObjectiveArgs {
    /// Weight of cost against makespan; defaults to the metric's, or 1.
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: Option<f64>,
    /// Propagation depth after the goals are reached.
    #[arg(long, value_parser = parse_lookahead, default_value = "inf")]
    pub lookahead: Lookahead,
    #[arg(long, value_enum, default_value_t = Prop::Sum)]
    pub prop: Prop,
    /// Goal aggregation for direct estimates; defaults to --prop.
    #[arg(long, value_enum)]
    pub aggregate: Option<Prop>,
    #[arg(long, value_enum, default_value_t = Adjust::Resource)]
    pub adjust: Adjust,
    #[arg(long, value_enum, default_value_t = Mode::Relaxed)]
    pub heuristic: Mode,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    pub domain: PathBuf,
    pub problem: PathBuf,
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    /// Convert the plan into an order-constrained plan (default).
    #[arg(long, overrides_with = "no_partialize")]
    pub partialize: bool,
    #[arg(long)]
    pub no_partialize: bool,
    /// Seconds before giving up.
    #[arg(long, default_value_t = 300.0)]
    pub timeout: f64,
    #[arg(long)]
    pub max_expansions: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Plan)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    pub domain: PathBuf,
    pub problem: PathBuf,
    pub plan: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RtpgArgs {
    pub domain: PathBuf,
    pub problem: PathBuf,
    #[arg(long, value_parser = parse_lookahead, default_value = "inf")]
    pub lookahead: Lookahead,
    #[arg(long, value_enum, default_value_t = Prop::Sum)]
    pub prop: Prop,
}

/// Everything `plan` needs, resolved from the arguments and the problem.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub objective: ObjectiveConfig,
    pub partialize: bool,
    pub limits: Limits,
    pub format: Format,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

fn load(domain: &Path, problem: &Path) -> Result<Problem, Failure> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())));
    let (d, p) = (read(domain)?, read(problem)?);
    parse_problem(&d, &p).map_err(|e| {
        let file = match e.file {
            Some(InputFile::Domain) => format!("{}:", domain.display()),
            Some(InputFile::Problem) => format!("{}:", problem.display()),
            None => String::new(),
        };
        match e.pos {
            Some(pos) => Failure::input(format!("{file}{pos}: {}", e.message)),
            None => Failure::input(e.message.to_string()),
        }
    })
}

/// Applies the metric's costs, if any, and resolves the objective.
pub fn resolve(problem: Problem, args: &ObjectiveArgs) -> Result<(Problem, ObjectiveConfig), String> {
    let (problem, default_alpha) = match &problem.metric {
        Some(m) => {
            let d = decompile_metric(m, &problem).map_err(|e| e.to_string())?;
            (problem.with_exec_costs(&d.costs), d.alpha)
        }
        None => (problem, 1.0),
    };
    let config = ObjectiveConfig {
        alpha: args.alpha.unwrap_or(default_alpha),
        lookahead: args.lookahead.0,
        propagation: args.prop.into(),
        aggregation: args.aggregate.unwrap_or(args.prop).into(),
        mode: match args.heuristic {
            Mode::Direct => HeuristicMode::Direct,
            Mode::Relaxed => HeuristicMode::RelaxedPlan,
        },
        mutex_adjust: matches!(args.adjust, Adjust::Mutex | Adjust::Both),
        resource_adjust: matches!(args.adjust, Adjust::Resource | Adjust::Both),
    };
    Ok((problem, config))
}

/// `t: (name args) [d]`, one line per step in start order.
pub fn format_plan(problem: &Problem, plan: &PCPlan) -> String {
    let mut steps: Vec<&PlanStep> = plan.steps.iter().collect();
    steps.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut out = String::new();
    for s in steps {
        let _ = writeln!(out, "{:.3}: {} [{:.3}]", s.start, problem.action(s.action).label(), s.duration);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanFormatError {
    pub line: usize,
    pub message: String,
}

/// Reads plans in the format written by [`format_plan`]; `;` starts a
/// comment. A missing `[d]` takes the action's constant duration.
pub fn parse_plan(text: &str, problem: &Problem) -> Result<PCPlan, PlanFormatError> {
    let mut steps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fail = |message: String| PlanFormatError { line: i + 1, message };
        let (time, rest) = line.split_once(':').ok_or_else(|| fail("expected 'time: (action) [duration]'".into()))?;
        let start: f64 = time.trim().parse().map_err(|_| fail(format!("bad start time '{}'", time.trim())))?;
        let rest = rest.trim();
        let close = rest.find(')').ok_or_else(|| fail("missing ')'".into()))?;
        if !rest.starts_with('(') {
            return Err(fail("expected '(' before the action".into()));
        }
        let words: Vec<String> = rest[1..close].split_whitespace().map(str::to_lowercase).collect();
        let label = format!("({})", words.join(" "));
        let action = problem.find_action(&label).ok_or_else(|| fail(format!("unknown action {label}")))?;
        let tail = rest[close + 1..].trim();
        let duration = if tail.is_empty() {
            problem
                .action(action)
                .duration
                .as_const()
                .ok_or_else(|| fail(format!("{label} needs an explicit [duration]")))?
        } else {
            let inner = tail
                .strip_prefix('[')
                .and_then(|t| t.strip_suffix(']'))
                .ok_or_else(|| fail(format!("bad duration '{tail}'")))?;
            inner.trim().parse().map_err(|_| fail(format!("bad duration '{inner}'")))?
        };
        steps.push(PlanStep { action, start, duration });
    }
    Ok(PCPlan::new(steps))
}

#[derive(Serialize)]
struct JsonStep {
    start: f64,
    action: String,
    duration: f64,
}

#[derive(Serialize)]
struct JsonLink {
    producer: String,
    fact: String,
    consumer: String,
}

#[derive(Serialize)]
struct JsonOrdering {
    before: String,
    after: String,
    reason: String,
}

#[derive(Serialize)]
struct JsonOc {
    makespan: f64,
    links: Vec<JsonLink>,
    orderings: Vec<JsonOrdering>,
}

#[derive(Serialize)]
struct JsonReport {
    alpha: f64,
    cost: f64,
    makespan: f64,
    expanded: usize,
    generated: usize,
    plan: Vec<JsonStep>,
    partial_order: Option<JsonOc>,
}

fn node_name(problem: &Problem, oc: &OCPlan, n: Node) -> String {
    match n {
        Node::Init => "init".into(),
        Node::Goal => "goal".into(),
        Node::Step(i) => format!("#{i} {}", problem.action(oc.steps[i].action).label()),
    }
}

fn json_report(problem: &Problem, config: &RunConfig, sol: &Solution, oc: Option<&(OCPlan, f64)>) -> String {
    let mut steps: Vec<&PlanStep> = sol.plan.steps.iter().collect();
    steps.sort_by(|a, b| a.start.total_cmp(&b.start));
    let report = JsonReport {
        alpha: config.objective.alpha,
        cost: sol.cost,
        makespan: sol.makespan,
        expanded: sol.stats.expanded,
        generated: sol.stats.generated,
        plan: steps
            .iter()
            .map(|s| JsonStep { start: s.start, action: problem.action(s.action).label(), duration: s.duration })
            .collect(),
        partial_order: oc.map(|(oc, makespan)| JsonOc {
            makespan: *makespan,
            links: oc
                .links
                .iter()
                .map(|l| JsonLink {
                    producer: node_name(problem, oc, l.producer),
                    fact: problem.fact_name(l.fact),
                    consumer: node_name(problem, oc, l.consumer),
                })
                .collect(),
            orderings: oc
                .orderings
                .iter()
                .map(|o| JsonOrdering {
                    before: node_name(problem, oc, o.before.node),
                    after: node_name(problem, oc, o.after.node),
                    reason: format!("{:?}", o.reason).to_lowercase(),
                })
                .collect(),
        }),
    };
    serde_json::to_string_pretty(&report).unwrap_or_default() + "\n"
}

fn run_plan(args: &PlanArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let problem = load(&args.domain, &args.problem)?;
    let (problem, objective) = resolve(problem, &args.objective).map_err(Failure::input)?;
    let config = RunConfig {
        objective,
        partialize: !args.no_partialize,
        limits: Limits { max_expansions: args.max_expansions, ..Limits::timeout(args.timeout) },
        format: args.format,
    };
    log::info!("{} ground actions, {} facts, alpha {}", problem.actions.len(), problem.facts.len(), objective.alpha);
    let sol = plan(&problem, &config.objective, &config.limits).map_err(|e| match e {
        SearchError::Config(m) => Failure::input(m),
        e => Failure { code: 1, message: e.to_string() },
    })?;
    let oc = if config.partialize || config.format == Format::Dot {
        let oc = partialize(&sol.plan, &problem).map_err(|e| Failure { code: 1, message: e.to_string() })?;
        let makespan = oc.makespan().map_err(|e| Failure { code: 1, message: e.to_string() })?;
        Some((oc, makespan))
    } else {
        None
    };
    let text = match config.format {
        Format::Plan => {
            let mut s = format_plan(&problem, &sol.plan);
            let _ = writeln!(s, "; cost {:.3}", sol.cost);
            match &oc {
                Some((oc, makespan)) => {
                    let _ = writeln!(s, "; p.c. makespan {:.3}", sol.makespan);
                    let _ = writeln!(s, "; o.c. makespan {makespan:.3}");
                    s.push_str(&oc.to_text(&problem));
                }
                None => {
                    let _ = writeln!(s, "; makespan {:.3}", sol.makespan);
                }
            }
            let _ = writeln!(s, "; alpha {}, {} states expanded", config.objective.alpha, sol.stats.expanded);
            s
        }
        Format::Json => json_report(&problem, &config, &sol, oc.as_ref().filter(|_| config.partialize)),
        Format::Dot => oc.as_ref().map(|(oc, _)| oc.to_dot(&problem)).unwrap_or_default(),
    };
    out.write_all(text.as_bytes()).map_err(|e| Failure { code: 1, message: e.to_string() })
}

fn run_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let problem = load(&args.domain, &args.problem)?;
    let problem = match &problem.metric {
        Some(m) => {
            let d = decompile_metric(m, &problem).map_err(|e| Failure::input(e.to_string()))?;
            problem.with_exec_costs(&d.costs)
        }
        None => problem,
    };
    let text = std::fs::read_to_string(&args.plan)
        .map_err(|e| Failure::input(format!("{}: {e}", args.plan.display())))?;
    let pc = parse_plan(&text, &problem)
        .map_err(|e| Failure::input(format!("{}:{}: {}", args.plan.display(), e.line, e.message)))?;
    match replay(&problem, &pc) {
        Ok(r) => {
            let _ = writeln!(out, "valid: {r}");
            Ok(())
        }
        Err(e) => Err(Failure { code: 1, message: format!("invalid at {:.3}: {}", e.time, e.message) }),
    }
}

fn run_rtpg(args: &RtpgArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let problem = load(&args.domain, &args.problem)?;
    let termination = match args.lookahead.0 {
        Some(k) => crate::rtpg::Termination::Lookahead(k),
        None => crate::rtpg::Termination::Fixpoint,
    };
    let g = propagate(&State::initial(&problem), &problem, &problem.goals, args.prop.into(), termination);
    out.write_all(g.to_csv(&problem).as_bytes()).map_err(|e| Failure { code: 1, message: e.to_string() })
}

/// Runs the command line and returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return if code == 0 { 0 } else { 2 };
        }
    };
    let result = match &cli.command {
        Command::Plan(a) => run_plan(a, out),
        Command::Validate(a) => run_validate(a, out),
        Command::Rtpg(a) => run_rtpg(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
