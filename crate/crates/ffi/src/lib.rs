//! C interface to the planner.
//!
//! Every fallible call returns a [`ChronoStatus`]; on anything but
//! `CHRONO_STATUS_OK` a message is available from [`chrono_last_error`]
//! on the same thread. Handles are opaque and released with their `_free`
//! function; strings returned by the library are released with
//! [`chrono_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use chronoplan::cli::{format_plan, parse_plan};
use chronoplan::heuristics::{HeuristicMode, ObjectiveConfig};
use chronoplan::model::{decompile_metric, parse_problem, Problem};
use chronoplan::partialize::{partialize, OCPlan};
use chronoplan::rtpg::PropagationRule;
use chronoplan::search::{plan, Limits, SearchError, Solution};
use chronoplan::state::replay;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChronoStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidConfig = 4,
    Unsolvable = 5,
    LimitReached = 6,
    InvalidPlan = 7,
    OutOfRange = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChronoRule {
    Max = 0,
    Sum = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChronoHeuristic {
    Direct = 0,
    RelaxedPlan = 1,
}

/// Search settings. `lookahead < 0` propagates to the fixpoint;
/// `timeout_seconds <= 0` and `max_expansions == 0` mean no limit.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ChronoConfig {
    pub alpha: f64,
    pub lookahead: i32,
    pub propagation: ChronoRule,
    pub aggregation: ChronoRule,
    pub heuristic: ChronoHeuristic,
    pub mutex_adjust: bool,
    pub resource_adjust: bool,
    pub timeout_seconds: f64,
    pub max_expansions: u64,
}

/// One scheduled action of a solution.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ChronoStep {
    pub action: u32,
    pub start: f64,
    pub duration: f64,
}

/// A grounded problem with the metric's action costs applied.
pub struct ChronoProblem {
    problem: Problem,
    default_alpha: f64,
}

pub struct ChronoSolution {
    solution: Solution,
}

/// Order-constrained form of a solution.
pub struct ChronoOrderPlan {
    plan: OCPlan,
    makespan: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = CString::new(message.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: ChronoStatus, message: impl Into<String>) -> ChronoStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> ChronoStatus) -> ChronoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(ChronoStatus::Internal, "internal error"),
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, ChronoStatus> {
    if p.is_null() {
        return Err(fail(ChronoStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ChronoStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn chrono_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn chrono_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Defaults: fixpoint propagation, sum rule, relaxed plan, resource
/// adjustment on, 300 s timeout.
#[no_mangle]
pub extern "C" fn chrono_config_default(alpha: f64) -> ChronoConfig {
    ChronoConfig {
        alpha,
        lookahead: -1,
        propagation: ChronoRule::Sum,
        aggregation: ChronoRule::Sum,
        heuristic: ChronoHeuristic::RelaxedPlan,
        mutex_adjust: false,
        resource_adjust: true,
        timeout_seconds: 300.0,
        max_expansions: 0,
    }
}

fn rule(r: ChronoRule) -> PropagationRule {
    match r {
        ChronoRule::Max => PropagationRule::Max,
        ChronoRule::Sum => PropagationRule::Sum,
    }
}

fn objective(c: &ChronoConfig) -> ObjectiveConfig {
    ObjectiveConfig {
        alpha: c.alpha,
        lookahead: u32::try_from(c.lookahead).ok(),
        propagation: rule(c.propagation),
        aggregation: rule(c.aggregation),
        mode: match c.heuristic {
            ChronoHeuristic::Direct => HeuristicMode::Direct,
            ChronoHeuristic::RelaxedPlan => HeuristicMode::RelaxedPlan,
        },
        mutex_adjust: c.mutex_adjust,
        resource_adjust: c.resource_adjust,
    }
}

fn limits(c: &ChronoConfig) -> Limits {
    Limits {
        timeout: (c.timeout_seconds > 0.0).then(|| Duration::from_secs_f64(c.timeout_seconds)),
        max_expansions: (c.max_expansions > 0).then_some(c.max_expansions as usize),
    }
}

/// Parses and grounds a domain and problem given as PDDL text.
///
/// # Safety
/// `domain` and `problem` must be NUL-terminated strings; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn chrono_problem_parse(
    domain: *const c_char,
    problem: *const c_char,
    out: *mut *mut ChronoProblem,
) -> ChronoStatus {
    guard(|| {
        if out.is_null() {
            return fail(ChronoStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let (d, p) = match (text(domain, "domain"), text(problem, "problem")) {
            (Ok(d), Ok(p)) => (d, p),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let parsed = match parse_problem(d, p) {
            Ok(parsed) => parsed,
            Err(e) => {
                let file = match e.file {
                    Some(f) => format!("{f:?} ").to_lowercase(),
                    None => String::new(),
                };
                return fail(ChronoStatus::ParseError, format!("{file}{e}"));
            }
        };
        let (problem, default_alpha) = match &parsed.metric {
            Some(m) => match decompile_metric(m, &parsed) {
                Ok(dm) => (parsed.clone().with_exec_costs(&dm.costs), dm.alpha),
                Err(e) => return fail(ChronoStatus::ParseError, e.to_string()),
            },
            None => (parsed, 1.0),
        };
        *out = Box::into_raw(Box::new(ChronoProblem { problem, default_alpha }));
        ChronoStatus::Ok
    })
}

/// # Safety
/// `p` must be NULL or a handle from [`chrono_problem_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chrono_problem_free(p: *mut ChronoProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Alpha implied by the problem's metric, 1.0 without one.
///
/// # Safety
/// `p` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn chrono_problem_default_alpha(p: *const ChronoProblem) -> f64 {
    p.as_ref().map_or(f64::NAN, |p| p.default_alpha)
}

/// # Safety
/// `p` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn chrono_problem_action_count(p: *const ChronoProblem) -> usize {
    p.as_ref().map_or(0, |p| p.problem.actions.len())
}

/// Label `(name args...)` of ground action `index`; free with
/// [`chrono_string_free`]. NULL when out of range.
///
/// # Safety
/// `p` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn chrono_problem_action_label(p: *const ChronoProblem, index: u32) -> *mut c_char {
    match p.as_ref().and_then(|p| p.problem.actions.get(index as usize)) {
        Some(a) => into_c_string(a.label()),
        None => {
            set_error(format!("no action {index}"));
            ptr::null_mut()
        }
    }
}

/// Searches for a plan.
///
/// # Safety
/// `p` and `config` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chrono_plan(
    p: *const ChronoProblem,
    config: *const ChronoConfig,
    out: *mut *mut ChronoSolution,
) -> ChronoStatus {
    guard(|| {
        let (Some(p), Some(config)) = (p.as_ref(), config.as_ref()) else {
            return fail(ChronoStatus::NullArgument, "problem or config is null");
        };
        if out.is_null() {
            return fail(ChronoStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        match plan(&p.problem, &objective(config), &limits(config)) {
            Ok(solution) => {
                *out = Box::into_raw(Box::new(ChronoSolution { solution }));
                ChronoStatus::Ok
            }
            Err(e @ SearchError::Config(_)) => fail(ChronoStatus::InvalidConfig, e.to_string()),
            Err(e @ SearchError::Unsolvable(_)) => fail(ChronoStatus::Unsolvable, e.to_string()),
            Err(e @ SearchError::ResourceLimit(_)) => fail(ChronoStatus::LimitReached, e.to_string()),
        }
    })
}

/// # Safety
/// `s` must be NULL or a handle from [`chrono_plan`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chrono_solution_free(s: *mut ChronoSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn chrono_solution_cost(s: *const ChronoSolution) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.solution.cost)
}

/// # Safety
/// `s` must be a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn chrono_solution_makespan(s: *const ChronoSolution) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.solution.makespan)
}

/// # Safety
/// `s` must be a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn chrono_solution_expanded(s: *const ChronoSolution) -> usize {
    s.as_ref().map_or(0, |s| s.solution.stats.expanded)
}

/// # Safety
/// `s` must be a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn chrono_solution_step_count(s: *const ChronoSolution) -> usize {
    s.as_ref().map_or(0, |s| s.solution.plan.len())
}

/// Step `index` in the order actions were started.
///
/// # Safety
/// `s` must be a live solution handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn chrono_solution_step(s: *const ChronoSolution, index: usize, out: *mut ChronoStep) -> ChronoStatus {
    let (Some(s), false) = (s.as_ref(), out.is_null()) else {
        return fail(ChronoStatus::NullArgument, "solution or out is null");
    };
    match s.solution.plan.steps.get(index) {
        Some(step) => {
            *out = ChronoStep { action: step.action.0, start: step.start, duration: step.duration };
            ChronoStatus::Ok
        }
        None => fail(ChronoStatus::OutOfRange, format!("no step {index}")),
    }
}

/// The plan as `start: (action) [duration]` lines; free with
/// [`chrono_string_free`].
///
/// # Safety
/// `p` and `s` must be live handles, `s` solved from `p`.
#[no_mangle]
pub unsafe extern "C" fn chrono_solution_to_text(p: *const ChronoProblem, s: *const ChronoSolution) -> *mut c_char {
    match (p.as_ref(), s.as_ref()) {
        (Some(p), Some(s)) => into_c_string(format_plan(&p.problem, &s.solution.plan)),
        _ => {
            set_error("problem or solution is null");
            ptr::null_mut()
        }
    }
}

/// Lifts a solution to an order-constrained plan.
///
/// # Safety
/// `p` and `s` must be live handles, `s` solved from `p`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn chrono_partialize(
    p: *const ChronoProblem,
    s: *const ChronoSolution,
    out: *mut *mut ChronoOrderPlan,
) -> ChronoStatus {
    guard(|| {
        let (Some(p), Some(s)) = (p.as_ref(), s.as_ref()) else {
            return fail(ChronoStatus::NullArgument, "problem or solution is null");
        };
        if out.is_null() {
            return fail(ChronoStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let result = partialize(&s.solution.plan, &p.problem).and_then(|plan| {
            let makespan = plan.makespan()?;
            Ok(ChronoOrderPlan { plan, makespan })
        });
        match result {
            Ok(oc) => {
                *out = Box::into_raw(Box::new(oc));
                ChronoStatus::Ok
            }
            Err(e) => fail(ChronoStatus::InvalidPlan, e.to_string()),
        }
    })
}

/// # Safety
/// `o` must be NULL or a handle from [`chrono_partialize`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chrono_order_plan_free(o: *mut ChronoOrderPlan) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}

/// Makespan of the earliest dispatch.
///
/// # Safety
/// `o` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chrono_order_plan_makespan(o: *const ChronoOrderPlan) -> f64 {
    o.as_ref().map_or(f64::NAN, |o| o.makespan)
}

/// # Safety
/// `o` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chrono_order_plan_link_count(o: *const ChronoOrderPlan) -> usize {
    o.as_ref().map_or(0, |o| o.plan.links.len())
}

/// # Safety
/// `o` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chrono_order_plan_ordering_count(o: *const ChronoOrderPlan) -> usize {
    o.as_ref().map_or(0, |o| o.plan.orderings.len())
}

/// Graphviz rendering; free with [`chrono_string_free`].
///
/// # Safety
/// `p` and `o` must be live handles, `o` built from a solution of `p`.
#[no_mangle]
pub unsafe extern "C" fn chrono_order_plan_to_dot(p: *const ChronoProblem, o: *const ChronoOrderPlan) -> *mut c_char {
    match (p.as_ref(), o.as_ref()) {
        (Some(p), Some(o)) => into_c_string(o.plan.to_dot(&p.problem)),
        _ => {
            set_error("problem or plan is null");
            ptr::null_mut()
        }
    }
}

/// Replays a plan written as `start: (action) [duration]` lines. On
/// success `makespan` and `cost` (each may be NULL) receive the results.
///
/// # Safety
/// `p` must be a live handle and `plan_text` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn chrono_validate(
    p: *const ChronoProblem,
    plan_text: *const c_char,
    makespan: *mut f64,
    cost: *mut f64,
) -> ChronoStatus {
    guard(|| {
        let Some(p) = p.as_ref() else {
            return fail(ChronoStatus::NullArgument, "problem is null");
        };
        let t = match text(plan_text, "plan") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let pc = match parse_plan(t, &p.problem) {
            Ok(pc) => pc,
            Err(e) => return fail(ChronoStatus::ParseError, format!("line {}: {}", e.line, e.message)),
        };
        match replay(&p.problem, &pc) {
            Ok(r) => {
                if !makespan.is_null() {
                    *makespan = r.makespan;
                }
                if !cost.is_null() {
                    *cost = r.cost;
                }
                ChronoStatus::Ok
            }
            Err(e) => fail(ChronoStatus::InvalidPlan, format!("invalid at {:.3}: {}", e.time, e.message)),
        }
    })
}
