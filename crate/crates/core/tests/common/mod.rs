//! Problem generators and brute-force oracles shared by the test targets.
#![allow(dead_code)]

use chronoplan::model::{parse_problem, Problem};
use chronoplan::state::{PCPlan, State};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TRAVEL_DOMAIN: &str = include_str!("../../data/travel-domain.pddl");
pub const TRAVEL_PROBLEM: &str = include_str!("../../data/travel-problem.pddl");
pub const LOGISTICS_DOMAIN: &str = include_str!("../../data/logistics-domain.pddl");

pub fn travel() -> Problem {
    parse_problem(TRAVEL_DOMAIN, TRAVEL_PROBLEM).unwrap()
}

pub fn planes() -> Problem {
    parse_problem(
        include_str!("../../data/two-planes-domain.pddl"),
        include_str!("../../data/two-planes-problem.pddl"),
    )
    .unwrap()
}

pub fn fuel_travel() -> Problem {
    parse_problem(
        include_str!("../../data/fuel-travel-domain.pddl"),
        include_str!("../../data/fuel-travel-problem.pddl"),
    )
    .unwrap()
}

/// A small logistics problem: 2-3 cities with an office and an airport
/// each, one truck per city, one airplane, 1-2 packages bound for other
/// cities (a single package when there are three cities).
pub fn logistics_problem_text(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cities = rng.gen_range(2..=3);
    let packages = if cities == 3 { 1 } else { rng.gen_range(1..=2) };
    let office = |c: usize| format!("o{c}");
    let airport = |c: usize| format!("a{c}");

    let mut locations = Vec::new();
    let mut init = Vec::new();
    for c in 0..cities {
        locations.push(office(c));
        locations.push(airport(c));
        init.push(format!("(local {} {})", office(c), airport(c)));
        init.push(format!("(local {} {})", airport(c), office(c)));
        for d in 0..cities {
            if c != d {
                init.push(format!("(road {} {})", office(c), office(d)));
                init.push(format!("(air {} {})", airport(c), airport(d)));
            }
        }
        let start = if rng.gen_bool(0.5) { office(c) } else { airport(c) };
        init.push(format!("(at t{c} {start})"));
    }
    init.push(format!("(at plane {})", airport(rng.gen_range(0..cities))));

    let mut goals = Vec::new();
    for p in 0..packages {
        let from = rng.gen_range(0..cities);
        let mut to = rng.gen_range(0..cities - 1);
        if to >= from {
            to += 1;
        }
        let pick = |rng: &mut ChaCha8Rng, c| if rng.gen_bool(0.5) { office(c) } else { airport(c) };
        init.push(format!("(at p{p} {})", pick(&mut rng, from)));
        goals.push(format!("(at p{p} {})", pick(&mut rng, to)));
    }

    let trucks: Vec<String> = (0..cities).map(|c| format!("t{c}")).collect();
    let pkgs: Vec<String> = (0..packages).map(|p| format!("p{p}")).collect();
    format!(
        "(define (problem logistics-{seed}) (:domain logistics)\n  (:objects {} - location {} - truck plane - airplane {} - package)\n  (:init {})\n  (:goal (and {})))\n",
        locations.join(" "),
        trucks.join(" "),
        pkgs.join(" "),
        init.join(" "),
        goals.join(" "),
    )
}

pub fn logistics(seed: u64) -> Problem {
    parse_problem(LOGISTICS_DOMAIN, &logistics_problem_text(seed)).unwrap()
}

/// Parameterless domain with up to 4 actions over up to 3 facts, integer
/// durations 1-3 and integer costs 1-5.
pub fn micro_texts(seed: u64) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nfacts = rng.gen_range(1..=3);
    let nactions = rng.gen_range(1..=4);
    let fact = |i: usize| format!("(f{i})");
    let mut actions = String::new();
    for a in 0..nactions {
        let mut conds = Vec::new();
        let mut effects = Vec::new();
        for f in 0..nfacts {
            if rng.gen_bool(0.35) {
                let when = ["at start", "over all", "at end"].choose(&mut rng).unwrap();
                conds.push(format!("({when} {})", fact(f)));
            }
            match rng.gen_range(0..10) {
                0..=3 => {
                    let when = if rng.gen_bool(0.75) { "at end" } else { "at start" };
                    effects.push(format!("({when} {})", fact(f)));
                }
                4 | 5 => {
                    let when = if rng.gen_bool(0.5) { "at end" } else { "at start" };
                    effects.push(format!("({when} (not {}))", fact(f)));
                }
                _ => {}
            }
        }
        if effects.is_empty() {
            effects.push(format!("(at end {})", fact(rng.gen_range(0..nfacts))));
        }
        actions.push_str(&format!(
            "  (:durative-action a{a} :parameters () :duration (= ?duration {}) :cost {}\n    :condition (and {}) :effect (and {}))\n",
            rng.gen_range(1..=3),
            rng.gen_range(1..=5),
            conds.join(" "),
            effects.join(" "),
        ));
    }
    let preds: Vec<String> = (0..nfacts).map(fact).collect();
    let domain = format!(
        "(define (domain micro) (:requirements :durative-actions)\n  (:predicates {})\n{actions})\n",
        preds.join(" ")
    );
    let init: Vec<String> = (0..nfacts).filter(|_| rng.gen_bool(0.4)).map(fact).collect();
    let mut goal: Vec<String> = (0..nfacts).filter(|_| rng.gen_bool(0.5)).map(fact).collect();
    if goal.is_empty() {
        goal.push(fact(rng.gen_range(0..nfacts)));
    }
    let problem = format!(
        "(define (problem m{seed}) (:domain micro) (:init {}) (:goal (and {})))\n",
        init.join(" "),
        goal.join(" ")
    );
    (domain, problem)
}

pub fn micro(seed: u64) -> Problem {
    let (d, p) = micro_texts(seed);
    parse_problem(&d, &p).unwrap()
}

/// `(cost, makespan)` of every goal-reaching plan with at most `depth`
/// action starts.
pub fn enumerate_plans(problem: &Problem, depth: usize) -> Vec<(f64, f64)> {
    fn go(p: &Problem, s: &State, depth: usize, out: &mut Vec<(f64, f64)>) {
        if s.goal_satisfied(p) {
            let plan = s.plan();
            out.push((plan.cost(p), plan.makespan()));
        }
        if depth > 0 {
            for id in p.action_ids() {
                if let Ok(next) = s.try_apply(p, id) {
                    go(p, &next, depth - 1, out);
                }
            }
        }
        if let Ok(next) = s.advance_time() {
            go(p, &next, depth, out);
        }
    }
    let mut out = Vec::new();
    go(problem, &State::initial(problem), depth, &mut out);
    out
}

/// Smallest `alpha·cost + (1 - alpha)·makespan` over `plans`.
pub fn best_objective(plans: &[(f64, f64)], alpha: f64) -> f64 {
    plans.iter().map(|&(c, t)| alpha * c + (1.0 - alpha) * t).fold(f64::INFINITY, f64::min)
}

/// Independent jobs run back to back.
pub fn chores(lens: &[f64]) -> (Problem, PCPlan) {
    let domain = r#"
(define (domain chores)
  (:types job)
  (:predicates (done ?j - job))
  (:functions (len ?j - job))
  (:durative-action work :parameters (?j - job) :duration (= ?duration (len ?j))
    :condition (and) :effect (at end (done ?j))))
"#;
    let objects: String = (0..lens.len()).map(|i| format!("j{i} ")).collect();
    let init: String = lens.iter().enumerate().map(|(i, l)| format!("(= (len j{i}) {l}) ")).collect();
    let goal: String = (0..lens.len()).map(|i| format!("(done j{i}) ")).collect();
    let p = parse_problem(
        domain,
        &format!("(define (problem c) (:domain chores) (:objects {objects}- job) (:init {init}) (:goal (and {goal})))"),
    )
    .unwrap();
    let mut t = 0.0;
    let mut steps = Vec::new();
    for (i, &len) in lens.iter().enumerate() {
        let action = p.find_action(&format!("(work j{i})")).unwrap();
        steps.push(chronoplan::state::PlanStep { action, start: t, duration: len });
        t += len;
    }
    (p, PCPlan::new(steps))
}

/// Initial state plus the state right after each step of `plan` starts.
pub fn states_along(problem: &Problem, plan: &PCPlan) -> Vec<State> {
    let mut steps = plan.steps.clone();
    steps.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut s = State::initial(problem);
    let mut out = vec![s.clone()];
    for step in steps {
        s = s.advance_to(step.start).unwrap();
        s = s.try_apply(problem, step.action).unwrap();
        out.push(s.clone());
    }
    out
}
