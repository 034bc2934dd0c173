use chronoplan::model::{parse_problem, Problem};
use chronoplan::search::{plan, Limits, ObjectiveConfig, SearchError};
use chronoplan::state::{replay, State};

fn travel() -> Problem {
    parse_problem(include_str!("../data/travel-domain.pddl"), include_str!("../data/travel-problem.pddl")).unwrap()
}

/// Every `(cost, makespan)` of goal-reaching action sequences with at most
/// `depth` actions.
fn enumerate(p: &Problem, s: &State, depth: usize, out: &mut Vec<(f64, f64)>) {
    if s.goal_satisfied(p) {
        let plan = s.plan();
        out.push((plan.cost(p), plan.makespan()));
    }
    if depth > 0 {
        for id in p.action_ids() {
            if let Ok(next) = s.try_apply(p, id) {
                enumerate(p, &next, depth - 1, out);
            }
        }
    }
    if let Ok(next) = s.advance_time() {
        enumerate(p, &next, depth, out);
    }
}

fn optimum(p: &Problem, key: impl Fn(&(f64, f64)) -> f64) -> f64 {
    let mut all = Vec::new();
    enumerate(p, &State::initial(p), 3, &mut all);
    all.iter().map(key).fold(f64::INFINITY, f64::min)
}

fn labels(p: &Problem, plan: &chronoplan::state::PCPlan) -> Vec<(f64, String)> {
    plan.steps.iter().map(|s| (s.start, p.action(s.action).label())).collect()
}

#[test]
fn fastest_plan_for_alpha_zero() {
    let p = travel();
    let cfg = ObjectiveConfig { alpha: 0.0, ..ObjectiveConfig::default() };
    let sol = plan(&p, &cfg, &Limits::default()).unwrap();
    assert_eq!(sol.makespan, optimum(&p, |x| x.1));
    assert_eq!(sol.makespan, 2.5);
    assert_eq!(
        labels(&p, &sol.plan),
        vec![(0.0, "(drive-car1 tucson phoenix)".to_string()), (1.0, "(fly phoenix la)".to_string())]
    );
    replay(&p, &sol.plan).unwrap();
}

#[test]
fn cheapest_plan_for_alpha_one() {
    let p = travel();
    let cfg = ObjectiveConfig { alpha: 1.0, ..ObjectiveConfig::default() };
    let sol = plan(&p, &cfg, &Limits::default()).unwrap();
    assert_eq!(sol.cost, optimum(&p, |x| x.0));
    assert_eq!(sol.cost, 5.5);
    assert_eq!(
        labels(&p, &sol.plan),
        vec![(0.0, "(drive-car1 tucson lasvegas)".to_string()), (3.5, "(train lasvegas la)".to_string())]
    );
    replay(&p, &sol.plan).unwrap();
}

#[test]
fn unreachable_goal_is_unsolvable() {
    let p = parse_problem(
        include_str!("../data/travel-domain.pddl"),
        &include_str!("../data/travel-problem.pddl").replace("la lasvegas - city", "la lasvegas mars - city").replace("(:goal (at la))", "(:goal (at mars))"),
    )
    .unwrap();
    let err = plan(&p, &ObjectiveConfig::default(), &Limits::default()).unwrap_err();
    assert!(matches!(err, SearchError::Unsolvable(_)), "{err}");
}

#[test]
fn deterministic_and_limited() {
    let p = travel();
    let cfg = ObjectiveConfig { alpha: 0.55, ..ObjectiveConfig::default() };
    let a = plan(&p, &cfg, &Limits::default()).unwrap();
    let b = plan(&p, &cfg, &Limits::default()).unwrap();
    assert_eq!(a.plan, b.plan);
    assert_eq!(a.stats, b.stats);
    let limited = Limits { max_expansions: Some(0), ..Limits::default() };
    assert!(matches!(plan(&p, &cfg, &limited), Err(SearchError::ResourceLimit(_))));
    let bad = ObjectiveConfig { alpha: 1.5, ..cfg };
    assert!(matches!(plan(&p, &bad, &Limits::default()), Err(SearchError::Config(_))));
}
