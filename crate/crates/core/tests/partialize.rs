use chronoplan::model::{parse_problem, Problem};
use chronoplan::partialize::{partialize, validate_oc, Anchor, Node, OcLink, Reason};
use chronoplan::search::{plan, Limits, ObjectiveConfig};
use chronoplan::state::{PCPlan, PlanStep};

const FOUR: &str = r#"
(define (domain four)
  (:predicates (q) (r) (s) (g1) (g2))
  (:durative-action a1 :parameters () :duration (= ?duration 2)
    :condition (at start (q)) :effect (and (at start (not (q))) (at end (r))))
  (:durative-action a2 :parameters () :duration (= ?duration 3)
    :condition (over all (r)) :effect (at end (g1)))
  (:durative-action a3 :parameters () :duration (= ?duration 2)
    :condition (and) :effect (and (at end (not (r))) (at end (s))))
  (:durative-action a4 :parameters () :duration (= ?duration 1)
    :condition (at start (s)) :effect (at end (g2))))
"#;

const FOUR_PROBLEM: &str = "(define (problem p) (:domain four) (:init (q)) (:goal (and (g1) (g2))))";

const INDEPENDENT: &str = r#"
(define (domain chores)
  (:types job)
  (:predicates (done ?j - job))
  (:functions (len ?j - job))
  (:durative-action work :parameters (?j - job) :duration (= ?duration (len ?j))
    :condition (and) :effect (at end (done ?j))))
"#;

fn four() -> Problem {
    parse_problem(FOUR, FOUR_PROBLEM).unwrap()
}

fn step(p: &Problem, label: &str, start: f64) -> PlanStep {
    let action = p.find_action(label).unwrap();
    PlanStep { action, start, duration: p.action(action).duration.as_const().unwrap() }
}

fn four_plan(p: &Problem) -> PCPlan {
    PCPlan::new(vec![step(p, "(a1)", 0.0), step(p, "(a2)", 2.0), step(p, "(a3)", 3.0), step(p, "(a4)", 5.0)])
}

#[test]
fn four_action_plan() {
    let p = four();
    let pc = four_plan(&p);
    let oc = partialize(&pc, &p).unwrap();
    let fact = |s| p.find_fact(s).unwrap();
    let mut links = oc.links.clone();
    links.sort_by_key(|l| (l.consumer, l.fact));
    let mut expected = vec![
        OcLink { producer: Node::Init, fact: fact("(q)"), consumer: Node::Step(0) },
        OcLink { producer: Node::Step(0), fact: fact("(r)"), consumer: Node::Step(1) },
        OcLink { producer: Node::Step(2), fact: fact("(s)"), consumer: Node::Step(3) },
        OcLink { producer: Node::Step(1), fact: fact("(g1)"), consumer: Node::Goal },
        OcLink { producer: Node::Step(3), fact: fact("(g2)"), consumer: Node::Goal },
    ];
    expected.sort_by_key(|l| (l.consumer, l.fact));
    assert_eq!(links, expected);
    // the deletion of r waits for a2's use of it
    assert!(oc.orderings.iter().any(|o| o.before.node == Node::Step(1)
        && o.before.anchor == Anchor::ConditionEnd(fact("(r)"))
        && o.after.node == Node::Step(2)
        && o.after.anchor == (Anchor::Effect { fact: fact("(r)"), add: false })));
    assert_eq!(oc.retractions, 0);
    assert!(oc.admits(&pc));
    validate_oc(&oc, &p).unwrap();
    assert_eq!(oc.makespan().unwrap(), 6.0);
}

#[test]
fn independent_actions_run_in_parallel() {
    let lens = [2.0, 3.0, 1.5, 2.5];
    let init: String = lens.iter().enumerate().map(|(i, l)| format!("(= (len j{i}) {l})")).collect();
    let goal: String = (0..lens.len()).map(|i| format!("(done j{i})")).collect();
    let objects: String = (0..lens.len()).map(|i| format!("j{i} ")).collect();
    let p = parse_problem(
        INDEPENDENT,
        &format!("(define (problem c) (:domain chores) (:objects {objects}- job) (:init {init}) (:goal (and {goal})))"),
    )
    .unwrap();
    let mut t = 0.0;
    let mut steps = Vec::new();
    for (i, len) in lens.iter().enumerate() {
        steps.push(step(&p, &format!("(work j{i})"), t));
        t += len;
    }
    let pc = PCPlan::new(steps);
    let oc = partialize(&pc, &p).unwrap();
    let cross = oc
        .orderings
        .iter()
        .filter(|o| matches!((o.before.node, o.after.node), (Node::Step(_), Node::Step(_))))
        .count();
    assert_eq!(cross, 0);
    let serial: f64 = lens.iter().sum();
    assert_eq!(pc.makespan(), serial);
    assert_eq!(oc.makespan().unwrap(), lens.iter().copied().fold(0.0, f64::max));
    validate_oc(&oc, &p).unwrap();
}

#[test]
fn single_action_is_framed() {
    let p = four();
    let r = p.find_fact("(r)").unwrap();
    let p = p.with_goals(vec![chronoplan::model::Goal { fact: r, deadline: f64::INFINITY }]);
    let pc = PCPlan::new(vec![step(&p, "(a1)", 0.0)]);
    let oc = partialize(&pc, &p).unwrap();
    for o in &oc.orderings {
        assert!(matches!(
            (o.before.node, o.after.node),
            (Node::Init, Node::Step(0)) | (Node::Step(0), Node::Goal)
        ));
    }
    validate_oc(&oc, &p).unwrap();
}

#[test]
fn travel_chain_keeps_its_makespan() {
    let p = parse_problem(include_str!("../data/travel-domain.pddl"), include_str!("../data/travel-problem.pddl")).unwrap();
    let sol = plan(&p, &ObjectiveConfig { alpha: 0.0, ..ObjectiveConfig::default() }, &Limits::default()).unwrap();
    let oc = partialize(&sol.plan, &p).unwrap();
    assert_eq!(oc.makespan().unwrap(), 2.5);
    validate_oc(&oc, &p).unwrap();
    assert!(oc.to_dot(&p).contains("s0 -> s1 [label=\"(at phoenix)\"]"));
    assert!(oc.to_text(&p).contains("#0 (drive-car1 tucson phoenix) -> (at phoenix) -> #1 (fly phoenix la)"));
}

#[test]
fn empty_plan() {
    let p = four().with_goals(vec![]);
    let oc = partialize(&PCPlan::new(vec![]), &p).unwrap();
    assert_eq!(oc.makespan().unwrap(), 0.0);
}

#[test]
fn mutated_plans_are_rejected() {
    let p = four();
    let oc = partialize(&four_plan(&p), &p).unwrap();

    let mut missing_link = oc.clone();
    missing_link.links.remove(1);
    assert!(validate_oc(&missing_link, &p).unwrap_err().contains("0 causal links"));

    let mut overlapping = oc.clone();
    overlapping
        .orderings
        .retain(|o| !(o.reason == Reason::Interference && o.before.node == Node::Step(1) && o.after.node == Node::Step(2)));
    assert!(overlapping.orderings.len() < oc.orderings.len());
    assert!(validate_oc(&overlapping, &p).unwrap_err().contains("interfere"));
}

#[test]
fn invalid_input_is_rejected() {
    let p = four();
    let pc = PCPlan::new(vec![step(&p, "(a2)", 0.0)]);
    assert!(partialize(&pc, &p).is_err());
}
