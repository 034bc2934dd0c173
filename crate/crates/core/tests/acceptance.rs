mod common;

use std::time::{Duration, Instant};

use chronoplan::heuristics::{direct_heuristic, resource_adjustment, Heuristic, ObjectiveConfig};
use chronoplan::model::{FactId, Problem};
use chronoplan::partialize::{partialize, validate_oc};
use chronoplan::rtpg::{propagate, PropagationRule, Rtpg, Termination};
use chronoplan::search::{plan, Limits, SearchError, Solution};
use chronoplan::state::{replay, PCPlan, State};

use common::*;

const EPS: f64 = 1e-9;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn(&mut Corpus) -> Outcome);

/// Everything later criteria need from earlier ones.
#[derive(Default)]
struct Corpus {
    /// States whose graphs the structural checks rebuild.
    probes: Vec<(Problem, State)>,
    /// Plans produced by the solver.
    plans: Vec<(String, Problem, PCPlan)>,
}

impl Corpus {
    fn probe(&mut self, p: &Problem, s: &State) {
        self.probes.push((p.clone(), s.clone()));
    }

    fn solved(&mut self, name: String, p: &Problem, sol: &Solution) {
        self.plans.push((name, p.clone(), sol.plan.clone()));
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn goal_pairs(p: &Problem, s: &State, rule: PropagationRule, term: Termination) -> Vec<(f64, f64)> {
    let g = propagate(s, p, &p.goals, rule, term);
    g.facts[p.goals[0].fact.index()].pairs()
}

fn la(p: &Problem) -> FactId {
    p.find_fact("(at la)").unwrap()
}

fn criterion_1(c: &mut Corpus) -> Outcome {
    let p = travel();
    let s = State::initial(&p);
    let started = Instant::now();
    let g = propagate(&s, &p, &p.goals, PropagationRule::Sum, Termination::Fixpoint);
    let elapsed = started.elapsed();
    c.probe(&p, &s);
    let got_la = g.facts[la(&p).index()].pairs();
    let got_phx = g.facts[p.find_fact("(at phoenix)").unwrap().index()].pairs();
    ensure(got_la == [(2.5, 8.0), (3.0, 7.5), (6.0, 5.5)], || format!("C(at la) = {got_la:?}"))?;
    ensure(got_phx == [(1.0, 2.0), (1.5, 1.5)], || format!("C(at phoenix) = {got_phx:?}"))?;
    ensure(elapsed < Duration::from_millis(100), || format!("took {elapsed:?}"))?;
    Ok(format!("C(at la) {got_la:?}, C(at phoenix) {got_phx:?} in {elapsed:?}"))
}

fn criterion_2(c: &mut Corpus) -> Outcome {
    let p = travel();
    let s = State::initial(&p);
    let last = |v: &[(f64, f64)]| *v.last().unwrap();
    let k0 = goal_pairs(&p, &s, PropagationRule::Sum, Termination::Lookahead(0));
    ensure(k0 == [(2.5, 8.0)], || format!("lookahead 0: {k0:?}"))?;
    let k1 = goal_pairs(&p, &s, PropagationRule::Sum, Termination::Lookahead(1));
    ensure(last(&k1).1 == 6.0, || format!("lookahead 1: {k1:?}"))?;
    for term in [Termination::Lookahead(2), Termination::Fixpoint] {
        let v = goal_pairs(&p, &s, PropagationRule::Sum, term);
        ensure(last(&v) == (6.0, 5.5), || format!("{term:?}: {v:?}"))?;
    }
    let pd = p.clone().with_deadline(la(&p), 5.5);
    let d1 = goal_pairs(&pd, &s, PropagationRule::Sum, Termination::Lookahead(1));
    ensure(last(&d1) == (3.0, 7.5), || format!("deadline 5.5, lookahead 1: {d1:?}"))?;
    c.probe(&pd, &s);
    Ok(format!("k=0 {k0:?}; k=1 ends {:?}; k=2,inf end (6.0, 5.5); deadline 5.5 ends {:?}", last(&k1), last(&d1)))
}

/// `min alpha·c + (1 - alpha)·t` over explicit `(t, c)` points.
fn best_point(points: &[(f64, f64)], alpha: f64) -> (f64, f64) {
    points
        .iter()
        .map(|&(t, c)| (alpha * c + (1.0 - alpha) * t, t))
        .fold((f64::INFINITY, f64::INFINITY), |a, b| if b.0 < a.0 { b } else { a })
}

fn criterion_3(c: &mut Corpus) -> Outcome {
    let p = travel();
    let s = State::initial(&p);
    let points = [(2.5, 8.0), (3.0, 7.5), (6.0, 5.5)];
    let g = propagate(&s, &p, &p.goals, PropagationRule::Sum, Termination::Fixpoint);
    let h0 = direct_heuristic(&g, 0.0, PropagationRule::Sum, 0.0);
    ensure(h0.value == 2.5 && h0.value == best_point(&points, 0.0).0, || format!("alpha 0: {}", h0.value))?;

    let pd = p.clone().with_deadline(la(&p), 6.5);
    let gd = propagate(&s, &pd, &pd.goals, PropagationRule::Sum, Termination::Fixpoint);
    c.probe(&pd, &s);
    let h1 = direct_heuristic(&gd, 1.0, PropagationRule::Sum, 0.0);
    ensure(h1.value == 5.5, || format!("alpha 1: {}", h1.value))?;

    let h55 = direct_heuristic(&g, 0.55, PropagationRule::Sum, 0.0);
    let (want, want_t) = best_point(&points, 0.55);
    ensure((h55.value - want).abs() < EPS && (want - 5.475).abs() < EPS, || format!("alpha 0.55: {}", h55.value))?;
    ensure(h55.time == want_t && want_t == 3.0, || format!("alpha 0.55 at t = {}", h55.time))?;

    let cfg = ObjectiveConfig { alpha: 0.55, resource_adjust: false, ..ObjectiveConfig::default() };
    let rp = Heuristic::new(&p, cfg).evaluate(&s, 0.0).relaxed_plan.ok_or("no relaxed plan")?;
    let labels = rp.labels(&p);
    ensure(labels == ["(drive-car2 tucson phoenix)", "(fly phoenix la)"], || format!("RP {labels:?}"))?;
    ensure(rp.cost == 7.5 && rp.makespan == 3.0, || format!("C_RP {}, T_RP {}", rp.cost, rp.makespan))?;
    Ok(format!("h = 2.5 / 5.5 / {:.3} (t = {}); RP {labels:?} C 7.5 T 3.0", h55.value, h55.time))
}

fn criterion_4(c: &mut Corpus) -> Outcome {
    let p = travel();
    let s = State::initial(&p);
    let cfg = ObjectiveConfig { alpha: 1.0, lookahead: Some(0), resource_adjust: false, ..ObjectiveConfig::default() };
    let p1 = Heuristic::new(&p, cfg).evaluate(&s, 0.0).relaxed_plan.ok_or("no relaxed plan")?.labels(&p);
    ensure(p1 == ["(drive-car1 tucson phoenix)", "(fly phoenix la)"], || format!("pinned at 2.5: {p1:?}"))?;
    let pd = p.clone().with_deadline(la(&p), 7.0);
    let p2 = Heuristic::new(&pd, cfg).evaluate(&s, 0.0).relaxed_plan.ok_or("no relaxed plan")?.labels(&pd);
    ensure(p2 == ["(drive-car2 tucson phoenix)", "(fly phoenix la)"], || format!("pinned at 7.0: {p2:?}"))?;
    c.probe(&pd, &s);
    Ok(format!("P1 {p1:?}, P2 {p2:?}"))
}

fn alphas() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Solves `p` for every alpha; returns `(alpha, cost, makespan)` rows.
fn sweep(
    c: &mut Corpus,
    name: &str,
    p: &Problem,
    config: impl Fn(f64) -> ObjectiveConfig,
) -> Result<Vec<(f64, f64, f64)>, String> {
    let mut rows = Vec::new();
    for alpha in alphas() {
        let started = Instant::now();
        let sol = plan(p, &config(alpha), &Limits::timeout(10.0)).map_err(|e| format!("{name} alpha {alpha}: {e}"))?;
        let elapsed = started.elapsed();
        ensure(elapsed < Duration::from_secs(10), || format!("{name} alpha {alpha}: {elapsed:?}"))?;
        replay(p, &sol.plan).map_err(|e| format!("{name} alpha {alpha}: replay: {e}"))?;
        rows.push((alpha, sol.cost, sol.makespan));
        if alpha == 0.5 {
            for s in states_along(p, &sol.plan) {
                c.probe(p, &s);
            }
        }
        c.solved(format!("{name} alpha {alpha}"), p, &sol);
    }
    Ok(rows)
}

fn monotone(name: &str, rows: &[(f64, f64, f64)]) -> Result<(), String> {
    for w in rows.windows(2) {
        let ((a0, c0, t0), (a1, c1, t1)) = (w[0], w[1]);
        ensure(c1 <= c0 + EPS, || format!("{name}: cost rises {c0} -> {c1} at alpha {a0} -> {a1}"))?;
        ensure(t1 >= t0 - EPS, || format!("{name}: makespan falls {t0} -> {t1} at alpha {a0} -> {a1}"))?;
    }
    Ok(())
}

/// Exact sweeps (admissible search) must trace a monotone tradeoff on every
/// instance. The default relaxed-plan search is inadmissible; it is held to
/// it on the travel problem and only reported on the generated suite.
fn criterion_5(c: &mut Corpus) -> Outcome {
    let travel = travel();
    let default = |alpha| ObjectiveConfig { alpha, ..ObjectiveConfig::default() };
    let exact = sweep(c, "travel", &travel, ObjectiveConfig::admissible)?;
    monotone("travel (admissible)", &exact)?;
    let rows = sweep(c, "travel", &travel, default)?;
    monotone("travel", &rows)?;

    let mut averages = vec![(0.0, 0.0, 0.0); alphas().len()];
    let mut tradeoffs = 0;
    let mut bumps = 0;
    for seed in 0..20 {
        let name = format!("logistics-{seed}");
        let p = logistics(seed);
        let exact = sweep(c, &name, &p, ObjectiveConfig::admissible)?;
        monotone(&name, &exact)?;
        let (first, last) = (exact[0], exact[exact.len() - 1]);
        if last.1 < first.1 || last.2 > first.2 {
            tradeoffs += 1;
        }
        let rows = sweep(c, &name, &p, default)?;
        if monotone(&name, &rows).is_err() {
            bumps += 1;
        }
        for (avg, row) in averages.iter_mut().zip(&rows) {
            *avg = (row.0, avg.1 + row.1 / 20.0, avg.2 + row.2 / 20.0);
        }
    }
    let (a0, a1) = (averages[0], averages[averages.len() - 1]);
    Ok(format!(
        "travel {}/{} at alpha 0 -> {}/{} at alpha 1 (cost/makespan); 20 logistics exact sweeps monotone, {tradeoffs} with a tradeoff; \
         relaxed-plan search averages {:.2}/{:.2} -> {:.2}/{:.2}, {bumps} instances not monotone individually",
        rows[0].1,
        rows[0].2,
        rows[10].1,
        rows[10].2,
        a0.1,
        a0.2,
        a1.1,
        a1.2,
    ))
}

fn criterion_6(c: &mut Corpus) -> Outcome {
    let p = planes();
    let s = State::initial(&p);
    c.probe(&p, &s);
    let base = ObjectiveConfig { alpha: 0.5, resource_adjust: false, ..ObjectiveConfig::default() };
    let carrier = |mutex_adjust: bool| -> Result<String, String> {
        let rp = Heuristic::new(&p, ObjectiveConfig { mutex_adjust, ..base })
            .evaluate(&s, 0.0)
            .relaxed_plan
            .ok_or("no relaxed plan")?;
        let labels = rp.labels(&p);
        let step = labels.iter().find(|l| l.starts_with("(move p2")).ok_or(format!("p2 not moved: {labels:?}"))?;
        Ok(step.split_whitespace().nth(2).unwrap_or_default().to_string())
    };
    let plain = carrier(false)?;
    let adjusted = carrier(true)?;
    ensure(plain == "plane1", || format!("without adjustment p2 rides {plain}"))?;
    ensure(adjusted == "plane2", || format!("with adjustment p2 rides {adjusted}"))?;
    Ok(format!("package 2: {plain} without mutex adjustment, {adjusted} with"))
}

fn criterion_7(c: &mut Corpus) -> Outcome {
    let (delta, cost) = (20.0, 1.0);
    let mut got = Vec::new();
    for (deficit, want) in [(11.0, 1.0), (40.0, 2.0), (0.0, 0.0)] {
        // oracle: smallest n with n·delta >= deficit
        let mut n = 0.0;
        while n * delta < deficit {
            n += 1.0;
        }
        ensure(n * cost == want, || format!("oracle for deficit {deficit}"))?;
        let v = resource_adjustment(deficit + 5.0, 5.0, 0.0, Some((delta, cost)));
        ensure(v == want, || format!("deficit {deficit}: {v}"))?;
        got.push(v);
    }

    let p = fuel_travel();
    let s = State::initial(&p);
    c.probe(&p, &s);
    let base = ObjectiveConfig { alpha: 1.0, ..ObjectiveConfig::default() };
    let plain = Heuristic::new(&p, ObjectiveConfig { resource_adjust: false, ..base }).evaluate(&s, 0.0);
    let adjusted = Heuristic::new(&p, base).evaluate(&s, 0.0);
    let refuel = p.find_action("(refuel-car1 tucson)").ok_or("no refuel action")?;
    let refuel_cost = p.action(refuel).exec_cost;
    ensure(
        (adjusted.value - plain.value - refuel_cost).abs() < EPS,
        || format!("plain {}, adjusted {}", plain.value, adjusted.value),
    )?;
    let sol = plan(&p, &base, &Limits::timeout(10.0)).map_err(|e| e.to_string())?;
    replay(&p, &sol.plan).map_err(|e| e.to_string())?;
    ensure(sol.plan.steps.iter().any(|st| st.action == refuel), || "solver plan skips the refuel".into())?;
    ensure((adjusted.value - sol.cost).abs() < EPS, || format!("adjusted {} vs plan cost {}", adjusted.value, sol.cost))?;
    c.solved("fuel-travel".into(), &p, &sol);
    Ok(format!(
        "adjustments {got:?}; fuel travel h {} plain, {} adjusted, optimal cost {}",
        plain.value, adjusted.value, sol.cost
    ))
}

fn check_partial(name: &str, p: &Problem, pc: &PCPlan) -> Result<(f64, f64, Duration), String> {
    let started = Instant::now();
    let oc = partialize(pc, p).map_err(|e| format!("{name}: {e}"))?;
    let elapsed = started.elapsed();
    validate_oc(&oc, p).map_err(|e| format!("{name}: {e}"))?;
    let oc_span = oc.makespan().map_err(|e| format!("{name}: {e}"))?;
    ensure(oc_span <= pc.makespan() + EPS, || format!("{name}: o.c. {oc_span} > p.c. {}", pc.makespan()))?;
    ensure(oc.admits(pc), || format!("{name}: input schedule violates an ordering"))?;
    ensure(oc.retractions == 0, || format!("{name}: {} retractions", oc.retractions))?;
    ensure(oc.threatened_links(p).is_empty(), || format!("{name}: threatened links"))?;
    if pc.len() <= 68 {
        ensure(elapsed < Duration::from_millis(100), || format!("{name}: took {elapsed:?}"))?;
    }
    Ok((pc.makespan(), oc_span, elapsed))
}

fn criterion_8(c: &mut Corpus) -> Outcome {
    let mut slowest = Duration::ZERO;
    let mut improved = Vec::new();
    for (name, p, pc) in &c.plans {
        let (pcs, ocs, t) = check_partial(name, p, pc)?;
        slowest = slowest.max(t);
        if ocs < pcs - EPS {
            improved.push(100.0 * (pcs - ocs) / pcs);
        }
    }
    let lens: Vec<f64> = (0..68).map(|i| (1 + i % 5) as f64).collect();
    let (p, pc) = chores(&lens);
    let (pcs, ocs, t) = check_partial("68 chores", &p, &pc)?;
    ensure(ocs == 5.0, || format!("68 chores: o.c. makespan {ocs}"))?;
    let mean = if improved.is_empty() { 0.0 } else { improved.iter().sum::<f64>() / improved.len() as f64 };
    let max = improved.iter().copied().fold(0.0, f64::max);
    Ok(format!(
        "{} solver plans ok, slowest {slowest:?}; {} shortened, mean {mean:.1}% max {max:.1}%; 68 chores {pcs} -> {ocs} in {t:?}",
        c.plans.len(),
        improved.len()
    ))
}

fn criterion_9(c: &mut Corpus) -> Outcome {
    const DEPTH: usize = 6;
    let started = Instant::now();
    let (mut solvable, mut checked) = (0, 0);
    for seed in 0..200u64 {
        let p = micro(seed);
        let s = State::initial(&p);
        let plans = enumerate_plans(&p, DEPTH);
        c.probe(&p, &s);
        for alpha in [0.0, 1.0] {
            let cfg = ObjectiveConfig::admissible(alpha);
            let h = Heuristic::new(&p, cfg).evaluate(&s, 0.0).value;
            let best = best_objective(&plans, alpha);
            ensure(h <= best + EPS, || format!("seed {seed} alpha {alpha}: h {h} > optimum {best}"))?;
            match plan(&p, &cfg, &Limits::timeout(10.0)) {
                Ok(sol) => {
                    replay(&p, &sol.plan).map_err(|e| format!("seed {seed} alpha {alpha}: replay: {e}"))?;
                    let value = cfg.objective(sol.cost, sol.makespan);
                    ensure(value <= best + EPS, || format!("seed {seed} alpha {alpha}: plan {value} > optimum {best}"))?;
                    if sol.plan.len() <= DEPTH {
                        ensure(value >= best - EPS, || format!("seed {seed} alpha {alpha}: plan {value} < optimum {best}"))?;
                    }
                    if alpha == 0.0 {
                        c.solved(format!("micro-{seed}"), &p, &sol);
                    }
                }
                Err(SearchError::Unsolvable(_)) => {
                    ensure(plans.is_empty(), || format!("seed {seed} alpha {alpha}: solver found no plan"))?;
                }
                Err(e) => return Err(format!("seed {seed} alpha {alpha}: {e}")),
            }
            checked += 1;
        }
        if !plans.is_empty() {
            solvable += 1;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("200 instances ({solvable} solvable), {checked} heuristic checks, {elapsed:?}"))
}

/// Every breakpoint time of the given cost functions.
fn times<'a>(fs: impl IntoIterator<Item = &'a Rtpg>, fact: usize) -> Vec<f64> {
    let mut ts: Vec<f64> = fs.into_iter().flat_map(|g| g.facts[fact].pairs()).map(|(t, _)| t).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

fn criterion_10(c: &mut Corpus) -> Outcome {
    let terms = [Termination::Lookahead(0), Termination::Lookahead(1), Termination::Lookahead(2), Termination::Fixpoint];
    let mut graphs = 0;
    for (i, (p, s)) in c.probes.iter().enumerate() {
        let build = |rule, term| propagate(s, p, &p.goals, rule, term);
        let sum: Vec<Rtpg> = terms.iter().map(|&t| build(PropagationRule::Sum, t)).collect();
        let max: Vec<Rtpg> = terms.iter().map(|&t| build(PropagationRule::Max, t)).collect();
        graphs += sum.len() + max.len();
        for g in sum.iter().chain(&max) {
            ensure(g.facts.iter().chain(&g.actions).all(|f| f.is_well_formed()), || format!("probe {i}: malformed cost function"))?;
        }
        let (gs, gm) = (&sum[3], &max[3]);
        for f in 0..p.facts.len() {
            for t in times([gs, gm], f) {
                let (a, b) = (gs.facts[f].query(t), gm.facts[f].query(t));
                ensure(a >= b - EPS, || format!("probe {i}: {} sum {a} < max {b} at {t}", p.fact_name(FactId(f as u32))))?;
            }
        }
        for rule in [&sum, &max] {
            for goal in &p.goals {
                let f = goal.fact.index();
                for w in rule.windows(2) {
                    for t in times([&w[0], &w[1]], f) {
                        let (a, b) = (w[0].facts[f].query(t), w[1].facts[f].query(t));
                        ensure(b <= a + EPS, || format!("probe {i}: goal cost rises {a} -> {b} at {t} with more lookahead"))?;
                    }
                }
            }
        }
    }
    Ok(format!("{} states, {graphs} graphs", c.probes.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("travel cost functions", criterion_1),
        ("lookahead semantics", criterion_2),
        ("heuristic values", criterion_3),
        ("extraction time sensitivity", criterion_4),
        ("cost/makespan tradeoff monotonicity", criterion_5),
        ("mutex adjustment", criterion_6),
        ("resource adjustment", criterion_7),
        ("partialization", criterion_8),
        ("admissibility oracle", criterion_9),
        ("graph structure", criterion_10),
    ];
    let mut corpus = Corpus::default();
    let mut results: Vec<Option<(Outcome, Duration)>> = vec![None; criteria.len()];
    // partialization runs last among 1-9 so it sees every solver plan
    for i in [0, 1, 2, 3, 4, 5, 6, 8, 7, 9] {
        let started = Instant::now();
        let outcome = criteria[i].1(&mut corpus);
        results[i] = Some((outcome, started.elapsed()));
    }
    let mut failed = 0;
    for (i, ((name, _), result)) in criteria.iter().zip(results).enumerate() {
        let (outcome, elapsed) = result.unwrap();
        match outcome {
            Ok(detail) => println!("[PASS] {} {name}: {detail} ({:.2} s)", i + 1, elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {} {name}: {why} ({:.2} s)", i + 1, elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
