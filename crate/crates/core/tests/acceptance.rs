//! One PASS/FAIL line per acceptance criterion. All comparisons are exact
//! rational equalities. Exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use common::*;
use num_traits::One;
use probanon::anonymity::{
    bp_cross_check, check_fpa, check_fpa_bp, check_pa, check_scheduler, find_interfering, interfering,
    prove_by_automorphism, Status, Strategy,
};
use probanon::bisim::bisimilarity;
use probanon::dc::{lift_component_maps, DiningCryptographers, Master};
use probanon::dist::SubDistribution;
use probanon::fpa::FullyProbAutomaton;
use probanon::label::ActionLabel;
use probanon::measure::{cond_prob, event_bounds, event_prob, path_prob, EventPredicate, PathMeasure};
use probanon::models::{hidden_choice, race, renamed_copy_choice, two_user_spec};
use probanon::path::Path;
use probanon::rational::{format_fraction, ratio, Rational};
use probanon::sched::{
    enumerate_admissible, sample_admissible, synthesize_admissible, unfold, Guard, Horizon, ObservationMap,
    SchedContext, Scheduler,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn announce(i: usize, disagree: bool) -> ActionLabel {
    ActionLabel::output(&format!("{}{i}", if disagree { 'd' } else { 'a' }))
}

/// The announcement vector as an event: each cryptographer's announcement
/// occurs, in whatever order the scheduler interleaves them.
fn vector(bits: u8, n: usize) -> EventPredicate {
    EventPredicate::And((1..=n).map(|i| EventPredicate::occurs(announce(i, bits >> (i - 1) & 1 == 1))).collect())
}

fn odd_vectors(n: usize) -> Vec<u8> {
    (0..1u8 << n).filter(|b| b.count_ones() % 2 == 1).collect()
}

/// Checks `P[vector = o | A_i] = 1/4` for every payer and odd vector.
fn chaum_table(fpa: &FullyProbAutomaton, n: usize) -> Result<(), String> {
    for i in 1..=n {
        let given = EventPredicate::occurs(DiningCryptographers::marker(i));
        for &o in &odd_vectors(n) {
            let p = cond_prob(fpa, &vector(o, n), &given).map_err(|e| e.to_string())?;
            ensure(p == ratio(1, 4), format!("P[vector {o:03b} | A_{i}] = {}", format_fraction(&p)))?;
        }
    }
    Ok(())
}

fn criterion_1() -> Outcome {
    let n = 3;
    let dc = DiningCryptographers::new(n, Master::uniform(n));
    let a = dc.automaton();
    let spec = dc.spec();
    let depth = dc.depth();
    let ctx = SchedContext::new(a, ObservationMap::collapse(spec.observable.clone()));

    let syn = synthesize_admissible(a, &spec.observable);
    let run = unfold(&ctx, &syn, Horizon::Unbounded).map_err(|e| e.to_string())?;
    chaum_table(&run.fpa, n).map_err(|e| format!("(a) synthesized: {e}"))?;

    let cap = 300;
    let mut enumerated = 0;
    for xi in enumerate_admissible(&ctx, depth, Guard { max_schedulers: cap, ..Guard::default() }) {
        let Ok(xi) = xi else { break };
        let run = unfold(&ctx, &xi, Horizon::Bounded(depth)).map_err(|e| e.to_string())?;
        ensure(!run.truncated, "(b) horizon does not cover the protocol")?;
        chaum_table(&run.fpa, n).map_err(|e| format!("(b) enumerated scheduler {enumerated}: {e}"))?;
        enumerated += 1;
    }
    for i in 1..=n {
        let ai = EventPredicate::occurs(DiningCryptographers::marker(i));
        let (lo, hi) = event_bounds(a, &ai).map_err(|e| e.to_string())?;
        ensure(lo == ratio(1, 4) && hi == ratio(1, 4), format!("(b) P[A_{i}] not fixed at 1/4"))?;
        for &o in &odd_vectors(n) {
            let (lo, hi) = event_bounds(a, &vector(o, n).and(ai.clone())).map_err(|e| e.to_string())?;
            ensure(lo == ratio(1, 16) && hi == ratio(1, 16), format!("(b) bounds for vector {o:03b}, payer {i}"))?;
        }
    }

    for seed in 0..100 {
        let xi = sample_admissible(&ctx, depth, seed);
        let run = unfold(&ctx, &xi, Horizon::Bounded(depth)).map_err(|e| e.to_string())?;
        chaum_table(&run.fpa, n).map_err(|e| format!("(c) sample seed {seed}: {e}"))?;
    }
    Ok(format!(
        "(a) synthesized; (b) first {enumerated} enumerated schedulers exactly, and every non-halting scheduler \
         via exact min = max bounds P[vector ∧ A_i] = 1/16, P[A_i] = 1/4; (c) 100 samples"
    ))
}

fn leaking(m: &probanon::automaton::ProbAutomaton) -> Scheduler {
    let x = ActionLabel::external;
    let mid = m.state_id("mid").unwrap();
    let root = Path::new(m.initial());
    let mut table = BTreeMap::from([(root.clone(), SubDistribution::point(0))]);
    for (side, user, pick) in [("l", "a1", 0), ("r", "a2", 1)] {
        let p = root.extended(ActionLabel::tau(), Some(0), m.state_id(side).unwrap());
        table.insert(p.clone(), SubDistribution::point(0));
        table.insert(p.extended(x(user), Some(0), mid), SubDistribution::point(pick));
    }
    Scheduler::Unrestricted(table)
}

fn criterion_2() -> Outcome {
    let m = hidden_choice();
    let spec = two_user_spec();
    let x = ActionLabel::external;
    let strict = ObservationMap::strict(spec.observable.clone());
    let collapse = ObservationMap::collapse(spec.observable.clone());
    let sctx = SchedContext::new(&m, strict.clone());
    let run = unfold(&sctx, &leaking(&m), Horizon::Unbounded).map_err(|e| e.to_string())?;
    let a1 = EventPredicate::occurs(x("a1"));
    let given = cond_prob(&run.fpa, &a1, &EventPredicate::occurs(x("x1"))).map_err(|e| e.to_string())?;
    let prior = event_prob(&run.fpa, &a1).map_err(|e| e.to_string())?.value;
    ensure(given == Rational::one(), format!("P[a1 | x1] = {}", format_fraction(&given)))?;
    ensure(prior == ratio(1, 2), format!("P[a1] = {}", format_fraction(&prior)))?;
    let v = check_fpa(&run.fpa, &spec).map_err(|e| e.to_string())?;
    ensure(v.status == Status::Violation, "check_fpa misses the leak")?;

    let c = check_pa(&m, &spec, &collapse, &Strategy::Enumerate { horizon: 3 }, Guard::default())
        .map_err(|e| e.to_string())?;
    ensure(c.status.is_anonymous(), format!("collapse mode: {}", c.status))?;

    let mut flagged = false;
    for xi in enumerate_admissible(&sctx, 3, Guard::default()) {
        let xi = xi.map_err(|e| e.to_string())?;
        let u = unfold(&sctx, &xi, Horizon::Bounded(3)).map_err(|e| e.to_string())?;
        if u.fpa == run.fpa {
            let v = check_scheduler(&sctx, &spec, &xi, Horizon::Bounded(3)).map_err(|e| e.to_string())?;
            flagged = v.status == Status::Violation;
        }
    }
    ensure(flagged, "strict mode: leaking scheduler not enumerated or not flagged")?;
    Ok(format!(
        "P[a1 | x1] = 1, P[a1] = 1/2, VIOLATION; collapse: {} over {} schedulers; strict: leaking table enumerated and flagged",
        c.status, c.checked
    ))
}

fn criterion_3() -> Outcome {
    let r = race();
    let a = &r.automaton;
    let spec = two_user_spec();
    let x = ActionLabel::external;
    let ctx = SchedContext::new(a, ObservationMap::strict([]));
    let seq = |p: &str, q: &str| EventPredicate::otrace(vec![x(p), x(q)], &spec.observable);
    for (k, found) in interfering(a, &spec, 6, Guard::default()).enumerate() {
        let (xi, _) = found.map_err(|e| e.to_string())?;
        let run = unfold(&ctx, &xi, Horizon::Bounded(6)).map_err(|e| e.to_string())?;
        let p12 = cond_prob(&run.fpa, &seq("x1", "x2"), &EventPredicate::occurs(x("a1"))).map_err(|e| e.to_string())?;
        let p21 = cond_prob(&run.fpa, &seq("x2", "x1"), &EventPredicate::occurs(x("a2"))).map_err(|e| e.to_string())?;
        if p12.is_one() && p21.is_one() {
            return Ok(format!("P[x1 x2 | a1] = P[x2 x1 | a2] = 1 (interfering scheduler #{})", k + 1));
        }
    }
    Err("no interfering scheduler with P[x1 x2 | a1] = P[x2 x1 | a2] = 1".into())
}

fn criterion_4() -> Outcome {
    let dc = DiningCryptographers::new(3, Master::uniform(3));
    let a = dc.automaton();
    let spec = dc.spec();
    let depth = dc.depth();
    let (xi, w) = find_interfering(a, &spec, depth, Guard::default())
        .map_err(|e| e.to_string())?
        .ok_or("no interfering scheduler")?;
    let ctx = SchedContext::new(a, ObservationMap::strict([]));
    let run = unfold(&ctx, &xi, Horizon::Bounded(depth)).map_err(|e| e.to_string())?;
    let (l, r) = w.replay(&run.fpa, &spec).map_err(|e| e.to_string())?;
    ensure(l == w.left && r == w.right && l != r, "witness does not replay")?;
    Ok(format!("{w}"))
}

fn criterion_5() -> Outcome {
    let (mut anon, mut viol) = (0, 0);
    for seed in 0..200u64 {
        let users = 2 + (seed % 2) as usize;
        let fpa = random_fpa(&mut rng(seed), 20, users, seed % 3 == 0, seed % 4 == 0, false);
        let spec = fpa_spec(users);
        let a = check_fpa(&fpa, &spec).map_err(|e| e.to_string())?;
        let b = check_fpa_bp(&fpa, &spec).map_err(|e| e.to_string())?;
        ensure(a.status == b.status, format!("seed {seed}: {} vs {}", a.status, b.status))?;
        if a.status.is_anonymous() {
            anon += 1;
        } else {
            viol += 1;
        }
    }
    Ok(format!("200 FPAs agree ({anon} anonymous, {viol} violations)"))
}

fn criterion_6() -> Outcome {
    let labels = [ActionLabel::external("a"), ActionLabel::external("b")];
    let mut nontrivial = 0;
    for seed in 0..200u64 {
        let a = random_pa(&mut rng(1_000 + seed), 6, &labels, false);
        let fast = bisimilarity(&a);
        let brute = brute_force_bisimilarity(&a);
        ensure(fast.blocks() == brute.blocks(), format!("seed {seed}: {:?} vs {:?}", fast.blocks(), brute.blocks()))?;
        if fast.num_blocks() > 1 && fast.num_blocks() < a.num_states() {
            nontrivial += 1;
        }
    }
    Ok(format!("200 automata agree ({nontrivial} with a proper nontrivial partition)"))
}

fn criterion_7() -> Outcome {
    let dc = DiningCryptographers::new(3, Master::Nondeterministic);
    let spec = dc.spec();
    let mut maps = BTreeMap::new();
    for (i, j) in [(1, 2), (1, 3), (2, 3)] {
        if let Some(m) = lift_component_maps(&dc.composite, &dc.component_swap(i, j, false)) {
            maps.insert((i - 1, j - 1), m);
        }
    }
    let dc_verdict = prove_by_automorphism(dc.automaton(), &spec, &maps);
    let dc_note = if dc_verdict.status == Status::AnonymousProved {
        let obs = ObservationMap::collapse(spec.observable.clone());
        let v = check_pa(dc.automaton(), &spec, &obs, &Strategy::Closure { horizon: dc.depth() }, Guard::default())
            .map_err(|e| e.to_string())?;
        ensure(v.status.is_anonymous(), "DC: proved but a violation exists")?;
        "DC proved and confirmed".to_string()
    } else {
        format!("DC {} ({}), implication holds vacuously", dc_verdict.status, dc_verdict.coverage)
    };

    let (mut proved, mut other) = (0, 0);
    for seed in 0..50u64 {
        let (a, spec, swap) = mirrored_toy(&mut rng(5_000 + seed), seed % 5 != 4);
        let v = prove_by_automorphism(&a, &spec, &BTreeMap::from([((0, 1), swap)]));
        if v.status != Status::AnonymousProved {
            other += 1;
            continue;
        }
        proved += 1;
        let obs = ObservationMap::collapse(spec.observable.clone());
        let e = check_pa(&a, &spec, &obs, &Strategy::Enumerate { horizon: a.num_states() }, Guard::default())
            .map_err(|e| e.to_string())?;
        ensure(e.status.is_anonymous(), format!("toy {seed}: proved, but enumeration finds {}", e.status))?;
    }
    ensure(proved > 0, "no toy was proved")?;
    Ok(format!("{dc_note}; toys: {proved} proved and confirmed by exhaustive enumeration, {other} not proved"))
}

fn criterion_8() -> Outcome {
    let mut fpas = 0;
    for seed in 0..200u64 {
        let fpa = random_fpa(&mut rng(9_000 + seed), 20, 2, false, true, seed % 2 == 0);
        let pm = PathMeasure::new(&fpa).map_err(|e| e.to_string())?;
        let complete: Rational = pm.paths.iter().map(|(_, m)| m).sum();
        ensure(complete + &pm.halt_mass + &pm.truncated_mass == Rational::one(), format!("seed {seed}: mass"))?;
        fpas += 1;
    }
    let dc = DiningCryptographers::new(3, Master::uniform(3));
    let ctx = SchedContext::new(dc.automaton(), ObservationMap::collapse(dc.observable()));
    for seed in 0..10 {
        let xi = sample_admissible(&ctx, dc.depth(), seed);
        let pm = PathMeasure::new(&unfold(&ctx, &xi, Horizon::Bounded(dc.depth())).unwrap().fpa).unwrap();
        let complete: Rational = pm.paths.iter().map(|(_, m)| m).sum();
        ensure(complete + &pm.halt_mass + &pm.truncated_mass == Rational::one(), "DC unfolding mass")?;
        fpas += 1;
    }

    let mut r = rng(77);
    let mut cones = 0;
    let mut seed = 0u64;
    while cones < 1000 {
        let fpa = random_fpa(&mut rng(20_000 + seed), 20, 3, false, false, false);
        let pm = PathMeasure::new(&fpa).map_err(|e| e.to_string())?;
        for len in 0..5 {
            let prefix = random_prefix(&mut r, &fpa, len);
            let p = path_prob(&fpa, &prefix).map_err(|e| e.to_string())?;
            ensure(pm.cone(&prefix) == p, format!("cone mismatch, model {seed}"))?;
            cones += 1;
        }
        seed += 1;
    }
    Ok(format!("{fpas} FPAs sum to 1; {cones} cones satisfy P(C_π) = P(π)"))
}

fn criterion_9() -> Outcome {
    let (m, spec) = renamed_copy_choice(3);
    let obs = ObservationMap::collapse(spec.observable.clone());
    let horizon = 32;
    let v = check_pa(&m, &spec, &obs, &Strategy::Enumerate { horizon }, Guard::default()).map_err(|e| e.to_string())?;
    ensure(v.status == Status::AnonymousOnCheckedClass, format!("per-scheduler check gives {}", v.status))?;
    let ctx = SchedContext::new(&m, obs);
    let schedulers: Vec<Scheduler> =
        enumerate_admissible(&ctx, horizon, Guard::default()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let cross = bp_cross_check(&ctx, &spec, &schedulers, Horizon::Bounded(horizon)).map_err(|e| e.to_string())?;
    ensure(cross.status == Status::Violation, "cross-scheduler diagnostic finds nothing")?;
    Ok(format!("{} over {} schedulers; cross-scheduler: {}", v.status, v.checked, cross.witness.unwrap()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("Chaum's theorem, n = 3", criterion_1),
        ("hidden choice M", criterion_2),
        ("race example", criterion_3),
        ("DC under unrestricted schedulers", criterion_4),
        ("definition equivalence", criterion_5),
        ("bisimilarity vs brute force", criterion_6),
        ("automorphism cross-validation", criterion_7),
        ("measure invariants", criterion_8),
        ("P/P' regression", criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let ms = start.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("PASS {} {name} [{ms} ms]: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name} [{ms} ms]: {why}", k + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
