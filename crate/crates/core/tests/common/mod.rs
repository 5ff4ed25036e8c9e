//! Random models and brute-force oracles shared by the test targets.
#![allow(dead_code)]

use num_traits::{One, Zero};
use probanon::anonymity::AnonymitySpec;
use probanon::automaton::{ProbAutomaton, Transition};
use probanon::bisim::{is_bisimulation, Partition};
use probanon::dist::{Distribution, SubDistribution};
use probanon::fpa::{FpaStep, FullyProbAutomaton};
use probanon::label::ActionLabel;
use probanon::path::Path;
use probanon::rational::{ratio, Rational};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn x(name: &str) -> ActionLabel {
    ActionLabel::external(name)
}

pub fn marker(i: usize) -> ActionLabel {
    ActionLabel::marker(&format!("u{i}"))
}

/// Random positive weights over `outcomes`, normalized.
pub fn weights<T: Ord + Clone>(rng: &mut ChaCha8Rng, outcomes: &[T]) -> Vec<(T, Rational)> {
    let w: Vec<i64> = outcomes.iter().map(|_| rng.gen_range(1..=4)).collect();
    let total: i64 = w.iter().sum();
    outcomes.iter().cloned().zip(w.into_iter().map(|k| ratio(k, total))).collect()
}

fn dist(rng: &mut ChaCha8Rng, targets: &[usize]) -> Distribution<usize> {
    Distribution::new(weights(rng, targets)).expect("normalized")
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

/// An automaton over `labels` with up to `max_states` states. When
/// `acyclic`, every transition moves to a higher-numbered state.
pub fn random_pa(rng: &mut ChaCha8Rng, max_states: usize, labels: &[ActionLabel], acyclic: bool) -> ProbAutomaton {
    let n = rng.gen_range(1..=max_states);
    let mut transitions = vec![Vec::new(); n];
    for (s, out) in transitions.iter_mut().enumerate() {
        let pool: Vec<usize> = if acyclic { (s + 1..n).collect() } else { (0..n).collect() };
        if pool.is_empty() {
            continue;
        }
        for _ in 0..rng.gen_range(0..=3) {
            let k = rng.gen_range(1..=pool.len().min(3));
            let targets: Vec<usize> = pool.choose_multiple(rng, k).copied().collect();
            let label = labels.choose(rng).unwrap().clone();
            out.push(Transition { label, target: dist(rng, &targets) });
        }
    }
    ProbAutomaton::from_parts(names(n), transitions, 0, [])
}

/// Partitions of `0..n`, as block lists in canonical order.
pub fn all_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn go(i: usize, n: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(i);
            go(i + 1, n, cur, out);
            cur[b].pop();
        }
        cur.push(vec![i]);
        go(i + 1, n, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    go(0, n, &mut Vec::new(), &mut out);
    out
}

/// The largest bisimulation by exhaustive search: among every partition
/// that is a bisimulation, the one all others refine.
pub fn brute_force_bisimilarity(a: &ProbAutomaton) -> Partition {
    let n = a.num_states();
    let bisims: Vec<Partition> = all_partitions(n)
        .iter()
        .map(|b| Partition::from_blocks(n, b).expect("a partition"))
        .filter(|p| is_bisimulation(a, p))
        .collect();
    let top = bisims.iter().min_by_key(|p| p.num_blocks()).expect("the identity is a bisimulation").clone();
    assert!(bisims.iter().all(|p| p.refines(&top)), "bisimulations are closed under union");
    top
}

/// An acyclic FPA whose root moves on user markers (or `tau` for no user);
/// nothing else carries a marker, so user events are disjoint. With
/// `shared`, every marker leads to the same state. Other states move on
/// `o1`..`o3` or `tau`, may halt with `halts`, and may be cut with
/// `truncates`.
pub fn random_fpa(
    rng: &mut ChaCha8Rng,
    max_states: usize,
    users: usize,
    shared: bool,
    halts: bool,
    truncates: bool,
) -> FullyProbAutomaton {
    let n = rng.gen_range(3..=max_states.max(3));
    let labels = [x("o1"), x("o2"), x("o3"), ActionLabel::tau()];
    let mut steps = Vec::with_capacity(n);
    let mut root: Vec<(ActionLabel, usize)> = Vec::new();
    let first = rng.gen_range(1..n);
    for u in 1..=users {
        let to = if shared { first } else { rng.gen_range(1..n) };
        root.push((marker(u), to));
    }
    if rng.gen_bool(0.3) {
        root.push((ActionLabel::tau(), rng.gen_range(1..n)));
    }
    steps.push(FpaStep::Moves(sub(rng, &root, false)));
    for s in 1..n {
        if s + 1 == n || rng.gen_bool(0.2) {
            steps.push(if truncates && rng.gen_bool(0.3) { FpaStep::Truncated } else { FpaStep::Terminated });
            continue;
        }
        let k = rng.gen_range(1..=3);
        let moves: Vec<(ActionLabel, usize)> =
            (0..k).map(|_| (labels.choose(rng).unwrap().clone(), rng.gen_range(s + 1..n))).collect();
        let halt = halts && rng.gen_bool(0.3);
        steps.push(FpaStep::Moves(sub(rng, &moves, halt)));
    }
    FullyProbAutomaton::new(names(n), steps, 0)
}

fn sub(rng: &mut ChaCha8Rng, moves: &[(ActionLabel, usize)], halt: bool) -> SubDistribution<(ActionLabel, usize)> {
    let mut moves = moves.to_vec();
    moves.sort();
    moves.dedup();
    let w = weights(rng, &moves);
    if !halt {
        return SubDistribution::new(w, Rational::zero()).expect("normalized");
    }
    let keep = ratio(rng.gen_range(1..=3), 4);
    let scaled: Vec<_> = w.into_iter().map(|(m, p)| (m, p * &keep)).collect();
    SubDistribution::new(scaled, Rational::one() - keep).expect("normalized")
}

pub fn fpa_spec(users: usize) -> AnonymitySpec {
    AnonymitySpec::with_markers((1..=users).map(|u| (u.to_string(), marker(u))), [x("o1"), x("o2"), x("o3")])
}

/// A random walk of up to `len` steps from the root.
pub fn random_prefix(rng: &mut ChaCha8Rng, fpa: &FullyProbAutomaton, len: usize) -> Path {
    let mut p = Path::new(fpa.initial());
    for _ in 0..len {
        let FpaStep::Moves(d) = fpa.step(p.last()) else { break };
        let support: Vec<&(ActionLabel, usize)> = d.support().collect();
        let Some(&(label, next)) = support.choose(rng) else { break };
        p.push(label.clone(), None, *next);
    }
    p
}

/// Complete-path, halt and truncation mass reached from `state`, by
/// recursion on the FPA.
pub fn mass_below(fpa: &FullyProbAutomaton, state: usize) -> (Rational, Rational, Rational) {
    match fpa.step(state) {
        FpaStep::Terminated => (Rational::one(), Rational::zero(), Rational::zero()),
        FpaStep::Truncated => (Rational::zero(), Rational::zero(), Rational::one()),
        FpaStep::Moves(d) => {
            let mut acc = (Rational::zero(), d.halt_mass().clone(), Rational::zero());
            for ((_, next), p) in d.iter() {
                let (c, h, t) = mass_below(fpa, *next);
                acc.0 += p * c;
                acc.1 += p * h;
                acc.2 += p * t;
            }
            acc
        }
    }
}

/// Two copies of a random acyclic automaton behind a hidden choice:
/// `root -tau-> {l: p, r: 1 - p}`, `l -u1-> copy 1`, `r -u2-> copy 2`.
/// With `symmetric`, `p = 1/2` and the swap of the copies is an
/// automorphism up to unobservable labels. Returns the automaton, the
/// spec, and the swap map.
pub fn mirrored_toy(rng: &mut ChaCha8Rng, symmetric: bool) -> (ProbAutomaton, AnonymitySpec, Vec<usize>) {
    let labels = [x("o1"), x("o2"), ActionLabel::tau()];
    let body = random_pa(rng, 5, &labels, true);
    let k = body.num_states();
    let mut names = vec!["root".to_string(), "l".to_string(), "r".to_string()];
    let mut transitions: Vec<Vec<Transition>> = vec![Vec::new(); 3];
    let p = if symmetric { ratio(1, 2) } else { ratio(rng.gen_range(1..=2), 5) };
    let choice = Distribution::new([(1, p.clone()), (2, Rational::one() - p)]).unwrap();
    transitions[0].push(Transition { label: ActionLabel::tau(), target: choice });
    transitions[1].push(Transition { label: marker(1), target: Distribution::point(3 + body.initial()) });
    transitions[2].push(Transition { label: marker(2), target: Distribution::point(3 + k + body.initial()) });
    for copy in 0..2 {
        let offset = 3 + copy * k;
        for s in 0..k {
            names.push(format!("c{copy}_{}", body.name(s)));
            transitions.push(
                body.transitions(s)
                    .iter()
                    .map(|t| Transition { label: t.label.clone(), target: t.target.map(|&u| u + offset) })
                    .collect(),
            );
        }
    }
    let a = ProbAutomaton::from_parts(names, transitions, 0, []);
    let map: Vec<usize> = (0..a.num_states())
        .map(|s| match s {
            0 => 0,
            1 => 2,
            2 => 1,
            s if s < 3 + k => s + k,
            s => s - k,
        })
        .collect();
    let spec = AnonymitySpec::with_markers([("1".into(), marker(1)), ("2".into(), marker(2))], [x("o1"), x("o2")]);
    (a, spec, map)
}

/// `root -tau-> {l, r}`, then `u1` into one random body and `u2` into
/// another. With `same`, both bodies are the same automaton.
pub fn hidden_pair(rng: &mut ChaCha8Rng, same: bool) -> (ProbAutomaton, AnonymitySpec) {
    let labels = [x("o1"), x("o2"), ActionLabel::tau()];
    let b1 = random_pa(rng, 4, &labels, true);
    let b2 = if same { b1.clone() } else { random_pa(rng, 4, &labels, true) };
    let mut names = vec!["root".to_string(), "l".to_string(), "r".to_string()];
    let mut transitions: Vec<Vec<Transition>> = vec![Vec::new(); 3];
    let choice = Distribution::new(weights(rng, &[1, 2])).unwrap();
    transitions[0].push(Transition { label: ActionLabel::tau(), target: choice });
    let mut offset = 3;
    for (i, body) in [&b1, &b2].into_iter().enumerate() {
        transitions[1 + i].push(Transition { label: marker(1 + i), target: Distribution::point(offset + body.initial()) });
        for s in 0..body.num_states() {
            names.push(format!("b{i}_{}", body.name(s)));
            transitions.push(
                body.transitions(s)
                    .iter()
                    .map(|t| Transition { label: t.label.clone(), target: t.target.map(|&u| u + offset) })
                    .collect(),
            );
        }
        offset += body.num_states();
    }
    let spec = AnonymitySpec::with_markers([("1".into(), marker(1)), ("2".into(), marker(2))], [x("o1"), x("o2")]);
    (ProbAutomaton::from_parts(names, transitions, 0, []), spec)
}
