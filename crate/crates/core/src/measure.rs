//! Exact path measure of acyclic fully probabilistic automata.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::automaton::ProbAutomaton;
use crate::fpa::{FpaStep, FullyProbAutomaton};
use crate::label::{format_trace, ActionLabel};
use crate::path::Path;
use crate::rational::{format_fraction, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error("automaton has a reachable cycle; only acyclic automata are measured")]
    CyclicUnsupported,
    #[error("not a path of the automaton: step {0} has probability zero")]
    NotAPath(usize),
    #[error("conditioning event has probability zero")]
    ConditionNullEvent,
}

/// A predicate on complete paths, evaluated on the trace.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventPredicate {
    All,
    /// The label occurs somewhere on the path (matching name, kind and tag).
    Occurs(ActionLabel),
    /// The projection of the trace onto `observable` equals `observation`.
    OtraceEquals { observation: Vec<ActionLabel>, observable: BTreeSet<ActionLabel> },
    And(Vec<EventPredicate>),
    Or(Vec<EventPredicate>),
    Not(Box<EventPredicate>),
}

impl EventPredicate {
    pub fn occurs(label: ActionLabel) -> Self {
        Self::Occurs(label)
    }

    pub fn otrace(observation: Vec<ActionLabel>, observable: &BTreeSet<ActionLabel>) -> Self {
        Self::OtraceEquals { observation, observable: observable.clone() }
    }

    pub fn and(self, other: EventPredicate) -> Self {
        Self::And(vec![self, other])
    }

    pub fn or(self, other: EventPredicate) -> Self {
        Self::Or(vec![self, other])
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        Self::Not(Box::new(self))
    }

    /// Labels the predicate depends on: evaluating it on the trace projected
    /// to this set gives the same answer.
    pub fn labels(&self) -> BTreeSet<ActionLabel> {
        let mut out = BTreeSet::new();
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels(&self, out: &mut BTreeSet<ActionLabel>) {
        match self {
            Self::All => {}
            Self::Occurs(l) => {
                out.insert(l.clone());
            }
            Self::OtraceEquals { observable, .. } => out.extend(observable.iter().cloned()),
            Self::And(es) | Self::Or(es) => es.iter().for_each(|e| e.collect_labels(out)),
            Self::Not(e) => e.collect_labels(out),
        }
    }

    /// True when built from `All` and `Occurs` only, so the set of labels
    /// seen so far is enough to evaluate it.
    pub fn is_occurrence_based(&self) -> bool {
        match self {
            Self::All | Self::Occurs(_) => true,
            Self::OtraceEquals { .. } => false,
            Self::And(es) | Self::Or(es) => es.iter().all(Self::is_occurrence_based),
            Self::Not(e) => e.is_occurrence_based(),
        }
    }

    pub fn eval(&self, trace: &[ActionLabel]) -> bool {
        match self {
            Self::All => true,
            Self::Occurs(l) => trace.contains(l),
            Self::OtraceEquals { observation, observable } => {
                let mut obs = trace.iter().filter(|l| observable.contains(l));
                observation.iter().all(|o| obs.next() == Some(o)) && obs.next().is_none()
            }
            Self::And(es) => es.iter().all(|e| e.eval(trace)),
            Self::Or(es) => es.iter().any(|e| e.eval(trace)),
            Self::Not(e) => !e.eval(trace),
        }
    }
}

impl fmt::Display for EventPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::All => write!(f, "true"),
            Self::Occurs(l) => write!(f, "occurs({l})"),
            Self::OtraceEquals { observation, .. } => write!(f, "otrace = [{}]", format_trace(observation)),
            Self::And(es) | Self::Or(es) => {
                let op = if matches!(self, Self::And(_)) { " & " } else { " | " };
                let parts: Vec<String> = es.iter().map(|e| format!("({e})")).collect();
                write!(f, "{}", parts.join(op))
            }
            Self::Not(e) => write!(f, "!({e})"),
        }
    }
}

/// Observable projection of a trace.
pub fn project(trace: &[ActionLabel], observable: &BTreeSet<ActionLabel>) -> Vec<ActionLabel> {
    trace.iter().filter(|l| observable.contains(l)).cloned().collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MeasureReport {
    #[serde(serialize_with = "ser_fraction")]
    pub value: Rational,
    #[serde(serialize_with = "ser_fraction")]
    pub halt_mass: Rational,
    #[serde(serialize_with = "ser_fraction")]
    pub truncated_mass: Rational,
    pub complete_path_count: usize,
}

pub(crate) fn ser_fraction<S: serde::Serializer>(v: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_fraction(v))
}

/// All complete finite paths with their probabilities, plus the mass lost to
/// halting and to horizon truncation.
#[derive(Clone, Debug)]
pub struct PathMeasure {
    pub paths: Vec<(Path, Rational)>,
    pub halt_mass: Rational,
    pub truncated_mass: Rational,
}

impl PathMeasure {
    pub fn new(fpa: &FullyProbAutomaton) -> Result<Self, MeasureError> {
        if !fpa.is_acyclic() {
            return Err(MeasureError::CyclicUnsupported);
        }
        let mut out = PathMeasure { paths: Vec::new(), halt_mass: Rational::zero(), truncated_mass: Rational::zero() };
        let mut stack = vec![(Path::new(fpa.initial()), Rational::one())];
        while let Some((path, prob)) = stack.pop() {
            match fpa.step(path.last()) {
                FpaStep::Terminated => out.paths.push((path, prob)),
                FpaStep::Truncated => out.truncated_mass += prob,
                FpaStep::Moves(d) => {
                    out.halt_mass += &prob * d.halt_mass();
                    let mut succ: Vec<_> = d.iter().collect();
                    succ.reverse();
                    for ((label, next), m) in succ {
                        stack.push((path.extended(label.clone(), None, *next), &prob * m));
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn prob(&self, event: &EventPredicate) -> Rational {
        self.paths.iter().filter(|(p, _)| event.eval(&p.trace())).map(|(_, m)| m).sum()
    }

    pub fn report(&self, event: &EventPredicate) -> MeasureReport {
        MeasureReport {
            value: self.prob(event),
            halt_mass: self.halt_mass.clone(),
            truncated_mass: self.truncated_mass.clone(),
            complete_path_count: self.paths.len(),
        }
    }

    pub fn cond(&self, event: &EventPredicate, given: &EventPredicate) -> Result<Rational, MeasureError> {
        let denom = self.prob(given);
        if denom.is_zero() {
            return Err(MeasureError::ConditionNullEvent);
        }
        Ok(self.prob(&event.clone().and(given.clone())) / denom)
    }

    /// Mass of complete paths extending `prefix`.
    pub fn cone(&self, prefix: &Path) -> Rational {
        self.paths.iter().filter(|(p, _)| prefix.is_prefix_of(p)).map(|(_, m)| m).sum()
    }
}

/// `P(π)`, the product of step probabilities from the initial state.
pub fn path_prob(fpa: &FullyProbAutomaton, path: &Path) -> Result<Rational, MeasureError> {
    if path.start != fpa.initial() {
        return Err(MeasureError::NotAPath(0));
    }
    let mut prob = Rational::one();
    let mut cur = path.start;
    for (i, step) in path.steps.iter().enumerate() {
        let m = fpa.prob(cur, &step.label, step.next);
        if m.is_zero() {
            return Err(MeasureError::NotAPath(i));
        }
        prob *= m;
        cur = step.next;
    }
    Ok(prob)
}

pub fn complete_paths(fpa: &FullyProbAutomaton) -> Result<Vec<(Path, Rational)>, MeasureError> {
    Ok(PathMeasure::new(fpa)?.paths)
}

pub fn event_prob(fpa: &FullyProbAutomaton, event: &EventPredicate) -> Result<MeasureReport, MeasureError> {
    Ok(PathMeasure::new(fpa)?.report(event))
}

pub fn cond_prob(
    fpa: &FullyProbAutomaton,
    event: &EventPredicate,
    given: &EventPredicate,
) -> Result<Rational, MeasureError> {
    PathMeasure::new(fpa)?.cond(event, given)
}

/// Least and greatest probability of `event` over all non-halting
/// schedulers of an acyclic automaton, by backward induction on states
/// paired with the trace projected to the event's labels. Randomized
/// schedulers mix deterministic ones, so they stay within these bounds.
pub fn event_bounds(a: &ProbAutomaton, event: &EventPredicate) -> Result<(Rational, Rational), MeasureError> {
    if !a.is_acyclic() {
        return Err(MeasureError::CyclicUnsupported);
    }
    let relevant = event.labels();
    let mut memo: HashMap<(usize, Vec<ActionLabel>), (Rational, Rational)> = HashMap::new();
    Ok(bounds_at(a, event, &relevant, a.initial(), Vec::new(), &mut memo))
}

fn bounds_at(
    a: &ProbAutomaton,
    event: &EventPredicate,
    relevant: &BTreeSet<ActionLabel>,
    s: usize,
    mem: Vec<ActionLabel>,
    memo: &mut HashMap<(usize, Vec<ActionLabel>), (Rational, Rational)>,
) -> (Rational, Rational) {
    if let Some(v) = memo.get(&(s, mem.clone())) {
        return v.clone();
    }
    let value = if a.is_terminating(s) {
        let v = if event.eval(&mem) { Rational::one() } else { Rational::zero() };
        (v.clone(), v)
    } else {
        let mut lo: Option<Rational> = None;
        let mut hi: Option<Rational> = None;
        for t in a.transitions(s) {
            let mut next_mem = mem.clone();
            if relevant.contains(&t.label) {
                next_mem.push(t.label.clone());
            }
            let (mut l, mut h) = (Rational::zero(), Rational::zero());
            for (&u, p) in t.target.iter() {
                let (lu, hu) = bounds_at(a, event, relevant, u, next_mem.clone(), memo);
                l += p * lu;
                h += p * hu;
            }
            lo = Some(lo.map_or(l.clone(), |x| x.min(l)));
            hi = Some(hi.map_or(h.clone(), |x| x.max(h)));
        }
        (lo.expect("non-terminating"), hi.expect("non-terminating"))
    };
    memo.insert((s, mem), value.clone());
    value
}
