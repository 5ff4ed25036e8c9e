//! Fully probabilistic automata: at most one (sub-)distribution over
//! `(action, successor)` pairs per state, no nondeterminism.

use num_traits::Zero;

use crate::automaton::{ProbAutomaton, Transition};
use crate::dist::{Distribution, SubDistribution};
use crate::label::ActionLabel;
use crate::path::Path;
use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FpaStep {
    /// No outgoing mass: the state is terminating.
    Terminated,
    /// Forced stop at an analysis horizon. Not terminating in the model;
    /// mass arriving here is reported as truncated.
    Truncated,
    /// Distribution over moves. A positive halt mass means the remaining
    /// probability is lost to halting.
    Moves(SubDistribution<(ActionLabel, usize)>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FullyProbAutomaton {
    names: Vec<String>,
    steps: Vec<FpaStep>,
    initial: usize,
}

impl FullyProbAutomaton {
    pub fn new(names: Vec<String>, steps: Vec<FpaStep>, initial: usize) -> Self {
        assert_eq!(names.len(), steps.len(), "one step object per state");
        Self { names, steps, initial }
    }

    pub fn num_states(&self) -> usize {
        self.steps.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn name(&self, state: usize) -> &str {
        &self.names[state]
    }

    pub fn step(&self, state: usize) -> &FpaStep {
        &self.steps[state]
    }

    pub fn is_terminating(&self, state: usize) -> bool {
        matches!(self.steps[state], FpaStep::Terminated)
    }

    /// `μ(a, t)` for the step of `state`; zero when terminating.
    pub fn prob(&self, state: usize, label: &ActionLabel, next: usize) -> Rational {
        match &self.steps[state] {
            FpaStep::Moves(d) => d.prob(&(label.clone(), next)),
            _ => crate::rational::zero(),
        }
    }

    pub fn successors(&self, state: usize) -> Vec<usize> {
        match &self.steps[state] {
            FpaStep::Moves(d) => d.support().map(|(_, t)| *t).collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_acyclic(&self) -> bool {
        let mut mark = vec![0u8; self.num_states()];
        let mut stack = vec![(self.initial, self.successors(self.initial))];
        mark[self.initial] = 1;
        while let Some((s, pending)) = stack.last_mut() {
            if let Some(t) = pending.pop() {
                match mark[t] {
                    1 => return false,
                    0 => {
                        mark[t] = 1;
                        let succ = self.successors(t);
                        stack.push((t, succ));
                    }
                    _ => {}
                }
            } else {
                mark[*s] = 2;
                stack.pop();
            }
        }
        true
    }

    /// Every step of `path` has positive probability.
    pub fn is_path(&self, path: &Path) -> bool {
        let mut cur = path.start;
        for step in &path.steps {
            if self.prob(cur, &step.label, step.next) == crate::rational::zero() {
                return false;
            }
            cur = step.next;
        }
        true
    }

    /// All labels that occur on some move.
    pub fn actions(&self) -> std::collections::BTreeSet<ActionLabel> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                FpaStep::Moves(d) => Some(d.support().map(|(l, _)| l.clone()).collect::<Vec<_>>()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    /// The same automaton as a probabilistic automaton with one transition
    /// per non-terminating state. `None` if some state halts, is truncated,
    /// or moves with more than one label.
    pub fn to_pa(&self) -> Option<ProbAutomaton> {
        let mut transitions = Vec::with_capacity(self.num_states());
        for step in &self.steps {
            match step {
                FpaStep::Terminated => transitions.push(Vec::new()),
                FpaStep::Truncated => return None,
                FpaStep::Moves(d) => {
                    if !d.halt_mass().is_zero() {
                        return None;
                    }
                    let mut labels = d.support().map(|(l, _)| l);
                    let label = labels.next()?.clone();
                    if labels.any(|l| *l != label) {
                        return None;
                    }
                    let target = Distribution::new(d.iter().map(|((_, t), q)| (*t, q.clone()))).ok()?;
                    transitions.push(vec![Transition { label, target }]);
                }
            }
        }
        Some(ProbAutomaton::from_parts(self.names.clone(), transitions, self.initial, []))
    }
}
