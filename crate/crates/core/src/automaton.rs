//! Probabilistic automata: states with nondeterministic choice between
//! labelled transitions, each leading to a distribution over states.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::dist::Distribution;
use crate::label::ActionLabel;
use crate::path::Path;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transition {
    pub label: ActionLabel,
    pub target: Distribution<usize>,
}

/// States are dense ids `0..n` with a side table of display names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbAutomaton {
    names: Vec<String>,
    transitions: Vec<Vec<Transition>>,
    actions: BTreeSet<ActionLabel>,
    initial: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DanglingInitial { initial: usize },
    DanglingTarget { state: usize, transition: usize, target: usize },
    LabelOutsideAlphabet { state: usize, transition: usize, label: ActionLabel },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DanglingInitial { initial } => write!(f, "initial state {initial} does not exist"),
            Self::DanglingTarget { state, transition, target } => {
                write!(f, "dangling target {target} in transition {transition} of state {state}")
            }
            Self::LabelOutsideAlphabet { state, transition, label } => {
                write!(f, "label {label} of transition {transition} in state {state} not in alphabet")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub states: usize,
    pub transitions: usize,
    pub terminating: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl ProbAutomaton {
    /// Assembles an automaton without checking it; see [`Self::validate`].
    /// The alphabet is the set of labels used plus `extra_actions`.
    pub fn from_parts(
        names: Vec<String>,
        transitions: Vec<Vec<Transition>>,
        initial: usize,
        extra_actions: impl IntoIterator<Item = ActionLabel>,
    ) -> Self {
        let mut actions: BTreeSet<ActionLabel> = extra_actions.into_iter().collect();
        actions.extend(transitions.iter().flatten().map(|t| t.label.clone()));
        Self { names, transitions, actions, initial }
    }

    pub(crate) fn with_actions(mut self, actions: BTreeSet<ActionLabel>) -> Self {
        self.actions = actions;
        self
    }

    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn name(&self, state: usize) -> &str {
        &self.names[state]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn state_id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn actions(&self) -> &BTreeSet<ActionLabel> {
        &self.actions
    }

    pub fn transitions(&self, state: usize) -> &[Transition] {
        &self.transitions[state]
    }

    pub fn all_transitions(&self) -> &[Vec<Transition>] {
        &self.transitions
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.iter().map(Vec::len).sum()
    }

    pub fn is_terminating(&self, state: usize) -> bool {
        self.transitions[state].is_empty()
    }

    pub fn validate(&self) -> ValidationReport {
        let n = self.num_states();
        let mut report = ValidationReport {
            states: n,
            transitions: self.num_transitions(),
            terminating: (0..n).filter(|&s| self.is_terminating(s)).count(),
            ..Default::default()
        };
        if self.initial >= n {
            report.violations.push(Violation::DanglingInitial { initial: self.initial });
        }
        for (state, ts) in self.transitions.iter().enumerate() {
            for (ti, t) in ts.iter().enumerate() {
                if !self.actions.contains(&t.label) {
                    report.violations.push(Violation::LabelOutsideAlphabet {
                        state,
                        transition: ti,
                        label: t.label.clone(),
                    });
                }
                for &target in t.target.support() {
                    if target >= n {
                        report.violations.push(Violation::DanglingTarget { state, transition: ti, target });
                    }
                }
            }
        }
        report
    }

    /// Successor states `t` with `s ⇝ t`.
    pub fn successors(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        self.transitions[state].iter().flat_map(|t| t.target.support().copied())
    }

    /// Reachable states in breadth-first order from the initial state.
    pub fn reachable_order(&self) -> Vec<usize> {
        let mut seen = vec![false; self.num_states()];
        let mut order = vec![self.initial];
        seen[self.initial] = true;
        let mut i = 0;
        while i < order.len() {
            let s = order[i];
            i += 1;
            for t in self.successors(s) {
                if !seen[t] {
                    seen[t] = true;
                    order.push(t);
                }
            }
        }
        order
    }

    /// True when no cycle is reachable from the initial state.
    pub fn is_acyclic(&self) -> bool {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut mark = vec![0u8; self.num_states()];
        let mut stack: Vec<(usize, Vec<usize>)> = vec![(self.initial, self.successors(self.initial).collect())];
        mark[self.initial] = 1;
        while let Some((s, pending)) = stack.last_mut() {
            if let Some(t) = pending.pop() {
                match mark[t] {
                    1 => return false,
                    0 => {
                        mark[t] = 1;
                        let succ = self.successors(t).collect();
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

    /// Applies `f` to every label, keeping structure and probabilities.
    pub fn relabel(&self, mut f: impl FnMut(&ActionLabel) -> ActionLabel) -> ProbAutomaton {
        let transitions = self
            .transitions
            .iter()
            .map(|ts| ts.iter().map(|t| Transition { label: f(&t.label), target: t.target.clone() }).collect())
            .collect();
        let actions = self.actions.iter().map(&mut f).collect();
        ProbAutomaton { names: self.names.clone(), transitions, actions, initial: self.initial }
    }

    /// Disjoint union; states of `other` are shifted by `self.num_states()`.
    /// The initial state is ours.
    pub fn disjoint_union(&self, other: &ProbAutomaton) -> ProbAutomaton {
        let shift = self.num_states();
        let mut names = self.names.clone();
        names.extend(other.names.iter().map(|n| format!("{n}'")));
        let mut transitions = self.transitions.clone();
        transitions.extend(other.transitions.iter().map(|ts| {
            ts.iter()
                .map(|t| Transition { label: t.label.clone(), target: t.target.map(|s| s + shift) })
                .collect()
        }));
        let actions = self.actions.union(&other.actions).cloned().collect();
        ProbAutomaton { names, transitions, actions, initial: self.initial }
    }

    /// Checks that `path` is a path of this automaton: every step follows a
    /// transition with positive probability on its successor.
    pub fn is_path(&self, path: &Path) -> bool {
        let mut cur = path.start;
        if cur >= self.num_states() {
            return false;
        }
        for step in &path.steps {
            let ok = match step.choice {
                Some(ti) => self.transitions[cur]
                    .get(ti)
                    .is_some_and(|t| t.label == step.label && t.target.support().any(|&x| x == step.next)),
                None => self.transitions[cur]
                    .iter()
                    .any(|t| t.label == step.label && t.target.support().any(|&x| x == step.next)),
            };
            if !ok {
                return false;
            }
            cur = step.next;
        }
        true
    }
}

/// Incremental construction with named states.
#[derive(Default)]
pub struct AutomatonBuilder {
    names: Vec<String>,
    index: HashMap<String, usize>,
    transitions: Vec<Vec<Transition>>,
    actions: BTreeSet<ActionLabel>,
    initial: Option<usize>,
}

impl AutomatonBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `name`, creating the state if needed.
    pub fn state(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.transitions.push(Vec::new());
        id
    }

    pub fn initial(&mut self, name: &str) -> &mut Self {
        let id = self.state(name);
        self.initial = Some(id);
        self
    }

    pub fn action(&mut self, label: ActionLabel) -> &mut Self {
        self.actions.insert(label);
        self
    }

    pub fn transition(&mut self, from: &str, label: ActionLabel, target: Distribution<String>) -> &mut Self {
        let from = self.state(from);
        let target = target.map(|name| self.state(name));
        self.transitions[from].push(Transition { label, target });
        self
    }

    /// Deterministic transition to a single state.
    pub fn step(&mut self, from: &str, label: ActionLabel, to: &str) -> &mut Self {
        self.transition(from, label, Distribution::point(to.to_string()))
    }

    pub fn build(&mut self) -> ProbAutomaton {
        let initial = self.initial.unwrap_or(0);
        if self.names.is_empty() {
            self.state("s0");
        }
        ProbAutomaton::from_parts(
            std::mem::take(&mut self.names),
            std::mem::take(&mut self.transitions),
            initial,
            std::mem::take(&mut self.actions),
        )
    }
}

/// Searches for an isomorphism between the reachable parts of two automata
/// that maps initial state to initial state. Exponential in the worst case;
/// meant for small automata and test oracles.
pub fn find_isomorphism(a: &ProbAutomaton, b: &ProbAutomaton) -> Option<BTreeMap<usize, usize>> {
    let ra = a.reachable_order();
    let rb = b.reachable_order();
    if ra.len() != rb.len() {
        return None;
    }
    let mut ctx = IsoCtx {
        a,
        b,
        fwd: BTreeMap::from([(a.initial(), b.initial())]),
        bwd: BTreeMap::from([(b.initial(), a.initial())]),
        done: BTreeSet::new(),
    };
    ctx.search().then_some(ctx.fwd)
}

struct IsoCtx<'a> {
    a: &'a ProbAutomaton,
    b: &'a ProbAutomaton,
    fwd: BTreeMap<usize, usize>,
    bwd: BTreeMap<usize, usize>,
    done: BTreeSet<usize>,
}

impl IsoCtx<'_> {
    fn search(&mut self) -> bool {
        let Some((&s, &t)) = self.fwd.iter().find(|(s, _)| !self.done.contains(*s)) else {
            return true;
        };
        if self.a.transitions(s).len() != self.b.transitions(t).len() {
            return false;
        }
        self.done.insert(s);
        let mut used = vec![false; self.b.transitions(t).len()];
        if self.match_transition(s, t, 0, &mut used) {
            return true;
        }
        self.done.remove(&s);
        false
    }

    fn match_transition(&mut self, s: usize, t: usize, i: usize, used: &mut [bool]) -> bool {
        let (a, b) = (self.a, self.b);
        let ta = a.transitions(s);
        if i == ta.len() {
            return self.search();
        }
        let tb = b.transitions(t);
        for j in 0..tb.len() {
            if used[j] || ta[i].label != tb[j].label || ta[i].target.len() != tb[j].target.len() {
                continue;
            }
            let outs_a: Vec<(usize, crate::rational::Rational)> =
                ta[i].target.iter().map(|(x, m)| (*x, m.clone())).collect();
            let mut free_b: Vec<Option<(usize, crate::rational::Rational)>> =
                tb[j].target.iter().map(|(x, m)| Some((*x, m.clone()))).collect();
            used[j] = true;
            if self.match_outcomes(s, t, i, used, &outs_a, 0, &mut free_b) {
                return true;
            }
            used[j] = false;
        }
        false
    }

    #[allow(clippy::too_many_arguments)]
    fn match_outcomes(
        &mut self,
        s: usize,
        t: usize,
        i: usize,
        used: &mut [bool],
        outs_a: &[(usize, crate::rational::Rational)],
        k: usize,
        free_b: &mut Vec<Option<(usize, crate::rational::Rational)>>,
    ) -> bool {
        if k == outs_a.len() {
            return self.match_transition(s, t, i + 1, used);
        }
        let (x, ref m) = outs_a[k];
        for pos in 0..free_b.len() {
            let Some((y, mb)) = free_b[pos].clone() else { continue };
            if &mb != m {
                continue;
            }
            let fresh = match (self.fwd.get(&x), self.bwd.get(&y)) {
                (Some(&fy), Some(&bx)) if fy == y && bx == x => false,
                (None, None) => true,
                _ => continue,
            };
            if fresh {
                self.fwd.insert(x, y);
                self.bwd.insert(y, x);
            }
            free_b[pos] = None;
            let saved_done = self.done.clone();
            if self.match_outcomes(s, t, i, used, outs_a, k + 1, free_b) {
                return true;
            }
            self.done = saved_done;
            free_b[pos] = Some((y, mb));
            if fresh {
                self.fwd.remove(&x);
                self.bwd.remove(&y);
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn coin() -> ProbAutomaton {
        let mut b = AutomatonBuilder::new();
        b.initial("s");
        b.transition(
            "s",
            ActionLabel::tau(),
            Distribution::new([("h".to_string(), ratio(1, 2)), ("t".to_string(), ratio(1, 2))]).unwrap(),
        );
        b.build()
    }

    #[test]
    fn single_state_is_valid() {
        let mut b = AutomatonBuilder::new();
        b.initial("s0");
        let report = b.build().validate();
        assert!(report.is_valid());
        assert_eq!(report.terminating, 1);
    }

    #[test]
    fn dangling_target_reported() {
        let a = ProbAutomaton::from_parts(
            vec!["s".into()],
            vec![vec![Transition { label: ActionLabel::tau(), target: Distribution::point(7) }]],
            0,
            [],
        );
        let report = a.validate();
        assert_eq!(report.violations, vec![Violation::DanglingTarget { state: 0, transition: 0, target: 7 }]);
        assert!(report.violations[0].to_string().contains("dangling target"));
    }

    #[test]
    fn acyclicity() {
        assert!(coin().is_acyclic());
        let mut b = AutomatonBuilder::new();
        b.initial("a").step("a", ActionLabel::external("x"), "b").step("b", ActionLabel::external("y"), "a");
        assert!(!b.build().is_acyclic());
    }

    #[test]
    fn isomorphism_of_renamed_copy() {
        let a = coin();
        let mut b = AutomatonBuilder::new();
        b.initial("root");
        b.transition(
            "root",
            ActionLabel::tau(),
            Distribution::new([("T".to_string(), ratio(1, 2)), ("H".to_string(), ratio(1, 2))]).unwrap(),
        );
        assert!(find_isomorphism(&a, &b.build()).is_some());
        let mut c = AutomatonBuilder::new();
        c.initial("root").step("root", ActionLabel::tau(), "x");
        assert!(find_isomorphism(&a, &c.build()).is_none());
    }
}
