//! Finite paths: alternating states and actions.

use crate::label::ActionLabel;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Step {
    pub label: ActionLabel,
    /// Index of the transition taken, for paths of a probabilistic
    /// automaton. `None` for paths of a fully probabilistic automaton.
    pub choice: Option<usize>,
    pub next: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path {
    pub start: usize,
    pub steps: Vec<Step>,
}

impl Path {
    pub fn new(start: usize) -> Self {
        Self { start, steps: Vec::new() }
    }

    pub fn first(&self) -> usize {
        self.start
    }

    pub fn last(&self) -> usize {
        self.steps.last().map_or(self.start, |s| s.next)
    }

    /// Number of actions on the path.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn trace(&self) -> Vec<ActionLabel> {
        self.steps.iter().map(|s| s.label.clone()).collect()
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.start).chain(self.steps.iter().map(|s| s.next))
    }

    pub fn push(&mut self, label: ActionLabel, choice: Option<usize>, next: usize) {
        self.steps.push(Step { label, choice, next });
    }

    pub fn extended(&self, label: ActionLabel, choice: Option<usize>, next: usize) -> Self {
        let mut p = self.clone();
        p.push(label, choice, next);
        p
    }

    /// Prefix order: same start and our steps are a prefix of `other`'s.
    pub fn is_prefix_of(&self, other: &Path) -> bool {
        self.start == other.start
            && self.steps.len() <= other.steps.len()
            && self.steps[..] == other.steps[..self.steps.len()]
    }

    /// Concatenates a path that starts where this one ends.
    pub fn concat(&self, suffix: &Path) -> Option<Path> {
        if suffix.start != self.last() {
            return None;
        }
        let mut p = self.clone();
        p.steps.extend(suffix.steps.iter().cloned());
        Some(p)
    }

    /// The prefix with the first `n` steps.
    pub fn prefix(&self, n: usize) -> Path {
        Path { start: self.start, steps: self.steps[..n.min(self.steps.len())].to_vec() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_path() -> impl Strategy<Value = Path> {
        (0usize..3, prop::collection::vec((0usize..3, 0usize..4), 0..8)).prop_map(|(start, raw)| {
            let mut p = Path::new(start);
            for (l, n) in raw {
                p.push(ActionLabel::external(["a", "b", "c"][l]), None, n);
            }
            p
        })
    }

    #[test]
    fn empty_path_has_empty_trace() {
        let p = Path::new(0);
        assert!(p.trace().is_empty());
        assert_eq!(p.last(), 0);
    }

    #[test]
    fn trace_of_hidden_choice_path() {
        let mut p = Path::new(0);
        p.push(ActionLabel::tau(), Some(0), 1);
        p.push(ActionLabel::external("a1"), Some(0), 3);
        assert_eq!(p.trace(), vec![ActionLabel::tau(), ActionLabel::external("a1")]);
    }

    proptest! {
        #[test]
        fn trace_length_is_path_length(p in arb_path()) {
            prop_assert_eq!(p.trace().len(), p.len());
        }

        #[test]
        fn prefixes_are_prefixes(p in arb_path(), k in 0usize..10) {
            let q = p.prefix(k);
            prop_assert!(q.is_prefix_of(&p));
            prop_assert!(p.is_prefix_of(&p));
            if q.len() < p.len() {
                prop_assert!(!p.is_prefix_of(&q));
            }
        }

        #[test]
        fn trace_of_concat(p in arb_path(), k in 0usize..10) {
            let k = k.min(p.len());
            let head = p.prefix(k);
            let tail = Path { start: head.last(), steps: p.steps[k..].to_vec() };
            let joined = head.concat(&tail).unwrap();
            let mut expected = head.trace();
            expected.extend(tail.trace());
            prop_assert_eq!(joined.trace(), expected);
            prop_assert_eq!(joined, p);
        }
    }
}
