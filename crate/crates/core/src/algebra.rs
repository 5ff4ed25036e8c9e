//! Composition operators on probabilistic automata.
//!
//! [`compose`] builds the full product state space. For systems with many
//! components the product is far larger than its reachable part, so
//! [`Composite`] explores a composition expression on the fly and yields
//! exactly `reachable(expr)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::automaton::{ProbAutomaton, Transition};
use crate::dist::Distribution;
use crate::label::ActionLabel;

/// Partial commutative communication function on labels. Keys are stored as
/// sorted pairs, so lookup is symmetric. Associativity is not checked.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommFunction {
    table: BTreeMap<(ActionLabel, ActionLabel), ActionLabel>,
}

impl CommFunction {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: ActionLabel, b: ActionLabel, result: ActionLabel) -> &mut Self {
        self.table.insert(Self::key(a, b), result);
        self
    }

    /// Hand-shake on the given channels: `c? · c! = tau[c]`.
    pub fn handshake<'a>(channels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut gamma = Self::new();
        for c in channels {
            gamma.insert(ActionLabel::input(c), ActionLabel::output(c), ActionLabel::marker(c));
        }
        gamma
    }

    /// Hand-shake on every channel that appears with both polarities in
    /// `alphabet`.
    pub fn handshake_for(alphabet: &BTreeSet<ActionLabel>) -> Self {
        let channels: Vec<&str> = alphabet
            .iter()
            .filter(|l| l.kind() == crate::label::LabelKind::Input)
            .filter(|l| alphabet.contains(&ActionLabel::output(l.name())))
            .map(|l| l.name())
            .collect();
        Self::handshake(channels)
    }

    pub fn apply(&self, a: &ActionLabel, b: &ActionLabel) -> Option<&ActionLabel> {
        self.table.get(&Self::key(a.clone(), b.clone()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ActionLabel, &ActionLabel, &ActionLabel)> {
        self.table.iter().map(|((a, b), r)| (a, b, r))
    }

    fn key(a: ActionLabel, b: ActionLabel) -> (ActionLabel, ActionLabel) {
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }
}

/// `s1 ∥ s2` with tuple names flattened.
pub fn pair_name(left: &str, right: &str) -> String {
    let strip = |s: &str| -> String {
        if s.starts_with('(') && s.ends_with(')') {
            s[1..s.len() - 1].to_string()
        } else {
            s.to_string()
        }
    };
    format!("({},{})", strip(left), strip(right))
}

/// Parallel composition over the full product `S1 × S2`. State `(s1, s2)`
/// gets id `s1 * |S2| + s2`. Moves are synchronous joint moves where the
/// communication function is defined, then asynchronous moves of either
/// side.
pub fn compose(a1: &ProbAutomaton, a2: &ProbAutomaton, gamma: &CommFunction) -> ProbAutomaton {
    let n2 = a2.num_states();
    let id = |s1: usize, s2: usize| s1 * n2 + s2;
    let mut names = Vec::with_capacity(a1.num_states() * n2);
    let mut transitions = Vec::with_capacity(a1.num_states() * n2);
    for s1 in 0..a1.num_states() {
        for s2 in 0..n2 {
            names.push(pair_name(a1.name(s1), a2.name(s2)));
            let mut ts: Vec<Transition> = Vec::new();
            for t1 in a1.transitions(s1) {
                for t2 in a2.transitions(s2) {
                    if let Some(label) = gamma.apply(&t1.label, &t2.label) {
                        let target = t1.target.product(&t2.target, |&x, &y| id(x, y));
                        push_unique(&mut ts, Transition { label: label.clone(), target });
                    }
                }
            }
            for t1 in a1.transitions(s1) {
                push_unique(&mut ts, Transition { label: t1.label.clone(), target: t1.target.map(|&x| id(x, s2)) });
            }
            for t2 in a2.transitions(s2) {
                push_unique(&mut ts, Transition { label: t2.label.clone(), target: t2.target.map(|&y| id(s1, y)) });
            }
            transitions.push(ts);
        }
    }
    let mut actions: BTreeSet<ActionLabel> = a1.actions().union(a2.actions()).cloned().collect();
    actions.extend(gamma.entries().map(|(_, _, r)| r.clone()));
    ProbAutomaton::from_parts(names, transitions, id(a1.initial(), a2.initial()), actions)
}

fn push_unique(ts: &mut Vec<Transition>, t: Transition) {
    if !ts.contains(&t) {
        ts.push(t);
    }
}

/// Left-nested n-ary composition.
pub fn compose_all(parts: &[ProbAutomaton], gamma: &CommFunction) -> Option<ProbAutomaton> {
    let (first, rest) = parts.split_first()?;
    Some(rest.iter().fold(first.clone(), |acc, p| compose(&acc, p, gamma)))
}

/// Removes every transition whose label is in `labels`.
pub fn restrict(a: &ProbAutomaton, labels: &BTreeSet<ActionLabel>) -> ProbAutomaton {
    let transitions = a
        .all_transitions()
        .iter()
        .map(|ts| ts.iter().filter(|t| !labels.contains(&t.label)).cloned().collect())
        .collect();
    let actions = a.actions().difference(labels).cloned().collect();
    ProbAutomaton::from_parts(a.names().to_vec(), transitions, a.initial(), []).with_actions(actions)
}

/// The marker a label becomes when hidden.
pub fn hidden(label: &ActionLabel) -> ActionLabel {
    if label.is_internal() {
        label.clone()
    } else {
        ActionLabel::marker(label.base())
    }
}

/// Renames each label in `labels` to the internal marker `tau[base]`.
pub fn hide(a: &ProbAutomaton, labels: &BTreeSet<ActionLabel>) -> ProbAutomaton {
    a.relabel(|l| if labels.contains(l) { hidden(l) } else { l.clone() })
}

/// Drops states not reachable from the initial state, renumbering the rest
/// in breadth-first order.
pub fn reachable(a: &ProbAutomaton) -> ProbAutomaton {
    let order = a.reachable_order();
    let mut index = vec![usize::MAX; a.num_states()];
    for (i, &s) in order.iter().enumerate() {
        index[s] = i;
    }
    let names = order.iter().map(|&s| a.name(s).to_string()).collect();
    let transitions = order
        .iter()
        .map(|&s| {
            a.transitions(s)
                .iter()
                .map(|t| Transition { label: t.label.clone(), target: t.target.map(|&x| index[x]) })
                .collect()
        })
        .collect();
    ProbAutomaton::from_parts(names, transitions, 0, []).with_actions(a.actions().clone())
}

/// A composition expression over component automata.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Leaf(usize),
    Par(Box<Expr>, Box<Expr>),
    Restrict(Box<Expr>, BTreeSet<ActionLabel>),
    Hide(Box<Expr>, BTreeSet<ActionLabel>),
}

impl Expr {
    pub fn par(items: impl IntoIterator<Item = Expr>) -> Expr {
        let mut it = items.into_iter();
        let first = it.next().expect("at least one operand");
        it.fold(first, |acc, e| Expr::Par(Box::new(acc), Box::new(e)))
    }

    /// Leaves in left-to-right order; each occurrence is one tuple slot.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Leaf(i) => out.push(*i),
            Expr::Par(l, r) => {
                l.collect_leaves(out);
                r.collect_leaves(out);
            }
            Expr::Restrict(e, _) | Expr::Hide(e, _) => e.collect_leaves(out),
        }
    }
}

type Tuple = Vec<u32>;

/// Expression tree annotated with tuple slot ranges.
enum Node {
    Leaf { component: usize, slot: usize },
    Par { left: Box<Node>, right: Box<Node>, mid: usize, hi: usize },
    Restrict(Box<Node>, BTreeSet<ActionLabel>),
    Hide(Box<Node>, BTreeSet<ActionLabel>),
}

fn annotate(e: &Expr, next_slot: &mut usize) -> Node {
    match e {
        Expr::Leaf(c) => {
            let slot = *next_slot;
            *next_slot += 1;
            Node::Leaf { component: *c, slot }
        }
        Expr::Par(l, r) => {
            let left = annotate(l, next_slot);
            let mid = *next_slot;
            let right = annotate(r, next_slot);
            Node::Par { left: Box::new(left), right: Box::new(right), mid, hi: *next_slot }
        }
        Expr::Restrict(e, set) => Node::Restrict(Box::new(annotate(e, next_slot)), set.clone()),
        Expr::Hide(e, set) => Node::Hide(Box::new(annotate(e, next_slot)), set.clone()),
    }
}

/// The reachable part of a composition expression, with the component
/// state tuple of every composite state.
#[derive(Clone, Debug)]
pub struct Composite {
    pub automaton: ProbAutomaton,
    /// Component index for each tuple slot.
    pub leaves: Vec<usize>,
    pub tuples: Vec<Vec<usize>>,
}

impl Composite {
    /// Explores `expr` from the tuple of initial states.
    pub fn explore(components: &[ProbAutomaton], expr: &Expr, gamma: &CommFunction) -> Composite {
        let mut slots = 0;
        let root = annotate(expr, &mut slots);
        let leaves = expr.leaves();
        let init: Tuple = leaves.iter().map(|&c| components[c].initial() as u32).collect();
        let mut index: HashMap<Tuple, usize> = HashMap::from([(init.clone(), 0)]);
        let mut tuples = vec![init];
        let mut transitions: Vec<Vec<Transition>> = Vec::new();
        let mut i = 0;
        while i < tuples.len() {
            let moves = node_moves(&root, components, gamma, &tuples[i]);
            let mut ts: Vec<Transition> = Vec::with_capacity(moves.len());
            for (label, dist) in moves {
                let target = dist.map(|t| {
                    let len = index.len();
                    *index.entry(t.clone()).or_insert_with(|| {
                        tuples.push(t.clone());
                        len
                    })
                });
                push_unique(&mut ts, Transition { label, target });
            }
            transitions.push(ts);
            i += 1;
        }
        let names = tuples
            .iter()
            .map(|t| {
                let parts: Vec<&str> =
                    t.iter().zip(&leaves).map(|(&s, &c)| components[c].name(s as usize)).collect();
                if parts.len() == 1 {
                    parts[0].to_string()
                } else {
                    format!("({})", parts.join(","))
                }
            })
            .collect();
        let actions = node_actions(&root, components, gamma);
        let automaton = ProbAutomaton::from_parts(names, transitions, 0, []).with_actions(actions);
        let tuples = tuples.into_iter().map(|t| t.into_iter().map(|s| s as usize).collect()).collect();
        Composite { automaton, leaves, tuples }
    }

    pub fn state_of(&self, tuple: &[usize]) -> Option<usize> {
        self.tuples.iter().position(|t| t == tuple)
    }
}

fn node_moves(
    node: &Node,
    components: &[ProbAutomaton],
    gamma: &CommFunction,
    state: &Tuple,
) -> Vec<(ActionLabel, Distribution<Tuple>)> {
    match node {
        Node::Leaf { component, slot } => components[*component]
            .transitions(state[*slot] as usize)
            .iter()
            .map(|t| {
                let d = t.target.map(|&x| {
                    let mut s = state.clone();
                    s[*slot] = x as u32;
                    s
                });
                (t.label.clone(), d)
            })
            .collect(),
        Node::Par { left, right, mid, hi } => {
            let lm = node_moves(left, components, gamma, state);
            let rm = node_moves(right, components, gamma, state);
            let mut out = Vec::new();
            for (b, db) in &lm {
                for (c, dc) in &rm {
                    if let Some(a) = gamma.apply(b, c) {
                        let joint = db.product(dc, |x, y| {
                            let mut s = x.clone();
                            s[*mid..*hi].copy_from_slice(&y[*mid..*hi]);
                            s
                        });
                        out.push((a.clone(), joint));
                    }
                }
            }
            out.extend(lm);
            out.extend(rm);
            out
        }
        Node::Restrict(inner, set) => {
            node_moves(inner, components, gamma, state).into_iter().filter(|(l, _)| !set.contains(l)).collect()
        }
        Node::Hide(inner, set) => node_moves(inner, components, gamma, state)
            .into_iter()
            .map(|(l, d)| if set.contains(&l) { (hidden(&l), d) } else { (l, d) })
            .collect(),
    }
}

fn node_actions(node: &Node, components: &[ProbAutomaton], gamma: &CommFunction) -> BTreeSet<ActionLabel> {
    match node {
        Node::Leaf { component, .. } => components[*component].actions().clone(),
        Node::Par { left, right, .. } => {
            let mut a = node_actions(left, components, gamma);
            a.extend(node_actions(right, components, gamma));
            a.extend(gamma.entries().map(|(_, _, r)| r.clone()));
            a
        }
        Node::Restrict(inner, set) => node_actions(inner, components, gamma).difference(set).cloned().collect(),
        Node::Hide(inner, set) => node_actions(inner, components, gamma)
            .into_iter()
            .map(|l| if set.contains(&l) { hidden(&l) } else { l })
            .collect(),
    }
}

/// Evaluates an expression eagerly with the full-product operators.
pub fn evaluate(components: &[ProbAutomaton], expr: &Expr, gamma: &CommFunction) -> ProbAutomaton {
    match expr {
        Expr::Leaf(c) => components[*c].clone(),
        Expr::Par(l, r) => compose(&evaluate(components, l, gamma), &evaluate(components, r, gamma), gamma),
        Expr::Restrict(e, set) => restrict(&evaluate(components, e, gamma), set),
        Expr::Hide(e, set) => hide(&evaluate(components, e, gamma), set),
    }
}
