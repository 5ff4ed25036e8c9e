//! Small models used throughout the examples and tests.

use crate::algebra::{CommFunction, Composite, Expr};
use crate::anonymity::AnonymitySpec;
use crate::automaton::{AutomatonBuilder, ProbAutomaton, Transition};
use crate::dc::{DiningCryptographers, Master};
use crate::dist::Distribution;
use crate::label::{ActionLabel, LabelKind};
use crate::sched::{unfold, Horizon, ObservationMap, SchedContext, Scheduler};

fn x(name: &str) -> ActionLabel {
    ActionLabel::external(name)
}

fn fair(a: &str, b: &str) -> Distribution<String> {
    Distribution::uniform([a.to_string(), b.to_string()]).expect("two outcomes")
}

/// A hidden fair choice between users 1 and 2 (`a1`, `a2`), then a
/// nondeterministic choice between the observable `x1` and `x2`.
pub fn hidden_choice() -> ProbAutomaton {
    let mut b = AutomatonBuilder::new();
    b.initial("root");
    b.transition("root", ActionLabel::tau(), fair("l", "r"));
    b.step("l", x("a1"), "mid").step("r", x("a2"), "mid");
    b.step("mid", x("x1"), "end").step("mid", x("x2"), "end");
    b.build()
}

/// Users 1 and 2 with events `a1` and `a2`, observing `x1` and `x2`.
pub fn two_user_spec() -> AnonymitySpec {
    AnonymitySpec::with_markers([("1".into(), x("a1")), ("2".into(), x("a2"))], [x("x1"), x("x2")])
}

/// The three components of the race: a chooser that makes the hidden
/// choice and then receives on `c` twice, and two senders that each send
/// on `c` and then emit `x1` or `x2`.
pub fn race_components() -> Vec<ProbAutomaton> {
    let mut chooser = AutomatonBuilder::new();
    chooser.initial("root");
    chooser.transition("root", ActionLabel::tau(), fair("l", "r"));
    chooser.step("l", x("a1"), "m").step("r", x("a2"), "m");
    chooser.step("m", ActionLabel::input("c"), "m2").step("m2", ActionLabel::input("c"), "end");
    let sender = |out: &str| {
        let mut b = AutomatonBuilder::new();
        b.initial("s");
        b.step("s", ActionLabel::output("c"), "w").step("w", x(out), "e");
        b.build()
    };
    vec![chooser.build(), sender("x1"), sender("x2")]
}

/// Chooser, senders, handshake on `c` with the halves restricted.
pub fn race() -> Composite {
    let parts = race_components();
    let halves = [ActionLabel::input("c"), ActionLabel::output("c")].into();
    let expr = Expr::Restrict(Box::new(Expr::par((0..parts.len()).map(Expr::Leaf))), halves);
    Composite::explore(&parts, &expr, &CommFunction::handshake(["c"]))
}

/// A root that chooses between `p` and `q` by two `tau` steps.
pub fn choice(p: &ProbAutomaton, q: &ProbAutomaton) -> ProbAutomaton {
    let both = p.disjoint_union(q);
    let n = both.num_states();
    let mut names = both.names().to_vec();
    names.push("choose".into());
    let mut transitions = both.all_transitions().to_vec();
    transitions.push(
        [p.initial(), p.num_states() + q.initial()]
            .into_iter()
            .map(|s| Transition { label: ActionLabel::tau(), target: Distribution::point(s) })
            .collect(),
    );
    ProbAutomaton::from_parts(names, transitions, n, both.actions().iter().cloned())
}

/// `a_i!` becomes `e_i!` (equal) and `d_i!` becomes `u_i!` (unequal).
pub fn rename_announcements(label: &ActionLabel) -> ActionLabel {
    if label.kind() != LabelKind::Output {
        return label.clone();
    }
    let name = label.name();
    let renamed = match (name.chars().next(), &name[1.min(name.len())..]) {
        (Some('a'), rest) if rest.chars().all(|c| c.is_ascii_digit()) && !rest.is_empty() => format!("e{rest}"),
        (Some('d'), rest) if rest.chars().all(|c| c.is_ascii_digit()) && !rest.is_empty() => format!("u{rest}"),
        _ => return label.clone(),
    };
    ActionLabel::output(&renamed)
}

/// `P`: the dining cryptographers with a uniform payer prior, run under the
/// announcement-order scheduler, as a tree-shaped automaton. `P'` is `P`
/// with announcements renamed. The result chooses between them; the spec
/// observes both alphabets.
pub fn renamed_copy_choice(n: usize) -> (ProbAutomaton, AnonymitySpec) {
    let dc = DiningCryptographers::new(n, Master::uniform(n));
    let a = dc.automaton();
    let mut order = vec![ActionLabel::tau()];
    for i in 1..=n {
        order.push(ActionLabel::output(&format!("a{i}")));
        order.push(ActionLabel::output(&format!("d{i}")));
    }
    let ctx = SchedContext::new(a, ObservationMap::strict([]));
    let run = unfold(&ctx, &Scheduler::priority(a, &order), Horizon::Unbounded).expect("acyclic");
    let p = run.fpa.to_pa().expect("one label per step, no halting");
    let p2 = p.relabel(rename_announcements);
    let spec = dc.spec();
    let observe: Vec<ActionLabel> =
        spec.observable.iter().flat_map(|l| [l.clone(), rename_announcements(l)]).collect();
    let users = spec.users.iter().zip(&spec.events).map(|(u, e)| (u.clone(), e.clone()));
    (choice(&p, &p2), AnonymitySpec::new(users, observe))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn race_shape() {
        let r = race();
        let a = &r.automaton;
        assert!(a.is_acyclic());
        assert!(a.actions().contains(&ActionLabel::marker("c")));
        // Every complete path emits both x1 and x2.
        let mut ends = 0;
        for s in 0..a.num_states() {
            if a.is_terminating(s) {
                ends += 1;
            }
        }
        assert_eq!(ends, 1);
    }

    #[test]
    fn renaming() {
        assert_eq!(rename_announcements(&ActionLabel::output("a2")), ActionLabel::output("e2"));
        assert_eq!(rename_announcements(&ActionLabel::output("d13")), ActionLabel::output("u13"));
        assert_eq!(rename_announcements(&ActionLabel::output("done")), ActionLabel::output("done"));
        assert_eq!(rename_announcements(&ActionLabel::input("a1")), ActionLabel::input("a1"));
    }

    #[test]
    fn renamed_copy_has_two_branches() {
        let (m, spec) = renamed_copy_choice(3);
        assert_eq!(m.transitions(m.initial()).len(), 2);
        assert_eq!(spec.observable.len(), 12);
        assert!(m.is_acyclic());
    }
}
