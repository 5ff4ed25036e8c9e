//! Two senders race to emit `x1` and `x2` after a hidden choice. An
//! unrestricted scheduler orders them by the choice; search finds one.

use probanon::anonymity::interfering;
use probanon::label::{format_trace, ActionLabel};
use probanon::measure::{cond_prob, EventPredicate};
use probanon::models::{race, two_user_spec};
use probanon::rational::format_fraction;
use probanon::sched::{unfold, Guard, Horizon, ObservationMap, SchedContext};

fn main() {
    let composite = race();
    let a = &composite.automaton;
    let spec = two_user_spec();
    println!("race: {} states, {} transitions", a.num_states(), a.num_transitions());

    let x = ActionLabel::external;
    let order = |first: &str, second: &str| EventPredicate::otrace(vec![x(first), x(second)], &spec.observable);
    let ctx = SchedContext::new(a, ObservationMap::strict([]));

    for (k, found) in interfering(a, &spec, 6, Guard::default()).enumerate().take(3) {
        let (xi, w) = found.expect("within the guard");
        let run = unfold(&ctx, &xi, Horizon::Bounded(6)).unwrap();
        let p12 = cond_prob(&run.fpa, &order("x1", "x2"), &EventPredicate::occurs(x("a1"))).unwrap();
        let p21 = cond_prob(&run.fpa, &order("x2", "x1"), &EventPredicate::occurs(x("a2"))).unwrap();
        println!("\ninterfering scheduler {}: {w}", k + 1);
        println!("  P[x1 x2 | a1] = {}, P[x2 x1 | a2] = {}", format_fraction(&p12), format_fraction(&p21));
        println!("  observation {}", format_trace(&w.observation));
    }
}
