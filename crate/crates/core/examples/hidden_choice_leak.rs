//! A scheduler that sees the hidden choice can reveal it through a later,
//! unrelated choice. Admissible schedulers cannot.

use std::collections::BTreeMap;

use probanon::anonymity::{check_fpa, check_pa, Strategy};
use probanon::dist::SubDistribution;
use probanon::label::ActionLabel;
use probanon::measure::{cond_prob, event_prob, EventPredicate};
use probanon::models::{hidden_choice, two_user_spec};
use probanon::path::Path;
use probanon::rational::format_fraction;
use probanon::sched::{unfold, Guard, Horizon, ObservationMap, SchedContext, Scheduler};

fn main() {
    let m = hidden_choice();
    let spec = two_user_spec();
    let x = ActionLabel::external;

    // Emit x1 after a1 and x2 after a2.
    let mid = m.state_id("mid").unwrap();
    let root = Path::new(m.initial());
    let mut table = BTreeMap::from([(root.clone(), SubDistribution::point(0))]);
    for (side, user, pick) in [("l", "a1", 0), ("r", "a2", 1)] {
        let p = root.extended(ActionLabel::tau(), Some(0), m.state_id(side).unwrap());
        table.insert(p.clone(), SubDistribution::point(0));
        table.insert(p.extended(x(user), Some(0), mid), SubDistribution::point(pick));
    }
    let leaking = Scheduler::Unrestricted(table);

    let ctx = SchedContext::new(&m, ObservationMap::strict(spec.observable.clone()));
    let run = unfold(&ctx, &leaking, Horizon::Unbounded).unwrap();
    let a1 = EventPredicate::occurs(x("a1"));
    let x1 = EventPredicate::occurs(x("x1"));
    println!("P[a1]      = {}", format_fraction(&event_prob(&run.fpa, &a1).unwrap().value));
    println!("P[a1 | x1] = {}", format_fraction(&cond_prob(&run.fpa, &a1, &x1).unwrap()));
    let v = check_fpa(&run.fpa, &spec).unwrap();
    println!("leaking scheduler: {}  ({})", v.status, v.witness.unwrap());

    for obs in [ObservationMap::collapse(spec.observable.clone()), ObservationMap::strict(spec.observable.clone())] {
        let v = check_pa(&m, &spec, &obs, &Strategy::Enumerate { horizon: 3 }, Guard::default()).unwrap();
        println!("\n{} mode: {} over {} schedulers", obs.mode, v.status, v.checked);
        if let Some(w) = v.witness {
            println!("{w}\n{}", w.scheduler.as_deref().unwrap_or_default());
        }
    }
}
