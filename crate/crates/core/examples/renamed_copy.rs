//! A nondeterministic choice between an anonymous system and a copy with
//! renamed announcements stays anonymous per scheduler. Comparing
//! observations across schedulers reports a difference anyway.

use probanon::anonymity::{bp_cross_check, check_pa, Strategy};
use probanon::models::renamed_copy_choice;
use probanon::sched::{enumerate_admissible, Guard, Horizon, ObservationMap, SchedContext};

fn main() {
    let (m, spec) = renamed_copy_choice(3);
    println!("{} states, observing {} labels", m.num_states(), spec.observable.len());

    let obs = ObservationMap::collapse(spec.observable.clone());
    let horizon = 32;
    let v = check_pa(&m, &spec, &obs, &Strategy::Enumerate { horizon }, Guard::default()).unwrap();
    println!("per scheduler: {} ({})", v.status, v.coverage);

    let ctx = SchedContext::new(&m, obs);
    let schedulers: Vec<_> = enumerate_admissible(&ctx, horizon, Guard::default()).map(Result::unwrap).collect();
    let cross = bp_cross_check(&ctx, &spec, &schedulers, Horizon::Bounded(horizon)).unwrap();
    println!("across schedulers: {}", cross.status);
    if let Some(w) = cross.witness {
        println!("  {w}");
    }
}
