//! Searching the admissible schedulers of the dining cryptographers: the
//! exact closure check, random sampling, and the synthesized scheduler.

use probanon::anonymity::{check_pa, check_scheduler, Strategy};
use probanon::dc::{DiningCryptographers, Master};
use probanon::sched::{
    is_admissible, sample_admissible, synthesize_admissible, unfold, Guard, Horizon, ObservationMap, SchedContext,
};

fn main() {
    let dc = DiningCryptographers::new(3, Master::uniform(3));
    let a = dc.automaton();
    let spec = dc.spec();
    let horizon = dc.depth();
    let obs = ObservationMap::collapse(spec.observable.clone());
    let ctx = SchedContext::new(a, obs.clone());
    println!("{} states in {} bisimilarity classes", a.num_states(), ctx.partition.num_blocks());

    let xi = synthesize_admissible(a, &spec.observable);
    let v = check_scheduler(&ctx, &spec, &xi, Horizon::Unbounded).unwrap();
    println!("synthesized (admissible: {}): {}", is_admissible(&ctx, &xi), v.status);

    let mut leaks = Vec::new();
    for seed in 0..100 {
        let xi = sample_admissible(&ctx, horizon, seed);
        let u = unfold(&ctx, &xi, Horizon::Bounded(horizon)).unwrap();
        assert!(!u.truncated);
        if check_scheduler(&ctx, &spec, &xi, Horizon::Bounded(horizon)).unwrap().status.is_anonymous() {
            continue;
        }
        leaks.push(seed);
    }
    println!("sampled: {} of 100 seeds leak the order of announcements: {leaks:?}", leaks.len());

    let v = check_pa(a, &spec, &obs, &Strategy::Closure { horizon }, Guard::default()).unwrap();
    println!("closure: {} after {} prefixes", v.status, v.checked);
    if let Some(w) = v.witness {
        println!("  {w}");
    }
}
