//! Partition refinement on a small automaton, and the bisimilarity classes
//! that admissible schedulers are keyed on.

use probanon::automaton::AutomatonBuilder;
use probanon::bisim::{bisimilarity, is_bisimulation, refinement_sequence};
use probanon::dist::Distribution;
use probanon::label::ActionLabel;
use probanon::models::{hidden_choice, two_user_spec};
use probanon::sched::{ObservationMap, SchedContext};

fn main() {
    // Two coins: one fair, one that lands on a state with no way out.
    let x = ActionLabel::external;
    let mut b = AutomatonBuilder::new();
    b.initial("s");
    b.step("s", x("go"), "fair").step("s", x("go"), "odd");
    let half = |a: &str, c: &str| Distribution::uniform([a.to_string(), c.to_string()]).unwrap();
    b.transition("fair", x("flip"), half("h", "t"));
    b.transition("odd", x("flip"), half("h2", "dead"));
    b.step("h", x("win"), "end").step("t", x("win"), "end").step("h2", x("win"), "end");
    let a = b.build();

    for (round, p) in refinement_sequence(&a).iter().enumerate() {
        let blocks: Vec<Vec<&str>> = p.blocks().iter().map(|bl| bl.iter().map(|&s| a.name(s)).collect()).collect();
        println!("round {round}: {blocks:?}");
    }
    let p = bisimilarity(&a);
    println!("stable and a bisimulation: {}", is_bisimulation(&a, &p));

    let m = hidden_choice();
    let spec = two_user_spec();
    for obs in [ObservationMap::collapse(spec.observable.clone()), ObservationMap::strict(spec.observable.clone())] {
        let ctx = SchedContext::new(&m, obs);
        let classes: Vec<Vec<&str>> =
            ctx.partition.blocks().iter().map(|bl| bl.iter().map(|&s| m.name(s)).collect()).collect();
        println!("\nM, {} mode: {classes:?}", ctx.obs.mode);
        for (c, choices) in ctx.choices.iter().enumerate() {
            for (i, ch) in choices.iter().enumerate() {
                println!("  class {c} choice {i}: {ch}");
            }
        }
    }
}
