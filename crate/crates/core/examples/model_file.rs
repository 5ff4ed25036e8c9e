//! Reads a `.pam` model, builds its system, prints it back and renders the
//! composed automaton as DOT.

use probanon::dsl::{parse_model, print_model, render_dot};

fn main() {
    let text = include_str!("../models/race.pam");
    let bundle = parse_model(text).unwrap_or_else(|e| panic!("race.pam: {e}"));
    let e = bundle.elaborate().expect("well-formed");
    println!("components: {}", e.component_names.join(", "));
    println!("composite: {} states", e.automaton().num_states());
    if let Some(spec) = &e.spec {
        println!("users: {:?}", spec.users);
    }

    let printed = print_model(&bundle);
    assert_eq!(parse_model(&printed).unwrap(), bundle);
    println!("\nround trip ok; printed form:\n{printed}");

    match parse_model("format 1\nautomaton A { init s; s -x-> { t: 0.5, u: 1/2 }; }") {
        Ok(_) => println!("unexpected success"),
        Err(e) => println!("decimal rejected: {e}"),
    }

    println!("{}", render_dot(e.automaton()));
}
