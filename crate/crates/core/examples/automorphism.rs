//! Proving anonymity by a symmetry of the automaton, and what happens when
//! the candidate map is not one.

use std::collections::BTreeMap;

use probanon::anonymity::{check_pa, prove_by_automorphism, Strategy};
use probanon::dc::{lift_component_maps, DiningCryptographers, Master};
use probanon::models::{hidden_choice, two_user_spec};
use probanon::sched::{Guard, ObservationMap};

fn main() {
    let m = hidden_choice();
    let spec = two_user_spec();
    let swap: Vec<usize> = (0..m.num_states())
        .map(|s| match m.name(s) {
            "l" => m.state_id("r").unwrap(),
            "r" => m.state_id("l").unwrap(),
            _ => s,
        })
        .collect();
    let maps = BTreeMap::from([((0, 1), swap)]);
    let proved = prove_by_automorphism(&m, &spec, &maps);
    println!("M with l <-> r: {} ({})", proved.status, proved.coverage);
    let obs = ObservationMap::collapse(spec.observable.clone());
    let checked = check_pa(&m, &spec, &obs, &Strategy::Enumerate { horizon: 3 }, Guard::default()).unwrap();
    println!("exhaustive admissible check agrees: {}", checked.status);

    let dc = DiningCryptographers::new(3, Master::Nondeterministic);
    let lifted = lift_component_maps(&dc.composite, &dc.component_swap(1, 2, false));
    println!("\nDC, exchange payers 1 and 2 componentwise: {}", if lifted.is_some() { "lifts" } else { "does not lift" });
    let identity = (0..dc.automaton().num_states()).collect();
    let v = prove_by_automorphism(dc.automaton(), &dc.spec(), &BTreeMap::from([((0, 1), identity)]));
    println!("DC with the identity map: {} ({})", v.status, v.coverage);
}
