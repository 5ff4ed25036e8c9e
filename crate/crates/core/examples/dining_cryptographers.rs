//! Chaum's table for three cryptographers: the probability of each
//! announcement vector given each payer, under one concrete scheduler and
//! as exact bounds over every scheduler.

use probanon::dc::{DiningCryptographers, Master};
use probanon::label::ActionLabel;
use probanon::measure::{cond_prob, event_bounds, EventPredicate};
use probanon::rational::format_fraction;
use probanon::sched::{unfold, Horizon, ObservationMap, SchedContext, Scheduler};

fn vector_event(bits: &[bool]) -> EventPredicate {
    let parts = bits
        .iter()
        .enumerate()
        .map(|(i, &d)| EventPredicate::occurs(ActionLabel::output(&format!("{}{}", if d { 'd' } else { 'a' }, i + 1))))
        .collect();
    EventPredicate::And(parts)
}

fn main() {
    let n = 3;
    let dc = DiningCryptographers::new(n, Master::uniform(n));
    let a = dc.automaton();
    println!("{} reachable states, depth {}", a.num_states(), dc.depth());

    let mut order = vec![ActionLabel::tau()];
    for i in 1..=n {
        order.push(ActionLabel::output(&format!("a{i}")));
        order.push(ActionLabel::output(&format!("d{i}")));
    }
    let ctx = SchedContext::new(a, ObservationMap::collapse(dc.observable()));
    let run = unfold(&ctx, &Scheduler::priority(a, &order), Horizon::Unbounded).expect("acyclic");

    let vectors: Vec<Vec<bool>> = (0..1u8 << n).map(|m| (0..n).map(|i| m >> i & 1 == 1).collect()).collect();
    let odd: Vec<&Vec<bool>> = vectors.iter().filter(|v| v.iter().filter(|&&d| d).count() % 2 == 1).collect();

    println!("\nP[vector | payer i] under announcement order 1, 2, 3:");
    for v in &odd {
        let label: String = v.iter().map(|&d| if d { 'd' } else { 'a' }).collect();
        let row: Vec<String> = (1..=n)
            .map(|i| {
                let p = cond_prob(&run.fpa, &vector_event(v), &EventPredicate::occurs(DiningCryptographers::marker(i)));
                format_fraction(&p.expect("payer has mass"))
            })
            .collect();
        println!("  {label}: {}", row.join("  "));
    }

    println!("\nBounds of P[vector and payer i] over all schedulers:");
    for v in &odd {
        let label: String = v.iter().map(|&d| if d { 'd' } else { 'a' }).collect();
        for i in 1..=n {
            let e = vector_event(v).and(EventPredicate::occurs(DiningCryptographers::marker(i)));
            let (lo, hi) = event_bounds(a, &e).expect("acyclic");
            print!("  {label}/{i}: [{}, {}]", format_fraction(&lo), format_fraction(&hi));
        }
        println!();
    }
}
