//! Chaum's Dining Cryptographers as a composition of probabilistic automata.
//!
//! Users are numbered `1..=n`. Branch `k` of the master makes cryptographer
//! `k` pay; branch `0` makes nobody pay. Coin `i` is shared by cryptographers
//! `i` and `i - 1` (cyclically), so cryptographer `i` reads coins `i` and
//! `i + 1`, and announces `d_i!` (disagree) when the parity of its payment
//! bit and the two coins is odd, `a_i!` (agree) otherwise.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::anonymity::AnonymitySpec;
use crate::dsl::{AutomatonDef, ModelBundle, Pos, SchedulerDef, SpecDef, SymmetryDef, SystemDef, SystemExpr};
use crate::algebra::{CommFunction, Composite, Expr};
use crate::automaton::{AutomatonBuilder, ProbAutomaton, Transition};
use crate::dist::Distribution;
use crate::label::ActionLabel;
use crate::rational::{ratio, Rational};

/// How the master picks the payer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Master {
    /// A nondeterministic choice among the `n + 1` branches.
    Nondeterministic,
    /// A probabilistic choice with the given weights, branch `0` first.
    Prior(Vec<Rational>),
}

impl Master {
    pub fn uniform(n: usize) -> Self {
        Master::Prior(vec![ratio(1, n as i64 + 1); n + 1])
    }
}

/// The generated model: components, composition and anonymity data.
#[derive(Clone, Debug)]
pub struct DiningCryptographers {
    pub n: usize,
    /// Master, then coins `1..=n`, then cryptographers `1..=n`.
    pub components: Vec<ProbAutomaton>,
    pub component_names: Vec<String>,
    pub expr: Expr,
    pub gamma: CommFunction,
    pub composite: Composite,
}

fn prev(i: usize, n: usize) -> usize {
    if i == 1 {
        n
    } else {
        i - 1
    }
}

fn next(i: usize, n: usize) -> usize {
    i % n + 1
}

/// Channel names: `p1`, `n1`, `h2_1`, `t2_1`, ...
fn coin_channel(heads: bool, coin: usize, crypt: usize) -> String {
    format!("{}{coin}_{crypt}", if heads { 'h' } else { 't' })
}

pub fn master(n: usize) -> ProbAutomaton {
    let mut b = AutomatonBuilder::new();
    b.initial("idle");
    for branch in 0..=n {
        let mut from = "idle".to_string();
        for crypt in 1..=n {
            let chan = if crypt == branch { format!("p{crypt}") } else { format!("n{crypt}") };
            let to = if crypt == n { "done".to_string() } else { format!("b{branch}_{crypt}") };
            b.step(&from, ActionLabel::output(&chan), &to);
            from = to;
        }
    }
    b.build()
}

pub fn coin(i: usize, n: usize) -> ProbAutomaton {
    let mut b = AutomatonBuilder::new();
    b.initial("flip");
    let fair = Distribution::uniform(["h".to_string(), "t".to_string()]).expect("two outcomes");
    b.transition("flip", ActionLabel::tau(), fair);
    for (side, heads) in [("h", true), ("t", false)] {
        let sent = format!("{side}s");
        b.step(side, ActionLabel::output(&coin_channel(heads, i, i)), &sent);
        b.step(&sent, ActionLabel::output(&coin_channel(heads, i, prev(i, n))), "done");
    }
    b.build()
}

/// States `e0/e1`, `f0/f1`, `g0/g1` carry the running parity after the
/// master message, the own coin, and the neighbour's coin.
pub fn crypt(i: usize, n: usize) -> ProbAutomaton {
    let mut b = AutomatonBuilder::new();
    b.initial("start");
    b.step("start", ActionLabel::input(&format!("n{i}")), "e0");
    b.step("start", ActionLabel::input(&format!("p{i}")), "e1");
    for (stage, coin, to_stage) in [("e", i, "f"), ("f", next(i, n), "g")] {
        for p in 0..2 {
            for (heads, flip) in [(true, 0), (false, 1)] {
                let chan = coin_channel(heads, coin, i);
                b.step(&format!("{stage}{p}"), ActionLabel::input(&chan), &format!("{to_stage}{}", p ^ flip));
            }
        }
    }
    b.step("g0", ActionLabel::output(&format!("a{i}")), "done");
    b.step("g1", ActionLabel::output(&format!("d{i}")), "done");
    b.build()
}

/// Replaces the transitions of the initial state by a `tau` step to one
/// fresh state per original transition, chosen with `weights`. Each fresh
/// state performs just its original transition.
pub fn with_prior(a: &ProbAutomaton, weights: &[Rational]) -> Option<ProbAutomaton> {
    let init = a.initial();
    let k = a.transitions(init).len();
    if weights.len() != k {
        return None;
    }
    let mut names = a.names().to_vec();
    let mut transitions: Vec<Vec<Transition>> = a.all_transitions().to_vec();
    let taken: BTreeSet<String> = names.iter().cloned().collect();
    let fresh = |base: String| {
        let mut name = base;
        while taken.contains(&name) {
            name.push('_');
        }
        name
    };
    let first = names.len();
    for (j, t) in a.transitions(init).iter().enumerate() {
        names.push(fresh(format!("{}_{j}", a.name(init))));
        transitions.push(vec![t.clone()]);
    }
    let target = Distribution::new((0..k).map(|j| (first + j, weights[j].clone()))).ok()?;
    transitions[init] = vec![Transition { label: ActionLabel::tau(), target }];
    Some(ProbAutomaton::from_parts(names, transitions, init, a.actions().iter().cloned()))
}

impl DiningCryptographers {
    pub fn new(n: usize, master_kind: Master) -> Self {
        assert!(n >= 3, "the protocol needs at least three cryptographers");
        let m = master(n);
        let m = match &master_kind {
            Master::Nondeterministic => m,
            Master::Prior(w) => with_prior(&m, w).expect("one weight per master branch"),
        };
        let mut components = vec![m];
        let mut component_names = vec!["Master".to_string()];
        for i in 1..=n {
            components.push(coin(i, n));
            component_names.push(format!("Coin{i}"));
        }
        for i in 1..=n {
            components.push(crypt(i, n));
            component_names.push(format!("Crypt{i}"));
        }
        let channels = Self::channels(n);
        let gamma = CommFunction::handshake(channels.iter().map(String::as_str));
        let halves: BTreeSet<ActionLabel> =
            channels.iter().flat_map(|c| [ActionLabel::input(c), ActionLabel::output(c)]).collect();
        let expr = Expr::Restrict(Box::new(Expr::par((0..components.len()).map(Expr::Leaf))), halves);
        let composite = Composite::explore(&components, &expr, &gamma);
        Self { n, components, component_names, expr, gamma, composite }
    }

    pub fn channels(n: usize) -> Vec<String> {
        let mut out = Vec::new();
        for i in 1..=n {
            out.push(format!("p{i}"));
            out.push(format!("n{i}"));
        }
        for i in 1..=n {
            for crypt in [i, prev(i, n)] {
                out.push(coin_channel(true, i, crypt));
                out.push(coin_channel(false, i, crypt));
            }
        }
        out
    }

    pub fn automaton(&self) -> &ProbAutomaton {
        &self.composite.automaton
    }

    pub fn users(&self) -> Vec<usize> {
        (1..=self.n).collect()
    }

    /// `tau[p_i]`: the master told cryptographer `i` to pay.
    pub fn marker(i: usize) -> ActionLabel {
        ActionLabel::marker(&format!("p{i}"))
    }

    pub fn observable(&self) -> BTreeSet<ActionLabel> {
        (1..=self.n)
            .flat_map(|i| [ActionLabel::output(&format!("a{i}")), ActionLabel::output(&format!("d{i}"))])
            .collect()
    }

    /// Users `1..=n`, `A_i` = "the master told `i` to pay", observing the
    /// announcements.
    pub fn spec(&self) -> AnonymitySpec {
        AnonymitySpec::with_markers(self.users().into_iter().map(|i| (i.to_string(), Self::marker(i))), self.observable())
    }

    /// Number of steps of every complete path.
    pub fn depth(&self) -> usize {
        // n master messages, n flips, 2n coin messages, n announcements,
        // plus the prior step when present.
        let prior = usize::from(self.components[0].transitions(self.components[0].initial()).len() == 1);
        5 * self.n + prior
    }

    /// The model as a `.pam` bundle: components, `sync` over every channel,
    /// the spec, an announcement-order scheduler `order123` (internal steps
    /// first, then `a_i!`/`d_i!` by increasing `i`), and one symmetry block
    /// per pair of users with the product maps of [`Self::component_swap`].
    pub fn bundle(&self) -> ModelBundle {
        let automata: Vec<AutomatonDef> = self
            .components
            .iter()
            .zip(&self.component_names)
            .map(|(a, name)| AutomatonDef::from_automaton(name, a))
            .collect();
        let leaves = self.component_names.iter().map(|n| SystemExpr::Name(n.clone(), Pos::default())).collect();
        let system = SystemDef {
            name: format!("DC{}", self.n),
            expr: SystemExpr::Sync(Box::new(SystemExpr::Par(leaves)), Self::channels(self.n).into_iter().collect()),
        };
        let users: Vec<String> = self.users().iter().map(ToString::to_string).collect();
        let spec = SpecDef {
            markers: self.users().into_iter().map(|i| (i.to_string(), Self::marker(i), Pos::default())).collect(),
            users,
            observe: self.observable(),
            pos: Pos::default(),
        };
        let mut order = vec![ActionLabel::tau()];
        for i in 1..=self.n {
            order.push(ActionLabel::output(&format!("a{i}")));
            order.push(ActionLabel::output(&format!("d{i}")));
        }
        let mut symmetries = Vec::new();
        for i in 1..=self.n {
            for j in i + 1..=self.n {
                let maps = self
                    .component_swap(i, j, false)
                    .iter()
                    .enumerate()
                    .filter_map(|(c, m)| {
                        let a = &self.components[c];
                        let pairs: Vec<(String, String)> = m
                            .iter()
                            .filter(|(s, t)| s != t)
                            .map(|(&s, &t)| (a.name(s).to_string(), a.name(t).to_string()))
                            .collect();
                        (!pairs.is_empty()).then(|| (self.component_names[c].clone(), pairs))
                    })
                    .collect();
                symmetries.push(SymmetryDef { users: (i.to_string(), j.to_string()), maps, pos: Pos::default() });
            }
        }
        ModelBundle {
            automata,
            system: Some(system),
            spec: Some(spec),
            schedulers: vec![("order123".into(), SchedulerDef::Priority(order))],
            symmetries,
        }
    }

    /// Per-component maps in the style of a product endomorphism exchanging
    /// payers `i < j`: the master swaps branches `i` and `j`, coins
    /// `i+1..=j` swap heads and tails, and cryptographers are fixed. With
    /// `flip_parity`, each cryptographer also swaps its parity states where
    /// the exchange changes its running parity on the payers' branches.
    ///
    /// Neither variant lifts to a bijection of the composite: coins may flip
    /// before the master chooses, and on the branch where nobody pays the
    /// coin flip changes two announcements.
    pub fn component_swap(&self, i: usize, j: usize, flip_parity: bool) -> Vec<BTreeMap<usize, usize>> {
        let (i, j) = (i.min(j), i.max(j));
        let n = self.n;
        let flipped = |c: usize| i < c && c <= j;
        let payer = |k: usize| usize::from(flip_parity && (k == i || k == j));
        let mut maps = Vec::new();
        let m = &self.components[0];
        let mm = (0..m.num_states())
            .map(|s| (s, swap_branch(m.name(s), i, j).and_then(|t| m.state_id(&t)).unwrap_or(s)))
            .collect();
        maps.push(mm);
        for c in 1..=n {
            let a = &self.components[c];
            let map = (0..a.num_states())
                .map(|s| {
                    let t = match (flipped(c), a.name(s)) {
                        (true, "h") => "t",
                        (true, "t") => "h",
                        (true, "hs") => "ts",
                        (true, "ts") => "hs",
                        (_, other) => other,
                    };
                    (s, a.state_id(t).expect("coin state"))
                })
                .collect();
            maps.push(map);
        }
        for k in 1..=n {
            let a = &self.components[n + k];
            let f = |b: bool| usize::from(flip_parity && b);
            let flips = [
                ('e', payer(k)),
                ('f', payer(k) ^ f(flipped(k))),
                ('g', payer(k) ^ f(flipped(k)) ^ f(flipped(next(k, n)))),
            ];
            let map = (0..a.num_states())
                .map(|s| {
                    let name = a.name(s);
                    let mut t = name.to_string();
                    for (stage, flip) in flips {
                        if let Some(p) = name.strip_prefix(stage).and_then(|p| p.parse::<usize>().ok()) {
                            t = format!("{stage}{}", p ^ flip);
                        }
                    }
                    (s, a.state_id(&t).expect("crypt state"))
                })
                .collect();
            maps.push(map);
        }
        maps
    }
}

fn swap_branch(name: &str, i: usize, j: usize) -> Option<String> {
    if let Some(rest) = name.strip_prefix('b') {
        let (branch, stage) = rest.split_once('_')?;
        let b: usize = branch.parse().ok()?;
        let b2 = if b == i { j } else if b == j { i } else { b };
        return Some(format!("b{b2}_{stage}"));
    }
    if let Some(k) = name.strip_prefix("idle_").and_then(|k| k.parse::<usize>().ok()) {
        let k2 = if k == i { j } else if k == j { i } else { k };
        return Some(format!("idle_{k2}"));
    }
    None
}

/// Applies per-component maps slot by slot. `None` if some image tuple is
/// not a state of the composite.
pub fn lift_component_maps(composite: &Composite, maps: &[BTreeMap<usize, usize>]) -> Option<Vec<usize>> {
    let index: HashMap<&[usize], usize> =
        composite.tuples.iter().enumerate().map(|(s, t)| (t.as_slice(), s)).collect();
    composite
        .tuples
        .iter()
        .map(|t| {
            let image: Vec<usize> = t
                .iter()
                .zip(&composite.leaves)
                .map(|(&s, &c)| maps.get(c).and_then(|m| m.get(&s)).copied().unwrap_or(s))
                .collect();
            index.get(image.as_slice()).copied()
        })
        .collect()
}
