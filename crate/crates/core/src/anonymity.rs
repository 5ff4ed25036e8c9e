//! Anonymity systems and their checks.
//!
//! An anonymity system pairs an automaton with users, one event `A_i` per
//! user, and a set of observable actions. It is anonymous under a scheduler
//! when, given that some `A_i` happened, the observed trace is independent
//! of which one.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::automaton::ProbAutomaton;
use crate::dist::Distribution;
use crate::fpa::FullyProbAutomaton;
use crate::label::{format_trace, ActionLabel};
use crate::measure::{cond_prob, ser_fraction, EventPredicate, MeasureError, PathMeasure};
use crate::path::Path;
use crate::rational::Rational;
use crate::sched::{
    enumerate_admissible, enumerate_unrestricted, sample_admissible, unfold, Guard, Horizon, ObservationMap,
    SchedContext, SchedError, Scheduler, SchedulerKey,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnonError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error("events of users {0} and {1} overlap on a complete path")]
    OverlappingEvents(String, String),
    #[error("{0}")]
    Unsupported(String),
}

/// `(M, I, {A_i}, Act_O)` without the automaton.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnonymitySpec {
    pub users: Vec<String>,
    pub events: Vec<EventPredicate>,
    pub observable: BTreeSet<ActionLabel>,
}

impl AnonymitySpec {
    pub fn new(
        users: impl IntoIterator<Item = (String, EventPredicate)>,
        observable: impl IntoIterator<Item = ActionLabel>,
    ) -> Self {
        let (users, events) = users.into_iter().unzip();
        Self { users, events, observable: observable.into_iter().collect() }
    }

    /// One marker label per user: `A_i` is "the marker of `i` occurs".
    pub fn with_markers(
        markers: impl IntoIterator<Item = (String, ActionLabel)>,
        observable: impl IntoIterator<Item = ActionLabel>,
    ) -> Self {
        Self::new(markers.into_iter().map(|(u, l)| (u, EventPredicate::occurs(l))), observable)
    }

    /// `A`, the union of the user events.
    pub fn any_user(&self) -> EventPredicate {
        EventPredicate::Or(self.events.clone())
    }

    pub fn user_index(&self, name: &str) -> Option<usize> {
        self.users.iter().position(|u| u == name)
    }

    /// The user whose event holds on `trace`, if any.
    pub fn user_of(&self, trace: &[ActionLabel]) -> Result<Option<usize>, AnonError> {
        let mut found: Option<usize> = None;
        for (i, e) in self.events.iter().enumerate() {
            if e.eval(trace) {
                if let Some(j) = found {
                    return Err(AnonError::OverlappingEvents(self.users[j].clone(), self.users[i].clone()));
                }
                found = Some(i);
            }
        }
        Ok(found)
    }
}

pub fn otrace(path: &Path, observable: &BTreeSet<ActionLabel>) -> Vec<ActionLabel> {
    crate::measure::project(&path.trace(), observable)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "ANONYMOUS-PROVED")]
    AnonymousProved,
    #[serde(rename = "ANONYMOUS-ON-CHECKED-CLASS")]
    AnonymousOnCheckedClass,
    #[serde(rename = "VIOLATION")]
    Violation,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

impl Status {
    pub fn is_anonymous(self) -> bool {
        matches!(self, Status::AnonymousProved | Status::AnonymousOnCheckedClass)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::AnonymousProved => "ANONYMOUS-PROVED",
            Status::AnonymousOnCheckedClass => "ANONYMOUS-ON-CHECKED-CLASS",
            Status::Violation => "VIOLATION",
            Status::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Which equality failed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessForm {
    /// `left = P[o ∧ A_i | A]`, `right = P[o | A] · P[A_i | A]`.
    Independence,
    /// `left = P[o | A_i]`, `right = P[o | A_j]`.
    Pairwise,
    /// As `Pairwise`, with `right` taken under a second scheduler.
    CrossScheduler { other_scheduler: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub form: WitnessForm,
    /// Text table of the scheduler, when one was involved.
    pub scheduler: Option<String>,
    pub user: String,
    pub other_user: Option<String>,
    #[serde(serialize_with = "ser_trace")]
    pub observation: Vec<ActionLabel>,
    #[serde(serialize_with = "ser_fraction")]
    pub left: Rational,
    #[serde(serialize_with = "ser_fraction")]
    pub right: Rational,
}

fn ser_trace<S: serde::Serializer>(t: &[ActionLabel], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_trace(t))
}

impl Witness {
    /// Recomputes both sides with `cond_prob` on `fpa`.
    pub fn replay(&self, fpa: &FullyProbAutomaton, spec: &AnonymitySpec) -> Result<(Rational, Rational), AnonError> {
        let o = EventPredicate::otrace(self.observation.clone(), &spec.observable);
        let ev = |name: &str| {
            spec.user_index(name)
                .map(|i| spec.events[i].clone())
                .ok_or_else(|| AnonError::Unsupported(format!("unknown user {name}")))
        };
        let ai = ev(&self.user)?;
        match &self.form {
            WitnessForm::Independence => {
                let a = spec.any_user();
                let left = cond_prob(fpa, &o.clone().and(ai.clone()), &a)?;
                let right = cond_prob(fpa, &o, &a)? * cond_prob(fpa, &ai, &a)?;
                Ok((left, right))
            }
            WitnessForm::Pairwise | WitnessForm::CrossScheduler { .. } => {
                let aj = ev(self.other_user.as_deref().unwrap_or(&self.user))?;
                Ok((cond_prob(fpa, &o, &ai)?, cond_prob(fpa, &o, &aj)?))
            }
        }
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = format_trace(&self.observation);
        let (l, r) = (crate::rational::format_fraction(&self.left), crate::rational::format_fraction(&self.right));
        match (&self.form, &self.other_user) {
            (WitnessForm::Independence, _) => {
                write!(f, "P[o ∧ A_{u} | A] = {l} but P[o | A]·P[A_{u} | A] = {r} for o = [{o}]", u = self.user)
            }
            (_, Some(j)) => write!(f, "P[o | A_{}] = {l} but P[o | A_{j}] = {r} for o = [{o}]", self.user),
            (_, None) => write!(f, "{l} != {r} for o = [{o}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub status: Status,
    pub witness: Option<Witness>,
    pub coverage: String,
    /// Schedulers (or scheduler prefixes) examined.
    pub checked: usize,
}

impl Verdict {
    fn new(status: Status, coverage: impl Into<String>, checked: usize) -> Self {
        Self { status, witness: None, coverage: coverage.into(), checked }
    }

    fn violation(witness: Witness, coverage: impl Into<String>, checked: usize) -> Self {
        Self { status: Status::Violation, witness: Some(witness), coverage: coverage.into(), checked }
    }
}

/// Joint masses of `(observation, user)` over complete paths.
struct Joint {
    mass: BTreeMap<(Vec<ActionLabel>, Option<usize>), Rational>,
    observations: BTreeSet<Vec<ActionLabel>>,
    per_user: Vec<Rational>,
}

impl Joint {
    fn new(fpa: &FullyProbAutomaton, spec: &AnonymitySpec) -> Result<Self, AnonError> {
        let pm = PathMeasure::new(fpa)?;
        let mut mass: BTreeMap<(Vec<ActionLabel>, Option<usize>), Rational> = BTreeMap::new();
        let mut per_user = vec![Rational::zero(); spec.users.len()];
        let mut observations = BTreeSet::new();
        for (p, m) in &pm.paths {
            let trace = p.trace();
            let user = spec.user_of(&trace)?;
            let o = crate::measure::project(&trace, &spec.observable);
            observations.insert(o.clone());
            if let Some(u) = user {
                per_user[u] += m;
            }
            *mass.entry((o, user)).or_insert_with(Rational::zero) += m;
        }
        Ok(Self { mass, observations, per_user })
    }

    fn get(&self, o: &[ActionLabel], user: usize) -> Rational {
        self.mass.get(&(o.to_vec(), Some(user))).cloned().unwrap_or_else(Rational::zero)
    }

    fn total(&self) -> Rational {
        self.per_user.iter().sum()
    }

    /// `P[o | A_u]`.
    fn conditional(&self, o: &[ActionLabel], user: usize) -> Rational {
        self.get(o, user) / &self.per_user[user]
    }

    fn positive_users(&self) -> Vec<usize> {
        (0..self.per_user.len()).filter(|&u| !self.per_user[u].is_zero()).collect()
    }
}

/// Independence form: `P[o ∧ A_i | A] = P[o | A] · P[A_i | A]` for every user
/// and realized observation.
pub fn check_fpa(fpa: &FullyProbAutomaton, spec: &AnonymitySpec) -> Result<Verdict, AnonError> {
    let joint = Joint::new(fpa, spec)?;
    let pa = joint.total();
    if pa.is_zero() {
        return Ok(Verdict::new(Status::AnonymousProved, "single automaton, vacuous: P[A] = 0", 1));
    }
    for (i, user) in spec.users.iter().enumerate() {
        let pi = &joint.per_user[i] / &pa;
        for o in &joint.observations {
            let po: Rational = (0..spec.users.len()).map(|u| joint.get(o, u)).sum::<Rational>() / &pa;
            let left = joint.get(o, i) / &pa;
            let right = po * &pi;
            if left != right {
                let w = Witness {
                    form: WitnessForm::Independence,
                    scheduler: None,
                    user: user.clone(),
                    other_user: None,
                    observation: o.clone(),
                    left,
                    right,
                };
                return Ok(Verdict::violation(w, "single automaton", 1));
            }
        }
    }
    Ok(Verdict::new(Status::AnonymousProved, "single automaton, exact", 1))
}

/// Pairwise form: `P[o | A_i] = P[o | A_j]` for users of positive mass.
pub fn check_fpa_bp(fpa: &FullyProbAutomaton, spec: &AnonymitySpec) -> Result<Verdict, AnonError> {
    let joint = Joint::new(fpa, spec)?;
    let users = joint.positive_users();
    if users.is_empty() {
        return Ok(Verdict::new(Status::AnonymousProved, "single automaton, vacuous: P[A] = 0", 1));
    }
    for (k, &i) in users.iter().enumerate() {
        for &j in &users[k + 1..] {
            for o in &joint.observations {
                let (left, right) = (joint.conditional(o, i), joint.conditional(o, j));
                if left != right {
                    let w = Witness {
                        form: WitnessForm::Pairwise,
                        scheduler: None,
                        user: spec.users[i].clone(),
                        other_user: Some(spec.users[j].clone()),
                        observation: o.clone(),
                        left,
                        right,
                    };
                    return Ok(Verdict::violation(w, "single automaton", 1));
                }
            }
        }
    }
    Ok(Verdict::new(Status::AnonymousProved, "single automaton, exact", 1))
}

/// `check_fpa` on the unfolding of `xi`, with the scheduler in the witness.
pub fn check_scheduler(
    ctx: &SchedContext,
    spec: &AnonymitySpec,
    xi: &Scheduler,
    horizon: Horizon,
) -> Result<Verdict, AnonError> {
    let u = unfold(ctx, xi, horizon)?;
    let mut v = check_fpa(&u.fpa, spec)?;
    if let Some(w) = v.witness.as_mut() {
        w.scheduler = Some(xi.to_text());
    }
    Ok(v)
}

/// How `check_pa` covers the admissible schedulers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Every deterministic non-halting admissible scheduler, one by one.
    Enumerate { horizon: usize },
    /// The same class, with scheduler prefixes closed early once every user
    /// is decided and the per-class masses are proportional across users.
    Closure { horizon: usize },
    /// Random admissible schedulers; can only falsify.
    Sample { count: usize, horizon: usize, seed: u64 },
    /// Automorphisms exchanging each pair of users, indexed by user positions.
    Automorphism(BTreeMap<(usize, usize), Vec<usize>>),
}

pub fn check_pa(
    a: &ProbAutomaton,
    spec: &AnonymitySpec,
    obs: &ObservationMap,
    strategy: &Strategy,
    guard: Guard,
) -> Result<Verdict, AnonError> {
    let ctx = SchedContext::new(a, obs.clone());
    match strategy {
        Strategy::Enumerate { horizon } => {
            let mut checked = 0;
            let mut vacuous = true;
            for xi in enumerate_admissible(&ctx, *horizon, guard) {
                let xi = xi?;
                let v = check_scheduler(&ctx, spec, &xi, Horizon::Bounded(*horizon))?;
                checked += 1;
                vacuous &= v.coverage.contains("vacuous");
                if v.status == Status::Violation {
                    let cov = format!("deterministic admissible ({} mode, horizon {horizon}), scheduler {checked}", obs.mode);
                    return Ok(Verdict { coverage: cov, checked, ..v });
                }
            }
            let note = if vacuous { ", vacuous: P[A] = 0 throughout" } else { "" };
            let cov = format!(
                "all {checked} deterministic non-halting admissible schedulers ({} mode, horizon {horizon}){note}",
                obs.mode
            );
            Ok(Verdict::new(Status::AnonymousOnCheckedClass, cov, checked))
        }
        Strategy::Closure { horizon } => verify_admissible(&ctx, spec, *horizon, guard),
        Strategy::Sample { count, horizon, seed } => {
            for k in 0..*count {
                let xi = sample_admissible(&ctx, *horizon, seed + k as u64);
                let v = check_scheduler(&ctx, spec, &xi, Horizon::Bounded(*horizon))?;
                if v.status == Status::Violation {
                    let cov = format!("sampled admissible scheduler {} (seed {})", k + 1, seed + k as u64);
                    return Ok(Verdict { coverage: cov, checked: k + 1, ..v });
                }
            }
            let cov = format!("{count} sampled admissible schedulers ({} mode, horizon {horizon}), no violation", obs.mode);
            Ok(Verdict::new(Status::Inconclusive, cov, *count))
        }
        Strategy::Automorphism(maps) => Ok(prove_by_automorphism(a, spec, maps)),
    }
}

/// Unrestricted deterministic schedulers whose unfolding violates
/// anonymity, in search order.
pub fn interfering<'a>(
    a: &'a ProbAutomaton,
    spec: &'a AnonymitySpec,
    horizon: usize,
    guard: Guard,
) -> impl Iterator<Item = Result<(Scheduler, Witness), AnonError>> + 'a {
    let ctx = SchedContext::new(a, ObservationMap::strict([]));
    enumerate_unrestricted(a, horizon, guard).filter_map(move |xi| {
        let run = || -> Result<Option<(Scheduler, Witness)>, AnonError> {
            let xi = xi?;
            let v = check_scheduler(&ctx, spec, &xi, Horizon::Bounded(horizon))?;
            Ok(v.witness.map(|w| (xi, w)))
        };
        run().transpose()
    })
}

/// The first interfering scheduler, or `None` when every deterministic
/// unrestricted scheduler up to `horizon` is anonymous.
pub fn find_interfering(
    a: &ProbAutomaton,
    spec: &AnonymitySpec,
    horizon: usize,
    guard: Guard,
) -> Result<Option<(Scheduler, Witness)>, AnonError> {
    interfering(a, spec, horizon, guard).next().transpose()
}

/// Compares conditional observation probabilities across every pair of
/// the given schedulers, including each with itself. Not a definition of
/// anonymity; it shows where a cross-scheduler reading disagrees with ours.
pub fn bp_cross_check(
    ctx: &SchedContext,
    spec: &AnonymitySpec,
    schedulers: &[Scheduler],
    horizon: Horizon,
) -> Result<Verdict, AnonError> {
    let mut runs = Vec::new();
    for xi in schedulers {
        runs.push(Joint::new(&unfold(ctx, xi, horizon)?.fpa, spec)?);
    }
    let observations: BTreeSet<&Vec<ActionLabel>> = runs.iter().flat_map(|r| &r.observations).collect();
    for (z, rz) in runs.iter().enumerate() {
        for (x, rx) in runs.iter().enumerate() {
            for &i in &rz.positive_users() {
                for &j in &rx.positive_users() {
                    for o in &observations {
                        let (left, right) = (rz.conditional(o, i), rx.conditional(o, j));
                        if left != right {
                            let w = Witness {
                                form: WitnessForm::CrossScheduler { other_scheduler: schedulers[x].to_text() },
                                scheduler: Some(schedulers[z].to_text()),
                                user: spec.users[i].clone(),
                                other_user: Some(spec.users[j].clone()),
                                observation: (*o).clone(),
                                left,
                                right,
                            };
                            return Ok(Verdict::violation(w, "pairs of schedulers", schedulers.len()));
                        }
                    }
                }
            }
        }
    }
    Ok(Verdict::new(Status::AnonymousOnCheckedClass, "all pairs of the given schedulers", schedulers.len()))
}

/// Whether `map` is a bijection fixing the initial state that maps the
/// transitions of every state onto those of its image, after renaming
/// every label outside `observable` to `tau`.
pub fn check_automorphism(a: &ProbAutomaton, map: &[usize], observable: &BTreeSet<ActionLabel>) -> bool {
    let n = a.num_states();
    if map.len() != n || map[a.initial()] != a.initial() || map.iter().any(|&t| t >= n) {
        return false;
    }
    if map.iter().collect::<BTreeSet<_>>().len() != n {
        return false;
    }
    let obs = ObservationMap::collapse(observable.iter().cloned());
    let moves = |s: usize, f: &dyn Fn(usize) -> usize| -> BTreeSet<(ActionLabel, Distribution<usize>)> {
        a.transitions(s).iter().map(|t| (obs.image(&t.label), t.target.map(|&u| f(u)))).collect()
    };
    (0..n).all(|s| moves(s, &|u| map[u]) == moves(map[s], &|u| u))
}

type Mem = BTreeSet<ActionLabel>;
type Node = (usize, Mem, Mem);

fn holds(e: &EventPredicate, mem: &Mem) -> bool {
    e.eval(&mem.iter().cloned().collect::<Vec<_>>())
}

/// Sufficient condition for anonymity: for every pair of users an
/// Act_O-automorphism that carries the complete paths of `A_i` onto those
/// of `A_j`. Never reports a violation.
pub fn prove_by_automorphism(
    a: &ProbAutomaton,
    spec: &AnonymitySpec,
    maps: &BTreeMap<(usize, usize), Vec<usize>>,
) -> Verdict {
    let inconclusive = |why: String| Verdict::new(Status::Inconclusive, why, maps.len());
    if !spec.events.iter().all(EventPredicate::is_occurrence_based) {
        return inconclusive("user events must be built from label occurrences".into());
    }
    let n_users = spec.users.len();
    for i in 0..n_users {
        for j in i + 1..n_users {
            let (map, from, to) = match (maps.get(&(i, j)), maps.get(&(j, i))) {
                (Some(m), _) => (m, i, j),
                (None, Some(m)) => (m, j, i),
                (None, None) => {
                    return inconclusive(format!("no map for users {} and {}", spec.users[i], spec.users[j]));
                }
            };
            if !check_automorphism(a, map, &spec.observable) {
                return inconclusive(format!(
                    "map for users {} and {} is not an automorphism up to unobservable labels",
                    spec.users[from], spec.users[to]
                ));
            }
            if let Err(why) = carries_event(a, spec, map, from, to) {
                return inconclusive(why);
            }
        }
    }
    Verdict::new(
        Status::AnonymousProved,
        "automorphisms for every pair of users; events matched on complete paths",
        maps.len(),
    )
}

/// Follows a path and each of its images in lock step, tracking which
/// event labels occurred on either side, and requires `A_from` on the path
/// to coincide with `A_to` on the image wherever the path can end.
fn carries_event(
    a: &ProbAutomaton,
    spec: &AnonymitySpec,
    map: &[usize],
    from: usize,
    to: usize,
) -> Result<(), String> {
    let obs = ObservationMap::collapse(spec.observable.iter().cloned());
    let relevant: Mem = spec.events.iter().flat_map(|e| e.labels()).collect();
    let note = |m: &Mem, l: &ActionLabel| {
        let mut m = m.clone();
        if relevant.contains(l) {
            m.insert(l.clone());
        }
        m
    };
    let start = (a.initial(), Mem::new(), Mem::new());
    let mut seen = BTreeSet::from([start.clone()]);
    let mut stack = vec![start];
    let mut edges: Vec<(Node, Node)> = Vec::new();
    while let Some(node) = stack.pop() {
        let (s, m1, m2) = &node;
        if a.is_terminating(*s) && holds(&spec.events[from], m1) != holds(&spec.events[to], m2) {
            return Err(format!(
                "map sends a complete path in A_{} to one not in A_{}",
                spec.users[from], spec.users[to]
            ));
        }
        let image = map[*s];
        for t in a.transitions(*s) {
            let target = t.target.map(|&u| map[u]);
            for t2 in a.transitions(image) {
                if obs.image(&t2.label) != obs.image(&t.label) || t2.target != target {
                    continue;
                }
                for &u in t.target.support() {
                    let next = (u, note(m1, &t.label), note(m2, &t2.label));
                    edges.push((node.clone(), next.clone()));
                    if seen.insert(next.clone()) {
                        stack.push(next);
                    }
                }
            }
        }
    }
    // Nodes on cycles lie on infinite paths; require agreement there too.
    let index: HashMap<&(usize, Mem, Mem), usize> = seen.iter().zip(0..).collect();
    let mut succ = vec![Vec::new(); seen.len()];
    for (x, y) in &edges {
        succ[index[x]].push(index[y]);
    }
    let nodes: Vec<&(usize, Mem, Mem)> = seen.iter().collect();
    for (k, on_cycle) in on_cycle(&succ).into_iter().enumerate() {
        let (_, m1, m2) = nodes[k];
        if on_cycle && holds(&spec.events[from], m1) != holds(&spec.events[to], m2) {
            return Err(format!("map disagrees on A_{} along a cycle", spec.users[from]));
        }
    }
    Ok(())
}

/// Marks nodes that lie on a cycle (Tarjan's algorithm, iterative).
fn on_cycle(succ: &[Vec<usize>]) -> Vec<bool> {
    let n = succ.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut result = vec![false; n];
    let mut counter = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work = vec![(root, 0usize)];
        while let Some(&mut (v, ref mut next)) = work.last_mut() {
            if *next == 0 && index[v] == usize::MAX {
                index[v] = counter;
                low[v] = counter;
                counter += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *next < succ[v].len() {
                let w = succ[v][*next];
                *next += 1;
                if index[w] == usize::MAX {
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut component = Vec::new();
                loop {
                    let w = stack.pop().expect("component on stack");
                    on_stack[w] = false;
                    component.push(w);
                    if w == v {
                        break;
                    }
                }
                let cyclic = component.len() > 1 || succ[v].contains(&v);
                for w in component {
                    result[w] = cyclic;
                }
            }
        }
    }
    result
}

/// Which users a state can still lead to, given the event labels seen.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Fate {
    Decided(Option<usize>),
    Open,
}

struct Closure<'c, 'a> {
    ctx: &'c SchedContext<'a>,
    spec: &'c AnonymitySpec,
    relevant: Mem,
    fate: HashMap<(usize, Mem), Fate>,
}

impl Closure<'_, '_> {
    fn fate(&mut self, s: usize, mem: &Mem) -> Result<Fate, AnonError> {
        if let Some(f) = self.fate.get(&(s, mem.clone())) {
            return Ok(f.clone());
        }
        let a = self.ctx.automaton;
        let f = if a.is_terminating(s) {
            let trace: Vec<ActionLabel> = mem.iter().cloned().collect();
            Fate::Decided(self.spec.user_of(&trace)?)
        } else {
            let mut seen: Option<Fate> = None;
            for t in a.transitions(s) {
                let mut m = mem.clone();
                if self.relevant.contains(&t.label) {
                    m.insert(t.label.clone());
                }
                for &u in t.target.support() {
                    let f = self.fate(u, &m)?;
                    seen = match seen {
                        None => Some(f),
                        Some(prev) if prev == f => Some(prev),
                        Some(_) => Some(Fate::Open),
                    };
                }
            }
            seen.expect("non-terminating")
        };
        self.fate.insert((s, mem.clone()), f.clone());
        Ok(f)
    }
}

type Belief = BTreeMap<(usize, Mem), Rational>;

#[derive(Clone)]
struct Prefix {
    table: BTreeMap<SchedulerKey, usize>,
    /// Histories of the current length, with mass on states.
    level: BTreeMap<Vec<ActionLabel>, Belief>,
    /// Mass that reached terminating states, by history.
    done: Vec<(Vec<ActionLabel>, Belief)>,
    depth: usize,
    fresh: bool,
}

/// Exact check over every deterministic non-halting admissible scheduler.
///
/// Scheduler prefixes are explored level by level of observed history. Under
/// an admissible scheduler, the mass each user has on a bisimilarity class
/// moves along the same choices with the same coefficients for every user.
/// So once every state with mass has a decided user and, for every history
/// and class, the mass of each user divided by that user's total is the same
/// across users, every completion of the prefix is anonymous and the prefix
/// is closed. Prefixes that never close are completed and checked exactly.
pub fn verify_admissible(
    ctx: &SchedContext,
    spec: &AnonymitySpec,
    horizon: usize,
    guard: Guard,
) -> Result<Verdict, AnonError> {
    let a = ctx.automaton;
    if !a.is_acyclic() {
        return Err(AnonError::Unsupported("closure needs an acyclic automaton".into()));
    }
    if !spec.events.iter().all(EventPredicate::is_occurrence_based) {
        return Err(AnonError::Unsupported("closure needs events built from label occurrences".into()));
    }
    let relevant: Mem = spec.events.iter().flat_map(|e| e.labels()).collect();
    let mut cl = Closure { ctx, spec, relevant: relevant.clone(), fate: HashMap::new() };
    let root = Prefix {
        table: BTreeMap::new(),
        level: BTreeMap::from([(Vec::new(), Belief::from([((a.initial(), Mem::new()), Rational::from_integer(1.into()))]))]),
        done: Vec::new(),
        depth: 0,
        fresh: true,
    };
    let mut stack = vec![root];
    let (mut closed, mut complete) = (0usize, 0usize);
    while let Some(mut p) = stack.pop() {
        if closed + complete >= guard.max_schedulers {
            return Err(SchedError::ExplosionGuard { bound: guard.max_schedulers, what: "scheduler prefixes" }.into());
        }
        loop {
            if p.fresh {
                p.fresh = false;
                if proportional(&mut cl, &p)? {
                    closed += 1;
                    break;
                }
                if p.level.is_empty() {
                    complete += 1;
                    let xi = Scheduler::Tabular(
                        p.table.iter().map(|(k, &c)| (k.clone(), crate::dist::SubDistribution::point(c))).collect(),
                    );
                    let v = check_scheduler(ctx, spec, &xi, Horizon::Bounded(horizon))?;
                    if v.status == Status::Violation {
                        let cov = format!("deterministic admissible ({} mode, horizon {horizon})", ctx.obs.mode);
                        return Ok(Verdict { coverage: cov, checked: closed + complete, ..v });
                    }
                    break;
                }
            }
            if let Some((key, n)) = undecided(ctx, &p, horizon) {
                for c in (1..n).rev() {
                    let mut alt = p.clone();
                    alt.table.insert(key.clone(), c);
                    stack.push(alt);
                }
                p.table.insert(key, 0);
                continue;
            }
            advance(ctx, &relevant, &mut p, horizon);
        }
    }
    let cov = format!(
        "every deterministic non-halting admissible scheduler ({} mode, horizon {horizon}): \
         {closed} prefixes closed by proportional class masses, {complete} complete tables checked exactly",
        ctx.obs.mode
    );
    Ok(Verdict::new(Status::AnonymousOnCheckedClass, cov, closed + complete))
}

fn undecided(ctx: &SchedContext, p: &Prefix, horizon: usize) -> Option<(SchedulerKey, usize)> {
    if p.depth >= horizon {
        return None;
    }
    for (h, belief) in &p.level {
        for (s, _) in belief.keys() {
            if ctx.automaton.is_terminating(*s) {
                continue;
            }
            let key = SchedulerKey { history: h.clone(), class: ctx.class_of(*s) };
            if !p.table.contains_key(&key) {
                let n = ctx.choices[key.class].len();
                return Some((key, n));
            }
        }
    }
    None
}

fn advance(ctx: &SchedContext, relevant: &Mem, p: &mut Prefix, horizon: usize) {
    let a = ctx.automaton;
    let mut next: BTreeMap<Vec<ActionLabel>, Belief> = BTreeMap::new();
    for (h, belief) in std::mem::take(&mut p.level) {
        let mut finished = Belief::new();
        for ((s, mem), m) in belief {
            if a.is_terminating(s) {
                finished.insert((s, mem), m);
                continue;
            }
            if p.depth >= horizon {
                continue;
            }
            let key = SchedulerKey { history: h.clone(), class: ctx.class_of(s) };
            let t = &a.transitions(s)[ctx.choice_map[s][p.table[&key]]];
            let mut hist = h.clone();
            hist.push(ctx.obs.image(&t.label));
            let mut mem2 = mem.clone();
            if relevant.contains(&t.label) {
                mem2.insert(t.label.clone());
            }
            let slot = next.entry(hist).or_default();
            for (&u, q) in t.target.iter() {
                *slot.entry((u, mem2.clone())).or_insert_with(Rational::zero) += &m * q;
            }
        }
        if !finished.is_empty() {
            p.done.push((h, finished));
        }
    }
    p.level = next;
    p.depth += 1;
    p.fresh = true;
}

fn proportional(cl: &mut Closure, p: &Prefix) -> Result<bool, AnonError> {
    let users = cl.spec.users.len();
    let mut table: BTreeMap<(bool, Vec<ActionLabel>, usize), Vec<Rational>> = BTreeMap::new();
    let mut totals = vec![Rational::zero(); users];
    let parts = p.level.iter().map(|(h, b)| (false, h, b)).chain(p.done.iter().map(|(h, b)| (true, h, b)));
    for (done, h, belief) in parts {
        for ((s, mem), m) in belief {
            let user = match cl.fate(*s, mem)? {
                Fate::Open => return Ok(false),
                Fate::Decided(u) => u,
            };
            let Some(u) = user else { continue };
            let row = table.entry((done, h.clone(), cl.ctx.class_of(*s))).or_insert_with(|| vec![Rational::zero(); users]);
            row[u] += m;
            totals[u] += m;
        }
    }
    let positive: Vec<usize> = (0..users).filter(|&u| !totals[u].is_zero()).collect();
    if positive.len() <= 1 {
        return Ok(true);
    }
    Ok(table.values().all(|row| {
        let first = &row[positive[0]] / &totals[positive[0]];
        positive[1..].iter().all(|&u| row[u].clone() / &totals[u] == first)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::AutomatonBuilder;
    use crate::sched::ObsMode;

    fn x(n: &str) -> ActionLabel {
        ActionLabel::external(n)
    }

    fn m() -> ProbAutomaton {
        let mut b = AutomatonBuilder::new();
        b.initial("root");
        let half = Distribution::uniform(["l".to_string(), "r".to_string()]).unwrap();
        b.transition("root", ActionLabel::tau(), half);
        b.step("l", x("a1"), "mid").step("r", x("a2"), "mid");
        b.step("mid", x("x1"), "end").step("mid", x("x2"), "end");
        b.build()
    }

    fn spec() -> AnonymitySpec {
        AnonymitySpec::with_markers([("1".into(), x("a1")), ("2".into(), x("a2"))], [x("x1"), x("x2")])
    }

    #[test]
    fn single_user_is_anonymous() {
        let a = m();
        let one = AnonymitySpec::with_markers([("1".into(), x("a1"))], [x("x1"), x("x2")]);
        let ctx = SchedContext::new(&a, ObservationMap::strict(one.observable.clone()));
        let xi = Scheduler::priority(&a, &[]);
        let v = check_scheduler(&ctx, &one, &xi, Horizon::Unbounded).unwrap();
        assert_eq!(v.status, Status::AnonymousProved);
    }

    #[test]
    fn collapse_enumeration_is_anonymous_strict_is_not() {
        let a = m();
        let s = spec();
        let strategy = Strategy::Enumerate { horizon: 3 };
        let collapse = ObservationMap::collapse(s.observable.clone());
        let v = check_pa(&a, &s, &collapse, &strategy, Guard::default()).unwrap();
        assert_eq!((v.status, v.checked), (Status::AnonymousOnCheckedClass, 2));
        let strict = ObservationMap::new(ObsMode::Strict, s.observable.clone());
        let v = check_pa(&a, &s, &strict, &strategy, Guard::default()).unwrap();
        assert_eq!(v.status, Status::Violation);
        assert!(v.witness.unwrap().scheduler.is_some());
    }

    #[test]
    fn closure_agrees_with_enumeration_on_m() {
        let a = m();
        let s = spec();
        for mode in [ObsMode::Collapse, ObsMode::Strict] {
            let obs = ObservationMap::new(mode, s.observable.clone());
            let e = check_pa(&a, &s, &obs, &Strategy::Enumerate { horizon: 3 }, Guard::default()).unwrap();
            let c = check_pa(&a, &s, &obs, &Strategy::Closure { horizon: 3 }, Guard::default()).unwrap();
            assert_eq!(e.status, c.status);
        }
    }

    #[test]
    fn interfering_scheduler_on_m() {
        let a = m();
        let (xi, w) = find_interfering(&a, &spec(), 3, Guard::default()).unwrap().unwrap();
        let ctx = SchedContext::new(&a, ObservationMap::strict([]));
        let u = unfold(&ctx, &xi, Horizon::Unbounded).unwrap();
        let (l, r) = w.replay(&u.fpa, &spec()).unwrap();
        assert_eq!((l, r), (w.left.clone(), w.right.clone()));
        assert_ne!(w.left, w.right);
    }

    #[test]
    fn fpa_forms_agree_on_leaking_unfolding() {
        let a = m();
        let ctx = SchedContext::new(&a, ObservationMap::strict([]));
        let (xi, _) = find_interfering(&a, &spec(), 3, Guard::default()).unwrap().unwrap();
        let u = unfold(&ctx, &xi, Horizon::Unbounded).unwrap();
        let v1 = check_fpa(&u.fpa, &spec()).unwrap();
        let v2 = check_fpa_bp(&u.fpa, &spec()).unwrap();
        assert_eq!(v1.status, Status::Violation);
        assert_eq!(v2.status, Status::Violation);
        let w = v2.witness.unwrap();
        assert_eq!(w.replay(&u.fpa, &spec()).unwrap(), (w.left.clone(), w.right.clone()));
    }

    /// root -tau-> {l, r}; l -a1-> lm -x-> end; r -a2-> rm -x-> end'.
    fn symmetric() -> (ProbAutomaton, Vec<usize>) {
        let mut b = AutomatonBuilder::new();
        b.initial("root");
        let half = Distribution::uniform(["l".to_string(), "r".to_string()]).unwrap();
        b.transition("root", ActionLabel::tau(), half);
        b.step("l", x("a1"), "lm").step("r", x("a2"), "rm");
        b.step("lm", x("x"), "le").step("rm", x("x"), "re");
        let a = b.build();
        let id = |n: &str| a.state_id(n).unwrap();
        let mut map: Vec<usize> = (0..a.num_states()).collect();
        for (p, q) in [("l", "r"), ("lm", "rm"), ("le", "re")] {
            map[id(p)] = id(q);
            map[id(q)] = id(p);
        }
        (a, map)
    }

    #[test]
    fn swap_proves_symmetric_toy() {
        let (a, map) = symmetric();
        let s = AnonymitySpec::with_markers([("1".into(), x("a1")), ("2".into(), x("a2"))], [x("x")]);
        assert!(check_automorphism(&a, &map, &s.observable));
        let identity: Vec<usize> = (0..a.num_states()).collect();
        assert!(check_automorphism(&a, &identity, &s.observable));
        let v = prove_by_automorphism(&a, &s, &BTreeMap::from([((0, 1), map)]));
        assert_eq!(v.status, Status::AnonymousProved);
        let v = prove_by_automorphism(&a, &s, &BTreeMap::new());
        assert_eq!(v.status, Status::Inconclusive);
        let v = prove_by_automorphism(&a, &s, &BTreeMap::from([((0, 1), identity)]));
        assert_eq!(v.status, Status::Inconclusive);
    }

    #[test]
    fn swapping_different_observables_fails() {
        let a = m();
        let mid = a.state_id("mid").unwrap();
        let end = a.state_id("end").unwrap();
        let mut map: Vec<usize> = (0..a.num_states()).collect();
        map.swap(mid, end);
        assert!(!check_automorphism(&a, &map, &[x("x1"), x("x2")].into()));
    }

    #[test]
    fn on_cycle_marks_loops() {
        let succ = vec![vec![1], vec![2], vec![1], vec![3]];
        assert_eq!(on_cycle(&succ), vec![false, true, true, true]);
    }

    #[test]
    fn vacuous_when_no_user_event_happens() {
        let a = m();
        let s = AnonymitySpec::with_markers([("1".into(), x("never"))], [x("x1")]);
        let ctx = SchedContext::new(&a, ObservationMap::strict([]));
        let v = check_scheduler(&ctx, &s, &Scheduler::priority(&a, &[]), Horizon::Unbounded).unwrap();
        assert_eq!(v.status, Status::AnonymousProved);
        assert!(v.coverage.contains("vacuous"));
    }
}
