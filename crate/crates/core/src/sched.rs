//! Schedulers, the automaton-under-scheduler unfolding, and admissible
//! schedulers.
//!
//! A scheduler resolves the nondeterminism of a [`ProbAutomaton`] by choosing,
//! after each finite path, a sub-distribution over the outgoing transitions of
//! the last state. Admissible schedulers may only depend on what an observer
//! could know: the observed trace and the bisimilarity class of the current
//! state. They are represented as tables keyed by [`SchedulerKey`], whose rows
//! range over the *canonical choices* of the class, so that one row is
//! meaningful at every state of the class.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::automaton::ProbAutomaton;
use crate::bisim::{bisimilarity, Partition};
use crate::dist::SubDistribution;
use crate::fpa::{FpaStep, FullyProbAutomaton};
use crate::label::{format_trace, ActionLabel};
use crate::path::Path;
use crate::rational::{format_fraction, parse_fraction, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedError {
    #[error("automaton has a cycle; an explicit horizon is required")]
    CyclicNeedsHorizon,
    #[error("explosion guard: more than {bound} {what}")]
    ExplosionGuard { bound: usize, what: &'static str },
    #[error("scheduler row for {key} names choice {choice}, but the class has {available}")]
    BadChoice { key: String, choice: usize, available: usize },
    #[error("scheduler refers to state {0}, which does not exist")]
    UnknownState(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// How labels are seen when comparing histories.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObsMode {
    /// Every label outside the observable set is seen as `tau`.
    #[default]
    Collapse,
    /// Labels are compared as they are.
    Strict,
}

impl fmt::Display for ObsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObsMode::Collapse => "collapse",
            ObsMode::Strict => "strict",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationMap {
    pub mode: ObsMode,
    pub observable: BTreeSet<ActionLabel>,
}

impl ObservationMap {
    pub fn new(mode: ObsMode, observable: impl IntoIterator<Item = ActionLabel>) -> Self {
        Self { mode, observable: observable.into_iter().collect() }
    }

    pub fn collapse(observable: impl IntoIterator<Item = ActionLabel>) -> Self {
        Self::new(ObsMode::Collapse, observable)
    }

    pub fn strict(observable: impl IntoIterator<Item = ActionLabel>) -> Self {
        Self::new(ObsMode::Strict, observable)
    }

    pub fn image(&self, label: &ActionLabel) -> ActionLabel {
        match self.mode {
            ObsMode::Collapse if !self.observable.contains(label) => ActionLabel::tau(),
            _ => label.clone(),
        }
    }

    pub fn image_trace(&self, trace: &[ActionLabel]) -> Vec<ActionLabel> {
        trace.iter().map(|l| self.image(l)).collect()
    }

    /// The automaton with every label replaced by its image.
    pub fn image_automaton(&self, a: &ProbAutomaton) -> ProbAutomaton {
        a.relabel(|l| self.image(l))
    }
}

/// `(observed history, bisimilarity class of the last state)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SchedulerKey {
    pub history: Vec<ActionLabel>,
    pub class: usize,
}

impl fmt::Display for SchedulerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{} ; {}]", format_trace(&self.history), self.class)
    }
}

/// A transition up to lifted bisimilarity: observed label plus the mass the
/// target assigns to each class.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Choice {
    pub label: ActionLabel,
    pub masses: Vec<(usize, Rational)>,
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.masses.iter().map(|(b, m)| format!("{b}: {}", format_fraction(m))).collect();
        write!(f, "{} -> {{{}}}", self.label, parts.join(", "))
    }
}

/// A scheduler row lifted to choices: mass per [`Choice`]; the rest halts.
pub type LiftedRow = BTreeMap<Choice, Rational>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchedulerKind {
    TabularDeterministic,
    TabularRandomized,
    HistoryIndependent,
    Unrestricted,
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerKind::TabularDeterministic => "tabular-deterministic",
            SchedulerKind::TabularRandomized => "tabular-randomized",
            SchedulerKind::HistoryIndependent => "history-independent",
            SchedulerKind::Unrestricted => "unrestricted",
        })
    }
}

/// Unlisted keys, states and paths halt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Scheduler {
    /// Rows over the canonical choices of the key's class.
    Tabular(BTreeMap<SchedulerKey, SubDistribution<usize>>),
    /// One raw transition index per state, `None` to halt.
    HistoryIndependent(Vec<Option<usize>>),
    /// Rows over raw transition indices, keyed by the full path.
    Unrestricted(BTreeMap<Path, SubDistribution<usize>>),
}

impl Scheduler {
    pub fn always_halt() -> Self {
        Scheduler::Tabular(BTreeMap::new())
    }

    pub fn kind(&self) -> SchedulerKind {
        match self {
            Scheduler::Tabular(t) if t.values().all(|r| r.is_deterministic()) => SchedulerKind::TabularDeterministic,
            Scheduler::Tabular(_) => SchedulerKind::TabularRandomized,
            Scheduler::HistoryIndependent(_) => SchedulerKind::HistoryIndependent,
            Scheduler::Unrestricted(_) => SchedulerKind::Unrestricted,
        }
    }

    /// Picks, at every state, the transition whose label comes first in
    /// `order`. A plain `tau` in `order` stands for every internal label;
    /// unlisted labels come last, and ties go to the lower index.
    pub fn priority(a: &ProbAutomaton, order: &[ActionLabel]) -> Self {
        let rank = |l: &ActionLabel| {
            order
                .iter()
                .position(|o| o == l || (*o == ActionLabel::tau() && l.is_internal()))
                .unwrap_or(order.len())
        };
        let picks = (0..a.num_states())
            .map(|s| a.transitions(s).iter().enumerate().min_by_key(|(i, t)| (rank(&t.label), *i)).map(|(i, _)| i))
            .collect();
        Scheduler::HistoryIndependent(picks)
    }

    /// The row at path `path`, over raw transition indices of its last state.
    pub fn row(&self, ctx: &SchedContext, path: &Path) -> Result<SubDistribution<usize>, SchedError> {
        let last = path.last();
        match self {
            Scheduler::Tabular(table) => {
                let key = ctx.key(&path.trace(), last);
                let Some(row) = table.get(&key) else { return Ok(SubDistribution::halt()) };
                let map = &ctx.choice_map[last];
                if let Some(&bad) = row.support().find(|&&c| c >= map.len()) {
                    return Err(SchedError::BadChoice { key: key.to_string(), choice: bad, available: map.len() });
                }
                Ok(row.map(|&c| map[c]))
            }
            Scheduler::HistoryIndependent(picks) => match picks.get(last) {
                None => Err(SchedError::UnknownState(last)),
                Some(None) => Ok(SubDistribution::halt()),
                Some(Some(t)) if *t < ctx.automaton.transitions(last).len() => Ok(SubDistribution::point(*t)),
                Some(Some(t)) => Err(SchedError::BadChoice {
                    key: format!("state {last}"),
                    choice: *t,
                    available: ctx.automaton.transitions(last).len(),
                }),
            },
            Scheduler::Unrestricted(table) => Ok(table.get(path).cloned().unwrap_or_else(SubDistribution::halt)),
        }
    }

    /// Text table, one row per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("# {}\n", self.kind());
        match self {
            Scheduler::Tabular(table) => {
                for (k, row) in table {
                    out.push_str(&format!("{k} -> {}\n", format_row(row)));
                }
            }
            Scheduler::HistoryIndependent(picks) => {
                for (s, p) in picks.iter().enumerate() {
                    let row = p.map_or_else(SubDistribution::halt, SubDistribution::point);
                    out.push_str(&format!("state {s} -> {}\n", format_row(&row)));
                }
            }
            Scheduler::Unrestricted(table) => {
                for (p, row) in table {
                    let mut key = p.start.to_string();
                    for st in &p.steps {
                        key.push_str(&format!(" -{}#{}-> {}", st.label, st.choice.unwrap_or(0), st.next));
                    }
                    out.push_str(&format!("path {key} -> {}\n", format_row(row)));
                }
            }
        }
        out
    }

    /// Parses the output of [`Scheduler::to_text`] for tabular and
    /// history-independent schedulers.
    pub fn parse_text(text: &str) -> Result<Self, SchedError> {
        let mut table = BTreeMap::new();
        let mut picks: BTreeMap<usize, Option<usize>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| SchedError::Parse { line: i + 1, msg: msg.to_string() };
            let (lhs, rhs) = line.split_once("->").ok_or_else(|| err("expected `->`"))?;
            let row = parse_row(rhs.trim()).ok_or_else(|| err("bad row"))?;
            let lhs = lhs.trim();
            if let Some(state) = lhs.strip_prefix("state") {
                let s: usize = state.trim().parse().map_err(|_| err("bad state index"))?;
                let pick = if row.is_halt() { None } else { Some(*row.as_point().ok_or_else(|| err("row must be deterministic"))?) };
                picks.insert(s, pick);
            } else {
                let inner = lhs.strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or_else(|| err("expected `[history ; class]`"))?;
                let (hist, class) = inner.split_once(';').ok_or_else(|| err("expected `;`"))?;
                let history = hist
                    .split_whitespace()
                    .map(|w| ActionLabel::parse(w).ok_or_else(|| err("bad label")))
                    .collect::<Result<Vec<_>, _>>()?;
                let class = class.trim().parse().map_err(|_| err("bad class id"))?;
                table.insert(SchedulerKey { history, class }, row);
            }
        }
        match (table.is_empty(), picks.is_empty()) {
            (_, true) => Ok(Scheduler::Tabular(table)),
            (true, false) => {
                let n = picks.keys().next_back().map_or(0, |m| m + 1);
                Ok(Scheduler::HistoryIndependent((0..n).map(|s| picks.get(&s).copied().flatten()).collect()))
            }
            (false, false) => Err(SchedError::Parse { line: 0, msg: "mixed table kinds".into() }),
        }
    }
}

fn format_row(row: &SubDistribution<usize>) -> String {
    if row.is_halt() {
        return "HALT".into();
    }
    if let Some(c) = row.as_point() {
        return c.to_string();
    }
    let parts: Vec<String> = row.iter().map(|(c, m)| format!("{c}: {}", format_fraction(m))).collect();
    format!("{{{}}}", parts.join(", "))
}

fn parse_row(text: &str) -> Option<SubDistribution<usize>> {
    if text == "HALT" {
        return Some(SubDistribution::halt());
    }
    if let Ok(c) = text.parse::<usize>() {
        return Some(SubDistribution::point(c));
    }
    let inner = text.strip_prefix('{')?.strip_suffix('}')?;
    let mut entries = Vec::new();
    for part in inner.split(',').filter(|p| !p.trim().is_empty()) {
        let (c, m) = part.split_once(':')?;
        entries.push((c.trim().parse().ok()?, parse_fraction(m.trim())?));
    }
    let total: Rational = entries.iter().map(|(_, m)| m).sum();
    SubDistribution::new(entries, Rational::one() - total).ok()
}

/// Bisimilarity and canonical choices for one automaton and observation map.
#[derive(Clone, Debug)]
pub struct SchedContext<'a> {
    pub automaton: &'a ProbAutomaton,
    pub obs: ObservationMap,
    pub partition: Partition,
    /// Per class: the sorted distinct choices of its representative.
    pub choices: Vec<Vec<Choice>>,
    /// Per state: canonical choice index of its class to transition index.
    pub choice_map: Vec<Vec<usize>>,
}

impl<'a> SchedContext<'a> {
    /// Bisimilarity is taken on the image automaton, so in collapse mode
    /// states that differ only in unobservable labels are identified.
    pub fn new(automaton: &'a ProbAutomaton, obs: ObservationMap) -> Self {
        let partition = bisimilarity(&obs.image_automaton(automaton));
        let choice_of = |s: usize, i: usize| {
            let t = &automaton.transitions(s)[i];
            Choice { label: obs.image(&t.label), masses: partition.block_masses(&t.target) }
        };
        let choices: Vec<Vec<Choice>> = partition
            .blocks()
            .iter()
            .map(|block| {
                let rep = block[0];
                let set: BTreeSet<Choice> = (0..automaton.transitions(rep).len()).map(|i| choice_of(rep, i)).collect();
                set.into_iter().collect()
            })
            .collect();
        let choice_map = (0..automaton.num_states())
            .map(|s| {
                let canon = &choices[partition.block_of(s)];
                let own: Vec<Choice> = (0..automaton.transitions(s).len()).map(|i| choice_of(s, i)).collect();
                canon
                    .iter()
                    .map(|c| own.iter().position(|o| o == c).expect("bisimilar states offer the same choices"))
                    .collect()
            })
            .collect();
        Self { automaton, obs, partition, choices, choice_map }
    }

    pub fn class_of(&self, state: usize) -> usize {
        self.partition.block_of(state)
    }

    pub fn key(&self, trace: &[ActionLabel], state: usize) -> SchedulerKey {
        SchedulerKey { history: self.obs.image_trace(trace), class: self.class_of(state) }
    }

    pub fn choice(&self, state: usize, transition: usize) -> Choice {
        let t = &self.automaton.transitions(state)[transition];
        Choice { label: self.obs.image(&t.label), masses: self.partition.block_masses(&t.target) }
    }

    pub fn lift_row(&self, state: usize, row: &SubDistribution<usize>) -> LiftedRow {
        let mut lifted = LiftedRow::new();
        for (t, m) in row.iter() {
            *lifted.entry(self.choice(state, *t)).or_insert_with(Rational::zero) += m;
        }
        lifted
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    Bounded(usize),
    Unbounded,
}

impl Horizon {
    fn allows(self, depth: usize) -> bool {
        match self {
            Horizon::Bounded(h) => depth < h,
            Horizon::Unbounded => true,
        }
    }
}

/// `A_ξ`: a tree-shaped FPA whose nodes are finite paths of `A`.
#[derive(Clone, Debug)]
pub struct Unfolding {
    pub fpa: FullyProbAutomaton,
    /// The path of `A` behind each node.
    pub paths: Vec<Path>,
    /// Some node was cut by the horizon.
    pub truncated: bool,
}

fn node_name(a: &ProbAutomaton, p: &Path) -> String {
    let mut name = a.name(p.start).to_string();
    for st in &p.steps {
        name.push_str(&format!(" -{}-> {}", st.label, a.name(st.next)));
    }
    name
}

/// Nodes at depth `horizon` that could still move become truncated;
/// a node whose row is all halt becomes terminating.
pub fn unfold(ctx: &SchedContext, xi: &Scheduler, horizon: Horizon) -> Result<Unfolding, SchedError> {
    let a = ctx.automaton;
    if horizon == Horizon::Unbounded && !a.is_acyclic() {
        return Err(SchedError::CyclicNeedsHorizon);
    }
    let mut paths = vec![Path::new(a.initial())];
    let mut steps = Vec::new();
    let mut truncated = false;
    let mut i = 0;
    while i < paths.len() {
        let path = paths[i].clone();
        let last = path.last();
        let step = if a.is_terminating(last) {
            FpaStep::Terminated
        } else if !horizon.allows(path.len()) {
            truncated = true;
            FpaStep::Truncated
        } else {
            let row = xi.row(ctx, &path)?;
            if row.is_halt() {
                FpaStep::Terminated
            } else {
                let mut entries = Vec::new();
                for (&t, p) in row.iter() {
                    let tr = &a.transitions(last)[t];
                    for (&s, q) in tr.target.iter() {
                        entries.push(((tr.label.clone(), paths.len()), p * q));
                        paths.push(path.extended(tr.label.clone(), Some(t), s));
                    }
                }
                FpaStep::Moves(SubDistribution::new(entries, row.halt_mass().clone()).expect("row times target"))
            }
        };
        steps.push(step);
        i += 1;
    }
    let names = paths.iter().map(|p| node_name(a, p)).collect();
    Ok(Unfolding { fpa: FullyProbAutomaton::new(names, steps, 0), paths, truncated })
}

/// Whether `xi` respects equal observed history and bisimilar last states.
///
/// Tabular schedulers are admissible by construction, so only the table is
/// checked. History-independent ones are checked exactly over pairs of paths
/// of `A` with equal observed trace. Unrestricted ones are checked over all
/// paths up to the longest key of the table; longer paths all halt.
pub fn is_admissible(ctx: &SchedContext, xi: &Scheduler) -> bool {
    match xi {
        Scheduler::Tabular(table) => table.iter().all(|(k, row)| {
            k.class < ctx.choices.len() && row.support().all(|&c| c < ctx.choices[k.class].len())
        }),
        Scheduler::HistoryIndependent(picks) => hi_admissible(ctx, picks),
        Scheduler::Unrestricted(table) => {
            let depth = table.keys().map(Path::len).max().unwrap_or(0);
            let mut rows: BTreeMap<SchedulerKey, LiftedRow> = BTreeMap::new();
            let mut stack = vec![Path::new(ctx.automaton.initial())];
            while let Some(p) = stack.pop() {
                let last = p.last();
                let row = table.get(&p).cloned().unwrap_or_else(SubDistribution::halt);
                if row.support().any(|&t| t >= ctx.automaton.transitions(last).len()) {
                    return false;
                }
                let lifted = ctx.lift_row(last, &row);
                let key = ctx.key(&p.trace(), last);
                if rows.get(&key).is_some_and(|r| *r != lifted) {
                    return false;
                }
                rows.insert(key, lifted);
                if p.len() < depth {
                    for (i, t) in ctx.automaton.transitions(last).iter().enumerate() {
                        for s in t.target.support() {
                            stack.push(p.extended(t.label.clone(), Some(i), *s));
                        }
                    }
                }
            }
            true
        }
    }
}

fn hi_admissible(ctx: &SchedContext, picks: &[Option<usize>]) -> bool {
    let a = ctx.automaton;
    if picks.len() != a.num_states()
        || picks.iter().enumerate().any(|(s, p)| p.is_some_and(|t| t >= a.transitions(s).len()))
    {
        return false;
    }
    let lifted = |s: usize| picks[s].map(|t| ctx.choice(s, t));
    // Constant on every class of reachable states is enough.
    let mut by_class: BTreeMap<usize, Option<Choice>> = BTreeMap::new();
    let constant = a.reachable_order().into_iter().all(|s| {
        let row = lifted(s);
        by_class.entry(ctx.class_of(s)).or_insert_with(|| row.clone()) == &row
    });
    if constant {
        return true;
    }
    // Otherwise only pairs reachable along equal observed traces count.
    let mut seen = BTreeSet::from([(a.initial(), a.initial())]);
    let mut queue = VecDeque::from([(a.initial(), a.initial())]);
    while let Some((s1, s2)) = queue.pop_front() {
        if ctx.class_of(s1) == ctx.class_of(s2) && lifted(s1) != lifted(s2) {
            return false;
        }
        for t1 in a.transitions(s1) {
            for t2 in a.transitions(s2) {
                if ctx.obs.image(&t1.label) != ctx.obs.image(&t2.label) {
                    continue;
                }
                for &u1 in t1.target.support() {
                    for &u2 in t2.target.support() {
                        let pair = (u1.min(u2), u1.max(u2));
                        if seen.insert(pair) {
                            queue.push_back(pair);
                        }
                    }
                }
            }
        }
    }
    true
}

/// A history-independent scheduler admissible under both the collapse and
/// the strict map for `observable`: one collapse-mode choice per class,
/// refined to the least strict-mode choice among the matching transitions.
/// Terminating states halt.
pub fn synthesize_admissible(a: &ProbAutomaton, observable: &BTreeSet<ActionLabel>) -> Scheduler {
    let collapse = SchedContext::new(a, ObservationMap::collapse(observable.iter().cloned()));
    let strict = SchedContext::new(a, ObservationMap::strict(observable.iter().cloned()));
    let picks = (0..a.num_states())
        .map(|s| {
            let canon = collapse.choices[collapse.class_of(s)].first()?;
            (0..a.transitions(s).len())
                .filter(|&t| collapse.choice(s, t) == *canon)
                .min_by_key(|&t| (strict.choice(s, t), t))
        })
        .collect();
    Scheduler::HistoryIndependent(picks)
}

/// Bounds for scheduler enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Guard {
    pub max_schedulers: usize,
    pub max_keys: usize,
}

impl Default for Guard {
    fn default() -> Self {
        Self { max_schedulers: 100_000, max_keys: 100_000 }
    }
}

/// What a search branches on.
trait KeySpace {
    type Node: Clone + Ord;
    type Key: Clone + Ord;
    fn root(&self) -> Self::Node;
    /// Key and number of choices, or `None` when nothing is scheduled here.
    fn key(&self, node: &Self::Node) -> Option<(Self::Key, usize)>;
    fn children(&self, node: &Self::Node, choice: usize) -> Vec<Self::Node>;
}

struct Admissible<'c, 'a> {
    ctx: &'c SchedContext<'a>,
    horizon: usize,
}

impl KeySpace for Admissible<'_, '_> {
    type Node = (Vec<ActionLabel>, usize);
    type Key = SchedulerKey;

    fn root(&self) -> Self::Node {
        (Vec::new(), self.ctx.automaton.initial())
    }

    fn key(&self, (hist, s): &Self::Node) -> Option<(SchedulerKey, usize)> {
        if hist.len() >= self.horizon || self.ctx.automaton.is_terminating(*s) {
            return None;
        }
        let class = self.ctx.class_of(*s);
        Some((SchedulerKey { history: hist.clone(), class }, self.ctx.choices[class].len()))
    }

    fn children(&self, (hist, s): &Self::Node, choice: usize) -> Vec<Self::Node> {
        let t = &self.ctx.automaton.transitions(*s)[self.ctx.choice_map[*s][choice]];
        let mut h = hist.clone();
        h.push(self.ctx.obs.image(&t.label));
        t.target.support().map(|&u| (h.clone(), u)).collect()
    }
}

struct Raw<'a> {
    automaton: &'a ProbAutomaton,
    horizon: usize,
}

impl KeySpace for Raw<'_> {
    type Node = Path;
    type Key = Path;

    fn root(&self) -> Path {
        Path::new(self.automaton.initial())
    }

    fn key(&self, p: &Path) -> Option<(Path, usize)> {
        let n = self.automaton.transitions(p.last()).len();
        (p.len() < self.horizon && n > 0).then(|| (p.clone(), n))
    }

    fn children(&self, p: &Path, choice: usize) -> Vec<Path> {
        let t = &self.automaton.transitions(p.last())[choice];
        t.target.support().map(|&u| p.extended(t.label.clone(), Some(choice), u)).collect()
    }
}

struct Frame<S: KeySpace> {
    table: BTreeMap<S::Key, usize>,
    queue: VecDeque<S::Node>,
    seen: BTreeSet<S::Node>,
}

impl<S: KeySpace> Clone for Frame<S> {
    fn clone(&self) -> Self {
        Self { table: self.table.clone(), queue: self.queue.clone(), seen: self.seen.clone() }
    }
}

impl<S: KeySpace> Frame<S> {
    fn start(space: &S) -> Self {
        let root = space.root();
        Self { table: BTreeMap::new(), queue: VecDeque::from([root.clone()]), seen: BTreeSet::from([root]) }
    }

    fn expand(&mut self, space: &S, node: &S::Node, choice: usize) {
        for child in space.children(node, choice) {
            if self.seen.insert(child.clone()) {
                self.queue.push_back(child);
            }
        }
    }
}

/// Depth-first search over deterministic tables. Alternatives of the most
/// recent decision are tried first.
struct Search<S: KeySpace> {
    space: S,
    stack: Vec<Frame<S>>,
    guard: Guard,
    produced: usize,
    failed: bool,
}

impl<S: KeySpace> Search<S> {
    fn new(space: S, guard: Guard) -> Self {
        let stack = vec![Frame::start(&space)];
        Self { space, stack, guard, produced: 0, failed: false }
    }

    fn next_table(&mut self) -> Option<Result<BTreeMap<S::Key, usize>, SchedError>> {
        if self.failed {
            return None;
        }
        let mut frame = self.stack.pop()?;
        if self.produced >= self.guard.max_schedulers {
            self.failed = true;
            return Some(Err(SchedError::ExplosionGuard { bound: self.guard.max_schedulers, what: "schedulers" }));
        }
        while let Some(node) = frame.queue.pop_front() {
            let Some((key, n)) = self.space.key(&node) else { continue };
            let choice = match frame.table.get(&key) {
                Some(&c) => c,
                None => {
                    for c in (1..n).rev() {
                        let mut alt = frame.clone();
                        alt.table.insert(key.clone(), c);
                        alt.queue.push_front(node.clone());
                        self.stack.push(alt);
                    }
                    frame.table.insert(key, 0);
                    if frame.table.len() > self.guard.max_keys {
                        self.failed = true;
                        return Some(Err(SchedError::ExplosionGuard { bound: self.guard.max_keys, what: "keys" }));
                    }
                    0
                }
            };
            frame.expand(&self.space, &node, choice);
        }
        self.produced += 1;
        Some(Ok(frame.table))
    }
}

/// Stream of deterministic, non-halting admissible schedulers, keyed on
/// histories shorter than `horizon`. Only keys reachable under the scheduler
/// itself are listed, so distinct items induce distinct unfoldings.
pub struct AdmissibleSchedulers<'c, 'a> {
    search: Search<Admissible<'c, 'a>>,
}

impl Iterator for AdmissibleSchedulers<'_, '_> {
    type Item = Result<Scheduler, SchedError>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.search.next_table()?.map(|t| {
            Scheduler::Tabular(t.into_iter().map(|(k, c)| (k, SubDistribution::point(c))).collect())
        }))
    }
}

pub fn enumerate_admissible<'c, 'a>(
    ctx: &'c SchedContext<'a>,
    horizon: usize,
    guard: Guard,
) -> AdmissibleSchedulers<'c, 'a> {
    AdmissibleSchedulers { search: Search::new(Admissible { ctx, horizon }, guard) }
}

/// Stream of deterministic, non-halting schedulers keyed by the full path.
pub struct UnrestrictedSchedulers<'a> {
    search: Search<Raw<'a>>,
}

impl Iterator for UnrestrictedSchedulers<'_> {
    type Item = Result<Scheduler, SchedError>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.search.next_table()?.map(|t| {
            Scheduler::Unrestricted(t.into_iter().map(|(k, c)| (k, SubDistribution::point(c))).collect())
        }))
    }
}

pub fn enumerate_unrestricted(a: &ProbAutomaton, horizon: usize, guard: Guard) -> UnrestrictedSchedulers<'_> {
    UnrestrictedSchedulers { search: Search::new(Raw { automaton: a, horizon }, guard) }
}

/// A deterministic admissible scheduler with each key's choice drawn
/// uniformly when the key is first reached.
pub fn sample_admissible(ctx: &SchedContext, horizon: usize, seed: u64) -> Scheduler {
    let space = Admissible { ctx, horizon };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frame = Frame::start(&space);
    while let Some(node) = frame.queue.pop_front() {
        let Some((key, n)) = space.key(&node) else { continue };
        let choice = *frame.table.entry(key).or_insert_with(|| rng.gen_range(0..n));
        frame.expand(&space, &node, choice);
    }
    Scheduler::Tabular(frame.table.into_iter().map(|(k, c)| (k, SubDistribution::point(c))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::AutomatonBuilder;
    use crate::dist::Distribution;
    use crate::rational::ratio;

    fn x(n: &str) -> ActionLabel {
        ActionLabel::external(n)
    }

    /// root -tau-> {l, r}; l -a1-> mid; r -a2-> mid; mid -x1|x2-> end.
    fn m() -> ProbAutomaton {
        let mut b = AutomatonBuilder::new();
        b.initial("root");
        let half = Distribution::uniform(["l".to_string(), "r".to_string()]).unwrap();
        b.transition("root", ActionLabel::tau(), half);
        b.step("l", x("a1"), "mid").step("r", x("a2"), "mid");
        b.step("mid", x("x1"), "end").step("mid", x("x2"), "end");
        b.build()
    }

    fn obs() -> Vec<ActionLabel> {
        vec![x("x1"), x("x2")]
    }

    fn leaking(a: &ProbAutomaton) -> Scheduler {
        let mid = a.state_id("mid").unwrap();
        let mut table = BTreeMap::new();
        let root = Path::new(a.initial());
        table.insert(root.clone(), SubDistribution::point(0));
        for (side, pick) in [("l", 0), ("r", 1)] {
            let p = root.extended(ActionLabel::tau(), Some(0), a.state_id(side).unwrap());
            table.insert(p.clone(), SubDistribution::point(0));
            let label = if side == "l" { x("a1") } else { x("a2") };
            table.insert(p.extended(label, Some(0), mid), SubDistribution::point(pick));
        }
        Scheduler::Unrestricted(table)
    }

    #[test]
    fn always_halt_unfolds_to_root() {
        let a = m();
        let ctx = SchedContext::new(&a, ObservationMap::collapse(obs()));
        let u = unfold(&ctx, &Scheduler::always_halt(), Horizon::Unbounded).unwrap();
        assert_eq!(u.fpa.num_states(), 1);
        assert!(u.fpa.is_terminating(0));
    }

    #[test]
    fn leaking_unfolding_takes_one_branch_each() {
        let a = m();
        let ctx = SchedContext::new(&a, ObservationMap::collapse(obs()));
        let u = unfold(&ctx, &leaking(&a), Horizon::Unbounded).unwrap();
        // root, l, r, two mids, two ends
        assert_eq!(u.fpa.num_states(), 7);
        let traces: BTreeSet<String> =
            u.paths.iter().filter(|p| p.len() == 3).map(|p| format_trace(&p.trace())).collect();
        assert_eq!(traces, BTreeSet::from(["tau a1 x1".to_string(), "tau a2 x2".to_string()]));
    }

    #[test]
    fn leaking_is_admissible_only_in_strict_mode() {
        let a = m();
        let collapse = SchedContext::new(&a, ObservationMap::collapse(obs()));
        let strict = SchedContext::new(&a, ObservationMap::strict(obs()));
        assert!(!is_admissible(&collapse, &leaking(&a)));
        assert!(is_admissible(&strict, &leaking(&a)));
    }

    #[test]
    fn enumeration_counts_on_m() {
        let a = m();
        let collapse = SchedContext::new(&a, ObservationMap::collapse(obs()));
        let strict = SchedContext::new(&a, ObservationMap::strict(obs()));
        let n = |ctx: &SchedContext| enumerate_admissible(ctx, 3, Guard::default()).count();
        assert_eq!(n(&collapse), 2);
        assert_eq!(n(&strict), 4);
    }

    #[test]
    fn no_nondeterminism_gives_one_scheduler() {
        let mut b = AutomatonBuilder::new();
        b.initial("s").step("s", x("a"), "t").step("t", x("b"), "u");
        let a = b.build();
        let ctx = SchedContext::new(&a, ObservationMap::collapse([x("a")]));
        assert_eq!(enumerate_admissible(&ctx, 5, Guard::default()).count(), 1);
    }

    #[test]
    fn guard_trips() {
        let a = m();
        let ctx = SchedContext::new(&a, ObservationMap::strict(obs()));
        let guard = Guard { max_schedulers: 3, max_keys: 100 };
        let items: Vec<_> = enumerate_admissible(&ctx, 3, guard).collect();
        assert_eq!(items.len(), 4);
        assert!(matches!(items[3], Err(SchedError::ExplosionGuard { bound: 3, .. })));
    }

    #[test]
    fn all_terminating_synthesizes_halt() {
        let a = ProbAutomaton::from_parts(vec!["s".into(), "t".into()], vec![vec![], vec![]], 0, []);
        assert_eq!(synthesize_admissible(&a, &BTreeSet::from_iter(obs())), Scheduler::HistoryIndependent(vec![None, None]));
    }

    #[test]
    fn synthesized_is_admissible_both_modes() {
        let a = m();
        let xi = synthesize_admissible(&a, &BTreeSet::from_iter(obs()));
        for ctx in [
            SchedContext::new(&a, ObservationMap::collapse(obs())),
            SchedContext::new(&a, ObservationMap::strict(obs())),
        ] {
            assert!(is_admissible(&ctx, &xi));
        }
    }

    #[test]
    fn sample_is_reproducible() {
        let a = m();
        let ctx = SchedContext::new(&a, ObservationMap::strict(obs()));
        let s1 = sample_admissible(&ctx, 3, 7);
        assert_eq!(s1, sample_admissible(&ctx, 3, 7));
        assert!(is_admissible(&ctx, &s1));
    }

    #[test]
    fn text_round_trip() {
        let a = m();
        let ctx = SchedContext::new(&a, ObservationMap::strict(obs()));
        for xi in enumerate_admissible(&ctx, 3, Guard::default()) {
            let xi = xi.unwrap();
            assert_eq!(Scheduler::parse_text(&xi.to_text()).unwrap(), xi);
        }
        let mut table = BTreeMap::new();
        let row = SubDistribution::new([(0, ratio(1, 2)), (1, ratio(1, 4))], ratio(1, 4)).unwrap();
        table.insert(SchedulerKey { history: vec![ActionLabel::tau(), x("x1")], class: 2 }, row);
        let xi = Scheduler::Tabular(table);
        assert_eq!(xi.kind(), SchedulerKind::TabularRandomized);
        assert_eq!(Scheduler::parse_text(&xi.to_text()).unwrap(), xi);
        let hi = synthesize_admissible(&a, &BTreeSet::from_iter(obs()));
        assert_eq!(Scheduler::parse_text(&hi.to_text()).unwrap(), hi);
    }

    #[test]
    fn cyclic_needs_horizon() {
        let mut b = AutomatonBuilder::new();
        b.initial("s").step("s", x("a"), "s");
        let a = b.build();
        let ctx = SchedContext::new(&a, ObservationMap::collapse([x("a")]));
        let xi = synthesize_admissible(&a, &BTreeSet::from_iter(obs()));
        assert_eq!(unfold(&ctx, &xi, Horizon::Unbounded).unwrap_err(), SchedError::CyclicNeedsHorizon);
        let u = unfold(&ctx, &xi, Horizon::Bounded(3)).unwrap();
        assert!(u.truncated);
        assert_eq!(u.fpa.num_states(), 4);
    }

    #[test]
    fn priority_prefers_listed_labels() {
        let a = m();
        let xi = Scheduler::priority(&a, &[x("x2")]);
        let mid = a.state_id("mid").unwrap();
        let Scheduler::HistoryIndependent(p) = xi else { unreachable!() };
        assert_eq!(a.transitions(mid)[p[mid].unwrap()].label, x("x2"));
    }
}
