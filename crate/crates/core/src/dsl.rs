//! The `.pam` model format.
//!
//! ```text
//! format 1
//! automaton Coin {
//!   init flip;
//!   flip -tau-> { h: 1/2, t: 1/2 };
//!   h -heads!-> done;
//!   t -tails!-> done;
//! }
//! system S = hide(sync(Coin || Obs, {heads, tails}), {seen!})
//! spec { users { 1, 2 }; marker 1 = tau[heads]; marker 2 = tau[tails]; observe { seen! }; }
//! scheduler first priority { tau, seen! }
//! ```
//!
//! `sync(e, {c, ...})` adds the handshake `c? · c! = tau[c]` and restricts
//! the unmatched halves `c?` and `c!`. Probabilities are exact fractions;
//! decimal literals are rejected. `#` starts a line comment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::algebra::{CommFunction, Composite, Expr};
use crate::anonymity::AnonymitySpec;
use crate::automaton::{ProbAutomaton, Transition};
use crate::dist::{Distribution, SubDistribution};
use crate::fpa::{FpaStep, FullyProbAutomaton};
use crate::label::{is_ident, ActionLabel, LabelKind};
use crate::rational::{format_fraction, Rational};
use crate::sched::{Scheduler, SchedulerKey};

pub const FORMAT_VERSION: u32 = 1;

/// A source position, 1-based. Positions are ignored by equality so that
/// printed and reparsed bundles compare equal.
#[derive(Clone, Copy, Debug, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Pos {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Pos {}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("{pos}: syntax error: expected {}, found {found}", expected.join(" or "))]
    Syntax { pos: Pos, expected: Vec<String>, found: String },
    #[error("{pos}: unknown name `{name}`")]
    UnknownName { pos: Pos, name: String },
    #[error("{pos}: bad fraction `{text}`: {why}")]
    BadFraction { pos: Pos, text: String, why: String },
    #[error("{pos}: bad distribution: {why}")]
    BadDistribution { pos: Pos, why: String },
    #[error("{pos}: `{name}` is defined twice")]
    Duplicate { pos: Pos, name: String },
    #[error("{pos}: {why}")]
    Invalid { pos: Pos, why: String },
}

impl DslError {
    pub fn pos(&self) -> Pos {
        match self {
            DslError::Syntax { pos, .. }
            | DslError::UnknownName { pos, .. }
            | DslError::BadFraction { pos, .. }
            | DslError::BadDistribution { pos, .. }
            | DslError::Duplicate { pos, .. }
            | DslError::Invalid { pos, .. } => *pos,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionDef {
    pub from: String,
    pub label: ActionLabel,
    pub targets: Vec<(String, Rational)>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AutomatonDef {
    pub name: String,
    pub init: String,
    /// States in id order.
    pub states: Vec<String>,
    /// Alphabet entries beyond the labels used on transitions.
    pub extra_actions: BTreeSet<ActionLabel>,
    pub transitions: Vec<TransitionDef>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SystemExpr {
    Name(String, Pos),
    Par(Vec<SystemExpr>),
    Restrict(Box<SystemExpr>, BTreeSet<ActionLabel>),
    Hide(Box<SystemExpr>, BTreeSet<ActionLabel>),
    Sync(Box<SystemExpr>, BTreeSet<String>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemDef {
    pub name: String,
    pub expr: SystemExpr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpecDef {
    pub users: Vec<String>,
    pub markers: Vec<(String, ActionLabel, Pos)>,
    pub observe: BTreeSet<ActionLabel>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SchedulerDef {
    /// Always the first enabled transition in this label order; `tau`
    /// matches every internal label.
    Priority(Vec<ActionLabel>),
    /// A tabular or history-independent table. Class ids refer to the
    /// bisimilarity partition of the context the table is used in.
    Table(Scheduler),
}

/// Per-component state maps that exchange two users.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymmetryDef {
    pub users: (String, String),
    pub maps: Vec<(String, Vec<(String, String)>)>,
    pub pos: Pos,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ModelBundle {
    pub automata: Vec<AutomatonDef>,
    pub system: Option<SystemDef>,
    pub spec: Option<SpecDef>,
    pub schedulers: Vec<(String, SchedulerDef)>,
    pub symmetries: Vec<SymmetryDef>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Word(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

const SYMBOLS: [&str; 16] = ["->", "||", "-", "{", "}", "(", ")", "[", "]", ";", ",", ":", "=", "/", "?", "!"];

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, DslError> {
    let mut out = Vec::new();
    let (mut line, mut col) = (1, 1);
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        let pos = Pos { line, col };
        if c == '\n' {
            chars.next();
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            col += 1;
            continue;
        }
        if c == '#' {
            while chars.peek().is_some_and(|&(_, c)| c != '\n') {
                chars.next();
            }
            continue;
        }
        if c.is_ascii_alphanumeric() || c == '_' {
            let mut end = i;
            while let Some(&(j, c)) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    end = j + c.len_utf8();
                    chars.next();
                    col += 1;
                } else {
                    break;
                }
            }
            let word = &text[i..end];
            if chars.peek().is_some_and(|&(_, c)| c == '.') && word.bytes().all(|b| b.is_ascii_digit()) {
                return Err(DslError::BadFraction {
                    pos,
                    text: format!("{word}."),
                    why: "decimal literals are not allowed; write p/q".into(),
                });
            }
            out.push((Tok::Word(word.to_string()), pos));
            continue;
        }
        let rest = &text[i..];
        let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
            return Err(DslError::Syntax { pos, expected: vec!["a token".into()], found: format!("`{c}`") });
        };
        for _ in 0..sym.len() {
            chars.next();
        }
        col += sym.len();
        out.push((Tok::Sym(sym), pos));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

type PResult<T> = Result<T, DslError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(DslError::Syntax {
            pos: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().to_string(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Word(x) if x == w)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        let hit = self.is_sym(s);
        if hit {
            self.bump();
        }
        hit
    }

    fn sym(&mut self, s: &'static str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.fail(&[&format!("`{s}`")])
        }
    }

    fn keyword(&mut self, w: &str) -> PResult<()> {
        if self.is_word(w) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[&format!("`{w}`")])
        }
    }

    fn word(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Tok::Word(w) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            _ => self.fail(&[what]),
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Tok::Word(w) if is_ident(w) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            _ => self.fail(&[what]),
        }
    }

    fn integer(&mut self) -> PResult<num_bigint::BigInt> {
        let pos = self.pos();
        match self.peek() {
            Tok::Word(w) if w.bytes().all(|b| b.is_ascii_digit()) => {
                let n = w.parse().map_err(|_| DslError::BadFraction {
                    pos,
                    text: w.clone(),
                    why: "not an integer".into(),
                })?;
                self.bump();
                Ok(n)
            }
            _ => self.fail(&["an integer"]),
        }
    }

    fn usize(&mut self) -> PResult<usize> {
        let pos = self.pos();
        let n = self.integer()?;
        usize::try_from(n).map_err(|_| DslError::Invalid { pos, why: "number out of range".into() })
    }

    fn fraction(&mut self) -> PResult<Rational> {
        let pos = self.pos();
        let num = self.integer()?;
        let den = if self.eat_sym("/") { self.integer()? } else { 1.into() };
        if den.is_zero() {
            return Err(DslError::BadFraction { pos, text: format!("{num}/{den}"), why: "zero denominator".into() });
        }
        Ok(Rational::new(num, den))
    }

    /// `name`, `name?`, `name!`, `tau` or `tau[tag]`.
    fn label(&mut self) -> PResult<ActionLabel> {
        let name = self.ident("an action label")?;
        if name == "tau" {
            if self.eat_sym("[") {
                let tag = self.ident("a marker tag")?;
                self.sym("]")?;
                return Ok(ActionLabel::marker(&tag));
            }
            return Ok(ActionLabel::tau());
        }
        Ok(if self.eat_sym("?") {
            ActionLabel::input(&name)
        } else if self.eat_sym("!") {
            ActionLabel::output(&name)
        } else {
            ActionLabel::external(&name)
        })
    }

    fn list<T>(&mut self, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        self.sym("{")?;
        let mut out = Vec::new();
        if self.eat_sym("}") {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat_sym("}") {
                return Ok(out);
            }
            if !self.eat_sym(",") {
                return self.fail(&["`,`", "`}`"]);
            }
        }
    }

    fn label_set(&mut self) -> PResult<BTreeSet<ActionLabel>> {
        Ok(self.list(Self::label)?.into_iter().collect())
    }

    fn bundle(&mut self) -> PResult<ModelBundle> {
        self.keyword("format")?;
        let pos = self.pos();
        let v = self.usize()?;
        if v != FORMAT_VERSION as usize {
            return Err(DslError::Invalid { pos, why: format!("unsupported format version {v}") });
        }
        let mut b = ModelBundle::default();
        loop {
            let pos = self.pos();
            match self.peek() {
                Tok::Eof => return Ok(b),
                Tok::Word(w) if w == "automaton" => {
                    let a = self.automaton()?;
                    if b.automata.iter().any(|x| x.name == a.name) {
                        return Err(DslError::Duplicate { pos, name: a.name });
                    }
                    b.automata.push(a);
                }
                Tok::Word(w) if w == "system" => {
                    if b.system.is_some() {
                        return Err(DslError::Duplicate { pos, name: "system".into() });
                    }
                    self.bump();
                    let name = self.ident("a system name")?;
                    self.sym("=")?;
                    let expr = self.expr()?;
                    self.eat_sym(";");
                    b.system = Some(SystemDef { name, expr });
                }
                Tok::Word(w) if w == "spec" => {
                    if b.spec.is_some() {
                        return Err(DslError::Duplicate { pos, name: "spec".into() });
                    }
                    b.spec = Some(self.spec()?);
                }
                Tok::Word(w) if w == "scheduler" => {
                    self.bump();
                    let name = self.ident("a scheduler name")?;
                    if b.schedulers.iter().any(|(n, _)| *n == name) {
                        return Err(DslError::Duplicate { pos, name });
                    }
                    let def = self.scheduler()?;
                    b.schedulers.push((name, def));
                }
                Tok::Word(w) if w == "symmetry" => b.symmetries.push(self.symmetry()?),
                _ => return self.fail(&["`automaton`", "`system`", "`spec`", "`scheduler`", "`symmetry`"]),
            }
        }
    }

    fn automaton(&mut self) -> PResult<AutomatonDef> {
        let pos = self.pos();
        self.keyword("automaton")?;
        let name = self.ident("an automaton name")?;
        self.sym("{")?;
        self.keyword("init")?;
        let init = self.word("a state name")?;
        self.sym(";")?;
        let mut a = AutomatonDef {
            name,
            init: init.clone(),
            states: vec![init],
            extra_actions: BTreeSet::new(),
            transitions: Vec::new(),
            pos,
        };
        let mut seen: BTreeSet<String> = a.states.iter().cloned().collect();
        let mut declare = |a: &mut AutomatonDef, s: &str| {
            if seen.insert(s.to_string()) {
                a.states.push(s.to_string());
            }
        };
        while !self.eat_sym("}") {
            let pos = self.pos();
            if self.is_word("states") && matches!(self.toks[self.at + 1].0, Tok::Sym("{")) {
                self.bump();
                for s in self.list(|p| p.word("a state name"))? {
                    declare(&mut a, &s);
                }
                self.sym(";")?;
                continue;
            }
            if self.is_word("actions") && matches!(self.toks[self.at + 1].0, Tok::Sym("{")) {
                self.bump();
                a.extra_actions.extend(self.label_set()?);
                self.sym(";")?;
                continue;
            }
            let from = self.word("a state name or `}`")?;
            declare(&mut a, &from);
            if self.eat_sym(";") {
                continue;
            }
            self.sym("-")?;
            let label = self.label()?;
            self.sym("->")?;
            let targets = if self.is_sym("{") {
                self.list(|p| {
                    let s = p.word("a state name")?;
                    p.sym(":")?;
                    Ok((s, p.fraction()?))
                })?
            } else {
                vec![(self.word("a state name or `{`")?, Rational::one())]
            };
            for (s, _) in &targets {
                declare(&mut a, s);
            }
            self.sym(";")?;
            a.transitions.push(TransitionDef { from, label, targets, pos });
        }
        Ok(a)
    }

    fn expr(&mut self) -> PResult<SystemExpr> {
        let mut items = vec![self.term()?];
        while self.eat_sym("||") {
            items.push(self.term()?);
        }
        Ok(if items.len() == 1 { items.pop().expect("one item") } else { SystemExpr::Par(items) })
    }

    fn term(&mut self) -> PResult<SystemExpr> {
        let pos = self.pos();
        if self.eat_sym("(") {
            let e = self.expr()?;
            self.sym(")")?;
            return Ok(e);
        }
        let name = self.ident("an automaton name, `hide`, `restrict`, `sync` or `(`")?;
        let op = match name.as_str() {
            "hide" | "restrict" | "sync" if self.is_sym("(") => name,
            _ => return Ok(SystemExpr::Name(name, pos)),
        };
        self.sym("(")?;
        let inner = Box::new(self.expr()?);
        self.sym(",")?;
        let e = match op.as_str() {
            "hide" => SystemExpr::Hide(inner, self.label_set()?),
            "restrict" => SystemExpr::Restrict(inner, self.label_set()?),
            _ => SystemExpr::Sync(inner, self.list(|p| p.ident("a channel name"))?.into_iter().collect()),
        };
        self.sym(")")?;
        Ok(e)
    }

    fn spec(&mut self) -> PResult<SpecDef> {
        let pos = self.pos();
        self.keyword("spec")?;
        self.sym("{")?;
        self.keyword("users")?;
        let users = self.list(|p| p.word("a user name"))?;
        self.sym(";")?;
        let mut markers = Vec::new();
        while self.is_word("marker") {
            self.bump();
            let pos = self.pos();
            let user = self.word("a user name")?;
            self.sym("=")?;
            markers.push((user, self.label()?, pos));
            self.sym(";")?;
        }
        self.keyword("observe")?;
        let observe = self.label_set()?;
        self.sym(";")?;
        self.sym("}")?;
        Ok(SpecDef { users, markers, observe, pos })
    }

    fn scheduler(&mut self) -> PResult<SchedulerDef> {
        if self.is_word("priority") {
            self.bump();
            return Ok(SchedulerDef::Priority(self.list(Self::label)?));
        }
        self.sym("{")?;
        let mut table = BTreeMap::new();
        let mut picks: BTreeMap<usize, Option<usize>> = BTreeMap::new();
        while !self.eat_sym("}") {
            if self.is_word("state") {
                self.bump();
                let s = self.usize()?;
                self.sym("->")?;
                let pos = self.pos();
                let row = self.row()?;
                if !row.is_deterministic() {
                    return Err(DslError::Invalid { pos, why: "state rows must be a single choice or HALT".into() });
                }
                picks.insert(s, row.as_point().copied());
            } else {
                self.sym("[")?;
                let mut history = Vec::new();
                while !self.is_sym(";") {
                    history.push(self.label()?);
                }
                self.sym(";")?;
                let class = self.usize()?;
                self.sym("]")?;
                self.sym("->")?;
                table.insert(SchedulerKey { history, class }, self.row()?);
            }
            self.sym(";")?;
        }
        let pos = self.pos();
        match (table.is_empty(), picks.is_empty()) {
            (false, false) => Err(DslError::Invalid { pos, why: "a table cannot mix keyed and state rows".into() }),
            (true, false) => {
                let n = picks.keys().next_back().map_or(0, |k| k + 1);
                Ok(SchedulerDef::Table(Scheduler::HistoryIndependent(
                    (0..n).map(|s| picks.get(&s).copied().flatten()).collect(),
                )))
            }
            _ => Ok(SchedulerDef::Table(Scheduler::Tabular(table))),
        }
    }

    /// `HALT`, `n`, or `{ n: p/q, ... }` with the rest halting.
    fn row(&mut self) -> PResult<SubDistribution<usize>> {
        let pos = self.pos();
        if self.is_word("HALT") {
            self.bump();
            return Ok(SubDistribution::halt());
        }
        if !self.is_sym("{") {
            return Ok(SubDistribution::point(self.usize()?));
        }
        let entries = self.list(|p| {
            let c = p.usize()?;
            p.sym(":")?;
            Ok((c, p.fraction()?))
        })?;
        let total: Rational = entries.iter().map(|(_, q)| q).sum();
        SubDistribution::new(entries, Rational::one() - total)
            .map_err(|e| DslError::BadDistribution { pos, why: e.to_string() })
    }

    fn symmetry(&mut self) -> PResult<SymmetryDef> {
        let pos = self.pos();
        self.keyword("symmetry")?;
        let users = (self.word("a user name")?, self.word("a user name")?);
        self.sym("{")?;
        let mut maps = Vec::new();
        while !self.eat_sym("}") {
            let comp = self.ident("an automaton name")?;
            self.sym(":")?;
            let mut pairs = Vec::new();
            loop {
                let s = self.word("a state name")?;
                self.sym("->")?;
                pairs.push((s, self.word("a state name")?));
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.sym(";")?;
            maps.push((comp, pairs));
        }
        Ok(SymmetryDef { users, maps, pos })
    }
}

/// Parses a `.pam` document. Never panics; every error carries a position.
pub fn parse_model(text: &str) -> Result<ModelBundle, DslError> {
    let toks = lex(text)?;
    Parser { toks, at: 0 }.bundle()
}

/// A bundle with its system built.
#[derive(Clone, Debug)]
pub struct Elaborated {
    pub components: Vec<ProbAutomaton>,
    pub component_names: Vec<String>,
    pub expr: Expr,
    pub gamma: CommFunction,
    pub composite: Composite,
    pub spec: Option<AnonymitySpec>,
}

impl Elaborated {
    pub fn automaton(&self) -> &ProbAutomaton {
        &self.composite.automaton
    }
}

impl AutomatonDef {
    pub fn build(&self) -> Result<ProbAutomaton, DslError> {
        let index: BTreeMap<&str, usize> = self.states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut transitions = vec![Vec::new(); self.states.len()];
        for t in &self.transitions {
            let mut entries = Vec::new();
            for (s, q) in &t.targets {
                let &id =
                    index.get(s.as_str()).ok_or_else(|| DslError::UnknownName { pos: t.pos, name: s.clone() })?;
                entries.push((id, q.clone()));
            }
            let target =
                Distribution::new(entries).map_err(|e| DslError::BadDistribution { pos: t.pos, why: e.to_string() })?;
            transitions[index[t.from.as_str()]].push(Transition { label: t.label.clone(), target });
        }
        let init = index[self.init.as_str()];
        Ok(ProbAutomaton::from_parts(self.states.clone(), transitions, init, self.extra_actions.iter().cloned()))
    }

    /// The definition of `a`. State names that are not plain words are
    /// replaced by `s<id>`.
    pub fn from_automaton(name: &str, a: &ProbAutomaton) -> Self {
        let plain = a.names().iter().all(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
            && a.names().iter().collect::<BTreeSet<_>>().len() == a.num_states();
        let states: Vec<String> =
            if plain { a.names().to_vec() } else { (0..a.num_states()).map(|i| format!("s{i}")).collect() };
        let mut used = BTreeSet::new();
        let mut transitions = Vec::new();
        for s in 0..a.num_states() {
            for t in a.transitions(s) {
                used.insert(t.label.clone());
                transitions.push(TransitionDef {
                    from: states[s].clone(),
                    label: t.label.clone(),
                    targets: t.target.iter().map(|(&u, q)| (states[u].clone(), q.clone())).collect(),
                    pos: Pos::default(),
                });
            }
        }
        Self {
            name: name.to_string(),
            init: states[a.initial()].clone(),
            states,
            extra_actions: a.actions().difference(&used).cloned().collect(),
            transitions,
            pos: Pos::default(),
        }
    }
}

fn lower(e: &SystemExpr, names: &[String], channels: &mut BTreeSet<String>) -> Result<Expr, DslError> {
    Ok(match e {
        SystemExpr::Name(n, pos) => Expr::Leaf(
            names.iter().position(|x| x == n).ok_or_else(|| DslError::UnknownName { pos: *pos, name: n.clone() })?,
        ),
        SystemExpr::Par(items) => {
            Expr::par(items.iter().map(|i| lower(i, names, channels)).collect::<Result<Vec<_>, _>>()?)
        }
        SystemExpr::Restrict(inner, set) => Expr::Restrict(Box::new(lower(inner, names, channels)?), set.clone()),
        SystemExpr::Hide(inner, set) => Expr::Hide(Box::new(lower(inner, names, channels)?), set.clone()),
        SystemExpr::Sync(inner, chans) => {
            channels.extend(chans.iter().cloned());
            let halves = chans.iter().flat_map(|c| [ActionLabel::input(c), ActionLabel::output(c)]).collect();
            Expr::Restrict(Box::new(lower(inner, names, channels)?), halves)
        }
    })
}

impl ModelBundle {
    /// Builds every automaton, the system (or the only automaton when no
    /// system is given) and the anonymity spec.
    pub fn elaborate(&self) -> Result<Elaborated, DslError> {
        let components = self.automata.iter().map(AutomatonDef::build).collect::<Result<Vec<_>, _>>()?;
        let component_names: Vec<String> = self.automata.iter().map(|a| a.name.clone()).collect();
        let mut channels = BTreeSet::new();
        let expr = match &self.system {
            Some(sys) => lower(&sys.expr, &component_names, &mut channels)?,
            None if components.len() == 1 => Expr::Leaf(0),
            None => {
                return Err(DslError::Invalid {
                    pos: Pos { line: 1, col: 1 },
                    why: format!("{} automata but no system", components.len()),
                })
            }
        };
        let gamma = CommFunction::handshake(channels.iter().map(String::as_str));
        let composite = Composite::explore(&components, &expr, &gamma);
        let spec = match &self.spec {
            None => None,
            Some(def) => Some(build_spec(def, composite.automaton.actions())?),
        };
        Ok(Elaborated { components, component_names, expr, gamma, composite, spec })
    }

    pub fn scheduler(&self, name: &str) -> Option<&SchedulerDef> {
        self.schedulers.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    /// The state map of a symmetry block on the elaborated composite, or a
    /// message saying why it does not lift.
    pub fn symmetry_map(&self, e: &Elaborated, sym: &SymmetryDef) -> Result<Vec<usize>, String> {
        let mut maps = vec![BTreeMap::new(); e.components.len()];
        for (comp, pairs) in &sym.maps {
            let c = e.component_names.iter().position(|n| n == comp).ok_or(format!("unknown automaton {comp}"))?;
            for (s, t) in pairs {
                let id = |n: &str| e.components[c].state_id(n).ok_or(format!("unknown state {n} of {comp}"));
                maps[c].insert(id(s)?, id(t)?);
            }
        }
        crate::dc::lift_component_maps(&e.composite, &maps)
            .ok_or_else(|| "the component maps do not lift to the composite".to_string())
    }
}

fn build_spec(def: &SpecDef, actions: &BTreeSet<ActionLabel>) -> Result<AnonymitySpec, DslError> {
    let mut users = Vec::new();
    for u in &def.users {
        let Some((_, label, pos)) = def.markers.iter().find(|(m, _, _)| m == u) else {
            return Err(DslError::Invalid { pos: def.pos, why: format!("user {u} has no marker") });
        };
        if !actions.contains(label) {
            return Err(DslError::UnknownName { pos: *pos, name: label.to_string() });
        }
        users.push((u.clone(), label.clone()));
    }
    if let Some((m, _, pos)) = def.markers.iter().find(|(m, _, _)| !def.users.contains(m)) {
        return Err(DslError::UnknownName { pos: *pos, name: m.clone() });
    }
    Ok(AnonymitySpec::with_markers(users, def.observe.iter().cloned()))
}

fn join<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn print_row(row: &SubDistribution<usize>) -> String {
    if row.is_halt() {
        return "HALT".into();
    }
    if let (Some(c), true) = (row.as_point(), row.halt_mass().is_zero()) {
        return c.to_string();
    }
    format!("{{ {} }}", join(row.iter().map(|(c, q)| format!("{c}: {}", format_fraction(q)))))
}

fn print_expr(e: &SystemExpr) -> String {
    match e {
        SystemExpr::Name(n, _) => n.clone(),
        SystemExpr::Par(items) => items
            .iter()
            .map(|i| match i {
                SystemExpr::Par(_) => format!("({})", print_expr(i)),
                _ => print_expr(i),
            })
            .collect::<Vec<_>>()
            .join(" || "),
        SystemExpr::Restrict(i, s) => format!("restrict({}, {{{}}})", print_expr(i), join(s)),
        SystemExpr::Hide(i, s) => format!("hide({}, {{{}}})", print_expr(i), join(s)),
        SystemExpr::Sync(i, s) => format!("sync({}, {{{}}})", print_expr(i), join(s)),
    }
}

/// Prints a bundle; `parse_model` reads it back to an equal bundle.
pub fn print_model(b: &ModelBundle) -> String {
    let mut out = format!("format {FORMAT_VERSION}\n");
    for a in &b.automata {
        let _ = writeln!(out, "\nautomaton {} {{", a.name);
        let _ = writeln!(out, "  init {};", a.init);
        let _ = writeln!(out, "  states {{ {} }};", a.states.join(", "));
        if !a.extra_actions.is_empty() {
            let _ = writeln!(out, "  actions {{ {} }};", join(&a.extra_actions));
        }
        for t in &a.transitions {
            let target = match t.targets.as_slice() {
                [(s, q)] if q.is_one() => s.clone(),
                ts => format!("{{ {} }}", join(ts.iter().map(|(s, q)| format!("{s}: {}", format_fraction(q))))),
            };
            let _ = writeln!(out, "  {} -{}-> {target};", t.from, t.label);
        }
        out.push_str("}\n");
    }
    if let Some(sys) = &b.system {
        let _ = writeln!(out, "\nsystem {} = {}", sys.name, print_expr(&sys.expr));
    }
    if let Some(spec) = &b.spec {
        let _ = writeln!(out, "\nspec {{\n  users {{ {} }};", spec.users.join(", "));
        for (u, l, _) in &spec.markers {
            let _ = writeln!(out, "  marker {u} = {l};");
        }
        let _ = writeln!(out, "  observe {{ {} }};\n}}", join(&spec.observe));
    }
    for (name, def) in &b.schedulers {
        match def {
            SchedulerDef::Priority(order) => {
                let _ = writeln!(out, "\nscheduler {name} priority {{ {} }}", join(order));
            }
            SchedulerDef::Table(Scheduler::Tabular(table)) => {
                let _ = writeln!(out, "\nscheduler {name} {{");
                for (k, row) in table {
                    let h: Vec<String> = k.history.iter().map(ToString::to_string).collect();
                    let _ = writeln!(out, "  [{} ; {}] -> {};", h.join(" "), k.class, print_row(row));
                }
                out.push_str("}\n");
            }
            SchedulerDef::Table(Scheduler::HistoryIndependent(picks)) => {
                let _ = writeln!(out, "\nscheduler {name} {{");
                for (s, p) in picks.iter().enumerate() {
                    let row = p.map_or_else(SubDistribution::halt, SubDistribution::point);
                    let _ = writeln!(out, "  state {s} -> {};", print_row(&row));
                }
                out.push_str("}\n");
            }
            SchedulerDef::Table(Scheduler::Unrestricted(_)) => {
                let _ = writeln!(out, "\n# scheduler {name}: path-keyed tables have no .pam form");
            }
        }
    }
    for s in &b.symmetries {
        let _ = writeln!(out, "\nsymmetry {} {} {{", s.users.0, s.users.1);
        for (comp, pairs) in &s.maps {
            let _ = writeln!(out, "  {comp}: {};", join(pairs.iter().map(|(a, b)| format!("{a} -> {b}"))));
        }
        out.push_str("}\n");
    }
    out
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// DOT digraph of a probabilistic automaton. A transition with a point
/// distribution is one edge; otherwise the action edge ends in a point
/// node with one fraction-labelled edge per target.
pub fn render_dot(a: &ProbAutomaton) -> String {
    let mut out = String::from("digraph pa {\n  rankdir=TB;\n  node [shape=circle];\n");
    for s in 0..a.num_states() {
        let shape = if s == a.initial() { ", shape=doublecircle" } else { "" };
        let _ = writeln!(out, "  s{s} [label=\"{}\"{shape}];", dot_escape(a.name(s)));
    }
    for s in 0..a.num_states() {
        for (k, t) in a.transitions(s).iter().enumerate() {
            let label = dot_escape(&t.label.to_string());
            if let (true, Some(&u)) = (t.target.is_point(), t.target.support().next()) {
                let _ = writeln!(out, "  s{s} -> s{u} [label=\"{label}\"];");
                continue;
            }
            let _ = writeln!(out, "  p{s}_{k} [shape=point];");
            let _ = writeln!(out, "  s{s} -> p{s}_{k} [label=\"{label}\", arrowhead=none];");
            for (u, q) in t.target.iter() {
                let _ = writeln!(out, "  p{s}_{k} -> s{u} [label=\"{}\"];", format_fraction(q));
            }
        }
    }
    out.push_str("}\n");
    out
}

/// DOT digraph of a fully probabilistic automaton: each branching state
/// gets a point node whose edges carry `label p/q`. Truncated nodes are
/// drawn dashed.
pub fn render_fpa_dot(f: &FullyProbAutomaton) -> String {
    let mut out = String::from("digraph fpa {\n  rankdir=TB;\n  node [shape=circle];\n");
    for s in 0..f.num_states() {
        let mut attrs = String::new();
        if s == f.initial() {
            attrs.push_str(", shape=doublecircle");
        }
        if matches!(f.step(s), FpaStep::Truncated) {
            attrs.push_str(", style=dashed");
        }
        let _ = writeln!(out, "  s{s} [label=\"{}\"{attrs}];", dot_escape(f.name(s)));
    }
    for s in 0..f.num_states() {
        let FpaStep::Moves(moves) = f.step(s) else { continue };
        let single = moves.halt_mass().is_zero() && moves.iter().count() == 1;
        if single {
            let ((l, u), _) = moves.iter().next().expect("one move");
            let _ = writeln!(out, "  s{s} -> s{u} [label=\"{}\"];", dot_escape(&l.to_string()));
            continue;
        }
        let _ = writeln!(out, "  p{s} [shape=point];\n  s{s} -> p{s} [arrowhead=none];");
        for ((l, u), q) in moves.iter() {
            let _ = writeln!(out, "  p{s} -> s{u} [label=\"{} {}\"];", dot_escape(&l.to_string()), format_fraction(q));
        }
        if !moves.halt_mass().is_zero() {
            let _ = writeln!(out, "  h{s} [shape=point, color=gray];");
            let _ = writeln!(out, "  p{s} -> h{s} [label=\"halt {}\", style=dotted];", format_fraction(moves.halt_mass()));
        }
    }
    out.push_str("}\n");
    out
}

/// Whether `label` is usable in a `.pam` file.
pub fn printable_label(label: &ActionLabel) -> bool {
    match label.kind() {
        LabelKind::Internal => label.tag().is_none_or(is_ident),
        _ => is_ident(label.name()) && label.name() != "tau",
    }
}
