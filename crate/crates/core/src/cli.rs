//! The `probanon` command line.
//!
//! Exit codes: 0 anonymous, proved or valid; 1 violation found; 2
//! inconclusive; 3 input error; 4 resource guard tripped.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use num_traits::Zero;
use serde_json::{json, Value};

use crate::anonymity::{
    check_pa, find_interfering, AnonError, AnonymitySpec, Status, Strategy, Verdict,
};
use crate::automaton::ProbAutomaton;
use crate::dc::{with_prior, DiningCryptographers, Master};
use crate::dsl::{parse_model, print_model, render_dot, render_fpa_dot, AutomatonDef, Elaborated, ModelBundle, SchedulerDef};
use crate::label::format_trace;
use crate::measure::{project, PathMeasure};
use crate::rational::{format_fraction, parse_fraction, Rational};
use crate::sched::{unfold, Guard, Horizon, ObsMode, ObservationMap, SchedContext, SchedError, Scheduler};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_GUARD: i32 = 4;

/// Version of the JSON report layout; bumped with the `.pam` format.
pub const REPORT_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "probanon", version, about = "Exact anonymity checking for probabilistic automata")]
struct Cli {
    /// Print a JSON report on standard output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Emit {
    Pam,
    Dot,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Enumerate,
    Closure,
    Sample,
    Automorphism,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Collapse,
    Strict,
}

impl From<ModeArg> for ObsMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Collapse => ObsMode::Collapse,
            ModeArg::Strict => ObsMode::Strict,
        }
    }
}

#[derive(clap::Args, Debug)]
struct ModelArgs {
    file: PathBuf,
    /// Replace the automaton named `Master` by a probabilistic choice with
    /// these weights (`p/q,...`, branch 0 first) or `uniform`.
    #[arg(long)]
    master_prior: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and elaborate a model.
    Validate {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Print the elaborated system as `.pam` or DOT.
    Compose {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "pam")]
        emit: Emit,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the bisimilarity partition of the observation image.
    Bisim {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "collapse")]
        obs_mode: ModeArg,
    },
    /// Event and conditional probabilities under a named scheduler.
    Measure {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        scheduler: String,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, value_enum, default_value = "collapse")]
        obs_mode: ModeArg,
        /// Write the automaton under the scheduler as DOT.
        #[arg(long, value_enum)]
        emit: Option<Emit>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check anonymity over admissible schedulers.
    Check {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "closure")]
        strategy: StrategyArg,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "collapse")]
        obs_mode: ModeArg,
        #[arg(long, default_value_t = Guard::default().max_schedulers)]
        max_schedulers: usize,
    },
    /// Search unrestricted schedulers for one that breaks anonymity.
    Counterexample {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = Guard::default().max_schedulers)]
        max_schedulers: usize,
        /// Write the automaton under the found scheduler as DOT.
        #[arg(long, value_enum)]
        emit: Option<Emit>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a built-in model.
    Gen {
        #[command(subcommand)]
        model: GenModel,
    },
}

#[derive(Subcommand, Debug)]
enum GenModel {
    /// Dining cryptographers.
    Dc {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long)]
        master_prior: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<AnonError> for Failure {
    fn from(e: AnonError) -> Self {
        match e {
            AnonError::Sched(SchedError::ExplosionGuard { .. }) => Self { code: EXIT_GUARD, message: e.to_string() },
            _ => Self::input(e.to_string()),
        }
    }
}

impl From<SchedError> for Failure {
    fn from(e: SchedError) -> Self {
        AnonError::from(e).into()
    }
}

/// Stable report layout; every probability is an exact fraction string.
#[derive(Serialize)]
struct RunReport {
    report_version: u32,
    tool: &'static str,
    version: &'static str,
    command: String,
    inputs: BTreeMap<String, String>,
    result: Value,
    elapsed_ms: u128,
}

struct Outcome {
    code: i32,
    text: String,
    result: Value,
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code, writing to the process's standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let started = Instant::now();
    let (command, inputs) = describe(&cli.command);
    match execute(&cli.command) {
        Ok(o) => {
            if cli.json {
                let report = RunReport {
                    report_version: REPORT_VERSION,
                    tool: "probanon",
                    version: env!("CARGO_PKG_VERSION"),
                    command,
                    inputs,
                    result: o.result,
                    elapsed_ms: started.elapsed().as_millis(),
                };
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("serializable"));
            } else {
                let _ = write!(out, "{}", o.text);
            }
            o.code
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn describe(c: &Command) -> (String, BTreeMap<String, String>) {
    let mut inputs = BTreeMap::new();
    let mut file = |m: &ModelArgs| {
        inputs.insert("file".to_string(), m.file.display().to_string());
        if let Some(p) = &m.master_prior {
            inputs.insert("master_prior".to_string(), p.clone());
        }
    };
    let name = match c {
        Command::Validate { model } => {
            file(model);
            "validate"
        }
        Command::Compose { model, .. } => {
            file(model);
            "compose"
        }
        Command::Bisim { model, .. } => {
            file(model);
            "bisim"
        }
        Command::Measure { model, scheduler, horizon, .. } => {
            file(model);
            inputs.insert("scheduler".into(), scheduler.clone());
            if let Some(h) = horizon {
                inputs.insert("horizon".into(), h.to_string());
            }
            "measure"
        }
        Command::Check { model, strategy, horizon, obs_mode, .. } => {
            file(model);
            inputs.insert("strategy".into(), format!("{strategy:?}").to_lowercase());
            inputs.insert("obs_mode".into(), format!("{obs_mode:?}").to_lowercase());
            if let Some(h) = horizon {
                inputs.insert("horizon".into(), h.to_string());
            }
            "check"
        }
        Command::Counterexample { model, horizon, .. } => {
            file(model);
            inputs.insert("horizon".into(), horizon.to_string());
            "counterexample"
        }
        Command::Gen { model: GenModel::Dc { n, .. } } => {
            inputs.insert("n".into(), n.to_string());
            "gen dc"
        }
    };
    (name.to_string(), inputs)
}

fn parse_prior(text: &str, branches: usize) -> Result<Vec<Rational>, Failure> {
    if text == "uniform" {
        return Ok(vec![Rational::new(1.into(), (branches as i64).into()); branches]);
    }
    let weights: Vec<Rational> = text
        .split(',')
        .map(|w| parse_fraction(w.trim()).ok_or_else(|| Failure::input(format!("bad weight `{w}` in --master-prior"))))
        .collect::<Result<_, _>>()?;
    if weights.len() != branches {
        return Err(Failure::input(format!("--master-prior needs {branches} weights, got {}", weights.len())));
    }
    Ok(weights)
}

fn load(m: &ModelArgs) -> Result<(ModelBundle, Elaborated), Failure> {
    let bytes = std::fs::read(&m.file).map_err(|e| Failure::input(format!("{}: {e}", m.file.display())))?;
    let text = String::from_utf8(bytes).map_err(|_| Failure::input(format!("{}: not UTF-8", m.file.display())))?;
    let mut bundle = parse_model(&text).map_err(|e| Failure::input(format!("{}:{e}", m.file.display())))?;
    if let Some(prior) = &m.master_prior {
        let def = bundle
            .automata
            .iter_mut()
            .find(|a| a.name == "Master")
            .ok_or_else(|| Failure::input("--master-prior needs an automaton named Master"))?;
        let master = def.build().map_err(|e| Failure::input(e.to_string()))?;
        let weights = parse_prior(prior, master.transitions(master.initial()).len())?;
        let changed = with_prior(&master, &weights).ok_or_else(|| Failure::input("bad --master-prior weights"))?;
        *def = AutomatonDef::from_automaton("Master", &changed);
    }
    let elaborated = bundle.elaborate().map_err(|e| Failure::input(format!("{}:{e}", m.file.display())))?;
    Ok((bundle, elaborated))
}

fn spec_of(e: &Elaborated) -> Result<&AnonymitySpec, Failure> {
    e.spec.as_ref().ok_or_else(|| Failure::input("the model has no spec block"))
}

/// Longest path length when the automaton is acyclic.
fn depth(a: &ProbAutomaton) -> Option<usize> {
    if !a.is_acyclic() {
        return None;
    }
    let mut memo = vec![None; a.num_states()];
    fn go(a: &ProbAutomaton, s: usize, memo: &mut Vec<Option<usize>>) -> usize {
        if let Some(d) = memo[s] {
            return d;
        }
        let succ: Vec<usize> = a.successors(s).collect();
        let d = succ.into_iter().map(|t| 1 + go(a, t, memo)).max().unwrap_or(0);
        memo[s] = Some(d);
        d
    }
    Some(go(a, a.initial(), &mut memo))
}

fn horizon_for(a: &ProbAutomaton, given: Option<usize>) -> Result<usize, Failure> {
    given.or_else(|| depth(a)).ok_or_else(|| Failure::input("the automaton is cyclic; pass --horizon"))
}

fn write_or_print(path: &Option<PathBuf>, content: &str, text: &mut String) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            text.push_str(content);
            Ok(())
        }
    }
}

fn status_code(s: Status) -> i32 {
    match s {
        Status::AnonymousProved | Status::AnonymousOnCheckedClass => EXIT_OK,
        Status::Violation => EXIT_VIOLATION,
        Status::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn verdict_text(v: &Verdict) -> String {
    let mut t = format!("{}\ncoverage: {}\n", v.status, v.coverage);
    if let Some(w) = &v.witness {
        t.push_str(&format!("witness: {w}\n"));
        if let Some(s) = &w.scheduler {
            t.push_str("scheduler:\n");
            t.push_str(s);
        }
    }
    t
}

fn resolve_scheduler(bundle: &ModelBundle, a: &ProbAutomaton, name: &str) -> Result<Scheduler, Failure> {
    match bundle.scheduler(name) {
        Some(SchedulerDef::Priority(order)) => Ok(Scheduler::priority(a, order)),
        Some(SchedulerDef::Table(t)) => Ok(t.clone()),
        None => Err(Failure::input(format!("no scheduler named {name}"))),
    }
}

fn execute(c: &Command) -> Result<Outcome, Failure> {
    match c {
        Command::Validate { model } => {
            let (_, e) = load(model)?;
            let a = e.automaton();
            let report = a.validate();
            let result = json!({
                "valid": report.is_valid(),
                "states": a.num_states(),
                "transitions": a.num_transitions(),
                "acyclic": a.is_acyclic(),
                "problems": report.violations.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>(),
            });
            let text = format!(
                "{}: {} states, {} transitions{}\n",
                if report.is_valid() { "valid" } else { "invalid" },
                a.num_states(),
                a.num_transitions(),
                if a.is_acyclic() { ", acyclic" } else { "" }
            );
            Ok(Outcome { code: if report.is_valid() { EXIT_OK } else { EXIT_INPUT }, text, result })
        }
        Command::Compose { model, emit, output } => {
            let (bundle, e) = load(model)?;
            let content = match emit {
                Emit::Dot => render_dot(e.automaton()),
                Emit::Pam => {
                    let name = bundle.system.as_ref().map_or("System", |s| s.name.as_str());
                    let flat = ModelBundle {
                        automata: vec![AutomatonDef::from_automaton(name, e.automaton())],
                        spec: bundle.spec.clone(),
                        ..ModelBundle::default()
                    };
                    print_model(&flat)
                }
            };
            let mut text = String::new();
            write_or_print(output, &content, &mut text)?;
            let result = json!({ "states": e.automaton().num_states(), "output": output.as_ref().map(|p| p.display().to_string()) });
            Ok(Outcome { code: EXIT_OK, text, result })
        }
        Command::Bisim { model, obs_mode } => {
            let (_, e) = load(model)?;
            let a = e.automaton();
            let observable = e.spec.as_ref().map(|s| s.observable.clone()).unwrap_or_default();
            let ctx = SchedContext::new(a, ObservationMap::new((*obs_mode).into(), observable));
            let blocks: Vec<Vec<String>> = ctx
                .partition
                .blocks()
                .iter()
                .map(|b| b.iter().map(|&s| a.name(s).to_string()).collect())
                .collect();
            let mut text = format!("{} classes over {} states\n", blocks.len(), a.num_states());
            for (i, b) in blocks.iter().enumerate() {
                text.push_str(&format!("{i}: {}\n", b.join(" ")));
            }
            Ok(Outcome { code: EXIT_OK, text, result: json!({ "classes": blocks }) })
        }
        Command::Measure { model, scheduler, horizon, obs_mode, emit, output } => {
            let (bundle, e) = load(model)?;
            let a = e.automaton();
            let spec = spec_of(&e)?;
            let h = horizon_for(a, *horizon)?;
            let xi = resolve_scheduler(&bundle, a, scheduler)?;
            let ctx = SchedContext::new(a, ObservationMap::new((*obs_mode).into(), spec.observable.clone()));
            let run = unfold(&ctx, &xi, Horizon::Bounded(h))?;
            let mut text = String::new();
            if matches!(emit, Some(Emit::Dot)) {
                write_or_print(output, &render_fpa_dot(&run.fpa), &mut text)?;
            }
            let pm = PathMeasure::new(&run.fpa).map_err(|e| Failure::input(e.to_string()))?;
            measure_report(&pm, spec, &xi, h, text)
        }
        Command::Check { model, strategy, horizon, samples, seed, obs_mode, max_schedulers } => {
            let (bundle, e) = load(model)?;
            let a = e.automaton();
            let spec = spec_of(&e)?;
            let guard = Guard { max_schedulers: *max_schedulers, ..Guard::default() };
            let obs = ObservationMap::new((*obs_mode).into(), spec.observable.clone());
            let verdict = match strategy {
                StrategyArg::Enumerate => {
                    check_pa(a, spec, &obs, &Strategy::Enumerate { horizon: horizon_for(a, *horizon)? }, guard)?
                }
                StrategyArg::Closure => {
                    check_pa(a, spec, &obs, &Strategy::Closure { horizon: horizon_for(a, *horizon)? }, guard)?
                }
                StrategyArg::Sample => {
                    let s = Strategy::Sample { count: *samples, horizon: horizon_for(a, *horizon)?, seed: *seed };
                    check_pa(a, spec, &obs, &s, guard)?
                }
                StrategyArg::Automorphism => automorphism_verdict(&bundle, &e, spec)?,
            };
            Ok(Outcome {
                code: status_code(verdict.status),
                text: verdict_text(&verdict),
                result: serde_json::to_value(&verdict).expect("serializable"),
            })
        }
        Command::Counterexample { model, horizon, max_schedulers, emit, output } => {
            let (_, e) = load(model)?;
            let a = e.automaton();
            let spec = spec_of(&e)?;
            let guard = Guard { max_schedulers: *max_schedulers, ..Guard::default() };
            match find_interfering(a, spec, *horizon, guard)? {
                None => {
                    let v = Verdict {
                        status: Status::AnonymousOnCheckedClass,
                        witness: None,
                        coverage: format!("all deterministic unrestricted schedulers up to horizon {horizon}"),
                        checked: 0,
                    };
                    Ok(Outcome { code: EXIT_OK, text: verdict_text(&v), result: serde_json::to_value(&v).expect("ok") })
                }
                Some((xi, w)) => {
                    let mut text = String::new();
                    if matches!(emit, Some(Emit::Dot)) {
                        let ctx = SchedContext::new(a, ObservationMap::strict([]));
                        let run = unfold(&ctx, &xi, Horizon::Bounded(*horizon))?;
                        write_or_print(output, &render_fpa_dot(&run.fpa), &mut text)?;
                    }
                    let v = Verdict {
                        status: Status::Violation,
                        witness: Some(w),
                        coverage: format!("deterministic unrestricted schedulers, horizon {horizon}"),
                        checked: 1,
                    };
                    text.push_str(&verdict_text(&v));
                    Ok(Outcome { code: EXIT_VIOLATION, text, result: serde_json::to_value(&v).expect("ok") })
                }
            }
        }
        Command::Gen { model: GenModel::Dc { n, master_prior, output } } => {
            if *n < 3 {
                return Err(Failure::input("gen dc needs --n 3 or more"));
            }
            let master = match master_prior {
                None => Master::Nondeterministic,
                Some(p) => Master::Prior(parse_prior(p, n + 1)?),
            };
            let dc = DiningCryptographers::new(*n, master);
            let mut content = format!(
                "# Dining cryptographers, n = {n}. Generated by `probanon gen dc`.\n\
                 # Cryptographer i reads coins i and i+1 and announces a_i! (agree) or d_i! (disagree).\n"
            );
            content.push_str(&print_model(&dc.bundle()));
            let mut text = String::new();
            write_or_print(output, &content, &mut text)?;
            let result = json!({ "n": n, "states": dc.automaton().num_states(), "output": output.as_ref().map(|p| p.display().to_string()) });
            Ok(Outcome { code: EXIT_OK, text, result })
        }
    }
}

fn measure_report(
    pm: &PathMeasure,
    spec: &AnonymitySpec,
    xi: &Scheduler,
    horizon: usize,
    mut text: String,
) -> Result<Outcome, Failure> {
    let mut per_user: Vec<(Rational, BTreeMap<String, Rational>)> = Vec::new();
    let mut total_a = Rational::zero();
    for (i, _) in spec.users.iter().enumerate() {
        let mut mass = Rational::zero();
        let mut obs: BTreeMap<String, Rational> = BTreeMap::new();
        for (p, m) in &pm.paths {
            let trace = p.trace();
            if spec.events[i].eval(&trace) {
                mass += m;
                *obs.entry(format_trace(&project(&trace, &spec.observable))).or_insert_with(Rational::zero) += m;
            }
        }
        total_a += &mass;
        per_user.push((mass, obs));
    }
    text.push_str(&format!(
        "scheduler: {:?}, horizon {horizon}\ncomplete paths: {}, halt mass {}, truncated mass {}\nP[A] = {}\n",
        xi.kind(),
        pm.paths.len(),
        format_fraction(&pm.halt_mass),
        format_fraction(&pm.truncated_mass),
        format_fraction(&total_a)
    ));
    let mut users_json = Vec::new();
    for (i, (mass, obs)) in per_user.iter().enumerate() {
        text.push_str(&format!("P[A_{}] = {}\n", spec.users[i], format_fraction(mass)));
        let mut cond = serde_json::Map::new();
        if !mass.is_zero() {
            for (o, m) in obs {
                let q = m / mass;
                text.push_str(&format!("  P[{o} | A_{}] = {}\n", spec.users[i], format_fraction(&q)));
                cond.insert(o.clone(), Value::String(format_fraction(&q)));
            }
        }
        users_json.push(json!({ "user": spec.users[i], "probability": format_fraction(mass), "conditional": cond }));
    }
    let result = json!({
        "complete_paths": pm.paths.len(),
        "halt_mass": format_fraction(&pm.halt_mass),
        "truncated_mass": format_fraction(&pm.truncated_mass),
        "any_user": format_fraction(&total_a),
        "users": users_json,
    });
    Ok(Outcome { code: EXIT_OK, text, result })
}

fn automorphism_verdict(bundle: &ModelBundle, e: &Elaborated, spec: &AnonymitySpec) -> Result<Verdict, Failure> {
    let mut maps = BTreeMap::new();
    for sym in &bundle.symmetries {
        let idx = |u: &str| spec.user_index(u).ok_or_else(|| Failure::input(format!("symmetry names unknown user {u}")));
        let (i, j) = (idx(&sym.users.0)?, idx(&sym.users.1)?);
        match bundle.symmetry_map(e, sym) {
            Ok(m) => {
                maps.insert((i, j), m);
            }
            Err(why) => {
                return Ok(Verdict {
                    status: Status::Inconclusive,
                    witness: None,
                    coverage: format!("symmetry for users {} and {}: {why}", sym.users.0, sym.users.1),
                    checked: 0,
                })
            }
        }
    }
    let a = e.automaton();
    Ok(check_pa(a, spec, &ObservationMap::collapse(spec.observable.clone()), &Strategy::Automorphism(maps), Guard::default())?)
}
