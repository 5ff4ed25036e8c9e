pub mod algebra;
pub mod anonymity;
pub mod automaton;
pub mod cli;
pub mod bisim;
pub mod dc;
pub mod dist;
pub mod dsl;
pub mod fpa;
pub mod label;
pub mod measure;
pub mod models;
pub mod path;
pub mod rational;
pub mod sched;

pub use automaton::{AutomatonBuilder, ProbAutomaton, Transition};
pub use dist::{DistError, Distribution, SubDistribution};
pub use fpa::{FpaStep, FullyProbAutomaton};
pub use label::{ActionLabel, LabelKind};
pub use path::{Path, Step};
pub use rational::Rational;
