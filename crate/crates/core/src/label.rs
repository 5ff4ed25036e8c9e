//! Action labels.
//!
//! A label is a name together with a kind. Input and output labels carry the
//! CCS-style `?`/`!` suffix in their textual form. Internal labels print as
//! `tau`, or `tau[x]` when they carry a tag; tagged internal labels are the
//! markers left behind by hiding and by hand-shake synchronisation, so that
//! events such as "cryptographer 1 was told to pay" stay expressible.

use std::fmt;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelKind {
    External,
    Input,
    Output,
    Internal,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionLabel {
    name: Arc<str>,
    kind: LabelKind,
    tag: Option<Arc<str>>,
}

pub const TAU: &str = "tau";

impl ActionLabel {
    pub fn external(name: &str) -> Self {
        Self::with_kind(name, LabelKind::External)
    }

    pub fn input(name: &str) -> Self {
        Self::with_kind(name, LabelKind::Input)
    }

    pub fn output(name: &str) -> Self {
        Self::with_kind(name, LabelKind::Output)
    }

    /// The anonymous invisible action.
    pub fn tau() -> Self {
        Self { name: Arc::from(TAU), kind: LabelKind::Internal, tag: None }
    }

    /// Internal marker `tau[tag]`.
    pub fn marker(tag: &str) -> Self {
        Self { name: Arc::from(TAU), kind: LabelKind::Internal, tag: Some(Arc::from(tag)) }
    }

    fn with_kind(name: &str, kind: LabelKind) -> Self {
        Self { name: Arc::from(name), kind, tag: None }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn tag(&self) -> Option<&str> {
        self.tag.as_deref()
    }

    pub fn is_internal(&self) -> bool {
        self.kind == LabelKind::Internal
    }

    /// Channel name for hand-shake purposes: the name without `?`/`!`.
    /// Internal markers report their tag.
    pub fn base(&self) -> &str {
        match (&self.kind, &self.tag) {
            (LabelKind::Internal, Some(tag)) => tag,
            _ => &self.name,
        }
    }

    /// The label this one synchronises with under hand-shaking, if any.
    pub fn co_label(&self) -> Option<ActionLabel> {
        match self.kind {
            LabelKind::Input => Some(Self::output(&self.name)),
            LabelKind::Output => Some(Self::input(&self.name)),
            _ => None,
        }
    }

    /// Parses the textual form produced by `Display`.
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix("tau") {
            if rest.is_empty() {
                return Some(Self::tau());
            }
            let tag = rest.strip_prefix('[')?.strip_suffix(']')?;
            return is_ident(tag).then(|| Self::marker(tag));
        }
        let (name, kind) = if let Some(n) = text.strip_suffix('?') {
            (n, LabelKind::Input)
        } else if let Some(n) = text.strip_suffix('!') {
            (n, LabelKind::Output)
        } else {
            (text, LabelKind::External)
        };
        is_ident(name).then(|| Self::with_kind(name, kind))
    }
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, &self.tag) {
            (LabelKind::Internal, Some(tag)) => write!(f, "{}[{}]", self.name, tag),
            (LabelKind::Internal, None) | (LabelKind::External, _) => write!(f, "{}", self.name),
            (LabelKind::Input, _) => write!(f, "{}?", self.name),
            (LabelKind::Output, _) => write!(f, "{}!", self.name),
        }
    }
}

impl fmt::Debug for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Renders a trace as space-separated labels.
pub fn format_trace(trace: &[ActionLabel]) -> String {
    trace.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}
