//! Two-level GUI specs derived from guidelines, and the state that keeps a
//! command's text and its form view in step.
//!
//! [`flatten`] turns a guideline into a [`GuiSpec`]: a list of top-level
//! command forms ([`Alternative`]) plus the flag groups that can be toggled in
//! them. [`extract_state`] reads a command into a [`GuiState`] and
//! [`serialize_state`] writes one back out.

mod edit;
mod extract;
mod flatten;
mod quote;
mod random;
mod render;

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Expr, ParseFailure};

pub use edit::{search_flags, select_alternative, set_slot, toggle_flag};
pub use extract::extract_state;
pub use flatten::{flatten, DEFAULT_ALT_CAP};
pub use quote::{needs_quoting, quote};
pub use random::random_state;
pub use render::serialize_state;

/// How a rule participates in the form view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleRole {
    /// A flag-annotated rule: one surface form of a flag group.
    Flag,
    /// An argument-annotated rule: a text slot.
    Arg,
    /// A bundle of single-letter flags behind one prefix, like `-lah`.
    Cluster,
    /// Unannotated text with no further structure worth showing.
    Implicit,
    /// Structure that is inlined into the surrounding template.
    Expand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotKind {
    Arg,
    Implicit,
    /// Free text covering a repetition the form view cannot break apart.
    Run,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub id: String,
    /// Rule name the value must match.
    pub placeholder: String,
    pub kind: SlotKind,
    pub list: bool,
    pub optional: bool,
    /// Written directly after the previous piece, with no space.
    pub glued: bool,
    /// The repeated expression, for `Run` slots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    /// Flag ids that may be toggled here.
    pub flags: Vec<String>,
    /// Positional slots that may be interleaved with the flags.
    pub operands: Vec<SlotSpec>,
    /// More than one flag may appear.
    pub repeat: bool,
    /// At least one flag must appear.
    pub required: bool,
    pub glued: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Piece {
    Fixed { text: String, glued: bool },
    Slot(SlotSpec),
    Zone(Zone),
    /// Pieces that are present or absent together.
    Group { pieces: Vec<Piece>, glued: bool },
}

impl Piece {
    pub fn glued(&self) -> bool {
        match self {
            Piece::Fixed { glued, .. } | Piece::Group { glued, .. } => *glued,
            Piece::Slot(s) => s.glued,
            Piece::Zone(z) => z.glued,
        }
    }

    pub(crate) fn set_glued(&mut self, value: bool) {
        match self {
            Piece::Fixed { glued, .. } | Piece::Group { glued, .. } => *glued = value,
            Piece::Slot(s) => s.glued = value,
            Piece::Zone(z) => z.glued = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alternative {
    pub id: usize,
    /// Human-readable synopsis, e.g. `grep [OPTION]... PATTERN [FILE]...`.
    pub label: String,
    pub template: Vec<Piece>,
}

impl Alternative {
    /// Every slot in the template, zone operands included.
    pub fn slots(&self) -> Vec<&SlotSpec> {
        let mut out = Vec::new();
        collect_slots(&self.template, &mut out);
        out
    }

    pub fn zones(&self) -> Vec<&Zone> {
        let mut out = Vec::new();
        collect_zones(&self.template, &mut out);
        out
    }

    pub fn allows_flag(&self, id: &str) -> bool {
        self.zones().iter().any(|z| z.flags.iter().any(|f| f == id))
    }
}

pub(crate) fn collect_slots<'a>(pieces: &'a [Piece], out: &mut Vec<&'a SlotSpec>) {
    for p in pieces {
        match p {
            Piece::Slot(s) => out.push(s),
            Piece::Zone(z) => out.extend(z.operands.iter()),
            Piece::Group { pieces, .. } => collect_slots(pieces, out),
            Piece::Fixed { .. } => {}
        }
    }
}

fn collect_zones<'a>(pieces: &'a [Piece], out: &mut Vec<&'a Zone>) {
    for p in pieces {
        match p {
            Piece::Zone(z) => out.push(z),
            Piece::Group { pieces, .. } => collect_zones(pieces, out),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterForm {
    pub prefix: String,
    pub member: String,
}

/// One spelling of a flag: a top-level alternative of a flag rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceForm {
    pub rule: String,
    pub alt: usize,
    pub rendering: String,
    pub template: Vec<Piece>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterForm>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagGroup {
    pub id: String,
    pub short_desc: String,
    pub long_desc: Option<String>,
    pub forms: Vec<SurfaceForm>,
    pub embedded_slots: Vec<SlotSpec>,
}

impl FlagGroup {
    pub fn form_index(&self, rule: &str, alt: usize) -> Option<usize> {
        self.forms.iter().position(|f| f.rule == rule && f.alt == alt)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiSpec {
    pub command_name: String,
    pub alternatives: Vec<Alternative>,
    pub flag_groups: Vec<FlagGroup>,
    pub rule_roles: BTreeMap<String, RuleRole>,
}

impl GuiSpec {
    pub fn group(&self, id: &str) -> Option<&FlagGroup> {
        self.flag_groups.iter().find(|g| g.id == id)
    }

    pub fn role(&self, rule: &str) -> Option<RuleRole> {
        self.rule_roles.get(rule).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SlotValue {
    Single(String),
    List(Vec<String>),
}

impl SlotValue {
    pub fn is_empty(&self) -> bool {
        match self {
            SlotValue::Single(s) => s.is_empty(),
            SlotValue::List(v) => v.is_empty(),
        }
    }

    pub fn items(&self) -> Vec<&str> {
        match self {
            SlotValue::Single(s) => vec![s.as_str()],
            SlotValue::List(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

impl From<&str> for SlotValue {
    fn from(s: &str) -> Self {
        SlotValue::Single(s.to_string())
    }
}

/// A flag's entry in a [`GuiState`]. Turning a flag off keeps the entry,
/// so turning it back on restores its position, spelling and values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlagToggle {
    pub on: bool,
    /// Index into the group's `forms`.
    pub form: usize,
    pub values: BTreeMap<String, SlotValue>,
    /// Text as it appeared in a parsed command, reused while unedited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

impl FlagToggle {
    pub fn new(form: usize) -> Self {
        FlagToggle { on: true, form, values: BTreeMap::new(), raw: None }
    }
}

impl PartialEq for FlagToggle {
    fn eq(&self, other: &Self) -> bool {
        self.on == other.on && self.form == other.form && self.values == other.values
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GuiState {
    pub alternative: usize,
    /// Flags in first-toggle order.
    pub toggles: IndexMap<String, FlagToggle>,
    pub slots: BTreeMap<String, SlotValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
}

impl GuiState {
    pub fn new(alternative: usize) -> Self {
        GuiState { alternative, ..Default::default() }
    }

    pub fn is_on(&self, id: &str) -> bool {
        self.toggles.get(id).is_some_and(|t| t.on)
    }

    /// Ids of flags that are on, in rendering order.
    pub fn active_flags(&self) -> Vec<&str> {
        self.toggles.iter().filter(|(_, t)| t.on).map(|(id, _)| id.as_str()).collect()
    }
}

/// States are equal when they select the same alternative, the same flags
/// with the same spellings and values, and the same slot values. Toggle
/// order, parked flags and cached text are presentation details.
impl PartialEq for GuiState {
    fn eq(&self, other: &Self) -> bool {
        let on = |s: &GuiState| -> BTreeMap<String, FlagToggle> {
            s.toggles.iter().filter(|(_, t)| t.on).map(|(k, t)| (k.clone(), t.clone())).collect()
        };
        self.alternative == other.alternative && self.slots == other.slots && on(self) == on(other)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlattenError {
    #[error("the guideline expands to {count} command forms, more than the limit of {cap}")]
    AlternativeExplosion { count: u64, cap: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("{0}")]
    Parse(ParseFailure),
    #[error("flag `{0}` appears more than once")]
    DuplicateFlag(String),
    #[error("the command parses but matches none of the command forms")]
    NoAlternative,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("`{0}` needs a value")]
    MissingRequiredSlot(String),
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("flag `{0}` is not available in the selected command form")]
    NotInAlternative(String),
}
