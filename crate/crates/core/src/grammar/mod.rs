//! The guideline grammar model.
//!
//! A [`Guideline`] is a parsing expression grammar for one command whose rules
//! may carry GUI annotations: a rule is either a *flag* (a toggleable chunk of
//! the command line, identified across spellings by a shared id) or an
//! *argument* (a chunk of free text the user types into a box).
//!
//! Guidelines are immutable once compiled and can be shared freely between
//! threads; every parse owns its own memo table.

mod compile;
mod enumerate;
mod flags;
mod parse;
mod sample;

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use compile::{compile, CompileError};
pub use enumerate::{divergences, enumerate, grammar_alphabet, EnumerateError, Enumerator};
pub use flags::{flag_nodes, FlagNode};
pub use parse::{ParseError, ParseFailure, ParseOptions, ParseTree, Parser, Span};
pub use sample::{random_string, shortest_string};

/// A parsing expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Expr {
    Literal { text: String, case_sensitive: bool },
    Class(CharClass),
    Ref { name: String },
    Seq { items: Vec<Expr> },
    Choice { alts: Vec<Expr> },
    /// `min` is 0 for `*` and 1 for `+`.
    Repeat { expr: Box<Expr>, min: u8 },
    Optional { expr: Box<Expr> },
    Not { expr: Box<Expr> },
    And { expr: Box<Expr> },
    End,
}

impl Expr {
    pub fn lit(text: impl Into<String>) -> Self {
        Expr::Literal { text: text.into(), case_sensitive: true }
    }

    pub fn lit_ci(text: impl Into<String>) -> Self {
        Expr::Literal { text: text.into(), case_sensitive: false }
    }

    pub fn rule(name: impl Into<String>) -> Self {
        Expr::Ref { name: name.into() }
    }

    /// Builds a sequence, collapsing a single item to itself.
    pub fn seq(mut items: Vec<Expr>) -> Self {
        if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Expr::Seq { items }
        }
    }

    /// Builds an ordered choice, collapsing a single alternative to itself.
    pub fn choice(mut alts: Vec<Expr>) -> Self {
        if alts.len() == 1 {
            alts.pop().unwrap()
        } else {
            Expr::Choice { alts }
        }
    }

    pub fn star(self) -> Self {
        Expr::Repeat { expr: Box::new(self), min: 0 }
    }

    pub fn plus(self) -> Self {
        Expr::Repeat { expr: Box::new(self), min: 1 }
    }

    pub fn opt(self) -> Self {
        Expr::Optional { expr: Box::new(self) }
    }

    pub fn not(self) -> Self {
        Expr::Not { expr: Box::new(self) }
    }

    pub fn and(self) -> Self {
        Expr::And { expr: Box::new(self) }
    }

    /// Calls `f` on every rule name referenced from this expression.
    pub fn visit_refs<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Ref { name } => f(name),
            Expr::Seq { items } => items.iter().for_each(|e| e.visit_refs(f)),
            Expr::Choice { alts } => alts.iter().for_each(|e| e.visit_refs(f)),
            Expr::Repeat { expr, .. }
            | Expr::Optional { expr }
            | Expr::Not { expr }
            | Expr::And { expr } => expr.visit_refs(f),
            Expr::Literal { .. } | Expr::Class(_) | Expr::End => {}
        }
    }
}

/// A character class such as `[a-z0-9_]` or `[^ \t]`.
///
/// The empty negated class matches any character.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CharClass {
    pub ranges: Vec<(char, char)>,
    pub negated: bool,
}

impl CharClass {
    pub fn new(ranges: Vec<(char, char)>) -> Self {
        CharClass { ranges, negated: false }
    }

    pub fn negated(ranges: Vec<(char, char)>) -> Self {
        CharClass { ranges, negated: true }
    }

    pub fn any() -> Self {
        CharClass { ranges: Vec::new(), negated: true }
    }

    pub fn is_any(&self) -> bool {
        self.negated && self.ranges.is_empty()
    }

    pub fn matches(&self, c: char) -> bool {
        let inside = self.ranges.iter().any(|&(lo, hi)| lo <= c && c <= hi);
        inside != self.negated
    }
}

/// Metadata for a flag rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlagAnnotation {
    /// Rules sharing an id are spellings of the same logical flag.
    pub id: String,
    pub short_desc: String,
    pub long_desc: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Annotation {
    Flag(FlagAnnotation),
    /// The rule's text is typed by the user; the rule name is the placeholder.
    Argument,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rule {
    pub name: String,
    pub body: Expr,
    pub annotation: Option<Annotation>,
    /// Lexical rules match characters exactly. Other rules skip spaces and
    /// tabs before each literal, class, rule application and end-of-input.
    pub lexical: bool,
}

impl Rule {
    /// A rule with the default lexical mode for its name.
    pub fn new(name: impl Into<String>, body: Expr) -> Self {
        let name = name.into();
        let lexical = default_lexical(&name);
        Rule { name, body, annotation: None, lexical }
    }

    pub fn with_annotation(mut self, annotation: Annotation) -> Self {
        self.annotation = Some(annotation);
        self
    }

    pub fn flag(self, id: &str, short: &str, long: Option<&str>) -> Self {
        self.with_annotation(Annotation::Flag(FlagAnnotation {
            id: id.to_string(),
            short_desc: short.to_string(),
            long_desc: long.map(str::to_string),
        }))
    }

    pub fn argument(self) -> Self {
        self.with_annotation(Annotation::Argument)
    }

    pub fn lexical(mut self, lexical: bool) -> Self {
        self.lexical = lexical;
        self
    }

    pub fn flag_annotation(&self) -> Option<&FlagAnnotation> {
        match &self.annotation {
            Some(Annotation::Flag(f)) => Some(f),
            _ => None,
        }
    }

    pub fn is_argument(&self) -> bool {
        matches!(self.annotation, Some(Annotation::Argument))
    }
}

/// Rules whose name starts with a lowercase letter are lexical by default.
pub fn default_lexical(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_lowercase())
}

/// A compiled, validated guideline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guideline {
    pub command_name: String,
    pub rules: IndexMap<String, Rule>,
    pub start_rule: String,
    /// Builtin rules pulled in from the prelude.
    pub prelude_used: BTreeSet<String>,
}

impl Guideline {
    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.get(name)
    }

    pub fn start(&self) -> &Rule {
        &self.rules[&self.start_rule]
    }

    /// Parses `input` with the start rule, requiring full consumption.
    pub fn parse(&self, input: &str) -> Result<ParseTree, ParseFailure> {
        Parser::new(self).parse(input)
    }

    /// Parses `input` with `rule`, requiring full consumption.
    pub fn parse_rule(&self, rule: &str, input: &str) -> Result<ParseTree, ParseError> {
        Parser::new(self).parse_rule(rule, input)
    }

    pub fn accepts(&self, input: &str) -> bool {
        self.parse(input).is_ok()
    }

    /// Rules authored for this guideline, excluding builtins pulled from the prelude.
    pub fn user_rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.values().filter(|r| !self.prelude_used.contains(&r.name))
    }
}

impl fmt::Display for CharClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_any() {
            return f.write_str("any");
        }
        f.write_str("[")?;
        if self.negated {
            f.write_str("^")?;
        }
        for &(lo, hi) in &self.ranges {
            write_class_char(f, lo)?;
            if lo != hi {
                f.write_str("-")?;
                write_class_char(f, hi)?;
            }
        }
        f.write_str("]")
    }
}

fn write_class_char(f: &mut fmt::Formatter<'_>, c: char) -> fmt::Result {
    match c {
        '\\' => f.write_str("\\\\"),
        ']' => f.write_str("\\]"),
        '[' => f.write_str("\\["),
        '-' => f.write_str("\\-"),
        '^' => f.write_str("\\^"),
        '\n' => f.write_str("\\n"),
        '\t' => f.write_str("\\t"),
        '\r' => f.write_str("\\r"),
        c => write!(f, "{c}"),
    }
}

pub(crate) fn write_literal(f: &mut impl fmt::Write, text: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in text.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            '\r' => f.write_str("\\r")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Choice { .. } => 0,
            Expr::Seq { .. } => 1,
            Expr::Not { .. } | Expr::And { .. } => 2,
            Expr::Repeat { .. } | Expr::Optional { .. } => 3,
            _ => 4,
        }
    }

    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            f.write_str("(")?;
            self.fmt_at(f, 0)?;
            return f.write_str(")");
        }
        match self {
            Expr::Literal { text, case_sensitive } => {
                write_literal(f, text)?;
                if !case_sensitive {
                    f.write_str("i")?;
                }
                Ok(())
            }
            Expr::Class(class) => write!(f, "{class}"),
            Expr::Ref { name } => f.write_str(name),
            Expr::End => f.write_str("end"),
            Expr::Seq { items } => {
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    item.fmt_at(f, 2)?;
                }
                Ok(())
            }
            Expr::Choice { alts } => {
                for (i, alt) in alts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    alt.fmt_at(f, 1)?;
                }
                Ok(())
            }
            Expr::Not { expr } => {
                f.write_str("!")?;
                expr.fmt_at(f, 3)
            }
            Expr::And { expr } => {
                f.write_str("&")?;
                expr.fmt_at(f, 3)
            }
            Expr::Repeat { expr, min } => {
                expr.fmt_at(f, 4)?;
                f.write_str(if *min == 0 { "*" } else { "+" })
            }
            Expr::Optional { expr } => {
                expr.fmt_at(f, 4)?;
                f.write_str("?")
            }
        }
    }
}

/// Renders the expression in guideline source syntax.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, 0)
    }
}
