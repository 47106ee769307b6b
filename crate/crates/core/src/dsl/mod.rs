//! The `.guide` text format.
//!
//! Guidelines are written and repaired as text, so the format is line
//! oriented: each rule sits on its own line with its attributes on the lines
//! above it, which keeps search-and-replace edits local.
//!
//! ```text
//! command grep
//! start Grep
//!
//! Grep = "grep" Option* PATTERN FILE*
//!
//! @flag(id="ignore-case", short="ignore case", long="Ignore case distinctions.")
//! IgnoreCase = "-i" | "--ignore-case"
//!
//! @arg
//! PATTERN = quotedString | operand
//! ```

mod lint;
mod parser;
mod prelude;
mod replace;

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{compile, default_lexical, Annotation, CompileError, Guideline, Rule};

pub use lint::{lint_sequencing, LintFinding, LintKind};
pub use prelude::{prelude_names, prelude_rules, PRELUDE_SOURCE};
pub use replace::{apply_replace, SearchNotFound};

/// A syntax error in guideline source. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("line {line}, column {col}: {message}")]
pub struct DslSyntaxError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("syntax error at {0}")]
    Syntax(#[from] DslSyntaxError),
    #[error("invalid grammar{}: {error}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Compile { error: CompileError, line: Option<usize> },
}

/// Parses guideline source and compiles it, pulling in any prelude rules it
/// references.
pub fn load(text: &str) -> Result<Guideline, LoadError> {
    let doc = parser::parse_document(text)?;
    let Some((command, _)) = doc.command.clone() else {
        return Err(DslSyntaxError { line: 1, col: 1, message: "missing `command <name>` directive".into() }.into());
    };
    let start = match &doc.start {
        Some((name, _)) => name.clone(),
        None => match doc.rules.first() {
            Some(r) => r.rule.name.clone(),
            None => {
                return Err(DslSyntaxError { line: 1, col: 1, message: "guideline defines no rules".into() }.into())
            }
        },
    };

    let builtins = prelude_names();
    let mut lines: HashMap<String, usize> = HashMap::new();
    let mut rules: Vec<Rule> = Vec::with_capacity(doc.rules.len());
    for parsed in doc.rules {
        let is_builtin = builtins.contains(parsed.rule.name.as_str());
        if is_builtin && !parsed.is_override {
            return Err(DslSyntaxError {
                line: parsed.line,
                col: 1,
                message: format!("rule `{}` redefines a builtin; mark it with @override", parsed.rule.name),
            }
            .into());
        }
        if parsed.is_override && !is_builtin {
            return Err(DslSyntaxError {
                line: parsed.line,
                col: 1,
                message: format!("@override on `{}`, which is not a builtin", parsed.rule.name),
            }
            .into());
        }
        lines.entry(parsed.rule.name.clone()).or_insert(parsed.line);
        rules.push(parsed.rule);
    }

    let prelude_used = pull_prelude(&mut rules);
    let mut g = compile(rules, &start, &command).map_err(|error| {
        let line = match &error {
            CompileError::UnresolvedRuleRef { referenced_from: r, .. }
            | CompileError::EmptyMatchRepeat(r)
            | CompileError::DegenerateExpr(r)
            | CompileError::EmptyArgument(r)
            | CompileError::EmptyFlagId(r)
            | CompileError::DuplicateRule(r) => lines.get(r).copied(),
            CompileError::LeftRecursion(cycle) => cycle.first().and_then(|r| lines.get(r).copied()),
            CompileError::MissingStartRule(_) => doc.start.as_ref().map(|(_, l)| *l),
        };
        LoadError::Compile { error, line }
    })?;
    g.prelude_used = prelude_used;
    Ok(g)
}

/// Appends the prelude rules transitively referenced by `rules`.
fn pull_prelude(rules: &mut Vec<Rule>) -> BTreeSet<String> {
    let prelude = prelude_rules();
    let mut defined: BTreeSet<String> = rules.iter().map(|r| r.name.clone()).collect();
    let mut used = BTreeSet::new();
    let mut queue: Vec<String> = Vec::new();
    for r in rules.iter() {
        r.body.visit_refs(&mut |n| queue.push(n.to_string()));
    }
    while let Some(name) = queue.pop() {
        if defined.contains(&name) {
            continue;
        }
        if let Some(rule) = prelude.iter().find(|r| r.name == name) {
            defined.insert(name.clone());
            used.insert(name);
            rule.body.visit_refs(&mut |n| queue.push(n.to_string()));
            rules.push(rule.clone());
        }
    }
    used
}

/// Canonical source for `g`: header, then one rule per line with its
/// attributes above it. Prelude rules are omitted.
pub fn serialize(g: &Guideline) -> String {
    let builtins = prelude_names();
    let mut out = String::new();
    let _ = writeln!(out, "command {}", g.command_name);
    let _ = writeln!(out, "start {}", g.start_rule);
    for rule in g.user_rules() {
        out.push('\n');
        match &rule.annotation {
            Some(Annotation::Flag(flag)) => {
                out.push_str("@flag(id=");
                push_quoted(&mut out, &flag.id);
                out.push_str(", short=");
                push_quoted(&mut out, &flag.short_desc);
                if let Some(long) = &flag.long_desc {
                    out.push_str(", long=");
                    push_quoted(&mut out, long);
                }
                out.push_str(")\n");
            }
            Some(Annotation::Argument) => out.push_str("@arg\n"),
            None => {}
        }
        if rule.lexical != default_lexical(&rule.name) {
            out.push_str(if rule.lexical { "@lexical\n" } else { "@syntactic\n" });
        }
        if builtins.contains(rule.name.as_str()) {
            out.push_str("@override\n");
        }
        let _ = writeln!(out, "{} = {}", rule.name, rule.body);
    }
    out
}

fn push_quoted(out: &mut String, s: &str) {
    let _ = crate::grammar::write_literal(out, s);
}
