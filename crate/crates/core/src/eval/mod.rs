//! Parseability and recreatability over a corpus of real invocations.
//!
//! The corpus holds one shell line per record. Lines are split into simple
//! commands, stripped of redirections and leading assignments, filtered to
//! the commands under test and deduplicated. Recreatability is checked
//! automatically: an invocation counts when its GUI state renders back to a
//! command with the same form, flags and values.

mod shell;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Guideline, ParseFailure};
use crate::gui::{extract_state, flatten, serialize_state, ExtractError, FlattenError, GuiSpec, GuiState, SlotValue, DEFAULT_ALT_CAP};

pub use shell::split_commands;

pub const DEFAULT_SAMPLE_SIZE: usize = 10;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusInvocation {
    pub command: String,
    /// The normalized simple command.
    pub text: String,
    pub source_line: String,
    /// 1-based line number in the corpus file.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("corpus line {line}: {message}")]
pub struct CorpusFormatError {
    pub line: usize,
    pub message: String,
}

/// Normalized, deduplicated invocations of `commands` (all commands when
/// empty), in order of first appearance.
pub fn parse_corpus(text: &str, commands: &[&str]) -> Result<Vec<CorpusInvocation>, CorpusFormatError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let cmds = split_commands(line).map_err(|message| CorpusFormatError { line: k + 1, message })?;
        for cmd in cmds {
            let name = cmd.split(' ').next().unwrap_or_default().to_string();
            if !commands.is_empty() && !commands.contains(&name.as_str()) {
                continue;
            }
            if seen.insert(cmd.clone()) {
                out.push(CorpusInvocation { command: name, text: cmd, source_line: line.to_string(), line: k + 1 });
            }
        }
    }
    Ok(out)
}

pub fn load_corpus(path: &Path, commands: &[&str]) -> Result<Vec<CorpusInvocation>, CorpusFormatError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CorpusFormatError { line: 0, message: format!("{}: {e}", path.display()) })?;
    parse_corpus(&text, commands)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedParse {
    pub invocation: String,
    pub failure: ParseFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseRate {
    pub total: usize,
    pub parseable: usize,
    /// 1.0 when there are no invocations.
    pub rate: f64,
    pub failures: Vec<FailedParse>,
}

pub fn parse_rate<S: AsRef<str>>(g: &Guideline, invocations: &[S]) -> ParseRate {
    let failures: Vec<FailedParse> = invocations
        .iter()
        .filter_map(|inv| {
            g.parse(inv.as_ref()).err().map(|failure| FailedParse { invocation: inv.as_ref().to_string(), failure })
        })
        .collect();
    let total = invocations.len();
    let parseable = total - failures.len();
    let rate = if total == 0 { 1.0 } else { parseable as f64 / total as f64 };
    ParseRate { total, parseable, rate, failures }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum NotRecreatable {
    #[error("does not parse: {failure}")]
    Unparseable { failure: ParseFailure },
    #[error("flag `{flag}` is used more than once")]
    DuplicateFlag { flag: String },
    #[error("matches none of the command forms")]
    NoAlternative,
    #[error("the guideline has too many command forms ({count})")]
    TooManyForms { count: u64 },
    #[error("`{slot}` holds text that cannot be typed into a box")]
    Residue { slot: String },
    #[error("the GUI state does not render: {error}")]
    Render { error: String },
    #[error("renders as `{rendered}`, which reads back differently")]
    Mismatch { rendered: String },
}

/// Form, active flag ids and every value (flag values under
/// `<flag>.<rule>`).
type Triple = (usize, BTreeSet<String>, BTreeMap<String, SlotValue>);

fn triple(s: &GuiState) -> Triple {
    let mut values = s.slots.clone();
    for (_, t) in s.toggles.iter().filter(|(_, t)| t.on) {
        values.extend(t.values.iter().map(|(k, v)| (k.clone(), v.clone())));
    }
    (s.alternative, s.active_flags().into_iter().map(String::from).collect(), values)
}

fn typeable(v: &SlotValue) -> bool {
    let ok = |s: &String| !s.chars().any(char::is_control);
    match v {
        SlotValue::Single(s) => ok(s),
        SlotValue::List(items) => items.iter().all(ok),
    }
}

/// Whether `invocation` can be rebuilt with the GUI alone: it extracts to a
/// state, every value can be typed, and the rendered state reads back to the
/// same form, flags and values.
pub fn recreatable(g: &Guideline, spec: &GuiSpec, invocation: &str) -> Result<(), NotRecreatable> {
    let state = extract_state(spec, g, invocation).map_err(|e| match e {
        ExtractError::Parse(failure) => NotRecreatable::Unparseable { failure },
        ExtractError::DuplicateFlag(flag) => NotRecreatable::DuplicateFlag { flag },
        ExtractError::NoAlternative => NotRecreatable::NoAlternative,
    })?;
    let want = triple(&state);
    if let Some((slot, _)) = want.2.iter().find(|(_, v)| !typeable(v)) {
        return Err(NotRecreatable::Residue { slot: slot.clone() });
    }
    let mut fresh = state.clone();
    fresh.raw_text = None;
    for t in fresh.toggles.values_mut() {
        t.raw = None;
    }
    let rendered = serialize_state(spec, &fresh).map_err(|e| NotRecreatable::Render { error: e.to_string() })?;
    match extract_state(spec, g, &rendered) {
        Ok(back) if triple(&back) == want => Ok(()),
        _ => Err(NotRecreatable::Mismatch { rendered }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejected {
    pub invocation: String,
    pub reason: NotRecreatable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandReport {
    pub command: String,
    pub examples: usize,
    pub parse: ParseRate,
    pub sample: Vec<String>,
    pub recreatable: usize,
    pub rejected: Vec<Rejected>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub sample_size: usize,
    /// Sorted by parse rate, highest first, then by name.
    pub commands: Vec<CommandReport>,
}

/// Evaluates each guideline against its command's invocations. The
/// recreatability sample is drawn from parseable invocations with a
/// generator seeded by `seed`.
pub fn build_report(guidelines: &[Guideline], corpus: &[CorpusInvocation], sample_size: usize, seed: u64) -> EvalReport {
    let mut commands: Vec<CommandReport> = guidelines
        .iter()
        .map(|g| {
            let invocations: Vec<&str> =
                corpus.iter().filter(|c| c.command == g.command_name).map(|c| c.text.as_str()).collect();
            let parse = parse_rate(g, &invocations);
            let parseable: Vec<&str> =
                invocations.iter().copied().filter(|inv| !parse.failures.iter().any(|f| f.invocation == *inv)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = sample(&mut rng, parseable.len(), sample_size.min(parseable.len())).into_vec();
            picked.sort_unstable();
            let sample: Vec<String> = picked.into_iter().map(|k| parseable[k].to_string()).collect();
            let spec = flatten(g, DEFAULT_ALT_CAP);
            let rejected: Vec<Rejected> = sample
                .iter()
                .filter_map(|inv| {
                    let verdict = match &spec {
                        Ok(spec) => recreatable(g, spec, inv),
                        Err(FlattenError::AlternativeExplosion { count, .. }) => {
                            Err(NotRecreatable::TooManyForms { count: *count })
                        }
                    };
                    verdict.err().map(|reason| Rejected { invocation: inv.clone(), reason })
                })
                .collect();
            CommandReport {
                command: g.command_name.clone(),
                examples: invocations.len(),
                recreatable: sample.len() - rejected.len(),
                parse,
                sample,
                rejected,
            }
        })
        .collect();
    commands.sort_by(|a, b| b.parse.rate.total_cmp(&a.parse.rate).then_with(|| a.command.cmp(&b.command)));
    EvalReport { seed, sample_size, commands }
}

fn percent(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

impl EvalReport {
    /// A markdown table with one row per command plus mean and total rows,
    /// followed by every parse failure and rejected sample.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| Command | # Recreatable | # Examples | Parse Rate |\n");
        out.push_str("|---|---:|---:|---:|\n");
        for c in &self.commands {
            let mark = if c.examples == 0 { "*" } else { "" };
            let _ = writeln!(out, "| {} | {}/{} | {} | {}{mark} |", c.command, c.recreatable, c.sample.len(), c.examples, percent(c.parse.rate));
        }
        let counted: Vec<&CommandReport> = self.commands.iter().filter(|c| c.examples > 0).collect();
        if !counted.is_empty() {
            let n = counted.len() as f64;
            let mean = |f: &dyn Fn(&CommandReport) -> f64| counted.iter().map(|c| f(c)).sum::<f64>() / n;
            let _ = writeln!(
                out,
                "| Mean | {:.1} | {:.1} | {} |",
                mean(&|c| c.recreatable as f64),
                mean(&|c| c.examples as f64),
                percent(mean(&|c| c.parse.rate))
            );
            let examples: usize = counted.iter().map(|c| c.examples).sum();
            let parseable: usize = counted.iter().map(|c| c.parse.parseable).sum();
            let _ = writeln!(
                out,
                "| Total | {}/{} | {examples} | {} |",
                counted.iter().map(|c| c.recreatable).sum::<usize>(),
                counted.iter().map(|c| c.sample.len()).sum::<usize>(),
                percent(parseable as f64 / examples as f64)
            );
        }
        let _ = writeln!(
            out,
            "\nSeed {}; recreatability is checked on up to {} parseable examples per command.",
            self.seed, self.sample_size
        );
        if self.commands.iter().any(|c| c.examples == 0) {
            out.push_str("\\* No examples in the corpus; the rate is taken as 100% and left out of the mean.\n");
        }
        let failures: Vec<String> = self
            .commands
            .iter()
            .flat_map(|c| c.parse.failures.iter().map(move |f| format!("- {}: `{}`: {}", c.command, f.invocation, f.failure)))
            .collect();
        if !failures.is_empty() {
            let _ = write!(out, "\n## Parse failures\n\n{}\n", failures.join("\n"));
        }
        let rejected: Vec<String> = self
            .commands
            .iter()
            .flat_map(|c| c.rejected.iter().map(move |r| format!("- {}: `{}`: {}", c.command, r.invocation, r.reason)))
            .collect();
        if !rejected.is_empty() {
            let _ = write!(out, "\n## Not recreatable\n\n{}\n", rejected.join("\n"));
        }
        out
    }
}
