use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{flag_nodes, Guideline, ParseFailure};

use super::llm::{LlmClient, LlmError, Prompt, Stage};
use super::prompts::{render, PromptPack};

pub const CASES_PER_CALL: usize = 10;
pub const SUITE_RETRIES: usize = 3;

/// An invocation the guideline must parse, and the flags it must find in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub invocation: String,
    #[serde(default)]
    pub expected_flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFailure {
    Parse { failure: ParseFailure, rendered: String },
    MissingFlags { missing: Vec<String>, found: Vec<String> },
}

impl fmt::Display for TestFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFailure::Parse { rendered, .. } => f.write_str(rendered),
            TestFailure::MissingFlags { missing, found } => write!(
                f,
                "parsed, but no flag rule matched {}; flag rules matched [{}]",
                missing.join(", "),
                found.join(", ")
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub case: TestCase,
    pub failure: Option<TestFailure>,
}

impl TestOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

pub fn pass_count(outcomes: &[TestOutcome]) -> usize {
    outcomes.iter().filter(|o| o.passed()).count()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SuiteError {
    #[error("test suite generation failed after {attempts} attempts: {last}")]
    Malformed { attempts: usize, last: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Spellings a matched flag text can stand for: itself, the part before
/// `=` or whitespace, a glued short flag's first two characters, and a
/// cluster letter with a dash.
pub fn flag_candidates(text: &str) -> Vec<String> {
    let t = text.trim();
    let mut out = vec![t.to_string()];
    let mut add = |s: &str| {
        if !s.is_empty() && !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    };
    if let Some((head, _)) = t.split_once('=') {
        add(head);
    }
    if let Some(head) = t.split(char::is_whitespace).next() {
        add(head);
    }
    if t.starts_with('-') && !t.starts_with("--") {
        if let Some((k, _)) = t.char_indices().nth(2) {
            add(&t[..k]);
        }
    }
    if !t.starts_with(['-', '+']) {
        add(&format!("-{t}"));
    }
    out
}

/// Runs every case: it passes when the invocation parses and each expected
/// flag is a spelling of some flag-annotated node.
pub fn run_tests(g: &Guideline, cases: &[TestCase]) -> Vec<TestOutcome> {
    cases.iter().map(|case| TestOutcome { case: case.clone(), failure: check(g, case) }).collect()
}

fn check(g: &Guideline, case: &TestCase) -> Option<TestFailure> {
    let tree = match g.parse(&case.invocation) {
        Ok(t) => t,
        Err(failure) => {
            let rendered = failure.render(&case.invocation);
            return Some(TestFailure::Parse { failure, rendered });
        }
    };
    let nodes = flag_nodes(&tree, g);
    let candidates: Vec<Vec<String>> = nodes.iter().map(|n| flag_candidates(&n.text)).collect();
    let missing: Vec<String> = case
        .expected_flags
        .iter()
        .filter(|f| !candidates.iter().any(|c| c.iter().any(|s| s == f.trim())))
        .cloned()
        .collect();
    if missing.is_empty() {
        None
    } else {
        Some(TestFailure::MissingFlags { missing, found: nodes.into_iter().map(|n| n.text).collect() })
    }
}

/// The body of the first fenced block tagged `lang` (or untagged), if any.
pub fn fenced_block<'a>(text: &'a str, lang: &str) -> Option<&'a str> {
    let mut offset = 0;
    let mut open: Option<(bool, usize)> = None;
    for line in text.split_inclusive('\n') {
        if let Some(tag) = line.trim().strip_prefix("```") {
            match open {
                None => open = Some((tag.is_empty() || tag.eq_ignore_ascii_case(lang), offset + line.len())),
                Some((true, start)) => return Some(text[start..offset].trim_end_matches(['\n', '\r'])),
                Some((false, _)) => open = None,
            }
        }
        offset += line.len();
    }
    None
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CasesReply {
    Wrapped { cases: Vec<TestCase> },
    Bare(Vec<TestCase>),
}

/// Validates one reply: exactly `CASES_PER_CALL` non-empty invocations of
/// `command`.
pub fn parse_cases(reply: &str, command: &str) -> Result<Vec<TestCase>, String> {
    let body = fenced_block(reply, "json").unwrap_or(reply).trim();
    let cases = match serde_json::from_str::<CasesReply>(body) {
        Ok(CasesReply::Wrapped { cases }) | Ok(CasesReply::Bare(cases)) => cases,
        Err(e) => return Err(format!("the reply is not the requested JSON ({e})")),
    };
    if cases.len() != CASES_PER_CALL {
        return Err(format!("expected {CASES_PER_CALL} cases, got {}", cases.len()));
    }
    for c in &cases {
        if c.invocation.split_whitespace().next() != Some(command) {
            return Err(format!("`{}` does not start with `{command}`", c.invocation));
        }
    }
    Ok(cases
        .into_iter()
        .map(|c| TestCase {
            invocation: c.invocation.trim().to_string(),
            expected_flags: c.expected_flags.into_iter().map(|f| f.trim().to_string()).collect(),
        })
        .collect())
}

pub fn format_cases(cases: &[TestCase]) -> String {
    cases
        .iter()
        .map(|c| {
            if c.expected_flags.is_empty() {
                format!("- `{}` (no flags)", c.invocation)
            } else {
                format!("- `{}` flags: {}", c.invocation, c.expected_flags.join(" "))
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub(crate) fn attempt_note(round: usize, attempt: usize, feedback: Option<&str>) -> String {
    let mut note = String::new();
    if round > 0 || attempt > 0 {
        note.push_str(&format!("\n(Run {}, attempt {}.)", round + 1, attempt + 1));
    }
    if let Some(fb) = feedback {
        note.push_str(&format!("\nYour previous reply was rejected: {fb}"));
    }
    note
}

/// Asks for a base set of cases, then a set chosen for variety. Each call
/// is retried on malformed output. `round` distinguishes restarts so their
/// prompts differ.
pub fn generate_test_suite(
    llm: &LlmClient,
    pack: &PromptPack,
    command: &str,
    man_page: &str,
    round: usize,
) -> Result<Vec<TestCase>, SuiteError> {
    let mut suite = Vec::new();
    for stage in [Stage::SuiteBase, Stage::SuiteVariety] {
        let template = if stage == Stage::SuiteBase { &pack.suite_base } else { &pack.suite_variety };
        let existing = format_cases(&suite);
        let mut feedback: Option<String> = None;
        let mut got = None;
        for attempt in 0..=SUITE_RETRIES {
            let note = attempt_note(round, attempt, feedback.as_deref());
            let user = render(
                template,
                &[("command", command), ("man_page", man_page.trim_end()), ("existing", &existing), ("attempt", &note)],
            );
            let reply = llm.complete(stage, &Prompt { system: pack.system.clone(), user })?;
            match parse_cases(&reply, command) {
                Ok(cases) => {
                    got = Some(cases);
                    break;
                }
                Err(e) => {
                    tracing::info!(%stage, attempt, error = %e, "malformed test cases");
                    feedback = Some(e);
                }
            }
        }
        match got {
            Some(cases) => suite.extend(cases),
            None => {
                return Err(SuiteError::Malformed {
                    attempts: SUITE_RETRIES + 1,
                    last: feedback.unwrap_or_default(),
                })
            }
        }
    }
    Ok(suite)
}
