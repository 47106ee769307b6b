use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{lint_sequencing, load};
use crate::grammar::Guideline;

use super::agent::{run_agent, AgentSession, AgentTask};
use super::llm::{LlmClient, LlmError, LlmParams, Prompt, Stage};
use super::prompts::{render, PromptPack};
use super::suite::{attempt_note, fenced_block, format_cases, generate_test_suite, pass_count, run_tests, SuiteError, TestCase, TestOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Regenerations allowed after the first draft of a run.
    pub max_draft_retries: usize,
    /// Runs allowed after the first one.
    pub max_restarts: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { max_draft_retries: 5, max_restarts: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftAttempt {
    pub attempt: usize,
    pub loaded_as_drafted: bool,
    pub syntax_agent: Option<AgentSession>,
    pub loaded: bool,
    pub passed: Option<usize>,
    /// Why the draft was regenerated, if it was.
    pub rejected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditStep {
    /// Index into the suite, for test repairs.
    pub case: Option<usize>,
    pub failures_before: usize,
    /// None when the edited guideline does not load.
    pub failures_after: Option<usize>,
    pub accepted: bool,
    pub session: AgentSession,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub suite: Vec<TestCase>,
    pub suite_error: Option<String>,
    pub drafts: Vec<DraftAttempt>,
    pub draft_regenerations: usize,
    pub lint_findings: Vec<String>,
    pub linter: Option<EditStep>,
    pub repairs: Vec<EditStep>,
    pub results: Vec<TestOutcome>,
    pub passed: usize,
    /// Requests made during the run, per stage.
    pub calls: BTreeMap<Stage, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub command: String,
    pub params: LlmParams,
    pub config: PipelineConfig,
    pub rounds: Vec<RoundReport>,
    pub restarts: usize,
    pub best_round: Option<usize>,
    pub passed: usize,
    pub total: usize,
    pub complete: bool,
}

impl PipelineReport {
    /// A short human-readable account, one line per step.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}: {}/{} test cases pass after {} restart(s)", self.command, self.passed, self.total, self.restarts);
        for r in &self.rounds {
            let _ = writeln!(out, "run {}:", r.round + 1);
            if let Some(e) = &r.suite_error {
                let _ = writeln!(out, "  suite: {e}");
                continue;
            }
            let _ = writeln!(out, "  suite: {} cases", r.suite.len());
            for d in &r.drafts {
                let agent = d.syntax_agent.as_ref().map(|s| format!(", syntax agent {} action(s)", s.actions())).unwrap_or_default();
                let passed = d.passed.map(|p| format!("{p}/{}", r.suite.len())).unwrap_or_else(|| "does not load".into());
                let _ = writeln!(out, "  draft {}: {passed}{agent}", d.attempt + 1);
            }
            let _ = writeln!(out, "  draft regenerations: {}", r.draft_regenerations);
            if let Some(l) = &r.linter {
                let _ = writeln!(out, "  linter: {} finding(s), {}", r.lint_findings.len(), verdict(l));
            }
            for step in &r.repairs {
                let _ = writeln!(out, "  repair case {}: {}", step.case.map(|c| c + 1).unwrap_or(0), verdict(step));
            }
            let _ = writeln!(out, "  result: {}/{}", r.passed, r.suite.len());
        }
        out
    }
}

fn verdict(step: &EditStep) -> String {
    let after = step.failures_after.map(|a| a.to_string()).unwrap_or_else(|| "invalid".into());
    let word = if step.accepted { "accepted" } else { "rejected" };
    format!("{word} ({} action(s), failures {} -> {after})", step.session.actions(), step.failures_before)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub guideline: String,
    pub report: PipelineReport,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("no run passed every test case (best: {best_pass_count}/{total})")]
    Failed { best_pass_count: usize, total: usize, best: Option<String>, report: Box<PipelineReport> },
    #[error("{error}")]
    Llm { error: LlmError, report: Box<PipelineReport> },
}

impl PipelineError {
    pub fn report(&self) -> &PipelineReport {
        match self {
            PipelineError::Failed { report, .. } | PipelineError::Llm { report, .. } => report,
        }
    }
}

/// Asks for a complete guideline. Returns the first `guide` block of the
/// reply, or the whole reply when there is none.
#[allow(clippy::too_many_arguments)]
pub fn draft_guideline(
    llm: &LlmClient,
    pack: &PromptPack,
    command: &str,
    man_page: &str,
    suite: &[TestCase],
    round: usize,
    attempt: usize,
    feedback: Option<&str>,
) -> Result<String, LlmError> {
    let user = render(
        &pack.draft,
        &[
            ("command", command),
            ("dsl_reference", pack.reference().trim_end()),
            ("examples", &pack.examples_block()),
            ("man_page", man_page.trim_end()),
            ("cases", &format_cases(suite)),
            ("attempt", &attempt_note(round, attempt, feedback)),
        ],
    );
    let reply = llm.complete(Stage::Draft, &Prompt { system: pack.system.clone(), user })?;
    let body = fenced_block(&reply, "guide").unwrap_or(&reply);
    Ok(format!("{}\n", body.trim()))
}

fn failures(g: &Guideline, suite: &[TestCase]) -> usize {
    suite.len() - pass_count(&run_tests(g, suite))
}

fn tally(calls: &[(Stage, String)]) -> BTreeMap<Stage, usize> {
    let mut out = BTreeMap::new();
    for (stage, _) in calls {
        *out.entry(*stage).or_default() += 1;
    }
    out
}

/// Synthesizes a guideline for `command` from its manual page: a generated
/// test suite, a draft with syntax repair, an ordering pass and per-case
/// repairs, restarting from scratch while test cases still fail.
pub struct Pipeline<'a> {
    pub llm: &'a LlmClient,
    pub pack: &'a PromptPack,
    pub config: PipelineConfig,
}

impl Pipeline<'_> {
    pub fn run(&self, command: &str, man_page: &str) -> Result<PipelineResult, PipelineError> {
        let mut report = PipelineReport {
            command: command.to_string(),
            params: self.llm.params().clone(),
            config: self.config,
            rounds: Vec::new(),
            restarts: 0,
            best_round: None,
            passed: 0,
            total: 0,
            complete: false,
        };
        let mut best: Option<String> = None;
        for round in 0..=self.config.max_restarts {
            report.restarts = round;
            let before = self.llm.calls().len();
            let outcome = self.round(command, man_page, round);
            let calls = tally(&self.llm.calls()[before..]);
            let (mut rr, source) = match outcome {
                Ok(v) => v,
                Err(error) => return Err(PipelineError::Llm { error, report: Box::new(report) }),
            };
            rr.calls = calls;
            let total = rr.suite.len();
            if let Some(src) = source {
                if best.is_none() || rr.passed > report.passed {
                    best = Some(src);
                    report.best_round = Some(round);
                    report.passed = rr.passed;
                    report.total = total;
                }
            }
            let done = report.best_round == Some(round) && total > 0 && rr.passed == total;
            report.rounds.push(rr);
            if done {
                report.complete = true;
                break;
            }
        }
        match best {
            Some(guideline) if report.complete => Ok(PipelineResult { guideline, report }),
            best => Err(PipelineError::Failed {
                best_pass_count: report.passed,
                total: report.total,
                best,
                report: Box::new(report),
            }),
        }
    }

    fn round(&self, command: &str, man_page: &str, round: usize) -> Result<(RoundReport, Option<String>), LlmError> {
        let mut rr = RoundReport {
            round,
            suite: Vec::new(),
            suite_error: None,
            drafts: Vec::new(),
            draft_regenerations: 0,
            lint_findings: Vec::new(),
            linter: None,
            repairs: Vec::new(),
            results: Vec::new(),
            passed: 0,
            calls: BTreeMap::new(),
        };
        let suite = match generate_test_suite(self.llm, self.pack, command, man_page, round) {
            Ok(s) => s,
            Err(SuiteError::Llm(e)) => return Err(e),
            Err(e) => {
                rr.suite_error = Some(e.to_string());
                return Ok((rr, None));
            }
        };
        rr.suite = suite.clone();

        let Some(mut source) = self.draft(command, man_page, &suite, round, &mut rr)? else {
            return Ok((rr, None));
        };
        let g = load(&source).expect("drafts are kept only when they load");

        let findings = lint_sequencing(&g);
        rr.lint_findings = findings.iter().map(|f| f.to_string()).collect();
        if !findings.is_empty() {
            let before = failures(&g, &suite);
            let session = run_agent(self.llm, self.pack, command, &source, AgentTask::Linter)?;
            let after = load(&session.source).ok().map(|g| failures(&g, &suite));
            let accepted = after.is_some_and(|a| a <= before);
            if accepted {
                source = session.source.clone();
            }
            rr.linter = Some(EditStep { case: None, failures_before: before, failures_after: after, accepted, session });
        }

        let g = load(&source).expect("accepted edits load");
        let failing: Vec<usize> = run_tests(&g, &suite).iter().enumerate().filter(|(_, o)| !o.passed()).map(|(k, _)| k).collect();
        for idx in failing {
            let g = load(&source).expect("accepted edits load");
            let outcomes = run_tests(&g, &suite);
            if outcomes[idx].passed() {
                continue;
            }
            let before = suite.len() - pass_count(&outcomes);
            let others: Vec<TestCase> = suite.iter().enumerate().filter(|(k, _)| *k != idx).map(|(_, c)| c.clone()).collect();
            let task = AgentTask::TestRepair { case: &suite[idx], others: &others, man_page };
            let session = run_agent(self.llm, self.pack, command, &source, task)?;
            let after = load(&session.source).ok().map(|g| failures(&g, &suite));
            let accepted = after.is_some_and(|a| a < before);
            if accepted {
                source = session.source.clone();
            }
            rr.repairs.push(EditStep { case: Some(idx), failures_before: before, failures_after: after, accepted, session });
        }

        let g = load(&source).expect("accepted edits load");
        rr.results = run_tests(&g, &suite);
        rr.passed = pass_count(&rr.results);
        Ok((rr, Some(source)))
    }

    /// Drafts until one loads and passes at least one case. A draft that
    /// loads but passes nothing is kept as a fallback.
    fn draft(&self, command: &str, man_page: &str, suite: &[TestCase], round: usize, rr: &mut RoundReport) -> Result<Option<String>, LlmError> {
        let mut feedback: Option<String> = None;
        let mut fallback = None;
        for attempt in 0..=self.config.max_draft_retries {
            let drafted = draft_guideline(self.llm, self.pack, command, man_page, suite, round, attempt, feedback.as_deref())?;
            let mut entry = DraftAttempt {
                attempt,
                loaded_as_drafted: load(&drafted).is_ok(),
                syntax_agent: None,
                loaded: false,
                passed: None,
                rejected: None,
            };
            let mut source = drafted;
            if !entry.loaded_as_drafted {
                let session = run_agent(self.llm, self.pack, command, &source, AgentTask::Syntax)?;
                source = session.source.clone();
                entry.syntax_agent = Some(session);
            }
            let verdict = match load(&source) {
                Err(e) => Err(format!("the guideline does not load: {e}")),
                Ok(g) => {
                    entry.loaded = true;
                    let passed = pass_count(&run_tests(&g, suite));
                    entry.passed = Some(passed);
                    if passed == 0 {
                        fallback = Some(source.clone());
                        Err("the guideline loads but parses none of the test invocations".to_string())
                    } else {
                        Ok(())
                    }
                }
            };
            rr.draft_regenerations = attempt;
            match verdict {
                Ok(()) => {
                    rr.drafts.push(entry);
                    return Ok(Some(source));
                }
                Err(reason) => {
                    entry.rejected = Some(reason.clone());
                    rr.drafts.push(entry);
                    feedback = Some(reason);
                }
            }
        }
        Ok(fallback)
    }
}

/// Runs the pipeline with the default configuration.
pub fn orchestrate(llm: &LlmClient, pack: &PromptPack, command: &str, man_page: &str) -> Result<PipelineResult, PipelineError> {
    Pipeline { llm, pack, config: PipelineConfig::default() }.run(command, man_page)
}
