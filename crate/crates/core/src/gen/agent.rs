use serde::{Deserialize, Serialize};

use crate::dsl::{apply_replace, lint_sequencing, load};
use crate::grammar::{flag_nodes, Guideline, ParseError};

use super::llm::{cassette_key, LlmClient, LlmError, Prompt, Stage};
use super::prompts::{render, PromptPack};
use super::suite::{fenced_block, format_cases, run_tests, TestCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Syntax,
    Linter,
    TestRepair,
}

impl AgentKind {
    pub fn budget(self) -> usize {
        match self {
            AgentKind::Syntax | AgentKind::Linter => 10,
            AgentKind::TestRepair => 30,
        }
    }

    pub fn allowed(self) -> &'static [&'static str] {
        match self {
            AgentKind::Syntax => &["read", "replace"],
            AgentKind::Linter | AgentKind::TestRepair => &["read", "replace", "parse", "finish"],
        }
    }

    pub fn stage(self) -> Stage {
        match self {
            AgentKind::Syntax => Stage::SyntaxAgent,
            AgentKind::Linter => Stage::LinterAgent,
            AgentKind::TestRepair => Stage::TestAgent,
        }
    }
}

/// One step an agent may take, written as a JSON object with an `action`
/// field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum AgentAction {
    Read,
    Replace { search: String, replacement: String },
    Parse { input: String, #[serde(default)] rule: Option<String> },
    Finish,
}

impl AgentAction {
    pub fn name(&self) -> &'static str {
        match self {
            AgentAction::Read => "read",
            AgentAction::Replace { .. } => "replace",
            AgentAction::Parse { .. } => "parse",
            AgentAction::Finish => "finish",
        }
    }
}

/// Reads the first JSON block of a reply as an action.
pub fn parse_action(reply: &str) -> Result<AgentAction, String> {
    let body = fenced_block(reply, "json").unwrap_or(reply).trim();
    serde_json::from_str(body).map_err(|e| format!("no valid action in the reply ({e})"))
}

/// What an agent session is asked to fix.
#[derive(Debug, Clone, Copy)]
pub enum AgentTask<'a> {
    Syntax,
    Linter,
    TestRepair { case: &'a TestCase, others: &'a [TestCase], man_page: &'a str },
}

impl AgentTask<'_> {
    pub fn kind(&self) -> AgentKind {
        match self {
            AgentTask::Syntax => AgentKind::Syntax,
            AgentTask::Linter => AgentKind::Linter,
            AgentTask::TestRepair { .. } => AgentKind::TestRepair,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTurn {
    /// Cassette key of the request.
    pub key: String,
    /// None when the reply held no usable action.
    pub action: Option<AgentAction>,
    pub result: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentOutcome {
    /// The syntax agent's source loads.
    Loaded,
    Finished,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSession {
    pub kind: AgentKind,
    pub budget: usize,
    pub turns: Vec<AgentTurn>,
    pub outcome: AgentOutcome,
    /// The source after the session: the best so far when the budget ran out.
    #[serde(skip)]
    pub source: String,
}

impl AgentSession {
    pub fn actions(&self) -> usize {
        self.turns.len()
    }
}

fn action_list(kind: AgentKind) -> String {
    let docs = [
        ("read", r#"`{"action": "read"}` shows the current guideline and its status."#),
        (
            "replace",
            r#"`{"action": "replace", "search": "...", "replacement": "..."}` replaces the first occurrence of the exact search text."#,
        ),
        (
            "parse",
            r#"`{"action": "parse", "input": "...", "rule": "Name"}` parses the input with a rule (default: the start rule) and shows the matched flags."#,
        ),
        ("finish", r#"`{"action": "finish"}` ends the session."#),
    ];
    docs.iter()
        .filter(|(name, _)| kind.allowed().contains(name))
        .map(|(_, doc)| format!("- {doc}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn status(source: &str, task: &AgentTask) -> String {
    let g = match load(source) {
        Ok(g) => g,
        Err(e) => return format!("The guideline does not load: {e}"),
    };
    match task {
        AgentTask::Syntax => "The guideline loads.".into(),
        AgentTask::Linter => match lint_sequencing(&g).len() {
            0 => "The guideline loads. The ordering check reports nothing.".into(),
            n => format!("The guideline loads. The ordering check reports {n} finding(s)."),
        },
        AgentTask::TestRepair { case, .. } => match &run_tests(&g, std::slice::from_ref(*case))[0].failure {
            None => "The guideline loads and the test case passes.".into(),
            Some(f) => format!("The guideline loads; the test case still fails: {f}"),
        },
    }
}

fn task_text(pack: &PromptPack, source: &str, task: &AgentTask) -> String {
    let loaded = load(source);
    match task {
        AgentTask::Syntax => {
            let error = loaded.err().map(|e| e.to_string()).unwrap_or_else(|| "none".into());
            render(&pack.agent_syntax, &[("error", &error), ("troubleshooting", pack.troubleshooting.trim_end())])
        }
        AgentTask::Linter => {
            let findings = match &loaded {
                Ok(g) => {
                    let f = lint_sequencing(g);
                    if f.is_empty() {
                        "No findings remain.".to_string()
                    } else {
                        f.iter().map(|f| format!("- {f}")).collect::<Vec<_>>().join("\n")
                    }
                }
                Err(e) => format!("The guideline does not load: {e}"),
            };
            render(&pack.agent_linter, &[("findings", &findings)])
        }
        AgentTask::TestRepair { case, others, man_page } => {
            let failure = match &loaded {
                Ok(g) => run_tests(g, std::slice::from_ref(*case))[0]
                    .failure
                    .as_ref()
                    .map(|f| f.to_string())
                    .unwrap_or_else(|| "none (it passes now)".into()),
                Err(e) => format!("the guideline does not load: {e}"),
            };
            let expected = if case.expected_flags.is_empty() { "none".to_string() } else { case.expected_flags.join(" ") };
            render(
                &pack.agent_test,
                &[
                    ("invocation", &case.invocation),
                    ("expected", &expected),
                    ("failure", &failure),
                    ("other_cases", &format_cases(others)),
                    ("man_page", man_page.trim_end()),
                ],
            )
        }
    }
}

fn perform(action: &AgentAction, source: &mut String, task: &AgentTask) -> String {
    match action {
        AgentAction::Read => format!("```guide\n{}\n```\n{}", source.trim_end(), status(source, task)),
        AgentAction::Replace { search, replacement } => match apply_replace(source, search, replacement) {
            Ok(next) => {
                *source = next;
                format!("Replaced. {}", status(source, task))
            }
            Err(e) => format!("{e}. Nothing changed; copy the search text exactly from the current guideline."),
        },
        AgentAction::Parse { input, rule } => match load(source) {
            Ok(g) => parse_report(&g, input, rule.as_deref()),
            Err(e) => format!("The guideline does not load: {e}"),
        },
        AgentAction::Finish => "Finished.".into(),
    }
}

fn parse_report(g: &Guideline, input: &str, rule: Option<&str>) -> String {
    let rule = rule.unwrap_or(&g.start_rule);
    match g.parse_rule(rule, input) {
        Ok(tree) => {
            let flags: Vec<String> = flag_nodes(&tree, g).into_iter().map(|n| format!("{} ({})", n.text, n.id)).collect();
            format!("Parsed with `{rule}`. Flags matched: [{}].\n{}", flags.join(", "), tree.to_sexp())
        }
        Err(ParseError::UnknownRule(r)) => format!("There is no rule named `{r}`."),
        Err(ParseError::Failure(f)) => format!("Parsing with `{rule}` failed: {}", f.render(input)),
    }
}

fn history(turns: &[AgentTurn]) -> String {
    if turns.is_empty() {
        return "No actions yet.".into();
    }
    turns
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let action = t.action.as_ref().map(|a| serde_json::to_string(a).unwrap_or_default()).unwrap_or_else(|| "(unreadable)".into());
            let first = t.result.lines().find(|l| !l.starts_with("```")).unwrap_or("");
            format!("{}. {action} -> {first}", k + 1)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Runs one agent session on `source`. Every reply counts against the
/// budget, including unreadable or disallowed ones. The syntax agent stops
/// as soon as the source loads.
pub fn run_agent(
    llm: &LlmClient,
    pack: &PromptPack,
    command: &str,
    source: &str,
    task: AgentTask,
) -> Result<AgentSession, LlmError> {
    let kind = task.kind();
    let mut session =
        AgentSession { kind, budget: kind.budget(), turns: Vec::new(), outcome: AgentOutcome::BudgetExhausted, source: source.to_string() };
    let loads = |s: &str| load(s).is_ok();
    if kind == AgentKind::Syntax && loads(source) {
        session.outcome = AgentOutcome::Loaded;
        return Ok(session);
    }
    let mut last = match &task {
        AgentTask::Syntax => "The session has just started.".to_string(),
        _ => status(source, &task),
    };
    while session.turns.len() < session.budget {
        let remaining = (session.budget - session.turns.len()).to_string();
        let user = render(
            &pack.agent_common,
            &[
                ("command", command),
                ("actions", &action_list(kind)),
                ("remaining", &remaining),
                ("source", session.source.trim_end()),
                ("task", task_text(pack, &session.source, &task).trim_end()),
                ("history", &history(&session.turns)),
                ("result", &last),
            ],
        );
        let prompt = Prompt { system: pack.system.clone(), user };
        let key = cassette_key(&prompt, llm.params());
        let reply = llm.complete(kind.stage(), &prompt)?;
        let (action, result) = match parse_action(&reply) {
            Err(e) => (None, e),
            Ok(a) if !kind.allowed().contains(&a.name()) => {
                let msg = format!("The `{}` action is not available here.", a.name());
                (Some(a), msg)
            }
            Ok(a) => {
                let r = perform(&a, &mut session.source, &task);
                (Some(a), r)
            }
        };
        let finished = matches!(action, Some(AgentAction::Finish)) && kind != AgentKind::Syntax;
        last = result.clone();
        session.turns.push(AgentTurn { key, action, result });
        if finished {
            session.outcome = AgentOutcome::Finished;
            break;
        }
        if kind == AgentKind::Syntax && loads(&session.source) {
            session.outcome = AgentOutcome::Loaded;
            break;
        }
    }
    Ok(session)
}
