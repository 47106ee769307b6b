//! Scripted model behaviour for the mkdir pipeline runs whose cassettes ship
//! in `data/cassettes`.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use guide_core::gen::{explain_command, generate_command, LlmClient, LlmParams, Pipeline, PipelineConfig, PipelineError, PipelineResult, Prompt, PromptPack, RouterBackend, Stage};

pub const TIMESTAMP: &str = "2025-03-01T12:00:00Z";

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn man_page() -> String {
    std::fs::read_to_string(data_dir().join("man/mkdir.txt")).unwrap()
}

pub const GOOD: &str = r#"command mkdir
start Mkdir

Mkdir = "mkdir" Option* DIR*

Option = (Mode | Parents | Verbose | Context | Help | Version | cluster) ![^ \t]

cluster = "-" (parents | verbose | selinux)+

@flag(id="mode", short="permission bits", long="Set the permission bits of new directories to MODE instead of a=rwx minus the umask.")
Mode = "-m" MODE | modeEq

modeEq = "--mode=" MODE

@flag(id="parents", short="create parent directories", long="Create missing parent directories as needed; no error if a directory exists.")
Parents = "--parents"

@flag(id="parents", short="create parent directories", long="Create missing parent directories as needed; no error if a directory exists.")
parents = "p"

@flag(id="verbose", short="report each directory", long="Print a message for every directory created.")
Verbose = "--verbose"

@flag(id="verbose", short="report each directory", long="Print a message for every directory created.")
verbose = "v"

@flag(id="selinux", short="default security context", long="Set the SELinux security context of each new directory to the default type.")
selinux = "Z"

@flag(id="context", short="security context", long="Set the SELinux security context of each new directory to CTX, or to the default type.")
Context = contextEq | "--context"

contextEq = "--context=" CTX

@flag(id="help", short="show usage", long="Display usage information and exit.")
Help = "--help"

@flag(id="version", short="show version", long="Print version information and exit.")
Version = "--version"

@arg
@lexical
MODE = [0-7]+ | symbolicMode ("," symbolicMode)*

symbolicMode = [ugoa]* [-+=] [rwxXst]*

@arg
@lexical
CTX = [A-Za-z0-9_:.]+

@arg
DIR = operand
"#;

const SELINUX: &str = "\n\n@flag(id=\"selinux\", short=\"default security context\", long=\"Set the SELinux security context of each new directory to the default type.\")\nselinux = \"Z\"";

/// GOOD without `-Z`.
pub fn without_selinux() -> String {
    GOOD.replace(SELINUX, "").replace("(parents | verbose | selinux)+", "(parents | verbose)+")
}

/// GOOD without `-Z`, with a broken `Option` line and `--context` hiding
/// `--context=CTX`.
pub fn happy_draft() -> String {
    without_selinux()
        .replace("| cluster) ![^ \\t]", "| cluster ![^ \\t]")
        .replace("Context = contextEq | \"--context\"", "Context = \"--context\" | contextEq")
}

/// Loads, but its start rule cannot match any invocation.
pub fn zero_pass_draft() -> String {
    GOOD.replace("start Mkdir", "start Option")
}

pub const BASE: [(&str, &[&str]); 10] = [
    ("mkdir foo", &[]),
    ("mkdir -p a/b/c", &["-p"]),
    ("mkdir -v newdir", &["-v"]),
    ("mkdir -m 755 shared", &["-m"]),
    ("mkdir --parents x/y", &["--parents"]),
    ("mkdir --mode=700 private", &["--mode"]),
    ("mkdir -pv logs/2024", &["-p", "-v"]),
    ("mkdir --verbose a b c", &["--verbose"]),
    ("mkdir --help", &["--help"]),
    ("mkdir --version", &["--version"]),
];

pub const VARIETY: [(&str, &[&str]); 10] = [
    ("mkdir -m755 tmpdir", &["-m"]),
    ("mkdir -p \"$HOME/projects/new app\"", &["-p"]),
    ("mkdir -p -m 0750 \"$DIR\"", &["-p", "-m"]),
    ("mkdir --mode=u=rwx,g=rx,o= secure", &["--mode"]),
    ("mkdir -Z labeled", &["-Z"]),
    ("mkdir --context=system_u:object_r:tmp_t:s0 ctx", &["--context"]),
    ("mkdir -vp a/b", &["-v", "-p"]),
    ("mkdir --parents --verbose \"$(date +%F)\"", &["--parents", "--verbose"]),
    ("mkdir one two three", &[]),
    ("mkdir -m a+rwx,o-w pub", &["-m"]),
];

fn cases_reply(cases: &[(&str, &[&str])]) -> String {
    let cases: Vec<_> = cases
        .iter()
        .map(|(inv, flags)| serde_json::json!({ "invocation": inv, "expected_flags": flags }))
        .collect();
    format!("```json\n{}\n```", serde_json::to_string_pretty(&serde_json::json!({ "cases": cases })).unwrap())
}

fn guide_reply(src: &str) -> String {
    format!("Here is the guideline.\n\n```guide\n{}\n```\n", src.trim_end())
}

fn act(value: serde_json::Value) -> String {
    format!("```json\n{value}\n```")
}

/// 1-based run and attempt numbers mentioned in a prompt.
fn run_and_attempt(user: &str) -> (usize, usize) {
    let Some(pos) = user.find("(Run ") else { return (1, 1) };
    let rest = &user[pos + 5..];
    let run: usize = rest.split(',').next().and_then(|s| s.trim().parse().ok()).unwrap_or(1);
    let attempt = rest
        .split("attempt ")
        .nth(1)
        .and_then(|s| s.split('.').next())
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(1);
    (run, attempt)
}

/// 1-based turn number of an agent prompt.
fn turn(stage: Stage, user: &str) -> usize {
    let budget = if stage == Stage::TestAgent { 30 } else { 10 };
    let left: usize = user
        .split("You have ")
        .nth(1)
        .and_then(|s| s.split(' ').next())
        .and_then(|s| s.parse().ok())
        .unwrap_or(budget);
    budget - left + 1
}

fn suite(stage: Stage) -> Option<String> {
    match stage {
        Stage::SuiteBase => Some(cases_reply(&BASE)),
        Stage::SuiteVariety => Some(cases_reply(&VARIETY)),
        _ => None,
    }
}

pub type Router = Box<dyn Fn(Stage, &Prompt) -> Option<String> + Send + Sync>;

/// Draft with a syntax error, an ordering hazard and a missing flag; the
/// three agents fix one each.
pub fn happy() -> Router {
    Box::new(|stage, prompt| {
        let user = &prompt.user;
        match stage {
            Stage::SuiteBase | Stage::SuiteVariety => suite(stage),
            Stage::Draft => Some(guide_reply(&happy_draft())),
            Stage::SyntaxAgent => Some(act(serde_json::json!({
                "action": "replace", "search": "| cluster ![^ \\t]", "replacement": "| cluster) ![^ \\t]"
            }))),
            Stage::LinterAgent => Some(match turn(stage, user) {
                1 => act(serde_json::json!({
                    "action": "replace",
                    "search": "Context = \"--context\" | contextEq",
                    "replacement": "Context = contextEq | \"--context\""
                })),
                2 => act(serde_json::json!({ "action": "parse", "input": "mkdir --context=system_u:object_r:tmp_t:s0 ctx" })),
                _ => act(serde_json::json!({ "action": "finish" })),
            }),
            Stage::TestAgent => Some(match turn(stage, user) {
                1 => act(serde_json::json!({
                    "action": "replace",
                    "search": "cluster = \"-\" (parents | verbose)+",
                    "replacement": format!("cluster = \"-\" (parents | verbose | selinux)+{SELINUX}")
                })),
                _ => act(serde_json::json!({ "action": "finish" })),
            }),
            _ => None,
        }
    })
}

/// The first draft passes nothing and is regenerated.
pub fn regenerate() -> Router {
    Box::new(|stage, prompt| match stage {
        Stage::SuiteBase | Stage::SuiteVariety => suite(stage),
        Stage::Draft => match run_and_attempt(&prompt.user) {
            (1, 1) => Some(guide_reply(&zero_pass_draft())),
            _ => Some(guide_reply(GOOD)),
        },
        _ => None,
    })
}

/// A test repair that breaks other cases is rejected; the second run
/// succeeds.
pub fn rejected() -> Router {
    Box::new(|stage, prompt| match stage {
        Stage::SuiteBase | Stage::SuiteVariety => suite(stage),
        Stage::Draft => match run_and_attempt(&prompt.user) {
            (1, _) => Some(guide_reply(&without_selinux())),
            _ => Some(guide_reply(GOOD)),
        },
        Stage::TestAgent => Some(match turn(stage, &prompt.user) {
            1 => act(serde_json::json!({
                "action": "replace",
                "search": "cluster = \"-\" (parents | verbose)+",
                "replacement": "cluster = \"-\" [pvZ]+"
            })),
            _ => act(serde_json::json!({ "action": "finish" })),
        }),
        _ => None,
    })
}

pub const SCENARIOS: [(&str, fn() -> Router); 3] = [("mkdir", happy), ("mkdir-regenerate", regenerate), ("mkdir-rejected", rejected)];

pub fn cassette_dir(name: &str) -> PathBuf {
    data_dir().join("cassettes").join(name)
}

/// Runs a scenario against its router, recording every exchange into `dir`.
pub fn record(router: Router, dir: &Path) -> Result<PipelineResult, PipelineError> {
    let llm = LlmClient::record(RouterBackend(router), dir, LlmParams::default()).with_clock(|| TIMESTAMP.to_string());
    let pack = PromptPack::builtin();
    Pipeline { llm: &llm, pack: &pack, config: PipelineConfig::default() }.run("mkdir", &man_page())
}

/// Runs a scenario from its shipped cassettes.
pub fn replay(name: &str) -> (Result<PipelineResult, PipelineError>, LlmClient) {
    let llm = LlmClient::replay(cassette_dir(name), LlmParams::default());
    let pack = PromptPack::builtin();
    let out = Pipeline { llm: &llm, pack: &pack, config: PipelineConfig::default() }.run("mkdir", &man_page());
    (out, llm)
}

pub const GENERATE_REQUEST: &str = "search all text files for \"glass\"";

pub const GENERATED: &str = "grep \"glass\" *.txt";

/// Commands of the grep walkthrough with their recorded explanations.
pub const EXPLANATIONS: [(&str, &str); 4] = [
    ("grep \"glass\" *.txt", "Searches every .txt file in the current directory for lines containing \"glass\" and prints them."),
    ("grep -i \"glass\" *.txt", "Searches every .txt file in the current directory for \"glass\", using a case-insensitive search so \"Glass\" matches too."),
    (
        "grep -i -A 3 \"glass\" *.txt",
        "Searches every .txt file for \"glass\" with a case-insensitive search. After each match it prints 3 lines of trailing context.",
    ),
    (
        "grep -i -A 8 --exclude=invoice.txt \"glass\" *.txt",
        "Searches the .txt files in the current directory for \"glass\" with a case-insensitive search, printing 8 lines of trailing context after each match. The file invoice.txt is skipped.",
    ),
];

pub const ASSIST: &str = "server";

/// Records the generate and explain exchanges the server replays.
pub fn record_assist(dir: &Path) {
    let router: Router = Box::new(|stage, prompt| match stage {
        Stage::Generate => Some(format!("{GENERATED}\n")),
        Stage::Explain => EXPLANATIONS.iter().find(|(cmd, _)| prompt.user.contains(&format!("\n\n{cmd}\n\n"))).map(|(_, e)| e.to_string()),
        _ => None,
    });
    let llm = LlmClient::record(RouterBackend(router), dir, LlmParams::default()).with_clock(|| TIMESTAMP.to_string());
    let pack = PromptPack::builtin();
    assert_eq!(generate_command(&llm, &pack, GENERATE_REQUEST).unwrap(), GENERATED);
    for (cmd, summary) in EXPLANATIONS {
        assert_eq!(explain_command(&llm, &pack, cmd).unwrap(), summary);
    }
}
