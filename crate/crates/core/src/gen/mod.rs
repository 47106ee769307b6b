//! Guideline synthesis from manual pages.
//!
//! A model writes a test suite and a draft guideline; agents then fix syntax
//! errors, choice-ordering hazards and failing test cases one edit at a time.
//! Every model call goes through [`LlmClient`], which can record exchanges to
//! cassettes and replay them offline.

mod agent;
mod assist;
mod llm;
mod pipeline;
mod prompts;
mod suite;

pub use agent::{parse_action, run_agent, AgentAction, AgentKind, AgentOutcome, AgentSession, AgentTask, AgentTurn};
pub use assist::{command_from_reply, explain_command, explain_prompt, generate_command, generate_prompt};
pub use llm::{
    cassette_key, AnthropicBackend, Cassette, CassetteStore, LlmBackend, LlmClient, LlmError, LlmParams, Prompt,
    RouterBackend, ScriptedBackend, Stage, API_KEY_VAR, BASE_URL_VAR,
};
pub use pipeline::{
    draft_guideline, orchestrate, DraftAttempt, EditStep, Pipeline, PipelineConfig, PipelineError, PipelineReport,
    PipelineResult, RoundReport,
};
pub use prompts::{render, PromptPack};
pub use suite::{
    fenced_block, flag_candidates, format_cases, generate_test_suite, parse_cases, pass_count, run_tests, SuiteError,
    TestCase, TestFailure, TestOutcome, CASES_PER_CALL, SUITE_RETRIES,
};
