use super::llm::{LlmClient, LlmError, Prompt, Stage};
use super::prompts::{render, PromptPack};
use super::suite::fenced_block;

pub fn generate_prompt(pack: &PromptPack, request: &str) -> Prompt {
    Prompt { system: pack.assist_system.clone(), user: render(&pack.assist_generate, &[("request", request.trim())]) }
}

pub fn explain_prompt(pack: &PromptPack, command: &str) -> Prompt {
    Prompt { system: pack.assist_system.clone(), user: render(&pack.assist_explain, &[("command", command.trim())]) }
}

/// The first command line of a reply, without fences or a `$ ` prompt.
pub fn command_from_reply(reply: &str) -> String {
    let body = fenced_block(reply, "sh").or_else(|| fenced_block(reply, "bash")).unwrap_or(reply);
    let line = body.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or_default();
    line.strip_prefix("$ ").unwrap_or(line).to_string()
}

/// A command for a natural-language request.
pub fn generate_command(llm: &LlmClient, pack: &PromptPack, request: &str) -> Result<String, LlmError> {
    llm.complete(Stage::Generate, &generate_prompt(pack, request)).map(|r| command_from_reply(&r))
}

/// A short summary of what `command` does.
pub fn explain_command(llm: &LlmClient, pack: &PromptPack, command: &str) -> Result<String, LlmError> {
    llm.complete(Stage::Explain, &explain_prompt(pack, command)).map(|r| r.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_lines() {
        assert_eq!(command_from_reply("grep \"glass\" *.txt\n"), "grep \"glass\" *.txt");
        assert_eq!(command_from_reply("```sh\n$ ls -la\n```"), "ls -la");
        assert_eq!(command_from_reply("\n\n  pwd  \nextra"), "pwd");
    }
}
