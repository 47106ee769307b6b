use std::fs;
use std::io;
use std::path::Path;

use crate::dsl::PRELUDE_SOURCE;

const FILES: [&str; 13] = [
    "system.md",
    "dsl_reference.md",
    "troubleshooting.md",
    "suite_base.md",
    "suite_variety.md",
    "draft.md",
    "agent_common.md",
    "agent_syntax.md",
    "agent_linter.md",
    "agent_test.md",
    "assist_system.md",
    "assist_generate.md",
    "assist_explain.md",
];

/// Prompt templates and few-shot guidelines. Placeholders are written
/// `{{name}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptPack {
    pub system: String,
    pub dsl_reference: String,
    pub troubleshooting: String,
    pub suite_base: String,
    pub suite_variety: String,
    pub draft: String,
    pub agent_common: String,
    pub agent_syntax: String,
    pub agent_linter: String,
    pub agent_test: String,
    pub assist_system: String,
    pub assist_generate: String,
    pub assist_explain: String,
    /// `(command, guideline source)` pairs.
    pub examples: Vec<(String, String)>,
}

macro_rules! shipped {
    ($name:literal) => {
        include_str!(concat!("../../../../data/prompts/", $name))
    };
}

impl PromptPack {
    /// The templates shipped in `data/prompts`, compiled in.
    pub fn builtin() -> Self {
        PromptPack {
            system: shipped!("system.md").into(),
            dsl_reference: shipped!("dsl_reference.md").into(),
            troubleshooting: shipped!("troubleshooting.md").into(),
            suite_base: shipped!("suite_base.md").into(),
            suite_variety: shipped!("suite_variety.md").into(),
            draft: shipped!("draft.md").into(),
            agent_common: shipped!("agent_common.md").into(),
            agent_syntax: shipped!("agent_syntax.md").into(),
            agent_linter: shipped!("agent_linter.md").into(),
            agent_test: shipped!("agent_test.md").into(),
            assist_system: shipped!("assist_system.md").into(),
            assist_generate: shipped!("assist_generate.md").into(),
            assist_explain: shipped!("assist_explain.md").into(),
            examples: vec![
                ("ln".into(), shipped!("fewshot/ln.guide").into()),
                ("mdfind".into(), shipped!("fewshot/mdfind.guide").into()),
                ("nl".into(), shipped!("fewshot/nl.guide").into()),
            ],
        }
    }

    /// Reads a template directory laid out like `data/prompts`. Few-shot
    /// guidelines are the `fewshot/*.guide` files in name order.
    pub fn load(dir: &Path) -> io::Result<Self> {
        let read = |name: &str| fs::read_to_string(dir.join(name));
        let [system, dsl_reference, troubleshooting, suite_base, suite_variety, draft, agent_common, agent_syntax, agent_linter, agent_test, assist_system, assist_generate, assist_explain] =
            FILES.map(read);
        let mut paths: Vec<_> = fs::read_dir(dir.join("fewshot"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "guide"))
            .collect();
        paths.sort();
        let mut examples = Vec::new();
        for p in paths {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            examples.push((name, fs::read_to_string(&p)?));
        }
        Ok(PromptPack {
            system: system?,
            dsl_reference: dsl_reference?,
            troubleshooting: troubleshooting?,
            suite_base: suite_base?,
            suite_variety: suite_variety?,
            draft: draft?,
            agent_common: agent_common?,
            agent_syntax: agent_syntax?,
            agent_linter: agent_linter?,
            agent_test: agent_test?,
            assist_system: assist_system?,
            assist_generate: assist_generate?,
            assist_explain: assist_explain?,
            examples,
        })
    }

    /// The format description with the builtin rules filled in.
    pub fn reference(&self) -> String {
        render(&self.dsl_reference, &[("prelude", PRELUDE_SOURCE.trim_end())])
    }

    pub fn examples_block(&self) -> String {
        self.examples
            .iter()
            .map(|(name, src)| format!("### {name}\n\n```guide\n{}\n```", src.trim_end()))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// Substitutes `{{key}}` placeholders. Unknown placeholders are left as is.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let key = &after[..close];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[open..open + 2 + close + 2]),
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_once() {
        assert_eq!(render("a {{x}} b {{y}} {{x}}", &[("x", "1"), ("y", "{{x}}")]), "a 1 b {{x}} 1");
        assert_eq!(render("{{unknown}} {{", &[]), "{{unknown}} {{");
    }

    #[test]
    fn builtin_matches_directory() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/prompts");
        assert_eq!(PromptPack::load(&dir).unwrap(), PromptPack::builtin());
    }

    #[test]
    fn reference_lists_builtins() {
        let r = PromptPack::builtin().reference();
        assert!(r.contains("operand ="));
        assert!(!r.contains("{{prelude}}"));
    }

    #[test]
    fn examples_load() {
        for (name, src) in PromptPack::builtin().examples {
            crate::dsl::load(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
