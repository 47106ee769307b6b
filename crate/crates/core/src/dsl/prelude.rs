use std::collections::BTreeSet;
use std::sync::OnceLock;

use crate::grammar::Rule;

/// Source of the builtin rules.
pub const PRELUDE_SOURCE: &str = include_str!("prelude.guide");

pub fn prelude_rules() -> &'static [Rule] {
    static RULES: OnceLock<Vec<Rule>> = OnceLock::new();
    RULES.get_or_init(|| {
        let doc = super::parser::parse_document(PRELUDE_SOURCE).expect("prelude parses");
        doc.rules.into_iter().map(|r| r.rule).collect()
    })
}

pub fn prelude_names() -> &'static BTreeSet<&'static str> {
    static NAMES: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    NAMES.get_or_init(|| prelude_rules().iter().map(|r| r.name.as_str()).collect())
}
