use serde::{Deserialize, Serialize};

use super::{Guideline, ParseTree, Span};

/// A flag occurrence found in a parse tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagNode {
    pub id: String,
    /// The flag-annotated rule that matched (the surface spelling).
    pub rule: String,
    pub alt: Option<usize>,
    pub span: Span,
    pub text: String,
}

/// Maximal flag-annotated subtrees of `tree`, in input order.
pub fn flag_nodes(tree: &ParseTree, g: &Guideline) -> Vec<FlagNode> {
    let mut out = Vec::new();
    collect(tree, g, &mut out);
    out
}

fn collect(tree: &ParseTree, g: &Guideline, out: &mut Vec<FlagNode>) {
    if let Some(flag) = g.rule(&tree.rule).and_then(|r| r.flag_annotation()) {
        out.push(FlagNode {
            id: flag.id.clone(),
            rule: tree.rule.clone(),
            alt: tree.alt,
            span: tree.span,
            text: tree.text.clone(),
        });
        return;
    }
    for child in &tree.children {
        collect(child, g, out);
    }
}
