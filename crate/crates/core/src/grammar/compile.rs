use std::collections::{BTreeSet, HashMap, HashSet};

use indexmap::IndexMap;
use thiserror::Error;

use super::{Annotation, Expr, Guideline, Rule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("rule `{referenced_from}` refers to undefined rule `{name}`")]
    UnresolvedRuleRef { name: String, referenced_from: String },
    #[error("rule `{0}` is defined more than once")]
    DuplicateRule(String),
    #[error("left recursion through {}", .0.join(" -> "))]
    LeftRecursion(Vec<String>),
    #[error("rule `{0}` repeats an expression that can match the empty string")]
    EmptyMatchRepeat(String),
    #[error("start rule `{0}` is not defined")]
    MissingStartRule(String),
    #[error("rule `{0}` contains a sequence or choice with fewer than two items")]
    DegenerateExpr(String),
    #[error("argument rule `{0}` can never match a non-empty string")]
    EmptyArgument(String),
    #[error("flag rule `{0}` has an empty id")]
    EmptyFlagId(String),
}

/// Validates `rules` and assembles them into a [`Guideline`].
pub fn compile(rules: Vec<Rule>, start: &str, command_name: &str) -> Result<Guideline, CompileError> {
    let mut map: IndexMap<String, Rule> = IndexMap::with_capacity(rules.len());
    for rule in rules {
        if map.contains_key(&rule.name) {
            return Err(CompileError::DuplicateRule(rule.name));
        }
        map.insert(rule.name.clone(), rule);
    }
    if !map.contains_key(start) {
        return Err(CompileError::MissingStartRule(start.to_string()));
    }

    for rule in map.values() {
        let mut missing = None;
        rule.body.visit_refs(&mut |name| {
            if missing.is_none() && !map.contains_key(name) {
                missing = Some(name.to_string());
            }
        });
        if let Some(name) = missing {
            return Err(CompileError::UnresolvedRuleRef { name, referenced_from: rule.name.clone() });
        }
        if !well_formed(&rule.body) {
            return Err(CompileError::DegenerateExpr(rule.name.clone()));
        }
        if let Some(Annotation::Flag(flag)) = &rule.annotation {
            if flag.id.trim().is_empty() {
                return Err(CompileError::EmptyFlagId(rule.name.clone()));
            }
        }
    }

    let analysis = Analysis::new(&map);
    if let Some(cycle) = analysis.left_recursion(&map) {
        return Err(CompileError::LeftRecursion(cycle));
    }
    for rule in map.values() {
        if analysis.has_empty_repeat(&rule.body) {
            return Err(CompileError::EmptyMatchRepeat(rule.name.clone()));
        }
        if rule.is_argument() && !analysis.consumes(&rule.body) {
            return Err(CompileError::EmptyArgument(rule.name.clone()));
        }
    }

    Ok(Guideline {
        command_name: command_name.to_string(),
        rules: map,
        start_rule: start.to_string(),
        prelude_used: BTreeSet::new(),
    })
}

fn well_formed(expr: &Expr) -> bool {
    match expr {
        Expr::Seq { items } => items.len() >= 2 && items.iter().all(well_formed),
        Expr::Choice { alts } => alts.len() >= 2 && alts.iter().all(well_formed),
        Expr::Repeat { expr, .. } | Expr::Optional { expr } | Expr::Not { expr } | Expr::And { expr } => {
            well_formed(expr)
        }
        _ => true,
    }
}

/// Fixpoint facts about rules: which can succeed without consuming input and
/// which can consume at least one character.
pub(crate) struct Analysis {
    nullable: HashSet<String>,
    consuming: HashSet<String>,
}

impl Analysis {
    pub(crate) fn new(rules: &IndexMap<String, Rule>) -> Self {
        let mut a = Analysis { nullable: HashSet::new(), consuming: HashSet::new() };
        loop {
            let mut changed = false;
            for rule in rules.values() {
                if !a.nullable.contains(&rule.name) && a.nullable(&rule.body) {
                    a.nullable.insert(rule.name.clone());
                    changed = true;
                }
                if !a.consuming.contains(&rule.name) && a.consumes(&rule.body) {
                    a.consuming.insert(rule.name.clone());
                    changed = true;
                }
            }
            if !changed {
                return a;
            }
        }
    }

    pub(crate) fn nullable(&self, expr: &Expr) -> bool {
        match expr {
            Expr::Literal { text, .. } => text.is_empty(),
            Expr::Class(_) => false,
            Expr::Ref { name } => self.nullable.contains(name),
            Expr::Seq { items } => items.iter().all(|e| self.nullable(e)),
            Expr::Choice { alts } => alts.iter().any(|e| self.nullable(e)),
            Expr::Repeat { expr, min } => *min == 0 || self.nullable(expr),
            Expr::Optional { .. } | Expr::Not { .. } | Expr::And { .. } | Expr::End => true,
        }
    }

    pub(crate) fn consumes(&self, expr: &Expr) -> bool {
        match expr {
            Expr::Literal { text, .. } => !text.is_empty(),
            Expr::Class(_) => true,
            Expr::Ref { name } => self.consuming.contains(name),
            Expr::Seq { items } => items.iter().any(|e| self.consumes(e)),
            Expr::Choice { alts } => alts.iter().any(|e| self.consumes(e)),
            Expr::Repeat { expr, .. } | Expr::Optional { expr } => self.consumes(expr),
            Expr::Not { .. } | Expr::And { .. } | Expr::End => false,
        }
    }

    fn has_empty_repeat(&self, expr: &Expr) -> bool {
        match expr {
            Expr::Repeat { expr, .. } => self.nullable(expr) || self.has_empty_repeat(expr),
            Expr::Seq { items } => items.iter().any(|e| self.has_empty_repeat(e)),
            Expr::Choice { alts } => alts.iter().any(|e| self.has_empty_repeat(e)),
            Expr::Optional { expr } | Expr::Not { expr } | Expr::And { expr } => self.has_empty_repeat(expr),
            _ => false,
        }
    }

    /// Rules that may be applied at the same position the expression starts at.
    fn leftmost_refs<'a>(&self, expr: &'a Expr, out: &mut Vec<&'a str>) {
        match expr {
            Expr::Ref { name } => out.push(name),
            Expr::Seq { items } => {
                for item in items {
                    self.leftmost_refs(item, out);
                    if !self.nullable(item) {
                        break;
                    }
                }
            }
            Expr::Choice { alts } => alts.iter().for_each(|e| self.leftmost_refs(e, out)),
            Expr::Repeat { expr, .. } | Expr::Optional { expr } | Expr::Not { expr } | Expr::And { expr } => {
                self.leftmost_refs(expr, out)
            }
            Expr::Literal { .. } | Expr::Class(_) | Expr::End => {}
        }
    }

    fn left_recursion(&self, rules: &IndexMap<String, Rule>) -> Option<Vec<String>> {
        let graph: HashMap<&str, Vec<&str>> = rules
            .values()
            .map(|r| {
                let mut out = Vec::new();
                self.leftmost_refs(&r.body, &mut out);
                (r.name.as_str(), out)
            })
            .collect();

        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Done,
        }
        fn visit<'a>(
            node: &'a str,
            graph: &HashMap<&'a str, Vec<&'a str>>,
            marks: &mut HashMap<&'a str, Mark>,
            stack: &mut Vec<&'a str>,
        ) -> Option<Vec<String>> {
            match marks.get(node) {
                Some(Mark::Done) => return None,
                Some(Mark::Active) => {
                    let from = stack.iter().position(|n| *n == node).unwrap_or(0);
                    return Some(stack[from..].iter().map(|s| s.to_string()).collect());
                }
                None => {}
            }
            marks.insert(node, Mark::Active);
            stack.push(node);
            for next in graph.get(node).into_iter().flatten() {
                if let Some(cycle) = visit(next, graph, marks, stack) {
                    return Some(cycle);
                }
            }
            stack.pop();
            marks.insert(node, Mark::Done);
            None
        }

        let mut marks = HashMap::new();
        for name in rules.keys() {
            let mut stack = Vec::new();
            if let Some(cycle) = visit(name, &graph, &mut marks, &mut stack) {
                return Some(cycle);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::CharClass;

    #[test]
    fn unresolved_reference() {
        let rules = vec![Rule::new("Echo", Expr::seq(vec![Expr::lit("echo"), Expr::rule("Missing")]))];
        let err = compile(rules, "Echo", "echo").unwrap_err();
        assert!(matches!(err, CompileError::UnresolvedRuleRef { ref name, .. } if name == "Missing"));
    }

    #[test]
    fn direct_left_recursion() {
        let rules = vec![Rule::new("A", Expr::seq(vec![Expr::rule("A"), Expr::lit("x")]))];
        assert_eq!(compile(rules, "A", "a").unwrap_err(), CompileError::LeftRecursion(vec!["A".into()]));
    }

    #[test]
    fn indirect_left_recursion_through_nullable_prefix() {
        let rules = vec![
            Rule::new("A", Expr::seq(vec![Expr::lit("y").opt(), Expr::rule("B")])),
            Rule::new("B", Expr::seq(vec![Expr::rule("A"), Expr::lit("x")])),
        ];
        let err = compile(rules, "A", "a").unwrap_err();
        assert_eq!(err, CompileError::LeftRecursion(vec!["A".into(), "B".into()]));
    }

    #[test]
    fn duplicate_rule() {
        let rules = vec![Rule::new("A", Expr::lit("a")), Rule::new("A", Expr::lit("b"))];
        assert_eq!(compile(rules, "A", "a").unwrap_err(), CompileError::DuplicateRule("A".into()));
    }

    #[test]
    fn repeat_of_nullable_body() {
        let rules = vec![Rule::new("A", Expr::lit("a").opt().star())];
        assert_eq!(compile(rules, "A", "a").unwrap_err(), CompileError::EmptyMatchRepeat("A".into()));
    }

    #[test]
    fn argument_must_consume() {
        let rules = vec![
            Rule::new("A", Expr::rule("x")),
            Rule::new("x", Expr::Class(CharClass::new(vec![('a', 'a')])).not()).argument(),
        ];
        assert_eq!(compile(rules, "A", "a").unwrap_err(), CompileError::EmptyArgument("x".into()));
    }

    #[test]
    fn degenerate_sequence_rejected() {
        let rules = vec![Rule::new("A", Expr::Seq { items: vec![Expr::lit("a")] })];
        assert_eq!(compile(rules, "A", "a").unwrap_err(), CompileError::DegenerateExpr("A".into()));
    }
}
