//! Static checks for ordered-choice hazards.
//!
//! A PEG choice commits to the first alternative that succeeds, so an
//! alternative whose text is a prefix of a later one hides it: `"--print" |
//! "--print0"` never reaches `--print0`. The linter samples a bounded set of
//! strings for each alternative, pairs them up, and keeps only findings whose
//! witness it can confirm by parsing.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grammar::{compile, Expr, Guideline, Rule};

const MAX_DEPTH: usize = 6;
const MAX_STRINGS: usize = 512;
const MAX_CLASS: usize = 16;
const MAX_REPEAT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LintKind {
    Sequencing,
    ShadowedAlternative,
    UnreachableRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub kind: LintKind,
    pub rule: String,
    pub detail: String,
    /// Index of the alternative that wins.
    pub earlier: Option<usize>,
    /// Index of the alternative that is hidden.
    pub later: Option<usize>,
    /// Input accepted by the hidden alternative on its own.
    pub witness: Option<String>,
    /// The choice's alternatives in an order that avoids the hazard.
    pub suggested_order: Option<Vec<String>>,
    #[serde(skip)]
    choice: Option<(Expr, bool)>,
}

impl fmt::Display for LintFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} in rule `{}`: {}", self.kind, self.rule, self.detail)?;
        if let Some(order) = &self.suggested_order {
            write!(f, " Suggested order: {}.", order.join(" | "))?;
        }
        Ok(())
    }
}

impl LintFinding {
    /// Re-parses the witness against the original choice and the hidden
    /// alternative alone. True when the hazard is observable.
    pub fn verify(&self, g: &Guideline) -> bool {
        let (Some((choice, lexical)), Some(witness), Some(i), Some(j)) =
            (&self.choice, &self.witness, self.earlier, self.later)
        else {
            return self.kind == LintKind::UnreachableRule && g.rule(&self.rule).is_some();
        };
        let Expr::Choice { alts } = choice else { return false };
        match self.kind {
            LintKind::Sequencing => {
                !probe(g, choice, *lexical, witness) && probe(g, &alts[j], *lexical, witness)
            }
            LintKind::ShadowedAlternative => {
                probe(g, &alts[i], *lexical, witness) && probe(g, &alts[j], *lexical, witness)
            }
            LintKind::UnreachableRule => false,
        }
    }
}

/// Whether `expr`, placed in a fresh rule, accepts all of `input`.
fn probe(g: &Guideline, expr: &Expr, lexical: bool, input: &str) -> bool {
    const PROBE: &str = "__probe";
    let mut rules: Vec<Rule> = g.rules.values().cloned().collect();
    rules.push(Rule::new(PROBE, expr.clone()).lexical(lexical));
    match compile(rules, PROBE, &g.command_name) {
        Ok(tmp) => tmp.parse(input).is_ok(),
        Err(_) => false,
    }
}

pub fn lint_sequencing(g: &Guideline) -> Vec<LintFinding> {
    let mut findings = Vec::new();
    let sampler = Sampler { g };
    for rule in g.user_rules() {
        let mut choices = Vec::new();
        collect_choices(&rule.body, &mut choices);
        for choice in choices {
            check_choice(g, &sampler, rule, choice, &mut findings);
        }
    }
    findings.extend(unreachable(g));
    findings
}

fn collect_choices<'a>(expr: &'a Expr, out: &mut Vec<&'a Expr>) {
    match expr {
        Expr::Choice { alts } => {
            out.push(expr);
            alts.iter().for_each(|a| collect_choices(a, out));
        }
        Expr::Seq { items } => items.iter().for_each(|a| collect_choices(a, out)),
        Expr::Repeat { expr, .. } | Expr::Optional { expr } | Expr::Not { expr } | Expr::And { expr } => {
            collect_choices(expr, out)
        }
        _ => {}
    }
}

fn check_choice(g: &Guideline, sampler: &Sampler, rule: &Rule, choice: &Expr, out: &mut Vec<LintFinding>) {
    let Expr::Choice { alts } = choice else { return };
    let sets: Vec<Option<BTreeSet<String>>> =
        alts.iter().map(|a| sampler.strings(a, rule.lexical, MAX_DEPTH)).collect();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut pending = Vec::new();
    for j in 1..alts.len() {
        let Some(later) = &sets[j] else { continue };
        if later.is_empty() {
            continue;
        }
        for i in 0..j {
            let Some(earlier) = &sets[i] else { continue };
            let masked = later.iter().all(|s| earlier.iter().any(|p| s.starts_with(p.as_str())));
            if !masked {
                continue;
            }
            let exact = later.iter().all(|s| earlier.contains(s));
            let kind = if exact { LintKind::ShadowedAlternative } else { LintKind::Sequencing };
            let mut finding = LintFinding {
                kind,
                rule: rule.name.clone(),
                detail: String::new(),
                earlier: Some(i),
                later: Some(j),
                witness: None,
                suggested_order: None,
                choice: Some((choice.clone(), rule.lexical)),
            };
            let candidates = later.iter().filter(|s| match kind {
                LintKind::Sequencing => !earlier.contains(*s),
                _ => true,
            });
            for w in candidates {
                finding.witness = Some(w.clone());
                if finding.verify(g) {
                    break;
                }
                finding.witness = None;
            }
            if finding.witness.is_none() {
                continue;
            }
            let (a, b) = (&alts[i], &alts[j]);
            let w = finding.witness.as_deref().unwrap_or_default();
            finding.detail = match kind {
                LintKind::Sequencing => format!(
                    "alternative {} ({b}) is hidden by alternative {} ({a}), which matches a prefix of its input; `{w}` fails to parse. Place the longer alternative first.",
                    j + 1,
                    i + 1
                ),
                _ => format!(
                    "alternative {} ({b}) can never be chosen because alternative {} ({a}) matches the same input, e.g. `{w}`.",
                    j + 1,
                    i + 1
                ),
            };
            if kind == LintKind::Sequencing {
                edges.push((j, i));
            }
            pending.push(finding);
            break;
        }
    }
    if !edges.is_empty() {
        let order = reorder(alts.len(), &edges);
        let shown: Vec<String> = order.iter().map(|&k| show_alt(&alts[k])).collect();
        for f in &mut pending {
            if f.kind == LintKind::Sequencing {
                f.suggested_order = Some(shown.clone());
            }
        }
    }
    out.extend(pending);
}

/// Stable topological order where each edge `(a, b)` puts `a` before `b`.
fn reorder(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut indegree = vec![0usize; n];
    for &(_, b) in edges {
        indegree[b] += 1;
    }
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let Some(next) = (0..n).find(|&k| !done[k] && indegree[k] == 0) else {
            order.extend((0..n).filter(|&k| !done[k]));
            break;
        };
        done[next] = true;
        order.push(next);
        for &(a, b) in edges {
            if a == next {
                indegree[b] -= 1;
            }
        }
    }
    order
}

fn show_alt(expr: &Expr) -> String {
    match expr {
        Expr::Literal { text, .. } => text.clone(),
        other => other.to_string(),
    }
}

fn unreachable(g: &Guideline) -> Vec<LintFinding> {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut stack = vec![g.start_rule.as_str()];
    while let Some(name) = stack.pop() {
        if !seen.insert(name) {
            continue;
        }
        if let Some(rule) = g.rule(name) {
            rule.body.visit_refs(&mut |r| stack.push(r));
        }
    }
    g.user_rules()
        .filter(|r| !seen.contains(r.name.as_str()))
        .map(|r| LintFinding {
            kind: LintKind::UnreachableRule,
            rule: r.name.clone(),
            detail: format!("rule `{}` is not reachable from the start rule `{}`.", r.name, g.start_rule),
            earlier: None,
            later: None,
            witness: None,
            suggested_order: None,
            choice: None,
        })
        .collect()
}

struct Sampler<'g> {
    g: &'g Guideline,
}

impl Sampler<'_> {
    /// A bounded sample of strings matched by `expr`; `None` past the budget.
    fn strings(&self, expr: &Expr, lexical: bool, depth: usize) -> Option<BTreeSet<String>> {
        let out = match expr {
            Expr::Literal { text, .. } => BTreeSet::from([text.clone()]),
            Expr::Class(class) => {
                if class.negated {
                    return None;
                }
                class.ranges.iter().flat_map(|&(lo, hi)| lo..=hi).take(MAX_CLASS).map(String::from).collect()
            }
            Expr::Ref { name } => {
                if depth == 0 {
                    return None;
                }
                let rule = self.g.rule(name)?;
                self.strings(&rule.body, rule.lexical, depth - 1)?
            }
            Expr::Seq { items } => {
                let mut acc = BTreeSet::from([String::new()]);
                for item in items {
                    let next = self.strings(item, lexical, depth)?;
                    acc = product(&acc, &next, lexical)?;
                }
                acc
            }
            Expr::Choice { alts } => {
                let mut acc = BTreeSet::new();
                for a in alts {
                    acc.extend(self.strings(a, lexical, depth)?);
                }
                acc
            }
            Expr::Repeat { expr, min } => {
                let one = self.strings(expr, lexical, depth)?;
                let mut acc = BTreeSet::new();
                let mut cur = BTreeSet::from([String::new()]);
                let top = MAX_REPEAT.max(*min as usize);
                for reps in 0..=top {
                    if reps >= *min as usize {
                        acc.extend(cur.iter().cloned());
                    }
                    if reps < top {
                        cur = product(&cur, &one, lexical)?;
                    }
                }
                acc
            }
            Expr::Optional { expr } => {
                let mut acc = self.strings(expr, lexical, depth)?;
                acc.insert(String::new());
                acc
            }
            Expr::Not { .. } | Expr::And { .. } | Expr::End => BTreeSet::from([String::new()]),
        };
        (out.len() <= MAX_STRINGS).then_some(out)
    }
}

fn product(a: &BTreeSet<String>, b: &BTreeSet<String>, lexical: bool) -> Option<BTreeSet<String>> {
    if a.len().saturating_mul(b.len()) > MAX_STRINGS {
        return None;
    }
    let mut out = BTreeSet::new();
    for x in a {
        for y in b {
            let sep = if !lexical && !x.is_empty() && !y.is_empty() { " " } else { "" };
            out.insert(format!("{x}{sep}{y}"));
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::load;
    use proptest::prelude::*;

    fn guide(body: &str) -> Guideline {
        load(&format!("command find\nFind = \"find\" Action*\nAction = {body}\n")).unwrap()
    }

    #[test]
    fn print_before_print0() {
        let g = guide("\"--print\" | \"--print0\"");
        let findings = lint_sequencing(&g);
        assert_eq!(findings.len(), 1, "{findings:?}");
        let f = &findings[0];
        assert_eq!(f.kind, LintKind::Sequencing);
        assert_eq!(f.rule, "Action");
        assert_eq!(f.witness.as_deref(), Some("--print0"));
        assert_eq!(f.suggested_order, Some(vec!["--print0".to_string(), "--print".to_string()]));
        assert!(f.verify(&g));
        assert!(!g.accepts("find --print0"));
    }

    #[test]
    fn fixed_order_is_clean() {
        assert!(lint_sequencing(&guide("\"--print0\" | \"--print\"")).is_empty());
    }

    #[test]
    fn disjoint_literals() {
        assert!(lint_sequencing(&guide("\"-a\" | \"-b\"")).is_empty());
    }

    #[test]
    fn shared_first_char_is_not_a_finding() {
        // `-ab` is still accepted through the cluster alternative.
        let src = "command x\nX = \"x\" Opt*\nOpt = cluster | \"-a\"\ncluster = \"-\" [ab]+\n";
        let g = load(src).unwrap();
        let findings = lint_sequencing(&g);
        assert!(findings.iter().all(|f| f.kind != LintKind::Sequencing), "{findings:?}");
    }

    #[test]
    fn duplicate_alternative() {
        let f = lint_sequencing(&guide("\"-x\" | \"-y\" | \"-x\""));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, LintKind::ShadowedAlternative);
        assert_eq!((f[0].earlier, f[0].later), (Some(0), Some(2)));
    }

    #[test]
    fn unreachable_rule() {
        let g = load("command x\nX = \"x\"\nY = \"y\"\n").unwrap();
        let f = lint_sequencing(&g);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, LintKind::UnreachableRule);
        assert_eq!(f[0].rule, "Y");
        assert!(f[0].verify(&g));
    }

    #[test]
    fn nested_choice_through_rule_refs() {
        let src = "command x\nX = \"x\" (Short | Long)\nShort = \"-n\"\nLong = \"-n\" \"um\"\n@lexical\nLong2 = \"z\"\n";
        let g = load(src).unwrap();
        let f: Vec<_> = lint_sequencing(&g).into_iter().filter(|f| f.kind == LintKind::Sequencing).collect();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].witness.as_deref(), Some("-n um"));
    }

    #[test]
    fn wide_classes_are_sampled() {
        let g = guide("\"--context\" | \"--context=\" [a-z_:0-9]+");
        let f = lint_sequencing(&g);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, LintKind::Sequencing);
        assert_eq!(f[0].witness.as_deref(), Some("--context= a"));
    }

    #[test]
    fn oversized_alternatives_are_skipped() {
        let g = guide("\"-n\" [^x]+ | \"-n\" \"a\"");
        assert!(lint_sequencing(&g).iter().all(|f| f.kind != LintKind::Sequencing));
    }

    proptest! {
        #[test]
        fn short_first_prefix_pairs_are_found(short in "-[a-z0-9]{1,6}", tail in "[a-z0-9]{1,4}") {
            let long = format!("{short}{tail}");
            let g = guide(&format!("\"{short}\" | \"{long}\""));
            let findings = lint_sequencing(&g);
            prop_assert_eq!(findings.len(), 1);
            let f = &findings[0];
            prop_assert_eq!(f.kind, LintKind::Sequencing);
            prop_assert_eq!(f.witness.as_deref(), Some(long.as_str()));
            prop_assert!(f.verify(&g));
            prop_assert_eq!(f.suggested_order.clone(), Some(vec![long.clone(), short.clone()]));
        }

        #[test]
        fn long_first_pairs_are_clean(short in "-[a-z0-9]{1,6}", tail in "[a-z0-9]{1,4}") {
            let long = format!("{short}{tail}");
            let g = guide(&format!("\"{long}\" | \"{short}\""));
            prop_assert!(lint_sequencing(&g).is_empty());
        }
    }
}
