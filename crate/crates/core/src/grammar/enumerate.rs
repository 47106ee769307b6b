//! Exhaustive enumeration of the context-free reading of a grammar.
//!
//! Used as a test oracle for the packrat parser. Ordered choice is read as
//! plain union, predicates and end-of-input match the empty string, and no
//! whitespace is inserted between the items of non-lexical rules. Where ordered
//! choice masks an alternative, the enumerated language is a superset of what
//! the parser accepts.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use super::{Expr, Guideline};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnumerateError {
    #[error("enumeration exceeded its budget of {0} strings")]
    BudgetExceeded(usize),
    #[error("negated class {0} needs an explicit alphabet to enumerate")]
    UnboundedClass(String),
    #[error("no rule named `{0}`")]
    UnknownRule(String),
}

pub struct Enumerator<'g> {
    grammar: &'g Guideline,
    max_len: usize,
    alphabet: Option<Vec<char>>,
    budget: usize,
}

/// Every string of at most `max_len` characters derivable from `rule`.
pub fn enumerate(g: &Guideline, rule: &str, max_len: usize) -> Result<BTreeSet<String>, EnumerateError> {
    Enumerator::new(g, max_len).run(rule)
}

impl<'g> Enumerator<'g> {
    pub fn new(grammar: &'g Guideline, max_len: usize) -> Self {
        Enumerator { grammar, max_len, alphabet: None, budget: 200_000 }
    }

    /// Restricts character classes to these characters. Required for
    /// negated classes.
    pub fn alphabet(mut self, chars: impl IntoIterator<Item = char>) -> Self {
        self.alphabet = Some(chars.into_iter().collect());
        self
    }

    pub fn budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn run(&self, rule: &str) -> Result<BTreeSet<String>, EnumerateError> {
        if !self.grammar.rules.contains_key(rule) {
            return Err(EnumerateError::UnknownRule(rule.to_string()));
        }
        let mut lang: HashMap<&str, BTreeSet<String>> =
            self.grammar.rules.keys().map(|k| (k.as_str(), BTreeSet::new())).collect();
        loop {
            let mut changed = false;
            for r in self.grammar.rules.values() {
                let set = self.eval(&r.body, &lang)?;
                let entry = lang.get_mut(r.name.as_str()).unwrap();
                if set.len() != entry.len() {
                    *entry = set;
                    changed = true;
                }
            }
            let total: usize = lang.values().map(BTreeSet::len).sum();
            if total > self.budget {
                return Err(EnumerateError::BudgetExceeded(self.budget));
            }
            if !changed {
                break;
            }
        }
        Ok(lang.remove(rule).unwrap_or_default())
    }

    fn fits(&self, s: &str) -> bool {
        s.chars().count() <= self.max_len
    }

    fn check(&self, set: &BTreeSet<String>) -> Result<(), EnumerateError> {
        if set.len() > self.budget {
            Err(EnumerateError::BudgetExceeded(self.budget))
        } else {
            Ok(())
        }
    }

    fn concat(&self, a: &BTreeSet<String>, b: &BTreeSet<String>) -> Result<BTreeSet<String>, EnumerateError> {
        let mut out = BTreeSet::new();
        for x in a {
            for y in b {
                let s = format!("{x}{y}");
                if self.fits(&s) {
                    out.insert(s);
                }
            }
            self.check(&out)?;
        }
        Ok(out)
    }

    fn eval(&self, expr: &Expr, lang: &HashMap<&str, BTreeSet<String>>) -> Result<BTreeSet<String>, EnumerateError> {
        let empty = || BTreeSet::from([String::new()]);
        Ok(match expr {
            Expr::Literal { text, case_sensitive } => {
                let mut out = BTreeSet::new();
                if self.fits(text) {
                    if *case_sensitive {
                        out.insert(text.clone());
                    } else {
                        out = case_variants(text);
                    }
                }
                if let Some(alpha) = &self.alphabet {
                    out.retain(|s| s.chars().all(|c| alpha.contains(&c)));
                }
                out
            }
            Expr::Class(class) => {
                if self.max_len == 0 {
                    return Ok(BTreeSet::new());
                }
                match &self.alphabet {
                    Some(alpha) => alpha.iter().filter(|c| class.matches(**c)).map(|c| c.to_string()).collect(),
                    None if class.negated => return Err(EnumerateError::UnboundedClass(class.to_string())),
                    None => class
                        .ranges
                        .iter()
                        .flat_map(|&(lo, hi)| (lo..=hi).map(|c| c.to_string()))
                        .collect(),
                }
            }
            Expr::Ref { name } => lang
                .get(name.as_str())
                .cloned()
                .ok_or_else(|| EnumerateError::UnknownRule(name.clone()))?,
            Expr::Seq { items } => {
                let mut acc = empty();
                for item in items {
                    let next = self.eval(item, lang)?;
                    acc = self.concat(&acc, &next)?;
                    if acc.is_empty() {
                        break;
                    }
                }
                acc
            }
            Expr::Choice { alts } => {
                let mut out = BTreeSet::new();
                for alt in alts {
                    out.extend(self.eval(alt, lang)?);
                    self.check(&out)?;
                }
                out
            }
            Expr::Repeat { expr, min } => {
                let body = self.eval(expr, lang)?;
                let mut closure = empty();
                loop {
                    let step = self.concat(&closure, &body)?;
                    let before = closure.len();
                    closure.extend(step);
                    self.check(&closure)?;
                    if closure.len() == before {
                        break;
                    }
                }
                if *min == 0 {
                    closure
                } else {
                    self.concat(&body, &closure)?
                }
            }
            Expr::Optional { expr } => {
                let mut out = self.eval(expr, lang)?;
                out.insert(String::new());
                out
            }
            Expr::Not { .. } | Expr::And { .. } | Expr::End => empty(),
        })
    }
}

/// Characters of the grammar's literals (both cases for case-insensitive
/// ones) and positive classes, in order.
pub fn grammar_alphabet(g: &Guideline) -> Result<BTreeSet<char>, EnumerateError> {
    fn walk(e: &Expr, out: &mut BTreeSet<char>) -> Result<(), EnumerateError> {
        match e {
            Expr::Literal { text, case_sensitive } => {
                for c in text.chars() {
                    out.insert(c);
                    if !case_sensitive {
                        out.insert(c.to_ascii_lowercase());
                        out.insert(c.to_ascii_uppercase());
                    }
                }
            }
            Expr::Class(class) if class.negated => return Err(EnumerateError::UnboundedClass(format!("{class:?}"))),
            Expr::Class(class) => out.extend(class.ranges.iter().flat_map(|&(lo, hi)| lo..=hi)),
            Expr::Seq { items } | Expr::Choice { alts: items } => {
                for i in items {
                    walk(i, out)?;
                }
            }
            Expr::Repeat { expr, .. } | Expr::Optional { expr } | Expr::Not { expr } | Expr::And { expr } => walk(expr, out)?,
            Expr::Ref { .. } | Expr::End => {}
        }
        Ok(())
    }
    let mut out = BTreeSet::new();
    for r in g.rules.values() {
        walk(&r.body, &mut out)?;
    }
    Ok(out)
}

/// Strings of at most `max_len` characters on which the packrat parser and
/// the enumerated language of the start rule disagree. Candidates are every
/// string over the grammar's alphabet plus `outsider`.
pub fn divergences(g: &Guideline, max_len: usize, outsider: char) -> Result<Vec<String>, EnumerateError> {
    let mut alphabet: Vec<char> = grammar_alphabet(g)?.into_iter().collect();
    if !alphabet.contains(&outsider) {
        alphabet.push(outsider);
    }
    let lang = Enumerator::new(g, max_len).alphabet(alphabet.iter().copied()).run(&g.start_rule)?;
    let mut out = Vec::new();
    let mut layer = vec![String::new()];
    for len in 0..=max_len {
        for s in &layer {
            if g.accepts(s) != lang.contains(s) {
                out.push(s.clone());
            }
        }
        if len < max_len {
            layer = layer.iter().flat_map(|p| alphabet.iter().map(move |c| format!("{p}{c}"))).collect();
        }
    }
    Ok(out)
}

fn case_variants(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::from([String::new()]);
    for c in text.chars() {
        let forms: BTreeSet<char> = [c, c.to_ascii_lowercase(), c.to_ascii_uppercase()].into();
        out = out
            .iter()
            .flat_map(|prefix| forms.iter().map(move |f| format!("{prefix}{f}")))
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{compile, CharClass, Rule};

    #[test]
    fn two_literals() {
        let g = compile(vec![Rule::new("X", Expr::choice(vec![Expr::lit("a"), Expr::lit("ab")]))], "X", "x").unwrap();
        let got = enumerate(&g, "X", 2).unwrap();
        assert_eq!(got, BTreeSet::from(["a".to_string(), "ab".to_string()]));
    }

    #[test]
    fn one_or_two_digits() {
        let g = compile(
            vec![
                Rule::new("N", Expr::rule("digit").plus()),
                Rule::new("digit", Expr::Class(CharClass::new(vec![('0', '9')]))),
            ],
            "N",
            "n",
        )
        .unwrap();
        let got = enumerate(&g, "N", 2).unwrap();
        assert_eq!(got.len(), 110);
        assert!(got.contains("07") && got.contains("9"));
    }

    #[test]
    fn negated_class_needs_alphabet() {
        let g = compile(vec![Rule::new("x", Expr::Class(CharClass::negated(vec![('a', 'a')])))], "x", "x").unwrap();
        assert!(matches!(enumerate(&g, "x", 1), Err(EnumerateError::UnboundedClass(_))));
        let got = Enumerator::new(&g, 1).alphabet(['a', 'b']).run("x").unwrap();
        assert_eq!(got, BTreeSet::from(["b".to_string()]));
    }

    #[test]
    fn masked_alternatives_diverge() {
        let g = compile(
            vec![Rule::new("x", Expr::seq(vec![Expr::choice(vec![Expr::lit("a"), Expr::lit("ab")]), Expr::lit("c")]))],
            "x",
            "x",
        )
        .unwrap();
        assert_eq!(divergences(&g, 4, 'z').unwrap(), ["abc"]);
        let g = compile(vec![Rule::new("x", Expr::seq(vec![Expr::lit("a").star(), Expr::lit("a")]))], "x", "x").unwrap();
        assert_eq!(divergences(&g, 3, 'z').unwrap(), ["a", "aa", "aaa"]);
    }

    #[test]
    fn budget_is_enforced() {
        let g = compile(
            vec![Rule::new("x", Expr::Class(CharClass::new(vec![('a', 'z')])).star())],
            "x",
            "x",
        )
        .unwrap();
        assert_eq!(Enumerator::new(&g, 4).budget(1000).run("x"), Err(EnumerateError::BudgetExceeded(1000)));
    }
}
