//! Packrat parsing of guidelines.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Expr, Guideline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// A rule application in a successful parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseTree {
    pub rule: String,
    pub span: Span,
    pub text: String,
    /// Index of the alternative taken when the rule body is an ordered choice.
    pub alt: Option<usize>,
    pub children: Vec<ParseTree>,
}

impl ParseTree {
    /// Pre-order traversal.
    pub fn walk(&self, f: &mut impl FnMut(&ParseTree)) {
        f(self);
        for child in &self.children {
            child.walk(f);
        }
    }

    pub fn find_all<'a>(&'a self, rule: &str) -> Vec<&'a ParseTree> {
        let mut out = Vec::new();
        fn go<'a>(t: &'a ParseTree, rule: &str, out: &mut Vec<&'a ParseTree>) {
            if t.rule == rule {
                out.push(t);
            }
            for c in &t.children {
                go(c, rule, out);
            }
        }
        go(self, rule, &mut out);
        out
    }

    /// S-expression rendering, handy in test failure messages.
    pub fn to_sexp(&self) -> String {
        let mut s = format!("({} {:?}", self.rule, self.text);
        for c in &self.children {
            s.push(' ');
            s.push_str(&c.to_sexp());
        }
        s.push(')');
        s
    }
}

/// Where and why a parse failed: the furthest position any terminal was
/// attempted at, and the terminals expected there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
pub struct ParseFailure {
    pub position: usize,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse failed at byte {}", self.position)?;
        if !self.expected.is_empty() {
            write!(f, ": expected {}", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl ParseFailure {
    /// Renders the failure with a caret under the offending column of `input`.
    pub fn render(&self, input: &str) -> String {
        let col = input[..self.position.min(input.len())].chars().count();
        format!("{self}\n  {input}\n  {}^", " ".repeat(col))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no rule named `{0}`")]
    UnknownRule(String),
    #[error(transparent)]
    Failure(#[from] ParseFailure),
}

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    pub memoize: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { memoize: true }
    }
}

pub struct Parser<'g> {
    grammar: &'g Guideline,
    options: ParseOptions,
}

impl<'g> Parser<'g> {
    pub fn new(grammar: &'g Guideline) -> Self {
        Parser { grammar, options: ParseOptions::default() }
    }

    pub fn with_options(grammar: &'g Guideline, options: ParseOptions) -> Self {
        Parser { grammar, options }
    }

    pub fn parse(&self, input: &str) -> Result<ParseTree, ParseFailure> {
        match self.parse_rule(&self.grammar.start_rule, input) {
            Ok(t) => Ok(t),
            Err(ParseError::Failure(f)) => Err(f),
            Err(ParseError::UnknownRule(_)) => unreachable!("compiled guideline has its start rule"),
        }
    }

    /// Parses the whole of `input` as `rule`. Only this outermost application
    /// must reach end of input.
    pub fn parse_rule(&self, rule: &str, input: &str) -> Result<ParseTree, ParseError> {
        let index = self
            .grammar
            .rules
            .get_index_of(rule)
            .ok_or_else(|| ParseError::UnknownRule(rule.to_string()))?;
        let mut state = State::new(self.grammar, input, self.options);
        let Some(mut tree) = state.apply(index, 0) else {
            return Err(state.failure().into());
        };
        let mut end = tree.span.end;
        if !self.grammar.rules[index].lexical {
            end = state.skip_ws(end);
        }
        if end != input.len() {
            state.expect(end, || "end of input".to_string());
            return Err(state.failure().into());
        }
        tree.span = Span { start: 0, end: input.len() };
        tree.text = input.to_string();
        Ok(tree)
    }
}

struct State<'g, 'i> {
    grammar: &'g Guideline,
    input: &'i str,
    options: ParseOptions,
    memo: HashMap<(usize, usize), Option<ParseTree>>,
    furthest: usize,
    expected: BTreeSet<String>,
    in_predicate: u32,
}

impl<'g, 'i> State<'g, 'i> {
    fn new(grammar: &'g Guideline, input: &'i str, options: ParseOptions) -> Self {
        State {
            grammar,
            input,
            options,
            memo: HashMap::new(),
            furthest: 0,
            expected: BTreeSet::new(),
            in_predicate: 0,
        }
    }

    fn failure(&self) -> ParseFailure {
        ParseFailure { position: self.furthest, expected: self.expected.iter().cloned().collect() }
    }

    fn expect(&mut self, pos: usize, what: impl FnOnce() -> String) {
        if self.in_predicate > 0 {
            return;
        }
        if pos > self.furthest {
            self.furthest = pos;
            self.expected.clear();
        }
        if pos == self.furthest {
            self.expected.insert(what());
        }
    }

    fn skip_ws(&self, mut pos: usize) -> usize {
        let bytes = self.input.as_bytes();
        while pos < bytes.len() && (bytes[pos] == b' ' || bytes[pos] == b'\t') {
            pos += 1;
        }
        pos
    }

    fn apply(&mut self, index: usize, pos: usize) -> Option<ParseTree> {
        if self.options.memoize {
            if let Some(hit) = self.memo.get(&(index, pos)) {
                return hit.clone();
            }
        }
        let rule = &self.grammar.rules[index];
        let skip = !rule.lexical;
        let mut children = Vec::new();
        let (end, alt) = match &rule.body {
            Expr::Choice { alts } => match self.choice(alts, pos, skip, &mut children) {
                Some((end, i)) => (Some(end), Some(i)),
                None => (None, None),
            },
            body => (self.eval(body, pos, skip, &mut children), None),
        };
        let result = end.map(|end| ParseTree {
            rule: rule.name.clone(),
            span: Span { start: pos, end },
            text: self.input[pos..end].to_string(),
            alt,
            children,
        });
        if self.options.memoize {
            self.memo.insert((index, pos), result.clone());
        }
        result
    }

    fn choice(&mut self, alts: &[Expr], pos: usize, skip: bool, out: &mut Vec<ParseTree>) -> Option<(usize, usize)> {
        let mark = out.len();
        for (i, alt) in alts.iter().enumerate() {
            if let Some(end) = self.eval(alt, pos, skip, out) {
                return Some((end, i));
            }
            out.truncate(mark);
        }
        None
    }

    fn eval(&mut self, expr: &Expr, pos: usize, skip: bool, out: &mut Vec<ParseTree>) -> Option<usize> {
        match expr {
            Expr::Literal { text, case_sensitive } => {
                let pos = if skip { self.skip_ws(pos) } else { pos };
                let end = pos + text.len();
                let matched = match self.input.get(pos..end) {
                    Some(s) if *case_sensitive => s == text,
                    Some(s) => s.eq_ignore_ascii_case(text),
                    None => false,
                };
                if matched {
                    Some(end)
                } else {
                    self.expect(pos, || {
                        let mut s = String::new();
                        let _ = super::write_literal(&mut s, text);
                        s
                    });
                    None
                }
            }
            Expr::Class(class) => {
                let pos = if skip { self.skip_ws(pos) } else { pos };
                match self.input[pos..].chars().next() {
                    Some(c) if class.matches(c) => Some(pos + c.len_utf8()),
                    _ => {
                        self.expect(pos, || class.to_string());
                        None
                    }
                }
            }
            Expr::Ref { name } => {
                let pos = if skip { self.skip_ws(pos) } else { pos };
                let index = self.grammar.rules.get_index_of(name.as_str())?;
                let tree = self.apply(index, pos)?;
                let end = tree.span.end;
                out.push(tree);
                Some(end)
            }
            Expr::End => {
                let pos = if skip { self.skip_ws(pos) } else { pos };
                if pos == self.input.len() {
                    Some(pos)
                } else {
                    self.expect(pos, || "end of input".to_string());
                    None
                }
            }
            Expr::Seq { items } => {
                let mark = out.len();
                let mut cur = pos;
                for item in items {
                    match self.eval(item, cur, skip, out) {
                        Some(next) => cur = next,
                        None => {
                            out.truncate(mark);
                            return None;
                        }
                    }
                }
                Some(cur)
            }
            Expr::Choice { alts } => self.choice(alts, pos, skip, out).map(|(end, _)| end),
            Expr::Repeat { expr, min } => {
                let mut cur = pos;
                let mut count = 0usize;
                loop {
                    let mark = out.len();
                    match self.eval(expr, cur, skip, out) {
                        Some(next) if next > cur => {
                            cur = next;
                            count += 1;
                        }
                        Some(_) => break,
                        None => {
                            out.truncate(mark);
                            break;
                        }
                    }
                }
                (count >= *min as usize).then_some(cur)
            }
            Expr::Optional { expr } => {
                let mark = out.len();
                match self.eval(expr, pos, skip, out) {
                    Some(end) => Some(end),
                    None => {
                        out.truncate(mark);
                        Some(pos)
                    }
                }
            }
            // Predicate bodies see the input exactly as it is, without skipping.
            Expr::Not { expr } => {
                self.in_predicate += 1;
                let matched = self.eval(expr, pos, false, &mut Vec::new()).is_some();
                self.in_predicate -= 1;
                if matched {
                    self.expect(pos, || format!("not {expr}"));
                    None
                } else {
                    Some(pos)
                }
            }
            Expr::And { expr } => {
                self.in_predicate += 1;
                let matched = self.eval(expr, pos, false, &mut Vec::new()).is_some();
                self.in_predicate -= 1;
                if matched {
                    Some(pos)
                } else {
                    self.expect(pos, || format!("{expr}"));
                    None
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{compile, CharClass, Rule};

    fn toy() -> Guideline {
        compile(
            vec![
                Rule::new("Cmd", Expr::seq(vec![Expr::lit("ls"), Expr::rule("Opt").star(), Expr::rule("file").star()])),
                Rule::new("Opt", Expr::choice(vec![Expr::lit("-la"), Expr::lit("-l"), Expr::lit("-a")])),
                Rule::new("file", Expr::Class(CharClass::new(vec![('a', 'z')])).plus()),
            ],
            "Cmd",
            "ls",
        )
        .unwrap()
    }

    #[test]
    fn syntactic_rules_skip_spaces_between_items() {
        let g = toy();
        let t = g.parse("ls  -l -a   foo  ").unwrap();
        assert_eq!(t.span, Span { start: 0, end: 17 });
        let opts: Vec<_> = t.find_all("Opt").iter().map(|n| n.text.clone()).collect();
        assert_eq!(opts, ["-l", "-a"]);
        assert_eq!(t.find_all("file")[0].text, "foo");
    }

    #[test]
    fn lexical_rules_do_not_skip() {
        let g = toy();
        assert!(g.parse_rule("file", "fo o").is_err());
    }

    #[test]
    fn ordered_choice_commits_to_first_success() {
        let g = compile(
            vec![Rule::new("X", Expr::choice(vec![Expr::lit("a"), Expr::lit("ab")]))],
            "X",
            "x",
        )
        .unwrap();
        assert!(g.parse("a").is_ok());
        let err = g.parse("ab").unwrap_err();
        assert_eq!(err.position, 1);
        assert_eq!(err.expected, vec!["end of input".to_string()]);
    }

    #[test]
    fn furthest_failure_lists_expected_terminals() {
        let g = toy();
        let err = g.parse("ls -l -").unwrap_err();
        assert_eq!(err.position, 6);
        assert!(err.expected.contains(&"\"-a\"".to_string()), "{err:?}");
    }

    #[test]
    fn choice_records_alternative_index() {
        let g = toy();
        let t = g.parse("ls -a").unwrap();
        assert_eq!(t.find_all("Opt")[0].alt, Some(2));
    }

    #[test]
    fn predicates_do_not_consume_or_report() {
        let g = compile(
            vec![Rule::new(
                "W",
                Expr::seq(vec![Expr::lit("-l"), Expr::Class(CharClass::negated(vec![(' ', ' ')])).not()]),
            )],
            "W",
            "w",
        )
        .unwrap();
        assert!(g.parse("-l").is_ok());
        assert!(g.parse("-lx").is_err());
    }

    #[test]
    fn memoization_is_transparent() {
        let g = toy();
        for input in ["ls", "ls -la foo", "ls -l -", "ls x y -a"] {
            let a = Parser::with_options(&g, ParseOptions { memoize: true }).parse(input);
            let b = Parser::with_options(&g, ParseOptions { memoize: false }).parse(input);
            assert_eq!(a, b, "{input}");
        }
    }

    #[test]
    fn unknown_rule() {
        assert_eq!(toy().parse_rule("Nope", "x"), Err(ParseError::UnknownRule("Nope".into())));
    }
}
