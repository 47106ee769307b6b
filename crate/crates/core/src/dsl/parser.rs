//! Line-oriented reader for `.guide` documents.
//!
//! A document is a `command` directive, an optional `start` directive, and
//! rule definitions `Name = expr`. Attribute lines (`@flag(...)`, `@arg`,
//! `@lexical`, `@syntactic`, `@override`) apply to the next rule. A rule may
//! continue on following lines that are indented or begin with `|`.

use crate::grammar::{default_lexical, Annotation, CharClass, Expr, FlagAnnotation, Rule};

use super::DslSyntaxError;

#[derive(Debug)]
pub(crate) struct ParsedRule {
    pub rule: Rule,
    pub line: usize,
    pub is_override: bool,
}

#[derive(Debug, Default)]
pub(crate) struct Document {
    pub command: Option<(String, usize)>,
    pub start: Option<(String, usize)>,
    pub rules: Vec<ParsedRule>,
}

#[derive(Debug, Default)]
struct PendingAttrs {
    annotation: Option<Annotation>,
    lexical: Option<bool>,
    is_override: bool,
    line: usize,
}

struct OpenRule {
    name: String,
    line: usize,
    attrs: PendingAttrs,
    tokens: Vec<Token>,
    eq_pos: (usize, usize),
}

fn err(line: usize, col: usize, message: impl Into<String>) -> DslSyntaxError {
    DslSyntaxError { line, col, message: message.into() }
}

pub(crate) fn parse_document(text: &str) -> Result<Document, DslSyntaxError> {
    let mut doc = Document::default();
    let mut pending = PendingAttrs::default();
    let mut open: Option<OpenRule> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("//") {
            continue;
        }
        let indent = raw.len() - raw.trim_start().len();
        let is_continuation = indent > 0 || trimmed.starts_with('|');
        if is_continuation && !trimmed.starts_with('@') {
            let Some(rule) = open.as_mut() else {
                return Err(err(line_no, indent + 1, "continuation line outside of a rule"));
            };
            rule.tokens.extend(tokenize(trimmed, line_no, indent + 1)?);
            continue;
        }

        if let Some(rule) = open.take() {
            doc.rules.push(finish_rule(rule)?);
        }

        if trimmed.starts_with('@') {
            parse_attributes(trimmed, line_no, indent + 1, &mut pending)?;
            continue;
        }

        let (first, rest) = split_ident(trimmed);
        if first.is_empty() {
            return Err(err(line_no, indent + 1, format!("expected a rule name, found `{}`", first_char(trimmed))));
        }
        let rest_trim = rest.trim_start();
        if rest_trim.starts_with('=') {
            if first == "end" || first == "any" {
                return Err(err(line_no, indent + 1, format!("`{first}` is reserved and cannot name a rule")));
            }
            let eq_col = indent + 1 + (trimmed.len() - rest_trim.len());
            let body = &rest_trim[1..];
            let body_col = eq_col + 1 + (body.len() - body.trim_start().len());
            let tokens = tokenize(body.trim_start(), line_no, body_col)?;
            let mut attrs = std::mem::take(&mut pending);
            if attrs.line == 0 {
                attrs.line = line_no;
            }
            open = Some(OpenRule { name: first.to_string(), line: line_no, attrs, tokens, eq_pos: (line_no, eq_col) });
            continue;
        }
        if pending.annotation.is_some() || pending.lexical.is_some() || pending.is_override {
            return Err(err(pending.line, 1, "attributes must be followed by a rule definition"));
        }
        match first {
            "command" | "start" => {
                let value = rest_trim.trim();
                let (ident, tail) = split_ident(value);
                if ident.is_empty() || !tail.trim().is_empty() {
                    let col = indent + 1 + first.len() + 1;
                    return Err(err(line_no, col, format!("`{first}` expects a single name")));
                }
                let slot = if first == "command" { &mut doc.command } else { &mut doc.start };
                if slot.is_some() {
                    return Err(err(line_no, indent + 1, format!("duplicate `{first}` directive")));
                }
                *slot = Some((ident.to_string(), line_no));
            }
            _ => {
                let col = indent + 1 + first.len();
                return Err(err(line_no, col, format!("expected `=` after rule name `{first}`")));
            }
        }
    }
    if let Some(rule) = open.take() {
        doc.rules.push(finish_rule(rule)?);
    }
    if pending.annotation.is_some() || pending.lexical.is_some() || pending.is_override {
        return Err(err(pending.line, 1, "attributes at end of file are not attached to any rule"));
    }
    Ok(doc)
}

fn first_char(s: &str) -> String {
    s.chars().next().map(String::from).unwrap_or_default()
}

/// Splits a leading identifier (`[A-Za-z_][A-Za-z0-9_-]*` without a trailing
/// hyphen for command names) off `s`.
fn split_ident(s: &str) -> (&str, &str) {
    let mut end = 0;
    for (i, c) in s.char_indices() {
        let ok = if i == 0 { c.is_ascii_alphabetic() || c == '_' } else { c.is_ascii_alphanumeric() || c == '_' || c == '-' };
        if !ok {
            break;
        }
        end = i + c.len_utf8();
    }
    (&s[..end], &s[end..])
}

fn finish_rule(open: OpenRule) -> Result<ParsedRule, DslSyntaxError> {
    if open.name.contains('-') {
        return Err(err(open.line, 1, format!("rule name `{}` may not contain `-`", open.name)));
    }
    let mut parser = ExprParser { tokens: &open.tokens, pos: 0, end: open.eq_pos };
    if parser.peek_is(&Tok::Bar) {
        parser.pos += 1;
    }
    let body = parser.choice()?;
    if let Some(tok) = parser.tokens.get(parser.pos) {
        let message = match tok.tok {
            Tok::RParen => "unmatched `)`".to_string(),
            _ => format!("unexpected {}", tok.tok.describe()),
        };
        return Err(err(tok.line, tok.col, message));
    }
    let lexical = open.attrs.lexical.unwrap_or_else(|| default_lexical(&open.name));
    Ok(ParsedRule {
        rule: Rule { name: open.name, body, annotation: open.attrs.annotation, lexical },
        line: open.line,
        is_override: open.attrs.is_override,
    })
}

fn parse_attributes(s: &str, line: usize, col0: usize, pending: &mut PendingAttrs) -> Result<(), DslSyntaxError> {
    if pending.line == 0 {
        pending.line = line;
    }
    let chars: Vec<(usize, char)> = s.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (off, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let col = col0 + s[..off].chars().count();
        if c != '@' {
            return Err(err(line, col, format!("expected an attribute starting with `@`, found `{c}`")));
        }
        let (name, _) = split_ident(&s[off + 1..]);
        i += 1 + name.chars().count();
        match name {
            "arg" => set_annotation(pending, Annotation::Argument, line, col)?,
            "lexical" => pending.lexical = Some(true),
            "syntactic" => pending.lexical = Some(false),
            "override" => pending.is_override = true,
            "flag" => {
                let start = chars.get(i).map(|(o, _)| *o).unwrap_or(s.len());
                let (fields, used) = parse_flag_fields(&s[start..], line, col0 + s[..start].chars().count())?;
                i += s[start..start + used].chars().count();
                let mut id = None;
                let mut short = None;
                let mut long = None;
                for (key, value, kcol) in fields {
                    let target = match key.as_str() {
                        "id" => &mut id,
                        "short" => &mut short,
                        "long" => &mut long,
                        other => return Err(err(line, kcol, format!("unknown @flag field `{other}`"))),
                    };
                    if target.is_some() {
                        return Err(err(line, kcol, format!("duplicate @flag field `{key}`")));
                    }
                    *target = Some(value);
                }
                let Some(id) = id else {
                    return Err(err(line, col, "@flag requires an `id` field"));
                };
                let Some(short) = short else {
                    return Err(err(line, col, "@flag requires a `short` field"));
                };
                let flag = FlagAnnotation { id, short_desc: short, long_desc: long };
                set_annotation(pending, Annotation::Flag(flag), line, col)?;
            }
            "" => return Err(err(line, col, "expected an attribute name after `@`")),
            other => return Err(err(line, col, format!("unknown attribute `@{other}`"))),
        }
    }
    Ok(())
}

fn set_annotation(pending: &mut PendingAttrs, a: Annotation, line: usize, col: usize) -> Result<(), DslSyntaxError> {
    if pending.annotation.is_some() {
        return Err(err(line, col, "a rule can carry only one of @flag and @arg"));
    }
    pending.annotation = Some(a);
    Ok(())
}

/// Parses `(key="value", ...)`, returning the fields and bytes consumed.
fn parse_flag_fields(s: &str, line: usize, col0: usize) -> Result<(Vec<(String, String, usize)>, usize), DslSyntaxError> {
    let col_of = |off: usize| col0 + s[..off].chars().count();
    let mut rest = s;
    let mut off = 0;
    let skip_ws = |rest: &mut &str, off: &mut usize| {
        let t = rest.trim_start();
        *off += rest.len() - t.len();
        *rest = t;
    };
    if !rest.starts_with('(') {
        return Err(err(line, col_of(off), "expected `(` after @flag"));
    }
    rest = &rest[1..];
    off += 1;
    let mut fields = Vec::new();
    loop {
        skip_ws(&mut rest, &mut off);
        if let Some(r) = rest.strip_prefix(')') {
            return Ok((fields, s.len() - r.len()));
        }
        let (key, after) = split_ident(rest);
        if key.is_empty() {
            return Err(err(line, col_of(off), "expected a field name in @flag(...)"));
        }
        let key_col = col_of(off);
        off += key.len();
        rest = after;
        skip_ws(&mut rest, &mut off);
        let Some(after_eq) = rest.strip_prefix('=') else {
            return Err(err(line, col_of(off), format!("expected `=` after field `{key}`")));
        };
        off += 1;
        rest = after_eq;
        skip_ws(&mut rest, &mut off);
        if !rest.starts_with('"') {
            return Err(err(line, col_of(off), format!("field `{key}` needs a quoted string value")));
        }
        let (value, used) = read_string(rest).map_err(|(at, msg)| err(line, col_of(off + at), msg))?;
        off += used;
        rest = &rest[used..];
        fields.push((key.to_string(), value, key_col));
        skip_ws(&mut rest, &mut off);
        if let Some(r) = rest.strip_prefix(',') {
            rest = r;
            off += 1;
        } else if !rest.starts_with(')') {
            return Err(err(line, col_of(off), "expected `,` or `)` in @flag(...)"));
        }
    }
}

/// Reads a double-quoted string starting at `s[0]`, returning the unescaped
/// value and the bytes consumed.
fn read_string(s: &str) -> Result<(String, usize), (usize, String)> {
    let mut out = String::new();
    let mut iter = s.char_indices().skip(1);
    while let Some((i, c)) = iter.next() {
        match c {
            '"' => return Ok((out, i + 1)),
            '\\' => match iter.next() {
                Some((_, e)) => out.push(unescape(e)),
                None => break,
            },
            c => out.push(c),
        }
    }
    Err((0, "unterminated string".to_string()))
}

fn unescape(e: char) -> char {
    match e {
        'n' => '\n',
        't' => '\t',
        'r' => '\r',
        '0' => '\0',
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str { text: String, case_sensitive: bool },
    Class(CharClass),
    LParen,
    RParen,
    Bar,
    Star,
    Plus,
    Question,
    Bang,
    Amp,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(n) => format!("name `{n}`"),
            Tok::Str { .. } => "string literal".into(),
            Tok::Class(_) => "character class".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Bar => "`|`".into(),
            Tok::Star => "`*`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Question => "`?`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Amp => "`&`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn tokenize(s: &str, line: usize, col0: usize) -> Result<Vec<Token>, DslSyntaxError> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = col0 + i;
        let simple = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '|' => Some(Tok::Bar),
            '*' => Some(Tok::Star),
            '+' => Some(Tok::Plus),
            '?' => Some(Tok::Question),
            '!' => Some(Tok::Bang),
            '&' => Some(Tok::Amp),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, line, col });
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        if c == '"' {
            let mut text = String::new();
            let mut j = i + 1;
            let mut closed = false;
            while j < chars.len() {
                match chars[j] {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' if j + 1 < chars.len() => {
                        text.push(unescape(chars[j + 1]));
                        j += 2;
                    }
                    ch => {
                        text.push(ch);
                        j += 1;
                    }
                }
            }
            if !closed {
                return Err(err(line, col, "unterminated string literal"));
            }
            j += 1;
            let case_sensitive = !(j < chars.len() && chars[j] == 'i' && !chars.get(j + 1).is_some_and(|n| n.is_ascii_alphanumeric() || *n == '_'));
            if !case_sensitive {
                j += 1;
            }
            out.push(Token { tok: Tok::Str { text, case_sensitive }, line, col });
            i = j;
            continue;
        }
        if c == '[' {
            let (class, used) = read_class(&chars[i..]).map_err(|(at, msg)| err(line, col + at, msg))?;
            out.push(Token { tok: Tok::Class(class), line, col });
            i += used;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[i..j].iter().collect()), line, col });
            i = j;
            continue;
        }
        if c == '=' {
            return Err(err(line, col, "unexpected `=`; is a previous rule missing a line break?"));
        }
        return Err(err(line, col, format!("unexpected character `{c}`")));
    }
    Ok(out)
}

fn read_class(chars: &[char]) -> Result<(CharClass, usize), (usize, String)> {
    let mut i = 1;
    let negated = chars.get(1) == Some(&'^');
    if negated {
        i += 1;
    }
    let mut items: Vec<char> = Vec::new();
    let mut literal_dash: Vec<bool> = Vec::new();
    loop {
        let Some(&c) = chars.get(i) else {
            return Err((0, "unterminated character class".to_string()));
        };
        match c {
            ']' => {
                i += 1;
                break;
            }
            '\\' => {
                let Some(&e) = chars.get(i + 1) else {
                    return Err((0, "unterminated character class".to_string()));
                };
                items.push(unescape(e));
                literal_dash.push(true);
                i += 2;
            }
            c => {
                items.push(c);
                literal_dash.push(false);
                i += 1;
            }
        }
    }
    let mut ranges = Vec::new();
    let mut k = 0;
    while k < items.len() {
        let is_range = k + 2 < items.len() && items[k + 1] == '-' && !literal_dash[k + 1];
        if is_range {
            let (lo, hi) = (items[k], items[k + 2]);
            if lo > hi {
                return Err((0, format!("invalid range `{lo}-{hi}` in character class")));
            }
            ranges.push((lo, hi));
            k += 3;
        } else {
            ranges.push((items[k], items[k]));
            k += 1;
        }
    }
    if ranges.is_empty() {
        return Err((0, "empty character class".to_string()));
    }
    Ok((CharClass { ranges, negated }, i))
}

struct ExprParser<'a> {
    tokens: &'a [Token],
    pos: usize,
    /// Position of the rule's `=`, used for errors at end of input.
    end: (usize, usize),
}

impl ExprParser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_is(&self, tok: &Tok) -> bool {
        self.peek().is_some_and(|t| &t.tok == tok)
    }

    fn here(&self) -> (usize, usize) {
        match self.peek() {
            Some(t) => (t.line, t.col),
            None => self.tokens.last().map(|t| (t.line, t.col + 1)).unwrap_or(self.end),
        }
    }

    fn choice(&mut self) -> Result<Expr, DslSyntaxError> {
        let mut alts = vec![self.seq()?];
        while self.peek_is(&Tok::Bar) {
            self.pos += 1;
            alts.push(self.seq()?);
        }
        Ok(Expr::choice(alts))
    }

    fn seq(&mut self) -> Result<Expr, DslSyntaxError> {
        let mut items = Vec::new();
        while let Some(t) = self.peek() {
            if matches!(t.tok, Tok::Bar | Tok::RParen) {
                break;
            }
            items.push(self.prefixed()?);
        }
        if items.is_empty() {
            let (line, col) = self.here();
            let found = self.peek().map(|t| t.tok.describe()).unwrap_or_else(|| "end of rule".into());
            return Err(err(line, col, format!("expected an expression, found {found}")));
        }
        Ok(Expr::seq(items))
    }

    fn prefixed(&mut self) -> Result<Expr, DslSyntaxError> {
        if self.peek_is(&Tok::Bang) {
            self.pos += 1;
            return Ok(self.postfixed()?.not());
        }
        if self.peek_is(&Tok::Amp) {
            self.pos += 1;
            return Ok(self.postfixed()?.and());
        }
        self.postfixed()
    }

    fn postfixed(&mut self) -> Result<Expr, DslSyntaxError> {
        let mut e = self.primary()?;
        loop {
            match self.peek().map(|t| &t.tok) {
                Some(Tok::Star) => e = e.star(),
                Some(Tok::Plus) => e = e.plus(),
                Some(Tok::Question) => e = e.opt(),
                _ => return Ok(e),
            }
            self.pos += 1;
        }
    }

    fn primary(&mut self) -> Result<Expr, DslSyntaxError> {
        let (line, col) = self.here();
        let Some(tok) = self.peek().cloned() else {
            return Err(err(line, col, "expected an expression, found end of rule"));
        };
        self.pos += 1;
        Ok(match tok.tok {
            Tok::Ident(name) if name == "end" => Expr::End,
            Tok::Ident(name) if name == "any" => Expr::Class(CharClass::any()),
            Tok::Ident(name) => Expr::Ref { name },
            Tok::Str { text, case_sensitive } => Expr::Literal { text, case_sensitive },
            Tok::Class(c) => Expr::Class(c),
            Tok::LParen => {
                let inner = self.choice()?;
                if !self.peek_is(&Tok::RParen) {
                    return Err(err(tok.line, tok.col, "unclosed `(`"));
                }
                self.pos += 1;
                inner
            }
            other => return Err(err(tok.line, tok.col, format!("unexpected {}", other.describe()))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_ranges_and_escapes() {
        let chars: Vec<char> = r"[a-z0-9,\-\]]".chars().collect();
        let (class, used) = read_class(&chars).unwrap();
        assert_eq!(used, chars.len());
        assert_eq!(class.ranges, vec![('a', 'z'), ('0', '9'), (',', ','), ('-', '-'), (']', ']')]);
    }

    #[test]
    fn trailing_dash_is_literal() {
        let chars: Vec<char> = "[0-9,-]".chars().collect();
        let (class, _) = read_class(&chars).unwrap();
        assert_eq!(class.ranges, vec![('0', '9'), (',', ','), ('-', '-')]);
    }

    #[test]
    fn case_insensitive_suffix() {
        let toks = tokenize(r#""abc"i "x" ident"#, 1, 1).unwrap();
        assert_eq!(toks[0].tok, Tok::Str { text: "abc".into(), case_sensitive: false });
        assert_eq!(toks[1].tok, Tok::Str { text: "x".into(), case_sensitive: true });
        assert_eq!(toks[2].tok, Tok::Ident("ident".into()));
    }

    #[test]
    fn continuation_lines_join_the_rule() {
        let doc = parse_document("command x\nA = \"a\"\n  | \"b\"\n| \"c\"\n").unwrap();
        assert_eq!(doc.rules.len(), 1);
        assert_eq!(doc.rules[0].rule.body.to_string(), r#""a" | "b" | "c""#);
    }

    #[test]
    fn flag_fields() {
        let doc = parse_document("command x\n@flag(id=\"all\", short=\"show \\\"all\\\"\")\nA = \"-a\"\n").unwrap();
        let flag = doc.rules[0].rule.flag_annotation().unwrap();
        assert_eq!(flag.id, "all");
        assert_eq!(flag.short_desc, "show \"all\"");
        assert_eq!(flag.long_desc, None);
    }
}
