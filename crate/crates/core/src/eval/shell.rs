use std::iter::Peekable;
use std::str::CharIndices;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Word(String),
    /// `|`, `||`, `&&`, `;`, `&`, `(`, `)`.
    Op,
    /// A redirection operator; `true` when its target is the next word.
    Redirect(bool),
}

struct Lexer<'a> {
    chars: Peekable<CharIndices<'a>>,
}

/// Splits one shell line into words and operators. Words keep their raw
/// text, quotes included.
pub(crate) fn tokenize(line: &str) -> Result<Vec<Tok>, String> {
    let mut lx = Lexer { chars: line.char_indices().peekable() };
    let mut out = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut Vec<Tok>| {
        if !word.is_empty() {
            out.push(Tok::Word(std::mem::take(word)));
        }
    };
    while let Some((_, c)) = lx.chars.next() {
        match c {
            ' ' | '\t' | '\r' | '\n' => flush(&mut word, &mut out),
            '#' if word.is_empty() => break,
            '|' | ';' | '(' | ')' => {
                flush(&mut word, &mut out);
                if c == '|' || c == ';' {
                    lx.eat(c);
                }
                out.push(Tok::Op);
            }
            '&' => {
                flush(&mut word, &mut out);
                if lx.eat('&') {
                    out.push(Tok::Op);
                } else if lx.eat('>') {
                    lx.eat('>');
                    out.push(Tok::Redirect(true));
                } else {
                    out.push(Tok::Op);
                }
            }
            '<' | '>' => {
                if !word.chars().all(|d| d.is_ascii_digit()) {
                    flush(&mut word, &mut out);
                }
                word.clear();
                out.push(lx.redirect(c));
            }
            '\\' => {
                word.push(c);
                if let Some((_, n)) = lx.chars.next() {
                    word.push(n);
                }
            }
            '\'' => {
                word.push(c);
                lx.until_quote(&mut word)?;
            }
            '"' => {
                word.push(c);
                lx.double_quoted(&mut word)?;
            }
            '`' => {
                word.push(c);
                lx.backticks(&mut word)?;
            }
            '$' if lx.peek() == Some('(') => {
                word.push(c);
                lx.chars.next();
                word.push('(');
                lx.parens(&mut word)?;
            }
            '$' if lx.peek() == Some('{') => {
                word.push(c);
                lx.chars.next();
                word.push('{');
                loop {
                    match lx.chars.next() {
                        Some((_, '}')) => {
                            word.push('}');
                            break;
                        }
                        Some((_, ch)) => word.push(ch),
                        None => return Err("unterminated `${`".into()),
                    }
                }
            }
            _ => word.push(c),
        }
    }
    flush(&mut word, &mut out);
    Ok(out)
}

impl Lexer<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.chars.next();
            true
        } else {
            false
        }
    }

    fn redirect(&mut self, first: char) -> Tok {
        if first == '<' && self.eat('<') {
            self.eat('<');
            self.eat('-');
            return Tok::Redirect(true);
        }
        if first == '>' {
            self.eat('>');
            self.eat('|');
        } else {
            self.eat('>');
        }
        if self.eat('&') {
            let mut fd = false;
            while let Some(c) = self.peek() {
                if c.is_ascii_digit() || c == '-' {
                    self.chars.next();
                    fd = true;
                } else {
                    break;
                }
            }
            return Tok::Redirect(!fd);
        }
        Tok::Redirect(true)
    }

    fn until_quote(&mut self, word: &mut String) -> Result<(), String> {
        for (_, c) in self.chars.by_ref() {
            word.push(c);
            if c == '\'' {
                return Ok(());
            }
        }
        Err("unterminated single quote".into())
    }

    fn double_quoted(&mut self, word: &mut String) -> Result<(), String> {
        while let Some((_, c)) = self.chars.next() {
            word.push(c);
            match c {
                '"' => return Ok(()),
                '\\' => {
                    if let Some((_, n)) = self.chars.next() {
                        word.push(n);
                    }
                }
                '`' => self.backticks(word)?,
                '$' if self.peek() == Some('(') => {
                    self.chars.next();
                    word.push('(');
                    self.parens(word)?;
                }
                _ => {}
            }
        }
        Err("unterminated double quote".into())
    }

    fn backticks(&mut self, word: &mut String) -> Result<(), String> {
        while let Some((_, c)) = self.chars.next() {
            word.push(c);
            match c {
                '`' => return Ok(()),
                '\\' => {
                    if let Some((_, n)) = self.chars.next() {
                        word.push(n);
                    }
                }
                _ => {}
            }
        }
        Err("unterminated backquote".into())
    }

    /// After `$(`: copies up to the matching `)`.
    fn parens(&mut self, word: &mut String) -> Result<(), String> {
        let mut depth = 1;
        while let Some((_, c)) = self.chars.next() {
            word.push(c);
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                '\'' => self.until_quote(word)?,
                '"' => self.double_quoted(word)?,
                '`' => self.backticks(word)?,
                '\\' => {
                    if let Some((_, n)) = self.chars.next() {
                        word.push(n);
                    }
                }
                _ => {}
            }
        }
        Err("unterminated `$(`".into())
    }
}

fn is_assignment(word: &str) -> bool {
    let Some((name, _)) = word.split_once('=') else { return false };
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// The simple commands of a shell line, each with redirections and leading
/// variable assignments removed and its words joined by single spaces.
pub fn split_commands(line: &str) -> Result<Vec<String>, String> {
    let toks = tokenize(line)?;
    let mut out = Vec::new();
    let mut words: Vec<String> = Vec::new();
    let mut skip_next = false;
    let end = |words: &mut Vec<String>, out: &mut Vec<String>| {
        let start = words.iter().position(|w| !is_assignment(w)).unwrap_or(words.len());
        if start < words.len() {
            out.push(words[start..].join(" "));
        }
        words.clear();
    };
    for tok in toks {
        match tok {
            Tok::Op => {
                skip_next = false;
                end(&mut words, &mut out);
            }
            Tok::Redirect(target) => skip_next = target,
            Tok::Word(w) => {
                if skip_next {
                    skip_next = false;
                } else {
                    words.push(w);
                }
            }
        }
    }
    end(&mut words, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn split(line: &str) -> Vec<String> {
        split_commands(line).unwrap()
    }

    #[test]
    fn pipes_and_lists() {
        assert_eq!(split("ls -la | grep foo > out.txt"), ["ls -la", "grep foo"]);
        assert_eq!(split("cd /tmp && ls; echo hi || true &"), ["cd /tmp", "ls", "echo hi", "true"]);
    }

    #[test]
    fn redirects_and_assignments() {
        assert_eq!(split("LC_ALL=C FOO=1 sort -u < in 2>/dev/null >>log"), ["sort -u"]);
        assert_eq!(split("make 2>&1 | tee log"), ["make", "tee log"]);
        assert_eq!(split("cmd &> all.log x"), ["cmd x"]);
        assert_eq!(split("cat <<EOF"), ["cat"]);
        assert_eq!(split("x=1"), Vec::<String>::new());
        assert_eq!(split("echo a=b"), ["echo a=b"]);
    }

    #[test]
    fn quoting_is_kept() {
        assert_eq!(split(r#"grep "a | b > c" 'x;y' f"#), [r#"grep "a | b > c" 'x;y' f"#]);
        assert_eq!(split(r"echo a\|b"), [r"echo a\|b"]);
        assert_eq!(split(r#"mkdir "$(date +%F | tr - _)" `pwd`/x ${HOME}/y"#), [r#"mkdir "$(date +%F | tr - _)" `pwd`/x ${HOME}/y"#]);
        assert_eq!(split("echo $(ls (x)) z"), ["echo $(ls (x)) z"]);
    }

    #[test]
    fn comments_and_blank_lines() {
        assert!(split("   ").is_empty());
        assert!(split("# nothing").is_empty());
        assert_eq!(split("ls # list"), ["ls"]);
        assert_eq!(split("echo a#b"), ["echo a#b"]);
    }

    #[test]
    fn unterminated_input_is_an_error() {
        for bad in ["echo 'x", "echo \"x", "echo $(x", "echo `x", "echo ${x"] {
            assert!(split_commands(bad).is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn normalizing_twice_changes_nothing(line in r#"[a-c =|;&<>'"$()\\ 12-]{0,24}"#) {
            if let Ok(cmds) = split_commands(&line) {
                for c in cmds {
                    prop_assert_eq!(split_commands(&c).unwrap(), vec![c.clone()]);
                }
            }
        }
    }
}
