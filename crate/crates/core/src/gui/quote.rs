const META: &[char] = &['|', '&', ';', '<', '>', '(', ')'];

/// True when `value` would not survive as a single shell word: it contains
/// whitespace or a control operator outside quotes, `$(...)` or backticks.
/// Glob characters are left alone so patterns like `*.txt` still expand.
pub fn needs_quoting(value: &str) -> bool {
    let mut chars = value.chars().peekable();
    let mut quote: Option<char> = None;
    let mut subst = 0usize;
    let mut backtick = false;
    while let Some(c) = chars.next() {
        match quote {
            Some('\'') => {
                if c == '\'' {
                    quote = None;
                }
                continue;
            }
            Some(_) => {
                match c {
                    '\\' => {
                        chars.next();
                    }
                    '"' => quote = None,
                    _ => {}
                }
                continue;
            }
            None => {}
        }
        match c {
            '\\' => {
                if chars.next().is_none() {
                    return true;
                }
            }
            '\'' | '"' => quote = Some(c),
            '$' if chars.peek() == Some(&'(') => {
                chars.next();
                subst += 1;
            }
            ')' if subst > 0 => subst -= 1,
            '`' => backtick = !backtick,
            _ if subst > 0 || backtick => {}
            c if c.is_whitespace() || META.contains(&c) => return true,
            _ => {}
        }
    }
    quote.is_some() || subst > 0 || backtick
}

/// Double-quotes `value` when [`needs_quoting`] says so.
pub fn quote(value: &str) -> String {
    if !needs_quoting(value) {
        return value.to_string();
    }
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        if matches!(c, '"' | '\\' | '$' | '`') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_words_pass_through() {
        for v in ["glass", "*.txt", "a=b", "\"two words\"", "'x y'", "$(ls -l)", "`date +%s`", "a\\ b", "x\"y z\""] {
            assert_eq!(quote(v), v, "{v}");
        }
    }

    #[test]
    fn spaces_and_operators_are_quoted() {
        assert_eq!(quote("my file.txt"), "\"my file.txt\"");
        assert_eq!(quote("a|b"), "\"a|b\"");
        assert_eq!(quote("say \"hi\" now"), "\"say \\\"hi\\\" now\"");
        assert_eq!(quote("cost $5 each"), "\"cost \\$5 each\"");
        assert_eq!(quote("\"unbalanced"), "\"\\\"unbalanced\"");
    }
}
