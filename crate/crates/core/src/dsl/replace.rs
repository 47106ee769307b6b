use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("search text not found in the guideline; use `read` to see the current source")]
pub struct SearchNotFound;

/// Replaces the first occurrence of `search` in `source`.
pub fn apply_replace(source: &str, search: &str, replacement: &str) -> Result<String, SearchNotFound> {
    if search.is_empty() {
        return Err(SearchNotFound);
    }
    let at = source.find(search).ok_or(SearchNotFound)?;
    let mut out = String::with_capacity(source.len() + replacement.len());
    out.push_str(&source[..at]);
    out.push_str(replacement);
    out.push_str(&source[at + search.len()..]);
    Ok(out)
}
