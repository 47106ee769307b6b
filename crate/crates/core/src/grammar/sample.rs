//! Sentence generation from a grammar, for fuzzing and round-trip tests.
//!
//! Predicates are ignored, so a generated string is a candidate that callers
//! should confirm with the parser.

use std::collections::HashMap;

use rand::Rng;

use super::{CharClass, Expr, Guideline};

const POOL: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._-/=,:@%+*?";

fn pick_from_class(class: &CharClass, rng: Option<&mut dyn rand::RngCore>) -> Option<char> {
    if !class.negated {
        let total: u32 = class.ranges.iter().map(|&(lo, hi)| hi as u32 - lo as u32 + 1).sum();
        if total == 0 {
            return None;
        }
        let mut k = match rng {
            Some(rng) => rng.random_range(0..total),
            None => 0,
        };
        for &(lo, hi) in &class.ranges {
            let width = hi as u32 - lo as u32 + 1;
            if k < width {
                return char::from_u32(lo as u32 + k);
            }
            k -= width;
        }
        return None;
    }
    let candidates: Vec<char> = POOL.chars().filter(|c| class.matches(*c)).collect();
    if candidates.is_empty() {
        return None;
    }
    Some(match rng {
        Some(rng) => candidates[rng.random_range(0..candidates.len())],
        None => candidates[0],
    })
}

/// A shortest string derivable from each rule, ignoring predicates.
fn shortest_table(g: &Guideline) -> HashMap<String, String> {
    let mut table: HashMap<String, String> = HashMap::new();
    loop {
        let mut changed = false;
        for rule in g.rules.values() {
            if let Some(s) = shortest(&rule.body, &table) {
                let better = table.get(&rule.name).is_none_or(|old| s.len() < old.len());
                if better {
                    table.insert(rule.name.clone(), s);
                    changed = true;
                }
            }
        }
        if !changed {
            return table;
        }
    }
}

fn shortest(expr: &Expr, table: &HashMap<String, String>) -> Option<String> {
    match expr {
        Expr::Literal { text, .. } => Some(text.clone()),
        Expr::Class(class) => pick_from_class(class, None).map(String::from),
        Expr::Ref { name } => table.get(name).cloned(),
        Expr::Seq { items } => items.iter().map(|e| shortest(e, table)).collect::<Option<Vec<_>>>().map(|v| v.concat()),
        Expr::Choice { alts } => alts.iter().filter_map(|e| shortest(e, table)).min_by_key(String::len),
        Expr::Repeat { expr, min } => {
            if *min == 0 {
                Some(String::new())
            } else {
                shortest(expr, table)
            }
        }
        Expr::Optional { .. } | Expr::Not { .. } | Expr::And { .. } | Expr::End => Some(String::new()),
    }
}

/// A shortest string derivable from `rule` (predicates ignored).
pub fn shortest_string(g: &Guideline, rule: &str) -> Option<String> {
    shortest_table(g).remove(rule)
}

/// A random derivation of `rule`. Past `max_depth` nested rule applications
/// the generator falls back to shortest derivations so it always terminates.
pub fn random_string<R: Rng + ?Sized>(g: &Guideline, rule: &str, rng: &mut R, max_depth: usize) -> Option<String> {
    let table = shortest_table(g);
    let body = &g.rule(rule)?.body;
    let mut out = String::new();
    gen(g, body, rng, max_depth, &table, &mut out)?;
    Some(out)
}

fn gen<R: Rng + ?Sized>(
    g: &Guideline,
    expr: &Expr,
    rng: &mut R,
    depth: usize,
    table: &HashMap<String, String>,
    out: &mut String,
) -> Option<()> {
    match expr {
        Expr::Literal { text, .. } => out.push_str(text),
        Expr::Class(class) => {
            let mut as_core = RngAdapter(rng);
            out.push(pick_from_class(class, Some(&mut as_core))?);
        }
        Expr::Ref { name } => {
            if depth == 0 {
                out.push_str(table.get(name)?);
            } else {
                gen(g, &g.rule(name)?.body, rng, depth - 1, table, out)?;
            }
        }
        Expr::Seq { items } => {
            for item in items {
                gen(g, item, rng, depth, table, out)?;
            }
        }
        Expr::Choice { alts } => {
            let i = rng.random_range(0..alts.len());
            gen(g, &alts[i], rng, depth, table, out)?;
        }
        Expr::Repeat { expr, min } => {
            let n = rng.random_range(*min as usize..=(*min as usize + 2));
            for _ in 0..n {
                gen(g, expr, rng, depth, table, out)?;
            }
        }
        Expr::Optional { expr } => {
            if rng.random_bool(0.5) {
                gen(g, expr, rng, depth, table, out)?;
            }
        }
        Expr::Not { .. } | Expr::And { .. } | Expr::End => {}
    }
    Some(())
}

struct RngAdapter<'a, R: Rng + ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> rand::RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
