use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;

use crate::grammar::{Guideline, ParseTree, Span};

use super::{
    collect_slots, ExtractError, FlagToggle, GuiSpec, GuiState, Piece, RuleRole, SlotKind, SlotSpec, SlotValue, Zone,
};

/// Upper bound on group present/absent combinations tried per alternative.
const MAX_VARIANTS: usize = 256;

/// Parses `text` and reads it into a state of `spec`.
///
/// The parse tree is reduced to a flat signature of fixed words, flags and
/// argument values, which is matched against each alternative's template in
/// order. The first template that accounts for every item wins.
pub fn extract_state(spec: &GuiSpec, g: &Guideline, text: &str) -> Result<GuiState, ExtractError> {
    let tree = g.parse(text).map_err(ExtractError::Parse)?;
    let mut items = Vec::new();
    Signature { spec, input: text, items: &mut items }.expand(&tree);

    let mut seen = HashSet::new();
    for item in &items {
        if let Item::Flag { id, .. } = item {
            if !seen.insert(id.as_str()) {
                return Err(ExtractError::DuplicateFlag(id.clone()));
            }
        }
    }

    for alt in &spec.alternatives {
        for variant in linearize(&alt.template) {
            let m = Matcher { items: &items, input: text };
            let mut binds = Vec::new();
            if m.run(&variant, 0, 0, 0, &mut binds) {
                let mut state = GuiState::new(alt.id);
                for b in binds {
                    let value = if b.list {
                        match state.slots.remove(&b.id) {
                            Some(SlotValue::List(mut old)) => {
                                old.extend(b.values);
                                SlotValue::List(old)
                            }
                            _ => SlotValue::List(b.values),
                        }
                    } else {
                        SlotValue::Single(b.values.concat())
                    };
                    if !value.is_empty() {
                        state.slots.insert(b.id, value);
                    }
                }
                state.toggles = toggles(spec, &items)?;
                state.raw_text = Some(text.to_string());
                return Ok(state);
            }
        }
    }
    Err(ExtractError::NoAlternative)
}

#[derive(Debug)]
enum Item<'t> {
    Fixed { text: String, span: Span },
    Flag { id: String, node: &'t ParseTree, cluster: bool },
    Slot { rule: String, span: Span },
}

impl Item<'_> {
    fn span(&self) -> Span {
        match self {
            Item::Fixed { span, .. } | Item::Slot { span, .. } => *span,
            Item::Flag { node, .. } => node.span,
        }
    }
}

struct Signature<'a, 't> {
    spec: &'a GuiSpec,
    input: &'a str,
    items: &'a mut Vec<Item<'t>>,
}

impl<'t> Signature<'_, 't> {
    fn expand(&mut self, node: &'t ParseTree) {
        let mut pos = node.span.start;
        for child in &node.children {
            self.gap(pos, child.span.start);
            self.visit(child);
            pos = child.span.end;
        }
        self.gap(pos, node.span.end);
    }

    fn visit(&mut self, node: &'t ParseTree) {
        match self.spec.role(&node.rule).unwrap_or(RuleRole::Implicit) {
            RuleRole::Flag => self.items.push(Item::Flag { id: self.flag_id(node), node, cluster: false }),
            RuleRole::Arg | RuleRole::Implicit => {
                self.items.push(Item::Slot { rule: node.rule.clone(), span: node.span })
            }
            RuleRole::Cluster => {
                for child in &node.children {
                    if self.spec.role(&child.rule) == Some(RuleRole::Flag) {
                        self.items.push(Item::Flag { id: self.flag_id(child), node: child, cluster: true });
                    }
                }
            }
            RuleRole::Expand => self.expand(node),
        }
    }

    fn flag_id(&self, node: &ParseTree) -> String {
        self.spec
            .flag_groups
            .iter()
            .find(|g| g.forms.iter().any(|f| f.rule == node.rule))
            .map(|g| g.id.clone())
            .unwrap_or_else(|| node.rule.clone())
    }

    fn gap(&mut self, from: usize, to: usize) {
        let mut start = None;
        for (i, c) in self.input[from..to].char_indices() {
            let at = from + i;
            if c.is_whitespace() {
                if let Some(s) = start.take() {
                    self.word(s, at);
                }
            } else if start.is_none() {
                start = Some(at);
            }
        }
        if let Some(s) = start {
            self.word(s, to);
        }
    }

    fn word(&mut self, start: usize, end: usize) {
        self.items.push(Item::Fixed { text: self.input[start..end].to_string(), span: Span { start, end } });
    }
}

enum Lin<'a> {
    Fixed(String),
    Slot(&'a SlotSpec),
    Zone(&'a Zone),
}

/// Expands optional groups into straight-line variants, present first.
fn linearize(template: &[Piece]) -> Vec<Vec<Lin<'_>>> {
    let mut out: Vec<Vec<Lin<'_>>> = vec![vec![]];
    for p in template {
        match p {
            Piece::Fixed { text, .. } => {
                let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
                for v in &mut out {
                    v.push(Lin::Fixed(t.clone()));
                }
            }
            Piece::Slot(s) => out.iter_mut().for_each(|v| v.push(Lin::Slot(s))),
            Piece::Zone(z) => out.iter_mut().for_each(|v| v.push(Lin::Zone(z))),
            Piece::Group { pieces, .. } => {
                let inner = linearize(pieces);
                let mut next = Vec::new();
                for v in &out {
                    for i in &inner {
                        if next.len() >= MAX_VARIANTS {
                            break;
                        }
                        let mut joined: Vec<Lin<'_>> = v.iter().map(Lin::clone_ref).collect();
                        joined.extend(i.iter().map(Lin::clone_ref));
                        next.push(joined);
                    }
                    if next.len() < MAX_VARIANTS {
                        next.push(v.iter().map(Lin::clone_ref).collect());
                    }
                }
                out = next;
            }
        }
    }
    out
}

impl<'a> Lin<'a> {
    fn clone_ref(&self) -> Lin<'a> {
        match self {
            Lin::Fixed(t) => Lin::Fixed(t.clone()),
            Lin::Slot(s) => Lin::Slot(s),
            Lin::Zone(z) => Lin::Zone(z),
        }
    }
}

struct Bind {
    id: String,
    list: bool,
    values: Vec<String>,
}

struct Matcher<'a, 't> {
    items: &'a [Item<'t>],
    input: &'a str,
}

impl Matcher<'_, '_> {
    fn run(&self, pieces: &[Lin<'_>], k: usize, ii: usize, off: usize, binds: &mut Vec<Bind>) -> bool {
        let Some(piece) = pieces.get(k) else {
            return ii == self.items.len() && off == 0;
        };
        if let Lin::Fixed(t) = piece {
            return match self.fixed(t, ii, off) {
                Some((ii, off)) => self.run(pieces, k + 1, ii, off, binds),
                None => false,
            };
        }
        if off != 0 {
            return false;
        }
        match piece {
            Lin::Slot(slot) => self.slot(pieces, k, ii, slot, binds),
            Lin::Zone(zone) => self.zone(pieces, k, ii, zone, binds),
            Lin::Fixed(_) => unreachable!(),
        }
    }

    fn fixed(&self, t: &str, mut ii: usize, mut off: usize) -> Option<(usize, usize)> {
        let mut rest = t;
        while !rest.is_empty() {
            let Some(Item::Fixed { text, .. }) = self.items.get(ii) else { return None };
            let avail = &text[off..];
            if avail.len() > rest.len() {
                if !avail.starts_with(rest) {
                    return None;
                }
                off += rest.len();
                rest = "";
            } else {
                rest = rest.strip_prefix(avail)?;
                ii += 1;
                off = 0;
            }
        }
        Some((ii, off))
    }

    fn slot(&self, pieces: &[Lin<'_>], k: usize, ii: usize, slot: &SlotSpec, binds: &mut Vec<Bind>) -> bool {
        let min = usize::from(!slot.optional);
        let max = match slot.kind {
            SlotKind::Run => self.items[ii..].iter().take_while(|i| !matches!(i, Item::Flag { .. })).count(),
            _ => {
                let run = self.items[ii..]
                    .iter()
                    .take_while(|i| matches!(i, Item::Slot { rule, .. } if *rule == slot.placeholder))
                    .count();
                if slot.list {
                    run
                } else {
                    run.min(1)
                }
            }
        };
        for n in (min..=max).rev() {
            let values: Vec<String> = if n == 0 {
                vec![]
            } else if slot.kind == SlotKind::Run {
                let span = Span { start: self.items[ii].span().start, end: self.items[ii + n - 1].span().end };
                vec![self.input[span.start..span.end].to_string()]
            } else {
                self.items[ii..ii + n].iter().map(|i| self.text(i)).collect()
            };
            let pushed = !values.is_empty();
            if pushed {
                binds.push(Bind { id: slot.id.clone(), list: slot.list, values });
            }
            if self.run(pieces, k + 1, ii + n, 0, binds) {
                return true;
            }
            if pushed {
                binds.pop();
            }
        }
        false
    }

    fn zone(&self, pieces: &[Lin<'_>], k: usize, ii: usize, zone: &Zone, binds: &mut Vec<Bind>) -> bool {
        let fits = |item: &Item<'_>| match item {
            Item::Flag { id, .. } => zone.flags.contains(id),
            Item::Slot { rule, .. } => zone.operands.iter().any(|o| o.placeholder == *rule),
            Item::Fixed { .. } => false,
        };
        let mut max = self.items[ii..].iter().take_while(|i| fits(i)).count();
        if !zone.repeat {
            max = max.min(1);
        }
        let min = usize::from(zone.required);
        for n in (min..=max).rev() {
            let before = binds.len();
            for item in &self.items[ii..ii + n] {
                if let Item::Slot { rule, .. } = item {
                    if let Some(o) = zone.operands.iter().find(|o| o.placeholder == *rule) {
                        binds.push(Bind { id: o.id.clone(), list: true, values: vec![self.text(item)] });
                    }
                }
            }
            if self.run(pieces, k + 1, ii + n, 0, binds) {
                return true;
            }
            binds.truncate(before);
        }
        false
    }

    fn text(&self, item: &Item<'_>) -> String {
        let span = item.span();
        self.input[span.start..span.end].to_string()
    }
}

fn toggles(spec: &GuiSpec, items: &[Item<'_>]) -> Result<IndexMap<String, FlagToggle>, ExtractError> {
    let mut out = IndexMap::new();
    for item in items {
        let Item::Flag { id, node, cluster } = item else { continue };
        let group = spec.group(id).ok_or(ExtractError::NoAlternative)?;
        let form = group.form_index(&node.rule, node.alt.unwrap_or(0)).ok_or(ExtractError::NoAlternative)?;
        let template = &group.forms[form].template;
        let mut toggle = FlagToggle::new(form);
        toggle.values = embedded_values(spec, id, node, template);
        if !cluster {
            toggle.raw = Some(node.text.clone());
        }
        out.insert(id.clone(), toggle);
    }
    Ok(out)
}

fn embedded_values(spec: &GuiSpec, flag: &str, node: &ParseTree, template: &[Piece]) -> BTreeMap<String, SlotValue> {
    let mut found: Vec<(&str, &str)> = Vec::new();
    fn walk<'t>(spec: &GuiSpec, node: &'t ParseTree, out: &mut Vec<(&'t str, &'t str)>) {
        for child in &node.children {
            match spec.role(&child.rule) {
                Some(RuleRole::Expand) => walk(spec, child, out),
                _ => out.push((&child.rule, &child.text)),
            }
        }
    }
    walk(spec, node, &mut found);

    let mut slots = Vec::new();
    collect_slots(template, &mut slots);
    let mut filled: HashSet<&str> = HashSet::new();
    let mut values: BTreeMap<String, SlotValue> = BTreeMap::new();
    for (rule, text) in found {
        let target = slots.iter().find(|s| s.placeholder == rule && (s.list || !filled.contains(s.id.as_str())));
        match target {
            Some(s) if s.list => match values.entry(s.id.clone()).or_insert_with(|| SlotValue::List(vec![])) {
                SlotValue::List(v) => v.push(text.to_string()),
                SlotValue::Single(_) => {}
            },
            Some(s) => {
                filled.insert(&s.id);
                values.insert(s.id.clone(), SlotValue::Single(text.to_string()));
            }
            None => {
                values.entry(format!("{flag}.{rule}")).or_insert_with(|| SlotValue::Single(text.to_string()));
            }
        }
    }
    values
}
