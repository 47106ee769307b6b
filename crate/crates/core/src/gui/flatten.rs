use std::collections::{BTreeMap, HashMap, HashSet};

use crate::grammar::{Expr, Guideline};

use super::{
    collect_slots, Alternative, ClusterForm, FlagGroup, FlattenError, GuiSpec, Piece, RuleRole, SlotKind, SlotSpec,
    SurfaceForm, Zone,
};

pub const DEFAULT_ALT_CAP: u64 = 64;

/// Largest finite literal language an unannotated rule may have and still be
/// inlined as fixed text.
const MAX_INLINE_STRINGS: u64 = 64;

pub fn flatten(g: &Guideline, alt_cap: u64) -> Result<GuiSpec, FlattenError> {
    let roles = rule_roles(g);
    let cx = Cx { g, roles: &roles, clusters: cluster_prefixes(g, &roles), embed: None };
    let start = g.start();

    let count = cx.count(&start.body, &mut HashMap::new());
    if count > alt_cap {
        return Err(FlattenError::AlternativeExplosion { count, cap: alt_cap });
    }

    let mut alternatives = Vec::new();
    for mut template in cx.alts(&start.body, start.lexical, &start.name) {
        dedupe_slot_ids(&mut template);
        alternatives.push(Alternative { id: alternatives.len(), label: synopsis(&template), template });
    }

    Ok(GuiSpec {
        command_name: g.command_name.clone(),
        alternatives,
        flag_groups: flag_groups(&cx),
        rule_roles: roles,
    })
}

pub(crate) fn rule_roles(g: &Guideline) -> BTreeMap<String, RuleRole> {
    let refs: HashMap<&str, Vec<&str>> = g
        .rules
        .values()
        .map(|r| {
            let mut out = Vec::new();
            r.body.visit_refs(&mut |n| out.push(n));
            (r.name.as_str(), out)
        })
        .collect();
    let annotated = |n: &str| g.rule(n).is_some_and(|r| r.annotation.is_some());

    let mut reaches: HashSet<&str> = HashSet::new();
    loop {
        let mut changed = false;
        for (name, targets) in &refs {
            if !reaches.contains(name) && targets.iter().any(|t| annotated(t) || reaches.contains(t)) {
                reaches.insert(name);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let recursive = |start: &str| -> bool {
        let mut seen = HashSet::new();
        let mut stack: Vec<&str> = refs.get(start).cloned().unwrap_or_default();
        while let Some(n) = stack.pop() {
            if n == start {
                return true;
            }
            if seen.insert(n) {
                stack.extend(refs.get(n).into_iter().flatten().copied());
            }
        }
        false
    };

    let mut roles = BTreeMap::new();
    for rule in g.rules.values() {
        let role = if rule.flag_annotation().is_some() {
            RuleRole::Flag
        } else if rule.is_argument() {
            RuleRole::Arg
        } else if cluster_shape(g, &rule.body).is_some() && rule.lexical {
            RuleRole::Cluster
        } else if recursive(&rule.name) {
            RuleRole::Implicit
        } else if reaches.contains(rule.name.as_str()) {
            RuleRole::Expand
        } else if literal_count(g, &rule.body, 8).is_some_and(|n| n <= MAX_INLINE_STRINGS) {
            RuleRole::Expand
        } else {
            RuleRole::Implicit
        };
        roles.insert(rule.name.clone(), role);
    }
    roles
}

/// `prefix (flag | flag | ...)+` followed by nothing but predicates. Returns
/// the prefix and the member rules.
fn cluster_shape<'e>(g: &Guideline, body: &'e Expr) -> Option<(&'e str, Vec<&'e str>)> {
    let Expr::Seq { items } = body else { return None };
    let (Expr::Literal { text, .. }, Expr::Repeat { expr, min }) = (items.first()?, items.get(1)?) else {
        return None;
    };
    if *min < 1 || !items[2..].iter().all(is_predicate) {
        return None;
    }
    let members: Vec<&str> = match expr.as_ref() {
        Expr::Ref { name } => vec![name.as_str()],
        Expr::Choice { alts } => alts
            .iter()
            .map(|a| match a {
                Expr::Ref { name } => Some(name.as_str()),
                _ => None,
            })
            .collect::<Option<_>>()?,
        _ => return None,
    };
    members
        .iter()
        .all(|m| g.rule(m).is_some_and(|r| r.flag_annotation().is_some()))
        .then_some((text.as_str(), members))
}

fn is_predicate(e: &Expr) -> bool {
    matches!(e, Expr::Not { .. } | Expr::And { .. } | Expr::End)
}

fn literal_count(g: &Guideline, e: &Expr, depth: usize) -> Option<u64> {
    let cap = MAX_INLINE_STRINGS + 1;
    Some(match e {
        Expr::Literal { .. } | Expr::Not { .. } | Expr::And { .. } | Expr::End => 1,
        Expr::Seq { items } => {
            let mut n = 1u64;
            for i in items {
                n = n.saturating_mul(literal_count(g, i, depth)?).min(cap);
            }
            n
        }
        Expr::Choice { alts } => {
            let mut n = 0u64;
            for a in alts {
                n = n.saturating_add(literal_count(g, a, depth)?).min(cap);
            }
            n
        }
        Expr::Optional { expr } => literal_count(g, expr, depth)?.saturating_add(1).min(cap),
        Expr::Ref { name } if depth > 0 => literal_count(g, &g.rule(name)?.body, depth - 1)?,
        _ => return None,
    })
}

fn cluster_prefixes(g: &Guideline, roles: &BTreeMap<String, RuleRole>) -> HashMap<String, String> {
    let mut out = HashMap::new();
    for rule in g.rules.values() {
        if roles.get(&rule.name) != Some(&RuleRole::Cluster) {
            continue;
        }
        if let Some((prefix, members)) = cluster_shape(g, &rule.body) {
            for m in members {
                out.entry(m.to_string()).or_insert_with(|| prefix.to_string());
            }
        }
    }
    out
}

struct Members {
    flags: Vec<String>,
    operands: Vec<(String, SlotKind)>,
}

struct Cx<'a> {
    g: &'a Guideline,
    roles: &'a BTreeMap<String, RuleRole>,
    clusters: HashMap<String, String>,
    /// Set while building a flag's surface forms: the flag id that scopes
    /// embedded slot ids. Nested choices then keep only their first branch.
    embed: Option<&'a str>,
}

impl Cx<'_> {
    fn role(&self, name: &str) -> RuleRole {
        self.roles.get(name).copied().unwrap_or(RuleRole::Implicit)
    }

    fn flag_id(&self, rule: &str) -> String {
        self.g.rule(rule).and_then(|r| r.flag_annotation()).map(|f| f.id.clone()).unwrap_or_default()
    }

    fn cluster_members(&self, rule: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        if let Some((_, members)) = self.g.rule(rule).and_then(|r| cluster_shape(self.g, &r.body)) {
            for m in members {
                let id = self.flag_id(m);
                if !out.contains(&id) {
                    out.push(id);
                }
            }
        }
        out
    }

    fn slot(&self, name: &str, kind: SlotKind) -> SlotSpec {
        let id = match self.embed {
            Some(flag) => format!("{flag}.{name}"),
            None => name.to_string(),
        };
        SlotSpec { id, placeholder: name.to_string(), kind, list: false, optional: false, glued: false, pattern: None }
    }

    /// Flags and positional slots when `e` is nothing but a choice among them.
    fn members(&self, e: &Expr) -> Option<Members> {
        if self.embed.is_some() {
            return None;
        }
        match e {
            Expr::Ref { name } => Some(match self.role(name) {
                RuleRole::Flag => Members { flags: vec![self.flag_id(name)], operands: vec![] },
                RuleRole::Cluster => Members { flags: self.cluster_members(name), operands: vec![] },
                RuleRole::Arg => Members { flags: vec![], operands: vec![(name.clone(), SlotKind::Arg)] },
                RuleRole::Implicit => Members { flags: vec![], operands: vec![(name.clone(), SlotKind::Implicit)] },
                RuleRole::Expand => self.members(&self.g.rule(name)?.body)?,
            }),
            Expr::Choice { alts } => {
                let mut acc = Members { flags: vec![], operands: vec![] };
                for a in alts {
                    let m = self.members(a)?;
                    for f in m.flags {
                        if !acc.flags.contains(&f) {
                            acc.flags.push(f);
                        }
                    }
                    for o in m.operands {
                        if !acc.operands.contains(&o) {
                            acc.operands.push(o);
                        }
                    }
                }
                Some(acc)
            }
            Expr::Seq { items } => {
                let mut core = items.iter().filter(|i| !is_predicate(i));
                let only = core.next()?;
                if core.next().is_some() {
                    return None;
                }
                self.members(only)
            }
            _ => None,
        }
    }

    fn zone(&self, m: Members, repeat: bool, required: bool) -> Piece {
        let operands = m
            .operands
            .into_iter()
            .map(|(name, kind)| SlotSpec { list: true, optional: true, ..self.slot(&name, kind) })
            .collect();
        Piece::Zone(Zone { flags: m.flags, operands, repeat, required, glued: false })
    }

    /// Upper bound on the number of alternatives `alts` would produce.
    fn count(&self, e: &Expr, memo: &mut HashMap<String, u64>) -> u64 {
        match e {
            Expr::Ref { name } if self.role(name) == RuleRole::Expand => {
                if let Some(&n) = memo.get(name) {
                    return n;
                }
                let n = match self.g.rule(name) {
                    Some(r) => self.count(&r.body, memo),
                    None => 1,
                };
                memo.insert(name.clone(), n);
                n
            }
            Expr::Seq { items } => items.iter().fold(1u64, |acc, i| acc.saturating_mul(self.count(i, memo))),
            Expr::Choice { alts } => alts.iter().fold(0u64, |acc, a| acc.saturating_add(self.count(a, memo))),
            Expr::Optional { expr } => {
                if self.members(expr).is_some_and(|m| !m.flags.is_empty()) {
                    return 1;
                }
                match self.count(expr, memo) {
                    1 => 1,
                    n => n.saturating_add(1),
                }
            }
            _ => 1,
        }
    }

    fn alts(&self, e: &Expr, lexical: bool, rule: &str) -> Vec<Vec<Piece>> {
        match e {
            Expr::Literal { text, .. } => vec![vec![Piece::Fixed { text: text.clone(), glued: false }]],
            Expr::Class(_) => vec![vec![Piece::Slot(SlotSpec {
                pattern: Some(e.clone()),
                ..self.slot(&format!("{rule}#text"), SlotKind::Run)
            })]],
            Expr::Not { .. } | Expr::And { .. } | Expr::End => vec![vec![]],
            Expr::Ref { name } => {
                let piece = match (self.role(name), self.embed) {
                    (RuleRole::Expand, _) => {
                        let Some(r) = self.g.rule(name) else { return vec![vec![]] };
                        return self.alts(&r.body, r.lexical, &r.name);
                    }
                    (RuleRole::Flag, None) => {
                        self.zone(Members { flags: vec![self.flag_id(name)], operands: vec![] }, false, true)
                    }
                    (RuleRole::Cluster, None) => {
                        self.zone(Members { flags: self.cluster_members(name), operands: vec![] }, true, true)
                    }
                    (RuleRole::Arg, _) => Piece::Slot(self.slot(name, SlotKind::Arg)),
                    _ => Piece::Slot(self.slot(name, SlotKind::Implicit)),
                };
                vec![vec![piece]]
            }
            Expr::Seq { items } => {
                let mut acc: Vec<Vec<Piece>> = vec![vec![]];
                for item in items {
                    let next = self.alts(item, lexical, rule);
                    let mut out = Vec::with_capacity(acc.len() * next.len());
                    for prefix in &acc {
                        for tail in &next {
                            let mut joined = prefix.clone();
                            for (k, piece) in tail.iter().enumerate() {
                                let mut piece = piece.clone();
                                if k == 0 && lexical && !joined.is_empty() {
                                    piece.set_glued(true);
                                }
                                joined.push(piece);
                            }
                            out.push(joined);
                        }
                    }
                    acc = out;
                }
                dedupe(acc)
            }
            Expr::Choice { alts } => {
                if self.embed.is_some() {
                    return self.alts(&alts[0], lexical, rule);
                }
                dedupe(alts.iter().flat_map(|a| self.alts(a, lexical, rule)).collect())
            }
            Expr::Optional { expr } => {
                if let Some(m) = self.members(expr).filter(|m| !m.flags.is_empty()) {
                    return vec![vec![self.zone(m, false, false)]];
                }
                let inner = self.alts(expr, lexical, rule);
                if inner.len() == 1 {
                    let mut pieces = inner.into_iter().next().unwrap_or_default();
                    return match pieces.as_mut_slice() {
                        [] => vec![vec![]],
                        [Piece::Slot(s)] => {
                            s.optional = true;
                            vec![pieces]
                        }
                        [Piece::Zone(z)] => {
                            z.required = false;
                            vec![pieces]
                        }
                        _ => vec![vec![Piece::Group { pieces, glued: false }]],
                    };
                }
                let mut out = vec![vec![]];
                out.extend(inner);
                dedupe(out)
            }
            Expr::Repeat { expr, min } => {
                let required = *min >= 1;
                if let Some(m) = self.members(expr) {
                    if !m.flags.is_empty() {
                        return vec![vec![self.zone(m, true, required)]];
                    }
                    if let [(name, kind)] = m.operands.as_slice() {
                        let slot = SlotSpec { list: true, optional: !required, ..self.slot(name, *kind) };
                        return vec![vec![Piece::Slot(slot)]];
                    }
                }
                if let Expr::Ref { name } = expr.as_ref() {
                    if matches!(self.role(name), RuleRole::Arg | RuleRole::Implicit) {
                        let kind = if self.role(name) == RuleRole::Arg { SlotKind::Arg } else { SlotKind::Implicit };
                        let slot = SlotSpec { list: true, optional: !required, ..self.slot(name, kind) };
                        return vec![vec![Piece::Slot(slot)]];
                    }
                }
                let slot = SlotSpec {
                    optional: !required,
                    pattern: Some(e.clone()),
                    placeholder: e.to_string(),
                    ..self.slot(&format!("{rule}#repeat"), SlotKind::Run)
                };
                vec![vec![Piece::Slot(slot)]]
            }
        }
    }
}

fn dedupe(alts: Vec<Vec<Piece>>) -> Vec<Vec<Piece>> {
    let mut out: Vec<Vec<Piece>> = Vec::with_capacity(alts.len());
    for a in alts {
        if !out.contains(&a) {
            out.push(a);
        }
    }
    out
}

/// Gives repeated slot ids in one template a `#k` suffix.
fn dedupe_slot_ids(template: &mut [Piece]) {
    fn bump(slot: &mut SlotSpec, seen: &mut HashMap<String, usize>) {
        let n = seen.entry(slot.id.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            slot.id = format!("{}#{}", slot.id, n);
        }
    }
    fn go(pieces: &mut [Piece], seen: &mut HashMap<String, usize>) {
        for p in pieces {
            match p {
                Piece::Slot(s) => bump(s, seen),
                Piece::Zone(z) => z.operands.iter_mut().for_each(|o| bump(o, seen)),
                Piece::Group { pieces, .. } => go(pieces, seen),
                Piece::Fixed { .. } => {}
            }
        }
    }
    go(template, &mut HashMap::new());
}

/// A usage-line rendering of a template.
pub(crate) fn synopsis(pieces: &[Piece]) -> String {
    let mut out = String::new();
    for p in pieces {
        let text = match p {
            Piece::Fixed { text, .. } => text.clone(),
            Piece::Slot(s) => {
                let mut t = s.placeholder.clone();
                if s.list {
                    t.push_str("...");
                }
                if s.optional {
                    t = format!("[{t}]");
                }
                t
            }
            Piece::Zone(z) => {
                let mut t = if z.required { "OPTION".to_string() } else { "[OPTION]".to_string() };
                if z.repeat {
                    t.push_str("...");
                }
                for o in &z.operands {
                    t.push_str(&format!(" [{}]...", o.placeholder));
                }
                t
            }
            Piece::Group { pieces, .. } => format!("[{}]", synopsis(pieces)),
        };
        if text.is_empty() {
            continue;
        }
        if !out.is_empty() && !p.glued() {
            out.push(' ');
        }
        out.push_str(&text);
    }
    out
}

fn flag_groups(cx: &Cx<'_>) -> Vec<FlagGroup> {
    let g = cx.g;
    let mut reachable: HashSet<&str> = HashSet::new();
    let mut stack = vec![g.start_rule.as_str()];
    while let Some(n) = stack.pop() {
        if reachable.insert(n) {
            if let Some(r) = g.rule(n) {
                r.body.visit_refs(&mut |t| stack.push(t));
            }
        }
    }

    let mut groups: Vec<FlagGroup> = Vec::new();
    for rule in g.rules.values() {
        let Some(flag) = rule.flag_annotation() else { continue };
        if !reachable.contains(rule.name.as_str()) {
            continue;
        }
        let idx = match groups.iter().position(|gr| gr.id == flag.id) {
            Some(i) => i,
            None => {
                groups.push(FlagGroup {
                    id: flag.id.clone(),
                    short_desc: flag.short_desc.clone(),
                    long_desc: flag.long_desc.clone(),
                    forms: vec![],
                    embedded_slots: vec![],
                });
                groups.len() - 1
            }
        };
        let form_cx = Cx { g, roles: cx.roles, clusters: HashMap::new(), embed: Some(&flag.id) };
        let bodies: Vec<&Expr> = match &rule.body {
            Expr::Choice { alts } => alts.iter().collect(),
            body => vec![body],
        };
        for (alt, body) in bodies.into_iter().enumerate() {
            let mut template = form_cx.alts(body, rule.lexical, &rule.name).into_iter().next().unwrap_or_default();
            dedupe_slot_ids(&mut template);
            let mut rendering = synopsis(&template);
            let cluster = cx.clusters.get(&rule.name).map(|prefix| {
                let member = rendering.clone();
                rendering = format!("{prefix}{member}");
                ClusterForm { prefix: prefix.clone(), member }
            });
            let group = &mut groups[idx];
            let mut slots = Vec::new();
            collect_slots(&template, &mut slots);
            for s in slots {
                if !group.embedded_slots.iter().any(|e| e.id == s.id) {
                    group.embedded_slots.push(s.clone());
                }
            }
            group.forms.push(SurfaceForm { rule: rule.name.clone(), alt, rendering, template, cluster });
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::load;

    fn fixture(name: &str) -> Guideline {
        let path = format!("{}/../../data/guidelines/{name}.guide", env!("CARGO_MANIFEST_DIR"));
        load(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn grep_has_one_form() {
        let spec = flatten(&fixture("grep"), DEFAULT_ALT_CAP).unwrap();
        assert_eq!(spec.alternatives.len(), 1);
        assert_eq!(spec.alternatives[0].label, "grep [OPTION]... PATTERN [FILE...]");
        let ic = spec.group("ignore-case").unwrap();
        let forms: Vec<&str> = ic.forms.iter().map(|f| f.rendering.as_str()).collect();
        assert_eq!(forms, ["-i", "--ignore-case"]);
        let ac = spec.group("after-context").unwrap();
        let forms: Vec<&str> = ac.forms.iter().map(|f| f.rendering.as_str()).collect();
        assert_eq!(forms, ["-A NUM", "--after-context=NUM"]);
        assert_eq!(ac.embedded_slots.len(), 1);
        assert_eq!(ac.embedded_slots[0].id, "after-context.NUM");
        assert_eq!(spec.group("color").unwrap().forms[0].rendering, "--color[=WHEN]");
    }

    #[test]
    fn trivial_command() {
        let g = load("command true\nCmd = \"true\"\n").unwrap();
        let spec = flatten(&g, DEFAULT_ALT_CAP).unwrap();
        assert_eq!(spec.alternatives.len(), 1);
        assert!(spec.flag_groups.is_empty());
    }

    #[test]
    fn clusters_share_groups_with_long_forms() {
        let spec = flatten(&fixture("ls"), DEFAULT_ALT_CAP).unwrap();
        let all = spec.group("all").unwrap();
        let forms: Vec<&str> = all.forms.iter().map(|f| f.rendering.as_str()).collect();
        assert_eq!(forms, ["-a", "--all"]);
        assert_eq!(all.forms[0].cluster, Some(ClusterForm { prefix: "-".into(), member: "a".into() }));
        assert_eq!(spec.role("cluster"), Some(RuleRole::Cluster));
        let zone = spec.alternatives[0].zones()[0];
        assert!(zone.flags.contains(&"long-format".to_string()));
        assert!(zone.flags.contains(&"color".to_string()));
    }

    #[test]
    fn explosion_is_reported() {
        let src = std::fs::read_to_string(format!(
            "{}/../../data/fixtures/pathological.guide",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap();
        let g = load(&src).unwrap();
        assert_eq!(flatten(&g, 64), Err(FlattenError::AlternativeExplosion { count: 2048, cap: 64 }));
        assert_eq!(flatten(&g, 4096).unwrap().alternatives.len(), 2048);
    }

    #[test]
    fn top_level_choices_become_alternatives() {
        let src = "command tar\nTar = \"tar\" (Create | Extract)\nCreate = \"-c\" \"-f\" ARCHIVE FILE+\nExtract = \"-x\" \"-f\" ARCHIVE\n@arg\nARCHIVE = operand\n@arg\nFILE = operand\n";
        let spec = flatten(&load(src).unwrap(), DEFAULT_ALT_CAP).unwrap();
        let labels: Vec<&str> = spec.alternatives.iter().map(|a| a.label.as_str()).collect();
        assert_eq!(labels, ["tar -c -f ARCHIVE FILE...", "tar -x -f ARCHIVE"]);
    }

    #[test]
    fn optional_pieces_and_duplicate_slots() {
        let src = "command cp\nCp = \"cp\" (\"-t\" DIR)? FILE FILE\n@arg\nDIR = operand\n@arg\nFILE = operand\n";
        let spec = flatten(&load(src).unwrap(), DEFAULT_ALT_CAP).unwrap();
        let alt = &spec.alternatives[0];
        assert_eq!(alt.label, "cp [-t DIR] FILE FILE");
        let ids: Vec<&str> = alt.slots().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["DIR", "FILE", "FILE#2"]);
    }

    #[test]
    fn unannotated_text_is_an_implicit_slot() {
        let g = load("command echo\nEcho = \"echo\" word*\n").unwrap();
        let spec = flatten(&g, DEFAULT_ALT_CAP).unwrap();
        let slots = spec.alternatives[0].slots();
        assert_eq!(slots[0].kind, SlotKind::Implicit);
        assert!(slots[0].list);
    }
}
