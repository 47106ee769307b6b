use super::{FlagToggle, GuiSpec, GuiState, SlotValue, StateError};

/// Turns a flag on or off. A flag turned off keeps its place and values in
/// reserve, so toggling twice restores the state and its text exactly.
pub fn toggle_flag(spec: &GuiSpec, s: &GuiState, id: &str) -> Result<GuiState, StateError> {
    spec.group(id).ok_or_else(|| StateError::UnknownId(id.to_string()))?;
    let mut next = s.clone();
    next.raw_text = None;
    match next.toggles.get_mut(id) {
        Some(t) if t.on => t.on = false,
        Some(t) => {
            ensure_allowed(spec, s, id)?;
            t.on = true;
        }
        None => {
            ensure_allowed(spec, s, id)?;
            next.toggles.insert(id.to_string(), FlagToggle::new(0));
        }
    }
    Ok(next)
}

fn ensure_allowed(spec: &GuiSpec, s: &GuiState, id: &str) -> Result<(), StateError> {
    let alt = spec.alternatives.get(s.alternative).ok_or_else(|| StateError::UnknownId(s.alternative.to_string()))?;
    if alt.allows_flag(id) {
        Ok(())
    } else {
        Err(StateError::NotInAlternative(id.to_string()))
    }
}

/// Sets a slot of the selected alternative, or a value embedded in a flag
/// (`<flag id>.<rule>`). Filling a flag's value turns the flag on. An empty
/// value clears the slot.
pub fn set_slot(spec: &GuiSpec, s: &GuiState, id: &str, value: SlotValue) -> Result<GuiState, StateError> {
    let mut next = s.clone();
    next.raw_text = None;
    let alt = spec.alternatives.get(s.alternative).ok_or_else(|| StateError::UnknownId(s.alternative.to_string()))?;
    if let Some(slot) = alt.slots().into_iter().find(|sl| sl.id == id) {
        let value = shape(value, slot.list);
        if value.is_empty() {
            next.slots.remove(id);
        } else {
            next.slots.insert(id.to_string(), value);
        }
        return Ok(next);
    }

    let group = spec
        .flag_groups
        .iter()
        .find(|g| g.embedded_slots.iter().any(|e| e.id == id))
        .ok_or_else(|| StateError::UnknownId(id.to_string()))?;
    let slot = group.embedded_slots.iter().find(|e| e.id == id).expect("found above");
    let value = shape(value, slot.list);
    let has_slot = |form: usize| {
        group.forms.get(form).is_some_and(|f| {
            let mut slots = Vec::new();
            super::collect_slots(&f.template, &mut slots);
            slots.iter().any(|sl| sl.id == id)
        })
    };
    let first_with_slot = (0..group.forms.len()).find(|&k| has_slot(k)).unwrap_or(0);

    if value.is_empty() {
        if let Some(t) = next.toggles.get_mut(&group.id) {
            t.values.remove(id);
            t.raw = None;
        }
        return Ok(next);
    }
    if !next.is_on(&group.id) {
        ensure_allowed(spec, s, &group.id)?;
    }
    let toggle = next.toggles.entry(group.id.clone()).or_insert_with(|| FlagToggle::new(first_with_slot));
    toggle.on = true;
    if !has_slot(toggle.form) {
        toggle.form = first_with_slot;
    }
    toggle.values.insert(id.to_string(), value);
    toggle.raw = None;
    Ok(next)
}

fn shape(value: SlotValue, list: bool) -> SlotValue {
    match (value, list) {
        (SlotValue::Single(v), true) if v.is_empty() => SlotValue::List(vec![]),
        (SlotValue::Single(v), true) => SlotValue::List(vec![v]),
        (SlotValue::List(v), false) => SlotValue::Single(v.join(" ")),
        (v, _) => v,
    }
}

/// Switches to another command form, keeping the slots and flags it shares
/// with the current one.
pub fn select_alternative(spec: &GuiSpec, s: &GuiState, alt_id: usize) -> Result<GuiState, StateError> {
    let alt = spec.alternatives.get(alt_id).ok_or_else(|| StateError::UnknownId(alt_id.to_string()))?;
    let ids: Vec<String> = alt.slots().iter().map(|sl| sl.id.clone()).collect();
    let mut next = s.clone();
    next.alternative = alt_id;
    next.raw_text = None;
    next.slots.retain(|k, _| ids.contains(k));
    next.toggles.retain(|k, _| alt.allows_flag(k));
    Ok(next)
}

/// Flag ids whose id, spellings or descriptions contain `query`, ignoring
/// case. Matches on the id or a spelling rank first, then the short
/// description, then the long one; ties keep spec order.
pub fn search_flags(spec: &GuiSpec, query: &str) -> Vec<String> {
    let q = query.to_lowercase();
    let hit = |text: &str| text.to_lowercase().contains(&q);
    let mut ranked: Vec<(u8, usize, &str)> = Vec::new();
    for (k, g) in spec.flag_groups.iter().enumerate() {
        let tier = if hit(&g.id) || g.forms.iter().any(|f| hit(&f.rendering)) {
            0
        } else if hit(&g.short_desc) {
            1
        } else if g.long_desc.as_deref().is_some_and(hit) {
            2
        } else {
            continue;
        };
        ranked.push((tier, k, &g.id));
    }
    ranked.sort();
    ranked.into_iter().map(|(_, _, id)| id.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::load;
    use crate::grammar::Guideline;
    use crate::gui::{extract_state, flatten, serialize_state, DEFAULT_ALT_CAP};

    fn fixture(name: &str) -> (Guideline, GuiSpec) {
        let path = format!("{}/../../data/guidelines/{name}.guide", env!("CARGO_MANIFEST_DIR"));
        let g = load(&std::fs::read_to_string(path).unwrap()).unwrap();
        let spec = flatten(&g, DEFAULT_ALT_CAP).unwrap();
        (g, spec)
    }

    #[test]
    fn toggle_adds_flag_text() {
        let (g, spec) = fixture("grep");
        let s = extract_state(&spec, &g, "grep \"glass\" *.txt").unwrap();
        let s = toggle_flag(&spec, &s, "ignore-case").unwrap();
        assert_eq!(serialize_state(&spec, &s).unwrap(), "grep -i \"glass\" *.txt");
    }

    #[test]
    fn toggle_twice_restores_text_and_state() {
        let (g, spec) = fixture("grep");
        let s0 = extract_state(&spec, &g, "grep -i --after-context=3 -n x f").unwrap();
        for id in ["ignore-case", "after-context", "count", "line-number"] {
            let s2 = toggle_flag(&spec, &toggle_flag(&spec, &s0, id).unwrap(), id).unwrap();
            assert_eq!(s2, s0, "{id}");
            assert_eq!(serialize_state(&spec, &s2).unwrap(), serialize_state(&spec, &s0).unwrap(), "{id}");
        }
    }

    #[test]
    fn turning_off_clears_embedded_values() {
        let (g, spec) = fixture("grep");
        let s = extract_state(&spec, &g, "grep -A 3 x").unwrap();
        let off = toggle_flag(&spec, &s, "after-context").unwrap();
        assert_eq!(serialize_state(&spec, &off).unwrap(), "grep x");
        assert_eq!(off, extract_state(&spec, &g, "grep x").unwrap());
    }

    #[test]
    fn required_values_are_reported() {
        let (g, spec) = fixture("grep");
        let s = extract_state(&spec, &g, "grep x").unwrap();
        let s = toggle_flag(&spec, &s, "after-context").unwrap();
        assert_eq!(serialize_state(&spec, &s), Err(StateError::MissingRequiredSlot("after-context.NUM".into())));
        let s = set_slot(&spec, &s, "after-context.NUM", "3".into()).unwrap();
        assert_eq!(serialize_state(&spec, &s).unwrap(), "grep -A 3 x");
    }

    #[test]
    fn filling_a_flag_value_turns_it_on() {
        let (g, spec) = fixture("grep");
        let s = extract_state(&spec, &g, "grep x").unwrap();
        let s = set_slot(&spec, &s, "exclude.GLOB", "invoice.pdf".into()).unwrap();
        assert_eq!(serialize_state(&spec, &s).unwrap(), "grep --exclude=invoice.pdf x");
    }

    #[test]
    fn spaces_are_quoted_and_reparse_as_one_value() {
        let (g, spec) = fixture("grep");
        let s = extract_state(&spec, &g, "grep x").unwrap();
        let s = set_slot(&spec, &s, "FILE", SlotValue::List(vec!["my notes.txt".into(), "b.txt".into()])).unwrap();
        let text = serialize_state(&spec, &s).unwrap();
        assert_eq!(text, "grep x \"my notes.txt\" b.txt");
        let back = extract_state(&spec, &g, &text).unwrap();
        assert_eq!(back.slots["FILE"], SlotValue::List(vec!["\"my notes.txt\"".into(), "b.txt".into()]));
    }

    #[test]
    fn unknown_ids() {
        let (_, spec) = fixture("grep");
        let s = GuiState::new(0);
        assert_eq!(toggle_flag(&spec, &s, "nope"), Err(StateError::UnknownId("nope".into())));
        assert_eq!(set_slot(&spec, &s, "nope", "1".into()), Err(StateError::UnknownId("nope".into())));
        assert_eq!(select_alternative(&spec, &s, 9), Err(StateError::UnknownId("9".into())));
    }

    #[test]
    fn search_ranks_by_where_the_match_is() {
        let (_, spec) = fixture("grep");
        let hits = search_flags(&spec, "line");
        assert!(hits.contains(&"after-context".to_string()));
        assert_eq!(hits[0], "line-number");
        assert_eq!(search_flags(&spec, "LINE"), hits);
        assert_eq!(search_flags(&spec, "").len(), spec.flag_groups.len());
        assert!(search_flags(&spec, "zzzz").is_empty());
    }

    #[test]
    fn selecting_an_alternative_keeps_shared_slots() {
        let src = "command tar\nTar = \"tar\" (Create | Extract)\nCreate = \"-c\" \"-f\" ARCHIVE FILE+\nExtract = \"-x\" \"-f\" ARCHIVE\n@arg\nARCHIVE = operand\n@arg\nFILE = operand\n";
        let g = load(src).unwrap();
        let spec = flatten(&g, DEFAULT_ALT_CAP).unwrap();
        let s = extract_state(&spec, &g, "tar -c -f a.tar x").unwrap();
        let s = select_alternative(&spec, &s, 1).unwrap();
        assert_eq!(serialize_state(&spec, &s).unwrap(), "tar -x -f a.tar");
    }
}
