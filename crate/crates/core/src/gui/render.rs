use std::collections::{BTreeMap, HashSet};

use super::{quote, FlagToggle, GuiSpec, GuiState, Piece, SlotKind, SlotSpec, SlotValue, StateError, Zone};

#[derive(Default)]
struct Writer {
    text: String,
}

impl Writer {
    fn push(&mut self, token: &str, glued: bool) {
        if token.is_empty() {
            return;
        }
        if !self.text.is_empty() && !glued {
            self.text.push(' ');
        }
        self.text.push_str(token);
    }
}

/// Renders `s` as command text. Flags appear in the zones of the selected
/// alternative in first-toggle order; runs of clustered short flags that
/// share a prefix are merged, so `-l`, `-a`, `-h` render as `-lah`.
pub fn serialize_state(spec: &GuiSpec, s: &GuiState) -> Result<String, StateError> {
    let alt = spec.alternatives.get(s.alternative).ok_or_else(|| StateError::UnknownId(s.alternative.to_string()))?;
    let mut r = Renderer { spec, state: s, done: HashSet::new() };
    let mut w = Writer::default();
    r.pieces(&alt.template, &s.slots, &mut w)?;
    if let Some(stray) = s.active_flags().into_iter().find(|id| !r.done.contains(*id)) {
        return Err(StateError::NotInAlternative(stray.to_string()));
    }
    Ok(w.text)
}

struct Renderer<'a> {
    spec: &'a GuiSpec,
    state: &'a GuiState,
    done: HashSet<&'a str>,
}

impl<'a> Renderer<'a> {
    fn pieces(&mut self, pieces: &'a [Piece], values: &BTreeMap<String, SlotValue>, w: &mut Writer) -> Result<(), StateError> {
        for p in pieces {
            match p {
                Piece::Fixed { text, glued } => w.push(text, *glued),
                Piece::Slot(slot) => slot_value(slot, values, w)?,
                Piece::Group { pieces, glued } => {
                    if has_value(pieces, values) {
                        let mut inner = Writer::default();
                        self.pieces(pieces, values, &mut inner)?;
                        w.push(&inner.text, *glued);
                    }
                }
                Piece::Zone(zone) => self.zone(zone, w)?,
            }
        }
        Ok(())
    }

    fn zone(&mut self, zone: &'a Zone, w: &mut Writer) -> Result<(), StateError> {
        let mut tokens: Vec<String> = Vec::new();
        let mut pending: Option<(String, String)> = None;
        for (id, toggle) in &self.state.toggles {
            if !toggle.on || self.done.contains(id.as_str()) || !zone.flags.contains(id) {
                continue;
            }
            self.done.insert(id);
            let group = self.spec.group(id).ok_or_else(|| StateError::UnknownId(id.clone()))?;
            let form = group.forms.get(toggle.form).ok_or_else(|| StateError::UnknownId(format!("{id}[{}]", toggle.form)))?;
            if let Some(c) = &form.cluster {
                match &mut pending {
                    Some((prefix, members)) if *prefix == c.prefix => members.push_str(&c.member),
                    _ => {
                        if let Some((p, m)) = pending.take() {
                            tokens.push(p + &m);
                        }
                        pending = Some((c.prefix.clone(), c.member.clone()));
                    }
                }
                continue;
            }
            if let Some((p, m)) = pending.take() {
                tokens.push(p + &m);
            }
            tokens.push(self.flag(toggle, &form.template)?);
        }
        if let Some((p, m)) = pending.take() {
            tokens.push(p + &m);
        }
        if zone.required && tokens.is_empty() {
            return Err(StateError::MissingRequiredSlot(zone.flags.join("|")));
        }
        for (k, t) in tokens.iter().enumerate() {
            w.push(t, k == 0 && zone.glued);
        }
        for operand in &zone.operands {
            if let Some(v) = self.state.slots.get(&operand.id) {
                for item in v.items() {
                    w.push(&quote(item), false);
                }
            }
        }
        Ok(())
    }

    fn flag(&mut self, toggle: &FlagToggle, template: &'a [Piece]) -> Result<String, StateError> {
        if let Some(raw) = &toggle.raw {
            return Ok(raw.clone());
        }
        let mut w = Writer::default();
        self.pieces(template, &toggle.values, &mut w)?;
        Ok(w.text)
    }
}

fn slot_value(slot: &SlotSpec, values: &BTreeMap<String, SlotValue>, w: &mut Writer) -> Result<(), StateError> {
    match values.get(&slot.id).filter(|v| !v.is_empty()) {
        Some(v) => {
            for (k, item) in v.items().into_iter().enumerate() {
                let item = if slot.kind == SlotKind::Run { item.to_string() } else { quote(item) };
                w.push(&item, k == 0 && slot.glued);
            }
            Ok(())
        }
        None if slot.optional => Ok(()),
        None => Err(StateError::MissingRequiredSlot(slot.id.clone())),
    }
}

fn has_value(pieces: &[Piece], values: &BTreeMap<String, SlotValue>) -> bool {
    pieces.iter().any(|p| match p {
        Piece::Slot(s) => values.get(&s.id).is_some_and(|v| !v.is_empty()),
        Piece::Group { pieces, .. } => has_value(pieces, values),
        _ => false,
    })
}
