use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::grammar::{compile, random_string, shortest_string, Guideline, Rule};

use super::{needs_quoting, FlagToggle, GuiSpec, GuiState, Piece, SlotKind, SlotSpec, SlotValue, Zone};

const TRIES: usize = 40;
const MAX_DEPTH: usize = 4;

/// A random state of `spec` for round-trip testing. Slot values are sampled
/// from their rules and kept only when they parse on their own and need no
/// quoting.
pub fn random_state<R: Rng + ?Sized>(spec: &GuiSpec, g: &Guideline, rng: &mut R) -> GuiState {
    let alt = &spec.alternatives[rng.random_range(0..spec.alternatives.len())];
    let mut gen = Gen { spec, g, state: GuiState::new(alt.id) };
    let mut slots = BTreeMap::new();
    gen.pieces(&alt.template, &mut slots, rng);
    gen.state.slots = slots;
    gen.state
}

struct Gen<'a> {
    spec: &'a GuiSpec,
    g: &'a Guideline,
    state: GuiState,
}

impl Gen<'_> {
    fn pieces<R: Rng + ?Sized>(&mut self, pieces: &[Piece], out: &mut BTreeMap<String, SlotValue>, rng: &mut R) {
        for p in pieces {
            match p {
                Piece::Fixed { .. } => {}
                Piece::Slot(slot) => {
                    if slot.optional && rng.random_bool(0.5) {
                        continue;
                    }
                    if let Some(v) = self.slot(slot, rng) {
                        out.insert(slot.id.clone(), v);
                    }
                }
                Piece::Group { pieces, .. } => {
                    if rng.random_bool(0.5) {
                        self.group(pieces, out, rng);
                    }
                }
                Piece::Zone(zone) => self.zone(zone, out, rng),
            }
        }
    }

    /// Fills every slot in a group so that it renders.
    fn group<R: Rng + ?Sized>(&mut self, pieces: &[Piece], out: &mut BTreeMap<String, SlotValue>, rng: &mut R) {
        for p in pieces {
            match p {
                Piece::Slot(slot) => {
                    if let Some(v) = self.slot(slot, rng) {
                        out.insert(slot.id.clone(), v);
                    }
                }
                Piece::Group { pieces, .. } => self.group(pieces, out, rng),
                other => self.pieces(std::slice::from_ref(other), out, rng),
            }
        }
    }

    fn zone<R: Rng + ?Sized>(&mut self, zone: &Zone, out: &mut BTreeMap<String, SlotValue>, rng: &mut R) {
        let mut free: Vec<&String> = zone.flags.iter().filter(|f| !self.state.toggles.contains_key(*f)).collect();
        free.shuffle(rng);
        let mut chosen: Vec<&String> = if zone.repeat {
            free.iter().copied().filter(|_| rng.random_bool(0.3)).collect()
        } else if !free.is_empty() && (zone.required || rng.random_bool(0.5)) {
            vec![free[0]]
        } else {
            vec![]
        };
        if chosen.is_empty() && zone.required && !free.is_empty() {
            chosen.push(free[0]);
        }
        for id in chosen {
            let Some(group) = self.spec.group(id) else { continue };
            let form = rng.random_range(0..group.forms.len());
            let mut toggle = FlagToggle::new(form);
            let mut values = BTreeMap::new();
            self.pieces(&group.forms[form].template, &mut values, rng);
            toggle.values = values;
            self.state.toggles.insert(id.clone(), toggle);
        }
        for operand in &zone.operands {
            if rng.random_bool(0.5) {
                continue;
            }
            if let Some(v) = self.slot(operand, rng) {
                out.insert(operand.id.clone(), v);
            }
        }
    }

    fn slot<R: Rng + ?Sized>(&self, slot: &SlotSpec, rng: &mut R) -> Option<SlotValue> {
        if slot.list {
            let n = rng.random_range(1..=3);
            let items: Vec<String> = (0..n).filter_map(|_| self.value(slot, rng)).collect();
            return (!items.is_empty()).then_some(SlotValue::List(items));
        }
        self.value(slot, rng).map(SlotValue::Single)
    }

    fn value<R: Rng + ?Sized>(&self, slot: &SlotSpec, rng: &mut R) -> Option<String> {
        let run_grammar;
        let (g, rule) = match (&slot.kind, &slot.pattern) {
            (SlotKind::Run, Some(pattern)) => {
                let mut rules: Vec<Rule> = self.g.rules.values().cloned().collect();
                rules.push(Rule::new("__run", pattern.clone()).lexical(false));
                run_grammar = compile(rules, "__run", &self.g.command_name).ok()?;
                (&run_grammar, "__run")
            }
            _ => (self.g, slot.placeholder.as_str()),
        };
        let ok = |v: &str| !v.is_empty() && !needs_quoting(v) && g.parse_rule(rule, v).is_ok();
        for _ in 0..TRIES {
            if let Some(v) = random_string(g, rule, rng, MAX_DEPTH) {
                if ok(&v) {
                    return Some(v);
                }
            }
        }
        shortest_string(g, rule).filter(|v| ok(v))
    }
}
