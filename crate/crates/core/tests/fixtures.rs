use std::fs;
use std::path::PathBuf;

use guide_core::dsl::{load, serialize};
use guide_core::grammar::{shortest_string, Guideline};
use guide_core::gui::{extract_state, flatten, random_state, serialize_state, GuiSpec, Piece, DEFAULT_ALT_CAP};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn shipped() -> Vec<(String, String)> {
    let mut out = Vec::new();
    for dir in ["guidelines", "prompts/fewshot"] {
        let mut paths: Vec<_> = fs::read_dir(data_dir().join(dir))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "guide"))
            .collect();
        paths.sort();
        for p in paths {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            out.push((name, fs::read_to_string(&p).unwrap()));
        }
    }
    out
}

fn spec_for(src: &str) -> (Guideline, GuiSpec) {
    let g = load(src).unwrap();
    let spec = flatten(&g, DEFAULT_ALT_CAP).unwrap();
    (g, spec)
}

#[test]
fn every_fixture_is_shipped() {
    let names: Vec<String> = shipped().into_iter().map(|(n, _)| n).collect();
    for want in ["cut", "grep", "head", "ls", "rsync", "ln", "mdfind", "nl"] {
        assert!(names.iter().any(|n| n == want), "missing {want}");
    }
}

#[test]
fn source_round_trip() {
    for (name, src) in shipped() {
        let g = load(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
        let text = serialize(&g);
        assert_eq!(load(&text).unwrap(), g, "{name}");
        assert_eq!(serialize(&load(&text).unwrap()), text, "{name}: canonical form is not stable");
    }
}

#[test]
fn alternative_counts() {
    let golden = [("cut", 1), ("grep", 1), ("head", 1), ("ls", 1), ("rsync", 1), ("ln", 1), ("mdfind", 1), ("nl", 1)];
    for (name, src) in shipped() {
        let (_, spec) = spec_for(&src);
        let want = golden.iter().find(|(n, _)| *n == name).map(|(_, c)| *c).unwrap();
        assert_eq!(spec.alternatives.len(), want, "{name}");
        let again = flatten(&load(&src).unwrap(), DEFAULT_ALT_CAP).unwrap();
        assert_eq!(again, spec, "{name}: flatten is not deterministic");
    }
}

#[test]
fn state_round_trip() {
    for (name, src) in shipped() {
        let (g, spec) = spec_for(&src);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..100 {
            let s = random_state(&spec, &g, &mut rng);
            let text = serialize_state(&spec, &s).unwrap_or_else(|e| panic!("{name} #{k}: {e} in {s:?}"));
            let back = extract_state(&spec, &g, &text).unwrap_or_else(|e| panic!("{name} #{k}: `{text}`: {e}"));
            assert_eq!(back, s, "{name} #{k}: `{text}`");
        }
    }
}

#[test]
fn minimal_invocations_parse() {
    for (name, src) in shipped() {
        let (g, spec) = spec_for(&src);
        for alt in &spec.alternatives {
            let mut words = Vec::new();
            for p in &alt.template {
                match p {
                    Piece::Fixed { text, .. } => words.push(text.clone()),
                    Piece::Slot(s) if !s.optional => words.push(shortest_word(&g, &s.placeholder)),
                    _ => {}
                }
            }
            let text = words.join(" ");
            assert!(g.accepts(&text), "{name}: `{text}`");
        }
    }
}

fn shortest_word(g: &Guideline, rule: &str) -> String {
    match shortest_string(g, rule) {
        Some(s) if g.parse_rule(rule, &s).is_ok() => s,
        _ => "x".to_string(),
    }
}
