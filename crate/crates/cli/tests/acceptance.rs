//! Acceptance criteria, one pass/fail line each.
//!
//!     cargo test -p guide-cli --test acceptance

#[path = "../../core/tests/support/scenarios.rs"]
mod scenarios;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use guide_core::dsl::{lint_sequencing, load, LintKind};
use guide_core::eval::{build_report, load_corpus, parse_rate, NotRecreatable, DEFAULT_SAMPLE_SIZE, DEFAULT_SEED};
use guide_core::gen::{AgentKind, LlmClient, LlmParams, Pipeline, PipelineConfig, PipelineError, PipelineReport, Prompt, PromptPack, RouterBackend, Stage};
use guide_core::grammar::{divergences, Guideline};
use guide_core::gui::{
    extract_state, flatten, random_state, serialize_state, set_slot, toggle_flag, FlattenError, GuiSpec, GuiState, SlotValue, StateError,
    DEFAULT_ALT_CAP,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn guides_in(dir: &Path) -> Vec<(String, Guideline)> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "guide"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let g = load(&fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, g)
        })
        .collect()
}

fn fixture(name: &str) -> (Guideline, GuiSpec) {
    let g = load(&fs::read_to_string(data().join("guidelines").join(format!("{name}.guide"))).unwrap()).unwrap();
    let spec = flatten(&g, DEFAULT_ALT_CAP).unwrap();
    (g, spec)
}

fn flag_set(s: &GuiState) -> BTreeSet<String> {
    s.active_flags().into_iter().map(String::from).collect()
}

fn set(ids: &[&str]) -> BTreeSet<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

fn kernel_oracle() -> Outcome {
    let start = Instant::now();
    let toys = guides_in(&data().join("fixtures/toys"));
    ensure!(toys.len() >= 10, "only {} toy grammars", toys.len());
    let mut checked = 0;
    for (name, g) in &toys {
        let bad = divergences(g, 6, 'z').map_err(|e| format!("{name}: {e}"))?;
        ensure!(bad.is_empty(), "{name}: parser and enumeration disagree on {bad:?}");
        checked += 1;
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    Ok(format!("{checked} grammars, strings up to length 6, 0 divergences, {took:.2?}"))
}

fn grep_walkthrough() -> Outcome {
    let (g, spec) = fixture("grep");
    let reparse = |text: &str, want: &[&str]| -> Result<GuiState, String> {
        let s = extract_state(&spec, &g, text).map_err(|e| format!("`{text}`: {e}"))?;
        ensure!(flag_set(&s) == set(want), "`{text}` has flags {:?}", flag_set(&s));
        Ok(s)
    };
    let render = |s: &GuiState| serialize_state(&spec, s).map_err(|e| e.to_string());
    let err = |e: StateError| e.to_string();

    let s = reparse("grep \"glass\" *.txt", &[])?;
    let s = toggle_flag(&spec, &s, "ignore-case").map_err(err)?;
    let t1 = render(&s)?;
    ensure!(t1 == "grep -i \"glass\" *.txt", "after -i: {t1}");
    let s = reparse(&t1, &["ignore-case"])?;

    let pending = toggle_flag(&spec, &s, "after-context").map_err(err)?;
    ensure!(
        serialize_state(&spec, &pending) == Err(StateError::MissingRequiredSlot("after-context.NUM".into())),
        "-A without a value should need one"
    );
    let s = set_slot(&spec, &pending, "after-context.NUM", SlotValue::from("3")).map_err(err)?;
    let t2 = render(&s)?;
    ensure!(t2 == "grep -i -A 3 \"glass\" *.txt", "after -A 3: {t2}");
    reparse(&t2, &["ignore-case", "after-context"])?;

    let t3 = t2.replace("-A 3", "-A 8");
    let s = reparse(&t3, &["ignore-case", "after-context"])?;
    let value = s.toggles["after-context"].values.get("after-context.NUM").cloned();
    ensure!(value == Some(SlotValue::from("8")), "NUM is {value:?}");

    let s = set_slot(&spec, &s, "exclude.GLOB", SlotValue::from("invoice.txt")).map_err(err)?;
    let t4 = render(&s)?;
    ensure!(t4 == "grep -i -A 8 --exclude=invoice.txt \"glass\" *.txt", "after --exclude: {t4}");
    let back = reparse(&t4, &["ignore-case", "after-context", "exclude"])?;
    ensure!(back == s, "reparsed state differs");
    Ok(format!("{t1} -> {t2} -> {t3} -> {t4}"))
}

fn ls_lah() -> Outcome {
    let (g, spec) = fixture("ls");
    let s = extract_state(&spec, &g, "ls -lah").map_err(|e| e.to_string())?;
    ensure!(flag_set(&s) == set(&["long-format", "all", "human-readable"]), "flags {:?}", flag_set(&s));
    let mut got = Vec::new();
    for (flag, want) in [("long-format", "ls -ah"), ("all", "ls -lh"), ("human-readable", "ls -la")] {
        let off = toggle_flag(&spec, &s, flag).map_err(|e| e.to_string())?;
        let text = serialize_state(&spec, &off).map_err(|e| e.to_string())?;
        ensure!(text == want, "without {flag}: {text}");
        let again = extract_state(&spec, &g, &text).map_err(|e| e.to_string())?;
        ensure!(again == off, "`{text}` reparses to another state");
        got.push(text);
    }
    Ok(got.join(", "))
}

fn round_trip() -> Outcome {
    let mut shipped = guides_in(&data().join("guidelines"));
    shipped.extend(guides_in(&data().join("prompts/fewshot")));
    let mut failures = Vec::new();
    for (name, g) in &shipped {
        let spec = flatten(g, DEFAULT_ALT_CAP).map_err(|e| format!("{name}: {e}"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in 0..100 {
            let s = random_state(&spec, g, &mut rng);
            let ok = serialize_state(&spec, &s).ok().and_then(|t| extract_state(&spec, g, &t).ok()).is_some_and(|back| back == s);
            if !ok {
                failures.push(format!("{name} #{k}"));
            }
        }
    }
    ensure!(failures.is_empty(), "{} failures: {:?}", failures.len(), &failures[..failures.len().min(5)]);
    Ok(format!("{} fixtures x 100 states, 0 failures", shipped.len()))
}

fn linter() -> Outcome {
    let g = load(&fs::read_to_string(data().join("fixtures/print.guide")).unwrap()).map_err(|e| e.to_string())?;
    let findings = lint_sequencing(&g);
    let seq: Vec<_> = findings.iter().filter(|f| f.kind == LintKind::Sequencing).collect();
    ensure!(findings.len() == 1 && seq.len() == 1, "{} findings", findings.len());
    let witness = seq[0].witness.clone().unwrap_or_default();
    ensure!(witness == "--print0" && seq[0].verify(&g), "witness {witness:?} not verified");

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let alnum: Vec<char> = ('a'..='z').chain('0'..='9').collect();
    let word = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| -> String {
        let n = rng.random_range(lo..=hi);
        (0..n).map(|_| alnum[rng.random_range(0..alnum.len())]).collect()
    };
    let trials = 500;
    let mut found = 0;
    for _ in 0..trials {
        let short = format!("-{}", word(&mut rng, 1, 6));
        let long = format!("{short}{}", word(&mut rng, 1, 4));
        let src = format!("command find\nFind = \"find\" Action*\nAction = \"{short}\" | \"{long}\"\n");
        let g = load(&src).map_err(|e| e.to_string())?;
        let f = lint_sequencing(&g);
        if f.len() == 1 && f[0].kind == LintKind::Sequencing && f[0].witness.as_deref() == Some(long.as_str()) && f[0].verify(&g) {
            found += 1;
        }
    }
    ensure!(found == trials, "detected {found}/{trials}");
    Ok(format!("print/print0 witness `{witness}` verified; {found}/{trials} short-first pairs detected"))
}

fn within_caps(report: &PipelineReport) -> Result<(), String> {
    let cfg = report.config;
    ensure!((cfg.max_draft_retries, cfg.max_restarts) == (5, 5), "caps {cfg:?}");
    ensure!(report.rounds.len() <= cfg.max_restarts + 1, "{} runs", report.rounds.len());
    for r in &report.rounds {
        ensure!(r.drafts.len() <= cfg.max_draft_retries + 1, "{} drafts", r.drafts.len());
        let sessions = r
            .drafts
            .iter()
            .filter_map(|d| d.syntax_agent.as_ref())
            .chain(r.linter.iter().map(|s| &s.session))
            .chain(r.repairs.iter().map(|s| &s.session));
        for s in sessions {
            let budget = match s.kind {
                AgentKind::Syntax | AgentKind::Linter => 10,
                AgentKind::TestRepair => 30,
            };
            ensure!(s.budget == budget && s.turns.len() <= budget, "{:?} used {} of {}", s.kind, s.turns.len(), s.budget);
        }
    }
    Ok(())
}

fn pipeline() -> Outcome {
    let (happy, _) = scenarios::replay("mkdir");
    let happy = happy.map_err(|e| format!("happy: {e}"))?.report;
    ensure!((happy.passed, happy.total, happy.restarts) == (20, 20, 0), "happy: {}/{} after {} restarts", happy.passed, happy.total, happy.restarts);

    let (regen, _) = scenarios::replay("mkdir-regenerate");
    let regen = regen.map_err(|e| format!("regenerate: {e}"))?.report;
    let round = &regen.rounds[0];
    ensure!(round.drafts[0].passed == Some(0) && round.draft_regenerations == 1, "regenerate: counter {}", round.draft_regenerations);
    ensure!(regen.summary().contains("draft regenerations: 1"), "counter missing from the report");

    let (rejected, _) = scenarios::replay("mkdir-rejected");
    let rejected = rejected.map_err(|e| format!("rejected: {e}"))?.report;
    let step = &rejected.rounds[0].repairs[0];
    ensure!(!step.accepted && step.failures_after.is_some_and(|a| a > step.failures_before), "worsening repair was accepted");

    let hopeless = |stage: Stage, _: &Prompt| match stage {
        Stage::SuiteBase | Stage::SuiteVariety => scenarios::happy()(stage, &Prompt { system: String::new(), user: String::new() }),
        Stage::Draft => Some("```guide\ncommand mkdir\nMkdir = (\"mkdir\"\n```".to_string()),
        Stage::SyntaxAgent => Some("```json\n{\"action\": \"read\"}\n```".to_string()),
        _ => None,
    };
    let llm = LlmClient::direct(RouterBackend(hopeless), LlmParams::default());
    let pack = PromptPack::builtin();
    let capped = match (Pipeline { llm: &llm, pack: &pack, config: PipelineConfig::default() }).run("mkdir", "MKDIR(1)") {
        Err(PipelineError::Failed { report, .. }) => *report,
        other => return Err(format!("hopeless run: {other:?}")),
    };
    for r in [&happy, &regen, &rejected, &capped] {
        within_caps(r)?;
    }
    let drafts = llm.calls().iter().filter(|(s, _)| *s == Stage::Draft).count();
    ensure!(drafts == 36, "{drafts} draft requests under caps 5/5");
    Ok(format!(
        "(a) 20/20, 0 restarts; (b) 1 regeneration; (c) repair {}->{} rejected; (d) caps held, {drafts} drafts at most",
        step.failures_before,
        step.failures_after.unwrap_or_default()
    ))
}

fn explosion() -> Outcome {
    let g = load(&fs::read_to_string(data().join("fixtures/pathological.guide")).unwrap()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let r = flatten(&g, 64);
    let took = start.elapsed();
    ensure!(r == Err(FlattenError::AlternativeExplosion { count: 2048, cap: 64 }), "{r:?}");
    ensure!(took < Duration::from_secs(1), "took {took:?}");
    Ok(format!("2^11 forms rejected at cap 64 in {took:.2?}"))
}

fn eval_golden() -> Outcome {
    let guidelines: Vec<Guideline> = guides_in(&data().join("guidelines")).into_iter().map(|(_, g)| g).collect();
    let corpus = load_corpus(&data().join("corpus/mini.cm"), &[]).map_err(|e| e.to_string())?;
    let report = build_report(&guidelines, &corpus, DEFAULT_SAMPLE_SIZE, DEFAULT_SEED);
    let text = report.to_markdown();
    ensure!(text == build_report(&guidelines, &corpus, DEFAULT_SAMPLE_SIZE, DEFAULT_SEED).to_markdown(), "report is not stable");
    ensure!(text == fs::read_to_string(data().join("eval/mini_report.md")).unwrap(), "report differs from the golden file");
    let rsync = report.commands.iter().find(|c| c.command == "rsync").ok_or("no rsync row")?;
    let dup = rsync.rejected.iter().find(|r| r.reason == NotRecreatable::DuplicateFlag { flag: "verbose".into() });
    ensure!(dup.is_some(), "rsync -rvv not rejected as DuplicateFlag");

    let broken = load(&fs::read_to_string(data().join("fixtures/ls_broken.guide")).unwrap()).map_err(|e| e.to_string())?;
    let ls: Vec<&str> = corpus.iter().filter(|c| c.command == "ls").map(|c| c.text.as_str()).collect();
    let rate = parse_rate(&broken, &ls);
    ensure!((rate.parseable, rate.total, rate.rate) == (4, 5, 0.8), "broken ls parses {}/{}", rate.parseable, rate.total);
    let mut with_broken: Vec<Guideline> = guidelines.into_iter().filter(|g| g.command_name != "ls").collect();
    with_broken.push(broken);
    let text = build_report(&with_broken, &corpus, DEFAULT_SAMPLE_SIZE, DEFAULT_SEED).to_markdown();
    ensure!(text == fs::read_to_string(data().join("eval/mini_report_broken_ls.md")).unwrap(), "broken-ls report differs from its golden file");
    Ok(format!("golden reports match; broken ls 4/5 = 80%; `{}` DuplicateFlag", dup.unwrap().invocation))
}

fn replay_determinism() -> Outcome {
    let run = |dir: &Path| -> Result<(Vec<u8>, Vec<u8>), String> {
        let (out, report) = (dir.join("mkdir.guide"), dir.join("report.json"));
        let o = Command::new(env!("CARGO_BIN_EXE_guide"))
            .arg("gen")
            .arg("mkdir")
            .arg("--man")
            .arg(data().join("man/mkdir.txt"))
            .arg("--replay")
            .arg(data().join("cassettes/mkdir"))
            .arg("--out")
            .arg(&out)
            .arg("--report")
            .arg(&report)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(o.status.success(), "guide gen failed: {}", String::from_utf8_lossy(&o.stderr));
        Ok((fs::read(out).map_err(|e| e.to_string())?, fs::read(report).map_err(|e| e.to_string())?))
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ga, ra) = run(a.path())?;
    let (gb, rb) = run(b.path())?;
    ensure!(ga == gb, "guidelines differ");
    ensure!(ra == rb, "reports differ");
    Ok(format!("guideline {} bytes, report {} bytes, identical", ga.len(), ra.len()))
}

const CRITERIA: [(&str, fn() -> Outcome); 9] = [
    ("PEG kernel oracle", kernel_oracle),
    ("grep walkthrough", grep_walkthrough),
    ("ls -lah toggles", ls_lah),
    ("GUI state round trip", round_trip),
    ("sequencing linter", linter),
    ("pipeline control flow", pipeline),
    ("flattening guard", explosion),
    ("eval harness golden", eval_golden),
    ("replay determinism", replay_determinism),
];

fn main() -> ExitCode {
    let mut failed = 0;
    for (name, check) in CRITERIA {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{took:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{took:.2?}]");
            }
        }
    }
    println!("{} of {} criteria passed", CRITERIA.len() - failed, CRITERIA.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
