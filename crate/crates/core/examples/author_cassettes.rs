//! Rewrites the scripted pipeline cassettes under `data/cassettes`.
//!
//!     cargo run -p guide-core --example author_cassettes

#[path = "../tests/support/scenarios.rs"]
mod scenarios;

use std::fs;

fn clear(dir: &std::path::Path) {
    if dir.exists() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "json") {
                fs::remove_file(path).unwrap();
            }
        }
    }
}

fn main() {
    for (name, router) in scenarios::SCENARIOS {
        let dir = scenarios::cassette_dir(name);
        clear(&dir);
        let report = match scenarios::record(router(), &dir) {
            Ok(r) => r.report,
            Err(e) => panic!("{name}: {e}\n{}", e.report().summary()),
        };
        println!("{name}: {} cassettes", fs::read_dir(&dir).unwrap().count());
        print!("{}", report.summary());
    }
    let dir = scenarios::cassette_dir(scenarios::ASSIST);
    clear(&dir);
    scenarios::record_assist(&dir);
    println!("{}: {} cassettes", scenarios::ASSIST, fs::read_dir(&dir).unwrap().count());
}
