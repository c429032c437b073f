//! Runs named verification suites: `cargo run --release --example verify_suites -- kesten metric`.

use gwprune::verify::{run_named, SUITE_NAMES};

fn main() {
    let mut names: Vec<String> = std::env::args().skip(1).collect();
    if names.is_empty() {
        names = vec!["transforms".into(), "metric".into(), "limits".into()];
        eprintln!("suites: {}", SUITE_NAMES.join(", "));
    }
    let mut ok = true;
    for n in names {
        match run_named(&n, 42) {
            Ok(reports) => {
                for r in reports {
                    ok &= r.passed();
                    print!("{}", r.records(false));
                }
            }
            Err(e) => {
                eprintln!("{n}: {e}");
                ok = false;
            }
        }
    }
    std::process::exit(if ok { 0 } else { 3 });
}
