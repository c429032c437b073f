//! First pruning times on the erased tree against their analytic laws.

use gwprune::verify::oracles::{check_erased_prune_times, erased_time_survival, ternary};
use gwprune::Result;

fn main() -> Result<()> {
    let xi = ternary();
    let p = xi.height_cdf(1);
    for m in 1..=3 {
        let s: Vec<String> = [0.25, 0.5, 1.0, 2.0].iter().map(|&t| format!("{:.4}", erased_time_survival(&xi, p, m, t))).collect();
        println!("H{m} survival at 0.25,0.5,1,2: {}", s.join(" "));
    }
    let report = check_erased_prune_times(&xi, 1, 2_000, 1)?;
    print!("{}", report.records(false));
    Ok(())
}
