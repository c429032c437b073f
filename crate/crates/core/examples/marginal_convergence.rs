//! Scaled erased pruned discrete forests against their continuum limits.

use gwprune::verify::experiments::MarginalConfig;
use gwprune::verify::{experiment_marginal_convergence, MarginalRegime};
use gwprune::{Mechanism, Result};

fn main() -> Result<()> {
    let quad = Mechanism::quadratic(0.0, 1.0)?.with_label("u^2");
    let replicates = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2_000);
    for regime in [MarginalRegime::Branch, MarginalRegime::Edge, MarginalRegime::EqualRate] {
        let cfg = MarginalConfig::new(200, regime, replicates, 11);
        print!("{}", experiment_marginal_convergence(&quad, &cfg)?.records(false));
    }
    Ok(())
}
