//! Discrete height probabilities along the domain family against `e^{−xη(h)}`.

use gwprune::verify::experiments::discrete_height_probability;
use gwprune::verify::experiment_height;
use gwprune::{Mechanism, Result};

fn main() -> Result<()> {
    let quad = Mechanism::quadratic(0.0, 1.0)?.with_label("u^2");
    let stable = Mechanism::stable(1.5, 1.0)?.with_label("u^1.5");
    for m in [&quad, &stable] {
        let target = (-m.eta(1.0)?).exp();
        for n in [100u64, 1_000, 10_000, 100_000] {
            let v = discrete_height_probability(m, n, 1.0, 1.0)?;
            println!("{} n={n:<6} value={v:.6} target={target:.6} err={:.2e}", m.label, (v - target).abs());
        }
    }
    print!("{}", experiment_height(&quad, &[250, 500, 1000], 1.0, 1.0)?.records(false));
    Ok(())
}
