//! Ascension time of the time-reversed pruning process.

use gwprune::verify::experiments::ascension_law;
use gwprune::verify::experiment_ascension;
use gwprune::{Mechanism, Result};

fn main() -> Result<()> {
    let quad = Mechanism::quadratic(0.0, 1.0)?.with_label("u^2");
    for n in [100u64, 1_000, 10_000] {
        let law = ascension_law(&quad, n, -0.5)?;
        println!("n={n:<5} extinction^n = {:.9}", law.extinction().powf(n as f64));
    }
    println!("limit e^-1 = {:.9}", (-1.0f64).exp());
    print!("{}", experiment_ascension(&quad, &[1000], -0.5, 1.0, Some((2_000, 3)))?.records(false));
    Ok(())
}
