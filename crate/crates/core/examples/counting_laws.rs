//! Conditional laws of the counting process of pruning events below a level.

use gwprune::verify::{check_counting_law, CountingRegime};
use gwprune::{Mechanism, OffspringLaw, Result};

fn main() -> Result<()> {
    let grid = [0.25, 0.5, 1.0];
    let edge = CountingRegime::Edges(OffspringLaw::new(vec![0.4, 0.3, 0.2, 0.1], "0.4,0.3,0.2,0.1")?);
    print!("{}", check_counting_law(&edge, 3.0, &grid, 3_000, 1)?.records(false));
    let cont = CountingRegime::Continuum { mech: Mechanism::stable(1.5, 1.0)?.with_label("u^1.5"), h: 1.0, x: 1.0 };
    print!("{}", check_counting_law(&cont, 1.0, &grid, 10_000, 1)?.records(false));
    Ok(())
}
