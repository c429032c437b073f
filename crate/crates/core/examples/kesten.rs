//! Erasing a Kesten tree commutes with building it from the erased law.

use gwprune::verify::oracles::{check_kesten, kesten_graft_counts};
use gwprune::{OffspringLaw, Result};

fn main() -> Result<()> {
    let xi = OffspringLaw::new(vec![0.3, 0.4, 0.3], "0.3,0.4,0.3")?;
    print!("{}", check_kesten(&xi, 2, 4, 3_000, 5)?.records(false));
    println!("{}", kesten_graft_counts(200, 8, 5)?.record(false));
    Ok(())
}
