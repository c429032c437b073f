//! Generating-function transforms on finite offspring laws.

use gwprune::offspring::{erase_discrete, erased_prune_law_discrete, pruned_law, size_biased_root};
use gwprune::{OffspringLaw, PruneTimeFamily, Result};

fn main() -> Result<()> {
    let xi = OffspringLaw::new(vec![0.4, 0.3, 0.2, 0.1], "example")?;
    println!("mean={:.3} extinction={:.6} P(height<=3)={:.6}", xi.mean(), xi.extinction(), xi.height_cdf(3));

    let (xi2, mu2) = erase_discrete(&xi, &OffspringLaw::dirac(1), 2)?;
    println!("erased at h=2:\n{}roots:\n{}", xi2.to_text(), mu2.to_text());

    let binary = OffspringLaw::binary();
    for theta in [0.25, 1.0, 4.0] {
        let p = pruned_law(&binary, &PruneTimeFamily::BranchPoint, theta)?;
        println!("binary pruned at branch points, theta={theta}: xi(0)={:.6} xi(2)={:.6}", p.p(0), p.p(2));
    }

    let (fam, law) = erased_prune_law_discrete(&binary, 1, 0.5)?;
    println!("erased+pruned binary (h=1, theta=0.5): xi(0)={:.6}, xi(1)={:.6}; H1 survival at 1: {:.6}", law.p(0), law.p(1), fam.survival(1, 1.0)?);

    println!("size-biased root law of the binary law:\n{}", size_biased_root(&binary)?.to_text());
    let back = OffspringLaw::from_text(&xi2.to_text())?;
    assert_eq!(back.masses(), xi2.masses());
    Ok(())
}
