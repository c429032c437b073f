//! A pruning process: marks on a tree, cuts along θ and the jump times.

use gwprune::prune::{count_n, cut, jump_times, mark_branchpoints, mark_edges};
use gwprune::sampler::gw_unit;
use gwprune::{Caps, OffspringLaw, Result, RngStream};

fn main() -> Result<()> {
    let mut rng = RngStream::new(7, 0).rng();
    let mut t = gw_unit(&OffspringLaw::binary(), &OffspringLaw::dirac(1), &Caps::height(10.0), &mut rng)?;
    while t.node_count() < 40 {
        t = gw_unit(&OffspringLaw::binary(), &OffspringLaw::dirac(1), &Caps::height(10.0), &mut rng)?;
    }
    println!("tree: {} nodes, gamma={}", t.node_count(), t.gamma());

    let edges = mark_edges(&t, &mut rng);
    for theta in [0.05, 0.2, 0.5, 1.0, 2.0] {
        let c = cut(&t, &edges, theta);
        println!("edges theta={theta:<4}: nodes={:<4} gamma={:<3} N(a=2)={}", c.node_count(), c.gamma(), count_n(&t, &edges, 2.0, theta));
    }
    let jumps = jump_times(&t, &edges, 2.0);
    println!("{} effective jumps before theta=2, first ones: {:?}", jumps.len(), &jumps[..jumps.len().min(4)]);

    let bp = mark_branchpoints(&t, &mut rng);
    println!("{} branch-point marks; pruned tree at theta=1 has {} nodes", bp.len(), cut(&t, &bp, 1.0).node_count());
    Ok(())
}
