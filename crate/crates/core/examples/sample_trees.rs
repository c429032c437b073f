//! Sampling GW real trees and reading off their functionals.

use gwprune::sampler::{gw_exp, gw_unit, kesten_unit};
use gwprune::{Caps, OffspringLaw, RealTree, Result, RngStream};

fn main() -> Result<()> {
    let mut rng = RngStream::new(2024, 0).rng();
    let binary = OffspringLaw::binary();

    let t = gw_unit(&binary, &OffspringLaw::dirac(3), &Caps::height(8.0), &mut rng)?;
    let f = t.functionals(2.0);
    println!("unit-edge forest of 3 trees: nodes={} gamma={} length={} n_root={} D={} k={}", t.node_count(), f.gamma, t.total_length(), f.n_root, f.d, f.kk);
    println!("population at height 2: {}, length below 2: {}", t.population(2.0), t.length_below(2.0));

    let e = gw_exp(&binary, 2.0, &OffspringLaw::dirac(1), &Caps::height(5.0), &mut rng)?;
    println!("exponential edges: nodes={} gamma={:.4}", e.node_count(), e.gamma());

    let k = kesten_unit(&binary, 6, &Caps::height(6.0), &mut rng)?;
    println!("kesten tree: spine of {} nodes, {} grafts, {} nodes in total", k.spine.len(), k.grafts, k.tree.node_count());

    let text = t.to_text();
    let back = RealTree::from_text(&text)?;
    assert_eq!(back.to_text(), text);
    println!("{}", text.lines().take(6).collect::<Vec<_>>().join("\n"));
    Ok(())
}
