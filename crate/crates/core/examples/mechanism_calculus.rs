//! Branching-mechanism calculus: ψ, η(h), q₀ and the associated offspring laws.

use gwprune::{Mechanism, Result};

fn main() -> Result<()> {
    let quad = Mechanism::quadratic(0.0, 1.0)?.with_label("u^2");
    let stable = Mechanism::stable(1.5, 1.0)?.with_label("u^1.5");
    let sub = Mechanism::quadratic(-1.0, 1.0)?.with_label("u^2-u");

    for m in [&quad, &stable, &sub] {
        println!("{}: psi(2)={:.6} psi'(2)={:.6} q0={:.6} eta(1)={:.6}", m.label, m.psi_eval(2.0)?, m.psi_deriv(1, 2.0)?, m.q0(0.0)?, m.eta(1.0)?);
    }
    println!("P(height < 1) for the u^2 forest from x=1: {:.6}", (-quad.eta(1.0)?).exp());

    let (law, gamma) = quad.domain_family(100)?;
    println!("domain_family(u^2, 100): gamma={gamma}, law:\n{}", law.to_text());

    let e = stable.erased_law(1.0, 1.0)?;
    println!(
        "erased u^1.5 law at h=1: edge rate c={:.6}, xi(2)={:.6}, xi(3)={:.6}, support up to {}",
        e.c,
        e.xi.p(2),
        e.xi.p(3),
        e.xi.max_index()
    );
    Ok(())
}
