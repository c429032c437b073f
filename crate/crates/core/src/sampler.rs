//! Random generation of GW real trees and forests, Kesten trees, erased
//! Lévy forests and width marks on erased trees.

use crate::error::{invalid, Error, Result};
use crate::mechanism::Mechanism;
use crate::numeric::quad;
use crate::offspring::{size_biased_root, OffspringLaw};
use crate::realtree::{RealTree, TreeBuilder};
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson};

/// Truncation caps for realizations that may be large or infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Caps {
    pub max_height: Option<f64>,
    pub max_nodes: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { max_height: None, max_nodes: 10_000_000 }
    }
}

impl Caps {
    pub fn height(h: f64) -> Self {
        Caps { max_height: Some(h), ..Default::default() }
    }
}

/// Inverse-CDF table for an offspring law; truncated mass is folded onto the
/// last retained index.
#[derive(Debug, Clone)]
pub struct LawSampler {
    cum: Vec<f64>,
}

impl LawSampler {
    pub fn new(law: &OffspringLaw) -> Self {
        let total = law.total();
        let mut acc = 0.0;
        let mut cum: Vec<f64> = law
            .masses()
            .iter()
            .map(|p| {
                acc += p / total;
                acc
            })
            .collect();
        *cum.last_mut().unwrap() = 1.0;
        LawSampler { cum }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        if self.cum.len() <= 16 {
            self.cum.iter().position(|&c| u < c).unwrap_or(self.cum.len() - 1)
        } else {
            self.cum.partition_point(|&c| c <= u).min(self.cum.len() - 1)
        }
    }
}

/// Forest of `μ`-many independent unit-edge GW(ξ) real trees.
pub fn gw_unit<R: Rng + ?Sized>(xi: &OffspringLaw, mu: &OffspringLaw, caps: &Caps, rng: &mut R) -> Result<RealTree> {
    GwForest::unit(xi, mu)?.sample(caps, rng)
}

/// Forest of `μ`-many independent GW(ξ) real trees with `Exp(c)` edges.
pub fn gw_exp<R: Rng + ?Sized>(xi: &OffspringLaw, c: f64, mu: &OffspringLaw, caps: &Caps, rng: &mut R) -> Result<RealTree> {
    GwForest::exp(xi, c, mu)?.sample(caps, rng)
}

/// Prepared GW forest sampler; building the inverse-CDF tables once pays
/// off for heavy-tailed laws with long support.
#[derive(Debug, Clone)]
pub struct GwForest {
    offspring: LawSampler,
    roots: LawSampler,
    edge: Option<Exp<f64>>,
    supercritical: bool,
}

impl GwForest {
    pub fn unit(xi: &OffspringLaw, mu: &OffspringLaw) -> Result<Self> {
        if xi.p(1) >= 1.0 {
            return invalid("xi(1) = 1 gives an infinite line");
        }
        Ok(GwForest { offspring: LawSampler::new(xi), roots: LawSampler::new(mu), edge: None, supercritical: xi.mean() > 1.0 + 1e-12 })
    }

    pub fn exp(xi: &OffspringLaw, c: f64, mu: &OffspringLaw) -> Result<Self> {
        if xi.p(1) > 1e-15 {
            return invalid("exponential-edge trees need xi(1) = 0");
        }
        if !(c > 0.0 && c.is_finite()) {
            return invalid(format!("edge rate {c} must be positive"));
        }
        let e = Exp::new(c).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(GwForest { offspring: LawSampler::new(xi), roots: LawSampler::new(mu), edge: Some(e), supercritical: xi.mean() > 1.0 + 1e-12 })
    }

    pub fn sample<R: Rng + ?Sized>(&self, caps: &Caps, rng: &mut R) -> Result<RealTree> {
        if self.supercritical && caps.max_height.is_none() {
            return invalid("supercritical offspring law needs a height cap");
        }
        let roots = self.roots.sample(rng);
        match &self.edge {
            None => grow(roots, caps, rng, |r| self.offspring.sample(r), |_| 1.0),
            Some(e) => grow(roots, caps, rng, |r| self.offspring.sample(r), |r| e.sample(r)),
        }
    }
}

/// Breadth-first growth: node indices are created in BFS order, so the
/// creation order doubles as the work queue.
fn grow<R: Rng + ?Sized>(
    roots: usize,
    caps: &Caps,
    rng: &mut R,
    mut offspring: impl FnMut(&mut R) -> usize,
    mut edge: impl FnMut(&mut R) -> f64,
) -> Result<RealTree> {
    let cap = caps.max_height.unwrap_or(f64::INFINITY);
    let mut b = TreeBuilder::new();
    let mut heights = vec![0.0];
    let mut node_capped = false;
    let add = |b: &mut TreeBuilder, heights: &mut Vec<f64>, p: usize, len: f64| {
        let hp = heights[p];
        let h = (hp + len).min(cap);
        b.add_child(p, h - hp);
        heights.push(h);
    };
    for _ in 0..roots {
        if b.len() >= caps.max_nodes {
            node_capped = true;
            break;
        }
        let l = edge(rng);
        add(&mut b, &mut heights, 0, l);
    }
    let mut v = 1;
    while v < b.len() {
        if heights[v] < cap {
            let k = offspring(rng);
            for _ in 0..k {
                if b.len() >= caps.max_nodes {
                    node_capped = true;
                    break;
                }
                let l = edge(rng);
                add(&mut b, &mut heights, v, l);
            }
            if node_capped {
                break;
            }
        }
        v += 1;
    }
    b.set_height_cap(caps.max_height);
    b.set_node_capped(node_capped);
    Ok(b.build())
}

/// A Kesten tree truncated at the top of its spine.
#[derive(Debug, Clone)]
pub struct Kesten {
    pub tree: RealTree,
    /// Spine nodes from bottom to top (root excluded).
    pub spine: Vec<usize>,
    /// Number of graft points on the spine.
    pub grafts: usize,
}

fn graft(b: &mut TreeBuilder, at: usize, forest: &RealTree) {
    let mut map = vec![at; forest.node_count()];
    for v in 1..forest.node_count() {
        map[v] = b.add_child(map[forest.parent(v).unwrap()], forest.length(v));
    }
}

/// Discrete Kesten tree: spine points at heights `1..=spine_height`, each
/// carrying an independent GW(ξ; μ) forest with `μ(i) = (i+1)ξ(i+1)`.
/// Grafted forests are capped at `caps.max_height` (absolute height).
pub fn kesten_unit<R: Rng + ?Sized>(xi: &OffspringLaw, spine_height: u64, caps: &Caps, rng: &mut R) -> Result<Kesten> {
    let mu = size_biased_root(xi)?;
    let mut b = TreeBuilder::new();
    let mut spine = Vec::new();
    let mut last = 0;
    let mut capped = false;
    for m in 1..=spine_height {
        last = b.add_child(last, 1.0);
        spine.push(last);
        let local = Caps { max_height: caps.max_height.map(|c| (c - m as f64).max(0.0)), max_nodes: caps.max_nodes };
        let f = gw_unit(xi, &mu, &local, rng)?;
        capped |= f.is_capped();
        graft(&mut b, last, &f);
    }
    b.set_height_cap(caps.max_height);
    b.set_node_capped(capped);
    Ok(Kesten { tree: b.build(), grafts: spine.len(), spine })
}

/// Continuous Kesten tree on a spine `[0, spine_height]` with graft points
/// from a rate-`c` Poisson process.
pub fn kesten_exp<R: Rng + ?Sized>(xi: &OffspringLaw, c: f64, spine_height: f64, caps: &Caps, rng: &mut R) -> Result<Kesten> {
    let mu = size_biased_root(xi)?;
    if !(spine_height >= 0.0) {
        return invalid("spine height must be nonnegative");
    }
    let e = Exp::new(c).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut b = TreeBuilder::new();
    let mut spine = Vec::new();
    let mut last = 0;
    let mut h = 0.0;
    let mut grafts = 0;
    let mut capped = false;
    loop {
        let step: f64 = e.sample(rng);
        if h + step > spine_height {
            break;
        }
        h += step;
        last = b.add_child(last, step);
        spine.push(last);
        grafts += 1;
        let local = Caps { max_height: caps.max_height.map(|cap| (cap - h).max(0.0)), max_nodes: caps.max_nodes };
        let f = gw_exp(xi, c, &mu, &local, rng)?;
        capped |= f.is_capped();
        graft(&mut b, last, &f);
    }
    if spine_height > h {
        spine.push(b.add_child(last, spine_height - h));
    }
    b.set_height_cap(caps.max_height);
    b.set_node_capped(capped);
    Ok(Kesten { tree: b.build(), spine, grafts })
}

/// The `h`-erasure of a `(ψ; δ_x)`-Lévy forest, sampled as a GW forest with
/// exponential edges.
pub fn levy_erased<R: Rng + ?Sized>(mech: &Mechanism, h: f64, x: f64, caps: &Caps, rng: &mut R) -> Result<RealTree> {
    if x == 0.0 {
        return Ok(RealTree::root_only());
    }
    let law = mech.erased_law(h, x)?;
    gw_exp(&law.xi, law.c, &law.mu, caps, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WidthKind {
    Skeleton,
    Branch,
    Root,
}

/// A width atom: on the edge above `node` at distance `offset` below it
/// (skeleton atoms), or at `node` itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthMark {
    pub node: usize,
    pub offset: f64,
    pub width: f64,
    pub kind: WidthKind,
}

/// Widths below this value are not materialised for stable tails.
pub const STABLE_WIDTH_FLOOR: f64 = 1e-6;

struct StableTable {
    mass: f64,
    y: Vec<f64>,
    cdf: Vec<f64>,
}

/// Tabulates `C r^{−a} e^{−vr} dr` on `[ε, ∞)` in the variable `y = ln r`.
fn stable_table(c: f64, a: f64, v: f64, eps: f64) -> Result<StableTable> {
    let f = |y: f64| c * ((1.0 - a) * y - v * y.exp()).exp();
    let y0 = eps.ln();
    let y1 = (60.0 / v).ln().max(y0 + 1.0);
    let n = 2048;
    let mut y = Vec::with_capacity(n + 1);
    let mut cdf = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    y.push(y0);
    cdf.push(0.0);
    for i in 1..=n {
        let a0 = y0 + (y1 - y0) * (i - 1) as f64 / n as f64;
        let a1 = y0 + (y1 - y0) * i as f64 / n as f64;
        acc += quad(f, a0, a1)?;
        y.push(a1);
        cdf.push(acc);
    }
    Ok(StableTable { mass: acc, y, cdf })
}

impl StableTable {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * self.mass;
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        (self.y[i - 1] + t * (self.y[i] - self.y[i - 1])).exp()
    }
}

/// Width atoms on an `h`-erased Lévy forest with initial law `δ_x`.
pub fn width_marks<R: Rng + ?Sized>(mech: &Mechanism, h: f64, x: f64, tree: &RealTree, rng: &mut R) -> Result<Vec<WidthMark>> {
    let eta = mech.eta(h)?;
    let v = mech.shift_amount() + eta;
    let atoms = mech.effective_atoms();
    // skeleton: intensity r e^{−rη} π(dr) per unit length
    let weights: Vec<f64> = atoms.iter().map(|&(r, m)| m * r * (-r * eta).exp()).collect();
    let atom_rate: f64 = weights.iter().sum();
    let table = match mech.pi.stable {
        Some(st) => Some(stable_table(st.density_constant(), st.a, v, STABLE_WIDTH_FLOOR)?),
        None => None,
    };
    let stable_rate = table.as_ref().map_or(0.0, |t| t.mass);
    let rate = atom_rate + stable_rate;
    let mut out = Vec::new();
    out.push(WidthMark { node: 0, offset: 0.0, width: x, kind: WidthKind::Root });
    for node in 1..tree.node_count() {
        let len = tree.length(node);
        if rate > 0.0 && len > 0.0 {
            let count = Poisson::new(rate * len).map(|p| p.sample(rng) as usize).unwrap_or(0);
            for _ in 0..count {
                let offset = rng.random::<f64>() * len;
                let u = rng.random::<f64>() * rate;
                let width = if u < atom_rate {
                    atoms[pick(&weights, u)].0
                } else {
                    table.as_ref().unwrap().sample(rng)
                };
                out.push(WidthMark { node, offset, width, kind: WidthKind::Skeleton });
            }
        }
        let m = tree.num_children(node);
        if m >= 2 && !tree.is_frontier(node) {
            out.push(WidthMark { node, offset: 0.0, width: branch_width(mech, eta, m, rng)?, kind: WidthKind::Branch });
        }
    }
    Ok(out)
}

fn pick(weights: &[f64], mut u: f64) -> usize {
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Width at a branch point with `m` children: Laplace transform
/// `ψ^{(m)}(η+θ)/ψ^{(m)}(η)`.
pub fn branch_width<R: Rng + ?Sized>(mech: &Mechanism, eta: f64, m: usize, rng: &mut R) -> Result<f64> {
    let total = mech.psi_deriv(m as u32, eta)?.abs();
    let v = mech.shift_amount() + eta;
    let mut parts = Vec::new();
    if m == 2 {
        parts.push(2.0 * mech.beta);
    }
    let atoms = mech.effective_atoms();
    for &(r, mass) in &atoms {
        parts.push(mass * (m as f64 * r.ln() - eta * r).exp());
    }
    let stable_part = mech.pi.stable.map_or(0.0, |st| {
        let mut ff = 1.0;
        for j in 0..m {
            ff *= st.a - j as f64;
        }
        (st.scale * ff * v.powf(st.a - m as f64)).abs()
    });
    let u = rng.random::<f64>() * total;
    let atoms_sum: f64 = parts.iter().sum();
    if u < atoms_sum {
        let i = pick(&parts, u);
        let off = usize::from(m == 2);
        return Ok(if m == 2 && i == 0 { 0.0 } else { atoms[i - off].0 });
    }
    if stable_part > 0.0 {
        let st = mech.pi.stable.unwrap();
        let g = Gamma::new(m as f64 - st.a, 1.0 / v).map_err(|e| Error::Numerical(e.to_string()))?;
        return Ok(g.sample(rng));
    }
    Ok(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn rng(i: u64) -> crate::rng::Rng {
        RngStream::new(7, i).rng()
    }

    #[test]
    fn dirac_laws() {
        let mut r = rng(0);
        let t = gw_unit(&OffspringLaw::dirac(0), &OffspringLaw::dirac(1), &Caps::default(), &mut r).unwrap();
        assert_eq!((t.gamma(), t.first_branch().d, t.first_branch().kk), (1.0, 1.0, 0));
        let t = gw_unit(&OffspringLaw::dirac(0), &OffspringLaw::dirac(3), &Caps::default(), &mut r).unwrap();
        assert_eq!((t.n_root(), t.node_count()), (3, 4));
        let t = gw_exp(&OffspringLaw::binary(), 2.0, &OffspringLaw::dirac(0), &Caps::default(), &mut r).unwrap();
        assert_eq!(t.node_count(), 1);
    }

    #[test]
    fn supercritical_needs_cap() {
        let xi = OffspringLaw::new(vec![0.2, 0.0, 0.8], "").unwrap();
        let mut r = rng(1);
        assert!(gw_unit(&xi, &OffspringLaw::dirac(1), &Caps::default(), &mut r).is_err());
        let t = gw_unit(&xi, &OffspringLaw::dirac(1), &Caps::height(6.0), &mut r).unwrap();
        assert!(t.gamma() <= 6.0);
    }

    #[test]
    fn node_cap_flags() {
        let xi = OffspringLaw::new(vec![0.0, 0.0, 1.0], "").unwrap();
        let mut r = rng(2);
        let t = gw_unit(&xi, &OffspringLaw::dirac(1), &Caps { max_height: Some(100.0), max_nodes: 50 }, &mut r).unwrap();
        assert!(t.node_capped() && t.node_count() == 50);
    }

    #[test]
    fn exponential_segment_mean() {
        let mut r = rng(3);
        let n = 100_000;
        let s: f64 = (0..n)
            .map(|_| gw_exp(&OffspringLaw::dirac(0), 2.0, &OffspringLaw::dirac(1), &Caps::default(), &mut r).unwrap().gamma())
            .sum();
        let mean = s / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn first_split_mean() {
        let mut r = rng(4);
        let n = 100_000;
        let s: usize = (0..n)
            .map(|_| gw_unit(&OffspringLaw::binary(), &OffspringLaw::dirac(1), &Caps::height(40.0), &mut r).unwrap().first_branch().kk)
            .sum();
        let mean = s as f64 / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn reproducible() {
        let a = gw_unit(&OffspringLaw::binary(), &OffspringLaw::dirac(2), &Caps::default(), &mut rng(9)).unwrap();
        let b = gw_unit(&OffspringLaw::binary(), &OffspringLaw::dirac(2), &Caps::default(), &mut rng(9)).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn kesten_binary_spine() {
        let k = kesten_unit(&OffspringLaw::binary(), 3, &Caps::height(50.0), &mut rng(5)).unwrap();
        assert_eq!(k.spine.len(), 3);
        for (i, &s) in k.spine.iter().enumerate() {
            assert_eq!(k.tree.height(s), (i + 1) as f64);
            // spine continuation plus exactly one graft (except the top)
            let expect = if i + 1 < 3 { 2 } else { 1 };
            assert_eq!(k.tree.num_children(s), expect);
        }
        let k0 = kesten_unit(&OffspringLaw::binary(), 0, &Caps::default(), &mut rng(5)).unwrap();
        assert_eq!(k0.tree.node_count(), 1);
        assert!(kesten_unit(&OffspringLaw::new(vec![0.6, 0.0, 0.4], "").unwrap(), 2, &Caps::default(), &mut rng(5)).is_err());
    }

    #[test]
    fn kesten_exp_graft_count() {
        let mut r = rng(6);
        let n = 10_000;
        let s: usize = (0..n).map(|_| kesten_exp(&OffspringLaw::binary(), 2.0, 10.0, &Caps::height(11.0), &mut r).unwrap().grafts).sum();
        let mean = s as f64 / n as f64;
        assert!((mean - 20.0).abs() < 3.0 * (20.0f64 / n as f64).sqrt());
    }

    #[test]
    fn quadratic_has_no_widths() {
        let m = Mechanism::quadratic(0.0, 1.0).unwrap();
        let mut r = rng(7);
        let t = levy_erased(&m, 1.0, 2.0, &Caps::height(30.0), &mut r).unwrap();
        let w = width_marks(&m, 1.0, 2.0, &t, &mut r).unwrap();
        assert!(w.iter().all(|x| x.kind != WidthKind::Skeleton));
        assert!(w.iter().filter(|x| x.kind == WidthKind::Branch).all(|x| x.width == 0.0));
        assert_eq!(levy_erased(&m, 1.0, 0.0, &Caps::default(), &mut r).unwrap().node_count(), 1);
    }

    #[test]
    fn atom_skeleton_rate() {
        let m = Mechanism::new(0.0, 1.0, crate::LevyMeasure { atoms: vec![(2.0, 1.0)], stable: None }).unwrap();
        let eta = m.eta(1.0).unwrap();
        let rate = 2.0 * (-2.0 * eta).exp();
        let seg = RealTree::path(1, 10.0);
        let mut r = rng(8);
        let reps = 10_000;
        let count: usize = (0..reps)
            .map(|_| width_marks(&m, 1.0, 1.0, &seg, &mut r).unwrap().iter().filter(|w| w.kind == WidthKind::Skeleton).count())
            .sum();
        let lam = rate * 10.0 * reps as f64;
        assert!((count as f64 - lam).abs() < 3.0 * lam.sqrt());
    }

    #[test]
    fn stable_branch_width_laplace() {
        let m = Mechanism::stable(1.5, 1.0).unwrap();
        let eta = m.eta(1.0).unwrap();
        let mut r = rng(10);
        let n = 20_000;
        for deg in [2usize, 3] {
            let lt: f64 = (0..n).map(|_| (-branch_width(&m, eta, deg, &mut r).unwrap()).exp()).sum::<f64>() / n as f64;
            let want = m.psi_deriv(deg as u32, eta + 1.0).unwrap() / m.psi_deriv(deg as u32, eta).unwrap();
            assert!((lt - want).abs() < 4.0 * 0.5 / (n as f64).sqrt(), "deg {deg}: {lt} vs {want}");
        }
    }

    #[test]
    fn stable_table_mass() {
        let t = stable_table(2.0, 1.5, 3.0, 1e-3).unwrap();
        let direct = quad(|r: f64| 2.0 * r.powf(-1.5) * (-3.0 * r).exp(), 1e-3, 1.0).unwrap()
            + quad(|r: f64| 2.0 * r.powf(-1.5) * (-3.0 * r).exp(), 1.0, 30.0).unwrap();
        assert!((t.mass - direct).abs() < 1e-8 * direct);
    }
}
