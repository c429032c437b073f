//! Pruning marks on finite trees, the pruned tree at a given time, jump
//! times and the counting processes `N` and `M`.

use crate::error::{Error, Result};
use crate::mechanism::{BranchTimes, BundleSource, PruneLawBundle};
use crate::numeric::bisect;
use crate::offspring::PruneTimeFamily;
use crate::realtree::{RealTree, TreeBuilder};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MarkKind {
    /// Removes the whole edge above `node`.
    Edge,
    /// Removes every child edge of `node`.
    Branch,
    /// Cuts the edge above `node` at `offset` from its lower end.
    Skeleton,
}

impl MarkKind {
    fn as_str(self) -> &'static str {
        match self {
            MarkKind::Edge => "edge",
            MarkKind::Branch => "branch",
            MarkKind::Skeleton => "skeleton",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "edge" => Some(MarkKind::Edge),
            "branch" => Some(MarkKind::Branch),
            "skeleton" => Some(MarkKind::Skeleton),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mark {
    pub node: usize,
    pub offset: f64,
    pub time: f64,
    pub kind: MarkKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Edges,
    BranchPoints,
    H,
    HBar,
    AldousPitman,
    AdErased,
    EqualRate,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Edges => "edges",
            Regime::BranchPoints => "branch-points",
            Regime::H => "H",
            Regime::HBar => "Hbar",
            Regime::AldousPitman => "AP",
            Regime::AdErased => "AD-erased",
            Regime::EqualRate => "equal-rate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Regime::Edges, Regime::BranchPoints, Regime::H, Regime::HBar, Regime::AldousPitman, Regime::AdErased, Regime::EqualRate]
            .into_iter()
            .find(|r| r.as_str() == s)
    }
}

/// Marks sorted by `(time, node, offset)`. Only marks with finite time up to
/// `horizon` are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkSet {
    marks: Vec<Mark>,
    pub regime: Regime,
    pub horizon: f64,
}

impl MarkSet {
    pub fn new(mut marks: Vec<Mark>, regime: Regime, horizon: f64) -> Self {
        marks.retain(|m| m.time.is_finite() && m.time <= horizon);
        marks.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.node.cmp(&b.node)).then(a.offset.total_cmp(&b.offset)));
        MarkSet { marks, regime, horizon }
    }

    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    /// Carries marks to another tree through a node map (e.g. from
    /// [`RealTree::erase_with_map`]); marks on unmapped nodes are dropped.
    pub fn restrict(&self, map: &[Option<usize>]) -> MarkSet {
        let marks = self.marks.iter().filter_map(|m| map[m.node].map(|n| Mark { node: n, ..*m })).collect();
        MarkSet::new(marks, self.regime, self.horizon)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("MARKS regime={} horizon={:.16e}\n", self.regime.as_str(), self.horizon);
        for m in &self.marks {
            writeln!(s, "MARK {} {:.16e} {:.16e} {}", m.node, m.offset, m.time, m.kind.as_str()).unwrap();
        }
        s
    }

    /// Reads the `MARKS`/`MARK` lines of a tree file; other lines are skipped.
    pub fn from_text(text: &str) -> Result<MarkSet> {
        let mut regime = Regime::H;
        let mut horizon = f64::INFINITY;
        let mut marks = Vec::new();
        for (i, l) in text.lines().enumerate() {
            let f: Vec<&str> = l.split_whitespace().collect();
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            match f.first() {
                Some(&"MARKS") => {
                    for p in &f[1..] {
                        if let Some(v) = p.strip_prefix("regime=") {
                            regime = Regime::parse(v).ok_or_else(|| bad(format!("unknown regime {v}")))?;
                        } else if let Some(v) = p.strip_prefix("horizon=") {
                            horizon = v.parse().map_err(|_| bad(format!("bad horizon {v}")))?;
                        }
                    }
                }
                Some(&"MARK") => {
                    if f.len() != 5 {
                        return Err(bad("expected 'MARK edge offset time kind'".into()));
                    }
                    let node = f[1].parse().map_err(|_| bad(format!("bad node {}", f[1])))?;
                    let offset = f[2].parse().map_err(|_| bad(format!("bad offset {}", f[2])))?;
                    let time = f[3].parse().map_err(|_| bad(format!("bad time {}", f[3])))?;
                    let kind = MarkKind::parse(f[4]).ok_or_else(|| bad(format!("bad kind {}", f[4])))?;
                    marks.push(Mark { node, offset, time, kind });
                }
                _ => {}
            }
        }
        Ok(MarkSet::new(marks, regime, horizon))
    }
}

fn exp_time<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// One `Exp(1)` time per edge.
pub fn mark_edges<R: Rng + ?Sized>(tree: &RealTree, rng: &mut R) -> MarkSet {
    let marks = (1..tree.node_count()).map(|v| Mark { node: v, offset: 0.0, time: exp_time(1.0, rng), kind: MarkKind::Edge }).collect();
    MarkSet::new(marks, Regime::Edges, f64::INFINITY)
}

/// One `Exp(m−1)` time per non-root vertex with `m ≥ 2` children.
pub fn mark_branchpoints<R: Rng + ?Sized>(tree: &RealTree, rng: &mut R) -> MarkSet {
    let mut marks = Vec::new();
    for v in 1..tree.node_count() {
        let m = tree.num_children(v);
        if m >= 2 {
            marks.push(Mark { node: v, offset: 0.0, time: exp_time((m - 1) as f64, rng), kind: MarkKind::Branch });
        }
    }
    MarkSet::new(marks, Regime::BranchPoints, f64::INFINITY)
}

/// One time from `H_m` at every non-root, non-leaf vertex with `m` children.
pub fn mark_h<R: Rng + ?Sized>(tree: &RealTree, fam: &PruneTimeFamily, rng: &mut R) -> Result<MarkSet> {
    let mut marks = Vec::new();
    for v in 1..tree.node_count() {
        let m = tree.num_children(v);
        if m >= 1 {
            let t = fam.law(m)?.sample(rng);
            if t.is_finite() {
                marks.push(Mark { node: v, offset: 0.0, time: t, kind: MarkKind::Branch });
            }
        }
    }
    Ok(MarkSet::new(marks, Regime::H, f64::INFINITY))
}

/// Draws from `H_m` of a bundle by inverting its survival function.
pub fn sample_hm<R: Rng + ?Sized>(bundle: &PruneLawBundle, m: usize, rng: &mut R) -> f64 {
    match &bundle.branch {
        BranchTimes::Never => f64::INFINITY,
        BranchTimes::Family(f) => f.law(m).map(|l| l.sample(rng)).unwrap_or(f64::INFINITY),
        BranchTimes::MechanismRatio { .. } => {
            let u: f64 = 1.0 - rng.random::<f64>();
            if u <= bundle.hm_at_infinity(m) {
                return f64::INFINITY;
            }
            let mut hi = 1.0;
            while bundle.hm_survival(m, hi) > u {
                hi *= 2.0;
                if hi > 1e12 {
                    return f64::INFINITY;
                }
            }
            bisect(|t| u - bundle.hm_survival(m, t), 0.0, hi, 1e-12, true)
        }
    }
}

/// Poisson skeleton marks with intensity `H̄₁(dθ)ℓ(dv)` plus one `H_m` time
/// per branch point, restricted to times `≤ θ_max`.
pub fn mark_hbar<R: Rng + ?Sized>(tree: &RealTree, bundle: &PruneLawBundle, theta_max: f64, rng: &mut R) -> Result<MarkSet> {
    if !(theta_max.is_finite() && theta_max > 0.0) {
        return Err(Error::InvalidArgument("mark_hbar needs a finite positive horizon".into()));
    }
    let total = bundle.hbar1(theta_max);
    let mut marks = Vec::new();
    for v in 1..tree.node_count() {
        let len = tree.length(v);
        let lam = len * total;
        if lam > 0.0 {
            let k = Poisson::new(lam).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng) as usize;
            for _ in 0..k {
                let offset = rng.random::<f64>() * len;
                let time = bundle.hbar1_inverse(rng.random::<f64>() * total);
                marks.push(Mark { node: v, offset, time: time.max(f64::MIN_POSITIVE), kind: MarkKind::Skeleton });
            }
        }
        let m = tree.num_children(v);
        if m >= 2 && !tree.is_frontier(v) {
            let t = sample_hm(bundle, m, rng);
            if t.is_finite() && t <= theta_max {
                marks.push(Mark { node: v, offset: 0.0, time: t, kind: MarkKind::Branch });
            }
        }
    }
    let regime = match bundle.source {
        BundleSource::AdContinuum => Regime::AdErased,
        BundleSource::DiscreteErased => Regime::HBar,
        BundleSource::EqualRate => Regime::EqualRate,
        BundleSource::Edge => Regime::AldousPitman,
    };
    Ok(MarkSet::new(marks, regime, theta_max))
}

/// `T(θ)`: the root component after applying every mark with time `≤ θ`.
pub fn cut(tree: &RealTree, marks: &MarkSet, theta: f64) -> RealTree {
    cut_with_map(tree, marks, theta).0
}

/// [`cut`] with the image of every surviving original node.
pub fn cut_with_map(tree: &RealTree, marks: &MarkSet, theta: f64) -> (RealTree, Vec<Option<usize>>) {
    let n = tree.node_count();
    let mut edge_gone = vec![false; n];
    let mut kids_gone = vec![false; n];
    let mut stub = vec![f64::INFINITY; n];
    for m in marks.marks.iter().take_while(|m| m.time <= theta) {
        match m.kind {
            MarkKind::Edge => edge_gone[m.node] = true,
            MarkKind::Branch => kids_gone[m.node] = true,
            MarkKind::Skeleton => stub[m.node] = stub[m.node].min(m.offset),
        }
    }
    let mut b = TreeBuilder::with_capacity(n);
    let mut map = vec![None; n];
    map[0] = Some(0);
    for v in 1..n {
        let p = tree.parent(v).unwrap();
        let Some(np) = map[p] else { continue };
        if edge_gone[v] || kids_gone[p] {
            continue;
        }
        if stub[v].is_finite() {
            if stub[v] > 0.0 {
                b.add_child(np, stub[v]);
            }
            continue;
        }
        map[v] = Some(b.add_child(np, tree.length(v)));
    }
    (b.build().with_caps(tree.height_cap(), tree.node_capped()), map)
}

/// Marks with time `≤ horizon` whose cut changes the tree.
pub fn jump_times(tree: &RealTree, marks: &MarkSet, horizon: f64) -> Vec<f64> {
    effective(tree, marks, f64::INFINITY, horizon)
}

fn mark_height(tree: &RealTree, m: &Mark) -> f64 {
    match m.kind {
        MarkKind::Edge => tree.height(m.node),
        MarkKind::Branch => tree.height(m.node),
        MarkKind::Skeleton => tree.height(tree.parent(m.node).unwrap()) + m.offset,
    }
}

/// `N_{a,θ}`: marks with time `≤ θ` located in `Blw(T, a)`.
pub fn count_n(tree: &RealTree, marks: &MarkSet, a: f64, theta: f64) -> usize {
    marks.marks.iter().take_while(|m| m.time <= theta).filter(|m| mark_height(tree, m) <= a).count()
}

/// `M_{a,θ}`: marks with time `≤ θ` whose cut changes `Blw(T(·), a)`.
pub fn count_m(tree: &RealTree, marks: &MarkSet, a: f64, theta: f64) -> usize {
    effective(tree, marks, a, theta).len()
}

fn effective(tree: &RealTree, marks: &MarkSet, a: f64, theta: f64) -> Vec<f64> {
    let n = tree.node_count();
    // remaining length of the edge above each node (INFINITY = intact)
    let mut stub = vec![f64::INFINITY; n];
    let mut kids_gone = vec![false; n];
    let connected = |v: usize, stub: &[f64], kids_gone: &[bool]| {
        let mut u = v;
        while let Some(p) = tree.parent(u) {
            if stub[u].is_finite() || kids_gone[p] {
                return false;
            }
            u = p;
        }
        true
    };
    let mut out = Vec::new();
    for m in marks.marks.iter().take_while(|m| m.time <= theta) {
        let p = match m.kind {
            MarkKind::Branch => m.node,
            _ => tree.parent(m.node).unwrap(),
        };
        if !connected(p, &stub, &kids_gone) {
            continue;
        }
        let (cut_height, changes) = match m.kind {
            MarkKind::Edge => {
                let ok = !kids_gone[p] && stub[m.node] > 0.0;
                if ok {
                    stub[m.node] = 0.0;
                }
                (tree.height(p), ok)
            }
            MarkKind::Skeleton => {
                let ok = !kids_gone[p] && m.offset < stub[m.node].min(tree.length(m.node));
                if ok {
                    stub[m.node] = m.offset;
                }
                (tree.height(p) + m.offset, ok)
            }
            MarkKind::Branch => {
                let ok = !kids_gone[p] && tree.children(p).iter().any(|&c| stub[c] > 0.0);
                kids_gone[p] = true;
                (tree.height(p), ok)
            }
        };
        if changes && cut_height < a {
            out.push(m.time);
        }
    }
    out
}

/// A rescaled pruning process: `cut(θ)` is `cut(T, marks, θ/time_scale)`
/// with lengths divided by `space_scale`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledView<'a> {
    pub tree: &'a RealTree,
    pub marks: &'a MarkSet,
    pub space_scale: f64,
    pub time_scale: f64,
}

impl<'a> ScaledView<'a> {
    pub fn new(tree: &'a RealTree, marks: &'a MarkSet, space_scale: f64, time_scale: f64) -> Result<Self> {
        if !(space_scale > 0.0 && time_scale > 0.0) {
            return Err(Error::InvalidArgument("scales must be positive".into()));
        }
        Ok(ScaledView { tree, marks, space_scale, time_scale })
    }

    pub fn cut(&self, theta: f64) -> RealTree {
        cut(self.tree, self.marks, theta / self.time_scale).scaled(1.0 / self.space_scale)
    }

    pub fn jump_times(&self, horizon: f64) -> Vec<f64> {
        jump_times(self.tree, self.marks, horizon / self.time_scale).into_iter().map(|t| t * self.time_scale).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::{EraseMode, Mechanism};
    use proptest::prelude::*;

    fn y() -> RealTree {
        RealTree::star(1.0, 2, 1.0)
    }

    #[test]
    fn edge_marks_basic() {
        let mut r = RngStream::new(1, 0).rng();
        let p = RealTree::path(3, 1.0);
        assert_eq!(mark_edges(&p, &mut r).len(), 3);
        let m = mark_edges(&p, &mut r);
        assert_eq!(cut(&p, &m, 0.0), p);
        let n = 100_000;
        let seg = RealTree::path(1, 1.0);
        let dead = (0..n).filter(|_| cut(&seg, &mark_edges(&seg, &mut r), std::f64::consts::LN_2).node_count() == 1).count();
        let f = dead as f64 / n as f64;
        assert!((f - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn branch_marks_basic() {
        let mut r = RngStream::new(2, 0).rng();
        assert_eq!(mark_branchpoints(&y(), &mut r).len(), 1);
        assert!(mark_branchpoints(&RealTree::path(3, 1.0), &mut r).is_empty());
        let t = RealTree::star(1.0, 3, 1.0);
        let n = 20_000;
        let s: f64 = (0..n).map(|_| mark_branchpoints(&t, &mut r).marks()[0].time).sum();
        assert!((s / n as f64 - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn mark_h_path() {
        let mut r = RngStream::new(3, 0).rng();
        let p = RealTree::path(3, 1.0);
        let fam = PruneTimeFamily::EqualRate(1.0);
        assert_eq!(mark_h(&p, &fam, &mut r).unwrap().len(), 2);
        let missing = PruneTimeFamily::Explicit(vec![crate::TimeLaw::Exponential(1.0)]);
        assert!(mark_h(&y(), &missing, &mut r).is_err());
        assert!(mark_h(&p, &PruneTimeFamily::BranchPoint, &mut r).unwrap().is_empty());
    }

    #[test]
    fn hbar_marks() {
        let mut r = RngStream::new(4, 0).rng();
        let ap = PruneLawBundle::aldous_pitman(BundleSource::Edge);
        let seg = RealTree::path(1, 2.0);
        let n = 5000;
        let total: usize = (0..n).map(|_| mark_hbar(&seg, &ap, 3.0, &mut r).unwrap().len()).sum();
        let lam = 6.0 * n as f64;
        assert!((total as f64 - lam).abs() < 3.0 * lam.sqrt());
        let ad = Mechanism::quadratic(0.0, 1.0).unwrap().ad_prune_law(1.0).unwrap();
        let ms = mark_hbar(&y(), &ad, 2.0, &mut r).unwrap();
        assert!(ms.marks().iter().all(|m| m.kind == MarkKind::Skeleton && m.time <= 2.0));
        assert!(mark_hbar(&seg, &ap, f64::INFINITY, &mut r).is_err());
    }

    #[test]
    fn cut_geometry() {
        let t = y();
        let marks = MarkSet::new(vec![Mark { node: 2, offset: 0.5, time: 0.3, kind: MarkKind::Skeleton }], Regime::AldousPitman, 1.0);
        let c = cut(&t, &marks, 0.5);
        assert_eq!(c.gamma(), 2.0);
        let only = MarkSet::new(
            vec![
                Mark { node: 2, offset: 0.5, time: 0.3, kind: MarkKind::Skeleton },
                Mark { node: 3, offset: 0.5, time: 0.4, kind: MarkKind::Skeleton },
            ],
            Regime::AldousPitman,
            1.0,
        );
        assert_eq!(cut(&t, &only, 0.5).gamma(), 1.5);
        let all = MarkSet::new(vec![Mark { node: 1, offset: 0.0, time: 0.2, kind: MarkKind::Edge }], Regime::Edges, 1.0);
        assert_eq!(cut(&t, &all, 1.0).node_count(), 1);
    }

    #[test]
    fn counting() {
        let p = RealTree::path(2, 1.0);
        let empty = MarkSet::new(vec![], Regime::Edges, 1.0);
        assert_eq!((count_n(&p, &empty, 5.0, 1.0), count_m(&p, &empty, 5.0, 1.0)), (0, 0));
        let one = MarkSet::new(vec![Mark { node: 1, offset: 0.0, time: 0.5, kind: MarkKind::Edge }], Regime::Edges, 9.0);
        assert_eq!((count_n(&p, &one, 5.0, 1.0), count_m(&p, &one, 5.0, 1.0)), (1, 1));
        assert_eq!(count_n(&p, &one, 5.0, 0.4), 0);
        let stacked = MarkSet::new(
            vec![Mark { node: 1, offset: 0.0, time: 0.5, kind: MarkKind::Edge }, Mark { node: 2, offset: 0.0, time: 0.7, kind: MarkKind::Edge }],
            Regime::Edges,
            9.0,
        );
        assert_eq!((count_n(&p, &stacked, 5.0, 1.0), count_m(&p, &stacked, 5.0, 1.0)), (2, 1));
        assert_eq!(jump_times(&p, &stacked, 9.0), vec![0.5]);
    }

    #[test]
    fn scaled_view() {
        let seg = RealTree::path(1, 1.0);
        let m = MarkSet::new(vec![], Regime::Edges, 1.0);
        let v = ScaledView::new(&seg, &m, 1.0, 1.0).unwrap();
        assert_eq!(v.cut(0.3), seg);
        assert_eq!(ScaledView::new(&seg, &m, 2.0, 1.0).unwrap().cut(0.0).gamma(), 0.5);
    }

    #[test]
    fn text_round_trip() {
        let mut r = RngStream::new(5, 0).rng();
        let ms = mark_edges(&y(), &mut r);
        let text = format!("{}{}", y().to_text(), ms.to_text());
        assert_eq!(MarkSet::from_text(&text).unwrap(), ms);
        assert_eq!(RealTree::from_text(&text).unwrap(), y());
    }

    fn random_unit(seed: u64) -> RealTree {
        crate::realtree::tests::random_tree(seed, 40, true)
    }

    proptest! {
        #[test]
        fn monotone(seed in any::<u64>(), t1 in 0.0f64..2.0, dt in 0.0f64..2.0) {
            let t = random_unit(seed);
            let mut r = RngStream::new(seed, 1).rng();
            for ms in [mark_edges(&t, &mut r), mark_branchpoints(&t, &mut r)] {
                let (_, m1) = cut_with_map(&t, &ms, t1);
                let (_, m2) = cut_with_map(&t, &ms, t1 + dt);
                for v in 0..t.node_count() {
                    prop_assert!(m2[v].is_none() || m1[v].is_some());
                }
            }
        }

        #[test]
        fn erasure_restriction(seed in any::<u64>(), h in 0u32..3, theta in 0.0f64..2.0) {
            let t = random_unit(seed);
            let mut r = RngStream::new(seed, 2).rng();
            for ms in [mark_edges(&t, &mut r), mark_branchpoints(&t, &mut r)] {
                let (e, emap) = t.erase_with_map(h as f64, EraseMode::KeepNodes);
                let (_, cmap) = cut_with_map(&t, &ms, theta);
                let (_, ecmap) = cut_with_map(&e, &ms.restrict(&emap), theta);
                for v in 0..t.node_count() {
                    let lhs = emap[v].is_some() && cmap[v].is_some();
                    let rhs = emap[v].is_some_and(|i| ecmap[i].is_some());
                    prop_assert_eq!(lhs, rhs);
                }
            }
        }

        #[test]
        fn counts_bounded(seed in any::<u64>(), a in 0u32..6, theta in 0.0f64..3.0) {
            let a = a as f64;
            let t = random_unit(seed);
            let mut r = RngStream::new(seed, 3).rng();
            let ms = mark_edges(&t, &mut r);
            prop_assert!(count_m(&t, &ms, a, theta) <= count_n(&t, &ms, a, theta));
        }
    }
}
