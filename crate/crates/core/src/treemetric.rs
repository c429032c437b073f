//! Comparisons between finite rooted trees and between tree-valued paths.
//!
//! [`half_distortion`] is half the minimal distortion of a correspondence
//! between two finite point sets, one per tree, that pairs the roots. The
//! point set of a tree consists of its representation nodes together with
//! the points at heights `k * resolution` on every edge. It never exceeds the
//! Gromov-Hausdorff distance of the rooted trees restricted to these points.

use crate::error::{Error, Result};
use crate::realtree::RealTree;

const TOL: f64 = 1e-12;

/// Limits for the exact search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    /// Maximal number of canonical vertices (root, branch points, leaves) per tree.
    pub max_vertices: usize,
    /// Maximal number of points per tree.
    pub max_points: usize,
    /// Spacing of the level points.
    pub resolution: f64,
    /// Maximal number of search nodes over all feasibility checks.
    pub max_steps: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_vertices: 10, max_points: 48, resolution: 0.5, max_steps: 5_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exactness {
    Exact,
    Bounds { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricResult {
    /// The exact value, or the upper bound when only bounds are available.
    pub value: f64,
    pub exactness: Exactness,
    pub node_budget_used: u64,
}

impl MetricResult {
    pub fn is_exact(&self) -> bool {
        self.exactness == Exactness::Exact
    }

    pub fn lower(&self) -> f64 {
        match self.exactness {
            Exactness::Exact => self.value,
            Exactness::Bounds { lower, .. } => lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match self.exactness {
            Exactness::Exact => self.value,
            Exactness::Bounds { upper, .. } => upper,
        }
    }
}

/// Number of nodes with a child count other than one, the root included.
pub fn canonical_vertex_count(t: &RealTree) -> usize {
    1 + (1..t.node_count()).filter(|&v| t.num_children(v) != 1).count()
}

struct PointSet {
    n: usize,
    dist: Vec<f64>,
}

impl PointSet {
    fn new(t: &RealTree, resolution: f64) -> Self {
        // a point is (node whose incoming edge carries it, height)
        let mut pts: Vec<(usize, f64)> = vec![(0, 0.0)];
        for v in 1..t.node_count() {
            let hp = t.height(t.parent(v).unwrap());
            let hv = t.height(v);
            if resolution > 0.0 {
                let mut k = (hp / resolution).floor() as u64 + 1;
                loop {
                    let y = k as f64 * resolution;
                    if y >= hv - TOL {
                        break;
                    }
                    if y > hp + TOL {
                        pts.push((v, y));
                    }
                    k += 1;
                }
            }
            pts.push((v, hv));
        }
        let depth: Vec<usize> = {
            let mut d = vec![0; t.node_count()];
            for v in 1..t.node_count() {
                d[v] = d[t.parent(v).unwrap()] + 1;
            }
            d
        };
        let lca = |mut a: usize, mut b: usize| {
            while depth[a] > depth[b] {
                a = t.parent(a).unwrap();
            }
            while depth[b] > depth[a] {
                b = t.parent(b).unwrap();
            }
            while a != b {
                a = t.parent(a).unwrap();
                b = t.parent(b).unwrap();
            }
            a
        };
        let n = pts.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let ((va, ha), (vb, hb)) = (pts[i], pts[j]);
                let meet = if va == vb {
                    ha.min(hb)
                } else {
                    let w = lca(va, vb);
                    if w == va {
                        ha
                    } else if w == vb {
                        hb
                    } else {
                        t.height(w)
                    }
                };
                let d = (ha + hb - 2.0 * meet).max(0.0);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        PointSet { n, dist }
    }

    fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }
}

/// Distortion of a relation given as index pairs.
fn distortion(a: &PointSet, b: &PointSet, rel: &[(usize, usize)]) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, &(x, y)) in rel.iter().enumerate() {
        for &(x2, y2) in &rel[k + 1..] {
            worst = worst.max((a.d(x, x2) - b.d(y, y2)).abs());
        }
    }
    worst
}

fn nearest_by_height(a: &PointSet, b: &PointSet) -> Vec<(usize, usize)> {
    (0..a.n)
        .map(|x| {
            let hx = a.d(0, x);
            let y = (0..b.n)
                .min_by(|&p, &q| (hx - b.d(0, p)).abs().total_cmp(&(hx - b.d(0, q)).abs()))
                .unwrap();
            (x, y)
        })
        .collect()
}

fn bounds(a: &PointSet, b: &PointSet) -> (f64, f64) {
    let one_side = |a: &PointSet, b: &PointSet| {
        (0..a.n)
            .map(|x| (0..b.n).map(|y| (a.d(0, x) - b.d(0, y)).abs()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    let lower = one_side(a, b).max(one_side(b, a)) / 2.0;
    let mut rel = nearest_by_height(a, b);
    rel.extend(nearest_by_height(b, a).into_iter().map(|(y, x)| (x, y)));
    rel.push((0, 0));
    rel.sort_unstable();
    rel.dedup();
    let upper = distortion(a, b, &rel) / 2.0;
    (lower, upper.max(lower))
}

struct Search<'a> {
    a: &'a PointSet,
    b: &'a PointSet,
    words: usize,
    compat: Vec<u64>,
    masks: Vec<u64>,
    steps: u64,
    max_steps: u64,
}

impl<'a> Search<'a> {
    fn new(a: &'a PointSet, b: &'a PointSet, max_steps: u64) -> Self {
        let np = a.n * b.n;
        let words = np.div_ceil(64);
        let mut masks = vec![0u64; (a.n + b.n) * words];
        for x in 0..a.n {
            for y in 0..b.n {
                let p = x * b.n + y;
                masks[x * words + p / 64] |= 1 << (p % 64);
                masks[(a.n + y) * words + p / 64] |= 1 << (p % 64);
            }
        }
        Search { a, b, words, compat: vec![0; np * words], masks, steps: 0, max_steps }
    }

    fn set_threshold(&mut self, e: f64) {
        let (a, b, w) = (self.a, self.b, self.words);
        self.compat.iter_mut().for_each(|x| *x = 0);
        let np = a.n * b.n;
        for p in 0..np {
            let (x, y) = (p / b.n, p % b.n);
            let row = &mut self.compat[p * w..(p + 1) * w];
            for q in 0..np {
                let (x2, y2) = (q / b.n, q % b.n);
                if (a.d(x, x2) - b.d(y, y2)).abs() <= e + TOL {
                    row[q / 64] |= 1 << (q % 64);
                }
            }
        }
    }

    /// `None` when the step budget runs out.
    fn feasible(&mut self, e: f64) -> Option<bool> {
        self.set_threshold(e);
        let w = self.words;
        let allowed = self.compat[0..w].to_vec();
        let mut covered = vec![false; self.a.n + self.b.n];
        covered[0] = true;
        covered[self.a.n] = true;
        self.extend(&allowed, &mut covered)
    }

    fn extend(&mut self, allowed: &[u64], covered: &mut [bool]) -> Option<bool> {
        self.steps += 1;
        if self.steps > self.max_steps {
            return None;
        }
        let w = self.words;
        let mut best: Option<(usize, u32)> = None;
        for (el, &done) in covered.iter().enumerate() {
            if done {
                continue;
            }
            let m = &self.masks[el * w..(el + 1) * w];
            let c: u32 = allowed.iter().zip(m).map(|(x, y)| (x & y).count_ones()).sum();
            if c == 0 {
                return Some(false);
            }
            if best.is_none_or(|(_, bc)| c < bc) {
                best = Some((el, c));
            }
        }
        let Some((el, _)) = best else {
            return Some(true);
        };
        let an = self.a.n;
        let bn = self.b.n;
        let mut cands: Vec<(bool, usize)> = Vec::new();
        let m = &self.masks[el * w..(el + 1) * w];
        for (k, (x, y)) in allowed.iter().zip(m).enumerate() {
            let mut bits = x & y;
            while bits != 0 {
                let p = k * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let partner = if el < an { an + p % bn } else { p / bn };
                cands.push((covered[partner], p));
            }
        }
        cands.sort_unstable();
        let mut next = vec![0u64; w];
        for (_, p) in cands {
            let (x, y) = (p / bn, p % bn);
            let row = &self.compat[p * w..(p + 1) * w];
            for k in 0..w {
                next[k] = allowed[k] & row[k];
            }
            let (ox, oy) = (covered[x], covered[an + y]);
            covered[x] = true;
            covered[an + y] = true;
            let r = self.extend(&next, covered);
            covered[x] = ox;
            covered[an + y] = oy;
            match r {
                Some(false) => {}
                other => return other,
            }
        }
        Some(false)
    }
}

fn candidate_values(a: &PointSet, b: &PointSet, lo: f64, hi: f64) -> Vec<f64> {
    let distinct = |p: &PointSet| {
        let mut v: Vec<f64> = p.dist.clone();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|x, y| (*x - *y).abs() <= TOL);
        v
    };
    let (va, vb) = (distinct(a), distinct(b));
    let mut out = Vec::new();
    for &x in &va {
        for &y in &vb {
            let d = (x - y).abs();
            if d >= lo - 1e-9 && d <= hi + 1e-9 {
                out.push(d);
            }
        }
    }
    out.push(hi);
    out.sort_by(f64::total_cmp);
    out.dedup_by(|x, y| (*x - *y).abs() <= TOL);
    out
}

enum Outcome {
    Exact(f64, u64),
    Bounds(f64, f64, u64, &'static str),
}

fn compute(t1: &RealTree, t2: &RealTree, budget: &Budget) -> Outcome {
    let a = PointSet::new(t1, budget.resolution);
    let b = PointSet::new(t2, budget.resolution);
    let (lower, upper) = bounds(&a, &b);
    if upper - lower <= TOL {
        return Outcome::Exact(upper, 0);
    }
    if canonical_vertex_count(t1) > budget.max_vertices || canonical_vertex_count(t2) > budget.max_vertices {
        return Outcome::Bounds(lower, upper, 0, "too many canonical vertices");
    }
    if a.n > budget.max_points || b.n > budget.max_points {
        return Outcome::Bounds(lower, upper, 0, "too many points");
    }
    let cands = candidate_values(&a, &b, 2.0 * lower, 2.0 * upper);
    let mut search = Search::new(&a, &b, budget.max_steps);
    // cands.last() is feasible: the greedy relation attains it
    let (mut lo, mut hi) = (0usize, cands.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        match search.feasible(cands[mid]) {
            Some(true) => hi = mid,
            Some(false) => lo = mid + 1,
            None => {
                let lb = if lo > 0 { cands[lo - 1] / 2.0 } else { lower };
                return Outcome::Bounds(lb.max(lower), cands[hi] / 2.0, search.steps, "search step budget exhausted");
            }
        }
    }
    Outcome::Exact(cands[lo] / 2.0, search.steps)
}

/// Half the minimal root-pairing distortion; falls back to bounds when the
/// budget is exceeded.
pub fn half_distortion(t1: &RealTree, t2: &RealTree, budget: &Budget) -> MetricResult {
    match compute(t1, t2, budget) {
        Outcome::Exact(v, steps) => MetricResult { value: v, exactness: Exactness::Exact, node_budget_used: steps },
        Outcome::Bounds(lower, upper, steps, _) => MetricResult {
            value: upper,
            exactness: Exactness::Bounds { lower, upper },
            node_budget_used: steps,
        },
    }
}

/// As [`half_distortion`], but an exceeded budget is an error.
pub fn half_distortion_exact(t1: &RealTree, t2: &RealTree, budget: &Budget) -> Result<MetricResult> {
    match compute(t1, t2, budget) {
        Outcome::Exact(v, steps) => Ok(MetricResult { value: v, exactness: Exactness::Exact, node_budget_used: steps }),
        Outcome::Bounds(_, _, _, why) => Err(Error::Budget(why.into())),
    }
}

/// A right-continuous piecewise-constant tree-valued path: the first entry
/// holds the value at time 0, every further entry a jump time and the new value.
pub type TreePath = [(f64, RealTree)];

fn jumps(path: &TreePath, horizon: f64, which: &str) -> Result<Vec<f64>> {
    let Some(first) = path.first() else {
        return Err(Error::InvalidArgument(format!("{which}: empty path")));
    };
    if first.0 != 0.0 {
        return Err(Error::InvalidArgument(format!("{which}: first entry must be at time 0")));
    }
    let mut out = Vec::new();
    let mut last = 0.0;
    for (t, _) in &path[1..] {
        if !(*t > last) {
            return Err(Error::InvalidArgument(format!("{which}: jump times not strictly increasing at {t}")));
        }
        last = *t;
        if *t <= horizon {
            out.push(*t);
        }
    }
    Ok(out)
}

struct Alignment {
    knots: Vec<(f64, f64)>,
}

impl Alignment {
    fn gamma(&self) -> f64 {
        let mut g: f64 = 0.0;
        let mut prev = (0.0, 0.0);
        for &(s, t) in &self.knots {
            g = g.max(((t - prev.1) / (s - prev.0)).ln().abs());
            prev = (s, t);
        }
        g
    }

    fn forward(&self, x: f64) -> f64 {
        let mut prev = (0.0, 0.0);
        for &(s, t) in &self.knots {
            if x <= s {
                return prev.1 + (x - prev.0) * (t - prev.1) / (s - prev.0);
            }
            prev = (s, t);
        }
        prev.1 + x - prev.0
    }

    fn inverse(&self, y: f64) -> f64 {
        let mut prev = (0.0, 0.0);
        for &(s, t) in &self.knots {
            if y <= t {
                return prev.0 + (y - prev.1) * (s - prev.0) / (t - prev.1);
            }
            prev = (s, t);
        }
        prev.0 + y - prev.1
    }
}

fn index_at(jumps: &[f64], x: f64) -> usize {
    jumps.partition_point(|&s| s <= x)
}

fn value_term(s: &[f64], t: &[f64], dist: &[Vec<f64>], lam: &Alignment) -> f64 {
    let mut crit: Vec<f64> = vec![0.0];
    crit.extend_from_slice(s);
    crit.extend_from_slice(t);
    crit.extend(s.iter().map(|&x| lam.forward(x)));
    crit.extend(t.iter().map(|&y| lam.inverse(y)));
    crit.sort_by(f64::total_cmp);
    crit.dedup_by(|x, y| (*x - *y).abs() <= TOL);
    let integrand = |u: f64| {
        let mut thetas: Vec<f64> = vec![0.0, u, lam.inverse(u)];
        thetas.extend_from_slice(s);
        thetas.extend(t.iter().map(|&y| lam.inverse(y)));
        thetas
            .into_iter()
            .map(|th| {
                let i = index_at(s, th.min(u));
                let j = index_at(t, lam.forward(th).min(u));
                dist[i][j].min(1.0)
            })
            .fold(0.0, f64::max)
    };
    let mut total = 0.0;
    for k in 0..crit.len() {
        let (c0, c1) = (crit[k], crit.get(k + 1).copied());
        match c1 {
            Some(c1) => total += integrand(0.5 * (c0 + c1)) * ((-c0).exp() - (-c1).exp()),
            None => total += integrand(c0 + 1.0) * (-c0).exp(),
        }
    }
    total
}

/// Upper bound on the Skorohod distance between two piecewise-constant paths.
///
/// Time changes are piecewise linear through matched pairs of jump times; all
/// monotone matchings are tried up to `max_alignments`, after which only the
/// identity and the in-order matching are guaranteed to have been considered.
/// Distances between values use [`half_distortion`] upper bounds. Jumps after
/// `horizon` are ignored.
pub fn skorohod_upper(path1: &TreePath, path2: &TreePath, horizon: f64, budget: &Budget) -> Result<f64> {
    let s = jumps(path1, horizon, "path1")?;
    let t = jumps(path2, horizon, "path2")?;
    let dist: Vec<Vec<f64>> = (0..=s.len())
        .map(|i| (0..=t.len()).map(|j| half_distortion(&path1[i].1, &path2[j].1, budget).upper()).collect())
        .collect();
    let cost = |knots: Vec<(f64, f64)>| {
        let lam = Alignment { knots };
        let g = lam.gamma();
        if g >= 1.0 {
            return g;
        }
        g.max(value_term(&s, &t, &dist, &lam))
    };
    let mut best = cost(Vec::new());
    let k = s.len().min(t.len());
    best = best.min(cost((0..k).map(|i| (s[i], t[i])).collect()));

    const MAX_ALIGNMENTS: usize = 100_000;
    let mut visited = 0usize;
    let mut stack: Vec<(usize, usize, Vec<(f64, f64)>)> = vec![(0, 0, Vec::new())];
    while let Some((i0, j0, knots)) = stack.pop() {
        for i in i0..s.len() {
            for j in j0..t.len() {
                if visited >= MAX_ALIGNMENTS {
                    return Ok(best);
                }
                visited += 1;
                let mut next = knots.clone();
                next.push((s[i], t[j]));
                best = best.min(cost(next.clone()));
                stack.push((i + 1, j + 1, next));
            }
        }
    }
    Ok(best)
}

/// Tree functionals on a grid of levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub gamma: f64,
    pub d: f64,
    pub kk: usize,
    pub n_root: usize,
    pub multi_tree: bool,
    pub grid: Vec<f64>,
    pub l: Vec<f64>,
    /// `v[g][i]`: non-root nodes with `i` children at height at most `grid[g]`.
    pub v: Vec<Vec<usize>>,
    pub z: Vec<usize>,
}

impl Summary {
    /// Flat vector `(Γ, D, 𝐤, n_root, L..., V..., Z...)`; the `V` block lists,
    /// per level, counts for `i = 2..=max_children`.
    pub fn to_vec(&self) -> Vec<f64> {
        let width = self.v.iter().map(|v| v.len()).max().unwrap_or(0);
        let mut out = vec![self.gamma, self.d, self.kk as f64, self.n_root as f64];
        out.extend(&self.l);
        for row in &self.v {
            for i in 2..width {
                out.push(row.get(i).copied().unwrap_or(0) as f64);
            }
        }
        out.extend(self.z.iter().map(|&z| z as f64));
        out
    }
}

pub fn summary(t: &RealTree, grid: &[f64]) -> Summary {
    let fb = t.first_branch();
    Summary {
        gamma: t.gamma(),
        d: fb.d,
        kk: fb.kk,
        n_root: t.n_root(),
        multi_tree: fb.multi_tree,
        grid: grid.to_vec(),
        l: grid.iter().map(|&a| t.length_below(a)).collect(),
        v: grid.iter().map(|&a| t.degree_counts_below(a)).collect(),
        z: grid.iter().map(|&a| t.population(a)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::realtree::tests::random_tree;
    use crate::realtree::{EraseMode, TreeBuilder};
    use proptest::prelude::*;

    fn y_tree() -> RealTree {
        RealTree::star(1.0, 2, 1.0)
    }

    #[test]
    fn identical_trees() {
        let b = Budget::default();
        for t in [RealTree::root_only(), RealTree::path(1, 1.0), y_tree()] {
            let r = half_distortion_exact(&t, &t, &b).unwrap();
            assert_eq!(r.value, 0.0);
        }
    }

    #[test]
    fn segments() {
        let r = half_distortion_exact(&RealTree::path(1, 1.0), &RealTree::path(1, 2.0), &Budget::default()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn y_against_segment() {
        let r = half_distortion_exact(&y_tree(), &RealTree::path(1, 2.0), &Budget::default()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn budget_error() {
        let big = RealTree::star(1.0, 12, 1.0);
        let b = Budget::default();
        assert!(matches!(half_distortion_exact(&big, &y_tree(), &b), Err(Error::Budget(_))));
        let r = half_distortion(&big, &y_tree(), &b);
        assert!(r.lower() <= r.upper());
    }

    #[test]
    fn skorohod_identical() {
        let t = y_tree();
        let p = vec![(0.0, t.clone()), (1.0, RealTree::root_only())];
        assert_eq!(skorohod_upper(&p, &p, 5.0, &Budget::default()).unwrap(), 0.0);
    }

    #[test]
    fn skorohod_shifted_jump() {
        let t = y_tree();
        let p1 = vec![(0.0, t.clone()), (1.0, RealTree::root_only())];
        let p2 = vec![(0.0, t), (1.1, RealTree::root_only())];
        let d = skorohod_upper(&p1, &p2, 5.0, &Budget::default()).unwrap();
        assert!(d <= 1.1f64.ln() + 1e-12, "{d}");
        assert!(d > 0.0);
    }

    #[test]
    fn skorohod_aligned_values() {
        let p1 = vec![(0.0, RealTree::path(1, 2.0)), (1.0, RealTree::path(1, 1.0))];
        let p2 = vec![(0.0, y_tree()), (1.0, RealTree::path(1, 1.0))];
        let d = skorohod_upper(&p1, &p2, 5.0, &Budget::default()).unwrap();
        assert!(d <= 0.5 + 1e-12);
    }

    #[test]
    fn skorohod_unsorted() {
        let p1 = vec![(0.0, y_tree()), (2.0, RealTree::path(1, 1.0)), (1.0, RealTree::root_only())];
        assert!(skorohod_upper(&p1, &p1, 5.0, &Budget::default()).is_err());
    }

    #[test]
    fn summary_examples() {
        let s = summary(&RealTree::root_only(), &[0.5, 1.0]);
        assert!(s.to_vec().iter().all(|&x| x == 0.0));
        let s = summary(&RealTree::path(1, 1.0), &[0.5]);
        assert_eq!(s.gamma, 1.0);
        assert_eq!(s.l[0], 0.5);
        let mut b = TreeBuilder::new();
        let v = b.add_child(0, 1.0);
        b.add_child(v, 1.0);
        b.add_child(v, 1.0);
        let s = summary(&b.build(), &[f64::INFINITY]);
        assert_eq!(s.v[0][2], 1);
    }

    fn small(seed: u64) -> RealTree {
        random_tree(seed, 6, false).contract().scaled(0.6)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn triangle_inequality(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
            let b = Budget::default();
            let (x, y, z) = (small(s1), small(s2), small(s3));
            let xy = half_distortion(&x, &y, &b);
            let yz = half_distortion(&y, &z, &b);
            let xz = half_distortion(&x, &z, &b);
            prop_assume!(xy.is_exact() && yz.is_exact() && xz.is_exact());
            prop_assert!(xz.value <= xy.value + yz.value + 1e-9);
            let yx = half_distortion(&y, &x, &b);
            prop_assert!((yx.value - xy.value).abs() < 1e-12);
        }

        #[test]
        fn erasure_bound(seed in any::<u64>(), h in 0.01f64..1.5) {
            let t = small(seed);
            let e = t.erase(h, EraseMode::KeepNodes);
            let r = half_distortion(&e, &t, &Budget::default());
            prop_assert!(r.lower() <= h + 1e-9);
            if r.is_exact() {
                prop_assert!(r.value <= h + 1e-9);
            }
        }
    }
}
