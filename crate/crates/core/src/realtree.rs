//! Finite rooted trees with edge lengths, their functionals and the
//! `h`-erasure operator.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::fmt::Write as _;

const NO_PARENT: usize = usize::MAX;

/// A finite rooted tree. Node 0 is the root and every parent index is
/// smaller than its children's, so index order is a topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTree {
    parent: Vec<usize>,
    length: Vec<f64>,
    height: Vec<f64>,
    child_start: Vec<usize>,
    children: Vec<usize>,
    height_cap: Option<f64>,
    node_capped: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TreeBuilder {
    parent: Vec<usize>,
    length: Vec<f64>,
    height_cap: Option<f64>,
    node_capped: bool,
}

impl TreeBuilder {
    pub fn new() -> Self {
        TreeBuilder { parent: vec![NO_PARENT], length: vec![0.0], height_cap: None, node_capped: false }
    }

    pub fn with_capacity(n: usize) -> Self {
        let mut b = Self::new();
        b.parent.reserve(n);
        b.length.reserve(n);
        b
    }

    /// Appends a child of `parent` at distance `len`; returns its index.
    pub fn add_child(&mut self, parent: usize, len: f64) -> usize {
        assert!(parent < self.parent.len(), "unknown parent {parent}");
        debug_assert!(len >= 0.0 && len.is_finite());
        self.parent.push(parent);
        self.length.push(len);
        self.parent.len() - 1
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn set_height_cap(&mut self, cap: Option<f64>) {
        self.height_cap = cap;
    }

    pub fn set_node_capped(&mut self, v: bool) {
        self.node_capped = v;
    }

    pub fn build(self) -> RealTree {
        RealTree::from_parts(self.parent, self.length, self.height_cap, self.node_capped)
    }
}

/// How `erase` represents the surviving tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EraseMode {
    /// Single-child interior nodes are merged into one edge.
    #[default]
    Contract,
    /// Every surviving original node is kept.
    KeepNodes,
}

/// First branch point data.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstBranch {
    pub d: f64,
    pub kk: usize,
    /// The node where the first segment ends (root when `n_root ≠ 1`).
    pub node: usize,
    pub subtree_roots: Vec<usize>,
    /// True when the root carries a number of subtrees other than one.
    pub multi_tree: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Functionals {
    pub gamma: f64,
    pub d: f64,
    pub kk: usize,
    pub n_root: usize,
    pub multi_tree: bool,
    /// Total length below level `a`.
    pub l_a: f64,
    /// `v_a[i]`: non-root nodes with `i` children at height at most `a`.
    pub v_a: Vec<usize>,
    /// Number of points at level `a`.
    pub z_a: usize,
}

impl RealTree {
    fn from_parts(parent: Vec<usize>, length: Vec<f64>, height_cap: Option<f64>, node_capped: bool) -> Self {
        let n = parent.len();
        let mut height = vec![0.0; n];
        let mut count = vec![0usize; n + 1];
        for v in 1..n {
            let p = parent[v];
            assert!(p < v, "parent index must precede child");
            height[v] = height[p] + length[v];
            count[p + 1] += 1;
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let child_start = count.clone();
        let mut fill = count;
        let mut children = vec![0; n.saturating_sub(1)];
        for v in 1..n {
            let p = parent[v];
            children[fill[p]] = v;
            fill[p] += 1;
        }
        RealTree { parent, length, height, child_start, children, height_cap, node_capped }
    }

    /// The tree consisting of the root alone.
    pub fn root_only() -> Self {
        TreeBuilder::new().build()
    }

    /// A path of `n` edges of the given length.
    pub fn path(n: usize, len: f64) -> Self {
        let mut b = TreeBuilder::new();
        let mut last = 0;
        for _ in 0..n {
            last = b.add_child(last, len);
        }
        b.build()
    }

    /// Trunk of length `trunk` ending in a vertex with `k` branches of length `branch`.
    pub fn star(trunk: f64, k: usize, branch: f64) -> Self {
        let mut b = TreeBuilder::new();
        let t = b.add_child(0, trunk);
        for _ in 0..k {
            b.add_child(t, branch);
        }
        b.build()
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn edge_count(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        let p = self.parent[v];
        (p != NO_PARENT).then_some(p)
    }

    pub fn length(&self, v: usize) -> f64 {
        self.length[v]
    }

    pub fn height(&self, v: usize) -> f64 {
        self.height[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[self.child_start[v]..self.child_start[v + 1]]
    }

    pub fn num_children(&self, v: usize) -> usize {
        self.child_start[v + 1] - self.child_start[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.num_children(v) == 0
    }

    pub fn height_cap(&self) -> Option<f64> {
        self.height_cap
    }

    pub fn node_capped(&self) -> bool {
        self.node_capped
    }

    /// True if the realization hit a cap.
    pub fn is_capped(&self) -> bool {
        self.node_capped || self.height_cap.is_some_and(|c| self.gamma() >= c - 1e-9)
    }

    /// Leaves sitting at the height cap (unexpanded).
    pub fn is_frontier(&self, v: usize) -> bool {
        self.height_cap.is_some_and(|c| self.is_leaf(v) && v != 0 && self.height[v] >= c - 1e-9)
    }

    pub fn with_caps(mut self, height_cap: Option<f64>, node_capped: bool) -> Self {
        self.height_cap = height_cap;
        self.node_capped = node_capped;
        self
    }

    /// `Γ(T)`.
    pub fn gamma(&self) -> f64 {
        self.height.iter().copied().fold(0.0, f64::max)
    }

    pub fn n_root(&self) -> usize {
        self.num_children(0)
    }

    /// `Γ(T_v)` for every node.
    pub fn subtree_heights(&self) -> Vec<f64> {
        let n = self.node_count();
        let mut top = self.height.clone();
        for v in (1..n).rev() {
            let p = self.parent[v];
            if top[v] > top[p] {
                top[p] = top[v];
            }
        }
        (0..n).map(|v| top[v] - self.height[v]).collect()
    }

    /// Subtree node counts.
    pub fn subtree_sizes(&self) -> Vec<usize> {
        let n = self.node_count();
        let mut s = vec![1usize; n];
        for v in (1..n).rev() {
            s[self.parent[v]] += s[v];
        }
        s
    }

    pub fn first_branch(&self) -> FirstBranch {
        match self.n_root() {
            0 => FirstBranch { d: 0.0, kk: 0, node: 0, subtree_roots: vec![], multi_tree: false },
            1 => {
                let mut v = self.children(0)[0];
                while self.num_children(v) == 1 {
                    v = self.children(v)[0];
                }
                FirstBranch { d: self.height[v], kk: self.num_children(v), node: v, subtree_roots: self.children(v).to_vec(), multi_tree: false }
            }
            _ => {
                let mut d = f64::INFINITY;
                for &c in self.children(0) {
                    let mut v = c;
                    while self.num_children(v) == 1 {
                        v = self.children(v)[0];
                    }
                    d = d.min(self.height[v]);
                }
                FirstBranch { d, kk: 0, node: 0, subtree_roots: vec![], multi_tree: true }
            }
        }
    }

    /// Total edge length below level `a`.
    pub fn length_below(&self, a: f64) -> f64 {
        (1..self.node_count())
            .map(|v| {
                let hp = self.height[self.parent[v]];
                (self.height[v].min(a) - hp).max(0.0)
            })
            .sum()
    }

    pub fn total_length(&self) -> f64 {
        self.length.iter().sum()
    }

    /// Counts of non-root nodes at height `≤ a`, indexed by number of children.
    pub fn degree_counts_below(&self, a: f64) -> Vec<usize> {
        let mut out = Vec::new();
        for v in 1..self.node_count() {
            if self.height[v] <= a {
                let k = self.num_children(v);
                if out.len() <= k {
                    out.resize(k + 1, 0);
                }
                out[k] += 1;
            }
        }
        out
    }

    /// Number of points at level `a > 0`.
    pub fn population(&self, a: f64) -> usize {
        (1..self.node_count()).filter(|&v| self.height[self.parent[v]] < a && a <= self.height[v]).count()
    }

    pub fn functionals(&self, a: f64) -> Functionals {
        let fb = self.first_branch();
        Functionals {
            gamma: self.gamma(),
            d: fb.d,
            kk: fb.kk,
            n_root: self.n_root(),
            multi_tree: fb.multi_tree,
            l_a: self.length_below(a),
            v_a: self.degree_counts_below(a),
            z_a: self.population(a),
        }
    }

    /// `Blw(T, a)`.
    pub fn below(&self, a: f64) -> RealTree {
        let mut b = TreeBuilder::new();
        let mut map = vec![NO_PARENT; self.node_count()];
        map[0] = 0;
        for v in 1..self.node_count() {
            let p = self.parent[v];
            if map[p] == NO_PARENT {
                continue;
            }
            if self.height[v] <= a {
                map[v] = b.add_child(map[p], self.length[v]);
            } else if self.height[p] < a {
                b.add_child(map[p], a - self.height[p]);
            }
        }
        b.build()
    }

    /// `Abv(T, a)`: the subtrees above level `a` joined at a new root.
    pub fn above(&self, a: f64) -> RealTree {
        if a <= 0.0 {
            return self.clone();
        }
        let mut b = TreeBuilder::new();
        let mut map = vec![NO_PARENT; self.node_count()];
        for v in 1..self.node_count() {
            let p = self.parent[v];
            if map[p] != NO_PARENT {
                map[v] = b.add_child(map[p], self.length[v]);
            } else if self.height[p] < a && a <= self.height[v] {
                map[v] = if self.height[v] == a { 0 } else { b.add_child(0, self.height[v] - a) };
            }
        }
        b.build().with_caps(self.height_cap.map(|c| c - a), self.node_capped)
    }

    /// `R^h(T)`.
    pub fn erase(&self, h: f64, mode: EraseMode) -> RealTree {
        self.erase_with_map(h, mode).0
    }

    /// `R^h(T)` together with the image of every original node that survives
    /// as a node.
    pub fn erase_with_map(&self, h: f64, mode: EraseMode) -> (RealTree, Vec<Option<usize>>) {
        let n = self.node_count();
        let sub = self.subtree_heights();
        let tol = 1e-12 * h.max(1.0);
        let keep = |v: usize| sub[v] >= h - tol;
        let mut b = TreeBuilder::new();
        let mut map = vec![None; n];
        map[0] = Some(0);
        if h <= 0.0 {
            return (self.clone(), (0..n).map(Some).collect());
        }
        for v in 1..n {
            let p = self.parent[v];
            let Some(np) = map[p] else { continue };
            if keep(v) {
                map[v] = Some(b.add_child(np, self.length[v]));
            } else {
                let ext = self.length[v] + sub[v] - h;
                if ext > tol {
                    b.add_child(np, ext);
                }
            }
        }
        let cap = self.height_cap.map(|c| c - h);
        let t = b.build().with_caps(cap, self.node_capped);
        match mode {
            EraseMode::KeepNodes => (t, map),
            EraseMode::Contract => {
                let (c, cmap) = t.contract_with_map();
                let m = map.into_iter().map(|o| o.and_then(|i| cmap[i])).collect();
                (c, m)
            }
        }
    }

    /// Merges every non-root node with exactly one child into a single edge.
    pub fn contract(&self) -> RealTree {
        self.contract_with_map().0
    }

    fn contract_with_map(&self) -> (RealTree, Vec<Option<usize>>) {
        let n = self.node_count();
        let mut b = TreeBuilder::with_capacity(n);
        let mut map = vec![None; n];
        map[0] = Some(0);
        // anchor[v]: nearest kept ancestor-or-self image and the accumulated length
        let mut anchor = vec![(0usize, 0.0f64); n];
        for v in 1..n {
            let p = self.parent[v];
            let (ap, acc) = if let Some(ip) = map[p] { (ip, 0.0) } else { anchor[p] };
            let len = acc + self.length[v];
            if self.num_children(v) == 1 {
                anchor[v] = (ap, len);
            } else {
                map[v] = Some(b.add_child(ap, len));
            }
        }
        (b.build().with_caps(self.height_cap, self.node_capped), map)
    }

    /// Joins trees at a common root.
    pub fn concat(trees: &[RealTree]) -> RealTree {
        let mut b = TreeBuilder::with_capacity(trees.iter().map(|t| t.node_count()).sum());
        let mut cap: Option<f64> = None;
        let mut capped = false;
        for t in trees {
            let mut map = vec![0usize; t.node_count()];
            for v in 1..t.node_count() {
                map[v] = b.add_child(map[t.parent[v]], t.length[v]);
            }
            if let Some(c) = t.height_cap {
                cap = Some(cap.map_or(c, |x: f64| x.max(c)));
            }
            capped |= t.node_capped;
        }
        b.set_height_cap(cap);
        b.set_node_capped(capped);
        b.build()
    }

    /// Tree with all lengths multiplied by `s`.
    pub fn scaled(&self, s: f64) -> RealTree {
        let length = self.length.iter().map(|l| l * s).collect();
        RealTree::from_parts(self.parent.clone(), length, self.height_cap.map(|c| c * s), self.node_capped)
    }

    /// Canonical form of the isometry class (single-child chains contracted,
    /// children ordered), with lengths rounded to `1e-9`.
    pub fn canonical(&self) -> String {
        let t = self.contract();
        let sub = t.subtree_heights();
        fn enc(t: &RealTree, sub: &[f64], v: usize) -> (i64, String) {
            let mut kids: Vec<(i64, String)> = t.children(v).iter().map(|&c| enc(t, sub, c)).collect();
            kids.sort();
            let mut s = format!("{:.9}(", t.length[v]);
            for (_, k) in &kids {
                s.push_str(k);
            }
            s.push(')');
            (((sub[v] + t.length[v]) * 1e9).round() as i64, s)
        }
        enc(&t, &sub, 0).1
    }

    /// Isometry-class comparison with an absolute tolerance on lengths.
    pub fn approx_eq(&self, other: &RealTree, tol: f64) -> bool {
        #[derive(Debug)]
        struct Node {
            len: f64,
            key: f64,
            kids: Vec<Node>,
        }
        fn build(t: &RealTree, sub: &[f64], v: usize) -> Node {
            let mut kids: Vec<Node> = t.children(v).iter().map(|&c| build(t, sub, c)).collect();
            kids.sort_by(|a, b| a.key.total_cmp(&b.key).then(a.kids.len().cmp(&b.kids.len())));
            Node { len: t.length[v], key: sub[v] + t.length[v], kids }
        }
        fn same(a: &Node, b: &Node, tol: f64) -> bool {
            if (a.len - b.len).abs() > tol || a.kids.len() != b.kids.len() {
                return false;
            }
            // greedy pairing in key order, then exhaustive fallback for near ties
            if a.kids.iter().zip(&b.kids).all(|(x, y)| same(x, y, tol)) {
                return true;
            }
            let mut used = vec![false; b.kids.len()];
            fn assign(a: &[Node], b: &[Node], used: &mut [bool], i: usize, tol: f64) -> bool {
                if i == a.len() {
                    return true;
                }
                for j in 0..b.len() {
                    if !used[j] && (a[i].key - b[j].key).abs() <= 2.0 * tol * (1.0 + a[i].kids.len() as f64) && same(&a[i], &b[j], tol) {
                        used[j] = true;
                        if assign(a, b, used, i + 1, tol) {
                            return true;
                        }
                        used[j] = false;
                    }
                }
                false
            }
            assign(&a.kids, &b.kids, &mut used, 0, tol)
        }
        let (x, y) = (self.contract(), other.contract());
        if x.node_count() != y.node_count() {
            return false;
        }
        let (sx, sy) = (x.subtree_heights(), y.subtree_heights());
        same(&build(&x, &sx, 0), &build(&y, &sy, 0), tol)
    }

    fn caps_text(&self) -> String {
        match (self.height_cap, self.node_capped) {
            (None, false) => "none".into(),
            (Some(c), false) => format!("height:{c:.16e}"),
            (None, true) => "nodes".into(),
            (Some(c), true) => format!("height:{c:.16e}+nodes"),
        }
    }

    /// Line-oriented text form: `TREE n=<n> caps=<flags>` then `id parent len`.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.node_count() * 32);
        writeln!(s, "TREE n={} caps={}", self.node_count(), self.caps_text()).unwrap();
        for v in 0..self.node_count() {
            match self.parent(v) {
                None => writeln!(s, "{v} - {:.16e}", self.length[v]).unwrap(),
                Some(p) => writeln!(s, "{v} {p} {:.16e}", self.length[v]).unwrap(),
            }
        }
        s
    }

    /// Parses [`RealTree::to_text`] output. Ids may be arbitrary distinct
    /// integers; they are preserved when already in parent-before-child order.
    pub fn from_text(text: &str) -> Result<RealTree> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty tree file".into() })?;
        let perr = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
        let mut hp = header.split_whitespace();
        if hp.next() != Some("TREE") {
            return Err(perr(hl, "expected TREE header".into()));
        }
        let mut n_decl = None;
        let mut cap = None;
        let mut node_capped = false;
        for part in hp {
            if let Some(v) = part.strip_prefix("n=") {
                n_decl = Some(v.parse::<usize>().map_err(|_| perr(hl, format!("bad node count {v}")))?);
            } else if let Some(v) = part.strip_prefix("caps=") {
                for flag in v.split('+') {
                    if flag == "none" {
                    } else if flag == "nodes" {
                        node_capped = true;
                    } else if let Some(c) = flag.strip_prefix("height:") {
                        cap = Some(c.parse::<f64>().map_err(|_| perr(hl, format!("bad height cap {c}")))?);
                    } else {
                        return Err(perr(hl, format!("unknown cap flag {flag}")));
                    }
                }
            } else {
                return Err(perr(hl, format!("unexpected header field {part}")));
            }
        }
        let mut ids = Vec::new();
        let mut parents = Vec::new();
        let mut lens = Vec::new();
        let mut index = HashMap::new();
        let mut root = None;
        for (i, l) in lines {
            if l.starts_with("MARK") {
                break;
            }
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(perr(i, format!("expected 'id parent len', got '{l}'")));
            }
            let id: u64 = f[0].parse().map_err(|_| perr(i, format!("bad id {}", f[0])))?;
            let par = if f[1] == "-" { None } else { Some(f[1].parse::<u64>().map_err(|_| perr(i, format!("bad parent {}", f[1])))?) };
            let len: f64 = f[2].parse().map_err(|_| perr(i, format!("bad length {}", f[2])))?;
            if !(len >= 0.0 && len.is_finite()) {
                return Err(perr(i, format!("edge length {len} must be finite and nonnegative")));
            }
            if index.insert(id, ids.len()).is_some() {
                return Err(perr(i, format!("duplicate id {id}")));
            }
            if par.is_none() {
                if root.is_some() {
                    return Err(perr(i, "second root".into()));
                }
                root = Some(ids.len());
            }
            ids.push((id, i));
            parents.push(par);
            lens.push(len);
        }
        let n = ids.len();
        if let Some(d) = n_decl {
            if d != n {
                return Err(perr(hl, format!("header declares {d} nodes, found {n}")));
            }
        }
        let root = root.ok_or(perr(hl, "missing root".into()))?;
        let mut pidx = vec![NO_PARENT; n];
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); n];
        for k in 0..n {
            if let Some(p) = parents[k] {
                let j = *index.get(&p).ok_or_else(|| perr(ids[k].1, format!("unknown parent {p}")))?;
                pidx[k] = j;
                kids[j].push(k);
            }
        }
        let ordered = root == 0 && ids.iter().enumerate().all(|(k, &(id, _))| id == k as u64) && (1..n).all(|k| pidx[k] < k);
        if ordered {
            return Ok(RealTree::from_parts(pidx, lens.iter().enumerate().map(|(k, &l)| if k == 0 { 0.0 } else { l }).collect(), cap, node_capped));
        }
        let mut order = vec![root];
        let mut newid = vec![NO_PARENT; n];
        newid[root] = 0;
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &c in &kids[v] {
                newid[c] = order.len();
                order.push(c);
            }
        }
        if order.len() != n {
            let bad = (0..n).find(|&k| newid[k] == NO_PARENT).unwrap();
            return Err(perr(ids[bad].1, "node not connected to the root (cycle or orphan)".into()));
        }
        let parent = order.iter().map(|&k| if k == root { NO_PARENT } else { newid[pidx[k]] }).collect();
        let length = order.iter().map(|&k| if k == root { 0.0 } else { lens[k] }).collect();
        Ok(RealTree::from_parts(parent, length, cap, node_capped))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    fn y() -> RealTree {
        RealTree::star(1.0, 2, 1.0)
    }

    #[test]
    fn basic_functionals() {
        let s = RealTree::path(3, 1.0);
        let fb = s.first_branch();
        assert_eq!((s.gamma(), fb.d, fb.kk), (3.0, 3.0, 0));
        let fb = y().first_branch();
        assert_eq!((y().gamma(), fb.d, fb.kk), (2.0, 1.0, 2));
        let two = RealTree::concat(&[RealTree::path(1, 1.0), RealTree::path(2, 1.0)]);
        let fb = two.first_branch();
        assert_eq!((two.n_root(), fb.d, fb.kk, fb.multi_tree), (2, 1.0, 0, true));
        let r = RealTree::root_only();
        assert_eq!((r.gamma(), r.first_branch().d, r.n_root()), (0.0, 0.0, 0));
    }

    #[test]
    fn below_and_above() {
        let s = RealTree::path(3, 1.0);
        assert!(s.below(1.5).approx_eq(&RealTree::path(1, 1.5), 1e-12));
        assert!(s.above(1.5).approx_eq(&RealTree::path(1, 1.5), 1e-12));
        let a = y().above(1.0);
        assert_eq!(a.n_root(), 2);
        assert!(a.approx_eq(&RealTree::concat(&[RealTree::path(1, 1.0), RealTree::path(1, 1.0)]), 1e-12));
        assert_eq!(y().above(5.0).node_count(), 1);
        assert_eq!(y().above(2.0).node_count(), 1);
    }

    #[test]
    fn erase_examples() {
        let s = RealTree::path(3, 1.0);
        assert!(s.erase(1.0, EraseMode::Contract).approx_eq(&RealTree::path(1, 2.0), 1e-12));
        assert_eq!(s.erase(1.0, EraseMode::KeepNodes).node_count(), 3);
        assert!(y().erase(1.0, EraseMode::Contract).approx_eq(&RealTree::path(1, 1.0), 1e-12));
        assert_eq!(y().erase(0.0, EraseMode::Contract), y());
        assert_eq!(y().erase(3.0, EraseMode::Contract).node_count(), 1);
    }

    #[test]
    fn concat_and_counts() {
        let c = RealTree::concat(&[RealTree::path(1, 1.0), RealTree::path(1, 1.0)]);
        assert_eq!((c.n_root(), c.gamma(), c.length_below(f64::INFINITY)), (2, 1.0, 2.0));
        let b = RealTree::star(1.0, 2, 1.0);
        assert_eq!(b.degree_counts_below(f64::INFINITY)[2], 1);
        assert_eq!(b.length_below(f64::INFINITY), 3.0);
        assert_eq!(b.population(1.5), 2);
        assert_eq!(b.population(1.0), 1);
        assert_eq!(b.length_below(0.5), 0.5);
    }

    #[test]
    fn text_round_trip_and_errors() {
        let t = RealTree::star(0.1, 3, 1.0 / 3.0).with_caps(Some(2.5), true);
        let back = RealTree::from_text(&t.to_text()).unwrap();
        assert_eq!(back, t);
        let shuffled = "TREE n=3 caps=none\n7 9 0.5\n9 - 0\n8 9 1.25\n";
        let u = RealTree::from_text(shuffled).unwrap();
        assert_eq!((u.n_root(), u.gamma()), (2, 1.25));
        assert!(matches!(RealTree::from_text("TREE n=2 caps=none\n0 - 0\n1 5 1\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(RealTree::from_text("TREE n=2 caps=none\n0 1 0\n1 0 1\n"), Err(Error::Parse { .. })));
        assert!(RealTree::from_text("TREE n=2 caps=none\n0 - 0\n1 0 -1\n").is_err());
    }

    pub(crate) fn random_tree(seed: u64, max_nodes: usize, unit: bool) -> RealTree {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = r.random_range(1..=max_nodes);
        let mut b = TreeBuilder::new();
        for v in 1..n {
            let p = r.random_range(0..v);
            let len = if unit { 1.0 } else { 0.05 + r.random::<f64>() * 2.0 };
            b.add_child(p, len);
        }
        b.build()
    }

    proptest! {
        #[test]
        fn erase_semigroup(seed in any::<u64>(), h1 in 0.0f64..2.0, h2 in 0.0f64..2.0) {
            let t = random_tree(seed, 30, false);
            let a = t.erase(h1, EraseMode::Contract).erase(h2, EraseMode::Contract);
            let b = t.erase(h1 + h2, EraseMode::Contract);
            prop_assert!(a.approx_eq(&b, 1e-9));
            prop_assert!((b.gamma() - (t.gamma() - h1 - h2).max(0.0)).abs() < 1e-9);
        }

        #[test]
        fn split_and_additivity(seed in any::<u64>(), a in 0.0f64..4.0) {
            let t = random_tree(seed, 30, false);
            let u = random_tree(seed ^ 1, 30, false);
            prop_assert!(t.below(a).gamma() <= a + 1e-12);
            if t.gamma() >= a {
                prop_assert!((t.gamma() - a - t.above(a).gamma()).abs() < 1e-9);
            }
            let c = RealTree::concat(&[t.clone(), u.clone()]);
            prop_assert!((c.length_below(a) - t.length_below(a) - u.length_below(a)).abs() < 1e-9);
            prop_assert_eq!(c.population(a + 0.1), t.population(a + 0.1) + u.population(a + 0.1));
            prop_assert!((t.below(a).total_length() - t.length_below(a)).abs() < 1e-9);
        }

        #[test]
        fn text_round_trip(seed in any::<u64>()) {
            let t = random_tree(seed, 40, false);
            prop_assert_eq!(RealTree::from_text(&t.to_text()).unwrap(), t);
        }
    }
}
