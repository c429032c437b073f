//! Exact-identity suites: every check compares a simulation against an
//! independently computed law, and carries a power companion.

use super::report::{bonferroni, SuiteReport, TestReport};
use super::stats::{chi2_categorical, ks_one};
use super::{replicate, replicate_from, try_replicate, ALPHA};
use crate::error::{Error, Result};
use crate::mechanism::{BundleSource, Mechanism, PruneLawBundle};
use crate::offspring::{erase_cont, erase_discrete, erased_prune_law_discrete, pruned_law, pruned_law_cont, size_biased_root, OffspringLaw, PruneTimeFamily, TimeLaw};
use crate::prune::{count_n, cut, mark_branchpoints, mark_edges, mark_h, mark_hbar, sample_hm};
use crate::realtree::{EraseMode, RealTree, TreeBuilder};
use crate::rng::{Rng, RngStream};
use crate::sampler::{gw_unit, kesten_unit, Caps, GwForest};
use crate::treemetric::{half_distortion, Budget};
use rand::Rng as _;
use rand_distr::{Distribution, Poisson};

const CENSORED: usize = usize::MAX;

fn exp_time(rate: f64, rng: &mut Rng) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// `(𝐤, Γ∧K)` with `𝐤` censored when the first branch point is not below `K`.
fn k_gamma_key(t: &RealTree, cap: f64) -> (usize, i64) {
    let fb = t.first_branch();
    let g = t.gamma().min(cap).round() as i64;
    if fb.d >= cap - 1e-9 {
        (CENSORED, g)
    } else {
        (fb.kk, g)
    }
}

fn capped_unit(xi: &OffspringLaw, cap: f64, rng: &mut Rng) -> Result<RealTree> {
    let caps = Caps { max_height: Some(cap), max_nodes: 10_000_000 };
    let t = gw_unit(xi, &OffspringLaw::dirac(1), &caps, rng)?;
    if t.node_capped() {
        return Err(Error::Budget("node cap reached".into()));
    }
    Ok(t)
}

/// Pruned GW(ξ) trees at time `θ` against direct GW(ξ^θ) trees: two-sample
/// chi-square on `(𝐤, Γ∧K)`. The power companion uses `ξ^{θ/2}`.
pub fn check_prune_marginal(xi: &OffspringLaw, fam: &PruneTimeFamily, theta: f64, samples: usize, seed: u64, cap: f64) -> Result<SuiteReport> {
    let direct_law = pruned_law(xi, fam, theta)?;
    let wrong_law = pruned_law(xi, fam, theta / 2.0)?;
    let pruned: Vec<(usize, i64)> = try_replicate(seed, 0x28a, samples, |r| {
        let t = capped_unit(xi, cap, r)?;
        let marks = mark_h(&t, fam, r)?;
        Ok(k_gamma_key(&cut(&t, &marks, theta), cap))
    })?;
    let direct: Vec<(usize, i64)> = try_replicate(seed, 0x28b, samples, |r| Ok(k_gamma_key(&capped_unit(&direct_law, cap, r)?, cap)))?;
    let wrong: Vec<(usize, i64)> = try_replicate(seed, 0x28c, samples, |r| Ok(k_gamma_key(&capped_unit(&wrong_law, cap, r)?, cap)))?;
    let name = format!("prune-marginal[{},theta={theta}]", xi.label());
    let mut s = SuiteReport::new(name.clone());
    let r = chi2_categorical(&pruned, &direct)?;
    s.tests.push(
        TestReport::p_value(&name, r.statistic, r.p_value, ALPHA)
            .with_sample_size(samples as u64)
            .with_seed(seed)
            .param("cells", r.cells)
            .param("df", r.df),
    );
    let w = chi2_categorical(&pruned, &wrong)?;
    s.power.push(TestReport::p_value(format!("{name}:theta/2"), w.statistic, w.p_value, ALPHA).with_sample_size(samples as u64).with_seed(seed));
    Ok(s)
}

/// `H_m((θ,∞]) = e^{−(m−1)θ} g^{(m)}(pe^{−θ}) / g^{(m)}(p)`: the first
/// pruning time of a vertex with `m` children on the erased tree.
pub fn erased_time_survival(xi: &OffspringLaw, p: f64, m: usize, theta: f64) -> f64 {
    if theta <= 0.0 {
        return 1.0;
    }
    if !theta.is_finite() {
        return erased_time_survival(xi, p, m, 1e300).min(1.0);
    }
    let d0 = xi.pgf_deriv(m, p).unwrap_or(f64::NAN);
    let d1 = xi.pgf_deriv(m, p * (-theta).exp()).unwrap_or(f64::NAN);
    (-(m as f64 - 1.0) * theta).exp() * d1 / d0
}

/// Branch-point pruning of GW(ξ) restricted to the `h`-erased tree: KS test
/// of the first pruning times at vertices with `m` surviving children
/// against the analytic `H_m`, for every `m` that occurs.
pub fn check_erased_prune_times(xi: &OffspringLaw, h: u64, samples: usize, seed: u64) -> Result<SuiteReport> {
    let hf = h as f64;
    let cap = hf + 9.0;
    let p = xi.height_cdf(h);
    let max_m = xi.max_index();
    let wanted: Vec<usize> = (1..=max_m).filter(|&m| xi.pgf_deriv(m, p).map(|d| d > 0.0).unwrap_or(false)).collect();
    let mut classes: Vec<Vec<f64>> = vec![Vec::new(); max_m + 1];
    let batch = 4096;
    let mut start = 0u64;
    let max_trees = 400 * samples as u64;
    while wanted.iter().any(|&m| classes[m].len() < samples) && start < max_trees {
        let out = replicate_from(seed, 0x4e5, start, batch, |r| -> Result<Vec<(usize, f64)>> {
            let t = capped_unit(xi, cap, r)?;
            let marks = mark_branchpoints(&t, r);
            let mut time = vec![f64::INFINITY; t.node_count()];
            for m in marks.marks() {
                time[m.node] = m.time;
            }
            let (e, map) = t.erase_with_map(hf, EraseMode::KeepNodes);
            let mut got = Vec::new();
            for v in 1..t.node_count() {
                if t.height(v) > cap - hf - 1.0 {
                    continue;
                }
                if let Some(w) = map[v] {
                    let m = e.num_children(w);
                    if m >= 1 {
                        got.push((m, time[v]));
                    }
                }
            }
            Ok(got)
        });
        for item in out {
            for (m, t) in item? {
                if m <= max_m && classes[m].len() < samples {
                    classes[m].push(t);
                }
            }
        }
        start += batch as u64;
    }
    let name = format!("erased-times[{},h={h}]", xi.label());
    let mut s = SuiteReport::new(name.clone());
    let testable: Vec<usize> = wanted.iter().copied().filter(|&m| erased_time_survival(xi, p, m, f64::INFINITY) < 1.0 - 1e-12).collect();
    let thr = bonferroni(ALPHA, testable.len());
    let mut power_p: f64 = 1.0;
    let mut power_d: f64 = 0.0;
    for &m in &testable {
        let xs = &classes[m];
        if xs.len() < samples {
            s.notes.push(format!("{name}: class m={m} reached only {} samples", xs.len()));
        }
        let r = ks_one(xs, |t| 1.0 - erased_time_survival(xi, p, m, t))?;
        s.tests.push(
            TestReport::p_value(format!("{name}:H{m}"), r.statistic, r.p_value, thr)
                .with_sample_size(xs.len() as u64)
                .with_seed(seed)
                .param("p", p),
        );
        let w = ks_one(xs, |t| 1.0 - erased_time_survival(xi, p, m, 1.2 * t))?;
        if w.p_value < power_p {
            power_p = w.p_value;
            power_d = w.statistic;
        }
    }
    if !testable.is_empty() {
        s.power.push(TestReport::p_value(format!("{name}:rate*1.2"), power_d, power_p, thr).with_seed(seed));
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub enum CountingRegime {
    /// No marks at all.
    Unmarked(OffspringLaw),
    /// `Exp(1)` per edge of a unit-edge GW tree.
    Edges(OffspringLaw),
    /// `Exp(m−1)` per vertex with `m ≥ 2` children of a unit-edge GW tree.
    BranchPoints(OffspringLaw),
    /// AD marks on the `h`-erased `(ψ; δ_x)` forest.
    Continuum { mech: Mechanism, h: f64, x: f64 },
}

impl CountingRegime {
    fn label(&self) -> String {
        match self {
            CountingRegime::Unmarked(xi) => format!("none,{}", xi.label()),
            CountingRegime::Edges(xi) => format!("edges,{}", xi.label()),
            CountingRegime::BranchPoints(xi) => format!("branch,{}", xi.label()),
            CountingRegime::Continuum { mech, h, .. } => format!("continuum,{},h={h}", mech.label),
        }
    }
}

/// The conditioning data of one sample: `L_a` and the branch points below `a`.
#[derive(Debug, Clone, PartialEq)]
struct Stratum {
    length: f64,
    /// `(i, V_{a,i})` for `i ≥ 2` with `V_{a,i} > 0`.
    branch: Vec<(usize, usize)>,
}

fn bucket(grid: &[f64], t: f64) -> Option<usize> {
    grid.iter().position(|&g| t <= g)
}

fn increments_from_times(grid: &[f64], times: impl Iterator<Item = f64>) -> Vec<usize> {
    let mut out = vec![0; grid.len()];
    for t in times {
        if let Some(j) = bucket(grid, t) {
            out[j] += 1;
        }
    }
    out
}

fn counts_to_increments(grid: &[f64], counts: &[usize]) -> Vec<usize> {
    let mut prev = 0;
    counts
        .iter()
        .map(|&c| {
            let d = c - prev;
            prev = c;
            d
        })
        .take(grid.len())
        .collect()
}

/// Draws increments of `N_{a,·}` over `grid` from the conditional law given
/// the stratum. `scale` stretches time (1 for the null).
fn conditional_increments(regime: &CountingRegime, bundle: Option<&PruneLawBundle>, st: &Stratum, grid: &[f64], scale: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    match regime {
        CountingRegime::Unmarked(_) => Ok(vec![0; grid.len()]),
        CountingRegime::Edges(_) => {
            let edges = st.length.round() as usize;
            Ok(increments_from_times(grid, (0..edges).map(|_| exp_time(1.0, rng) / scale).collect::<Vec<_>>().into_iter()))
        }
        CountingRegime::BranchPoints(_) => {
            let mut times = Vec::new();
            for &(i, v) in &st.branch {
                for _ in 0..v {
                    times.push(exp_time((i - 1) as f64, rng) / scale);
                }
            }
            Ok(increments_from_times(grid, times.into_iter()))
        }
        CountingRegime::Continuum { .. } => {
            let bundle = bundle.ok_or_else(|| Error::InvalidArgument("continuum regime needs its pruning bundle".into()))?;
            let mut out = vec![0; grid.len()];
            let mut prev = 0.0;
            for (j, &g) in grid.iter().enumerate() {
                let lam = st.length * (bundle.hbar1(g * scale) - bundle.hbar1(prev * scale));
                if lam > 0.0 {
                    out[j] += Poisson::new(lam).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng) as usize;
                }
                prev = g;
            }
            for &(i, v) in &st.branch {
                for _ in 0..v {
                    let t = sample_hm(bundle, i, rng) / scale;
                    if let Some(j) = bucket(grid, t) {
                        out[j] += 1;
                    }
                }
            }
            Ok(out)
        }
    }
}

fn stratum_of(t: &RealTree, a: f64) -> Stratum {
    let v = t.degree_counts_below(a);
    Stratum { length: t.length_below(a), branch: v.iter().enumerate().skip(2).filter(|(_, &c)| c > 0).map(|(i, &c)| (i, c)).collect() }
}

fn direct_sample(regime: &CountingRegime, prepared: Option<&(GwForest, PruneLawBundle)>, a: f64, grid: &[f64], rng: &mut Rng) -> Result<(Stratum, Vec<usize>)> {
    let horizon = *grid.last().unwrap();
    let (t, marks) = match regime {
        CountingRegime::Unmarked(xi) => {
            let t = capped_unit(xi, a.floor() + 1.0, rng)?;
            let m = crate::prune::MarkSet::new(Vec::new(), crate::prune::Regime::Edges, horizon);
            (t, m)
        }
        CountingRegime::Edges(xi) => {
            let t = capped_unit(xi, a.floor() + 1.0, rng)?;
            let m = mark_edges(&t, rng);
            (t, m)
        }
        CountingRegime::BranchPoints(xi) => {
            let t = capped_unit(xi, a.floor() + 1.0, rng)?;
            let m = mark_branchpoints(&t, rng);
            (t, m)
        }
        CountingRegime::Continuum { .. } => {
            let (forest, bundle) = prepared.ok_or_else(|| Error::InvalidArgument("continuum regime needs its erased law".into()))?;
            let t = forest.sample(&Caps { max_height: Some(a + 1.0), max_nodes: 10_000_000 }, rng)?;
            let m = mark_hbar(&t, bundle, horizon, rng)?;
            (t, m)
        }
    };
    let counts: Vec<usize> = grid.iter().map(|&g| count_n(&t, &marks, a, g)).collect();
    Ok((stratum_of(&t, a), counts_to_increments(grid, &counts)))
}

/// Stratified conditional test of the counting process `N_{a,θ}`: every
/// simulated forest is paired with a draw from the conditional law given its
/// own `(L_a, V_{a,i})`, and the increment vectors of the two samples are
/// compared by a two-sample chi-square test.
pub fn check_counting_law(regime: &CountingRegime, a: f64, grid: &[f64], samples: usize, seed: u64) -> Result<SuiteReport> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] <= 0.0 {
        return Err(Error::InvalidArgument("theta grid must be positive and increasing".into()));
    }
    let prepared = match regime {
        CountingRegime::Continuum { mech, h, x } => {
            let law = mech.erased_law(*h, *x)?;
            Some((GwForest::exp(&law.xi, law.c, &law.mu)?, mech.ad_prune_law(*h)?))
        }
        _ => None,
    };
    let bundle = prepared.as_ref().map(|p| &p.1);
    let direct = try_replicate(seed, 0x36a, samples, |r| direct_sample(regime, prepared.as_ref(), a, grid, r))?;
    let strata: Vec<&Stratum> = direct.iter().map(|d| &d.0).collect();
    let conditional = |tag: u32, scale: f64| -> Result<Vec<Vec<usize>>> {
        strata
            .iter()
            .enumerate()
            .map(|(i, st)| conditional_increments(regime, bundle, st, grid, scale, &mut RngStream::replicate(seed, tag, i as u64).rng()))
            .collect()
    };
    let null = conditional(0x36b, 1.0)?;
    let wrong = conditional(0x36c, 1.25)?;
    let observed: Vec<Vec<usize>> = direct.iter().map(|d| d.1.clone()).collect();
    let name = format!("counting[{},a={a}]", regime.label());
    let mut s = SuiteReport::new(name.clone());

    let mut keys: Vec<String> = strata.iter().map(|st| format!("{:.6}|{:?}", st.length, st.branch)).collect();
    keys.sort();
    let mut distinct = 0;
    let mut largest = 0;
    let mut i = 0;
    while i < keys.len() {
        let mut j = i;
        while j < keys.len() && keys[j] == keys[i] {
            j += 1;
        }
        distinct += 1;
        largest = largest.max(j - i);
        i = j;
    }
    s.notes.push(format!("{name}: {distinct} strata over {samples} samples, largest stratum {largest}"));

    let all_same = observed.iter().chain(null.iter()).all(|v| v == &observed[0]);
    let base = |t: TestReport| t.with_sample_size(samples as u64).with_seed(seed).param("strata", distinct);
    if all_same {
        s.tests.push(base(TestReport::p_value(&name, 0.0, 1.0, ALPHA)).note("all increments identical"));
        return Ok(s);
    }
    let r = chi2_categorical(&observed, &null)?;
    s.tests.push(base(TestReport::p_value(&name, r.statistic, r.p_value, ALPHA)).param("cells", r.cells));
    let w = chi2_categorical(&observed, &wrong)?;
    s.power.push(base(TestReport::p_value(format!("{name}:rate*1.25"), w.statistic, w.p_value, ALPHA)));
    Ok(s)
}

/// Summary of `Blw(T, S)` compared in the Kesten suite.
fn kesten_key(t: &RealTree, s: f64) -> (i64, usize, usize) {
    let b = t.below(s);
    let leaves = (1..b.node_count()).filter(|&v| b.is_leaf(v) && b.height(v) < s - 1e-9).count();
    (b.total_length().round() as i64, t.population(s), leaves)
}

/// Erasing a Kesten tree of ξ at height `h` against building the Kesten tree
/// of `ξ^h` directly, compared on `Blw(·, S)`.
pub fn check_kesten(xi: &OffspringLaw, h: u64, spine: u64, samples: usize, seed: u64) -> Result<SuiteReport> {
    let sf = spine as f64;
    let hf = h as f64;
    let (xih, _) = erase_discrete(xi, &OffspringLaw::dirac(1), h)?;
    let (xiw, _) = erase_discrete(xi, &OffspringLaw::dirac(1), h + 1)?;
    size_biased_root(&xih)?;
    let erased: Vec<(i64, usize, usize)> = try_replicate(seed, 0x71a, samples, |r| {
        let k = kesten_unit(xi, spine + h, &Caps::height(sf + hf), r)?;
        Ok(kesten_key(&k.tree.erase(hf, EraseMode::KeepNodes), sf))
    })?;
    let direct: Vec<(i64, usize, usize)> = try_replicate(seed, 0x71b, samples, |r| {
        let k = kesten_unit(&xih, spine, &Caps::height(sf), r)?;
        Ok(kesten_key(&k.tree, sf))
    })?;
    let wrong: Vec<(i64, usize, usize)> = try_replicate(seed, 0x71c, samples, |r| {
        let k = kesten_unit(&xiw, spine, &Caps::height(sf), r)?;
        Ok(kesten_key(&k.tree, sf))
    })?;
    let name = format!("kesten[{},h={h},S={spine}]", xi.label());
    let mut s = SuiteReport::new(name.clone());
    let thr = bonferroni(ALPHA, 3);
    let mut worst_power: Option<TestReport> = None;
    for (label, f) in [
        ("length", (|k: &(i64, usize, usize)| k.0) as fn(&(i64, usize, usize)) -> i64),
        ("population", |k| k.1 as i64),
        ("leaves", |k| k.2 as i64),
    ] {
        let a: Vec<i64> = erased.iter().map(f).collect();
        let b: Vec<i64> = direct.iter().map(f).collect();
        let c: Vec<i64> = wrong.iter().map(f).collect();
        let r = chi2_categorical(&a, &b)?;
        s.tests.push(TestReport::p_value(format!("{name}:{label}"), r.statistic, r.p_value, thr).with_sample_size(samples as u64).with_seed(seed).param("cells", r.cells));
        let w = chi2_categorical(&a, &c)?;
        let t = TestReport::p_value(format!("{name}:h+1"), w.statistic, w.p_value, thr).with_sample_size(samples as u64).with_seed(seed);
        if worst_power.as_ref().is_none_or(|x| t.value() < x.value()) {
            worst_power = Some(t);
        }
    }
    s.power.extend(worst_power);
    Ok(s)
}

/// Every spine vertex of a Kesten tree of the binary law below the top
/// carries exactly one grafted tree.
pub fn kesten_graft_counts(samples: usize, spine: u64, seed: u64) -> Result<TestReport> {
    let xi = OffspringLaw::binary();
    let worst: Vec<usize> = try_replicate(seed, 0x71d, samples, |r| {
        let k = kesten_unit(&xi, spine, &Caps::height(spine as f64), r)?;
        let mut dev = 0usize;
        for (i, &v) in k.spine.iter().enumerate() {
            if i + 1 < k.spine.len() {
                let grafted = k.tree.num_children(v) - 1;
                dev = dev.max(grafted.abs_diff(1));
            }
        }
        Ok(dev)
    })?;
    let max = worst.into_iter().max().unwrap_or(0) as f64;
    Ok(TestReport::abs_error("kesten-grafts[binary]", max, max, 0.0).with_sample_size(samples as u64).with_seed(seed))
}

fn random_law(rng: &mut Rng) -> Result<OffspringLaw> {
    let k = rng.random_range(2..=6);
    let mut m: Vec<f64> = (0..=k).map(|_| rng.random::<f64>() + 0.01).collect();
    let t: f64 = m.iter().sum();
    m.iter_mut().for_each(|x| *x /= t);
    OffspringLaw::new(m, "random")
}

/// Random tree with at most `max_nodes` nodes and edge lengths in `[lo, lo + span)`.
pub fn random_tree(rng: &mut Rng, max_nodes: usize, lo: f64, span: f64) -> RealTree {
    let n = rng.random_range(1..=max_nodes);
    let mut b = TreeBuilder::with_capacity(n);
    for v in 1..n {
        let p = rng.random_range(0..v);
        b.add_child(p, lo + rng.random::<f64>() * span);
    }
    b.build()
}

fn max_diff(a: &OffspringLaw, b: &OffspringLaw) -> f64 {
    let n = a.masses().len().max(b.masses().len());
    (0..n).map(|k| (a.p(k) - b.p(k)).abs()).fold(0.0, f64::max)
}

/// Normalization and semigroup properties of the law transforms on random
/// laws, and the erasure semigroup on random trees.
pub fn transform_properties(seed: u64, laws: usize, trees: usize) -> Result<SuiteReport> {
    let tol = 1e-9;
    struct LawChecks {
        norm: f64,
        erase: f64,
        erase_wrong: f64,
        prune: f64,
    }
    let checks: Vec<LawChecks> = try_replicate(seed, 0x6a0, laws, |r| {
        let xi = random_law(r)?;
        let mu = random_law(r)?;
        let h1 = r.random_range(1..=3u64);
        let h2 = r.random_range(1..=3u64);
        let mut norm: f64 = 0.0;
        let mut note = |l: &OffspringLaw| norm = norm.max((l.total() - 1.0).abs());

        let (a1, m1) = erase_discrete(&xi, &mu, h1)?;
        let (a12, m12) = erase_discrete(&a1, &m1, h2)?;
        let (b, mb) = erase_discrete(&xi, &mu, h1 + h2)?;
        let (bw, _) = erase_discrete(&xi, &mu, h1 + h2 + 1)?;
        for l in [&a1, &m1, &a12, &m12, &b, &mb] {
            note(l);
        }
        let erase = max_diff(&a12, &b).max(max_diff(&m12, &mb));
        let erase_wrong = max_diff(&a12, &bw);

        let rates: Vec<TimeLaw> = (0..xi.max_index()).map(|_| TimeLaw::Exponential(0.2 + 2.0 * r.random::<f64>())).collect();
        let fam = PruneTimeFamily::Explicit(rates);
        let (t1, t2) = (r.random::<f64>() * 2.0, r.random::<f64>() * 2.0);
        let p1 = pruned_law(&xi, &fam, t1)?;
        let p12 = pruned_law(&p1, &fam.post_shift(t1)?, t2)?;
        let p = pruned_law(&xi, &fam, t1 + t2)?;
        for l in [&p1, &p12, &p] {
            note(l);
        }
        let prune = max_diff(&p12, &p);
        for f in [PruneTimeFamily::BranchPoint, PruneTimeFamily::EqualRate(1.0)] {
            note(&pruned_law(&xi, &f, t1)?);
        }
        note(&erased_prune_law_discrete(&xi, h1, t1)?.1);

        let mut cm = xi.masses().to_vec();
        cm[1] = 0.0;
        let cxi = OffspringLaw::new(cm.iter().map(|x| x / cm.iter().sum::<f64>()).collect(), "random-c")?;
        let c = 0.5 + r.random::<f64>();
        let pc = cxi.height_cdf_cont(c, 0.5)?;
        if let Ok((ex, ec, emu)) = erase_cont(&cxi, c, &mu, pc) {
            note(&ex);
            note(&emu);
            let bundle = PruneLawBundle::aldous_pitman(BundleSource::Edge);
            note(&pruned_law_cont(&ex, ec, &bundle, t1)?.0);
        }
        Ok(LawChecks { norm, erase, erase_wrong, prune })
    })?;
    let fold = |f: fn(&LawChecks) -> f64| checks.iter().map(f).fold(0.0, f64::max);
    let mut s = SuiteReport::new("transforms");
    let lawn = laws as u64;
    s.tests.push(TestReport::abs_error("transforms:normalized", 0.0, fold(|c| c.norm), tol).with_sample_size(lawn).with_seed(seed));
    s.tests.push(TestReport::abs_error("transforms:erase-semigroup", 0.0, fold(|c| c.erase), tol).with_sample_size(lawn).with_seed(seed));
    s.tests.push(TestReport::abs_error("transforms:prune-semigroup", 0.0, fold(|c| c.prune), tol).with_sample_size(lawn).with_seed(seed));
    let min_wrong = checks.iter().map(|c| c.erase_wrong).fold(f64::INFINITY, f64::min);
    s.power.push(TestReport::abs_error("transforms:erase-semigroup:h+1", 0.0, min_wrong, tol).with_sample_size(lawn).with_seed(seed));

    let tree_checks: Vec<(bool, f64)> = replicate(seed, 0x6a1, trees, |r| {
        let t = random_tree(r, 40, 0.05, 2.0);
        let h1 = r.random::<f64>() * 2.0;
        let h2 = r.random::<f64>() * 2.0;
        let a = t.erase(h1, EraseMode::Contract).erase(h2, EraseMode::Contract);
        let b = t.erase(h1 + h2, EraseMode::Contract);
        let w = t.erase(h1 + h2 + 0.1, EraseMode::Contract);
        (a.approx_eq(&b, 1e-9), (a.gamma() - w.gamma()).abs())
    });
    let mismatches = tree_checks.iter().filter(|c| !c.0).count();
    s.tests.push(TestReport::abs_error("transforms:tree-erase-semigroup", mismatches as f64, mismatches as f64, 0.0).with_sample_size(trees as u64).with_seed(seed));
    let wrong = tree_checks.iter().map(|c| c.1).fold(0.0, f64::max);
    s.power.push(TestReport::abs_error("transforms:tree-erase-semigroup:+0.1", wrong, wrong, tol).with_sample_size(trees as u64).with_seed(seed));
    Ok(s)
}

fn small_tree(rng: &mut Rng) -> RealTree {
    random_tree(rng, 6, 0.03, 1.2).contract()
}

/// Exact values, symmetry, the triangle inequality and the erasure bound of
/// [`half_distortion`].
pub fn metric_properties(seed: u64, count: usize) -> Result<SuiteReport> {
    let budget = Budget::default();
    let mut s = SuiteReport::new("metric");
    let y = RealTree::star(1.0, 2, 1.0);
    let seg1 = RealTree::path(1, 1.0);
    let seg2 = RealTree::path(1, 2.0);
    for (label, a, b, want) in [("identity", &y, &y, 0.0), ("segments", &seg1, &seg2, 0.5), ("y-vs-segment", &y, &seg2, 0.5)] {
        let r = crate::treemetric::half_distortion_exact(a, b, &budget)?;
        s.tests.push(TestReport::abs_error(format!("metric:{label}"), r.value, (r.value - want).abs(), 1e-12).param("expected", want));
    }

    let tri: Vec<(f64, f64, bool)> = replicate(seed, 0x7e1, count, |r| {
        let (x, yy, z) = (small_tree(r), small_tree(r), small_tree(r));
        let xy = half_distortion(&x, &yy, &budget);
        let yz = half_distortion(&yy, &z, &budget);
        let xz = half_distortion(&x, &z, &budget);
        let yx = half_distortion(&yy, &x, &budget);
        let exact = xy.is_exact() && yz.is_exact() && xz.is_exact() && yx.is_exact();
        let excess = if exact { xz.value - xy.value - yz.value } else { xz.lower() - xy.upper() - yz.upper() };
        (excess.max(0.0), (xy.value - yx.value).abs(), exact)
    });
    let exact = tri.iter().filter(|t| t.2).count();
    let excess = tri.iter().map(|t| t.0).fold(0.0, f64::max);
    let asym = tri.iter().map(|t| t.1).fold(0.0, f64::max);
    s.tests.push(TestReport::abs_error("metric:triangle", excess, excess, 1e-9).with_sample_size(count as u64).with_seed(seed).param("exact", exact));
    s.tests.push(TestReport::abs_error("metric:symmetry", asym, asym, 1e-12).with_sample_size(count as u64).with_seed(seed));

    let er: Vec<(f64, f64, bool)> = replicate(seed, 0x7e2, count, |r| {
        let t = small_tree(r);
        let h = 0.01 + 1.5 * r.random::<f64>();
        let e = t.erase(h, EraseMode::KeepNodes);
        let d = half_distortion(&e, &t, &budget);
        ((d.lower() - h).max(0.0), (d.lower() - h / 4.0).max(0.0), d.is_exact())
    });
    let exact_e = er.iter().filter(|t| t.2).count();
    let over = er.iter().map(|t| t.0).fold(0.0, f64::max);
    s.tests.push(TestReport::abs_error("metric:erasure-bound", over, over, 1e-9).with_sample_size(count as u64).with_seed(seed).param("exact", exact_e));
    let over_w = er.iter().map(|t| t.1).fold(0.0, f64::max);
    s.power.push(TestReport::abs_error("metric:erasure-bound:h/4", over_w, over_w, 1e-9).with_sample_size(count as u64).with_seed(seed));
    Ok(s)
}

pub fn default_prune_marginal(seed: u64) -> Result<SuiteReport> {
    let xi = OffspringLaw::binary();
    let mut s = SuiteReport::new("prune-marginal");
    for theta in [std::f64::consts::LN_2, 1.0] {
        s.extend(check_prune_marginal(&xi, &PruneTimeFamily::BranchPoint, theta, 100_000, seed, 10.0)?);
    }
    Ok(s)
}

/// `ξ(0) = 2/3`, `ξ(3) = 1/3`.
pub fn ternary() -> OffspringLaw {
    OffspringLaw::from_pairs(&[(0, 2.0 / 3.0), (3, 1.0 / 3.0)], "ternary").expect("ternary law")
}

pub fn default_erased_prune_times(seed: u64) -> Result<SuiteReport> {
    let mut s = SuiteReport::new("erased-times");
    s.extend(check_erased_prune_times(&OffspringLaw::binary(), 1, 10_000, seed)?);
    s.extend(check_erased_prune_times(&ternary(), 1, 10_000, seed)?);
    Ok(s)
}

pub fn default_counting(seed: u64) -> Result<SuiteReport> {
    let grid = [0.25, 0.5, 1.0];
    let mut s = SuiteReport::new("counting");
    let edge_law = OffspringLaw::new(vec![0.4, 0.3, 0.2, 0.1], "0.4,0.3,0.2,0.1")?;
    s.extend(check_counting_law(&CountingRegime::Edges(edge_law), 3.0, &grid, 10_000, seed)?);
    let branch_law = OffspringLaw::new(vec![0.5, 0.2, 0.1, 0.2], "0.5,0.2,0.1,0.2")?;
    s.extend(check_counting_law(&CountingRegime::BranchPoints(branch_law), 3.0, &grid, 10_000, seed)?);
    Ok(s)
}

pub fn default_kesten(seed: u64) -> Result<SuiteReport> {
    let mut s = check_kesten(&OffspringLaw::binary(), 1, 5, 10_000, seed)?;
    s.name = "kesten".into();
    s.tests.push(kesten_graft_counts(1_000, 10, seed)?);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erased_survival_edges() {
        let t = ternary();
        let p = t.height_cdf(1);
        for m in 1..=3 {
            assert_eq!(erased_time_survival(&t, p, m, 0.0), 1.0);
            let a = erased_time_survival(&t, p, m, 0.5);
            let b = erased_time_survival(&t, p, m, 1.0);
            assert!(a > b && b >= 0.0);
        }
        // g''' is constant for the ternary law, so H3 is Exp(2) exactly
        assert!((erased_time_survival(&t, p, 3, 0.8) - (-1.6f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn random_trees_respect_bounds() {
        let mut r = RngStream::new(1, 2).rng();
        for _ in 0..200 {
            let t = random_tree(&mut r, 6, 0.03, 1.2);
            assert!(t.node_count() <= 6);
            assert!((1..t.node_count()).all(|v| t.length(v) >= 0.03 && t.length(v) < 1.23));
        }
    }

    #[test]
    fn unmarked_counting_is_trivial() {
        let s = check_counting_law(&CountingRegime::Unmarked(OffspringLaw::binary()), 2.0, &[0.5, 1.0], 200, 3).unwrap();
        assert!(s.passed());
        assert_eq!(s.tests[0].value(), 1.0);
    }

    #[test]
    fn counting_rejects_bad_grids() {
        let r = CountingRegime::Edges(OffspringLaw::binary());
        assert!(check_counting_law(&r, 2.0, &[], 10, 1).is_err());
        assert!(check_counting_law(&r, 2.0, &[1.0, 0.5], 10, 1).is_err());
    }

    #[test]
    fn continuum_counting_small() {
        let regime = CountingRegime::Continuum { mech: Mechanism::stable(1.5, 1.0).unwrap(), h: 1.0, x: 1.0 };
        let s = check_counting_law(&regime, 1.0, &[0.25, 0.5, 1.0], 2000, 11).unwrap();
        assert!(s.tests[0].passed(), "{}", s.records(false));
    }

    #[test]
    fn graft_counts_exact() {
        let t = kesten_graft_counts(50, 6, 9).unwrap();
        assert!(t.passed());
        assert_eq!(t.statistic, 0.0);
    }

    #[test]
    fn small_prune_marginal() {
        let s = check_prune_marginal(&OffspringLaw::binary(), &PruneTimeFamily::BranchPoint, 1.0, 5000, 5, 10.0).unwrap();
        assert!(s.tests[0].passed(), "{}", s.records(false));
    }
}
