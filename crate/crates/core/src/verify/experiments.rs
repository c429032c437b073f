//! Limit experiments: height and ascension-time limits, generating-function
//! limits, and one-dimensional marginals of scaled pruning processes.

use super::report::{bonferroni, SuiteReport, TestReport};
use super::stats::{binomial_z, chi2_categorical, ks_two};
use super::{try_replicate, ALPHA};
use crate::error::{invalid, Error, Result};
use crate::mechanism::{BundleSource, Mechanism, PruneLawBundle};
use crate::offspring::{branch_prune_law_at, erase_discrete, erased_family, pruned_law_cont, OffspringLaw, PruneTimeFamily};
use crate::prune::{cut, mark_edges, mark_h, mark_hbar};
use crate::realtree::RealTree;
use crate::rng::Rng;
use crate::sampler::{gw_exp, Caps, GwForest};
use rand_distr::{Binomial, Distribution};

/// Tolerance of the deterministic limit checks.
pub const LIMIT_TOL: f64 = 0.01;

fn floor_u64(x: f64) -> u64 {
    x.floor().max(0.0) as u64
}

/// `w_n(⌊γ_n h⌋)^{⌊nx⌋}` for the domain family at `n`.
pub fn discrete_height_probability(mech: &Mechanism, n: u64, h: f64, x: f64) -> Result<f64> {
    let (xi, gamma) = mech.domain_family(n)?;
    let w = xi.height_cdf(floor_u64(gamma * h));
    Ok(w.powf(floor_u64(n as f64 * x) as f64))
}

/// Compares `w_n(⌊γ_n h⌋)^{⌊nx⌋}` with `e^{−xη(h)}`; the error is the maximum
/// over the upper half of `n_grid`.
pub fn experiment_height(mech: &Mechanism, n_grid: &[u64], h: f64, x: f64) -> Result<SuiteReport> {
    if n_grid.is_empty() {
        return invalid("empty n grid");
    }
    let target = (-x * mech.eta(h)?).exp();
    let wrong = (-x * mech.eta(2.0 * h)?).exp();
    let values: Vec<f64> = n_grid.iter().map(|&n| discrete_height_probability(mech, n, h, x)).collect::<Result<_>>()?;
    let tail = &values[n_grid.len() / 2..];
    let err = tail.iter().map(|v| (v - target).abs()).fold(0.0, f64::max);
    let werr = tail.iter().map(|v| (v - wrong).abs()).fold(0.0, f64::max);
    let last = *values.last().unwrap();
    let n = *n_grid.last().unwrap();
    let name = format!("height[{}]", mech.label);
    let mut s = SuiteReport::new(name.clone());
    let mut t = TestReport::abs_error(&name, last, err, LIMIT_TOL).with_n(n).param("h", h).param("x", x).param("target", target);
    for (n, v) in n_grid.iter().zip(&values) {
        t = t.note(format!("n={n} value={v}"));
    }
    s.tests.push(t);
    s.power.push(TestReport::abs_error(format!("{name}:eta(2h)"), last, werr, LIMIT_TOL).with_n(n).param("target", wrong));
    Ok(s)
}

/// `ξ_n` pruned at branch points up to time `θ/n`, extended to `θ < 0`.
pub fn ascension_law(mech: &Mechanism, n: u64, theta: f64) -> Result<OffspringLaw> {
    let (xi, _) = mech.domain_family(n)?;
    Ok(branch_prune_law_at(&xi, 0.0, theta / n as f64)?.1)
}

/// Whether a GW(ξ) population started from `z0` individuals dies out.
/// Populations above `cap` are resolved with the extinction probability `q^Z`.
fn population_dies<R: rand::Rng + ?Sized>(support: &[(usize, f64)], q: f64, z0: u64, cap: u64, max_gen: u64, rng: &mut R) -> Result<bool> {
    let mut z = z0;
    for _ in 0..max_gen {
        if z == 0 {
            return Ok(true);
        }
        if z >= cap {
            break;
        }
        let mut left = z;
        let mut rest = 1.0;
        let mut next = 0u64;
        for &(k, p) in support {
            if left == 0 {
                break;
            }
            let c = if p >= rest {
                left
            } else {
                Binomial::new(left, (p / rest).clamp(0.0, 1.0)).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng)
            };
            next += c * k as u64;
            left -= c;
            rest -= p;
        }
        z = next;
    }
    if z == 0 {
        return Ok(true);
    }
    let u: f64 = rand::Rng::random(rng);
    Ok(u < q.powf(z as f64))
}

/// Ascension-time limit: `q_{ξ_n^θ}^{⌊nx⌋}` against `e^{−x q₀(θ)}` on
/// `n_grid`, and, when `mc = Some((N, seed))`, a Monte Carlo estimate of the
/// probability that the forest at time `θ` is finite at the largest `n`.
pub fn experiment_ascension(mech: &Mechanism, n_grid: &[u64], theta: f64, x: f64, mc: Option<(usize, u64)>) -> Result<SuiteReport> {
    if !(theta < 0.0) {
        return invalid("ascension needs theta < 0");
    }
    if n_grid.is_empty() {
        return invalid("empty n grid");
    }
    let target = (-x * mech.q0(theta)?).exp();
    let name = format!("ascension[{}]", mech.label);
    let mut s = SuiteReport::new(name.clone());
    let mut values = Vec::new();
    for &n in n_grid {
        let q = ascension_law(mech, n, theta)?.extinction();
        values.push(q.powf(floor_u64(n as f64 * x) as f64));
    }
    let err = values[n_grid.len() / 2..].iter().map(|v| (v - target).abs()).fold(0.0, f64::max);
    let n = *n_grid.last().unwrap();
    let last = *values.last().unwrap();
    s.tests.push(TestReport::abs_error(&name, last, err, LIMIT_TOL).with_n(n).param("theta", theta).param("x", x).param("target", target));
    let wrong = (-x * mech.q0(theta / 2.0)?).exp();
    s.power.push(TestReport::abs_error(format!("{name}:theta/2"), last, (last - wrong).abs(), LIMIT_TOL).with_n(n));

    if let Some((count, seed)) = mc {
        let law = ascension_law(mech, n, theta)?;
        let support: Vec<(usize, f64)> = law.masses().iter().copied().enumerate().filter(|(_, p)| *p > 0.0).collect();
        if support.len() > 64 {
            return invalid("Monte Carlo ascension needs an offspring law with small support");
        }
        let q = law.extinction();
        let z0 = floor_u64(n as f64 * x);
        let cap = 10 * z0.max(100);
        let dies = try_replicate(seed, 0xa5c, count, |rng| population_dies(&support, q, z0, cap, 1_000_000, rng))?;
        let k = dies.iter().filter(|&&d| d).count() as u64;
        let z = binomial_z(k, count as u64, last);
        let frac = k as f64 / count as f64;
        s.tests.push(
            TestReport::abs_error(format!("{name}:monte-carlo"), frac, z.abs(), 3.0)
                .with_n(n)
                .with_sample_size(count as u64)
                .with_seed(seed)
                .param("expected", last),
        );
        let zw = binomial_z(k, count as u64, wrong);
        s.power.push(TestReport::abs_error(format!("{name}:monte-carlo:theta/2"), frac, zw.abs(), 3.0).with_sample_size(count as u64).with_seed(seed));
    }
    Ok(s)
}

/// Generating-function limits at `n`: `nγ_n(g(e^{−r/n}) − e^{−r/n}) → ψ(r)`,
/// `γ_n(1 − g′(e^{−r/n})) → ψ′(r)`, `γ_n n^{1−m} g^{(m)}(e^{−r/n}) → (−1)^m ψ^{(m)}(r)`
/// and `−n log q_{ξ_n} → q₀`. The derivative items also run at `derivative_r`.
pub fn limit_checks(mech: &Mechanism, n: u64, r_values: &[f64], orders: &[usize], derivative_r: &[f64], tol: f64) -> Result<SuiteReport> {
    let (xi, gamma) = mech.domain_family(n)?;
    let nf = n as f64;
    let name = format!("limits[{}]", mech.label);
    let mut s = SuiteReport::new(name.clone());
    let q0 = mech.q0(0.0)?;
    for &r in r_values {
        let sarg = (-r / nf).exp();
        let lhs = nf * gamma * (xi.pgf(sarg)? - sarg);
        let rhs = mech.psi_eval(r)?;
        s.tests.push(TestReport::abs_error(format!("{name}:i:r={r}"), lhs, (lhs - rhs).abs(), tol).with_n(n).param("limit", rhs));
        if r > q0 {
            let lhs = gamma * (1.0 - xi.pgf_deriv(1, sarg)?);
            let rhs = mech.psi_deriv(1, r)?;
            s.tests.push(TestReport::abs_error(format!("{name}:ii:r={r}"), lhs, (lhs - rhs).abs(), tol).with_n(n).param("limit", rhs));
        }
    }
    let mut rs: Vec<f64> = r_values.iter().chain(derivative_r).copied().filter(|&r| r > q0).collect();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    for r in rs {
        let sarg = (-r / nf).exp();
        for &m in orders {
            let lhs = gamma / nf.powi(m as i32 - 1) * xi.pgf_deriv(m, sarg)?;
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let rhs = sign * mech.psi_deriv(m as u32, r)?;
            s.tests.push(TestReport::abs_error(format!("{name}:iii:m={m}:r={r}"), lhs, (lhs - rhs).abs(), tol).with_n(n).param("limit", rhs));
        }
    }
    let q = xi.extinction();
    let lhs = -nf * q.ln();
    s.tests.push(TestReport::abs_error(format!("{name}:iv"), lhs, (lhs - q0).abs(), tol).with_n(n).param("limit", q0));
    let r = r_values.first().copied().unwrap_or(1.0);
    let sarg = (-r / nf).exp();
    let lhs = nf * gamma * (xi.pgf(sarg)? - sarg);
    let wrong = mech.psi_eval(1.1 * r)?;
    s.power.push(TestReport::abs_error(format!("{name}:i:psi(1.1r)"), lhs, (lhs - wrong).abs(), tol).with_n(n));
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginalRegime {
    /// Branch-point pruning, time scale `θ/n`; limit: AD marks.
    Branch,
    /// Edge pruning, time scale `θ/γ_n`; limit: Aldous-Pitman.
    Edge,
    /// `Exp(1)` at every vertex with a child, time scale `θ/γ_n`; limit: Aldous-Pitman.
    EqualRate,
}

impl MarginalRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            MarginalRegime::Branch => "branch",
            MarginalRegime::Edge => "edge",
            MarginalRegime::EqualRate => "equal-rate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [MarginalRegime::Branch, MarginalRegime::Edge, MarginalRegime::EqualRate].into_iter().find(|r| r.as_str() == s)
    }
}

/// Parameters of [`experiment_marginal_convergence`].
#[derive(Debug, Clone)]
pub struct MarginalConfig {
    pub n: u64,
    pub h: f64,
    pub x: f64,
    pub theta: f64,
    pub regime: MarginalRegime,
    pub replicates: usize,
    pub seed: u64,
    /// Height (in limit units) at which both sides are truncated.
    pub height_cap: f64,
    /// Level of the length functional `L(a)`.
    pub level: f64,
}

impl MarginalConfig {
    pub fn new(n: u64, regime: MarginalRegime, replicates: usize, seed: u64) -> Self {
        MarginalConfig { n, h: 1.0, x: 1.0, theta: 1.0, regime, replicates, seed, height_cap: 3.0, level: 1.0 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Marginal {
    n_root: usize,
    gamma: f64,
    length: f64,
    d: f64,
}

fn marginal_of(t: &RealTree, cap: f64, level: f64) -> Marginal {
    // scaled unit edges accumulate rounding, so the cap atom needs a tolerance
    let clamp = |v: f64| if v >= cap - 1e-9 { cap } else { v };
    let fb = t.first_branch();
    Marginal { n_root: t.n_root(), gamma: clamp(t.gamma()), length: t.length_below(level), d: clamp(fb.d) }
}

/// Sampler for the scaled, erased, pruned discrete forest at one time.
pub struct DiscreteSide {
    forest: GwForest,
    family: Option<PruneTimeFamily>,
    gamma: f64,
    cut_time: f64,
    cap_units: f64,
}

impl DiscreteSide {
    pub fn new(mech: &Mechanism, cfg: &MarginalConfig) -> Result<Self> {
        let (xi, gamma) = mech.domain_family(cfg.n)?;
        let big_h = floor_u64(cfg.h * gamma);
        let mu = OffspringLaw::dirac(floor_u64(cfg.n as f64 * cfg.x) as usize);
        let (xi_h, mu_h) = erase_discrete(&xi, &mu, big_h)?;
        let p = xi.height_cdf(big_h);
        let nf = cfg.n as f64;
        let (family, cut_time) = match cfg.regime {
            MarginalRegime::Branch => (Some(erased_family(&xi, p, &PruneTimeFamily::BranchPoint, xi.max_index().max(1))?), cfg.theta / nf),
            MarginalRegime::EqualRate => (Some(erased_family(&xi, p, &PruneTimeFamily::EqualRate(1.0), xi.max_index().max(1))?), cfg.theta / gamma),
            MarginalRegime::Edge => (None, cfg.theta / gamma),
        };
        Ok(DiscreteSide { forest: GwForest::unit(&xi_h, &mu_h)?, family, gamma, cut_time, cap_units: (cfg.height_cap * gamma).ceil() })
    }

    /// One scaled pruned forest.
    pub fn sample(&self, rng: &mut Rng) -> Result<RealTree> {
        let caps = Caps { max_height: Some(self.cap_units), max_nodes: 50_000_000 };
        let t = self.forest.sample(&caps, rng)?;
        if t.node_capped() {
            return Err(Error::Budget("node cap reached in the discrete forest".into()));
        }
        let marks = match &self.family {
            Some(f) => mark_h(&t, f, rng)?,
            None => mark_edges(&t, rng),
        };
        Ok(cut(&t, &marks, self.cut_time).scaled(1.0 / self.gamma))
    }
}

/// Sampler for the limit law: a GW real forest with the pruned erased law.
pub struct LimitSide {
    forest: GwForest,
    cap: f64,
}

impl LimitSide {
    pub fn new(mech: &Mechanism, cfg: &MarginalConfig, theta: f64) -> Result<Self> {
        let erased = mech.erased_law(cfg.h, cfg.x)?;
        let bundle = limit_bundle(mech, cfg.h, cfg.regime)?;
        let (xi, c) = pruned_law_cont(&erased.xi, erased.c, &bundle, theta)?;
        Ok(LimitSide { forest: GwForest::exp(&xi, c, &erased.mu)?, cap: cfg.height_cap })
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<RealTree> {
        self.forest.sample(&Caps::height(self.cap), rng)
    }
}

pub fn limit_bundle(mech: &Mechanism, h: f64, regime: MarginalRegime) -> Result<PruneLawBundle> {
    Ok(match regime {
        MarginalRegime::Branch => mech.ad_prune_law(h)?,
        MarginalRegime::Edge => PruneLawBundle::aldous_pitman(BundleSource::Edge),
        MarginalRegime::EqualRate => PruneLawBundle::aldous_pitman(BundleSource::EqualRate),
    })
}

/// Simulates the limit side by marking the erased Lévy tree directly (rather
/// than sampling the pruned law), for cross-checking [`LimitSide`].
pub fn limit_by_marking(mech: &Mechanism, cfg: &MarginalConfig, rng: &mut Rng) -> Result<RealTree> {
    let erased = mech.erased_law(cfg.h, cfg.x)?;
    let bundle = limit_bundle(mech, cfg.h, cfg.regime)?;
    let t = gw_exp(&erased.xi, erased.c, &erased.mu, &Caps::height(cfg.height_cap), rng)?;
    if cfg.theta == 0.0 {
        return Ok(t);
    }
    let marks = mark_hbar(&t, &bundle, cfg.theta, rng)?;
    Ok(cut(&t, &marks, cfg.theta))
}

fn compare(name: &str, a: &[Marginal], b: &[Marginal], level: f64) -> Result<Vec<TestReport>> {
    let thr = bonferroni(ALPHA, 4);
    let col = |v: &[Marginal], f: fn(&Marginal) -> f64| v.iter().map(f).collect::<Vec<f64>>();
    let mut out = Vec::new();
    let roots_a: Vec<usize> = a.iter().map(|m| m.n_root).collect();
    let roots_b: Vec<usize> = b.iter().map(|m| m.n_root).collect();
    let r = chi2_categorical(&roots_a, &roots_b)?;
    out.push(TestReport::p_value(format!("{name}:n_root"), r.statistic, r.p_value, thr).param("cells", r.cells));
    for (label, f) in [("gamma", (|m: &Marginal| m.gamma) as fn(&Marginal) -> f64), ("length", |m: &Marginal| m.length), ("first_branch", |m: &Marginal| m.d)] {
        let r = ks_two(&col(a, f), &col(b, f))?;
        let mut t = TestReport::p_value(format!("{name}:{label}"), r.statistic, r.p_value, thr);
        if label == "length" {
            t = t.param("level", level);
        }
        out.push(t);
    }
    Ok(out)
}

/// One-dimensional marginal of the scaled erased pruned discrete forest
/// against the limit law, by two-sample tests on `n_root`, `Γ∧K`, `L(a)` and
/// `D∧K`.
pub fn experiment_marginal_convergence(mech: &Mechanism, cfg: &MarginalConfig) -> Result<SuiteReport> {
    let disc = DiscreteSide::new(mech, cfg)?;
    let lim = LimitSide::new(mech, cfg, cfg.theta)?;
    let wrong = LimitSide::new(mech, cfg, 2.0 * cfg.theta.max(0.5))?;
    let cap = cfg.height_cap;
    let lvl = cfg.level;
    let a: Vec<Marginal> = try_replicate(cfg.seed, 0x5a1, cfg.replicates, |r| disc.sample(r).map(|t| marginal_of(&t, cap, lvl)))?;
    let b: Vec<Marginal> = try_replicate(cfg.seed, 0x5a2, cfg.replicates, |r| lim.sample(r).map(|t| marginal_of(&t, cap, lvl)))?;
    let c: Vec<Marginal> = try_replicate(cfg.seed, 0x5a3, cfg.replicates, |r| wrong.sample(r).map(|t| marginal_of(&t, cap, lvl)))?;
    let name = format!("marginal[{},{}]", mech.label, cfg.regime.as_str());
    let mut s = SuiteReport::new(name.clone());
    for t in compare(&name, &a, &b, lvl)? {
        s.tests.push(t.with_n(cfg.n).with_sample_size(cfg.replicates as u64).with_seed(cfg.seed).param("theta", cfg.theta).param("h", cfg.h));
    }
    // power companion: the limit at a later time must be told apart
    let worst = compare(&format!("{name}:2theta"), &a, &c, lvl)?
        .into_iter()
        .min_by(|x, y| x.value().total_cmp(&y.value()))
        .unwrap();
    s.power.push(worst.with_n(cfg.n).with_sample_size(cfg.replicates as u64).with_seed(cfg.seed));
    let mean_roots = a.iter().map(|m| m.n_root as f64).sum::<f64>() / a.len() as f64;
    s.notes.push(format!("{name}: mean n_root discrete={mean_roots:.4}"));
    Ok(s)
}

fn quadratic() -> Mechanism {
    Mechanism::quadratic(0.0, 1.0).expect("u^2").with_label("u^2")
}

fn stable32() -> Mechanism {
    Mechanism::stable(1.5, 1.0).expect("u^1.5").with_label("u^1.5")
}

/// Height limits for `u²` at `n = 1000` and `u^{3/2}` at `n = 2000`.
pub fn default_height() -> Result<SuiteReport> {
    let mut s = SuiteReport::new("height");
    s.extend(experiment_height(&quadratic(), &[1000], 1.0, 1.0)?);
    s.extend(experiment_height(&stable32(), &[2000], 1.0, 1.0)?);
    Ok(s)
}

pub fn default_ascension(seed: u64) -> Result<SuiteReport> {
    let mut s = experiment_ascension(&quadratic(), &[1000], -0.5, 1.0, Some((10_000, seed)))?;
    s.name = "ascension".into();
    Ok(s)
}

pub fn default_marginal(seed: u64) -> Result<SuiteReport> {
    let mut s = SuiteReport::new("marginal");
    for regime in [MarginalRegime::Branch, MarginalRegime::Edge, MarginalRegime::EqualRate] {
        s.extend(experiment_marginal_convergence(&quadratic(), &MarginalConfig::new(500, regime, 10_000, seed))?);
    }
    Ok(s)
}

pub fn default_limits() -> Result<SuiteReport> {
    let mut s = SuiteReport::new("limits");
    s.extend(limit_checks(&quadratic(), 10_000, &[1.0], &[2, 3], &[], 1e-3)?);
    s.extend(limit_checks(&stable32(), 10_000, &[1.0], &[2, 3], &[4.0], 1e-3)?);
    let mixed = Mechanism::quadratic(1.0, 1.0)?.with_label("u+u^2");
    s.extend(limit_checks(&mixed, 10_000, &[1.0], &[2, 3], &[], 1e-3)?);
    Ok(s)
}
