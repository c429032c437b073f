//! Offspring laws and their generating-function transforms: erasure,
//! pruning, erased pruning, size-biasing and residual pruning-time laws.

use crate::error::{invalid, Error, Result};
use crate::mechanism::PruneLawBundle;
use rand::Rng;
use statrs::function::gamma::ln_gamma;
use std::fmt::Write as _;

/// Mass tolerance for validating probability laws.
pub const MASS_TOL: f64 = 1e-9;

/// A probability law on `{0, 1, 2, …}` stored densely up to the last
/// retained index, with the mass beyond it reported separately.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    masses: Vec<f64>,
    truncated_mass: f64,
    label: String,
}

impl OffspringLaw {
    pub fn new(masses: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        Self::with_truncation(masses, 0.0, label)
    }

    pub fn with_truncation(mut masses: Vec<f64>, truncated_mass: f64, label: impl Into<String>) -> Result<Self> {
        if masses.is_empty() {
            return invalid("offspring law needs at least one mass");
        }
        for (k, &p) in masses.iter().enumerate() {
            if !(p.is_finite() && p >= -1e-15) {
                return invalid(format!("mass at {k} is {p}"));
            }
        }
        for p in masses.iter_mut() {
            *p = p.max(0.0);
        }
        if !(truncated_mass >= 0.0) {
            return invalid(format!("truncated mass {truncated_mass} is negative"));
        }
        let total: f64 = masses.iter().sum::<f64>() + truncated_mass;
        if (total - 1.0).abs() > MASS_TOL {
            return invalid(format!("masses sum to {total}, not 1"));
        }
        while masses.len() > 1 && masses[masses.len() - 1] == 0.0 {
            masses.pop();
        }
        Ok(OffspringLaw { masses, truncated_mass, label: label.into() })
    }

    /// Builds a law from `(k, p)` pairs with strictly increasing `k`.
    pub fn from_pairs(pairs: &[(usize, f64)], label: impl Into<String>) -> Result<Self> {
        let mut masses = Vec::new();
        let mut last = None;
        for &(k, p) in pairs {
            if last.is_some_and(|l| k <= l) {
                return invalid("indices must be strictly increasing");
            }
            last = Some(k);
            if masses.len() <= k {
                masses.resize(k + 1, 0.0);
            }
            masses[k] = p;
        }
        Self::new(masses, label)
    }

    /// `ξ(0) = ξ(2) = 1/2`.
    pub fn binary() -> Self {
        Self::new(vec![0.5, 0.0, 0.5], "binary").unwrap()
    }

    pub fn dirac(k: usize) -> Self {
        let mut m = vec![0.0; k + 1];
        m[k] = 1.0;
        Self::new(m, format!("dirac({k})")).unwrap()
    }

    /// Poisson law truncated once the retained mass reaches `1 − 1e−12`.
    pub fn poisson(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return invalid(format!("Poisson mean {lambda} must be finite and nonnegative"));
        }
        if lambda == 0.0 {
            return Ok(Self::dirac(0).relabel("poisson(0)"));
        }
        let mut masses = Vec::new();
        let mut cum = 0.0;
        let ll = lambda.ln();
        let mut k = 0usize;
        loop {
            let p = (k as f64 * ll - lambda - ln_gamma(k as f64 + 1.0)).exp();
            masses.push(p);
            cum += p;
            if (cum >= 1.0 - 1e-12 && k as f64 > lambda) || k > 10_000_000 {
                break;
            }
            k += 1;
        }
        let trunc = (1.0 - cum).max(0.0);
        Self::with_truncation(masses, trunc, format!("poisson({lambda})"))
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Largest retained index.
    pub fn max_index(&self) -> usize {
        self.masses.len() - 1
    }

    pub fn p(&self, k: usize) -> f64 {
        self.masses.get(k).copied().unwrap_or(0.0)
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    /// Sum of retained masses.
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.masses.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn is_critical(&self, tol: f64) -> bool {
        (self.mean() - 1.0).abs() <= tol
    }

    /// `g(s) = Σ p_k s^k` for `s ∈ [0,1]`.
    pub fn pgf(&self, s: f64) -> Result<f64> {
        check_unit(s)?;
        Ok(self.g(s))
    }

    /// `g^{(m)}(s)` for `s ∈ [0,1]`.
    pub fn pgf_deriv(&self, m: usize, s: f64) -> Result<f64> {
        check_unit(s)?;
        Ok(self.g_deriv(m, s))
    }

    /// Unchecked generating function; also valid for `s > 1` on finite support.
    pub(crate) fn g(&self, s: f64) -> f64 {
        self.masses.iter().rev().fold(0.0, |acc, &p| acc * s + p)
    }

    pub(crate) fn g_deriv(&self, m: usize, s: f64) -> f64 {
        if m == 0 {
            return self.g(s);
        }
        if self.masses.len() <= m {
            return 0.0;
        }
        let mut acc = 0.0;
        for k in (m..self.masses.len()).rev() {
            let mut ff = 1.0;
            for j in 0..m {
                ff *= (k - j) as f64;
            }
            acc = acc * s + self.masses[k] * ff;
        }
        acc
    }

    /// Smallest fixed point of `g` in `[0,1]`.
    pub fn extinction(&self) -> f64 {
        if self.p(0) == 0.0 {
            return 0.0;
        }
        if self.mean() <= 1.0 {
            return 1.0;
        }
        let mut q = 0.0;
        for _ in 0..1_000_000 {
            let next = self.g(q);
            let done = next - q < 1e-14;
            q = next;
            if done {
                break;
            }
        }
        // polish: g(s) − s is positive below the root and negative just above
        let f = |s: f64| self.g(s) - s;
        let lo = q;
        let mut hi = lo;
        let mut found = false;
        for j in 1..60 {
            hi = 1.0 - (1.0 - lo) / 2f64.powi(j);
            if f(hi) < 0.0 {
                found = true;
                break;
            }
        }
        if !found || f(lo) < 0.0 {
            return q;
        }
        crate::numeric::bisect(|s| -f(s), lo, hi, 1e-16, true)
    }

    /// `w(k)`: probability that a unit-edge GW tree has height at most `k`.
    pub fn height_cdf(&self, k: u64) -> f64 {
        let mut w = 0.0;
        for _ in 0..k {
            w = self.g(w);
        }
        w
    }

    /// `(w(0), …, w(k))`.
    pub fn height_cdf_seq(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(k + 1);
        let mut w = 0.0;
        out.push(w);
        for _ in 0..k {
            w = self.g(w);
            out.push(w);
        }
        out
    }

    /// `P(Γ ≤ t)` for a GW tree with `Exp(c)` edges: solves `w′ = c(g(w) − w)`.
    pub fn height_cdf_cont(&self, c: f64, t: f64) -> Result<f64> {
        if !(c > 0.0 && t >= 0.0) {
            return invalid("height_cdf_cont needs c > 0 and t >= 0");
        }
        let steps = ((t * c * 400.0).ceil() as usize).max(2000);
        let dt = t / steps as f64;
        let f = |w: f64| c * (self.g(w) - w);
        let mut w = 0.0;
        for _ in 0..steps {
            let k1 = f(w);
            let k2 = f(w + 0.5 * dt * k1);
            let k3 = f(w + 0.5 * dt * k2);
            let k4 = f(w + dt * k3);
            w += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        Ok(w.clamp(0.0, 1.0))
    }

    /// Plain-text form: header line with the truncated mass, then `k p` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!("LAW truncated_mass={:.16e} label={}\n", self.truncated_mass, self.label);
        for (k, &p) in self.masses.iter().enumerate() {
            if p != 0.0 {
                writeln!(s, "{k} {p:.16e}").unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty law file".into() })?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("LAW") {
            return Err(Error::Parse { line: hl + 1, msg: "expected LAW header".into() });
        }
        let mut trunc = 0.0;
        let mut label = String::new();
        for p in parts {
            if let Some(v) = p.strip_prefix("truncated_mass=") {
                trunc = v.parse().map_err(|_| Error::Parse { line: hl + 1, msg: format!("bad truncated_mass {v}") })?;
            } else if let Some(v) = p.strip_prefix("label=") {
                label = v.to_string();
            }
        }
        let mut pairs = Vec::new();
        for (i, l) in lines {
            let mut it = l.split_whitespace();
            let bad = |m: &str| Error::Parse { line: i + 1, msg: m.to_string() };
            let k: usize = it.next().ok_or_else(|| bad("missing index"))?.parse().map_err(|_| bad("bad index"))?;
            let p: f64 = it.next().ok_or_else(|| bad("missing mass"))?.parse().map_err(|_| bad("bad mass"))?;
            if it.next().is_some() {
                return Err(bad("trailing fields"));
            }
            pairs.push((k, p));
        }
        let mut masses = Vec::new();
        let mut last = None;
        for (k, p) in pairs {
            if last.is_some_and(|l| k <= l) {
                return Err(Error::Parse { line: 0, msg: "indices must increase".into() });
            }
            last = Some(k);
            masses.resize(k + 1, 0.0);
            masses[k] = p;
        }
        if masses.is_empty() {
            masses.push(0.0);
        }
        Self::with_truncation(masses, trunc, label)
    }
}

fn check_unit(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return invalid(format!("generating function argument {s} outside [0,1]"));
    }
    Ok(())
}

/// Coefficients of `Σ_k w_k (p + s(1−p))^k` in powers of `s`, using a
/// windowed binomial expansion for each `k`.
fn binomial_reexpand(weights: &[f64], p: f64) -> Vec<f64> {
    let n = weights.len();
    let mut out = vec![0.0; n];
    if p == 0.0 {
        out.copy_from_slice(weights);
        return out;
    }
    let q = 1.0 - p;
    let (lp, lq) = (p.ln(), q.ln());
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        if k == 0 {
            out[0] += w;
            continue;
        }
        let kf = k as f64;
        let mean = kf * q;
        let sd = (kf * p * q).sqrt();
        let lo = ((mean - 40.0 * sd - 5.0).floor().max(0.0)) as usize;
        let hi = ((mean + 40.0 * sd + 5.0).ceil() as usize).min(k);
        let lk = ln_gamma(kf + 1.0);
        for j in lo..=hi {
            let jf = j as f64;
            let lpmf = lk - ln_gamma(jf + 1.0) - ln_gamma(kf - jf + 1.0) + jf * lq + (kf - jf) * lp;
            out[j] += w * lpmf.exp();
        }
    }
    out
}

fn finish(masses: Vec<f64>, label: String) -> Result<OffspringLaw> {
    let total: f64 = masses.iter().map(|p| p.max(0.0)).sum();
    let trunc = (1.0 - total).max(0.0);
    OffspringLaw::with_truncation(masses, trunc, label)
}

/// Discrete `h`-erasure: `g_{ξ^h}(s) = (g_ξ(p+s(1−p)) − p)/(1−p)` and
/// `g_{μ^h}(s) = g_μ(p+s(1−p))` with `p = w(h)`.
pub fn erase_discrete(xi: &OffspringLaw, mu: &OffspringLaw, h: u64) -> Result<(OffspringLaw, OffspringLaw)> {
    let p = xi.height_cdf(h);
    erase_discrete_at(xi, mu, p).map(|(a, b)| (a.relabel(format!("erase({}, {h})", xi.label)), b.relabel(format!("erase({}, {h})", mu.label))))
}

/// Discrete erasure with an explicit `p`.
pub fn erase_discrete_at(xi: &OffspringLaw, mu: &OffspringLaw, p: f64) -> Result<(OffspringLaw, OffspringLaw)> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("p = {p} outside [0,1]"));
    }
    if p >= 1.0 - 1e-15 {
        return Err(Error::Degenerate("erasure removes everything (p = 1)".into()));
    }
    let mut a = binomial_reexpand(xi.masses(), p);
    a[0] -= p;
    for v in a.iter_mut() {
        *v /= 1.0 - p;
    }
    if xi.truncated_mass() == 0.0 {
        a[0] = (1.0 - a[1..].iter().sum::<f64>()).max(0.0);
    }
    let b = binomial_reexpand(mu.masses(), p);
    Ok((finish(a, xi.label.clone())?, finish(b, mu.label.clone())?))
}

/// Erasure for exponential-edge trees: returns `(ξ^{h,c}, c^h, μ^h)` given
/// `p = P(Γ ≤ h)` for a single `GW(ξ,c)` tree.
pub fn erase_cont(xi: &OffspringLaw, c: f64, mu: &OffspringLaw, p: f64) -> Result<(OffspringLaw, f64, OffspringLaw)> {
    if xi.p(1) > 1e-15 {
        return invalid("continuous erasure needs xi(1) = 0");
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Degenerate(format!("p = {p}: everything erased")));
    }
    let gp = xi.g_deriv(1, p);
    if 1.0 - gp <= 1e-15 {
        return Err(Error::Degenerate("g'(p) = 1".into()));
    }
    let d = (1.0 - p) * (1.0 - gp);
    let mut a = binomial_reexpand(xi.masses(), p);
    a[0] -= p;
    if a.len() > 1 {
        a[1] = 0.0;
    }
    for v in a.iter_mut() {
        *v /= d;
    }
    let b = binomial_reexpand(mu.masses(), p);
    Ok((finish(a, format!("erase_cont({})", xi.label))?, c * (1.0 - gp), finish(b, format!("erase_cont({})", mu.label))?))
}

/// `μ(i) = (i+1) ξ(i+1)` for critical `ξ`.
pub fn size_biased_root(xi: &OffspringLaw) -> Result<OffspringLaw> {
    if !xi.is_critical(1e-9) {
        return invalid(format!("size-biasing needs a critical law, mean is {}", xi.mean()));
    }
    let m: Vec<f64> = (1..xi.masses.len()).map(|i| i as f64 * xi.masses[i]).collect();
    let m = if m.is_empty() { vec![0.0] } else { m };
    finish(m, format!("size_biased({})", xi.label))
}

/// A pruning-time law on `(0, ∞]`.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeLaw {
    /// `Exp(rate)`; rate 0 is the point mass at infinity.
    Exponential(f64),
    AtInfinity,
    /// Survival function on a grid with linear interpolation, constant past the last point.
    Tabulated { theta: Vec<f64>, survival: Vec<f64> },
    Mixture(Vec<(f64, TimeLaw)>),
}

pub const TAB_POINTS: usize = 1024;
pub const TAB_THETA_MAX: f64 = 50.0;

impl TimeLaw {
    /// Tabulates `f` on 1024 log-spaced points of `(0, θ_max]`, forcing monotonicity.
    pub fn tabulate(f: impl Fn(f64) -> f64, theta_max: f64) -> Self {
        let lmin = (theta_max * 1e-6).ln();
        let lmax = theta_max.ln();
        let mut theta = vec![0.0];
        let mut survival = vec![1.0];
        let mut last = 1.0f64;
        for i in 0..TAB_POINTS {
            let t = (lmin + (lmax - lmin) * i as f64 / (TAB_POINTS - 1) as f64).exp();
            last = last.min(f(t).clamp(0.0, 1.0));
            theta.push(t);
            survival.push(last);
        }
        TimeLaw::Tabulated { theta, survival }
    }

    /// `H((θ, ∞])`.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match self {
            TimeLaw::Exponential(r) => (-r * t).exp(),
            TimeLaw::AtInfinity => 1.0,
            TimeLaw::Tabulated { theta, survival } => {
                let i = theta.partition_point(|&x| x <= t);
                if i >= theta.len() {
                    return *survival.last().unwrap();
                }
                let (t0, t1) = (theta[i - 1], theta[i]);
                let (s0, s1) = (survival[i - 1], survival[i]);
                s0 + (s1 - s0) * (t - t0) / (t1 - t0)
            }
            TimeLaw::Mixture(parts) => parts.iter().map(|(w, l)| w * l.survival(t)).sum(),
        }
    }

    pub fn mass_at_infinity(&self) -> f64 {
        match self {
            TimeLaw::Exponential(r) => {
                if *r == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            TimeLaw::AtInfinity => 1.0,
            TimeLaw::Tabulated { survival, .. } => *survival.last().unwrap(),
            TimeLaw::Mixture(parts) => parts.iter().map(|(w, l)| w * l.mass_at_infinity()).sum(),
        }
    }

    /// Draws a time; `f64::INFINITY` encodes the atom at infinity.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TimeLaw::Exponential(r) => {
                if *r == 0.0 {
                    f64::INFINITY
                } else {
                    let u: f64 = rng.random();
                    -(1.0 - u).ln() / r
                }
            }
            TimeLaw::AtInfinity => f64::INFINITY,
            TimeLaw::Tabulated { theta, survival } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                // survival is nonincreasing; find the first grid point with S ≤ u
                let i = survival.partition_point(|&s| s > u);
                if i >= survival.len() {
                    return f64::INFINITY;
                }
                if i == 0 {
                    return 0.0;
                }
                let (t0, t1) = (theta[i - 1], theta[i]);
                let (s0, s1) = (survival[i - 1], survival[i]);
                if s0 == s1 {
                    t1
                } else {
                    t0 + (t1 - t0) * (s0 - u) / (s0 - s1)
                }
            }
            TimeLaw::Mixture(parts) => {
                let total: f64 = parts.iter().map(|(w, _)| w).sum();
                let mut u = rng.random::<f64>() * total;
                for (w, l) in parts {
                    if u < *w {
                        return l.sample(rng);
                    }
                    u -= w;
                }
                parts.last().map(|(_, l)| l.sample(rng)).unwrap_or(f64::INFINITY)
            }
        }
    }

    /// Residual law `H((θ′, θ′+θ]) / H((θ′, ∞])`.
    pub fn post_shift(&self, shift: f64) -> TimeLaw {
        if shift <= 0.0 {
            return self.clone();
        }
        let s0 = self.survival(shift);
        if s0 <= 0.0 {
            return TimeLaw::AtInfinity;
        }
        match self {
            TimeLaw::Exponential(_) | TimeLaw::AtInfinity => self.clone(),
            TimeLaw::Tabulated { theta, .. } => {
                let tmax = *theta.last().unwrap();
                TimeLaw::tabulate(|t| self.survival(shift + t) / s0, tmax)
            }
            TimeLaw::Mixture(parts) => {
                let mut out = Vec::new();
                for (w, l) in parts {
                    let s = l.survival(shift);
                    if w * s > 0.0 {
                        out.push((w * s / s0, l.post_shift(shift)));
                    }
                }
                TimeLaw::Mixture(out)
            }
        }
    }
}

/// Per-degree pruning-time laws `H_m`, `m ≥ 1`, where `m` is the number of
/// children of the marked vertex.
#[derive(Debug, Clone, PartialEq)]
pub enum PruneTimeFamily {
    /// `H_m = Exp(m−1)`; single-child vertices are never marked.
    BranchPoint,
    /// `H_m = Exp(rate)` for every `m ≥ 1`.
    EqualRate(f64),
    /// `laws[m−1] = H_m`.
    Explicit(Vec<TimeLaw>),
}

impl PruneTimeFamily {
    pub fn law(&self, m: usize) -> Result<TimeLaw> {
        if m == 0 {
            return Ok(TimeLaw::AtInfinity);
        }
        match self {
            PruneTimeFamily::BranchPoint => Ok(if m == 1 { TimeLaw::AtInfinity } else { TimeLaw::Exponential((m - 1) as f64) }),
            PruneTimeFamily::EqualRate(r) => Ok(TimeLaw::Exponential(*r)),
            PruneTimeFamily::Explicit(v) => v
                .get(m - 1)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("pruning-time family has no law for degree {m}"))),
        }
    }

    pub fn survival(&self, m: usize, theta: f64) -> Result<f64> {
        Ok(self.law(m)?.survival(theta))
    }

    /// Residual family after `θ′` units of pruning time.
    pub fn post_shift(&self, shift: f64) -> Result<PruneTimeFamily> {
        if shift < 0.0 {
            return invalid("post_shift needs theta' >= 0");
        }
        Ok(match self {
            PruneTimeFamily::Explicit(v) => PruneTimeFamily::Explicit(v.iter().map(|l| l.post_shift(shift)).collect()),
            other => other.clone(),
        })
    }
}

/// `ξ^θ(i) = ξ(i)H_i((θ,∞])`, the removed mass moving to 0.
pub fn pruned_law(xi: &OffspringLaw, fam: &PruneTimeFamily, theta: f64) -> Result<OffspringLaw> {
    if theta < 0.0 {
        return invalid("pruned_law needs theta >= 0");
    }
    let mut m = xi.masses.clone();
    let mut removed = 0.0;
    for i in 1..m.len() {
        if m[i] > 0.0 {
            let s = fam.survival(i, theta)?;
            removed += m[i] * (1.0 - s);
            m[i] *= s;
        }
    }
    m[0] += removed;
    OffspringLaw::with_truncation(m, xi.truncated_mass, format!("pruned({}, {theta})", xi.label))
}

/// Continuous-edge pruned law: `c^θ = c + H̄₁((0,θ])` and masses
/// `ξ^{θ,c}(i) = cξ(i)H_i((θ,∞])/c^θ` for `i ≥ 2`, `ξ^{θ,c}(1) = 0`.
pub fn pruned_law_cont(xi: &OffspringLaw, c: f64, bundle: &PruneLawBundle, theta: f64) -> Result<(OffspringLaw, f64)> {
    if theta < 0.0 {
        return invalid("pruned_law_cont needs theta >= 0");
    }
    if xi.p(1) > 1e-15 {
        return invalid("continuous pruning needs xi(1) = 0");
    }
    let hb = bundle.hbar1(theta);
    if !hb.is_finite() {
        return Err(Error::Numerical(format!("hbar1({theta}) not finite")));
    }
    let ct = c + hb;
    let mut m = vec![0.0; xi.masses.len().max(2)];
    let mut zero = c * xi.p(0) + hb;
    for i in 2..xi.masses.len() {
        let p = xi.masses[i];
        if p > 0.0 {
            let s = bundle.hm_survival(i, theta);
            if !s.is_finite() {
                return Err(Error::Numerical(format!("H_{i} survival not finite")));
            }
            m[i] = c * p * s / ct;
            zero += c * p * (1.0 - s);
        }
    }
    m[0] = zero / ct;
    let law = OffspringLaw::with_truncation(m, c * xi.truncated_mass / ct, format!("pruned_cont({}, {theta})", xi.label))?;
    Ok((law, ct))
}

/// Pruning-time family induced on the erased tree: a vertex with `m`
/// surviving children had `M ≥ m` original children with weight
/// `∝ ξ(M) M!/(M−m)! p^{M−m}`, and its time is drawn from `base` at degree `M`.
pub fn erased_family(xi: &OffspringLaw, p: f64, base: &PruneTimeFamily, max_degree: usize) -> Result<PruneTimeFamily> {
    let n = xi.masses.len();
    let mut laws = Vec::new();
    for m in 1..=max_degree {
        if p == 0.0 {
            laws.push(base.law(m)?);
            continue;
        }
        let mut logs = Vec::new();
        for big in m..n {
            let x = xi.masses[big];
            if x > 0.0 {
                let l = x.ln() + ln_gamma(big as f64 + 1.0) - ln_gamma((big - m) as f64 + 1.0) + (big - m) as f64 * p.ln();
                logs.push((big, l));
            }
        }
        if logs.is_empty() {
            laws.push(base.law(m)?);
            continue;
        }
        let top = logs.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let mut parts = Vec::new();
        let mut total = 0.0;
        for (big, l) in logs {
            let w = (l - top).exp();
            if w > 1e-300 {
                parts.push((w, base.law(big)?));
                total += w;
            }
        }
        for part in parts.iter_mut() {
            part.0 /= total;
        }
        laws.push(if parts.len() == 1 { parts.pop().unwrap().1 } else { TimeLaw::Mixture(parts) });
    }
    Ok(PruneTimeFamily::Explicit(laws))
}

/// Branch-point pruning after erasure with a given `p`: returns the family on
/// the erased tree and `ξ^h_θ`. Negative `θ` is accepted when the resulting
/// masses stay nonnegative (used for supercritical extensions).
pub fn branch_prune_law_at(xi: &OffspringLaw, p: f64, theta: f64) -> Result<(PruneTimeFamily, OffspringLaw)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Degenerate(format!("p = {p}")));
    }
    let e = (-theta).exp();
    let weights: Vec<f64> = xi.masses.iter().enumerate().map(|(k, &x)| x * e.powi(k as i32)).collect();
    let b = binomial_reexpand(&weights, p);
    let d = (1.0 - p) * e;
    let mut m: Vec<f64> = b.iter().map(|v| v / d).collect();
    m[0] = (b[0] - p * e - xi.g(e) + e) / d;
    let label = format!("branch_prune({}, p={p}, {theta})", xi.label);
    let law = finish(m, label)?;
    let fam = if theta >= 0.0 {
        erased_family(xi, p, &PruneTimeFamily::BranchPoint, xi.max_index().max(1))?
    } else {
        PruneTimeFamily::BranchPoint
    };
    Ok((fam, law))
}

/// Branch-point pruning seen on the `h`-erased unit-edge tree.
pub fn erased_prune_law_discrete(xi: &OffspringLaw, h: u64, theta: f64) -> Result<(PruneTimeFamily, OffspringLaw)> {
    if theta < 0.0 {
        return invalid("erased_prune_law_discrete needs theta >= 0");
    }
    let p = xi.height_cdf(h);
    branch_prune_law_at(xi, p, theta)
}

/// `H₁` survival on the erased tree, `g′(pe^{−θ})/g′(p)`, or the atom at
/// infinity when `g′(p) = 0`.
pub fn erased_h1(xi: &OffspringLaw, p: f64) -> TimeLaw {
    let d = xi.g_deriv(1, p);
    if d == 0.0 {
        return TimeLaw::AtInfinity;
    }
    TimeLaw::tabulate(|t| xi.g_deriv(1, p * (-t).exp()) / d, TAB_THETA_MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn close(a: &OffspringLaw, b: &[f64], tol: f64) {
        for (k, &v) in b.iter().enumerate() {
            assert!((a.p(k) - v).abs() <= tol, "k={k}: {} vs {v}", a.p(k));
        }
    }

    #[test]
    fn pgf_examples() {
        let b = OffspringLaw::binary();
        assert_eq!(b.pgf(0.5).unwrap(), 0.625);
        assert_eq!(b.pgf(1.0).unwrap(), 1.0);
        assert_eq!(b.pgf_deriv(1, 0.5).unwrap(), 0.5);
        assert!(b.pgf(1.5).is_err());
    }

    #[test]
    fn extinction_examples() {
        assert_eq!(OffspringLaw::binary().extinction(), 1.0);
        let l = OffspringLaw::new(vec![0.25, 0.0, 0.75], "").unwrap();
        assert_relative_eq!(l.extinction(), 1.0 / 3.0, max_relative = 1e-13);
        assert_eq!(OffspringLaw::dirac(0).extinction(), 1.0);
        assert_eq!(OffspringLaw::dirac(2).extinction(), 0.0);
    }

    #[test]
    fn height_cdf_examples() {
        let b = OffspringLaw::binary();
        assert_eq!(b.height_cdf(0), 0.0);
        assert_eq!(b.height_cdf(1), 0.5);
        assert_eq!(b.height_cdf(2), 0.625);
        assert_eq!(b.height_cdf(3), 0.6953125);
        let w = b.height_cdf(2000);
        assert!((1.0 - w - 1.0 / 1000.0).abs() < 2e-5);
    }

    #[test]
    fn erase_discrete_examples() {
        let b = OffspringLaw::binary();
        let (x, m) = erase_discrete(&b, &OffspringLaw::dirac(2), 1).unwrap();
        close(&x, &[0.25, 0.5, 0.25], 1e-14);
        close(&m, &[0.25, 0.5, 0.25], 1e-14);
        let (x, _) = erase_discrete(&b, &OffspringLaw::dirac(1), 0).unwrap();
        assert_eq!(x.masses(), b.masses());
        assert!(matches!(erase_discrete(&OffspringLaw::dirac(0), &OffspringLaw::dirac(1), 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn erase_cont_examples() {
        let b = OffspringLaw::binary();
        let (x, c, _) = erase_cont(&b, 2.0, &OffspringLaw::dirac(1), 0.5).unwrap();
        assert_eq!(c, 1.0);
        close(&x, &[0.5, 0.0, 0.5], 1e-15);
        let (x, c, m) = erase_cont(&b, 2.0, &OffspringLaw::dirac(1), 0.0).unwrap();
        assert_eq!((x.masses(), c, m.masses()), (b.masses(), 2.0, OffspringLaw::dirac(1).masses()));
    }

    #[test]
    fn continuous_height_cdf_quadratic() {
        // binary with c = 2: w' = (1−w)², so w(t) = t/(1+t)
        let b = OffspringLaw::binary();
        for t in [0.5, 1.0, 3.0] {
            assert_relative_eq!(b.height_cdf_cont(2.0, t).unwrap(), t / (1.0 + t), max_relative = 1e-10);
        }
    }

    #[test]
    fn pruned_law_examples() {
        let b = OffspringLaw::binary();
        let l = pruned_law(&b, &PruneTimeFamily::BranchPoint, std::f64::consts::LN_2).unwrap();
        close(&l, &[0.75, 0.0, 0.25], 1e-15);
        assert_eq!(pruned_law(&b, &PruneTimeFamily::BranchPoint, 0.0).unwrap().masses(), b.masses());
        let t = pruned_law(&OffspringLaw::dirac(3), &PruneTimeFamily::BranchPoint, std::f64::consts::LN_2).unwrap();
        close(&t, &[0.75, 0.0, 0.0, 0.25], 1e-15);
    }

    #[test]
    fn pruned_law_cont_examples() {
        let mech = crate::Mechanism::quadratic(0.0, 1.0).unwrap();
        let bundle = mech.ad_prune_law(1.0).unwrap();
        let (l, c) = pruned_law_cont(&OffspringLaw::binary(), 2.0, &bundle, 1.0).unwrap();
        assert_relative_eq!(c, 4.0, max_relative = 1e-14);
        close(&l, &[0.75, 0.0, 0.25], 1e-14);
        let (l, c) = pruned_law_cont(&OffspringLaw::binary(), 2.0, &bundle, 0.0).unwrap();
        assert_eq!(c, 2.0);
        close(&l, &[0.5, 0.0, 0.5], 1e-15);
    }

    #[test]
    fn pruned_law_cont_equal_rate_prelimit() {
        // exponential survivals e^{−γθ} plugged into the same formula
        let gamma = 3.0;
        let fam = PruneTimeFamily::EqualRate(gamma);
        let bundle = PruneLawBundle::new(
            crate::mechanism::Hbar1::Linear(1.0),
            crate::mechanism::BranchTimes::Family(fam),
            None,
            crate::mechanism::BundleSource::EqualRate,
        )
        .unwrap();
        let xi = OffspringLaw::new(vec![0.4, 0.0, 0.3, 0.3], "").unwrap();
        let (l, c) = pruned_law_cont(&xi, 2.0, &bundle, 0.5).unwrap();
        let s = (-gamma * 0.5).exp();
        assert_relative_eq!(c, 2.5, max_relative = 1e-14);
        assert_relative_eq!(l.p(2), 2.0 * 0.3 * s / 2.5, max_relative = 1e-13);
        assert_relative_eq!(l.p(3), 2.0 * 0.3 * s / 2.5, max_relative = 1e-13);
        assert!((l.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn erased_prune_examples() {
        let b = OffspringLaw::binary();
        let (fam, l) = erased_prune_law_discrete(&b, 1, std::f64::consts::LN_2).unwrap();
        close(&l, &[0.625, 0.25, 0.125], 1e-14);
        for t in [0.1, 1.0, 3.0] {
            assert_relative_eq!(fam.survival(1, t).unwrap(), (-t).exp(), max_relative = 1e-12);
            assert_relative_eq!(fam.survival(2, t).unwrap(), (-t).exp(), max_relative = 1e-12);
        }
        let (_, l0) = erased_prune_law_discrete(&b, 1, 0.0).unwrap();
        let (xh, _) = erase_discrete(&b, &OffspringLaw::dirac(1), 1).unwrap();
        close(&l0, xh.masses(), 1e-14);
        // dual route: pruning the erased law with the erased family
        let (fam, l) = erased_prune_law_discrete(&b, 2, 0.7).unwrap();
        let (xh, _) = erase_discrete(&b, &OffspringLaw::dirac(1), 2).unwrap();
        close(&l, pruned_law(&xh, &fam, 0.7).unwrap().masses(), 1e-12);
    }

    #[test]
    fn erased_family_matches_derivative_ratios() {
        let xi = OffspringLaw::new(vec![0.3, 0.2, 0.1, 0.25, 0.15], "").unwrap();
        let p = xi.height_cdf(2);
        let fam = erased_family(&xi, p, &PruneTimeFamily::BranchPoint, 4).unwrap();
        for m in 1..=4usize {
            for t in [0.2, 1.0, 2.5] {
                let want = (-((m - 1) as f64) * t).exp() * xi.g_deriv(m, p * (-t).exp()) / xi.g_deriv(m, p);
                assert_relative_eq!(fam.survival(m, t).unwrap(), want, max_relative = 1e-12);
            }
        }
        let h1 = erased_h1(&xi, p);
        assert!((h1.survival(1.0) - fam.survival(1, 1.0).unwrap()).abs() < 1e-4);
    }

    #[test]
    fn ternary_erased_h3() {
        let xi = OffspringLaw::new(vec![2.0 / 3.0, 0.0, 0.0, 1.0 / 3.0], "").unwrap();
        let (fam, _) = erased_prune_law_discrete(&xi, 1, 0.0).unwrap();
        assert_eq!(fam.law(3).unwrap(), TimeLaw::Exponential(2.0));
        for m in 1..=2 {
            assert_eq!(fam.law(m).unwrap(), TimeLaw::Exponential(2.0));
        }
    }

    #[test]
    fn size_biased_examples() {
        assert_eq!(size_biased_root(&OffspringLaw::binary()).unwrap().masses(), &[0.0, 1.0]);
        let p = OffspringLaw::poisson(1.0).unwrap();
        let mu = size_biased_root(&p).unwrap();
        for i in 0..10 {
            assert_relative_eq!(mu.p(i), p.p(i), max_relative = 1e-12);
        }
        assert!(size_biased_root(&OffspringLaw::new(vec![2.0 / 3.0, 0.0, 1.0 / 3.0], "").unwrap()).is_err());
    }

    #[test]
    fn post_shift_examples() {
        assert_eq!(TimeLaw::Exponential(2.0).post_shift(5.0), TimeLaw::Exponential(2.0));
        let tab = TimeLaw::tabulate(|t| 1.0 / (1.0 + t), 50.0);
        let sh = tab.post_shift(2.0);
        for t in [0.5, 1.0, 4.0] {
            assert!((sh.survival(t) - 3.0 / (3.0 + t)).abs() < 1e-3);
        }
        let dead = TimeLaw::tabulate(|t| if t < 1.0 { 1.0 - t } else { 0.0 }, 50.0);
        assert_eq!(dead.post_shift(2.0), TimeLaw::AtInfinity);
    }

    #[test]
    fn ascension_prelimit_extinction() {
        let (xi, _) = crate::Mechanism::quadratic(0.0, 1.0).unwrap().domain_family(1000).unwrap();
        for theta in [-0.5, -1.0, -2.0] {
            let (_, l) = branch_prune_law_at(&xi, 0.0, theta / 1000.0).unwrap();
            let want = 2.0 * (theta / 1000.0f64).exp() - 1.0;
            assert!((l.extinction() - want).abs() < 1e-10);
        }
        let (_, l) = branch_prune_law_at(&xi, 0.0, -0.5 / 1000.0).unwrap();
        assert!((l.extinction().powi(1000) - 0.367_787_436_808).abs() < 1e-9);
    }

    #[test]
    fn text_round_trip() {
        let l = OffspringLaw::poisson(2.5).unwrap();
        let back = OffspringLaw::from_text(&l.to_text()).unwrap();
        assert_eq!(back, l);
        assert!(matches!(OffspringLaw::from_text("LAW truncated_mass=0\n0 x\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn erasure_near_full_extinction_keeps_mass() {
        let xi = OffspringLaw::new(vec![0.9848631723481553, 0.015136827651844605], "x").unwrap();
        let (a, am) = erase_discrete(&xi, &OffspringLaw::dirac(1), 1).unwrap();
        let (b, _) = erase_discrete(&a, &am, 3).unwrap();
        let (c, _) = erase_discrete(&xi, &OffspringLaw::dirac(1), 4).unwrap();
        assert!((b.total() - 1.0).abs() < 1e-12);
        assert!((b.p(0) - c.p(0)).abs() < 1e-12);
    }

    fn law_strategy() -> impl Strategy<Value = OffspringLaw> {
        proptest::collection::vec(0.0f64..1.0, 2..8).prop_filter_map("nonzero", |mut w| {
            w[0] += 0.05;
            let s: f64 = w.iter().sum();
            OffspringLaw::new(w.iter().map(|x| x / s).collect(), "random").ok()
        })
    }

    proptest! {
        #[test]
        fn erasure_semigroup(xi in law_strategy(), h1 in 1u64..4, h2 in 1u64..4) {
            let mu = OffspringLaw::dirac(1);
            if let (Ok((a, am)), Ok((c, cm))) = (erase_discrete(&xi, &mu, h1), erase_discrete(&xi, &mu, h1 + h2)) {
                if let Ok((b, bm)) = erase_discrete(&a, &am, h2) {
                    for k in 0..=xi.max_index() {
                        prop_assert!((b.p(k) - c.p(k)).abs() <= 1e-9);
                        prop_assert!((bm.p(k) - cm.p(k)).abs() <= 1e-9);
                    }
                    prop_assert!((b.total() - 1.0).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn pruning_semigroup(xi in law_strategy(), t1 in 0.0f64..2.0, t2 in 0.0f64..2.0) {
            for fam in [PruneTimeFamily::BranchPoint, PruneTimeFamily::EqualRate(1.3)] {
                let a = pruned_law(&pruned_law(&xi, &fam, t1).unwrap(), &fam.post_shift(t1).unwrap(), t2).unwrap();
                let b = pruned_law(&xi, &fam, t1 + t2).unwrap();
                for k in 0..=xi.max_index() {
                    prop_assert!((a.p(k) - b.p(k)).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn height_cdf_monotone_to_extinction(xi in law_strategy()) {
            let w = xi.height_cdf_seq(400);
            for pair in w.windows(2) {
                prop_assert!(pair[1] >= pair[0]);
            }
            let q = xi.extinction();
            prop_assert!(w[400] <= q + 1e-12);
            prop_assert!((xi.g(q) - q).abs() <= 1e-12);
        }
    }
}
