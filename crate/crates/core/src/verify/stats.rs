//! Goodness-of-fit and two-sample tests with asymptotic p-values.

use crate::error::{invalid, Error, Result};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const MIN_SAMPLE: usize = 100;
/// Minimal expected count per cell after pooling.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Result {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Cells left after pooling.
    pub cells: usize,
    pub n: u64,
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_p(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| x.is_nan()) {
        return invalid("sample contains NaN");
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One-sample KS test against a CDF. `+∞` samples are allowed and sit at
/// `F(∞) = 1`.
pub fn ks_one(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.len() < MIN_SAMPLE {
        return invalid(format!("KS needs at least {MIN_SAMPLE} samples, got {}", samples.len()));
    }
    let xs = sorted(samples)?;
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = if xs[i].is_infinite() { 1.0 } else { cdf(xs[i]) };
        // left limit of F at a tie group equals F just below the value
        let f_left = if xs[i].is_infinite() { f } else { cdf(xs[i] - 1e-12 * xs[i].abs().max(1.0)) };
        d = d.max((f_left - i as f64 / n).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    Ok(KsResult { statistic: d, p_value: ks_p(d, n), n: xs.len(), m: 0 })
}

/// Two-sample KS test. The reference sample must not be constant.
pub fn ks_two(samples: &[f64], reference: &[f64]) -> Result<KsResult> {
    if samples.len() < MIN_SAMPLE || reference.len() < MIN_SAMPLE {
        return invalid(format!("KS needs at least {MIN_SAMPLE} samples per side"));
    }
    let a = sorted(samples)?;
    let b = sorted(reference)?;
    if b[0] == b[b.len() - 1] {
        return Err(Error::Degenerate("reference sample has zero variance".into()));
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(KsResult { statistic: d, p_value: ks_p(d, n * m / (n + m)), n: a.len(), m: b.len() })
}

fn chi2_sf(x: f64, df: usize) -> Result<f64> {
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(dist.sf(x))
}

/// Groups consecutive cells until every group reaches `ok`; a short final
/// group is merged into its predecessor.
fn pool(cells: usize, ok: impl Fn(&[usize]) -> bool) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut cur = Vec::new();
    for i in 0..cells {
        cur.push(i);
        if ok(&cur) {
            groups.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        match groups.last_mut() {
            Some(g) => g.extend(cur),
            None => groups.push(cur),
        }
    }
    groups
}

/// Pearson goodness-of-fit test; adjacent cells are pooled until every
/// expected count is at least [`MIN_EXPECTED`].
pub fn chi2_gof(observed: &[u64], probs: &[f64]) -> Result<Chi2Result> {
    if observed.len() != probs.len() {
        return invalid("observed and expected cell counts differ");
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) || probs.iter().any(|&p| p < 0.0) {
        return invalid("expected probabilities must be nonnegative with positive sum");
    }
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let groups = pool(observed.len(), |g| g.iter().map(|&i| probs[i] / total).sum::<f64>() * nf >= MIN_EXPECTED);
    if groups.len() < 2 {
        return Err(Error::Degenerate("fewer than two cells after pooling".into()));
    }
    let mut stat = 0.0;
    for g in &groups {
        let e: f64 = g.iter().map(|&i| probs[i] / total).sum::<f64>() * nf;
        let o: f64 = g.iter().map(|&i| observed[i] as f64).sum();
        stat += (o - e) * (o - e) / e;
    }
    let df = groups.len() - 1;
    Ok(Chi2Result { statistic: stat, df, p_value: chi2_sf(stat, df)?, cells: groups.len(), n })
}

/// Two-sample chi-square test of homogeneity on aligned histograms.
pub fn chi2_two_sample(a: &[u64], b: &[u64]) -> Result<Chi2Result> {
    if a.len() != b.len() {
        return invalid("histograms have different numbers of cells");
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if na < MIN_SAMPLE as f64 || nb < MIN_SAMPLE as f64 {
        return invalid(format!("chi-square needs at least {MIN_SAMPLE} samples per side"));
    }
    let fa = na / (na + nb);
    let fb = nb / (na + nb);
    let groups = pool(a.len(), |g| {
        let t: f64 = g.iter().map(|&i| (a[i] + b[i]) as f64).sum();
        t * fa.min(fb) >= MIN_EXPECTED
    });
    if groups.len() < 2 {
        return Err(Error::Degenerate("fewer than two cells after pooling".into()));
    }
    let (k1, k2) = ((nb / na).sqrt(), (na / nb).sqrt());
    let mut stat = 0.0;
    for g in &groups {
        let x: f64 = g.iter().map(|&i| a[i] as f64).sum();
        let y: f64 = g.iter().map(|&i| b[i] as f64).sum();
        if x + y > 0.0 {
            stat += (k1 * x - k2 * y).powi(2) / (x + y);
        }
    }
    let df = groups.len() - 1;
    Ok(Chi2Result { statistic: stat, df, p_value: chi2_sf(stat, df)?, cells: groups.len(), n: (na + nb) as u64 })
}

/// Histograms of two samples of keys over their sorted common support.
pub fn histograms<K: Ord + Clone>(a: &[K], b: &[K]) -> (Vec<u64>, Vec<u64>) {
    use std::collections::BTreeMap;
    let mut m: BTreeMap<K, (u64, u64)> = BTreeMap::new();
    for k in a {
        m.entry(k.clone()).or_default().0 += 1;
    }
    for k in b {
        m.entry(k.clone()).or_default().1 += 1;
    }
    m.into_values().unzip()
}

/// Two-sample chi-square on categorical data.
pub fn chi2_categorical<K: Ord + Clone>(a: &[K], b: &[K]) -> Result<Chi2Result> {
    let (x, y) = histograms(a, b);
    chi2_two_sample(&x, &y)
}

/// `z`-score of `k` successes out of `n` against success probability `p`.
pub fn binomial_z(k: u64, n: u64, p: f64) -> f64 {
    let nf = n as f64;
    let sd = (nf * p * (1.0 - p)).sqrt();
    let diff = k as f64 - nf * p;
    if sd == 0.0 {
        return if diff == 0.0 { 0.0 } else { f64::INFINITY };
    }
    diff / sd
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Exp};

    #[test]
    fn ks_exact_quantiles() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let r = ks_one(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((r.statistic - 0.5 / n as f64).abs() < 1e-12);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn ks_power() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let e = Exp::new(1.0).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| e.sample(&mut rng)).collect();
        let right = ks_one(&xs, |x| 1.0 - (-x).exp()).unwrap();
        assert!(right.p_value > 0.001);
        let wrong = ks_one(&xs, |x| 1.0 - (-2.0 * x).exp()).unwrap();
        assert!(wrong.p_value < 1e-6);
    }

    #[test]
    fn ks_two_sample() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let e = Exp::new(1.0).unwrap();
        let a: Vec<f64> = (0..5000).map(|_| e.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..7000).map(|_| e.sample(&mut rng)).collect();
        assert!(ks_two(&a, &b).unwrap().p_value > 0.001);
        let c: Vec<f64> = b.iter().map(|x| x * 1.3).collect();
        assert!(ks_two(&a, &c).unwrap().p_value < 1e-6);
        assert!(matches!(ks_two(&a, &[1.0; 200]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn fair_coin() {
        let r = chi2_gof(&[50010, 49990], &[0.5, 0.5]).unwrap();
        assert!((r.statistic - 0.004).abs() < 1e-12);
        // 2(1 − Φ(√0.004))
        assert!((r.p_value - 0.949571).abs() < 1e-5, "{}", r.p_value);
    }

    #[test]
    fn pooling() {
        let r = chi2_gof(&[500, 300, 150, 40, 6, 3, 1], &[0.5, 0.3, 0.15, 0.04, 0.006, 0.003, 0.001]).unwrap();
        assert_eq!(r.cells, 5);
        assert!(r.p_value > 0.99);
        assert!(matches!(chi2_two_sample(&[100, 0, 2], &[100, 0, 1]), Err(Error::Degenerate(_))));
        let r = chi2_two_sample(&[60, 50, 2], &[60, 40, 1]).unwrap();
        assert_eq!(r.cells, 2);
    }

    #[test]
    fn kolmogorov_values() {
        // Q(1.358) ≈ 0.05, Q(1.628) ≈ 0.01
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 5e-4);
    }
}
