//! Small numerical kernels: adaptive Gauss-Kronrod quadrature and bisection.

use crate::error::{Error, Result};
use std::collections::BinaryHeap;

/// Relative tolerance used for all quadratures.
pub const QUAD_REL: f64 = 1e-10;
/// Absolute floor used for all quadratures.
pub const QUAD_ABS: f64 = 1e-14;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = hw * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * hw, ((kron - gauss) * hw).abs())
}

struct Panel {
    a: f64,
    b: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel: f64, abs: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, val: v, err: e });
    let (mut total, mut err) = (v, e);
    let mut splits = 0;
    while err > abs.max(rel * total.abs()) {
        if splits > 4000 {
            return Err(Error::Numerical(format!(
                "quadrature on [{a}, {b}] did not converge (estimate {total}, error {err})"
            )));
        }
        let p = heap.pop().expect("nonempty heap");
        let m = 0.5 * (p.a + p.b);
        let (v1, e1) = gk15(&f, p.a, m);
        let (v2, e2) = gk15(&f, m, p.b);
        total += v1 + v2 - p.val;
        err += e1 + e2 - p.err;
        heap.push(Panel { a: p.a, b: m, val: v1, err: e1 });
        heap.push(Panel { a: m, b: p.b, val: v2, err: e2 });
        splits += 1;
        if splits % 64 == 0 {
            // refresh accumulated sums to avoid drift
            total = heap.iter().map(|p| p.val).sum();
            err = heap.iter().map(|p| p.err).sum();
        }
    }
    if !total.is_finite() {
        return Err(Error::Numerical(format!("non-finite integral on [{a}, {b}]")));
    }
    Ok(total)
}

/// Default-tolerance quadrature.
pub fn quad<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    integrate(f, a, b, QUAD_REL, QUAD_ABS)
}

/// Bisection for an increasing sign change: requires `f(lo) < 0 <= f(hi)`
/// (or the reverse when `increasing` is false). Stops when the bracket is
/// narrower than `tol * max(1, |x|)`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64, increasing: bool) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol * mid.abs().max(1.0) || mid <= lo || mid >= hi {
            return mid;
        }
        let v = f(mid);
        if (v >= 0.0) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Outcome of a divergence probe over geometric panels.
#[derive(Debug, Clone, Copy)]
pub struct PanelProbe {
    pub converges: bool,
    /// Partial sum over the probed panels.
    pub partial: f64,
    /// Ratio of the last two panel contributions.
    pub last_ratio: f64,
}

/// Integrates `f` over panels `[x_j, x_{j+1}]` with `x_j = start * factor^j`
/// and declares convergence when the panel contributions shrink
/// geometrically. `factor > 1` probes towards infinity, `factor < 1` towards 0.
pub fn probe_panels<F: Fn(f64) -> f64>(f: F, start: f64, factor: f64, panels: usize) -> Result<PanelProbe> {
    let mut contrib = Vec::with_capacity(panels);
    let mut x = start;
    for _ in 0..panels {
        let y = x * factor;
        let (lo, hi) = if y > x { (x, y) } else { (y, x) };
        contrib.push(integrate(&f, lo, hi, 1e-8, 1e-300)?.abs());
        x = y;
    }
    let partial: f64 = contrib.iter().sum();
    let k = contrib.len();
    let tail: Vec<f64> = contrib[k - 10..].windows(2).map(|w| w[1] / w[0]).collect();
    let last_ratio = tail[tail.len() - 1];
    let converges = tail.iter().all(|r| *r < 0.97);
    Ok(PanelProbe { converges, partial, last_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadrature_smooth_and_singular() {
        assert_relative_eq!(quad(|x| x.exp(), 0.0, 1.0).unwrap(), std::f64::consts::E - 1.0, max_relative = 1e-12);
        assert_relative_eq!(quad(|x: f64| x.powf(-0.5), 0.0, 1.0).unwrap(), 2.0, max_relative = 1e-9);
    }

    #[test]
    fn bisection_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, true);
        assert_relative_eq!(r, 2f64.sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn panels_detect_divergence() {
        assert!(!probe_panels(|u| 1.0 / u, 1.0, 2.0, 40).unwrap().converges);
        assert!(probe_panels(|u: f64| u.powf(-1.5), 1.0, 2.0, 40).unwrap().converges);
        assert!(!probe_panels(|u| 1.0 / u, 1.0, 0.5, 40).unwrap().converges);
    }
}
