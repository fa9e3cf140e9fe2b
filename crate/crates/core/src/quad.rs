//! Log-space quadrature primitives.

use std::sync::OnceLock;

/// `ln(e^a + e^b)`.
#[inline]
pub fn lse(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(e^a - e^b)` for `a >= b`.
#[inline]
pub fn lde(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + (-(b - a).exp_m1()).ln()
}

/// `ln sum exp(x_i)` with a single max shift.
pub fn lse_slice(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + xs.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

/// A real number stored as `sign * exp(ln_mag)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub ln_mag: f64,
    pub sign: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        ln_mag: f64::NEG_INFINITY,
        sign: 0.0,
    };

    pub fn from_parts(ln_mag: f64, sign: f64) -> Self {
        if sign == 0.0 || ln_mag == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            SignedLog {
                ln_mag,
                sign: sign.signum(),
            }
        }
    }

    pub fn from_f64(x: f64) -> Self {
        Self::from_parts(x.abs().ln(), x.signum() * (x != 0.0) as i32 as f64)
    }

    pub fn add(self, other: SignedLog) -> SignedLog {
        if self.sign == 0.0 {
            return other;
        }
        if other.sign == 0.0 {
            return self;
        }
        if self.sign == other.sign {
            return SignedLog::from_parts(lse(self.ln_mag, other.ln_mag), self.sign);
        }
        let (big, small) = if self.ln_mag >= other.ln_mag {
            (self, other)
        } else {
            (other, self)
        };
        if big.ln_mag == small.ln_mag {
            return Self::ZERO;
        }
        SignedLog::from_parts(lde(big.ln_mag, small.ln_mag), big.sign)
    }

    /// `self * exp(shift)`.
    pub fn shifted(self, shift: f64) -> SignedLog {
        SignedLog::from_parts(self.ln_mag + shift, self.sign)
    }

    pub fn to_f64(self) -> f64 {
        self.sign * self.ln_mag.exp()
    }
}

/// Gauss-Legendre rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(m: usize) -> Self {
        assert!(m >= 1);
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        let mf = m as f64;
        for i in 0..m.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(m, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = 0.5 * (1.0 - x);
            nodes[m - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[m - 1 - i] = 0.5 * w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Plain rule on `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * f(a + h * t))
            .sum::<f64>()
            * h
    }
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Order used for all table segment rules.
pub const SEGMENT_ORDER: usize = 12;

pub fn segment_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(SEGMENT_ORDER))
}

/// Gauss-Laguerre rule for `int_0^inf e^{-x} p(x) dx`.
#[derive(Debug, Clone)]
pub struct GaussLaguerre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLaguerre {
    pub fn new(m: usize) -> Self {
        assert!(m >= 2);
        let mf = m as f64;
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => 3.0 / (1.0 + 2.4 * mf),
                1 => z + 15.0 / (1.0 + 2.5 * mf),
                _ => {
                    let ai = (i - 1) as f64;
                    z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
                }
            };
            let mut dl = 0.0;
            let mut l_prev = 0.0;
            for _ in 0..100 {
                let (l, lp, d) = laguerre(m, z);
                dl = d;
                l_prev = lp;
                let dz = l / d;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, lp, d) = laguerre(m, z);
            if d.is_finite() {
                dl = d;
                l_prev = lp;
            }
            nodes[i] = z;
            weights[i] = -1.0 / (dl * mf * l_prev);
        }
        GaussLaguerre { nodes, weights }
    }
}

// Returns (L_m(x), L_{m-1}(x), L_m'(x)).
fn laguerre(m: usize, x: f64) -> (f64, f64, f64) {
    let (mut p1, mut p2) = (1.0, 0.0);
    for j in 0..m {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = ((2.0 * jf + 1.0 - x) * p2 - jf * p3) / (jf + 1.0);
    }
    let d = m as f64 * (p1 - p2) / x;
    (p1, p2, d)
}

pub fn laguerre_rule() -> &'static GaussLaguerre {
    static RULE: OnceLock<GaussLaguerre> = OnceLock::new();
    RULE.get_or_init(|| GaussLaguerre::new(SEGMENT_ORDER))
}

/// Drop (in e-folds) below which a segment is integrated by one affine rule.
const AFFINE_EFOLDS: f64 = 12.0;
/// Decay (in e-folds from the heavy end) beyond which the Laguerre rule is used.
const LAGUERRE_EFOLDS: f64 = 45.0;
/// E-folds per piece of the composite rule.
const PIECE_EFOLDS: f64 = 8.0;
const MAX_POINTS: usize = 96;

/// Quadrature points `(offset, ln weight)` for `int_0^h exp(g)`.
#[derive(Debug, Clone)]
pub struct SegmentPoints {
    xs: [f64; MAX_POINTS],
    lw: [f64; MAX_POINTS],
    len: usize,
}

impl SegmentPoints {
    fn empty() -> Self {
        SegmentPoints {
            xs: [0.0; MAX_POINTS],
            lw: [0.0; MAX_POINTS],
            len: 0,
        }
    }

    fn push_affine(&mut self, a: f64, b: f64) {
        let rule = segment_rule();
        let h = b - a;
        for j in 0..rule.len() {
            self.xs[self.len] = a + h * rule.nodes[j];
            self.lw[self.len] = (rule.weights[j] * h).ln();
            self.len += 1;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs[..self.len]
            .iter()
            .copied()
            .zip(self.lw[..self.len].iter().copied())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Chooses a rule for `exp(g)` on `[0, h]` from the endpoint values and
    /// slopes of `g`:
    ///
    /// * a single Gauss-Legendre rule when `g` drops by at most 12 e-folds;
    /// * Gauss-Laguerre in the distance from the heavier end when `g` falls
    ///   by at least 45 e-folds at the rate of its endpoint slope, so that the
    ///   remaining factor `exp(g + lambda v)` is smooth and nearly flat;
    /// * otherwise Gauss-Legendre on consecutive 8-e-fold pieces, walking
    ///   away from the heavy end until the integrand is negligible.
    pub fn plan(
        h: f64,
        g_lo: f64,
        g_hi: f64,
        dg_lo: f64,
        dg_hi: f64,
        g: impl Fn(f64) -> f64,
    ) -> Self {
        let mut pts = SegmentPoints::empty();
        if !(h > 0.0) {
            return pts;
        }
        let c = g_hi - g_lo;
        let heavy_hi = c >= 0.0;
        let slope = if heavy_hi { dg_hi } else { -dg_lo };
        let chord = c.abs() / h;
        if !c.is_finite() || (c.abs() <= AFFINE_EFOLDS && !(slope * h > AFFINE_EFOLDS)) {
            pts.push_affine(0.0, h);
            return pts;
        }
        let lam = if slope.is_finite() && slope > 0.0 {
            slope
        } else {
            chord
        };
        if lam * h >= LAGUERRE_EFOLDS && lam >= 0.5 * chord {
            let rule = laguerre_rule();
            for j in 0..rule.nodes.len() {
                let v = rule.nodes[j] / lam;
                pts.xs[pts.len] = if heavy_hi { h - v } else { v };
                // the rule integrates e^{-x}; restore it and the Jacobian
                pts.lw[pts.len] = rule.weights[j].ln() + rule.nodes[j] - lam.ln();
                pts.len += 1;
            }
            return pts;
        }
        let step = PIECE_EFOLDS / lam.max(chord);
        let g_heavy = if heavy_hi { g_hi } else { g_lo };
        let mut v0 = 0.0;
        while pts.len + SEGMENT_ORDER <= MAX_POINTS {
            let v1 = (v0 + step).min(h);
            let last = pts.len + 2 * SEGMENT_ORDER > MAX_POINTS;
            let v1 = if last { h } else { v1 };
            if heavy_hi {
                pts.push_affine(h - v1, h - v0);
            } else {
                pts.push_affine(v0, v1);
            }
            if v1 >= h {
                break;
            }
            let g_far = g(if heavy_hi { h - v1 } else { v1 });
            if g_far < g_heavy - LAGUERRE_EFOLDS {
                break;
            }
            v0 = v1;
        }
        pts
    }
}

/// `ln int_0^h exp(g(x)) dx`; `g` takes the offset from the segment start
/// and `dg_lo`, `dg_hi` are `g'(0)`, `g'(h)`.
pub fn ln_int_exp(
    h: f64,
    g_lo: f64,
    g_hi: f64,
    dg_lo: f64,
    dg_hi: f64,
    g: impl Fn(f64) -> f64,
) -> f64 {
    if !(h > 0.0) {
        return f64::NEG_INFINITY;
    }
    let pts = SegmentPoints::plan(h, g_lo, g_hi, dg_lo, dg_hi, &g);
    let mut terms = [0.0; MAX_POINTS];
    for (k, (x, lw)) in pts.iter().enumerate() {
        terms[k] = lw + g(x);
    }
    lse_slice(&terms[..pts.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        for m in [1, 2, 5, 12, 20] {
            let rule = GaussLegendre::new(m);
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for p in 0..(2 * m) {
                let got = rule.integrate(0.0, 1.0, |x| x.powi(p as i32));
                assert!((got - 1.0 / (p as f64 + 1.0)).abs() < 1e-13, "m={m} p={p}");
            }
        }
    }

    #[test]
    fn exp_mapped_rule_handles_steep_exponentials() {
        for lam in [-5000.0, -30.0, -1e-9, 0.0, 2.0, 700.0, 1e5] {
            let h = 0.01;
            let got = ln_int_exp(h, 0.0, lam * h, lam, lam, |x| lam * x);
            let exact = if lam == 0.0 {
                h.ln()
            } else if lam > 0.0 {
                lam * h + (-(-lam * h).exp_m1() / lam).ln()
            } else {
                ((lam * h).exp_m1() / lam).ln()
            };
            assert!((got - exact).abs() < 1e-13, "lam={lam}: {got} vs {exact}");
        }
    }

    #[test]
    fn exp_mapped_rule_with_curvature() {
        // int_0^h (1 + x)^n dx for large n; residual curvature n h^2 / 2.
        let n = 1e5_f64;
        for (h, tol) in [(3e-3_f64, 1e-13), (1e-2, 1e-9)] {
            let g = |x: f64| n * x.ln_1p();
            let got = ln_int_exp(h, g(0.0), g(h), n, n / (1.0 + h), g);
            let e = (n + 1.0) * h.ln_1p();
            let exact = e + (-(-e).exp_m1()).ln() - (n + 1.0).ln();
            assert!(
                (got - exact).abs() < tol * exact.abs(),
                "h={h}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn signed_log_arithmetic() {
        let a = SignedLog::from_f64(3.0);
        let b = SignedLog::from_f64(-5.0);
        assert!((a.add(b).to_f64() + 2.0).abs() < 1e-14);
        assert_eq!(a.add(SignedLog::from_f64(-3.0)), SignedLog::ZERO);
        assert_eq!(SignedLog::from_f64(0.0), SignedLog::ZERO);
        assert!((a.shifted(2.0_f64.ln()).to_f64() - 6.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn lse_matches_direct(a in -50.0..50.0f64, b in -50.0..50.0f64) {
            let direct = (a.exp() + b.exp()).ln();
            prop_assert!((lse(a, b) - direct).abs() < 1e-12);
            if a > b + 1e-6 {
                let d = (a.exp() - b.exp()).ln();
                prop_assert!((lde(a, b) - d).abs() < 1e-9 * d.abs().max(1.0));
            }
        }

        #[test]
        fn signed_log_sum_matches_f64(x in -1e3..1e3f64, y in -1e3..1e3f64) {
            let s = SignedLog::from_f64(x).add(SignedLog::from_f64(y)).to_f64();
            prop_assert!((s - (x + y)).abs() <= 1e-11 * (x.abs() + y.abs()).max(1.0));
        }
    }
}
