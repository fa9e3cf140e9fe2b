//! Green operator of the radial diffusion absorbed at `L`, and the moments
//! of the absorption time `tau_n`.
//!
//! For `g` on `[0, L]`,
//! `G_n[g](r) = int_r^L f^{n-1}(t)/I_n^2(t) int_0^t I_n^2(s)/f^{n-1}(s) g(s) ds dt`
//! and `E[tau^k] = k! G_n^k[1](0)`. Grid functions carry values and slopes so
//! both integrals can use cubic Hermite data.

use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::quad::{lse, SegmentPoints, SignedLog};
use crate::tables::{hermite_basis, IntegralTable};
use crate::weights::ln_sphere_area;

pub const K_MAX_LIMIT: usize = 20;

/// A grid function with slopes at the nodes and its value at `r = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenIterate {
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
    pub origin: f64,
}

impl GreenIterate {
    pub fn constant(table: &IntegralTable, c: f64) -> Self {
        GreenIterate {
            values: vec![c; table.len()],
            slopes: vec![0.0; table.len()],
            origin: c,
        }
    }

    /// Cubic Hermite evaluation; exact at nodes.
    pub fn eval(&self, table: &IntegralTable, r: f64) -> f64 {
        let nodes = table.nodes();
        let last = nodes.len() - 1;
        if r <= nodes[0] {
            let t = r / nodes[0];
            return self.origin + t * (self.values[0] - self.origin);
        }
        if r >= nodes[last] {
            let d0 = table.weight().length() - nodes[last];
            let t = ((table.weight().length() - r) / d0).clamp(0.0, 1.0);
            return self.values[last] * t * t;
        }
        let (i, x) = table.grid().locate(r);
        let h = table.grid().segment(i).h;
        let (h00, h10, h01, h11) = hermite_basis(x / h);
        h00 * self.values[i]
            + h10 * h * self.slopes[i]
            + h01 * self.values[i + 1]
            + h11 * h * self.slopes[i + 1]
    }
}

/// One application of the Green operator.
pub fn green_apply(table: &IntegralTable, g: &GreenIterate) -> GreenIterate {
    let len = table.len();
    let weights = table.seg_weights();
    let psi = table.psi();
    let drift = table.drift();
    let lnk = table.lnk();
    let d0 = table.grid().endpoint_margin();

    // inner(s) = int_0^s e^psi g, then v = e^{-psi} inner = -(G g)'
    let mut inner = SignedLog::from_f64(g.values[0]).shifted(lnk[0]);
    let mut v = vec![0.0; len];
    v[0] = inner.shifted(-psi[0]).to_f64();
    for i in 0..len - 1 {
        let w = &weights[i];
        let seg = g.values[i] * w[1]
            + g.slopes[i] * w[2]
            + g.values[i + 1] * w[3]
            + g.slopes[i + 1] * w[4];
        inner = inner.add(SignedLog::from_f64(seg).shifted(w[0]));
        v[i + 1] = inner.shifted(-psi[i + 1]).to_f64();
    }
    let dv: Vec<f64> = (0..len).map(|i| g.values[i] - drift[i] * v[i]).collect();

    let mut values = vec![0.0; len];
    values[len - 1] = 0.5 * d0 * v[len - 1];
    for i in (0..len - 1).rev() {
        let h = table.grid().segment(i).h;
        values[i] =
            values[i + 1] + 0.5 * h * (v[i] + v[i + 1]) + h * h / 12.0 * (dv[i] - dv[i + 1]);
    }
    let origin = values[0] + 0.5 * d0 * v[0];
    GreenIterate {
        values,
        slopes: v.into_iter().map(|x| -x).collect(),
        origin,
    }
}

/// `J_n(s) = I_n(s)/f^{n-1}(s) * (I_n(L) - I_n(s))/I_n(L)`.
pub fn j_n(table: &IntegralTable, s: f64) -> Result<f64> {
    let l = table.weight().length();
    if !(s > 0.0 && s < l) {
        return Err(domain("s", s, format!("(0, {l})")));
    }
    let d = if s <= 0.5 * l { s } else { l - s };
    let ln_j =
        table.ln_i_norm(d)? + table.ln_i_norm(l - d)? - table.phi_pole(d) - table.lni_total();
    Ok(ln_j.exp())
}

fn ln_j_nodes(table: &IntegralTable) -> Vec<f64> {
    let (lni, lnic, phi) = (table.lni(), table.lnic(), table.phi());
    (0..table.len())
        .map(|i| lni[i] + lnic[i] - phi[i] - table.lni_total())
        .collect()
}

/// `E[tau_n] = int_0^L J_n = 2 int_0^{L/2} J_n`, with quadrature inside each
/// segment on nested partial integrals.
pub fn mean_tau(table: &IntegralTable) -> f64 {
    let n = table.n() as f64;
    let d0 = table.grid().endpoint_margin();
    let ln_j = ln_j_nodes(table);
    let (lni, lnic, phi, dphi) = (table.lni(), table.lnic(), table.phi(), table.dphi());
    let dlnj = |i: usize| (phi[i] - lni[i]).exp() - (phi[i] - lnic[i]).exp() - dphi[i];
    let mut terms = Vec::with_capacity(table.grid().mid() + 1);
    for i in 0..table.grid().mid() {
        let seg = table.grid().segment(i);
        let g = |x: f64| {
            table.ln_i_local(i, x) + table.ln_ic_local(i, x)
                - table.phi_pole(seg.d_at(x))
                - table.lni_total()
        };
        let pts = SegmentPoints::plan(seg.h, ln_j[i], ln_j[i + 1], dlnj(i), dlnj(i + 1), g);
        let lt: Vec<f64> = pts.iter().map(|(x, lw)| lw + g(x)).collect();
        terms.push(crate::quad::lse_slice(&lt));
    }
    // J(s) ~ s/n below the first node
    terms.push((d0 * d0 / (2.0 * n)).ln());
    2.0 * crate::quad::lse_slice(&terms).exp()
}

/// The mean through the volume identity
/// `(1/Vol(M)) int_0^L Vol(B_s) Vol(B_s^c) / Vol_{n-1}(dB_s) ds`, with the
/// complement volume accumulated from `L` and a Hermite-corrected trapezoid
/// over the full range.
pub fn mean_tau_identity(table: &IntegralTable) -> f64 {
    let n = table.n() as f64;
    let ln_c = ln_sphere_area(table.n());
    let (lni, lnic, phi, dphi) = (table.lni(), table.lnic(), table.phi(), table.dphi());
    let ln_vol_m = ln_c + table.lni_total();
    let vals: Vec<f64> = (0..table.len())
        .map(|i| ((ln_c + lni[i]) + (ln_c + lnic[i]) - ln_vol_m - (ln_c + phi[i])).exp())
        .collect();
    let slopes: Vec<f64> = (0..table.len())
        .map(|i| {
            (lnic[i] - table.lni_total()).exp()
                - (lni[i] - table.lni_total()).exp()
                - dphi[i] * vals[i]
        })
        .collect();
    let d0 = table.grid().endpoint_margin();
    hermite_trapezoid(table, &vals, &slopes) + d0 * d0 / n
}

fn hermite_trapezoid(table: &IntegralTable, vals: &[f64], slopes: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..table.len() - 1 {
        let h = table.grid().segment(i).h;
        acc += 0.5 * h * (vals[i] + vals[i + 1]) + h * h / 12.0 * (slopes[i] - slopes[i + 1]);
    }
    acc
}

/// `u_{n,1} = G_n[1]` with evaluation between nodes.
#[derive(Debug, Clone)]
pub struct U1<'a> {
    table: &'a IntegralTable,
    iterate: GreenIterate,
}

impl<'a> U1<'a> {
    pub fn new(table: &'a IntegralTable) -> Self {
        let iterate = green_apply(table, &GreenIterate::constant(table, 1.0));
        U1 { table, iterate }
    }

    pub fn iterate(&self) -> &GreenIterate {
        &self.iterate
    }

    pub fn at_origin(&self) -> f64 {
        self.iterate.origin
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        let l = self.table.weight().length();
        if !(0.0..=l).contains(&r) {
            return Err(domain("r", r, format!("[0, {l}]")));
        }
        if r == 0.0 {
            return Ok(self.iterate.origin);
        }
        if r == l {
            return Ok(0.0);
        }
        Ok(self.iterate.eval(self.table, r))
    }
}

pub fn u1(table: &IntegralTable, r: f64) -> Result<f64> {
    U1::new(table).value(r)
}

/// `u_{n,1}'(r) = -f^{n-1}(r) K_n(r) / I_n^2(r)`.
pub fn u1_prime(table: &IntegralTable, r: f64) -> Result<f64> {
    let l = table.weight().length();
    if !(0.0..=l).contains(&r) {
        return Err(domain("r", r, format!("[0, {l}]")));
    }
    if r == 0.0 || r == l {
        return Ok(0.0);
    }
    let d = if r <= 0.5 * l { r } else { l - r };
    let phi = table.phi_pole(d);
    Ok(-(phi - 2.0 * table.ln_i_norm(r)? + table.ln_k_norm(r)?).exp())
}

/// `(var_primary, var_expansion)`:
/// `2 int_0^L J_n (u_1')^2` and `2 int_0^L f^{1-n} ((I_n(L)-I_n)/I_n(L))^2 K_n`.
pub fn var_tau(table: &IntegralTable) -> (f64, f64) {
    let it = U1::new(table).iterate;
    var_from_iterate(table, &it)
}

fn var_from_iterate(table: &IntegralTable, it: &GreenIterate) -> (f64, f64) {
    let len = table.len();
    let d0 = table.grid().endpoint_margin();
    let ln_j = ln_j_nodes(table);
    let (lni, lnic, lnk, phi, dphi, drift) = (
        table.lni(),
        table.lnic(),
        table.lnk(),
        table.phi(),
        table.dphi(),
        table.drift(),
    );
    let lt = table.lni_total();

    let mut fv = vec![0.0; len];
    let mut fs = vec![0.0; len];
    let mut yv = vec![0.0; len];
    let mut ys = vec![0.0; len];
    for i in 0..len {
        let j = ln_j[i].exp();
        let dj = (lnic[i] - lt).exp() - (lni[i] - lt).exp() - dphi[i] * j;
        let v = -it.slopes[i];
        let dv = 1.0 - drift[i] * v;
        fv[i] = j * v * v;
        fs[i] = dj * v * v + 2.0 * j * v * dv;
        let y = (2.0 * (lnic[i] - lt) + lnk[i] - phi[i]).exp();
        yv[i] = y;
        ys[i] = -dphi[i] * y - 2.0 * (lnic[i] - 2.0 * lt + lnk[i]).exp() + j * j;
    }
    let heads = |v: &[f64]| 0.25 * d0 * (v[0] + v[len - 1]);
    let primary = 2.0 * (hermite_trapezoid(table, &fv, &fs) + heads(&fv));
    let expansion = 2.0 * (hermite_trapezoid(table, &yv, &ys) + heads(&yv));
    (primary, expansion)
}

/// `E[tau^k]` for `k = 1..=k_max`.
pub fn moment_k(table: &IntegralTable, k_max: usize) -> Result<Vec<f64>> {
    if k_max == 0 {
        return Err(LabError::InvalidParameter("k_max must be >= 1".into()));
    }
    if k_max > K_MAX_LIMIT {
        return Err(LabError::InvalidParameter(format!(
            "k_max = {k_max} exceeds the limit of {K_MAX_LIMIT}"
        )));
    }
    Ok(moment_iterates(table, k_max).0)
}

/// Moments plus the first iterate (for variance and `u_1`).
fn moment_iterates(table: &IntegralTable, k_max: usize) -> (Vec<f64>, GreenIterate) {
    let mut g = GreenIterate::constant(table, 1.0);
    let mut ln_scale = 0.0;
    let mut ln_fact = 0.0;
    let mut out = Vec::with_capacity(k_max);
    let mut first = None;
    for k in 1..=k_max {
        let next = green_apply(table, &g);
        if first.is_none() {
            first = Some(next.clone());
        }
        ln_fact += (k as f64).ln();
        let o = next.origin;
        out.push((ln_fact + ln_scale + o.ln()).exp());
        // renormalise so later iterates stay O(1)
        ln_scale += o.ln();
        g = GreenIterate {
            values: next.values.iter().map(|x| x / o).collect(),
            slopes: next.slopes.iter().map(|x| x / o).collect(),
            origin: 1.0,
        };
    }
    (out, first.expect("k_max >= 1"))
}

pub fn stationary_radial_cdf(table: &IntegralTable, r: f64) -> Result<f64> {
    let l = table.weight().length();
    if !(0.0..=l).contains(&r) {
        return Err(domain("r", r, format!("[0, {l}]")));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok((table.ln_i_norm(r)? - table.lni_total())
        .exp()
        .clamp(0.0, 1.0))
}

/// Chebyshev bound `min(1, Var / (t - E)^2)` on the separation distance.
pub fn tv_bound_from(mean: f64, var: f64, t: f64) -> Result<f64> {
    if !(t > mean) {
        return Err(domain("t", t, format!("({mean}, inf)")));
    }
    Ok((var / ((t - mean) * (t - mean))).min(1.0))
}

pub fn tv_bound(table: &IntegralTable, t: f64) -> Result<f64> {
    let (var, _) = var_tau(table);
    tv_bound_from(mean_tau(table), var, t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n: u32,
    pub family: String,
    pub mean: f64,
    #[serde(skip)]
    pub mean_identity: f64,
    pub mean_identity_resid: f64,
    #[serde(skip)]
    pub u1_origin: f64,
    pub var: f64,
    #[serde(skip)]
    pub var_expansion: f64,
    pub var_resid: f64,
    pub moments: Vec<f64>,
    pub grid_points: usize,
}

impl MomentReport {
    pub fn ratio(&self) -> f64 {
        self.var / (self.mean * self.mean)
    }
}

pub fn moment_report(table: &IntegralTable, k_max: usize) -> Result<MomentReport> {
    if k_max == 0 || k_max > K_MAX_LIMIT {
        return Err(LabError::InvalidParameter(format!(
            "k_max must lie in [1, {K_MAX_LIMIT}], got {k_max}"
        )));
    }
    let (moments, first) = moment_iterates(table, k_max.max(1));
    let mean = mean_tau(table);
    let mean_identity = mean_tau_identity(table);
    let (var, var_expansion) = var_from_iterate(table, &first);
    Ok(MomentReport {
        n: table.n(),
        family: table.family_key().to_string(),
        mean,
        mean_identity,
        mean_identity_resid: (mean - mean_identity).abs() / mean,
        u1_origin: first.origin,
        var,
        var_expansion,
        var_resid: (var - var_expansion).abs() / var,
        moments,
        grid_points: table.len(),
    })
}

/// `ln` of the sum of stored weights; used by tests of the cumulative tables.
#[doc(hidden)]
pub fn ln_k_increment(table: &IntegralTable, i: usize) -> f64 {
    let w = &table.seg_weights()[i];
    lse(w[0] + w[1].ln(), w[0] + w[3].ln())
}
