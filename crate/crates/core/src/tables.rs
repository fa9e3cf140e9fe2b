//! Graded grids and log-space cumulative tables of
//! `I_n(r) = int_0^r f^{n-1}` and `K_n(r) = int_0^r I_n^2 / f^{n-1}`.
//!
//! Only the left half `[0, L/2]` is built, in pole-distance coordinates, and
//! mirrored. Every segment integral uses a Gauss-Legendre rule after a change
//! of variables that flattens the exponential chord of the integrand, so the
//! rule only sees the bounded residual curvature.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::error::{domain, LabError, Result};
use crate::quad::{lde, ln_int_exp, lse, SegmentPoints};
use crate::weights::{WeightFamily, WeightFn};

pub const DEFAULT_BASE_COUNT: usize = 10_000;
pub const WINDOW_FACTOR: f64 = 40.0;
pub const ENDPOINT_MARGIN: f64 = 1e-12;
pub const TABLE_FORMAT: &str = "cutofflab-table v1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ZoneCounts {
    pub pole: usize,
    pub bulk: usize,
    pub window: usize,
    pub equator: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradedGrid {
    half_d: Vec<f64>,
    nodes: Vec<f64>,
    length: f64,
    window_width: f64,
    endpoint_margin: f64,
    base_count: usize,
    zones: ZoneCounts,
}

impl GradedGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Half-width of the refinement window around `L/2`.
    pub fn window_width(&self) -> f64 {
        self.window_width
    }

    pub fn endpoint_margin(&self) -> f64 {
        self.endpoint_margin
    }

    pub fn base_count(&self) -> usize {
        self.base_count
    }

    pub fn zones(&self) -> ZoneCounts {
        self.zones
    }

    /// Index of the node at `L/2`.
    pub fn mid(&self) -> usize {
        self.half_d.len() - 1
    }

    /// Distance from node `i` to the nearest pole, exact on both halves.
    pub fn pole_distance(&self, i: usize) -> f64 {
        let m = self.mid();
        if i <= m {
            self.half_d[i]
        } else {
            self.half_d[2 * m - i]
        }
    }

    pub fn is_right(&self, i: usize) -> bool {
        i > self.mid()
    }

    pub(crate) fn segment(&self, i: usize) -> Seg {
        let m = self.mid();
        if i < m {
            Seg {
                h: self.half_d[i + 1] - self.half_d[i],
                d_lo: self.half_d[i],
                d_hi: self.half_d[i + 1],
                right: false,
            }
        } else {
            let j = 2 * m - i - 1;
            Seg {
                h: self.half_d[j + 1] - self.half_d[j],
                d_lo: self.half_d[j],
                d_hi: self.half_d[j + 1],
                right: true,
            }
        }
    }

    /// Left-half segment carrying the same integral of `f^{n-1}` as segment `i`.
    pub(crate) fn mirror_segment(&self, i: usize) -> usize {
        let m = self.mid();
        if i < m {
            i
        } else {
            2 * m - i - 1
        }
    }

    /// Segment index and in-segment offset of `r` with `nodes[0] <= r < nodes[last]`.
    pub(crate) fn locate(&self, r: f64) -> (usize, f64) {
        let idx = self.nodes.partition_point(|&x| x <= r) - 1;
        let seg = self.segment(idx);
        let off = if seg.right {
            seg.d_hi - (self.length - r)
        } else {
            r - seg.d_lo
        };
        (idx, off.clamp(0.0, seg.h))
    }
}

/// One grid segment in pole-distance coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Seg {
    pub h: f64,
    pub d_lo: f64,
    pub d_hi: f64,
    pub right: bool,
}

impl Seg {
    /// Pole distance at offset `x` from the segment's left end in `s`.
    #[inline]
    pub fn d_at(&self, x: f64) -> f64 {
        if self.right {
            self.d_hi - x
        } else {
            self.d_lo + x
        }
    }
}

/// Builds the graded grid: geometric grading at the poles, a uniform bulk,
/// a fine window of half-width `40 n^{-1/(2+a)}` around `L/2`, and geometric
/// grading into `L/2` when `f` is not smooth there.
pub fn build_grid(w: &WeightFn, n: u32, base_count: usize) -> Result<GradedGrid> {
    if base_count < 1000 {
        return Err(LabError::InvalidParameter(format!(
            "base_count must be >= 1000, got {base_count}"
        )));
    }
    if n < 2 {
        return Err(domain("n", n as f64, "[2, inf)"));
    }
    let l = w.length();
    let half = w.half();
    let nf = n as f64;
    let refine = base_count as f64 / DEFAULT_BASE_COUNT as f64;
    let d0 = ENDPOINT_MARGIN * l;
    let q_pole = (0.25_f64).min(2.0 / nf.sqrt()) / refine;
    let h_bulk = l / base_count as f64;
    let window = (WINDOW_FACTOR * nf.powf(-1.0 / (2.0 + w.alpha()))).min(0.9 * half);
    let window_nodes = (2000.0_f64).max(0.2 * base_count as f64);
    let h_window = window / window_nodes;
    let graded_equator = !w.smooth_at_equator();
    let q_equator = 0.4 / refine;
    let x_min = (1e-9 * h_window).max(1e-13 * l);
    let win_start = half - window;

    let mut zones = ZoneCounts::default();
    let mut half_d = vec![d0];
    let mut d = d0;
    loop {
        let x = half - d;
        let pole = q_pole * d;
        let phi2 = (nf - 1.0) * w.d2_ln_f_pole(d).abs();
        let curv = if phi2 > 0.0 && phi2.is_finite() {
            2.0 / phi2.sqrt() / refine
        } else {
            f64::INFINITY
        };
        let mut h = pole.min(h_bulk).min(curv);
        let mut zone = if pole <= h_bulk.min(curv) { 0 } else { 1 };
        if d >= win_start {
            if h_window < h {
                h = h_window;
                zone = 2;
            }
        } else if d + h > win_start {
            h = win_start - d;
        }
        if graded_equator && q_equator * x < h {
            h = q_equator * x;
            zone = 3;
        }
        let mut next = d + h;
        if graded_equator && x <= x_min {
            next = half;
        } else if !graded_equator && half - d <= 1.5 * h {
            // avoid a sliver at the midpoint
            next = if half - d > h {
                d + 0.5 * (half - d)
            } else {
                half
            };
        }
        if next >= half || next <= d {
            next = half;
        }
        match zone {
            0 => zones.pole += 1,
            1 => zones.bulk += 1,
            2 => zones.window += 1,
            _ => zones.equator += 1,
        }
        half_d.push(next);
        d = next;
        if d >= half {
            break;
        }
    }
    let m = half_d.len() - 1;
    let mut nodes = Vec::with_capacity(2 * m + 1);
    nodes.extend_from_slice(&half_d);
    for j in (0..m).rev() {
        nodes.push(l - half_d[j]);
    }
    Ok(GradedGrid {
        half_d,
        nodes,
        length: l,
        window_width: window,
        endpoint_margin: d0,
        base_count,
        zones,
    })
}

/// Per-segment Hermite moments of `exp(psi)`, scaled by `exp(-psi_ref)`:
/// `[psi_ref, W_a, W_a', W_b, W_b']` against the cubic Hermite basis.
pub(crate) type SegWeights = [f64; 5];

#[derive(Debug)]
pub struct IntegralTable {
    w: WeightFn,
    n: u32,
    key: String,
    grid: GradedGrid,
    lnf: Vec<f64>,
    lni: Vec<f64>,
    lnk: Vec<f64>,
    lni_total: f64,
    ln_norm: f64,
    lnic: Vec<f64>,
    seg_li: Vec<f64>,
    phi: Vec<f64>,
    psi: Vec<f64>,
    dphi: Vec<f64>,
    drift: Vec<f64>,
    weights: OnceLock<Vec<SegWeights>>,
}

impl Clone for IntegralTable {
    fn clone(&self) -> Self {
        let weights = OnceLock::new();
        if let Some(wts) = self.weights.get() {
            let _ = weights.set(wts.clone());
        }
        IntegralTable {
            w: self.w.clone(),
            n: self.n,
            key: self.key.clone(),
            grid: self.grid.clone(),
            lnf: self.lnf.clone(),
            lni: self.lni.clone(),
            lnk: self.lnk.clone(),
            lni_total: self.lni_total,
            ln_norm: self.ln_norm,
            phi: self.phi.clone(),
            lnic: self.lnic.clone(),
            seg_li: self.seg_li.clone(),
            psi: self.psi.clone(),
            dphi: self.dphi.clone(),
            drift: self.drift.clone(),
            weights,
        }
    }
}

impl PartialEq for IntegralTable {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
            && self.n == other.n
            && self.grid == other.grid
            && bits_eq(&self.lnf, &other.lnf)
            && bits_eq(&self.lni, &other.lni)
            && bits_eq(&self.lnk, &other.lnk)
            && self.lni_total.to_bits() == other.lni_total.to_bits()
    }
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// `ln I_n(d)` for small `d`, with the first-order correction from `f''(0)`.
fn head_ln_i(beta: f64, nf: f64, d: f64) -> f64 {
    nf * d.ln() - nf.ln() + (-(nf - 1.0) * nf * beta * d / (nf + 1.0)).ln_1p()
}

/// `ln K_n(d)` for small `d`.
fn head_ln_k(beta: f64, nf: f64, d: f64) -> f64 {
    let c1 = (nf - 1.0) * nf * beta / (nf + 1.0);
    let c = 2.0 * c1 - (nf - 1.0) * beta;
    (nf + 2.0) * d.ln() - (nf + 2.0).ln() - 2.0 * nf.ln()
        + (-c * (nf + 2.0) * d / (nf + 3.0)).ln_1p()
}

pub fn build_table(w: &WeightFn, n: u32, grid: GradedGrid) -> Result<IntegralTable> {
    check_grid(w, &grid)?;
    let lnf = ln_f_nodes(w, &grid)?;
    let seg_li = segment_integrals(w, n, &grid);
    let (lni, lni_total) = forward_ln_i(w, n, &grid, &seg_li);
    let mut table = IntegralTable::assemble(w, n, grid, lnf, lni, Vec::new(), lni_total, seg_li);
    let weights = table.compute_weights();
    table.lnk = forward_ln_k(&table, &weights);
    let _ = table.weights.set(weights);
    Ok(table)
}

pub fn build_default(w: &WeightFn, n: u32) -> Result<IntegralTable> {
    build_table(w, n, build_grid(w, n, DEFAULT_BASE_COUNT)?)
}

fn check_grid(w: &WeightFn, grid: &GradedGrid) -> Result<()> {
    if grid.length != w.length() {
        return Err(LabError::InvalidParameter(
            "grid was built for a different length".into(),
        ));
    }
    let ok = grid.nodes.windows(2).all(|p| p[0] < p[1])
        && grid.nodes[0] > 0.0
        && *grid.nodes.last().unwrap() < grid.length;
    if !ok {
        return Err(LabError::InvalidParameter(
            "grid nodes not strictly inside (0, L)".into(),
        ));
    }
    Ok(())
}

fn ln_f_nodes(w: &WeightFn, grid: &GradedGrid) -> Result<Vec<f64>> {
    (0..grid.len())
        .map(|i| {
            let v = w.ln_f_pole(grid.pole_distance(i));
            if v.is_finite() {
                Ok(v)
            } else {
                Err(LabError::Numerical(format!(
                    "ln f = {v} at interior node {}",
                    grid.nodes[i]
                )))
            }
        })
        .collect()
}

fn segment_integrals(w: &WeightFn, n: u32, grid: &GradedGrid) -> Vec<f64> {
    let c = n as f64 - 1.0;
    (0..grid.mid())
        .into_par_iter()
        .map(|j| {
            let s = grid.segment(j);
            let phi = |x: f64| c * w.ln_f_rel_pole(s.d_at(x));
            let dphi = |x: f64| c * w.log_slope_pole(s.d_at(x));
            ln_int_exp(s.h, phi(0.0), phi(s.h), dphi(0.0), dphi(s.h), phi)
        })
        .collect()
}

fn forward_ln_i(w: &WeightFn, n: u32, grid: &GradedGrid, seg_li: &[f64]) -> (Vec<f64>, f64) {
    let nf = n as f64;
    let head = head_ln_i(beta_of(w), nf, grid.endpoint_margin) - ln_norm(w, n);
    let mut lni = Vec::with_capacity(grid.len());
    lni.push(head);
    for i in 0..grid.len() - 1 {
        let prev = lni[i];
        lni.push(lse(prev, seg_li[grid.mirror_segment(i)]));
    }
    let total = lse(*lni.last().unwrap(), head);
    (lni, total)
}

/// `(n-1) ln f(L/2)`: every stored logarithm of `I_n` and `K_n` is taken
/// relative to `f(L/2)^{n-1}`, which keeps their magnitudes of order `ln n`
/// and their rounding far below the accuracy targets.
pub fn ln_norm(w: &WeightFn, n: u32) -> f64 {
    (n as f64 - 1.0) * w.fmid().ln()
}

fn beta_of(w: &WeightFn) -> f64 {
    -0.5 * w.d2f_pole(0.0)
}

fn forward_ln_k(table: &IntegralTable, weights: &[SegWeights]) -> Vec<f64> {
    let nf = table.n as f64;
    let mut lnk = Vec::with_capacity(table.grid.len());
    lnk.push(head_ln_k(beta_of(&table.w), nf, table.grid.endpoint_margin) - table.ln_norm);
    for (i, wt) in weights.iter().enumerate() {
        let inc = wt[0] + (wt[1] + wt[3]).ln();
        let prev = lnk[i];
        lnk.push(lse(prev, inc));
    }
    lnk
}

impl IntegralTable {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        w: &WeightFn,
        n: u32,
        grid: GradedGrid,
        lnf: Vec<f64>,
        lni: Vec<f64>,
        lnk: Vec<f64>,
        lni_total: f64,
        seg_li: Vec<f64>,
    ) -> Self {
        let len = grid.len();
        let nf = n as f64;
        let head = head_ln_i(beta_of(w), nf, grid.endpoint_margin) - ln_norm(w, n);
        let mut lnic = vec![0.0; len];
        lnic[len - 1] = head;
        for i in (0..len - 1).rev() {
            lnic[i] = lse(lnic[i + 1], seg_li[grid.mirror_segment(i)]);
        }
        let c = nf - 1.0;
        let phi: Vec<f64> = (0..len)
            .map(|i| c * w.ln_f_rel_pole(grid.pole_distance(i)))
            .collect();
        let psi = (0..len).map(|i| 2.0 * lni[i] - phi[i]).collect();
        let dphi: Vec<f64> = (0..len)
            .map(|i| {
                let g = c * w.log_slope_pole(grid.pole_distance(i));
                if grid.is_right(i) {
                    -g
                } else if i == grid.mid() {
                    0.0
                } else {
                    g
                }
            })
            .collect();
        let drift = (0..len)
            .map(|i| 2.0 * (phi[i] - lni[i]).exp() - dphi[i])
            .collect();
        IntegralTable {
            key: w.key(),
            w: w.clone(),
            n,
            grid,
            lnf,
            lni,
            lnk,
            lni_total,
            lnic,
            seg_li,
            ln_norm: ln_norm(w, n),
            phi,
            psi,
            drift,
            dphi,
            weights: OnceLock::new(),
        }
    }

    /// Rebuilds a table from stored `lnI`/`lnK` columns on a regenerated grid.
    pub fn from_parts(
        w: &WeightFn,
        n: u32,
        grid: GradedGrid,
        lni: Vec<f64>,
        lnk: Vec<f64>,
        lni_total: f64,
    ) -> Result<Self> {
        check_grid(w, &grid)?;
        if lni.len() != grid.len() || lnk.len() != grid.len() {
            return Err(LabError::Cache("column length does not match grid".into()));
        }
        let lnf = ln_f_nodes(w, &grid)?;
        let seg_li = segment_integrals(w, n, &grid);
        Ok(Self::assemble(w, n, grid, lnf, lni, lnk, lni_total, seg_li))
    }

    pub fn weight(&self) -> &WeightFn {
        &self.w
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn family_key(&self) -> &str {
        &self.key
    }

    pub fn grid(&self) -> &GradedGrid {
        &self.grid
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn lnf(&self) -> &[f64] {
        &self.lnf
    }

    /// `(n-1) ln f(L/2)`, the offset of every stored `ln I_n`, `ln K_n`.
    pub fn ln_norm(&self) -> f64 {
        self.ln_norm
    }

    /// `ln(I_n / f(L/2)^{n-1})` at the nodes.
    pub fn lni(&self) -> &[f64] {
        &self.lni
    }

    /// `ln(K_n / f(L/2)^{n-1})` at the nodes.
    pub fn lnk(&self) -> &[f64] {
        &self.lnk
    }

    /// `ln(I_n(L) / f(L/2)^{n-1})`.
    pub fn lni_total(&self) -> f64 {
        self.lni_total
    }

    /// `(n-1) ln(f / f(L/2))` at the nodes.
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// `ln((I_n(L) - I_n(s_i)) / f(L/2)^{n-1})`, accumulated from the right end.
    pub fn lnic(&self) -> &[f64] {
        &self.lnic
    }

    /// `psi = 2 ln I_n - (n-1) ln f` (normalised); its derivative is the drift `b_n`.
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    /// The drift `b_n = psi'` at the nodes.
    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    /// `(n-1) f'/f` at the nodes.
    pub fn dphi(&self) -> &[f64] {
        &self.dphi
    }

    pub(crate) fn seg_li(&self, i: usize) -> f64 {
        self.seg_li[self.grid.mirror_segment(i)]
    }

    /// `(n-1) ln(f/f(L/2))` at pole distance `d`.
    pub(crate) fn phi_pole(&self, d: f64) -> f64 {
        (self.n as f64 - 1.0) * self.w.ln_f_rel_pole(d)
    }

    /// Normalised `ln I_n(d)` for `d` below the first node.
    pub(crate) fn head_ln_i(&self, d: f64) -> f64 {
        head_ln_i(beta_of(&self.w), self.n as f64, d) - self.ln_norm
    }

    pub(crate) fn head_ln_k(&self, d: f64) -> f64 {
        head_ln_k(beta_of(&self.w), self.n as f64, d) - self.ln_norm
    }

    /// `ln int` of `f^{n-1}` over `[0, x]` of segment `i`.
    pub(crate) fn partial_lo(&self, i: usize, x: f64) -> f64 {
        let s = self.grid.segment(i);
        let phi = |y: f64| self.phi_pole(s.d_at(y));
        ln_int_exp(
            x,
            phi(0.0),
            phi(x),
            self.dphi_seg(&s, 0.0),
            self.dphi_seg(&s, x),
            phi,
        )
    }

    /// `ln int` of `f^{n-1}` over `[x, h]` of segment `i`.
    pub(crate) fn partial_hi(&self, i: usize, x: f64) -> f64 {
        let s = self.grid.segment(i);
        let phi = |y: f64| self.phi_pole(s.d_at(x + y));
        ln_int_exp(
            s.h - x,
            phi(0.0),
            phi(s.h - x),
            self.dphi_seg(&s, x),
            self.dphi_seg(&s, s.h),
            phi,
        )
    }

    /// `ln I_n` at offset `x` inside segment `i`.
    pub(crate) fn ln_i_local(&self, i: usize, x: f64) -> f64 {
        lse(self.lni[i], self.partial_lo(i, x))
    }

    /// `ln(I_n(L) - I_n)` at offset `x` inside segment `i`.
    pub(crate) fn ln_ic_local(&self, i: usize, x: f64) -> f64 {
        lse(self.lnic[i + 1], self.partial_hi(i, x))
    }

    /// `(n-1) f'/f` at offset `x` of segment `s`, signed along increasing `s`.
    #[inline]
    pub(crate) fn dphi_seg(&self, s: &Seg, x: f64) -> f64 {
        let g = (self.n as f64 - 1.0) * self.w.log_slope_pole(s.d_at(x));
        if s.right {
            -g
        } else {
            g
        }
    }

    pub(crate) fn psi_local(&self, i: usize, x: f64) -> f64 {
        self.psi_drift_local(i, x).0
    }

    /// `(psi, b_n)` at offset `x` inside segment `i`.
    pub(crate) fn psi_drift_local(&self, i: usize, x: f64) -> (f64, f64) {
        let s = self.grid.segment(i);
        let lni = self.ln_i_local(i, x);
        let phi = self.phi_pole(s.d_at(x));
        (
            2.0 * lni - phi,
            2.0 * (phi - lni).exp() - self.dphi_seg(&s, x),
        )
    }

    pub(crate) fn seg_weights(&self) -> &[SegWeights] {
        self.weights.get_or_init(|| self.compute_weights())
    }

    fn compute_weights(&self) -> Vec<SegWeights> {
        (0..self.len() - 1)
            .into_par_iter()
            .map(|i| {
                let s = self.grid.segment(i);
                let (pa, pb) = (self.psi[i], self.psi[i + 1]);
                let psi_ref = pa.max(pb);
                let psi = |x: f64| self.psi_local(i, x);
                let pts = SegmentPoints::plan(s.h, pa, pb, self.drift[i], self.drift[i + 1], psi);
                let mut acc = [psi_ref, 0.0, 0.0, 0.0, 0.0];
                for (x, lw) in pts.iter() {
                    let e = (lw + self.psi_local(i, x) - psi_ref).exp();
                    let (h00, h10, h01, h11) = hermite_basis(x / s.h);
                    acc[1] += e * h00;
                    acc[2] += e * h10 * s.h;
                    acc[3] += e * h01;
                    acc[4] += e * h11 * s.h;
                }
                acc
            })
            .collect()
    }

    /// `ln I_n(r)`; exact at nodes, monotone between them.
    pub fn ln_i(&self, r: f64) -> Result<f64> {
        Ok(self.ln_i_norm(r)? + self.ln_norm)
    }

    /// `ln K_n(r)`; exact at nodes, monotone between them.
    pub fn ln_k(&self, r: f64) -> Result<f64> {
        Ok(self.ln_k_norm(r)? + self.ln_norm)
    }

    /// `ln(I_n(r) / f(L/2)^{n-1})`.
    pub fn ln_i_norm(&self, r: f64) -> Result<f64> {
        let l = self.w.length();
        if !(r > 0.0 && r <= l) {
            return Err(domain("r", r, format!("(0, {l}]")));
        }
        let nodes = self.nodes();
        if r == l {
            return Ok(self.lni_total);
        }
        if r < nodes[0] {
            return Ok(self.head_ln_i(r));
        }
        let last = nodes.len() - 1;
        if r >= nodes[last] {
            if r == nodes[last] {
                return Ok(self.lni[last]);
            }
            return Ok(lde(self.lni_total, self.head_ln_i(l - r)).max(self.lni[last]));
        }
        let (i, x) = self.grid.locate(r);
        Ok(self.ln_i_local(i, x))
    }

    /// `ln(K_n(r) / f(L/2)^{n-1})`.
    pub fn ln_k_norm(&self, r: f64) -> Result<f64> {
        let l = self.w.length();
        if !(r > 0.0 && r < l) {
            return Err(domain("r", r, format!("(0, {l})")));
        }
        let nodes = self.nodes();
        if r < nodes[0] {
            return Ok(self.head_ln_k(r));
        }
        let last = nodes.len() - 1;
        if r == nodes[last] {
            return Ok(self.lnk[last]);
        }
        if r > nodes[last] {
            let d_last = self.grid.endpoint_margin;
            let d = l - r;
            // K' ~ I(L)^2 / d^{n-1} beyond the last node
            let c = self.n as f64 - 1.0;
            let base = 2.0 * self.lni_total + self.ln_norm;
            let inc = if c == 1.0 {
                base + (d_last / d).ln().ln()
            } else {
                base + lde(-(c - 1.0) * d.ln(), -(c - 1.0) * d_last.ln()) - (c - 1.0).ln()
            };
            return Ok(lse(self.lnk[last], inc));
        }
        let (i, x) = self.grid.locate(r);
        let psi = |y: f64| self.psi_local(i, y);
        let (psi_x, b_x) = self.psi_drift_local(i, x);
        Ok(lse(
            self.lnk[i],
            ln_int_exp(x, self.psi[i], psi_x, self.drift[i], b_x, psi),
        ))
    }

    /// Structural checks, reported by name.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut failed = Vec::new();
        // Strict increase is only required where the segment increment is
        // representable next to the running total.
        let representable =
            |total: f64, inc: f64| (inc - total).exp() > 4.0 * f64::EPSILON * total.abs().max(1.0);
        let weights = self.seg_weights();
        let mut lni_ok = true;
        let mut lnk_ok = true;
        for i in 0..self.len() - 1 {
            let (a, b) = (self.lni[i], self.lni[i + 1]);
            lni_ok &= b > a || (b == a && !representable(a, self.seg_li(i)));
            let (a, b) = (self.lnk[i], self.lnk[i + 1]);
            let inc = weights[i][0] + (weights[i][1] + weights[i][3]).ln();
            lnk_ok &= b > a || (b == a && !representable(a, inc));
        }
        if !lni_ok {
            failed.push("lnI strictly increasing".to_string());
        }
        if !lnk_ok {
            failed.push("lnK strictly increasing".to_string());
        }
        let mid = self.grid.mid();
        let sym = ((std::f64::consts::LN_2 + self.lni[mid] - self.lni_total).exp_m1()).abs();
        if !(sym <= 1e-10) {
            failed.push(format!(
                "symmetric total mass (|2 I(L/2)/I(L) - 1| = {sym:e})"
            ));
        }
        if !(self.lni.iter().chain(&self.lnk).all(|v| v.is_finite()) && self.lni_total.is_finite())
        {
            failed.push("finite table entries".to_string());
        }
        failed
    }

    /// Overwrites one `lnI` entry; used to exercise corruption detection.
    #[doc(hidden)]
    pub fn corrupt_for_test(&mut self, i: usize, value: f64) {
        self.lni[i] = value;
    }
}

#[inline]
pub(crate) fn hermite_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

// ---------------------------------------------------------------------------
// Disk cache

fn cache_file_name(key: &str, n: u32, base_count: usize) -> String {
    let safe: String = key
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}__n{n}__b{base_count}__v1.tbl")
}

pub fn write_table(table: &IntegralTable, path: &Path) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = tempfile_in(dir, path)?;
    {
        let mut out = BufWriter::new(fs::File::create(&tmp)?);
        writeln!(out, "{TABLE_FORMAT}")?;
        writeln!(out, "{}", table.key)?;
        writeln!(out, "{}", table.n)?;
        writeln!(out, "{}", table.grid.base_count)?;
        writeln!(out, "{}", table.len())?;
        for i in 0..table.len() {
            writeln!(
                out,
                "{:e} {:e} {:e} {:e}",
                table.nodes()[i],
                table.lnf[i],
                table.lni[i],
                table.lnk[i]
            )?;
        }
        writeln!(out, "total {:e}", table.lni_total)?;
        out.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tempfile_in(dir: &Path, target: &Path) -> Result<PathBuf> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let stem = target
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("table");
    let k = COUNTER.fetch_add(1, Ordering::Relaxed);
    Ok(dir.join(format!(".{stem}.{}.{k}.tmp", std::process::id())))
}

pub fn read_table(path: &Path) -> Result<IntegralTable> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| LabError::Cache(format!("truncated file: missing {what}")))
    };
    let bad = |what: &str| LabError::Cache(format!("malformed {what} in {}", path.display()));
    if next("header")? != TABLE_FORMAT {
        return Err(bad("header"));
    }
    let family: WeightFamily = next("family")?.parse()?;
    let n: u32 = next("n")?.trim().parse().map_err(|_| bad("n"))?;
    let base: usize = next("base_count")?
        .trim()
        .parse()
        .map_err(|_| bad("base_count"))?;
    let count: usize = next("node count")?
        .trim()
        .parse()
        .map_err(|_| bad("node count"))?;
    let w = family.build()?;
    let grid = build_grid(&w, n, base)?;
    if grid.len() != count {
        return Err(LabError::Cache(
            "node count differs from regenerated grid".into(),
        ));
    }
    let mut lni = Vec::with_capacity(count);
    let mut lnk = Vec::with_capacity(count);
    for i in 0..count {
        let row = next("row")?;
        let cols: Vec<f64> = row
            .split_whitespace()
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("row"))?;
        if cols.len() != 4 {
            return Err(bad("row"));
        }
        if cols[0].to_bits() != grid.nodes()[i].to_bits() {
            return Err(LabError::Cache(format!(
                "node {i} differs from regenerated grid"
            )));
        }
        lni.push(cols[2]);
        lnk.push(cols[3]);
    }
    let total_line = next("total")?;
    let total = total_line
        .strip_prefix("total ")
        .and_then(|v| v.trim().parse::<f64>().ok())
        .ok_or_else(|| bad("total"))?;
    IntegralTable::from_parts(&w, n, grid, lni, lnk, total)
}

/// Directory-backed table cache with hit/miss counters.
#[derive(Debug)]
pub struct TableCache {
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl TableCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TableCache {
            dir: dir.into(),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str, n: u32, base_count: usize) -> PathBuf {
        self.dir.join(cache_file_name(key, n, base_count))
    }

    /// Loads a cached table or builds and stores it. Unreadable entries are
    /// rebuilt and overwritten.
    pub fn load_or_build(
        &self,
        w: &WeightFn,
        n: u32,
        base_count: usize,
    ) -> Result<Arc<IntegralTable>> {
        let path = self.path_for(&w.key(), n, base_count);
        if path.exists() {
            if let Ok(t) = read_table(&path) {
                if t.family_key() == w.key() {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(Arc::new(t));
                }
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let table = build_table(w, n, build_grid(w, n, base_count)?)?;
        write_table(&table, &path)?;
        Ok(Arc::new(table))
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn list(&self) -> Result<Vec<PathBuf>> {
        if !self.dir.exists() {
            return Ok(Vec::new());
        }
        let mut out: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "tbl"))
            .collect();
        out.sort();
        Ok(out)
    }

    pub fn clear(&self) -> Result<usize> {
        let files = self.list()?;
        for f in &files {
            fs::remove_file(f)?;
        }
        Ok(files.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{make_power_curvature, make_sphere};
    use std::f64::consts::PI;

    #[test]
    fn grid_structure() {
        let w = make_sphere();
        let g = build_grid(&w, 10_000, 10_000).unwrap();
        assert!((g.window_width() - 0.4).abs() < 1e-12);
        let nodes = g.nodes();
        assert!(nodes.windows(2).all(|p| p[0] < p[1]));
        assert!(nodes[0] > 0.0 && *nodes.last().unwrap() < PI);
        assert_eq!(nodes[g.mid()], PI / 2.0);
        let in_window: Vec<f64> = nodes
            .iter()
            .copied()
            .filter(|s| (s - PI / 2.0).abs() <= g.window_width())
            .collect();
        assert!(in_window.len() >= 4000);
        let max_gap = in_window
            .windows(2)
            .map(|p| p[1] - p[0])
            .fold(0.0, f64::max);
        assert!(max_gap <= g.window_width() / 50.0);
        assert!(build_grid(&w, 10, 999).is_err());
        let small = build_grid(&w, 2, 1000).unwrap();
        assert!(small.nodes().windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn geometric_grading_at_the_pole() {
        let w = make_power_curvature(-0.5, 1.0).unwrap();
        let g = build_grid(&w, 100, 10_000).unwrap();
        let nodes = g.nodes();
        assert!((nodes[0] - 2e-12).abs() < 1e-24);
        for i in 0..20 {
            let r = (nodes[i + 2] - nodes[i + 1]) / (nodes[i + 1] - nodes[i]);
            assert!((1.0 - 1e-9..1.3).contains(&r), "ratio {r}");
        }
        assert!(g.zones().equator > 0);
    }

    #[test]
    fn sphere_n2_closed_forms() {
        let t = build_default(&make_sphere(), 2).unwrap();
        assert!(((t.lni_total() + t.ln_norm()).exp() - 2.0).abs() < 2e-9);
        assert!(t.ln_i(PI / 2.0).unwrap().abs() < 1e-9);
        // K_2(r) = int_0^r (1 - cos)^2 / sin
        let k = |r: f64| r.cos() - 2.0 * r.cos().ln_1p() + 2.0 * 2f64.ln() - 1.0;
        for r in [0.3, 1.0, PI / 2.0, 2.5] {
            let got = t.ln_k(r).unwrap().exp();
            let exact = k(r);
            assert!(
                (got - exact).abs() < 1e-9 * exact,
                "r={r}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn interpolation_is_exact_at_nodes_and_monotone() {
        let t = build_default(&make_power_curvature(0.0, 1.0).unwrap(), 64).unwrap();
        let nodes = t.nodes();
        for i in [0, 5, 100, nodes.len() / 2, nodes.len() - 1] {
            assert_eq!(t.ln_i_norm(nodes[i]).unwrap(), t.lni()[i]);
            assert_eq!(t.ln_k_norm(nodes[i]).unwrap(), t.lnk()[i]);
        }
        for i in (0..nodes.len() - 1).step_by(97) {
            let r = 0.5 * (nodes[i] + nodes[i + 1]);
            let v = t.ln_i_norm(r).unwrap();
            assert!(v >= t.lni()[i] && v <= t.lni()[i + 1]);
            let k = t.ln_k_norm(r).unwrap();
            assert!(k >= t.lnk()[i] && k <= t.lnk()[i + 1]);
        }
        assert_eq!(t.ln_i_norm(2.0).unwrap(), t.lni_total());
        assert!(t.ln_i(0.0).is_err());
        assert_eq!(t.check_invariants(), Vec::<String>::new());
    }

    #[test]
    fn cache_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TableCache::new(dir.path());
        let w = make_power_curvature(-0.5, 1.0).unwrap();
        let built = cache.load_or_build(&w, 32, 1000).unwrap();
        let loaded = cache.load_or_build(&w, 32, 1000).unwrap();
        assert_eq!(cache.hits(), 1);
        assert_eq!(cache.misses(), 1);
        assert_eq!(*built, *loaded);
        assert_eq!(cache.list().unwrap().len(), 1);
        assert_eq!(cache.clear().unwrap(), 1);
        assert!(cache.list().unwrap().is_empty());
    }

    #[test]
    fn corruption_is_detected() {
        let mut t = build_grid(&make_sphere(), 8, 1000)
            .and_then(|g| build_table(&make_sphere(), 8, g))
            .unwrap();
        t.corrupt_for_test(10, t.lni()[9] - 1.0);
        assert!(t.check_invariants().iter().any(|s| s.contains("lnI")));
    }
}
