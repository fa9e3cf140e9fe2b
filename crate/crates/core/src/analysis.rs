//! Separation profiles, dimension sweeps and the cut-off verdict.
//!
//! The verdict uses the second-moment ratio `Var(tau_n)/E[tau_n]^2` from
//! quadrature: it tends to 0 exactly when there is a cut-off. Monte Carlo
//! profiles are illustrative only.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{self, Constants, Regime, RegimePrediction};
use crate::error::{LabError, Result};
use crate::green;
use crate::sde::TauSampleSet;
use crate::stats::{linear_fit, wilson_interval};
use crate::tables::{build_default, IntegralTable, TableCache, DEFAULT_BASE_COUNT};
use crate::weights::{make_power_curvature, WeightFamily, WeightFn};

/// Where sweeps get their tables from.
#[derive(Debug, Clone, Copy)]
pub enum TableSource<'a> {
    Build,
    Cache(&'a TableCache),
}

impl TableSource<'_> {
    pub fn get(&self, w: &WeightFn, n: u32) -> Result<Arc<IntegralTable>> {
        match self {
            TableSource::Build => Ok(Arc::new(build_default(w, n)?)),
            TableSource::Cache(c) => c.load_or_build(w, n, DEFAULT_BASE_COUNT),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub t: f64,
    pub sep_mc: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `min(1, Var/(t - E)^2)` for `t > E[tau]`.
    pub cheb_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub n: u32,
    pub family: String,
    pub rows: Vec<ProfileRow>,
    /// Predicted mixing time (the scale `n^{-2/(2+a)}` when only that is known).
    pub a_n: f64,
    /// `sqrt(Var(tau_n))`.
    pub window: f64,
}

/// 95% Wilson intervals.
const PROFILE_Z: f64 = 1.959_963_984_540_054;

/// Empirical `P[tau > t]` at `times`, with the Chebyshev bound from
/// quadrature moments.
pub fn separation_profile(
    table: &IntegralTable,
    samples: &TauSampleSet,
    times: &[f64],
) -> Result<ProfileTable> {
    if times.is_empty() {
        return Err(LabError::InvalidParameter("empty time list".into()));
    }
    if samples.is_empty() {
        return Err(LabError::InvalidParameter("empty sample set".into()));
    }
    let mean = green::mean_tau(table);
    let (var, _) = green::var_tau(table);
    let mut sorted = samples.samples.clone();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len();
    let rows = times
        .iter()
        .map(|&t| {
            let survivors = total - sorted.partition_point(|x| *x <= t);
            let (ci_lo, ci_hi) = wilson_interval(survivors, total, PROFILE_Z);
            ProfileRow {
                t,
                sep_mc: survivors as f64 / total as f64,
                ci_lo,
                ci_hi,
                cheb_bound: green::tv_bound_from(mean, var, t).ok(),
            }
        })
        .collect();
    Ok(ProfileTable {
        n: table.n(),
        family: table.family_key().to_string(),
        rows,
        a_n: asymptotics::predict_mixing(table.weight(), table.n())?,
        window: var.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Cutoff,
    NoCutoff,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Cutoff => "Cutoff",
            Verdict::NoCutoff => "NoCutoff",
            Verdict::Inconclusive => "Inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Final ratio below which a decreasing sequence counts as a cut-off.
    pub decay: f64,
    /// Relative band around the plateau over the top decade of `n`.
    pub plateau: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            decay: 0.01,
            plateau: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: u32,
    pub mean: f64,
    pub var: f64,
    pub ratio: f64,
    pub predicted_an: f64,
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffVerdict {
    pub family: String,
    pub regime: Regime,
    pub a: f64,
    pub n_list: Vec<u32>,
    pub rows: Vec<SweepRow>,
    pub verdict: Verdict,
    /// Mean ratio over the top decade when the verdict is `NoCutoff`.
    pub plateau: Option<f64>,
    /// Log-log slope of the ratio in `n`.
    pub decay_rate: f64,
    pub thresholds: Thresholds,
}

/// Quadrature moments for each `n`, in parallel.
pub fn sweep_rows(w: &WeightFn, n_list: &[u32], source: TableSource<'_>) -> Result<Vec<SweepRow>> {
    let prediction = asymptotics::predict(w)?;
    n_list
        .par_iter()
        .map(|&n| {
            let table = source.get(w, n)?;
            let mean = green::mean_tau(&table);
            let (var, _) = green::var_tau(&table);
            Ok(SweepRow {
                n,
                mean,
                var,
                ratio: var / (mean * mean),
                predicted_an: prediction.mixing_time(n)?,
                window: var.sqrt(),
            })
        })
        .collect()
}

fn check_n_list(n_list: &[u32]) -> Result<()> {
    if n_list.len() < 4 {
        return Err(LabError::InvalidParameter(format!(
            "need at least 4 values of n, got {}",
            n_list.len()
        )));
    }
    if n_list.windows(2).any(|p| p[1] <= p[0]) || n_list[0] < 2 {
        return Err(LabError::InvalidParameter(
            "n list must be increasing and >= 2".into(),
        ));
    }
    if (*n_list.last().unwrap() as f64) < 100.0 * n_list[0] as f64 {
        return Err(LabError::InvalidParameter(
            "n list must span at least two decades".into(),
        ));
    }
    Ok(())
}

/// Classifies from the ratio sequence: `Cutoff` when it decreases strictly
/// and ends below `decay`; `NoCutoff` when the ratios over the top decade
/// stay within `plateau` of their positive mean; `Inconclusive` otherwise.
pub fn classify_ratios(rows: &[SweepRow], th: Thresholds) -> (Verdict, Option<f64>) {
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let last = *ratios.last().unwrap();
    if ratios.windows(2).all(|p| p[1] < p[0]) && last < th.decay {
        return (Verdict::Cutoff, None);
    }
    let n_top = rows.last().unwrap().n as f64;
    let top: Vec<f64> = rows
        .iter()
        .filter(|r| r.n as f64 >= 0.1 * n_top)
        .map(|r| r.ratio)
        .collect();
    if top.len() >= 2 {
        let plateau = top.iter().sum::<f64>() / top.len() as f64;
        if plateau >= th.decay && top.iter().all(|r| (r / plateau - 1.0).abs() <= th.plateau) {
            return (Verdict::NoCutoff, Some(plateau));
        }
    }
    (Verdict::Inconclusive, None)
}

pub fn cutoff_verdict(w: &WeightFn, n_list: &[u32]) -> Result<CutoffVerdict> {
    cutoff_verdict_with(w, n_list, Thresholds::default(), TableSource::Build)
}

pub fn cutoff_verdict_with(
    w: &WeightFn,
    n_list: &[u32],
    thresholds: Thresholds,
    source: TableSource<'_>,
) -> Result<CutoffVerdict> {
    check_n_list(n_list)?;
    let rows = sweep_rows(w, n_list, source)?;
    Ok(verdict_from_rows(w, rows, thresholds))
}

pub fn verdict_from_rows(
    w: &WeightFn,
    rows: Vec<SweepRow>,
    thresholds: Thresholds,
) -> CutoffVerdict {
    let (verdict, plateau) = classify_ratios(&rows, thresholds);
    let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.ratio.ln()).collect();
    let (decay_rate, _, _) = linear_fit(&x, &y);
    CutoffVerdict {
        family: w.key(),
        regime: asymptotics::classify(w),
        a: w.alpha(),
        n_list: rows.iter().map(|r| r.n).collect(),
        rows,
        verdict,
        plateau,
        decay_rate,
        thresholds,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub a: f64,
    pub m: f64,
    pub regime: Regime,
    pub verdict: Verdict,
    /// Exponent of `E[tau_n]` in `n`; for `a = 0` the exponent of
    /// `E[tau_n]/ln n`.
    pub fitted_exponent: f64,
    pub fit_se: f64,
    pub max_residual: f64,
    /// At least 5 points and all residuals below [`FIT_RESIDUAL_TOL`].
    pub verdict_grade: bool,
    pub predicted_exponent: f64,
    pub log_corrected: bool,
    /// `E[tau_n]` divided by the predicted scale at the largest `n`.
    pub measured_coefficient: f64,
    /// `None` when only the scale is predicted.
    pub predicted_coefficient: Option<f64>,
    pub ratio_final: f64,
}

pub const FIT_RESIDUAL_TOL: f64 = 0.05;

fn coefficient(p: &RegimePrediction) -> Option<f64> {
    match &p.constants {
        Constants::Subcritical { c1 } => Some(*c1),
        Constants::Critical { c2 } => Some(*c2),
        Constants::SupercriticalEven {
            mean_coefficient, ..
        } => Some(*mean_coefficient),
        Constants::SupercriticalScale { .. } => None,
    }
}

/// One row per `a`: verdict, fitted and predicted exponents, and the
/// measured against predicted mean coefficient.
pub fn phase_sweep(
    a_list: &[f64],
    m: f64,
    n_list: &[u32],
    source: TableSource<'_>,
) -> Result<Vec<PhaseRow>> {
    check_n_list(n_list)?;
    for &a in a_list {
        if !(a > -1.0 && a <= 4.0) {
            return Err(crate::error::domain("a", a, "(-1, 4]"));
        }
    }
    a_list
        .iter()
        .map(|&a| {
            let w = make_power_curvature(a, m)?;
            let prediction = asymptotics::predict(&w)?;
            let rows = sweep_rows(&w, n_list, source)?;
            let log_corrected = prediction.regime == Regime::Critical;
            let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
            let y: Vec<f64> = rows
                .iter()
                .map(|r| {
                    let v = if log_corrected {
                        r.mean / (r.n as f64).ln()
                    } else {
                        r.mean
                    };
                    v.ln()
                })
                .collect();
            let (slope, intercept, se) = linear_fit(&x, &y);
            let max_residual = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (b - intercept - slope * a).abs())
                .fold(0.0, f64::max);
            let predicted_exponent = match prediction.regime {
                Regime::Subcritical | Regime::Critical => -1.0,
                Regime::Supercritical => -2.0 / (2.0 + a),
            };
            let last = rows.last().unwrap();
            let nl = last.n as f64;
            let scale = match prediction.regime {
                Regime::Subcritical => 1.0 / nl,
                Regime::Critical => nl.ln() / nl,
                Regime::Supercritical => nl.powf(predicted_exponent),
            };
            let measured_coefficient = last.mean / scale;
            let (verdict, _) = classify_ratios(&rows, Thresholds::default());
            Ok(PhaseRow {
                a,
                m,
                regime: prediction.regime,
                verdict,
                fitted_exponent: slope,
                fit_se: se,
                max_residual,
                verdict_grade: rows.len() >= 5 && max_residual < FIT_RESIDUAL_TOL,
                predicted_exponent,
                log_corrected,
                measured_coefficient,
                predicted_coefficient: coefficient(&prediction),
                ratio_final: last.ratio,
            })
        })
        .collect()
}

/// Sweep CSV: `family,a,m,n,mean,var,ratio,predicted_an,window,verdict`.
pub fn sweep_csv(v: &CutoffVerdict) -> String {
    let (a, m) = match v.family.parse::<WeightFamily>() {
        Ok(WeightFamily::PowerCurvature { a, m }) => (format!("{a:?}"), format!("{m:?}")),
        _ => (format!("{:?}", v.a), String::new()),
    };
    let mut out = String::from("family,a,m,n,mean,var,ratio,predicted_an,window,verdict\n");
    for r in &v.rows {
        out.push_str(&format!(
            "{},{},{},{},{:?},{:?},{:?},{:?},{:?},{}\n",
            v.family, a, m, r.n, r.mean, r.var, r.ratio, r.predicted_an, r.window, v.verdict
        ));
    }
    out
}

/// Profile CSV: `t,sep_mc,ci_lo,ci_hi,cheb_bound` (empty bound for `t <= E[tau]`).
pub fn profile_csv(p: &ProfileTable) -> String {
    let mut out = String::from("t,sep_mc,ci_lo,ci_hi,cheb_bound\n");
    for r in &p.rows {
        let b = r.cheb_bound.map(|b| format!("{b:?}")).unwrap_or_default();
        out.push_str(&format!(
            "{:?},{:?},{:?},{:?},{}\n",
            r.t, r.sep_mc, r.ci_lo, r.ci_hi, b
        ));
    }
    out
}

/// `2^lo, 2^(lo+step), ..., 2^hi`.
pub fn dyadic_list(lo: u32, hi: u32, step: u32) -> Vec<u32> {
    (lo..=hi)
        .step_by(step as usize)
        .map(|e| 1u32 << e)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{sample_tau, Scheme, SimConfig};
    use crate::weights::make_sphere;

    fn row(n: u32, ratio: f64) -> SweepRow {
        SweepRow {
            n,
            mean: 1.0,
            var: ratio,
            ratio,
            predicted_an: 1.0,
            window: ratio.sqrt(),
        }
    }

    #[test]
    fn ratio_classification() {
        let th = Thresholds::default();
        let dec = [
            row(100, 0.1),
            row(1000, 0.03),
            row(10_000, 0.01),
            row(100_000, 0.005),
        ];
        assert_eq!(classify_ratios(&dec, th).0, Verdict::Cutoff);
        let flat = [
            row(100, 0.25),
            row(1000, 0.21),
            row(10_000, 0.2),
            row(100_000, 0.2),
        ];
        let (v, p) = classify_ratios(&flat, th);
        assert_eq!(v, Verdict::NoCutoff);
        assert!((p.unwrap() - 0.2).abs() < 1e-12);
        let odd = [
            row(100, 0.1),
            row(1000, 0.03),
            row(10_000, 0.05),
            row(100_000, 0.02),
        ];
        assert_eq!(classify_ratios(&odd, th).0, Verdict::Inconclusive);
    }

    #[test]
    fn n_list_preconditions() {
        let w = make_sphere();
        assert!(cutoff_verdict(&w, &[256, 1024]).is_err());
        assert!(cutoff_verdict(&w, &[10, 20, 30, 40]).is_err());
        assert!(cutoff_verdict(&w, &[10, 5, 3000, 4000]).is_err());
        assert!(phase_sweep(&[-1.0], 1.0, &dyadic_list(4, 10, 2), TableSource::Build).is_err());
    }

    #[test]
    fn sphere_small_sweep_decreases() {
        let v = cutoff_verdict(&make_sphere(), &dyadic_list(4, 12, 2)).unwrap();
        assert!(v.rows.windows(2).all(|p| p[1].ratio < p[0].ratio));
        assert!(v.decay_rate < 0.0);
        let csv = sweep_csv(&v);
        assert!(csv.starts_with(
            "family,a,m,n,mean,var,ratio,predicted_an,window,verdict\nsphere,0.0,,16,"
        ));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn profile_is_a_survival_function() {
        let w = make_sphere();
        let t = build_default(&w, 16).unwrap();
        let cfg = SimConfig {
            dt_base: 1e-3 / 16.0,
            ..SimConfig::new(&w, 16, Scheme::Autonomous, 300, 5)
        };
        let s = sample_tau(&t, &cfg).unwrap();
        let mean = green::mean_tau(&t);
        let times: Vec<f64> = (0..40).map(|i| i as f64 * mean / 10.0).collect();
        let p = separation_profile(&t, &s, &times).unwrap();
        assert_eq!(p.rows[0].sep_mc, 1.0);
        assert!(p.rows.windows(2).all(|r| r[1].sep_mc <= r[0].sep_mc));
        assert!(p.rows.iter().all(|r| (0.0..=1.0).contains(&r.sep_mc)
            && r.ci_lo <= r.sep_mc
            && r.sep_mc <= r.ci_hi));
        let at_mean = &p.rows[10];
        assert!(at_mean.sep_mc > 0.0 && at_mean.sep_mc < 1.0);
        assert!(at_mean.cheb_bound.is_none() && p.rows[39].cheb_bound.is_some());
        assert!(separation_profile(&t, &s, &[]).is_err());
        assert!(profile_csv(&p).starts_with("t,sep_mc,ci_lo,ci_hi,cheb_bound\n0.0,1.0,"));
    }
}
