//! Monte Carlo for the dual radius
//! `dR = sqrt(2) dB + b_n(R) dt`, `b_n = 2 f^{n-1}/I_n - (n-1) f'/f`,
//! started at the entrance boundary 0 and absorbed near `L`, and for the two
//! couplings of the radial part `rho` of the Brownian motion with a dual
//! radius.
//!
//! Time runs on a dyadic lattice: steps are `dt_base / 2^j`, refined near
//! the boundaries and whenever a step would leave `(0, L)`. Noise comes from
//! a [`BrownianTree`], so runs that differ only in `refine` see the same
//! Brownian path.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::green::U1;
use crate::rng::{keyed_chi, keyed_uniform, mix64, path_seed, BrownianTree};
use crate::stats::{ks_critical_1pct, ks_statistic, mean_var};
use crate::tables::{hermite_basis, IntegralTable};
use crate::weights::{WeightFamily, WeightFn};

/// Default stability factor in the step rule.
pub const DEFAULT_KAPPA: f64 = 0.1;
pub const DEFAULT_MAX_STEPS: u64 = 50_000_000;
/// Finest dyadic level below `dt_base`.
const MAX_LEVEL: u32 = 40;

const ENTRANCE: u64 = 1;
const ENTRANCE_SPLIT: u64 = 2;
const NOISE_A: u64 = 3;
const NOISE_B: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Autonomous,
    FullCoupling,
    FullDecoupling,
}

impl Scheme {
    fn salt(self) -> u64 {
        match self {
            Scheme::Autonomous => 0x6175_746f,
            Scheme::FullCoupling => 0x636f_7570,
            Scheme::FullDecoupling => 0x6465_636f,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Autonomous => "autonomous",
            Scheme::FullCoupling => "full-coupling",
            Scheme::FullDecoupling => "full-decoupling",
        })
    }
}

impl FromStr for Scheme {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autonomous" => Ok(Scheme::Autonomous),
            "full-coupling" | "coupled" => Ok(Scheme::FullCoupling),
            "full-decoupling" | "decoupled" => Ok(Scheme::FullDecoupling),
            _ => Err(LabError::InvalidParameter(format!(
                "unknown scheme `{s}` (autonomous, full-coupling, full-decoupling)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: u32,
    pub family: WeightFamily,
    /// Largest step and the root length of the noise tree.
    pub dt_base: f64,
    /// Paths are absorbed at `L - eps_abs`.
    pub eps_abs: f64,
    pub path_count: u64,
    pub master_seed: u64,
    pub scheme: Scheme,
    /// Step rule `dt = min(dt_base/2^refine, kappa (r/(n+1))^2, kappa ((L-r)/n)^2)`.
    pub kappa: f64,
    /// Runs at `dt_base / 2^refine` on the same Brownian paths.
    pub refine: u32,
    /// Sign of the shared noise in the dual radius of the full coupling.
    pub sigma: f64,
    pub max_steps: u64,
    #[doc(hidden)]
    pub reflect: bool,
}

impl SimConfig {
    /// Defaults: `eps_abs = 1e-4 L`, `dt_base = 1e-4/n`, `kappa = 0.1`.
    pub fn new(w: &WeightFn, n: u32, scheme: Scheme, path_count: u64, master_seed: u64) -> Self {
        SimConfig {
            n,
            family: w.family(),
            dt_base: 1e-4 / n as f64,
            eps_abs: 1e-4 * w.length(),
            path_count,
            master_seed,
            scheme,
            kappa: DEFAULT_KAPPA,
            refine: 0,
            sigma: 1.0,
            max_steps: DEFAULT_MAX_STEPS,
            reflect: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.family.build()?.length();
        if self.n < 2 {
            return Err(domain("n", self.n as f64, "[2, inf)"));
        }
        if !(self.eps_abs > 0.0 && self.eps_abs < 0.1 * l) {
            return Err(domain("eps_abs", self.eps_abs, format!("(0, {})", 0.1 * l)));
        }
        if !(self.dt_base > 0.0 && self.dt_base.is_finite()) {
            return Err(domain("dt_base", self.dt_base, "(0, inf)"));
        }
        if self.path_count < 1 {
            return Err(LabError::InvalidParameter("path_count must be >= 1".into()));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(domain("kappa", self.kappa, "(0, 1]"));
        }
        if self.sigma != 1.0 && self.sigma != -1.0 {
            return Err(domain("sigma", self.sigma, "{-1, 1}"));
        }
        if self.refine > 20 {
            return Err(domain("refine", self.refine as f64, "[0, 20]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSampleSet {
    pub config: SimConfig,
    /// Raw hitting times of `L - eps_abs`.
    pub samples: Vec<f64>,
    /// `u_1(L - eps_abs)`, the mean remaining time to `L`.
    pub bias_correction: f64,
    /// Steps at which a coupled dual radius fell below `rho` by more than
    /// the discretisation tolerance.
    pub containment_violations: u64,
    pub max_containment_gap: f64,
}

impl TauSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn raw_mean(&self) -> f64 {
        mean_var(&self.samples).0
    }

    /// Bias-corrected mean.
    pub fn mean(&self) -> f64 {
        self.raw_mean() + self.bias_correction
    }

    pub fn variance(&self) -> f64 {
        mean_var(&self.samples).1
    }

    pub fn se(&self) -> f64 {
        (self.variance() / self.samples.len() as f64).sqrt()
    }

    /// Seed of path `i`.
    pub fn path_seed(&self, i: u64) -> u64 {
        path_seed(self.config.master_seed ^ self.config.scheme.salt(), i)
    }

    /// `path_id,tau_raw` rows in round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path_id,tau_raw\n");
        for (i, t) in self.samples.iter().enumerate() {
            out.push_str(&format!("{i},{t:?}\n"));
        }
        out
    }

    pub fn sidecar(&self) -> SampleSidecar {
        SampleSidecar {
            n: self.config.n,
            family: self.config.family.key(),
            scheme: self.config.scheme,
            paths: self.config.path_count,
            seed: self.config.master_seed,
            eps_abs: self.config.eps_abs,
            dt_base: self.config.dt_base,
            bias_correction: self.bias_correction,
            mean: self.mean(),
            se: self.se(),
        }
    }
}

/// Metadata written next to a samples CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub n: u32,
    pub family: String,
    pub scheme: Scheme,
    pub paths: u64,
    pub seed: u64,
    pub eps_abs: f64,
    pub dt_base: f64,
    pub bias_correction: f64,
    pub mean: f64,
    pub se: f64,
}

/// `b_n(r)` from the table: `2 exp((n-1) ln f - ln I_n) - (n-1) f'/f`, and
/// `(n+1)/r` below the first node.
pub fn drift(table: &IntegralTable, r: f64) -> Result<f64> {
    let w = table.weight();
    let l = w.length();
    if !(r > 0.0 && r < l) {
        return Err(domain("r", r, format!("(0, {l})")));
    }
    if r < table.nodes()[0] {
        return Ok((table.n() as f64 + 1.0) / r);
    }
    let d = if r <= 0.5 * l { r } else { l - r };
    let e = (table.phi_pole(d) - table.ln_i_norm(r)?).exp();
    Ok(2.0 * e - (table.n() as f64 - 1.0) * log_slope(w, r))
}

/// Signed `f'/f`.
fn log_slope(w: &WeightFn, r: f64) -> f64 {
    let h = w.half();
    if r <= h {
        w.log_slope_pole(r)
    } else {
        -w.log_slope_pole(w.length() - r)
    }
}

/// Cubic Hermite interpolant of `b_n` on the table nodes with analytic
/// slopes; the fast path for simulation.
#[derive(Debug, Clone)]
pub struct DriftInterp<'a> {
    table: &'a IntegralTable,
    b: Vec<f64>,
    db: Vec<f64>,
}

impl<'a> DriftInterp<'a> {
    pub fn new(table: &'a IntegralTable) -> Self {
        let w = table.weight();
        let nm1 = table.n() as f64 - 1.0;
        let (phi, lni, dphi) = (table.phi(), table.lni(), table.dphi());
        let b = table.drift().to_vec();
        let len = b.len();
        let mut db = vec![0.0; len];
        for i in 0..len {
            let d = table.grid().pole_distance(i);
            let e = (phi[i] - lni[i]).exp();
            let ls = dphi[i] / nm1;
            let v = 2.0 * e * (dphi[i] - e) - nm1 * (w.d2f_pole(d) / w.f_pole(d) - ls * ls);
            db[i] = v;
        }
        for i in 0..len {
            if !db[i].is_finite() {
                let nodes = table.nodes();
                let (lo, hi) = (i.saturating_sub(1), (i + 1).min(len - 1));
                db[i] = (b[hi] - b[lo]) / (nodes[hi] - nodes[lo]);
            }
        }
        DriftInterp { table, b, db }
    }

    /// `r` must lie in `(0, L)`.
    pub fn eval(&self, r: f64) -> f64 {
        let nodes = self.table.nodes();
        if r < nodes[0] {
            return (self.table.n() as f64 + 1.0) / r;
        }
        if r >= nodes[nodes.len() - 1] {
            return drift(self.table, r).unwrap_or(f64::INFINITY);
        }
        let (i, x) = self.table.grid().locate(r);
        let h = self.table.grid().segment(i).h;
        let (h00, h10, h01, h11) = hermite_basis(x / h);
        h00 * self.b[i] + h10 * h * self.db[i] + h01 * self.b[i + 1] + h11 * h * self.db[i + 1]
    }
}

struct PathRunner<'a> {
    cfg: &'a SimConfig,
    w: &'a WeightFn,
    drift: DriftInterp<'a>,
    n: f64,
    l: f64,
    target: f64,
}

#[derive(Default)]
struct PathOut {
    tau: f64,
    violations: u64,
    max_gap: f64,
}

/// Ticks of the finest level per `dt_base`.
const ROOT_TICKS: u64 = 1 << MAX_LEVEL;

impl<'a> PathRunner<'a> {
    fn base_dt(&self) -> f64 {
        self.cfg.dt_base * 0.5f64.powi(self.cfg.refine as i32)
    }

    fn limit(&self, r: f64) -> f64 {
        let k = self.cfg.kappa;
        (k * (r / (self.n + 1.0)).powi(2)).min(k * ((self.l - r) / self.n).powi(2))
    }

    fn level_for(&self, desired: f64, ticks: u64) -> u32 {
        let mut j = self.cfg.refine;
        if desired < self.base_dt() {
            let extra = (self.cfg.dt_base / desired).log2().ceil() as u32;
            j = j.max(extra);
        }
        j = j.min(MAX_LEVEL);
        while ticks & ((1u64 << (MAX_LEVEL - j)) - 1) != 0 {
            j += 1;
        }
        j
    }

    fn dt(&self, j: u32) -> f64 {
        self.cfg.dt_base * 0.5f64.powi(j as i32)
    }

    fn budget(&self, path: u64) -> LabError {
        LabError::StepBudget {
            path,
            budget: self.cfg.max_steps,
        }
    }

    fn exhausted(&self, path: u64) -> LabError {
        LabError::Numerical(format!(
            "path {path}: step refinement exhausted below dt_base/2^{MAX_LEVEL}"
        ))
    }

    fn start_ticks(&self) -> u64 {
        ROOT_TICKS >> self.cfg.refine
    }

    fn time(&self, ticks: u64) -> f64 {
        (ticks as f64 / ROOT_TICKS as f64) * self.cfg.dt_base
    }

    fn entrance(&self, seed: u64) -> f64 {
        (2.0 * self.base_dt()).sqrt() * keyed_chi(seed, ENTRANCE, 0, self.n + 2.0)
    }

    fn autonomous(&self, path: u64, seed: u64) -> Result<PathOut> {
        let tree = BrownianTree::new(mix64(seed ^ NOISE_A), self.cfg.dt_base);
        let mut r = self.entrance(seed);
        let mut ticks = self.start_ticks();
        let mut steps = 0u64;
        let s2 = std::f64::consts::SQRT_2;
        while r < self.target {
            let mut j = self.level_for(self.base_dt().min(self.limit(r)), ticks);
            let b = self.drift.eval(r);
            loop {
                steps += 1;
                if steps > self.cfg.max_steps {
                    return Err(self.budget(path));
                }
                let dw = tree.increment(j, ticks >> (MAX_LEVEL - j));
                let next = r + b * self.dt(j) + s2 * dw;
                if next > 0.0 {
                    r = next;
                    break;
                }
                j += 1;
                if j > MAX_LEVEL {
                    return Err(self.exhausted(path));
                }
            }
            ticks = ticks
                .checked_add(1u64 << (MAX_LEVEL - j))
                .ok_or_else(|| self.budget(path))?;
        }
        Ok(PathOut {
            tau: self.time(ticks),
            ..Default::default()
        })
    }

    fn coupled(&self, path: u64, seed: u64, shared: bool) -> Result<PathOut> {
        let tree_a = BrownianTree::new(mix64(seed ^ NOISE_A), self.cfg.dt_base);
        let tree_b = BrownianTree::new(mix64(seed ^ NOISE_B), self.cfg.dt_base);
        // rho given the dual radius is distributed like f^{n-1} on [0, R],
        // i.e. R U^{1/n} near the origin
        let mut big = self.entrance(seed);
        let mut rho = big * keyed_uniform(seed, ENTRANCE_SPLIT, 0).powf(1.0 / self.n);
        let mut ticks = self.start_ticks();
        let mut steps = 0u64;
        let mut out = PathOut::default();
        let s2 = std::f64::consts::SQRT_2;
        let nm1 = self.n - 1.0;
        while big < self.target {
            let desired = self.base_dt().min(self.limit(rho)).min(self.limit(big));
            let mut j = self.level_for(desired, ticks);
            let (ls_rho, ls_big) = (log_slope(self.w, rho), log_slope(self.w, big));
            loop {
                steps += 1;
                if steps > self.cfg.max_steps {
                    return Err(self.budget(path));
                }
                let idx = ticks >> (MAX_LEVEL - j);
                let dt = self.dt(j);
                let db = tree_a.increment(j, idx);
                let rho_next = rho + nm1 * ls_rho * dt + s2 * db;
                let big_next = if shared {
                    big + nm1 * (2.0 * ls_rho - ls_big) * dt + self.cfg.sigma * s2 * db
                } else {
                    let cand = big - nm1 * ls_big * dt - s2 * tree_b.increment(j, idx);
                    if self.cfg.reflect {
                        cand.max(rho_next)
                    } else {
                        cand
                    }
                };
                if rho_next > 0.0 && rho_next < self.l && big_next > 0.0 {
                    rho = rho_next;
                    big = big_next;
                    break;
                }
                j += 1;
                if j > MAX_LEVEL {
                    return Err(self.exhausted(path));
                }
            }
            ticks = ticks
                .checked_add(1u64 << (MAX_LEVEL - j))
                .ok_or_else(|| self.budget(path))?;
            let gap = rho - big;
            if gap > 1e-9 * self.l {
                out.violations += 1;
                out.max_gap = out.max_gap.max(gap);
            }
        }
        out.tau = self.time(ticks);
        Ok(out)
    }
}

fn check_table(table: &IntegralTable, cfg: &SimConfig) -> Result<()> {
    cfg.validate()?;
    if table.n() != cfg.n || table.family_key() != cfg.family.key() {
        return Err(LabError::InvalidParameter(format!(
            "table is for {} n={}, config asks for {} n={}",
            table.family_key(),
            table.n(),
            cfg.family.key(),
            cfg.n
        )));
    }
    Ok(())
}

fn run(table: &IntegralTable, cfg: &SimConfig) -> Result<TauSampleSet> {
    check_table(table, cfg)?;
    let w = table.weight();
    let runner = PathRunner {
        cfg,
        w,
        drift: DriftInterp::new(table),
        n: cfg.n as f64,
        l: w.length(),
        target: w.length() - cfg.eps_abs,
    };
    let salt = cfg.master_seed ^ cfg.scheme.salt();
    let outs: Vec<PathOut> = (0..cfg.path_count)
        .into_par_iter()
        .map(|p| {
            let seed = path_seed(salt, p);
            match cfg.scheme {
                Scheme::Autonomous => runner.autonomous(p, seed),
                Scheme::FullCoupling => runner.coupled(p, seed, true),
                Scheme::FullDecoupling => runner.coupled(p, seed, false),
            }
        })
        .collect::<Result<_>>()?;
    let bias_correction = U1::new(table).value(w.length() - cfg.eps_abs)?;
    Ok(TauSampleSet {
        config: cfg.clone(),
        samples: outs.iter().map(|o| o.tau).collect(),
        bias_correction,
        containment_violations: outs.iter().map(|o| o.violations).sum(),
        max_containment_gap: outs.iter().map(|o| o.max_gap).fold(0.0, f64::max),
    })
}

fn require(cfg: &SimConfig, scheme: Scheme) -> Result<()> {
    if cfg.scheme != scheme {
        return Err(LabError::InvalidParameter(format!(
            "expected scheme {scheme}, config has {}",
            cfg.scheme
        )));
    }
    Ok(())
}

pub fn sample_tau(table: &IntegralTable, cfg: &SimConfig) -> Result<TauSampleSet> {
    require(cfg, Scheme::Autonomous)?;
    run(table, cfg)
}

pub fn sample_tau_coupled(table: &IntegralTable, cfg: &SimConfig) -> Result<TauSampleSet> {
    require(cfg, Scheme::FullCoupling)?;
    run(table, cfg)
}

pub fn sample_tau_reflected(table: &IntegralTable, cfg: &SimConfig) -> Result<TauSampleSet> {
    require(cfg, Scheme::FullDecoupling)?;
    run(table, cfg)
}

/// Dispatches on `cfg.scheme`.
pub fn sample(table: &IntegralTable, cfg: &SimConfig) -> Result<TauSampleSet> {
    run(table, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTrial {
    pub sigma: f64,
    /// KS statistic against the autonomous sample; `None` if the run failed.
    pub ks: Option<f64>,
    pub error: Option<String>,
    pub containment_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSelection {
    /// The sign with the smallest KS statistic, if that is below the
    /// critical value.
    pub sigma: Option<f64>,
    pub trials: Vec<SignTrial>,
    pub critical: f64,
}

/// Runs the full coupling with both signs of the shared noise and compares
/// each against the autonomous dual radius by the two-sample KS test. A sign
/// whose paths fail (for instance by collapsing onto the origin) is recorded
/// with its error and rejected.
pub fn select_coupling_sign(table: &IntegralTable, base: &SimConfig) -> Result<CouplingSelection> {
    let auto = sample_tau(
        table,
        &SimConfig {
            scheme: Scheme::Autonomous,
            ..base.clone()
        },
    )?;
    let mut trials = Vec::new();
    for sigma in [1.0, -1.0] {
        let cfg = SimConfig {
            scheme: Scheme::FullCoupling,
            sigma,
            ..base.clone()
        };
        trials.push(match sample_tau_coupled(table, &cfg) {
            Ok(s) => SignTrial {
                sigma,
                ks: Some(ks_statistic(&auto.samples, &s.samples)),
                error: None,
                containment_violations: s.containment_violations,
            },
            Err(e) => SignTrial {
                sigma,
                ks: None,
                error: Some(e.to_string()),
                containment_violations: 0,
            },
        });
    }
    let critical = ks_critical_1pct(auto.len(), base.path_count as usize);
    let best = trials
        .iter()
        .filter_map(|t| t.ks.map(|d| (t.sigma, d)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    Ok(CouplingSelection {
        sigma: best.filter(|(_, d)| *d < critical).map(|(s, _)| s),
        trials,
        critical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::build_default;
    use crate::weights::{make_power_curvature, make_sphere};
    use std::f64::consts::PI;

    #[test]
    fn drift_examples() {
        let t3 = build_default(&make_sphere(), 3).unwrap();
        assert!((drift(&t3, 1e-6).unwrap() * 1e-6 - 4.0).abs() < 1e-4);
        let t2 = build_default(&make_sphere(), 2).unwrap();
        assert!((drift(&t2, PI / 2.0).unwrap() - 2.0).abs() < 1e-10);
        let mut prev = 0.0;
        for d in [1e-1, 1e-2, 1e-3, 1e-5] {
            let b = drift(&t3, PI - d).unwrap();
            assert!(b > prev);
            assert!((b * d / 2.0 - 1.0).abs() < 0.05, "d={d}: {}", b * d);
            prev = b;
        }
        assert!(drift(&t3, 0.0).is_err() && drift(&t3, PI).is_err());
    }

    #[test]
    fn interpolated_drift_matches_exact() {
        for w in [
            make_sphere(),
            make_power_curvature(-0.5, 1.0).unwrap(),
            make_power_curvature(2.0, 1.0).unwrap(),
        ] {
            let t = build_default(&w, 8).unwrap();
            let fast = DriftInterp::new(&t);
            for k in 1..200 {
                let r = w.length() * k as f64 / 200.0 + 1e-3;
                if r >= w.length() {
                    continue;
                }
                let (a, b) = (fast.eval(r), drift(&t, r).unwrap());
                assert!(
                    (a - b).abs() < 1e-6 * (1.0 + b.abs()),
                    "{} r={r}: {a} vs {b}",
                    w.key()
                );
            }
        }
    }

    fn small_cfg(w: &WeightFn, n: u32, scheme: Scheme, paths: u64) -> SimConfig {
        SimConfig {
            dt_base: 1e-3 / n as f64,
            ..SimConfig::new(w, n, scheme, paths, 9)
        }
    }

    #[test]
    fn config_validation() {
        let w = make_sphere();
        let t = build_default(&w, 4).unwrap();
        let mut c = small_cfg(&w, 4, Scheme::Autonomous, 0);
        assert!(sample_tau(&t, &c).is_err());
        c.path_count = 3;
        c.eps_abs = 0.5;
        assert!(c.validate().is_err());
        c.eps_abs = 1e-3;
        c.dt_base = 0.0;
        assert!(c.validate().is_err());
        c.dt_base = 1e-4;
        assert!(sample_tau_coupled(&t, &c).is_err());
        c.n = 5;
        assert!(sample_tau(&t, &c).is_err());
        assert_eq!(
            "full-decoupling".parse::<Scheme>().unwrap(),
            Scheme::FullDecoupling
        );
        assert!("nope".parse::<Scheme>().is_err());
    }

    #[test]
    fn deterministic_and_positive() {
        let w = make_sphere();
        let t = build_default(&w, 6).unwrap();
        for scheme in [
            Scheme::Autonomous,
            Scheme::FullCoupling,
            Scheme::FullDecoupling,
        ] {
            let c = small_cfg(&w, 6, scheme, 40);
            let a = sample(&t, &c).unwrap();
            let b = sample(&t, &c).unwrap();
            assert_eq!(a, b);
            assert!(a.samples.iter().all(|s| *s > 0.0));
            let other = sample(
                &t,
                &SimConfig {
                    master_seed: 10,
                    ..c
                },
            )
            .unwrap();
            assert_ne!(a.samples, other.samples);
        }
    }

    #[test]
    fn reflected_keeps_containment() {
        let w = make_sphere();
        let t = build_default(&w, 6).unwrap();
        let s = sample_tau_reflected(&t, &small_cfg(&w, 6, Scheme::FullDecoupling, 50)).unwrap();
        assert_eq!(s.containment_violations, 0);
    }

    #[test]
    fn no_reflection_never_reaches_the_far_pole() {
        let w = make_sphere();
        let t = build_default(&w, 4).unwrap();
        let c = SimConfig {
            reflect: false,
            max_steps: 200_000,
            ..small_cfg(&w, 4, Scheme::FullDecoupling, 2)
        };
        assert!(sample_tau_reflected(&t, &c).is_err());
    }

    #[test]
    fn short_run_mean_is_close() {
        let w = make_sphere();
        let t = build_default(&w, 8).unwrap();
        let s = sample_tau(&t, &small_cfg(&w, 8, Scheme::Autonomous, 400)).unwrap();
        let m = crate::green::mean_tau(&t);
        assert!(
            (s.mean() - m).abs() < 4.0 * s.se(),
            "{} vs {m} (se {})",
            s.mean(),
            s.se()
        );
        assert!(s.bias_correction > 0.0 && s.bias_correction < 1e-3 * m);
    }
}
