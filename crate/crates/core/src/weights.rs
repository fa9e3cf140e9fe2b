//! Warping profiles `f` on `[0, L]` and the geometric quantities of the
//! rotationally symmetric manifold `[0, L] x S^{n-1}` with metric
//! `dr^2 + f(r)^2 dtheta^2`.
//!
//! Two closed-form families are shipped:
//!
//! * the round sphere, `f = sin` on `[0, pi]`;
//! * the power-curvature family with regime exponent `a > -1` and half-length
//!   `m`, `f(s) = m/(2+a) * (1 - (1 - s/m)^(2+a))` on `[0, m]`, extended
//!   symmetrically to `[m, 2m]`. Near the equator
//!   `f''(m - h) = -((1+a)/m^(1+a)) |h|^a`.
//!
//! Every profile is symmetric, `f(s) = f(L - s)`, and all evaluations go
//! through the distance to the nearest pole so that values near `L` keep full
//! relative precision.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, LabError, Result};
use crate::tables::{self, IntegralTable};

/// Family identity. The canonical string form doubles as the table cache key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum WeightFamily {
    Sphere,
    PowerCurvature { a: f64, m: f64 },
}

impl WeightFamily {
    pub fn power(a: f64, m: f64) -> Result<Self> {
        if !a.is_finite() || a <= -1.0 {
            return Err(domain("a", a, "(-1, inf)"));
        }
        if !m.is_finite() || m <= 0.0 {
            return Err(domain("m", m, "(0, inf)"));
        }
        Ok(WeightFamily::PowerCurvature { a, m })
    }

    pub fn key(&self) -> String {
        self.to_string()
    }

    pub fn build(&self) -> Result<WeightFn> {
        match *self {
            WeightFamily::Sphere => Ok(make_sphere()),
            WeightFamily::PowerCurvature { a, m } => make_power_curvature(a, m),
        }
    }
}

impl fmt::Display for WeightFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightFamily::Sphere => write!(f, "sphere"),
            // `{}` on f64 is the shortest representation that round-trips.
            WeightFamily::PowerCurvature { a, m } => write!(f, "power:a={a}:m={m}"),
        }
    }
}

impl FromStr for WeightFamily {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || LabError::FamilyKey(s.to_string());
        if s == "sphere" {
            return Ok(WeightFamily::Sphere);
        }
        let rest = s.strip_prefix("power:").ok_or_else(bad)?;
        let mut parts = rest.split(':');
        let a = parts
            .next()
            .and_then(|p| p.strip_prefix("a="))
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(bad)?;
        let m = parts
            .next()
            .and_then(|p| p.strip_prefix("m="))
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        WeightFamily::power(a, m)
    }
}

impl From<WeightFamily> for String {
    fn from(f: WeightFamily) -> String {
        f.to_string()
    }
}

impl TryFrom<String> for WeightFamily {
    type Error = LabError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A weight function with analytic derivatives and regime metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFn {
    family: WeightFamily,
    length: f64,
    fmid: f64,
    alpha: f64,
    curv_c: f64,
    even_order: Option<(u32, f64)>,
    // Multiplies f and its derivatives. Always 1 for shipped families; other
    // values only exist to exercise the assumption checks.
    scale: f64,
}

pub fn make_sphere() -> WeightFn {
    WeightFn {
        family: WeightFamily::Sphere,
        length: PI,
        fmid: 1.0,
        alpha: 0.0,
        curv_c: 1.0,
        even_order: None,
        scale: 1.0,
    }
}

pub fn make_power_curvature(a: f64, m: f64) -> Result<WeightFn> {
    let family = WeightFamily::power(a, m)?;
    let p = 2.0 + a;
    // a = 2k - 2 with integer k >= 2: f(m - h) = f(m) - h^{2k} / (2k m^{2k-1}).
    let even_order = if a >= 2.0 && a.fract() == 0.0 && (a as i64) % 2 == 0 {
        let k = (a as u32 + 2) / 2;
        let fact: f64 = (1..2 * k).map(f64::from).product();
        Some((k, -fact / m.powi(2 * k as i32 - 1)))
    } else {
        None
    };
    Ok(WeightFn {
        family,
        length: 2.0 * m,
        fmid: m / p,
        alpha: a,
        curv_c: (1.0 + a) / m.powf(1.0 + a),
        even_order,
        scale: 1.0,
    })
}

impl WeightFn {
    pub fn family(&self) -> WeightFamily {
        self.family
    }

    pub fn key(&self) -> String {
        self.family.key()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn half(&self) -> f64 {
        0.5 * self.length
    }

    /// `f(L/2)`, the maximum of `f`.
    pub fn fmid(&self) -> f64 {
        self.scale * self.fmid
    }

    /// Regime exponent `a` in `f''(L/2 - h) = -C |h|^a + o(|h|^a)`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The constant `C` of the equatorial curvature law.
    pub fn curv_c(&self) -> f64 {
        self.scale * self.curv_c
    }

    /// For `a = 2k - 2` (`k >= 2`): `(k, f^{(2k)}(L/2))`.
    pub fn even_order(&self) -> Option<(u32, f64)> {
        self.even_order.map(|(k, d)| (k, self.scale * d))
    }

    /// True when `f` is analytic across the equator, so no grading toward
    /// `L/2` is required.
    pub fn smooth_at_equator(&self) -> bool {
        match self.family {
            WeightFamily::Sphere => true,
            WeightFamily::PowerCurvature { a, .. } => {
                a >= 0.0 && a.fract() == 0.0 && (a as i64) % 2 == 0
            }
        }
    }

    /// Copy of `self` with `f` multiplied by `c`; breaks the unit-slope
    /// assumption when `c != 1`.
    #[doc(hidden)]
    pub fn with_scale(mut self, c: f64) -> Self {
        self.scale = c;
        self
    }

    fn pole_distance(&self, s: f64) -> f64 {
        // L - s is exact for s in [L/2, L].
        if s <= self.half() {
            s
        } else {
            self.length - s
        }
    }

    /// `f` at distance `d` from the nearest pole.
    pub fn f_pole(&self, d: f64) -> f64 {
        self.scale
            * match self.family {
                WeightFamily::Sphere => d.sin(),
                WeightFamily::PowerCurvature { a, m } => {
                    let p = 2.0 + a;
                    -(m / p) * (p * (-d / m).ln_1p()).exp_m1()
                }
            }
    }

    pub fn ln_f_pole(&self, d: f64) -> f64 {
        self.f_pole(d).ln()
    }

    /// `ln(f/f(L/2))` at pole distance `d`, accurate near the equator where
    /// it vanishes.
    pub fn ln_f_rel_pole(&self, d: f64) -> f64 {
        match self.family {
            WeightFamily::Sphere => {
                if d <= 0.25 * PI {
                    d.sin().ln()
                } else {
                    let x = 0.5 * PI - d;
                    let s = (0.5 * x).sin();
                    (-2.0 * s * s).ln_1p()
                }
            }
            WeightFamily::PowerCurvature { a, m } => {
                let p = 2.0 + a;
                if d <= 0.5 * m {
                    (-(p * (-d / m).ln_1p()).exp_m1()).ln()
                } else {
                    let y = (p * ((m - d) / m).ln()).exp();
                    (-y).ln_1p()
                }
            }
        }
    }

    /// `|f'|` at distance `d` from the nearest pole.
    pub fn df_pole(&self, d: f64) -> f64 {
        self.scale
            * match self.family {
                WeightFamily::Sphere => d.cos(),
                WeightFamily::PowerCurvature { a, m } => (1.0 - d / m).max(0.0).powf(1.0 + a),
            }
    }

    /// `|f'(L/2 - x)|`, evaluated without forming `L/2 - x`.
    pub fn df_equator(&self, x: f64) -> f64 {
        self.scale
            * match self.family {
                WeightFamily::Sphere => x.sin(),
                WeightFamily::PowerCurvature { a, m } => (x / m).max(0.0).powf(1.0 + a),
            }
    }

    /// `f'/f` at distance `d` from the pole at 0 (negate on the far side).
    pub fn log_slope_pole(&self, d: f64) -> f64 {
        match self.family {
            WeightFamily::Sphere => 1.0 / d.tan(),
            WeightFamily::PowerCurvature { .. } => self.df_pole(d) / self.f_pole(d),
        }
    }

    /// `f''` at distance `d` from the nearest pole (symmetric). Infinite at
    /// the equator when `a < 0`.
    pub fn d2f_pole(&self, d: f64) -> f64 {
        self.scale
            * match self.family {
                WeightFamily::Sphere => -d.sin(),
                WeightFamily::PowerCurvature { a, m } => {
                    -((1.0 + a) / m) * (1.0 - d / m).max(0.0).powf(a)
                }
            }
    }

    pub fn f(&self, s: f64) -> f64 {
        self.f_pole(self.pole_distance(s))
    }

    pub fn df(&self, s: f64) -> f64 {
        let d = self.df_pole(self.pole_distance(s));
        if s <= self.half() {
            d
        } else {
            -d
        }
    }

    pub fn d2f(&self, s: f64) -> Result<f64> {
        if !(0.0..=self.length).contains(&s) {
            return Err(domain("s", s, format!("[0, {}]", self.length)));
        }
        if self.alpha < 0.0 && s == self.half() {
            return Err(domain("s", s, "[0, L] without L/2 (f'' singular)"));
        }
        Ok(self.d2f_pole(self.pole_distance(s)))
    }

    /// Second derivative of `ln f` at distance `d` from the pole.
    pub(crate) fn d2_ln_f_pole(&self, d: f64) -> f64 {
        let g = self.log_slope_pole(d);
        self.d2f_pole(d) / self.f_pole(d) - g * g
    }

    /// Unsymmetrised evaluation used by the symmetry check.
    fn f_raw(&self, s: f64) -> f64 {
        match self.family {
            WeightFamily::Sphere => self.scale * s.sin(),
            WeightFamily::PowerCurvature { m, .. } => {
                if s <= m {
                    self.f_pole(s)
                } else {
                    self.f_pole(2.0 * m - s)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ValidationReport {
    pub symmetry: f64,
    pub slope_sign: f64,
    pub concavity: f64,
    pub boundary_slope: f64,
    pub pass: bool,
}

pub const VALIDATION_TOL: f64 = 1e-9;

/// Checks symmetry, monotonicity on `(0, L/2)`, concavity and unit boundary
/// slopes on a uniform grid. Reports the worst violation of each.
pub fn validate_assumptions(w: &WeightFn, grid_resolution: usize) -> Result<ValidationReport> {
    if grid_resolution < 100 {
        return Err(LabError::InvalidParameter(format!(
            "grid_resolution must be >= 100, got {grid_resolution}"
        )));
    }
    let l = w.length();
    let half = w.half();
    let scale = w.fmid().abs().max(f64::MIN_POSITIVE);
    let mut symmetry: f64 = 0.0;
    let mut slope_sign: f64 = 0.0;
    let mut concavity: f64 = 0.0;
    for i in 1..grid_resolution {
        let s = l * i as f64 / grid_resolution as f64;
        symmetry = symmetry.max((w.f_raw(s) - w.f_raw(l - s)).abs() / scale);
        if s < half {
            slope_sign = slope_sign.max(-w.df(s));
        }
        if s != half {
            concavity = concavity.max(w.d2f(s)?);
        }
    }
    let boundary_slope = (w.df(0.0) - 1.0).abs().max((w.df(l) + 1.0).abs());
    let pass = [symmetry, slope_sign, concavity, boundary_slope]
        .iter()
        .all(|v| *v <= VALIDATION_TOL);
    Ok(ValidationReport {
        symmetry,
        slope_sign,
        concavity,
        boundary_slope,
        pass,
    })
}

/// The two Ricci eigenvalues `(tangential, radial)` at radius `s`.
pub fn ricci_terms(w: &WeightFn, n: u32, s: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(domain("n", n as f64, "[2, inf)"));
    }
    let l = w.length();
    if !(s > 0.0 && s < l) {
        return Err(domain("s", s, format!("(0, {l})")));
    }
    let f = w.f(s);
    let df = w.df(s);
    let d2f = w.d2f(s)?;
    let nf = n as f64;
    let tangential = (nf - 2.0) * (1.0 - df * df) / (f * f) - d2f / f;
    let radial = -(nf - 1.0) * d2f / f;
    Ok((tangential, radial))
}

/// `ln c_n` with `c_n = 2 pi^{n/2} / Gamma(n/2)` the area of the unit `S^{n-1}`.
pub fn ln_sphere_area(n: u32) -> f64 {
    let nf = n as f64;
    std::f64::consts::LN_2 + 0.5 * nf * PI.ln() - ln_gamma(0.5 * nf)
}

/// `ln Vol_n(B(0, r))` from a prebuilt table.
pub fn ln_ball_volume_in(table: &IntegralTable, r: f64) -> Result<f64> {
    let l = table.weight().length();
    if !(0.0..=l).contains(&r) {
        return Err(domain("r", r, format!("[0, {l}]")));
    }
    if r == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(ln_sphere_area(table.n()) + table.ln_i(r)?)
}

/// `Vol_n(B(0, r)) = c_n I_n(r)`. Builds a table at the default resolution.
pub fn ball_volume(w: &WeightFn, n: u32, r: f64) -> Result<f64> {
    let l = w.length();
    if !(0.0..=l).contains(&r) {
        return Err(domain("r", r, format!("[0, {l}]")));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let table = tables::build_default(w, n)?;
    Ok(ln_ball_volume_in(&table, r)?.exp())
}
