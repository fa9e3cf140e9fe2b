//! Shared fixtures for the benchmarks.

use cutofflab_core::{build_default, make_power_curvature, make_sphere, IntegralTable, WeightFn};

/// Families timed by every benchmark group.
pub fn families() -> Vec<WeightFn> {
    vec![
        make_sphere(),
        make_power_curvature(-0.5, 1.0).expect("valid family"),
        make_power_curvature(2.0, 1.0).expect("valid family"),
    ]
}

pub fn table(w: &WeightFn, n: u32) -> IntegralTable {
    build_default(w, n).expect("table builds")
}
