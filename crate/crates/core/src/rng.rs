//! Counter-based randomness for reproducible, order-independent paths.
//!
//! Every random quantity is a pure function of `(master_seed, path, stream,
//! level, index)`, hashed with the SplitMix64 finaliser into the seed of a
//! fresh SplitMix64 generator. Paths may therefore run in any order or in
//! parallel and still give identical results.

use rand::SeedableRng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rand_xoshiro::SplitMix64;

/// SplitMix64 finaliser (Steele, Lea, Flood 2014).
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `seed_i = mix(master ^ mix(i))`.
pub fn path_seed(master: u64, path: u64) -> u64 {
    mix64(master ^ mix64(path))
}

fn key(seed: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(seed ^ mix64(a)) ^ b)
}

/// Generator for a single keyed draw.
pub fn keyed_rng(seed: u64, a: u64, b: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(key(seed, a, b))
}

pub fn keyed_normal(seed: u64, a: u64, b: u64) -> f64 {
    StandardNormal.sample(&mut keyed_rng(seed, a, b))
}

pub fn keyed_uniform(seed: u64, a: u64, b: u64) -> f64 {
    rand::Rng::gen::<f64>(&mut keyed_rng(seed, a, b))
}

/// `chi_k` draw.
pub fn keyed_chi(seed: u64, a: u64, b: u64, dof: f64) -> f64 {
    ChiSquared::new(dof)
        .expect("positive degrees of freedom")
        .sample(&mut keyed_rng(seed, a, b))
        .sqrt()
}

/// A Brownian path built as a dyadic tree: increments over root intervals
/// of length `root` are independent normals, and each dyadic interval is
/// split by a Brownian bridge draw keyed by its position. The increment over
/// any dyadic interval is the same whichever level the caller walks at, so
/// runs with different step sizes share one path.
#[derive(Debug, Clone, Copy)]
pub struct BrownianTree {
    seed: u64,
    root: f64,
}

impl BrownianTree {
    pub fn new(seed: u64, root: f64) -> Self {
        BrownianTree { seed, root }
    }

    pub fn root(&self) -> f64 {
        self.root
    }

    /// Increment over `[i, i+1] * root / 2^level`.
    pub fn increment(&self, level: u32, index: u64) -> f64 {
        let mut p = self.root.sqrt() * keyed_normal(self.seed, 0, index >> level);
        let mut len = self.root;
        for l in 1..=level {
            let idx = index >> (level - l);
            len *= 0.5;
            let left = 0.5 * p + (0.5 * len).sqrt() * keyed_normal(self.seed, l as u64, idx >> 1);
            p = if idx & 1 == 0 { left } else { p - left };
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_sum_to_parent() {
        let t = BrownianTree::new(42, 0.3);
        for level in 0..12 {
            for i in [0u64, 1, 7, 1000] {
                let p = t.increment(level, i);
                let c = t.increment(level + 1, 2 * i) + t.increment(level + 1, 2 * i + 1);
                assert!((p - c).abs() < 1e-14, "level {level} index {i}");
            }
        }
    }

    #[test]
    fn increment_variance_matches_length() {
        let t = BrownianTree::new(7, 1.0);
        for level in [0u32, 3, 10] {
            let m = 20_000u64;
            let var: f64 = (0..m).map(|i| t.increment(level, i).powi(2)).sum::<f64>() / m as f64;
            let want = 0.5f64.powi(level as i32);
            assert!((var / want - 1.0).abs() < 0.05, "level {level}: {var}");
        }
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        assert_eq!(path_seed(1, 2), path_seed(1, 2));
        assert_ne!(path_seed(1, 2), path_seed(1, 3));
        assert_ne!(path_seed(1, 2), path_seed(2, 2));
        assert_eq!(keyed_normal(5, 1, 2), keyed_normal(5, 1, 2));
        let u = keyed_uniform(5, 1, 2);
        assert!((0.0..1.0).contains(&u));
    }
}
