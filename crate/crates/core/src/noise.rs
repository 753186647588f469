//! Space-time white noise increments from a counter-based generator.
//!
//! Every Gaussian the laboratory consumes is a pure function of
//! `(master_seed, path, step, cell, lane)`: the tuple is absorbed into a
//! 64-bit avalanche mixer and two derived words feed a Box-Muller transform.
//! There is no generator state to carry, so
//!
//! * a path can be resimulated bit-for-bit from its indices alone,
//! * coupled experiments (comparison, stability, truncation patching) reuse
//!   the identical noise by construction, and
//! * parallel ensembles need no seed bookkeeping.
//!
//! A grid increment `W((t_m, t_{m+1}] × cell_j)` has variance `dt·n_x`
//! (= `dt/dx`), the discretization of white noise scaled for cell width
//! `dx = 1/n_x`.

use crate::{Error, Result};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// 64-bit finalizer with full avalanche (the SplitMix64 mixing function).
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a word chain: each word is offset by the golden ratio and absorbed
/// through a full mix, so nearby counters decorrelate completely.
#[inline]
fn absorb(h: u64, w: u64) -> u64 {
    mix(h ^ w.wrapping_add(GOLDEN).wrapping_mul(0xff51_afd7_ed55_8ccd))
}

/// Uniform in (0,1), strictly excluding both endpoints.
#[inline]
fn to_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard Gaussian from a fully mixed key via Box-Muller.
#[inline]
fn gaussian_from_key(key: u64) -> f64 {
    let u1 = to_unit(mix(key ^ 0x2545_f491_4f6c_dd1d));
    let u2 = to_unit(mix(key ^ 0x6a09_e667_f3bc_c909));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// One path's noise field on a fixed grid.
///
/// `increment(step, cell)` is the scaled white-noise mass of the space-time
/// cell `(t_step, t_step + dt] × (x_cell - dx/2, x_cell + dx/2]`; cells are
/// indexed `0..n_x-1` matching interior grid nodes.
#[derive(Debug, Clone, Copy)]
pub struct NoiseStream {
    master_seed: u64,
    path: u64,
    n_x: usize,
    dt: f64,
    /// Standard-deviation multiplier; 1.0 except in fault-injection self-tests.
    amplitude_scale: f64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, path: u64, n_x: usize, dt: f64) -> Result<Self> {
        if n_x < 2 {
            return Err(Error::Config(format!("noise grid needs at least 2 cells, got {n_x}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive and finite, got {dt}")));
        }
        Ok(Self { master_seed, path, n_x, dt, amplitude_scale: 1.0 })
    }

    /// Deliberately mis-scale every increment's standard deviation.
    ///
    /// Fault-injection hook for the verifier's self-test (a 10% variance
    /// inflation must break the noise-isometry check). Not for production.
    pub fn with_variance_scale(mut self, variance_scale: f64) -> Self {
        self.amplitude_scale = variance_scale.sqrt();
        self
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> u64 {
        self.path
    }

    pub fn grid_points(&self) -> usize {
        self.n_x
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `N(0, dt/dx)` increment for the given step and interior cell.
    pub fn increment(&self, step: u64, cell: usize) -> f64 {
        let key = absorb(absorb(absorb(mix(self.master_seed ^ GOLDEN), self.path), step), cell as u64);
        let sd = (self.dt * self.n_x as f64).sqrt() * self.amplitude_scale;
        sd * gaussian_from_key(key)
    }

    /// All `n_x - 1` interior increments of one step.
    pub fn fill_increments(&self, step: u64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.n_x - 1 {
            return Err(Error::LengthMismatch { expected: self.n_x - 1, got: out.len() });
        }
        for (cell, slot) in out.iter_mut().enumerate() {
            *slot = self.increment(step, cell);
        }
        Ok(())
    }

    /// Allocating variant of [`Self::fill_increments`]: the interior
    /// increment field of one step.
    pub fn sample_increment(&self, step: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_x - 1];
        self.fill_increments(step, &mut out)
            .expect("buffer is sized to the stream's own grid");
        out
    }
}

/// Small sequential generator over the same mixer, for auxiliary sampling
/// (bootstrap resampling, pair selection) that must be reproducible but is
/// not tied to the space-time grid. Domain-separated from [`NoiseStream`] by
/// a purpose tag.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(master_seed: u64, purpose: &str) -> Self {
        let mut key = mix(master_seed ^ !GOLDEN);
        for byte in purpose.bytes() {
            key = absorb(key, byte as u64);
        }
        Self { key, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = absorb(self.key, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in `[0, n)`.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // 128-bit multiply avoids modulo bias at these ranges.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn next_unit(&mut self) -> f64 {
        to_unit(self.next_u64())
    }

    pub fn next_gaussian(&mut self) -> f64 {
        gaussian_from_key(self.next_u64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism_and_decorrelation() {
        let s = NoiseStream::new(42, 3, 64, 1e-3).unwrap();
        assert_eq!(s.increment(5, 10), s.increment(5, 10));
        let again = NoiseStream::new(42, 3, 64, 1e-3).unwrap();
        assert_eq!(s.increment(7, 1), again.increment(7, 1));
        // Any coordinate change gives a fresh draw.
        assert_ne!(s.increment(5, 10), s.increment(5, 11));
        assert_ne!(s.increment(5, 10), s.increment(6, 10));
        let other_path = NoiseStream::new(42, 4, 64, 1e-3).unwrap();
        assert_ne!(s.increment(5, 10), other_path.increment(5, 10));
        let other_seed = NoiseStream::new(43, 3, 64, 1e-3).unwrap();
        assert_ne!(s.increment(5, 10), other_seed.increment(5, 10));
    }

    #[test]
    fn variance_and_mean_within_one_percent() {
        let n_x = 64;
        let dt = 0.25;
        let s = NoiseStream::new(2024, 0, n_x, dt).unwrap();
        let n = 1_000_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n {
            let v = s.increment(i / 63, (i % 63) as usize);
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let target = dt * n_x as f64; // dt/dx = 16
        assert!(mean.abs() < 3.0 * (target / n as f64).sqrt(), "mean {mean}");
        assert!((var - target).abs() / target < 0.01, "var {var} vs {target}");
    }

    #[test]
    fn whiteness_via_lagged_products() {
        // Correlation between neighboring cells, steps, and paths should be
        // zero within 3 standard errors of the product estimator.
        let n_x = 64;
        let s0 = NoiseStream::new(7, 0, n_x, 1.0).unwrap();
        let s1 = NoiseStream::new(7, 1, n_x, 1.0).unwrap();
        let n = 200_000u64;
        let mut lag_cell = 0.0;
        let mut lag_step = 0.0;
        let mut lag_path = 0.0;
        for i in 0..n {
            let (step, cell) = (i / 62, (i % 62) as usize);
            let v = s0.increment(step, cell);
            lag_cell += v * s0.increment(step, cell + 1);
            lag_step += v * s0.increment(step + 1, cell);
            lag_path += v * s0.increment(step, cell) * 0.0 + v * s1.increment(step, cell);
        }
        let var = n_x as f64; // per-increment variance at dt = 1
        let se = var * (n as f64).sqrt(); // SE of the summed product
        for (name, acc) in [("cell", lag_cell), ("step", lag_step), ("path", lag_path)] {
            assert!(acc.abs() < 3.0 * se, "{name} correlation {acc} vs 3se {}", 3.0 * se);
        }
    }

    #[test]
    fn tail_mass_is_gaussian() {
        let s = NoiseStream::new(99, 0, 2, 1.0).unwrap(); // sd = sqrt(2)
        let sd = 2f64.sqrt();
        let n = 400_000u64;
        let mut beyond = 0u64;
        for i in 0..n {
            if (s.increment(i, 0) / sd).abs() > 1.959_964 {
                beyond += 1;
            }
        }
        let frac = beyond as f64 / n as f64;
        let se = (0.05 * 0.95 / n as f64).sqrt();
        assert!((frac - 0.05).abs() < 4.0 * se, "two-sided tail {frac}");
    }

    #[test]
    fn variance_scale_inflates_increments() {
        let clean = NoiseStream::new(1, 0, 8, 0.5).unwrap();
        let scaled = clean.with_variance_scale(1.1);
        let ratio = scaled.increment(3, 2) / clean.increment(3, 2);
        assert!((ratio - 1.1f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fill_matches_pointwise() {
        let s = NoiseStream::new(5, 2, 16, 0.1).unwrap();
        let mut buf = vec![0.0; 15];
        s.fill_increments(9, &mut buf).unwrap();
        for (cell, v) in buf.iter().enumerate() {
            assert_eq!(*v, s.increment(9, cell));
        }
        let mut short = vec![0.0; 10];
        assert!(matches!(
            s.fill_increments(0, &mut short),
            Err(Error::LengthMismatch { expected: 15, got: 10 })
        ));
    }

    #[test]
    fn auxiliary_rng_is_reproducible_and_domain_separated() {
        let mut a = CounterRng::new(11, "bootstrap");
        let mut b = CounterRng::new(11, "bootstrap");
        let mut c = CounterRng::new(11, "pairs");
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let zs: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
        let idx: Vec<usize> = (0..1000).map(|_| a.next_index(10)).collect();
        assert!(idx.iter().all(|&i| i < 10));
        // Every bucket hit over 1000 draws — crude uniformity smoke test.
        assert!((0..10).all(|k| idx.contains(&k)));
    }
}
