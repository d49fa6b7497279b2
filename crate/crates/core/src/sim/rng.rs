//! Seed derivation and random-process helpers.
//!
//! Every random component of a scenario draws from its own ChaCha8 stream.
//! The sub-seed for a component is
//! `splitmix64(master_seed ^ fnv1a64(label))`, where `label` is a fixed
//! string such as `"segment/fs_uplink"`. Components therefore never share
//! state and may run in any order or in parallel without changing output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

pub type SimRng = ChaCha8Rng;

fn fnv1a64(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a64(label))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Arrival times of a homogeneous Poisson process on `[start_ps, end_ps)`.
///
/// The running time is held as an integer picosecond count plus an `f64`
/// fraction so that resolution does not degrade over long runs. Each event
/// is reported as `(integer_ps, fraction_ps)` with `0 <= fraction < 1`.
pub struct PoissonArrivals<'a, R: Rng> {
    rng: &'a mut R,
    mean_gap_ps: f64,
    whole: i64,
    frac: f64,
    end_ps: i64,
}

impl<'a, R: Rng> PoissonArrivals<'a, R> {
    pub fn new(rng: &'a mut R, rate_hz: f64, start_ps: i64, end_ps: i64) -> Self {
        let mean_gap_ps = if rate_hz > 0.0 { 1e12 / rate_hz } else { f64::INFINITY };
        PoissonArrivals {
            rng,
            mean_gap_ps,
            whole: start_ps,
            frac: 0.0,
            end_ps,
        }
    }
}

impl<R: Rng> Iterator for PoissonArrivals<'_, R> {
    type Item = (i64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if !self.mean_gap_ps.is_finite() {
            return None;
        }
        let gap: f64 = Exp1.sample(self.rng);
        let step = self.frac + gap * self.mean_gap_ps;
        if step >= (self.end_ps - self.whole) as f64 {
            self.whole = self.end_ps;
            self.mean_gap_ps = f64::INFINITY;
            return None;
        }
        let carry = step.floor();
        self.whole += carry as i64;
        self.frac = step - carry;
        if self.whole >= self.end_ps {
            self.mean_gap_ps = f64::INFINITY;
            return None;
        }
        Some((self.whole, self.frac))
    }
}
