//! Gaussian noise with an arbitrary one-sided power spectral density,
//! generated by filtering white noise in the frequency domain.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Returns `n` samples spaced `dt_s` apart whose one-sided PSD follows
/// `psd(f)` (units of value²/Hz). The DC component is removed.
///
/// The synthesis length is padded to a power of two and truncated, so very
/// low frequencies are represented down to `1 / (M dt)`.
pub fn shaped_gaussian<R: Rng>(
    n: usize,
    dt_s: f64,
    psd: impl Fn(f64) -> f64,
    rng: &mut R,
) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let m = n.next_power_of_two().max(2);
    let mut buf: Vec<Complex64> = (0..m)
        .map(|_| Complex64::new(StandardNormal.sample(rng), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(m).process(&mut buf);
    let df = 1.0 / (m as f64 * dt_s);
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = k.min(m - k);
        let gain = if kk == 0 {
            0.0
        } else {
            (psd(kk as f64 * df).max(0.0) / (2.0 * dt_s)).sqrt()
        };
        *c *= gain;
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let norm = 1.0 / m as f64;
    buf.iter().take(n).map(|c| c.re * norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng::rng_from_seed;

    #[test]
    fn flat_spectrum_gives_expected_variance() {
        // One-sided level S over [0, 1/(2 dt)] integrates to S / (2 dt).
        let mut rng = rng_from_seed(3);
        let dt = 1e-3;
        let level = 4e-3;
        let x = shaped_gaussian(1 << 16, dt, |_| level, &mut rng);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let expected = level / (2.0 * dt);
        assert!((var / expected - 1.0).abs() < 0.03, "{var} vs {expected}");
    }

    #[test]
    fn zero_psd_is_silent() {
        let mut rng = rng_from_seed(3);
        assert!(shaped_gaussian(100, 1.0, |_| 0.0, &mut rng).iter().all(|&v| v == 0.0));
    }
}
