//! Turbulence fading traces.
//!
//! A zero-mean Gaussian process with a power-law PSD is synthesized by
//! spectral filtering, mapped to a log-normal transmittance, and its lowest
//! quantile is clamped to zero to produce deep fades. The trace is finally
//! rescaled to unit mean, so it is a *relative* transmittance: the mean
//! segment loss is applied separately and the product is clipped to 1.

use super::colored::shaped_gaussian;
use super::model::FadingModel;
use super::rng::rng_from_seed;
use crate::error::{Error, Result};
use crate::tagstream::seconds_to_ps;

/// PSD roll-off exponent above the knee frequency.
pub const ROLLOFF_EXPONENT: f64 = -8.0 / 3.0;

/// Uniformly sampled relative transmittance, anchored at `start_ps`.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingTrace {
    pub start_ps: i64,
    pub dt_ps: i64,
    pub values: Vec<f64>,
}

impl FadingTrace {
    pub fn dt_s(&self) -> f64 {
        self.dt_ps as f64 * 1e-12
    }

    /// One past the last covered picosecond.
    pub fn end_ps(&self) -> i64 {
        self.start_ps + self.dt_ps * self.values.len() as i64
    }

    pub fn covers(&self, start_ps: i64, end_ps: i64) -> bool {
        start_ps >= self.start_ps && end_ps <= self.end_ps()
    }

    /// Sample-and-hold lookup; `None` outside the trace.
    pub fn at(&self, t_ps: i64) -> Option<f64> {
        if t_ps < self.start_ps {
            return None;
        }
        let i = ((t_ps - self.start_ps) / self.dt_ps) as usize;
        self.values.get(i).copied()
    }

    pub fn zero_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|&&v| v == 0.0).count() as f64 / self.values.len() as f64
    }
}

/// Shape of the target PSD (arbitrary overall level).
fn spectral_shape(f: &FadingModel) -> impl Fn(f64) -> f64 + '_ {
    move |freq: f64| {
        if freq <= f.knee_hz {
            freq.powf(f.exponent)
        } else {
            f.knee_hz.powf(f.exponent) * (freq / f.knee_hz).powf(ROLLOFF_EXPONENT)
        }
    }
}

fn relative_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return f64::INFINITY;
    }
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n / (mean * mean)
}

/// Log-normal map of unit Gaussian `g` with log-sigma `s`, lowest `k`
/// samples (by `g`, equivalently by transmittance) zeroed, rescaled to mean 1.
fn transmittance(g: &[f64], s: f64, zeroed: &[usize]) -> Vec<f64> {
    let mut t: Vec<f64> = g.iter().map(|&x| (s * x - 0.5 * s * s).exp()).collect();
    for &i in zeroed {
        t[i] = 0.0;
    }
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    if mean > 0.0 {
        t.iter_mut().for_each(|v| *v /= mean);
    }
    t
}

/// Synthesizes a relative transmittance trace covering `duration_s`.
///
/// The log-sigma of the log-normal map is solved by bisection so that the
/// final trace (after zero clamping and mean normalization) has relative
/// variance `scintillation_index`, when that is reachable.
pub fn synthesize_fading(f: &FadingModel, duration_s: f64, seed: u64) -> Result<FadingTrace> {
    synthesize_fading_at(f, 0, duration_s, seed)
}

/// As [`synthesize_fading`], with the trace anchored at `start_ps`.
pub fn synthesize_fading_at(
    f: &FadingModel,
    start_ps: i64,
    duration_s: f64,
    seed: u64,
) -> Result<FadingTrace> {
    f.validate("fading")?;
    if !(duration_s >= f.dt_s) {
        return Err(Error::arg(format!(
            "fading duration {duration_s} s is shorter than one sample ({} s)",
            f.dt_s
        )));
    }
    let dt_ps = seconds_to_ps(f.dt_s).max(1);
    let n = (duration_s / f.dt_s).ceil() as usize;
    let mut rng = rng_from_seed(seed);

    let mut g = shaped_gaussian(n, f.dt_s, spectral_shape(f), &mut rng);
    let mean = g.iter().sum::<f64>() / n as f64;
    let sd = (g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if sd > 0.0 {
        g.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    } else {
        g.iter_mut().for_each(|x| *x = 0.0);
    }

    let k = (f.zero_fade_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
    let zeroed = &order[..k.min(n)];

    let target = f.scintillation_index;
    let values = if target == 0.0 {
        transmittance(&g, 0.0, zeroed)
    } else {
        let floor = relative_variance(&transmittance(&g, 0.0, zeroed));
        if floor >= target {
            transmittance(&g, 0.0, zeroed)
        } else {
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            while relative_variance(&transmittance(&g, hi, zeroed)) < target && hi < 8.0 {
                hi *= 2.0;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if relative_variance(&transmittance(&g, mid, zeroed)) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            transmittance(&g, 0.5 * (lo + hi), zeroed)
        }
    };
    Ok(FadingTrace {
        start_ps,
        dt_ps,
        values,
    })
}
