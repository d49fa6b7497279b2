//! Clock phase synthesis and the sampled phase trace used to re-stamp
//! true event times on a local time scale.

use rand_distr::{Distribution, StandardNormal};

use super::colored::shaped_gaussian;
use super::model::{ClockModel, ClockNoiseKind};
use super::rng::{derive_seed, rng_from_seed};
use crate::error::{Error, Result};
use crate::tagstream::{seconds_to_ps, PS_PER_S};

/// Phase offsets `x[i]` (seconds) of a clock sampled every `dt_s`.
///
/// `x[i] = offset + ffo·i·dt + Σ noise`, with white PM as i.i.d. Gaussian
/// samples, white FM as a Gaussian random walk whose Allan deviation at 1 s
/// equals its level, and flicker PM as spectrally shaped `S_x(f) = level/f`.
pub fn synthesize_clock_phase(clk: &ClockModel, n: usize, dt_s: f64, seed: u64) -> Result<Vec<f64>> {
    clk.validate("clock")?;
    if n == 0 || !(dt_s > 0.0) {
        return Err(Error::arg(format!("need n >= 1 and dt > 0 (got {n}, {dt_s})")));
    }
    let offset = clk.offset_ps / PS_PER_S;
    let mut x: Vec<f64> = (0..n)
        .map(|i| offset + clk.fractional_frequency_offset * (i as f64 * dt_s))
        .collect();
    for (k, term) in clk.noise_terms.iter().enumerate() {
        if term.level == 0.0 {
            continue;
        }
        let mut rng = rng_from_seed(derive_seed(seed, &format!("noise/{k}")));
        match term.kind {
            ClockNoiseKind::WhitePm => {
                let sd = term.level / PS_PER_S;
                for v in x.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += sd * z;
                }
            }
            ClockNoiseKind::WhiteFm => {
                let step = term.level * dt_s.sqrt();
                let mut walk = 0.0;
                for v in x.iter_mut() {
                    *v += walk;
                    let z: f64 = StandardNormal.sample(&mut rng);
                    walk += step * z;
                }
            }
            ClockNoiseKind::FlickerPm => {
                let level = term.level / (PS_PER_S * PS_PER_S);
                let noise = shaped_gaussian(n, dt_s, |f| level / f, &mut rng);
                x.iter_mut().zip(noise).for_each(|(v, e)| *v += e);
            }
        }
    }
    Ok(x)
}

/// Regularly sampled clock phase, linearly interpolated between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockPhase {
    pub start_ps: i64,
    pub dt_ps: i64,
    /// Phase offset in seconds at `start_ps + i·dt_ps`.
    pub phase_s: Vec<f64>,
}

impl ClockPhase {
    /// A constant-offset trace (covers all times).
    pub fn constant(offset_s: f64) -> Self {
        ClockPhase {
            start_ps: i64::MIN,
            dt_ps: 0,
            phase_s: vec![offset_s],
        }
    }

    /// Samples `clk` on a grid covering `[start_ps, end_ps]`.
    pub fn synthesize(
        clk: &ClockModel,
        start_ps: i64,
        end_ps: i64,
        dt_s: f64,
        seed: u64,
    ) -> Result<Self> {
        if clk.is_static() {
            return Ok(ClockPhase::constant(clk.offset_ps / PS_PER_S));
        }
        let dt_ps = seconds_to_ps(dt_s).max(1);
        let n = ((end_ps - start_ps).max(0) / dt_ps) as usize + 2;
        let phase_s = synthesize_clock_phase(clk, n, dt_s, seed)?;
        Ok(ClockPhase {
            start_ps,
            dt_ps,
            phase_s,
        })
    }

    pub fn covers(&self, start_ps: i64, end_ps: i64) -> bool {
        if self.dt_ps == 0 {
            return true;
        }
        let last = self.start_ps + self.dt_ps * (self.phase_s.len() as i64 - 1);
        start_ps >= self.start_ps && end_ps <= last
    }

    /// Phase offset in picoseconds at true time `t_ps`.
    pub fn offset_ps_at(&self, t_ps: i64) -> Option<f64> {
        if self.dt_ps == 0 {
            return Some(self.phase_s[0] * PS_PER_S);
        }
        if t_ps < self.start_ps {
            return None;
        }
        let rel = t_ps - self.start_ps;
        let i = (rel / self.dt_ps) as usize;
        let frac = (rel % self.dt_ps) as f64 / self.dt_ps as f64;
        let x0 = *self.phase_s.get(i)?;
        let x = if frac == 0.0 {
            x0
        } else {
            let x1 = *self.phase_s.get(i + 1)?;
            x0 + (x1 - x0) * frac
        };
        Some(x * PS_PER_S)
    }
}
