//! Count-rate traces and their power spectral density.

use std::io::{self, Write};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagstream::{seconds_to_ps, TimeTagStream};

pub const DEFAULT_DT_S: f64 = 1e-3;
const MIN_SEGMENT: usize = 64;

/// Detected counts per fixed sampling interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTrace {
    pub counts: Vec<u64>,
    pub dt_s: f64,
    pub start_ps: i64,
}

impl RateTrace {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn zero_fraction(&self) -> f64 {
        self.counts.iter().filter(|&&c| c == 0).count() as f64 / self.counts.len().max(1) as f64
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

/// One-sided power spectral density, DC excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn df_hz(&self) -> f64 {
        match self.freqs_hz.as_slice() {
            [a, b, ..] => b - a,
            [a] => *a,
            [] => 0.0,
        }
    }

    /// Index of the bin closest to `f_hz`.
    pub fn nearest(&self, f_hz: f64) -> Option<usize> {
        (0..self.freqs_hz.len()).min_by(|&i, &j| {
            (self.freqs_hz[i] - f_hz)
                .abs()
                .total_cmp(&(self.freqs_hz[j] - f_hz).abs())
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "freq_hz,power")?;
        for (f, p) in self.freqs_hz.iter().zip(&self.power) {
            writeln!(w, "{f},{p}")?;
        }
        Ok(())
    }
}

/// Bins a stream into half-open intervals of `dt_s` tiling its span; the
/// last bin may be partial.
pub fn countrate_trace(s: &TimeTagStream, dt_s: f64) -> Result<RateTrace> {
    let dt_ps = seconds_to_ps(dt_s);
    if !(dt_s > 0.0) || dt_ps < 1 {
        return Err(Error::arg(format!("sampling interval must be >= 1 ps, got {dt_s} s")));
    }
    let span = s.span();
    if span.is_empty() {
        return Err(Error::arg("cannot bin a stream with an empty span"));
    }
    let n = ((span.len_ps() + dt_ps - 1) / dt_ps) as usize;
    let mut counts = vec![0u64; n];
    for &t in s.tags() {
        counts[((t - span.start_ps) / dt_ps) as usize] += 1;
    }
    Ok(RateTrace {
        counts,
        dt_s,
        start_ps: span.start_ps,
    })
}

pub fn psd(r: &RateTrace) -> Result<Spectrum> {
    psd_series(&r.as_f64(), r.dt_s)
}

/// Welch estimate: mean removed, Hann-tapered segments of `max(n/8, 64)`
/// samples (capped at `n`) with 50% overlap, scaled so that
/// `Σ power·Δf` estimates the variance.
pub fn psd_series(x: &[f64], dt_s: f64) -> Result<Spectrum> {
    let n = x.len();
    if n < 8 {
        return Err(Error::arg(format!("PSD needs at least 8 samples, got {n}")));
    }
    if !(dt_s > 0.0) {
        return Err(Error::arg(format!("sampling interval must be positive, got {dt_s}")));
    }
    let seg = (n / 8).max(MIN_SEGMENT).min(n);
    let hop = (seg / 2).max(1);
    let mean = x.iter().sum::<f64>() / n as f64;
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / seg as f64).cos())
        .collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let half = seg / 2;
    let mut acc = vec![0.0; half];
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    let mut n_seg = 0usize;
    let mut start = 0;
    while start + seg <= n {
        for (b, (v, w)) in buf.iter_mut().zip(x[start..start + seg].iter().zip(&window)) {
            *b = Complex::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k + 1].norm_sqr();
        }
        n_seg += 1;
        start += hop;
    }
    let scale = dt_s / (wss * n_seg as f64);
    let freqs_hz = (1..=half).map(|k| k as f64 / (seg as f64 * dt_s)).collect();
    let power = acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let nyquist = seg % 2 == 0 && i + 1 == half;
            a * scale * if nyquist { 1.0 } else { 2.0 }
        })
        .collect();
    Ok(Spectrum { freqs_hz, power })
}

/// Least-squares line through `(log₁₀ f, log₁₀ P)` for bins with
/// `f_min ≤ f ≤ f_max` and positive power. Returns `(exponent, level)` with
/// `P ≈ level · f^exponent`.
pub fn powerlaw_fit(sp: &Spectrum, f_min_hz: f64, f_max_hz: f64) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = sp
        .freqs_hz
        .iter()
        .zip(&sp.power)
        .filter(|(&f, &p)| f >= f_min_hz && f <= f_max_hz && p > 0.0)
        .map(|(f, p)| (f.log10(), p.log10()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::arg(format!(
            "power-law fit needs at least 5 bins in [{f_min_hz}, {f_max_hz}] Hz, found {}",
            pts.len()
        )));
    }
    let (slope, intercept) = line_fit(&pts);
    Ok((slope, 10f64.powf(intercept)))
}

pub(crate) fn line_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `10·log₁₀(P_a/P_b)` at the bins nearest `f_hz`; `+∞` if `P_b` is zero.
pub fn psd_ratio_db(a: &Spectrum, b: &Spectrum, f_hz: f64) -> Result<f64> {
    let ia = a.nearest(f_hz).ok_or_else(|| Error::arg("empty spectrum"))?;
    let ib = b.nearest(f_hz).ok_or_else(|| Error::arg("empty spectrum"))?;
    let (pa, pb) = (a.power[ia], b.power[ib]);
    if pb == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (pa / pb).log10())
}
