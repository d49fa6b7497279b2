//! Allan-family stability statistics on phase (time-offset) data.
//!
//! Series with missing samples are split into contiguous runs; squared
//! second-difference sums and term counts are pooled across runs before
//! normalising, so a gap never produces a spurious jump.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::spectral::line_fit;

/// Uniformly spaced phase samples in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSeries {
    pub x: Vec<f64>,
    pub tau0_s: f64,
    /// `true` marks a missing sample; its `x` value is ignored.
    pub gaps: Option<Vec<bool>>,
}

impl PhaseSeries {
    pub fn new(x: Vec<f64>, tau0_s: f64) -> Result<Self> {
        if !(tau0_s > 0.0) {
            return Err(Error::arg(format!("tau0 must be positive, got {tau0_s}")));
        }
        Ok(PhaseSeries { x, tau0_s, gaps: None })
    }

    /// Builds a series from samples where `None` marks a gap.
    pub fn from_optional(values: &[Option<f64>], tau0_s: f64) -> Result<Self> {
        let mut p = Self::new(values.iter().map(|v| v.unwrap_or(0.0)).collect(), tau0_s)?;
        if values.iter().any(Option::is_none) {
            p.gaps = Some(values.iter().map(Option::is_none).collect());
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn gap_count(&self) -> usize {
        self.gaps.as_ref().map_or(0, |g| g.iter().filter(|&&b| b).count())
    }

    /// Contiguous runs of valid samples.
    pub fn segments(&self) -> Vec<&[f64]> {
        match &self.gaps {
            None => vec![&self.x[..]],
            Some(g) => {
                let mut out = Vec::new();
                let mut start = None;
                for i in 0..=self.x.len() {
                    let valid = i < self.x.len() && !g[i];
                    match (valid, start) {
                        (true, None) => start = Some(i),
                        (false, Some(s)) => {
                            out.push(&self.x[s..i]);
                            start = None;
                        }
                        _ => {}
                    }
                }
                out
            }
        }
    }

    fn longest_run(&self) -> usize {
        self.segments().iter().map(|s| s.len()).max().unwrap_or(0)
    }
}

#[inline]
fn second_diff(x: &[f64], i: usize, m: usize) -> f64 {
    x[i + 2 * m] - 2.0 * x[i + m] + x[i]
}

fn allan_sums(x: &[f64], m: usize) -> (f64, usize) {
    if x.len() < 2 * m + 1 {
        return (0.0, 0);
    }
    let n = x.len() - 2 * m;
    let sum = (0..n).map(|i| second_diff(x, i, m).powi(2)).sum();
    (sum, n)
}

fn mod_allan_sums(x: &[f64], m: usize) -> (f64, usize) {
    if m == 1 {
        return allan_sums(x, 1);
    }
    if x.len() < 3 * m {
        return (0.0, 0);
    }
    let d: Vec<f64> = (0..x.len() - 2 * m).map(|i| second_diff(x, i, m)).collect();
    let terms = x.len() - 3 * m + 1;
    let mut inner: f64 = d[..m].iter().sum();
    let mut sum = inner * inner;
    for j in 1..terms {
        inner += d[j + m - 1] - d[j - 1];
        sum += inner * inner;
    }
    (sum, terms)
}

fn pooled(
    p: &PhaseSeries,
    m: usize,
    max_m: usize,
    name: &str,
    sums: fn(&[f64], usize) -> (f64, usize),
    inner_len: usize,
) -> Result<(f64, usize)> {
    if m < 1 || m > max_m {
        return Err(Error::arg(format!(
            "{name}: averaging factor m={m} outside [1, {max_m}] for {} valid samples",
            p.longest_run()
        )));
    }
    let (sum, count) = p
        .segments()
        .into_iter()
        .map(|s| sums(s, m))
        .fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if count == 0 {
        return Err(Error::arg(format!("{name}: no contiguous run long enough for m={m}")));
    }
    let tau = m as f64 * p.tau0_s;
    let mm = (inner_len * inner_len) as f64;
    Ok(((sum / (2.0 * mm * tau * tau * count as f64)).sqrt(), count))
}

fn max_m(p: &PhaseSeries, divisor: usize) -> usize {
    p.longest_run().saturating_sub(1) / divisor
}

/// Overlapping Allan deviation at averaging time `m·tau0`.
pub fn adev(p: &PhaseSeries, m: usize) -> Result<f64> {
    pooled(p, m, max_m(p, 2), "adev", allan_sums, 1).map(|r| r.0)
}

/// Modified Allan deviation at averaging time `m·tau0`.
///
/// Kernel `x_{i+2m} − 2x_{i+m} + x_i` summed over `m` consecutive starts,
/// squared, normalised by `2m²τ²(N−3m+1)`. At `m = 1` the computation is the
/// Allan one, so the two agree to the last bit.
pub fn mdev(p: &PhaseSeries, m: usize) -> Result<f64> {
    mdev_terms(p, m).map(|r| r.0)
}

fn mdev_terms(p: &PhaseSeries, m: usize) -> Result<(f64, usize)> {
    if m == 1 {
        let lim = max_m(p, 3);
        return pooled(p, m, lim, "mdev", allan_sums, 1);
    }
    pooled(p, m, max_m(p, 3), "mdev", mod_allan_sums, m)
}

/// Time deviation `(m·tau0/√3)·mdev`.
pub fn tdev(p: &PhaseSeries, m: usize) -> Result<f64> {
    Ok(tdev_from_mdev(m as f64 * p.tau0_s, mdev(p, m)?))
}

#[inline]
fn tdev_from_mdev(tau_s: f64, mdev: f64) -> f64 {
    tau_s / 3f64.sqrt() * mdev
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Deviation {
    Adev,
    Mdev,
    Tdev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySeries {
    pub taus_s: Vec<f64>,
    pub m_values: Vec<usize>,
    pub adev: Vec<f64>,
    pub mdev: Vec<f64>,
    pub tdev: Vec<f64>,
    pub n_terms: Vec<usize>,
    /// Approximate equivalent degrees of freedom of each TDEV point.
    pub edf: Vec<f64>,
    /// 95% chi-squared interval on TDEV.
    pub tdev_lo: Vec<f64>,
    pub tdev_hi: Vec<f64>,
}

impl StabilitySeries {
    pub fn len(&self) -> usize {
        self.taus_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus_s.is_empty()
    }

    pub fn values(&self, which: Deviation) -> &[f64] {
        match which {
            Deviation::Adev => &self.adev,
            Deviation::Mdev => &self.mdev,
            Deviation::Tdev => &self.tdev,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "tau_s,adev,mdev,tdev,n_terms")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.taus_s[i], self.adev[i], self.mdev[i], self.tdev[i], self.n_terms[i]
            )?;
        }
        Ok(())
    }
}

/// Octave grid `1, 2, 4, …` up to the largest MDEV-valid factor.
pub fn octave_m_grid(p: &PhaseSeries) -> Vec<usize> {
    let lim = max_m(p, 3);
    std::iter::successors(Some(1usize), |m| Some(m * 2))
        .take_while(|&m| m <= lim)
        .collect()
}

// Crude EDF: independent MDEV terms are roughly `n_terms / m` apart.
fn edf_estimate(n_terms: usize, m: usize) -> f64 {
    (n_terms as f64 / m as f64).max(1.0)
}

fn chi2_interval(dev: f64, edf: f64) -> (f64, f64) {
    match ChiSquared::new(edf) {
        Ok(c) => (
            dev * (edf / c.inverse_cdf(0.975)).sqrt(),
            dev * (edf / c.inverse_cdf(0.025)).sqrt(),
        ),
        Err(_) => (f64::NAN, f64::NAN),
    }
}

/// ADEV, MDEV and TDEV at each averaging factor in `m_values`.
pub fn stability_curve(p: &PhaseSeries, m_values: &[usize]) -> Result<StabilitySeries> {
    if m_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("averaging factors must be strictly ascending"));
    }
    let rows: Vec<(f64, f64, f64, usize)> = m_values
        .par_iter()
        .map(|&m| {
            let (md, n) = mdev_terms(p, m)?;
            Ok((m as f64 * p.tau0_s, adev(p, m)?, md, n))
        })
        .collect::<Result<_>>()?;
    let mut s = StabilitySeries {
        taus_s: vec![],
        m_values: m_values.to_vec(),
        adev: vec![],
        mdev: vec![],
        tdev: vec![],
        n_terms: vec![],
        edf: vec![],
        tdev_lo: vec![],
        tdev_hi: vec![],
    };
    for (&m, (tau, ad, md, n)) in m_values.iter().zip(rows) {
        let td = tdev_from_mdev(tau, md);
        let edf = edf_estimate(n, m);
        let (lo, hi) = chi2_interval(td, edf);
        s.taus_s.push(tau);
        s.adev.push(ad);
        s.mdev.push(md);
        s.tdev.push(td);
        s.n_terms.push(n);
        s.edf.push(edf);
        s.tdev_lo.push(lo);
        s.tdev_hi.push(hi);
    }
    Ok(s)
}

/// Least-squares slope of `log dev` against `log τ` over `τ ∈ [tau_min, tau_max]`.
pub fn loglog_slope(s: &StabilitySeries, which: Deviation, tau_min_s: f64, tau_max_s: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = s
        .taus_s
        .iter()
        .zip(s.values(which))
        .filter(|(&t, &d)| t >= tau_min_s && t <= tau_max_s && d > 0.0)
        .map(|(t, d)| (t.ln(), d.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::arg(format!(
            "slope fit needs at least 3 points in [{tau_min_s}, {tau_max_s}] s, found {}",
            pts.len()
        )));
    }
    Ok(line_fit(&pts).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{synthesize_clock_phase, ClockModel, ClockNoiseKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn series(x: Vec<f64>) -> PhaseSeries {
        PhaseSeries::new(x, 1.0).unwrap()
    }

    fn noise(kind: ClockNoiseKind, level: f64, seed: u64) -> PhaseSeries {
        let clk = ClockModel::ideal().with_noise(kind, level);
        series(synthesize_clock_phase(&clk, 100_000, 1.0, seed).unwrap())
    }

    // Direct evaluation of the defining double sum, used as an oracle.
    fn mdev_naive(x: &[f64], m: usize, tau0: f64) -> f64 {
        let n = x.len();
        let mut sum = 0.0;
        for j in 0..=n - 3 * m {
            let inner: f64 = (j..j + m).map(|i| x[i + 2 * m] - 2.0 * x[i + m] + x[i]).sum();
            sum += inner * inner;
        }
        let tau = m as f64 * tau0;
        (sum / (2.0 * (m * m) as f64 * tau * tau * (n - 3 * m + 1) as f64)).sqrt()
    }

    #[test]
    fn constant_and_ramp_are_zero() {
        assert_eq!(mdev(&series(vec![2.5; 40]), 3).unwrap(), 0.0);
        let ramp = series((0..40).map(|i| 1.0 + 0.25 * i as f64).collect());
        assert!(mdev(&ramp, 4).unwrap() < 1e-12);
        assert!(adev(&ramp, 4).unwrap() < 1e-12);
    }

    #[test]
    fn alternating_example() {
        let p = series(vec![0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!((mdev(&p, 1).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((tdev(&p, 1).unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sliding_sum_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = PhaseSeries::new(x.clone(), 0.5).unwrap();
        for m in [2, 3, 7, 50, 166] {
            let a = mdev(&p, m).unwrap();
            let b = mdev_naive(&x, m, 0.5);
            assert!((a / b - 1.0).abs() < 1e-10, "m={m}");
        }
    }

    #[test]
    fn mdev_equals_adev_at_one() {
        let p = noise(ClockNoiseKind::WhitePm, 1.0, 2);
        assert_eq!(mdev(&p, 1).unwrap().to_bits(), adev(&p, 1).unwrap().to_bits());
    }

    #[test]
    fn white_fm_ratio_follows_closed_form() {
        // For white FM, MDEV²/ADEV² = (m² + 1)/(2m²) → 1/2 as m grows.
        let p = noise(ClockNoiseKind::WhiteFm, 1e-12, 3);
        for m in [2usize, 4, 8, 16] {
            let r = mdev(&p, m).unwrap() / adev(&p, m).unwrap();
            let want = (((m * m + 1) as f64) / (2.0 * (m * m) as f64)).sqrt();
            assert!((r / want - 1.0).abs() < 0.05, "m={m}: {r} vs {want}");
        }
    }

    #[test]
    fn white_pm_levels() {
        let p = noise(ClockNoiseKind::WhitePm, 2.0, 4);
        let sx = 2e-12;
        assert!((adev(&p, 1).unwrap() / (3f64.sqrt() * sx) - 1.0).abs() < 0.05);
        assert!((tdev(&p, 1).unwrap() / sx - 1.0).abs() < 0.05);
    }

    #[test]
    fn noise_type_slopes() {
        for (kind, level, want) in [
            (ClockNoiseKind::WhitePm, 1.0, -1.5),
            (ClockNoiseKind::FlickerPm, 1.0, -1.0),
            (ClockNoiseKind::WhiteFm, 1e-12, -0.5),
        ] {
            let p = noise(kind, level, 5);
            let s = stability_curve(&p, &[4, 8, 16, 32]).unwrap();
            let slope = loglog_slope(&s, Deviation::Mdev, 0.0, f64::INFINITY).unwrap();
            assert!((slope - want).abs() <= 0.15, "{kind:?}: {slope}");
        }
    }

    #[test]
    fn exact_power_law_slope() {
        let taus_s: Vec<f64> = vec![1.0, 2.0, 4.0, 8.0];
        let tdev: Vec<f64> = taus_s.iter().map(|t| 3.0 * t.powf(-0.5)).collect();
        let s = StabilitySeries {
            m_values: vec![1, 2, 4, 8],
            adev: tdev.clone(),
            mdev: tdev.clone(),
            n_terms: vec![1; 4],
            edf: vec![1.0; 4],
            tdev_lo: tdev.clone(),
            tdev_hi: tdev.clone(),
            taus_s,
            tdev,
        };
        assert!((loglog_slope(&s, Deviation::Tdev, 0.0, 10.0).unwrap() + 0.5).abs() < 1e-12);
        assert!(loglog_slope(&s, Deviation::Tdev, 3.0, 10.0).is_err());
    }

    #[test]
    fn range_checks() {
        let p = series(vec![0.0; 10]);
        assert!(mdev(&p, 3).is_ok());
        assert!(mdev(&p, 4).is_err());
        assert!(adev(&p, 4).is_ok());
        assert!(adev(&p, 5).is_err());
        assert!(mdev(&p, 0).is_err());
    }

    #[test]
    fn gaps_pool_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..300).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut v: Vec<Option<f64>> = a.iter().copied().map(Some).collect();
        v.push(None);
        v.extend(b.iter().copied().map(Some));
        let p = PhaseSeries::from_optional(&v, 1.0).unwrap();
        assert_eq!(p.gap_count(), 1);
        // Oracle: pool the naive sums of the two runs by hand.
        let part = |x: &[f64]| {
            let n = x.len() - 5;
            (mdev_naive(x, 2, 1.0).powi(2) * 8.0 * 4.0 * n as f64, n)
        };
        let (sa, na) = part(&a);
        let (sb, nb) = part(&b);
        let want = ((sa + sb) / (8.0 * 4.0 * (na + nb) as f64)).sqrt();
        assert!((mdev(&p, 2).unwrap() / want - 1.0).abs() < 1e-10);
    }

    #[test]
    fn curve_identity_and_csv() {
        let p = noise(ClockNoiseKind::WhitePm, 1.0, 7);
        let s = stability_curve(&p, &octave_m_grid(&p)[..6]).unwrap();
        for i in 0..s.len() {
            assert_eq!(s.tdev[i], s.taus_s[i] / 3f64.sqrt() * s.mdev[i]);
            assert!(s.tdev_lo[i] < s.tdev[i] && s.tdev[i] < s.tdev_hi[i]);
        }
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("tau_s,adev,mdev,tdev,n_terms\n1,"));
    }
}
