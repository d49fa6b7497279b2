use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::fading::FadingTrace;
use super::model::ChannelModel;
use super::rng::rng_from_seed;
use crate::error::{Error, Result};
use crate::tagstream::{Span, TimeTagStream, PS_PER_S};

/// Sends a photon stream through one link segment.
///
/// Each tag survives with probability `10^(−loss/10) · T(t)` (clipped to 1),
/// where `T` is the relative fading transmittance at the tag time. Survivors
/// are delayed by `base_delay + drift(t)` plus Gaussian jitter and re-sorted.
/// One uniform draw is consumed per input tag and one normal draw per
/// survivor, independent of the delay model.
pub fn propagate(
    s: &TimeTagStream,
    ch: &ChannelModel,
    fading: Option<&FadingTrace>,
    seed: u64,
) -> Result<TimeTagStream> {
    ch.validate("channel")?;
    let span = s.span();
    if let Some(trace) = fading {
        if !s.is_empty() && !trace.covers(span.start_ps, span.end_ps) {
            return Err(Error::Coverage(format!(
                "fading trace [{}, {}) ps does not cover stream span [{}, {}) ps",
                trace.start_ps,
                trace.end_ps(),
                span.start_ps,
                span.end_ps
            )));
        }
    }
    let mut rng = rng_from_seed(seed);
    let base_p = ch.transmittance();
    let mut out = Vec::with_capacity((s.len() as f64 * base_p.min(1.0) * 1.1) as usize + 16);
    let (mut min_shift, mut max_shift) = (i64::MAX, i64::MIN);
    for &t in s.tags() {
        let fade = fading.and_then(|tr| tr.at(t)).unwrap_or(1.0);
        let p = (base_p * fade).min(1.0);
        let u: f64 = rng.random();
        if u >= p {
            continue;
        }
        let mut delay = ch.delay_at(t as f64 / PS_PER_S);
        if ch.jitter_sigma_ps > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            delay += ch.jitter_sigma_ps * z;
        }
        let shift = delay.round() as i64;
        min_shift = min_shift.min(shift);
        max_shift = max_shift.max(shift);
        out.push(t + shift);
    }
    let nominal_shift = ch.base_delay_ps.round() as i64;
    let nominal = Span::new(span.start_ps + nominal_shift, span.end_ps + nominal_shift)?;
    Ok(TimeTagStream::covering(s.channel().clone(), out, nominal))
}

/// Randomly routes each tag to one of two outputs (a beam splitter);
/// `ratio` is the probability of the first output.
pub fn split(s: &TimeTagStream, ratio: f64, seed: u64) -> Result<(TimeTagStream, TimeTagStream)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::arg(format!("split ratio {ratio} outside [0, 1]")));
    }
    let mut rng = rng_from_seed(seed);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for &t in s.tags() {
        if rng.random::<f64>() < ratio {
            a.push(t);
        } else {
            b.push(t);
        }
    }
    Ok((
        TimeTagStream::new(s.channel().clone(), a, s.span())?,
        TimeTagStream::new(s.channel().clone(), b, s.span())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::model::{DriftModel, DriftShape};
    use crate::tagstream::Channel;

    fn uniform_stream(n: i64, step: i64) -> TimeTagStream {
        TimeTagStream::new(
            Channel::D1,
            (0..n).map(|i| i * step).collect(),
            Span::new(0, n * step).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn lossless_shift_is_exact() {
        let s = uniform_stream(1000, 1_000_000);
        let out = propagate(&s, &ChannelModel::ideal(1000.0), None, 1).unwrap();
        assert_eq!(out.len(), s.len());
        assert!(out.tags().iter().zip(s.tags()).all(|(o, i)| o - i == 1000));
    }

    #[test]
    fn ten_db_survival_within_binomial_bound() {
        // Binomial(1e5, 0.1): sd ≈ 95; the 5-sigma band is kept at ±500.
        let s = uniform_stream(100_000, 10_000);
        let out = propagate(&s, &ChannelModel::ideal(0.0).with_loss(10.0), None, 2).unwrap();
        assert!((out.len() as i64 - 10_000).abs() <= 500, "{}", out.len());
    }

    #[test]
    fn losses_compose() {
        let s = uniform_stream(200_000, 10_000);
        let a = propagate(&s, &ChannelModel::ideal(0.0).with_loss(3.0), None, 3).unwrap();
        let ab = propagate(&a, &ChannelModel::ideal(0.0).with_loss(4.0), None, 4).unwrap();
        let p = 10f64.powf(-0.7);
        let n = s.len() as f64;
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!((ab.len() as f64 - n * p).abs() < 5.0 * sd);
    }

    #[test]
    fn drift_is_applied_at_tag_time() {
        let s = uniform_stream(101, 1_000_000_000_000 / 100);
        let mut ch = ChannelModel::ideal(0.0);
        ch.drift = Some(DriftModel {
            amplitude_ps: 250.0,
            period_s: 1.0,
            shape: DriftShape::Sinusoid,
            table: vec![],
        });
        let out = propagate(&s, &ch, None, 5).unwrap();
        let shifts: Vec<i64> = out.tags().iter().zip(s.tags()).map(|(o, i)| o - i).collect();
        let (lo, hi) = (shifts.iter().min().unwrap(), shifts.iter().max().unwrap());
        assert_eq!(hi - lo, 500);
    }

    #[test]
    fn fading_zeros_block_photons() {
        let s = uniform_stream(1000, 1_000);
        let trace = FadingTrace {
            start_ps: 0,
            dt_ps: 500_000,
            values: vec![0.0, 2.0],
        };
        let out = propagate(&s, &ChannelModel::ideal(0.0), Some(&trace), 6).unwrap();
        assert!(out.tags().iter().all(|&t| t >= 500_000));
        assert_eq!(out.len(), 500);
    }

    #[test]
    fn coverage_gap_is_an_error() {
        let s = uniform_stream(1000, 1_000);
        let trace = FadingTrace {
            start_ps: 0,
            dt_ps: 1_000,
            values: vec![1.0; 10],
        };
        assert!(matches!(
            propagate(&s, &ChannelModel::ideal(0.0), Some(&trace), 1),
            Err(Error::Coverage(_))
        ));
    }

    #[test]
    fn split_partitions_tags() {
        let s = uniform_stream(10_000, 10);
        let (a, b) = split(&s, 0.5, 7).unwrap();
        assert_eq!(a.len() + b.len(), s.len());
        assert!((a.len() as i64 - 5000).abs() < 300);
    }
}
