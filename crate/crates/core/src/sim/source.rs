use rand_distr::{Distribution, Normal};

use super::model::PairSourceModel;
use super::rng::{rng_from_seed, PoissonArrivals};
use crate::error::{Error, Result};
use crate::tagstream::{seconds_to_ps, Channel, Span, TimeTagStream};

/// Signal and idler photon streams of an energy-time entangled pair source.
#[derive(Debug, Clone)]
pub struct PairStreams {
    pub signal: TimeTagStream,
    pub idler: TimeTagStream,
}

/// Emits pairs as a Poisson process over `[0, duration)`.
///
/// Each pair has emission time `e` and correlation offset
/// `δ ~ N(0, correlation_sigma)`: signal at `e + δ/2`, idler at `e − δ/2`.
/// Both streams share the span `[0, duration)`; a pair whose photons would
/// fall outside it is dropped (only possible within a few sigma of the
/// boundaries).
pub fn generate_pairs(src: &PairSourceModel, duration_s: f64, seed: u64) -> Result<PairStreams> {
    src.validate("source")?;
    if !(duration_s >= 0.0) {
        return Err(Error::arg(format!("duration must be >= 0, got {duration_s}")));
    }
    let span = Span::new(0, seconds_to_ps(duration_s))?;
    let mut rng = rng_from_seed(seed);
    let expected = (src.pair_rate_hz * duration_s).ceil() as usize;
    let mut signal = Vec::with_capacity(expected + expected / 64 + 16);
    let mut idler = Vec::with_capacity(expected + expected / 64 + 16);

    let offsets: Vec<(i64, f64)> =
        PoissonArrivals::new(&mut rng, src.pair_rate_hz, span.start_ps, span.end_ps).collect();
    let normal = Normal::new(0.0, src.correlation_sigma_ps.max(0.0))
        .map_err(|e| Error::arg(e.to_string()))?;
    for (whole, frac) in offsets {
        let half = if src.correlation_sigma_ps > 0.0 {
            0.5 * normal.sample(&mut rng)
        } else {
            0.0
        };
        let s = whole + (frac + half).round() as i64;
        let i = whole + (frac - half).round() as i64;
        if span.contains(s) && span.contains(i) {
            signal.push(s);
            idler.push(i);
        }
    }
    signal.sort_unstable();
    idler.sort_unstable();
    Ok(PairStreams {
        signal: TimeTagStream::new(Channel::Named("signal".into()), signal, span)?,
        idler: TimeTagStream::new(Channel::Named("idler".into()), idler, span)?,
    })
}
