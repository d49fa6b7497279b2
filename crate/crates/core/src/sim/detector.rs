use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::clock::ClockPhase;
use super::model::DetectorModel;
use super::rng::{derive_seed, rng_from_seed, PoissonArrivals};
use crate::error::{Error, Result};
use crate::tagstream::TimeTagStream;

/// Detects a photon stream and stamps it on the detector's clock.
///
/// Order of effects: efficiency thinning, Gaussian timing jitter, dark
/// counts (Poisson over the stream span), clock transform
/// `t_local = t_true + phase(t_true)`, then the non-paralyzable dead-time
/// filter. Timestamps are rounded to integer picoseconds only at the end.
pub fn timestamp(
    s: &TimeTagStream,
    det: &DetectorModel,
    clock: &ClockPhase,
    seed: u64,
) -> Result<TimeTagStream> {
    det.validate("detector")?;
    let span = s.span();
    if !clock.covers(span.start_ps, span.end_ps) {
        return Err(Error::Coverage(format!(
            "clock phase trace does not cover span [{}, {}) ps",
            span.start_ps, span.end_ps
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut events: Vec<(i64, f64)> = Vec::with_capacity(s.len());
    for &t in s.tags() {
        if det.efficiency < 1.0 && rng.random::<f64>() >= det.efficiency {
            continue;
        }
        let jitter = if det.jitter_sigma_ps > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            det.jitter_sigma_ps * z
        } else {
            0.0
        };
        events.push((t, jitter));
    }
    if det.dark_rate_hz > 0.0 {
        let mut dark_rng = rng_from_seed(derive_seed(seed, "dark"));
        events.extend(PoissonArrivals::new(
            &mut dark_rng,
            det.dark_rate_hz,
            span.start_ps,
            span.end_ps,
        ));
    }
    let mut tags = Vec::with_capacity(events.len());
    for (t, extra) in events {
        let phase = clock
            .offset_ps_at(t)
            .ok_or_else(|| Error::Coverage(format!("no clock phase at {t} ps")))?;
        tags.push(t + (extra + phase).round() as i64);
    }
    tags.sort_unstable();
    apply_dead_time(&mut tags, det.dead_time_ps);
    Ok(TimeTagStream::covering(s.channel().clone(), tags, span))
}

/// Drops every tag closer than `dead_time_ps` to the previous kept tag.
pub fn apply_dead_time(tags: &mut Vec<i64>, dead_time_ps: i64) {
    if dead_time_ps <= 0 || tags.is_empty() {
        return;
    }
    let mut last = tags[0];
    let mut w = 1;
    for r in 1..tags.len() {
        let t = tags[r];
        if t - last >= dead_time_ps {
            tags[w] = t;
            w += 1;
            last = t;
        }
    }
    tags.truncate(w);
}
