//! Full loop-back experiment wiring.
//!
//! Signal photons are split 50/50 into route A (free-space uplink, then the
//! fiber return) and route B (fiber out, then the free-space downlink);
//! route A ends on D1, route B on D2. Idler photons are attenuated and split
//! 50/50 onto the local reference detectors D3 and D4. Route A's delay is
//! therefore `t1 − t3` and route B's is `t2 − t4`.
//!
//! In `loopback` mode every detector is stamped by the local clock. In
//! `two_clock` mode D1 and D4 are stamped by the remote clock, so that
//! `t1 − t3` carries `+(remote − local)` and `t2 − t4` carries
//! `−(remote − local)`; the recovered offset then tracks local − remote.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::channel::{propagate, split};
use super::clock::ClockPhase;
use super::detector::timestamp;
use super::fading::{synthesize_fading_at, FadingTrace};
use super::model::{ChannelModel, ClockModel, DetectorModel, PairSourceModel};
use super::rng::{derive_seed, rng_from_seed, PoissonArrivals};
use super::source::generate_pairs;
use crate::error::{Error, Result};
use crate::tagstream::{ps_to_seconds, seconds_to_ps, Channel, Span, TimeTagStream, PS_PER_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    FsUplink,
    FsDownlink,
    FiberOut,
    FiberReturn,
}

impl Segment {
    pub const ALL: [Segment; 4] = [
        Segment::FsUplink,
        Segment::FsDownlink,
        Segment::FiberOut,
        Segment::FiberReturn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Segment::FsUplink => "fs_uplink",
            Segment::FsDownlink => "fs_downlink",
            Segment::FiberOut => "fiber_out",
            Segment::FiberReturn => "fiber_return",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segments {
    pub fs_uplink: ChannelModel,
    pub fs_downlink: ChannelModel,
    pub fiber_out: ChannelModel,
    pub fiber_return: ChannelModel,
}

impl Segments {
    pub fn get(&self, seg: Segment) -> &ChannelModel {
        match seg {
            Segment::FsUplink => &self.fs_uplink,
            Segment::FsDownlink => &self.fs_downlink,
            Segment::FiberOut => &self.fiber_out,
            Segment::FiberReturn => &self.fiber_return,
        }
    }

    pub fn get_mut(&mut self, seg: Segment) -> &mut ChannelModel {
        match seg {
            Segment::FsUplink => &mut self.fs_uplink,
            Segment::FsDownlink => &mut self.fs_downlink,
            Segment::FiberOut => &mut self.fiber_out,
            Segment::FiberReturn => &mut self.fiber_return,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detectors {
    #[serde(rename = "D1")]
    pub d1: DetectorModel,
    #[serde(rename = "D2")]
    pub d2: DetectorModel,
    #[serde(rename = "D3")]
    pub d3: DetectorModel,
    #[serde(rename = "D4")]
    pub d4: DetectorModel,
}

impl Detectors {
    pub fn uniform(det: DetectorModel) -> Self {
        Detectors {
            d1: det.clone(),
            d2: det.clone(),
            d3: det.clone(),
            d4: det,
        }
    }

    pub fn get(&self, ch: &Channel) -> Option<&DetectorModel> {
        match ch {
            Channel::D1 => Some(&self.d1),
            Channel::D2 => Some(&self.d2),
            Channel::D3 => Some(&self.d3),
            Channel::D4 => Some(&self.d4),
            Channel::Named(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    Loopback,
    TwoClock,
}

fn default_phase_dt() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Clocks {
    pub local: ClockModel,
    pub mode: ClockMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<ClockModel>,
    /// Sampling interval of the clock phase grid.
    #[serde(default = "default_phase_dt")]
    pub phase_dt_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    pub duration_s: f64,
    pub window_s: f64,
    pub seed: u64,
}

fn default_window_ps() -> i64 {
    2000
}

fn default_bin_ps() -> i64 {
    10
}

/// Coincidence analysis knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoincidenceConfig {
    #[serde(default = "default_window_ps")]
    pub window_ps: i64,
    #[serde(default = "default_bin_ps")]
    pub bin_width_ps: i64,
}

impl Default for CoincidenceConfig {
    fn default() -> Self {
        CoincidenceConfig {
            window_ps: default_window_ps(),
            bin_width_ps: default_bin_ps(),
        }
    }
}

/// Complete description of a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub source: PairSourceModel,
    /// Attenuation on the idler arm ahead of the reference splitter.
    pub idler_attenuation_db: f64,
    pub segments: Segments,
    pub detectors: Detectors,
    pub clocks: Clocks,
    pub run: RunParams,
    #[serde(default)]
    pub coincidence: CoincidenceConfig,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate("source")?;
        if !(self.idler_attenuation_db.is_finite() && self.idler_attenuation_db >= 0.0) {
            return Err(Error::config("idler_attenuation_db", "must be >= 0"));
        }
        for seg in Segment::ALL {
            self.segments.get(seg).validate(&format!("segments.{seg}"))?;
        }
        for ch in Channel::DETECTORS {
            self.detectors.get(&ch).unwrap().validate(&format!("detectors.{ch}"))?;
        }
        self.clocks.local.validate("clocks.local")?;
        match (&self.clocks.mode, &self.clocks.remote) {
            (ClockMode::TwoClock, None) => {
                return Err(Error::config("clocks.remote", "is required in two_clock mode"))
            }
            (_, Some(r)) => r.validate("clocks.remote")?,
            _ => {}
        }
        if !(self.clocks.phase_dt_s.is_finite() && self.clocks.phase_dt_s > 0.0) {
            return Err(Error::config("clocks.phase_dt_s", "must be > 0"));
        }
        let run = &self.run;
        if !(run.duration_s.is_finite() && run.duration_s > 0.0) {
            return Err(Error::config("run.duration_s", "must be > 0"));
        }
        if !(run.window_s.is_finite() && run.window_s > 0.0) {
            return Err(Error::config("run.window_s", "must be > 0"));
        }
        if run.window_s > run.duration_s {
            return Err(Error::config("run.window_s", "must not exceed run.duration_s"));
        }
        let c = &self.coincidence;
        if c.bin_width_ps < 1 {
            return Err(Error::config("coincidence.bin_width_ps", "must be >= 1"));
        }
        if c.window_ps < c.bin_width_ps {
            return Err(Error::config(
                "coincidence.window_ps",
                "must be >= coincidence.bin_width_ps",
            ));
        }
        Ok(())
    }

    /// Mean route delays `(A, B)` from the segment base delays.
    pub fn route_delays_ps(&self) -> (f64, f64) {
        let s = &self.segments;
        (
            s.fs_uplink.base_delay_ps + s.fiber_return.base_delay_ps,
            s.fiber_out.base_delay_ps + s.fs_downlink.base_delay_ps,
        )
    }

    /// Offset recovered by a perfect loop-back measurement: `(B − A)/2`.
    pub fn route_asymmetry_ps(&self) -> f64 {
        let (a, b) = self.route_delays_ps();
        0.5 * (b - a)
    }
}

/// Known inputs of a simulated run, sampled at window centers.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GroundTruth {
    pub route_asymmetry_ps: f64,
    pub sample_times_s: Vec<f64>,
    /// Loopback: the constant route asymmetry. Two-clock: local − remote.
    pub true_t0_ps: Vec<f64>,
    /// Delay (base + drift) of each segment at the sample times.
    pub segment_delays_ps: BTreeMap<String, Vec<f64>>,
    #[serde(skip)]
    pub fading: BTreeMap<String, FadingTrace>,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub streams: BTreeMap<Channel, TimeTagStream>,
    pub truth: GroundTruth,
}

impl SimulationOutput {
    pub fn stream(&self, ch: Channel) -> &TimeTagStream {
        &self.streams[&ch]
    }
}

fn through_segment(
    cfg: &ScenarioConfig,
    seg: Segment,
    s: &TimeTagStream,
    seed: u64,
    label: &str,
) -> Result<(TimeTagStream, Option<FadingTrace>)> {
    let ch = cfg.segments.get(seg);
    let trace = match &ch.fading {
        Some(f) => {
            let span = s.span();
            let duration = ps_to_seconds(span.len_ps()) + f.dt_s;
            let fseed = derive_seed(seed, &format!("fading/{seg}{label}"));
            Some(synthesize_fading_at(f, span.start_ps, duration, fseed)?)
        }
        None => None,
    };
    let out = propagate(s, ch, trace.as_ref(), derive_seed(seed, &format!("segment/{seg}{label}")))?;
    Ok((out, trace))
}

/// Runs the full experiment for `cfg`; identical configs give identical
/// output.
pub fn simulate_scenario(cfg: &ScenarioConfig) -> Result<SimulationOutput> {
    cfg.validate()?;
    let seed = cfg.run.seed;
    let pairs = generate_pairs(&cfg.source, cfg.run.duration_s, derive_seed(seed, "pairs"))?;

    let (routes, idlers) = rayon::join(
        || -> Result<_> {
            let (sig_a, sig_b) = split(&pairs.signal, 0.5, derive_seed(seed, "split/bs1"))?;
            Ok(rayon::join(
                || -> Result<_> {
                    let (up, up_fade) = through_segment(cfg, Segment::FsUplink, &sig_a, seed, "")?;
                    let (back, back_fade) =
                        through_segment(cfg, Segment::FiberReturn, &up, seed, "")?;
                    Ok((back, [up_fade, back_fade]))
                },
                || -> Result<_> {
                    let (out, out_fade) = through_segment(cfg, Segment::FiberOut, &sig_b, seed, "")?;
                    let (down, down_fade) =
                        through_segment(cfg, Segment::FsDownlink, &out, seed, "")?;
                    Ok((down, [out_fade, down_fade]))
                },
            ))
        },
        || -> Result<_> {
            let att = ChannelModel::ideal(0.0).with_loss(cfg.idler_attenuation_db);
            let attenuated = propagate(&pairs.idler, &att, None, derive_seed(seed, "idler/attenuator"))?;
            split(&attenuated, 0.5, derive_seed(seed, "split/bs2"))
        },
    );
    let (route_a, route_b) = routes?;
    let (route_a, [up_fade, ret_fade]) = route_a?;
    let (route_b, [out_fade, down_fade]) = route_b?;
    let (idler3, idler4) = idlers?;
    drop(pairs);

    let arriving = [
        (Channel::D1, route_a),
        (Channel::D2, route_b),
        (Channel::D3, idler3),
        (Channel::D4, idler4),
    ];
    let hull = arriving
        .iter()
        .map(|(_, s)| s.span())
        .reduce(|a, b| a.hull(&b))
        .expect("four streams");
    let margin = seconds_to_ps(cfg.clocks.phase_dt_s);
    let clock_span = (hull.start_ps - margin, hull.end_ps + margin);
    let local = ClockPhase::synthesize(
        &cfg.clocks.local,
        clock_span.0,
        clock_span.1,
        cfg.clocks.phase_dt_s,
        derive_seed(seed, "clock/local"),
    )?;
    let remote = match (&cfg.clocks.mode, &cfg.clocks.remote) {
        (ClockMode::TwoClock, Some(r)) => Some(ClockPhase::synthesize(
            r,
            clock_span.0,
            clock_span.1,
            cfg.clocks.phase_dt_s,
            derive_seed(seed, "clock/remote"),
        )?),
        _ => None,
    };

    let detected: Vec<Result<(Channel, TimeTagStream)>> = {
        use rayon::prelude::*;
        arriving
            .into_par_iter()
            .map(|(ch, s)| {
                let det = cfg.detectors.get(&ch).expect("physical detector");
                let clock = match (&remote, &ch) {
                    (Some(r), Channel::D1 | Channel::D4) => r,
                    _ => &local,
                };
                let out = timestamp(&s, det, clock, derive_seed(seed, &format!("detector/{ch}")))?;
                Ok((ch.clone(), out.with_channel(ch)))
            })
            .collect()
    };
    let mut streams = BTreeMap::new();
    for r in detected {
        let (ch, s) = r?;
        streams.insert(ch, s);
    }

    let mut truth = GroundTruth {
        route_asymmetry_ps: cfg.route_asymmetry_ps(),
        ..Default::default()
    };
    let n_samples = (cfg.run.duration_s / cfg.run.window_s).floor().max(1.0) as usize;
    for k in 0..n_samples {
        let t_s = (k as f64 + 0.5) * cfg.run.window_s;
        let t_ps = seconds_to_ps(t_s);
        truth.sample_times_s.push(t_s);
        let t0 = match &remote {
            Some(r) => {
                let l = local.offset_ps_at(t_ps).unwrap_or(0.0);
                l - r.offset_ps_at(t_ps).unwrap_or(0.0)
            }
            None => truth.route_asymmetry_ps,
        };
        truth.true_t0_ps.push(t0);
        for seg in Segment::ALL {
            truth
                .segment_delays_ps
                .entry(seg.name().to_string())
                .or_default()
                .push(cfg.segments.get(seg).delay_at(t_s));
        }
    }
    for (seg, trace) in [
        (Segment::FsUplink, up_fade),
        (Segment::FiberReturn, ret_fade),
        (Segment::FiberOut, out_fade),
        (Segment::FsDownlink, down_fade),
    ] {
        if let Some(t) = trace {
            truth.fading.insert(seg.name().to_string(), t);
        }
    }
    Ok(SimulationOutput { streams, truth })
}

/// Homogeneous Poisson photon stream over `span`.
pub fn poisson_stream(channel: Channel, rate_hz: f64, span: Span, seed: u64) -> TimeTagStream {
    let mut rng = rng_from_seed(seed);
    let tags = PoissonArrivals::new(&mut rng, rate_hz, span.start_ps, span.end_ps)
        .map(|(t, _)| t)
        .collect();
    TimeTagStream::new(channel, tags, span).expect("poisson arrivals are sorted and in span")
}

/// One-way countrate probe: signal photons (half the pair rate, as after the
/// first splitter) sent through a single segment onto `detector`, stamped by
/// the local clock.
pub fn probe_link(
    cfg: &ScenarioConfig,
    seg: Segment,
    detector: &DetectorModel,
) -> Result<(TimeTagStream, Option<FadingTrace>)> {
    cfg.validate()?;
    let seed = cfg.run.seed;
    let label = format!("probe/{seg}");
    let span = Span::new(0, seconds_to_ps(cfg.run.duration_s))?;
    let photons = poisson_stream(
        Channel::Named(label.clone()),
        0.5 * cfg.source.pair_rate_hz,
        span,
        derive_seed(seed, &label),
    );
    let (arrived, trace) = through_segment(cfg, seg, &photons, seed, "/probe")?;
    let det_seed = derive_seed(seed, &format!("{label}/detector"));
    let clock = ClockPhase::constant(cfg.clocks.local.offset_ps / PS_PER_S);
    let out = timestamp(&arrived, detector, &clock, det_seed)?;
    Ok((out, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric_config() -> ScenarioConfig {
        ScenarioConfig {
            source: PairSourceModel {
                pair_rate_hz: 2e5,
                correlation_sigma_ps: 0.0,
            },
            idler_attenuation_db: 0.0,
            segments: Segments {
                fs_uplink: ChannelModel::ideal(6_700_000.0),
                fs_downlink: ChannelModel::ideal(6_700_000.0),
                fiber_out: ChannelModel::ideal(35_000_000.0),
                fiber_return: ChannelModel::ideal(35_000_000.0),
            },
            detectors: Detectors::uniform(DetectorModel::ideal()),
            clocks: Clocks {
                local: ClockModel::ideal(),
                mode: ClockMode::Loopback,
                remote: None,
                phase_dt_s: 1e-3,
            },
            run: RunParams {
                duration_s: 0.05,
                window_s: 0.01,
                seed: 42,
            },
            coincidence: CoincidenceConfig::default(),
        }
    }

    #[test]
    fn deterministic_output() {
        let cfg = symmetric_config();
        let a = simulate_scenario(&cfg).unwrap();
        let b = simulate_scenario(&cfg).unwrap();
        for ch in Channel::DETECTORS {
            assert_eq!(a.stream(ch.clone()), b.stream(ch));
        }
    }

    #[test]
    fn lossless_routes_conserve_photons() {
        let cfg = symmetric_config();
        let out = simulate_scenario(&cfg).unwrap();
        let n1 = out.stream(Channel::D1).len();
        let n2 = out.stream(Channel::D2).len();
        let n3 = out.stream(Channel::D3).len();
        let n4 = out.stream(Channel::D4).len();
        assert_eq!(n1 + n2, n3 + n4);
        assert_eq!(out.truth.route_asymmetry_ps, 0.0);
    }

    #[test]
    fn two_clock_requires_remote() {
        let mut cfg = symmetric_config();
        cfg.clocks.mode = ClockMode::TwoClock;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("clocks.remote"));
    }

    #[test]
    fn window_longer_than_run_is_rejected() {
        let mut cfg = symmetric_config();
        cfg.run.window_s = 1.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("run.window_s"));
    }

    #[test]
    fn link_budget_survival_ratio() {
        // Route A: 23 + 2.5 dB; route B: 2.5 + 27 dB.
        let mut cfg = symmetric_config();
        cfg.source.pair_rate_hz = 2e8;
        cfg.run.duration_s = 0.1;
        cfg.run.window_s = 0.1;
        cfg.segments.fs_uplink.mean_loss_db = 23.0;
        cfg.segments.fiber_return.mean_loss_db = 2.5;
        cfg.segments.fiber_out.mean_loss_db = 2.5;
        cfg.segments.fs_downlink.mean_loss_db = 27.0;
        let out = simulate_scenario(&cfg).unwrap();
        let n_a = out.stream(Channel::D1).len() as f64;
        let n_b = out.stream(Channel::D2).len() as f64;
        let sent = 0.5 * 2e8 * 0.1;
        let (pa, pb) = (10f64.powf(-2.55), 10f64.powf(-2.95));
        assert!((n_a - sent * pa).abs() < 5.0 * (sent * pa).sqrt(), "{n_a}");
        assert!((n_b - sent * pb).abs() < 5.0 * (sent * pb).sqrt(), "{n_b}");
    }

    #[test]
    fn idler_attenuation_sets_reference_rate() {
        // 13 dB after the pair budget; each reference detector sees half.
        let mut cfg = symmetric_config();
        cfg.source.pair_rate_hz = 12.77e6;
        cfg.idler_attenuation_db = 13.0;
        cfg.run.duration_s = 0.1;
        cfg.run.window_s = 0.1;
        let out = simulate_scenario(&cfg).unwrap();
        let rate3 = out.stream(Channel::D3).len() as f64 / 0.1;
        assert!((rate3 / 320e3 - 1.0).abs() < 0.02, "{rate3}");
    }
}
