//! Two-way time transfer: per-window delays, offset recovery and the
//! precision predictors.
//!
//! Route convention: route A (free-space up, fiber back) is measured as
//! `t1 − t3` on D1/D3, route B (fiber out, free-space down) as `t2 − t4` on
//! D2/D4, and `t0 = (B − A)/2`.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coincidence::{cross_correlate, fit_peak, locate_delay, PeakFit};
use crate::error::{Error, Result};
use crate::tagstream::{ps_to_seconds, seconds_to_ps, Channel, Span, TimeTagStream};

pub const ROUTE_CONVENTION: &str =
    "route A (fs_uplink+fiber_return) = t1-t3 [D1-D3]; route B (fiber_out+fs_downlink) = t2-t4 [D2-D4]; t0 = (B - A)/2";

/// `(down − up)/2`.
pub fn recover_offset(up_center_ps: f64, down_center_ps: f64) -> f64 {
    0.5 * (down_center_ps - up_center_ps)
}

/// Offset uncertainty from the two one-way delay uncertainties.
pub fn combine_sd(sd_up_ps: f64, sd_down_ps: f64) -> f64 {
    0.5 * sd_up_ps.hypot(sd_down_ps)
}

fn check_counts(n_u: f64, n_d: f64) -> Result<()> {
    if !(n_u > 0.0) || !(n_d > 0.0) {
        return Err(Error::arg(format!("pair counts must be positive (got {n_u}, {n_d})")));
    }
    Ok(())
}

/// Predicted offset SD from the 1/e half-widths and pair counts of the two
/// peaks: `½√((w_u/√(2N_u))² + (w_d/√(2N_d))²)`.
pub fn predict_sd(width_u_ps: f64, n_u: f64, width_d_ps: f64, n_d: f64) -> Result<f64> {
    check_counts(n_u, n_d)?;
    let u = width_u_ps / (2.0 * n_u).sqrt();
    let d = width_d_ps / (2.0 * n_d).sqrt();
    Ok(0.5 * u.hypot(d))
}

/// As [`predict_sd`] with each count reduced to `N/(1 + 1/CAR)`; an infinite
/// CAR leaves the count unchanged.
pub fn predict_sd_car(
    width_u_ps: f64,
    n_u: f64,
    car_u: f64,
    width_d_ps: f64,
    n_d: f64,
    car_d: f64,
) -> Result<f64> {
    if !(car_u > 0.0) || !(car_d > 0.0) {
        return Err(Error::arg(format!("CAR must be positive (got {car_u}, {car_d})")));
    }
    predict_sd(width_u_ps, n_u / (1.0 + 1.0 / car_u), width_d_ps, n_d / (1.0 + 1.0 / car_d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwttWindowResult {
    pub index: usize,
    pub window_start_ps: i64,
    /// Route A, D1 relative to D3.
    pub up_fit: PeakFit,
    /// Route B, D2 relative to D4.
    pub down_fit: PeakFit,
    pub t0_ps: f64,
    pub predicted_sd_eq2_ps: f64,
    pub predicted_sd_eq3_ps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowGap {
    pub index: usize,
    pub window_start_ps: i64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwttSeries {
    pub window_s: f64,
    pub n_windows: usize,
    /// Successful windows in ascending index order.
    pub results: Vec<TwttWindowResult>,
    pub gaps: Vec<WindowGap>,
    /// True offset at each window center, when known.
    pub truth: Option<Vec<f64>>,
    pub up_guess_ps: i64,
    pub down_guess_ps: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub n_windows: usize,
    pub n_valid: usize,
    pub gap_indices: Vec<usize>,
    pub t0_mean_ps: f64,
    /// Sample standard deviation of `t0` over valid windows.
    pub t0_sd_ps: f64,
    pub mean_sd_eq2_ps: f64,
    pub mean_sd_eq3_ps: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

impl TwttSeries {
    pub fn t0_values(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.t0_ps).collect()
    }

    /// `t0` by window index, `None` at gaps.
    pub fn t0_slots(&self) -> Vec<Option<f64>> {
        let mut v = vec![None; self.n_windows];
        for r in &self.results {
            v[r.index] = Some(r.t0_ps);
        }
        v
    }

    pub fn summary(&self) -> SeriesSummary {
        let t0 = self.t0_values();
        let eq2: Vec<f64> = self.results.iter().map(|r| r.predicted_sd_eq2_ps).collect();
        let eq3: Vec<f64> = self.results.iter().map(|r| r.predicted_sd_eq3_ps).collect();
        SeriesSummary {
            n_windows: self.n_windows,
            n_valid: self.results.len(),
            gap_indices: self.gaps.iter().map(|g| g.index).collect(),
            t0_mean_ps: mean(&t0),
            t0_sd_ps: sample_sd(&t0),
            mean_sd_eq2_ps: mean(&eq2),
            mean_sd_eq3_ps: mean(&eq3),
        }
    }

    /// One row per window; gap rows carry only the start time. The last
    /// column is `t0` minus the series mean.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "window_start_s,up_delay_ps,down_delay_ps,t0_ps,sd_eq2_ps,sd_eq3_ps,car_up,car_down,fwhm_up_ps,fwhm_down_ps,t0_minus_mean_ps"
        )?;
        let m = mean(&self.t0_values());
        let mut results = self.results.iter().peekable();
        let mut gaps = self.gaps.iter().peekable();
        for i in 0..self.n_windows {
            if let Some(r) = results.next_if(|r| r.index == i) {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    ps_to_seconds(r.window_start_ps),
                    r.up_fit.center_ps,
                    r.down_fit.center_ps,
                    r.t0_ps,
                    r.predicted_sd_eq2_ps,
                    r.predicted_sd_eq3_ps,
                    r.up_fit.car,
                    r.down_fit.car,
                    r.up_fit.fwhm_ps,
                    r.down_fit.fwhm_ps,
                    r.t0_ps - m
                )?;
            } else if let Some(g) = gaps.next_if(|g| g.index == i) {
                writeln!(w, "{},,,,,,,,,,", ps_to_seconds(g.window_start_ps))?;
            }
        }
        Ok(())
    }
}

/// Histogram and search settings for [`analyze_series`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub window_ps: i64,
    pub bin_width_ps: i64,
    /// Expected route delays; located automatically when absent.
    pub up_guess_ps: Option<i64>,
    pub down_guess_ps: Option<i64>,
    pub search_ps: i64,
    pub coarse_bin_ps: i64,
    pub search_tags: usize,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            window_ps: 2000,
            bin_width_ps: 10,
            up_guess_ps: None,
            down_guess_ps: None,
            search_ps: 500_000,
            coarse_bin_ps: 1000,
            search_tags: 50_000,
        }
    }
}

fn fetch<'a>(streams: &'a BTreeMap<Channel, TimeTagStream>, ch: Channel) -> Result<&'a TimeTagStream> {
    streams
        .get(&ch)
        .ok_or_else(|| Error::arg(format!("missing stream for channel {ch}")))
}

fn window_fit(a: &TimeTagStream, b: &TimeTagStream, p: &AnalysisParams, guess: i64) -> Result<PeakFit> {
    fit_peak(&cross_correlate(a, b, p.window_ps, p.bin_width_ps, guess)?)
}

// Coarse delay search followed by one fine fit on the first window.
fn resolve_guess(
    a: &TimeTagStream,
    b: &TimeTagStream,
    first: Span,
    p: &AnalysisParams,
    given: Option<i64>,
) -> Result<i64> {
    if let Some(g) = given {
        return Ok(g);
    }
    let coarse = locate_delay(a, b, p.search_ps, p.coarse_bin_ps, p.search_tags)?.ok_or_else(|| {
        Error::arg(format!("no coincidences between {} and {} within ±{} ps", a.channel(), b.channel(), p.search_ps))
    })?;
    let wa = a.slice_window(first.start_ps, first.end_ps)?;
    let wb = b.slice_window(first.start_ps, first.end_ps)?;
    Ok(match window_fit(&wa, &wb, p, coarse) {
        Ok(f) if (f.center_ps - coarse as f64).abs() < p.window_ps as f64 => f.center_ps.round() as i64,
        _ => coarse,
    })
}

/// Splits the joint span of D1–D4 into consecutive windows of `window_s`
/// and extracts both one-way delays and `t0` in each. Windows where either
/// fit fails are recorded as gaps.
pub fn analyze_series(
    streams: &BTreeMap<Channel, TimeTagStream>,
    window_s: f64,
    params: &AnalysisParams,
) -> Result<TwttSeries> {
    let [d1, d2, d3, d4] = [Channel::D1, Channel::D2, Channel::D3, Channel::D4]
        .map(|c| fetch(streams, c));
    let (d1, d2, d3, d4) = (d1?, d2?, d3?, d4?);
    let common = [d2, d3, d4].iter().fold(d1.span(), |acc, s| acc.hull(&s.span()));
    let window_ps = seconds_to_ps(window_s);
    if !(window_s > 0.0) || window_ps < 1 {
        return Err(Error::arg(format!("window must be positive, got {window_s} s")));
    }
    let n_windows = (common.len_ps() / window_ps) as usize;
    if n_windows == 0 {
        return Err(Error::arg(format!(
            "common span of {} s holds no complete {window_s} s window",
            common.duration_s()
        )));
    }
    let win = |k: usize| {
        let start = common.start_ps + k as i64 * window_ps;
        Span { start_ps: start, end_ps: start + window_ps }
    };
    let up_guess = resolve_guess(d3, d1, win(0), params, params.up_guess_ps)?;
    let down_guess = resolve_guess(d4, d2, win(0), params, params.down_guess_ps)?;

    let outcomes: Vec<std::result::Result<TwttWindowResult, WindowGap>> = (0..n_windows)
        .into_par_iter()
        .map(|k| {
            let span = win(k);
            let run = || -> Result<TwttWindowResult> {
                let sl = |s: &TimeTagStream| s.slice_window(span.start_ps, span.end_ps);
                let up = window_fit(&sl(d3)?, &sl(d1)?, params, up_guess)?;
                let down = window_fit(&sl(d4)?, &sl(d2)?, params, down_guess)?;
                let wu = std::f64::consts::SQRT_2 * up.sigma_ps;
                let wd = std::f64::consts::SQRT_2 * down.sigma_ps;
                Ok(TwttWindowResult {
                    index: k,
                    window_start_ps: span.start_ps,
                    up_fit: up,
                    down_fit: down,
                    t0_ps: recover_offset(up.center_ps, down.center_ps),
                    predicted_sd_eq2_ps: predict_sd(wu, up.pair_count, wd, down.pair_count)?,
                    predicted_sd_eq3_ps: predict_sd_car(wu, up.pair_count, up.car, wd, down.pair_count, down.car)?,
                })
            };
            run().map_err(|e| WindowGap {
                index: k,
                window_start_ps: span.start_ps,
                reason: e.to_string(),
            })
        })
        .collect();
    let mut results = Vec::new();
    let mut gaps = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(g) => gaps.push(g),
        }
    }
    Ok(TwttSeries {
        window_s,
        n_windows,
        results,
        gaps,
        truth: None,
        up_guess_ps: up_guess,
        down_guess_ps: down_guess,
    })
}
