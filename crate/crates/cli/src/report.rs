use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use qtwtt_core::coincidence::{CoincidenceHistogram, PeakFit};
use qtwtt_core::spectral::{RateTrace, Spectrum};
use qtwtt_core::stability::{loglog_slope, Deviation, StabilitySeries};
use qtwtt_core::twtt::{SeriesSummary, TwttSeries, ROUTE_CONVENTION};

use crate::error::{CliError, CliResult};

pub const REPORT_FILE: &str = "report.json";
pub const SERIES_FILE: &str = "series.csv";
pub const TDEV_FILE: &str = "tdev.csv";

/// A count-rate trace of one link with its spectrum.
pub struct LinkSpectrum {
    pub name: String,
    pub trace: RateTrace,
    pub spectrum: Spectrum,
}

/// Everything [`emit_report`] turns into files.
pub struct ReportInputs<'a> {
    pub config_text: Option<&'a str>,
    pub seed: Option<u64>,
    pub series: &'a TwttSeries,
    pub stability: Option<&'a StabilitySeries>,
    pub spectra: &'a [LinkSpectrum],
    /// Named coincidence histograms with their fits, when available.
    pub histograms: &'a [(String, CoincidenceHistogram, Option<PeakFit>)],
    /// Upper edge of the power-law fit band and the ratio frequency.
    pub psd_fit_max_hz: f64,
    pub psd_ratio_hz: f64,
}

#[derive(Debug, Serialize)]
pub struct SeriesReport {
    pub file: String,
    pub window_s: f64,
    #[serde(flatten)]
    pub summary: SeriesSummary,
    pub up_guess_ps: i64,
    pub down_guess_ps: i64,
    pub truth_mean_t0_ps: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct StabilityRow {
    pub tau_s: f64,
    pub adev: f64,
    pub mdev: f64,
    pub tdev: f64,
    pub n_terms: usize,
    pub edf: f64,
    pub tdev_lo: f64,
    pub tdev_hi: f64,
}

#[derive(Debug, Serialize)]
pub struct StabilityReport {
    pub file: String,
    pub rows: Vec<StabilityRow>,
    /// Log-log TDEV slope over `[τ0, 10·τ0]`.
    pub tdev_slope_first_decade: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct LinkPsdReport {
    pub name: String,
    pub file: String,
    pub trace_file: String,
    pub dt_s: f64,
    pub mean_counts: f64,
    pub zero_fraction: f64,
    pub powerlaw_exponent: Option<f64>,
    pub powerlaw_level: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct PsdReport {
    pub fit_max_hz: f64,
    pub links: Vec<LinkPsdReport>,
    /// First link relative to the second at `ratio_hz`.
    pub ratio_hz: f64,
    pub ratio_db: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct HistogramReport {
    pub name: String,
    pub file: String,
    pub fit: Option<PeakFit>,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub version: String,
    pub route_convention: String,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub series: SeriesReport,
    pub stability: Option<StabilityReport>,
    pub psd: Option<PsdReport>,
    pub histograms: Vec<HistogramReport>,
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CliResult<()> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Writes `report.json` and the plot-ready CSVs into `dir`.
pub fn emit_report(dir: &Path, inp: &ReportInputs) -> CliResult<RunReport> {
    if inp.series.n_windows == 0 {
        return Err(CliError::Usage("cannot report an empty series".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;

    write_file(dir, SERIES_FILE, |w| inp.series.write_csv(w))?;
    let series = SeriesReport {
        file: SERIES_FILE.into(),
        window_s: inp.series.window_s,
        summary: inp.series.summary(),
        up_guess_ps: inp.series.up_guess_ps,
        down_guess_ps: inp.series.down_guess_ps,
        truth_mean_t0_ps: inp
            .series
            .truth
            .as_ref()
            .filter(|t| !t.is_empty())
            .map(|t| t.iter().sum::<f64>() / t.len() as f64),
    };

    let stability = match inp.stability {
        Some(s) => {
            write_file(dir, TDEV_FILE, |w| s.write_csv(w))?;
            let tau0 = s.taus_s.first().copied().unwrap_or(0.0);
            Some(StabilityReport {
                file: TDEV_FILE.into(),
                rows: (0..s.len())
                    .map(|i| StabilityRow {
                        tau_s: s.taus_s[i],
                        adev: s.adev[i],
                        mdev: s.mdev[i],
                        tdev: s.tdev[i],
                        n_terms: s.n_terms[i],
                        edf: s.edf[i],
                        tdev_lo: s.tdev_lo[i],
                        tdev_hi: s.tdev_hi[i],
                    })
                    .collect(),
                tdev_slope_first_decade: loglog_slope(s, Deviation::Tdev, tau0, 10.0 * tau0 * (1.0 + 1e-9)).ok(),
            })
        }
        None => None,
    };

    let psd = if inp.spectra.is_empty() {
        None
    } else {
        let mut links = Vec::new();
        for l in inp.spectra {
            let file = format!("psd_{}.csv", l.name);
            let trace_file = format!("countrate_{}.csv", l.name);
            write_file(dir, &file, |w| l.spectrum.write_csv(w))?;
            write_file(dir, &trace_file, |w| {
                writeln!(w, "t_s,counts")?;
                for (i, c) in l.trace.counts.iter().enumerate() {
                    writeln!(w, "{},{c}", l.trace.start_ps as f64 * 1e-12 + i as f64 * l.trace.dt_s)?;
                }
                Ok(())
            })?;
            let fit = qtwtt_core::spectral::powerlaw_fit(&l.spectrum, 0.0, inp.psd_fit_max_hz).ok();
            links.push(LinkPsdReport {
                name: l.name.clone(),
                file,
                trace_file,
                dt_s: l.trace.dt_s,
                mean_counts: l.trace.total() as f64 / l.trace.counts.len() as f64,
                zero_fraction: l.trace.zero_fraction(),
                powerlaw_exponent: fit.map(|f| f.0),
                powerlaw_level: fit.map(|f| f.1),
            });
        }
        let ratio_db = match inp.spectra {
            [a, b, ..] => qtwtt_core::spectral::psd_ratio_db(&a.spectrum, &b.spectrum, inp.psd_ratio_hz)
                .ok()
                .and_then(finite),
            _ => None,
        };
        Some(PsdReport { fit_max_hz: inp.psd_fit_max_hz, links, ratio_hz: inp.psd_ratio_hz, ratio_db })
    };

    let mut histograms = Vec::new();
    for (name, h, fit) in inp.histograms {
        let file = format!("hist_{name}.csv");
        write_file(dir, &file, |w| h.write_csv(w))?;
        histograms.push(HistogramReport { name: name.clone(), file, fit: *fit });
    }

    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").into(),
        route_convention: ROUTE_CONVENTION.into(),
        config_sha256: inp.config_text.map(sha256_hex),
        seed: inp.seed,
        series,
        stability,
        psd,
        histograms,
    };
    write_file(dir, REPORT_FILE, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)
    })?;
    Ok(report)
}
