use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use qtwtt_core::coincidence::{cross_correlate, fit_peak, locate_delay, CoincidenceHistogram, PeakFit};
use qtwtt_core::sim::{probe_link, simulate_scenario, ScenarioConfig, Segment};
use qtwtt_core::spectral::{countrate_trace, powerlaw_fit, psd, DEFAULT_DT_S};
use qtwtt_core::stability::{loglog_slope, octave_m_grid, stability_curve, Deviation, PhaseSeries, StabilitySeries};
use qtwtt_core::twtt::{analyze_series, AnalysisParams, TwttSeries};
use qtwtt_core::tagstream::seconds_to_ps;
use qtwtt_core::{Channel, Span, TimeTagStream};

use crate::config::load_scenario;
use crate::error::{CliError, CliResult};
use crate::report::{emit_report, LinkSpectrum, ReportInputs};
use crate::tagio::{read_selected, read_tags, write_tags};

pub const PSD_FIT_MAX_HZ: f64 = 20.0;
pub const PSD_RATIO_HZ: f64 = 1.0;

#[derive(Debug, Parser)]
#[command(name = "qtwtt", version, about = "Photon-pair two-way time transfer simulator and analyser")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write D1..D4 timestamps.
    Simulate(SimulateArgs),
    /// Cross-correlate two channels and fit the coincidence peak.
    Coincidence(CoincidenceArgs),
    /// Per-window delays and recovered time offset.
    Twtt(TwttArgs),
    /// ADEV/MDEV/TDEV of a series column.
    Stability(StabilityArgs),
    /// Count-rate trace and power spectral density of one channel.
    Psd(PsdArgs),
    /// Full pipeline from a scenario to a report directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output tag file (.qtts binary, .csv text).
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CoincidenceArgs {
    /// Two selections `file:CH`, or one file with `--channel A:B`; delays
    /// are second minus first.
    #[arg(short, long, num_args = 1, required = true)]
    pub input: Vec<String>,
    #[arg(long)]
    pub channel: Option<String>,
    #[arg(long, default_value_t = 2000)]
    pub window_ps: i64,
    #[arg(long, default_value_t = 10)]
    pub bin_ps: i64,
    /// Expected delay; located by a coarse search when omitted.
    #[arg(long)]
    pub guess_ps: Option<i64>,
    #[arg(long, default_value_t = 500_000)]
    pub search_ps: i64,
    /// Histogram CSV.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TwttArgs {
    /// Tag file holding D1..D4.
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long)]
    pub window_s: f64,
    #[arg(long, default_value_t = 2000)]
    pub window_ps: i64,
    #[arg(long, default_value_t = 10)]
    pub bin_ps: i64,
    #[arg(long)]
    pub up_guess_ps: Option<i64>,
    #[arg(long)]
    pub down_guess_ps: Option<i64>,
    #[arg(long, default_value_t = 500_000)]
    pub search_ps: i64,
    /// Run start; tag files do not record their span, so by default the
    /// analysis covers first to last tag only.
    #[arg(long)]
    pub start_s: Option<f64>,
    #[arg(long)]
    pub end_s: Option<f64>,
    /// Series CSV.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// Series CSV as written by `twtt`.
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long, default_value = "t0_ps")]
    pub column: String,
    /// Sample spacing; taken from `window_start_s` when omitted.
    #[arg(long)]
    pub tau0_s: Option<f64>,
    /// Seconds per unit of the column.
    #[arg(long, default_value_t = 1e-12)]
    pub unit_s: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PsdArgs {
    /// Selection `file:CH`, or a file with `--channel CH`.
    #[arg(short, long)]
    pub input: String,
    #[arg(long)]
    pub channel: Option<String>,
    #[arg(long, default_value_t = DEFAULT_DT_S)]
    pub dt_s: f64,
    #[arg(long, default_value_t = PSD_FIT_MAX_HZ)]
    pub fit_max_hz: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the scenario's analysis window.
    #[arg(long)]
    pub window_s: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DT_S)]
    pub dt_s: f64,
    /// Skip the one-way count-rate probes.
    #[arg(long)]
    pub no_psd: bool,
    /// Also write the simulated timestamps.
    #[arg(long)]
    pub write_tags: bool,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::Coincidence(a) => coincidence(a, out),
        Command::Twtt(a) => twtt(a, out),
        Command::Stability(a) => stability(a, out),
        Command::Psd(a) => psd_cmd(a, out),
        Command::Report(a) => report(a, out),
    }
}

fn print_json(out: &mut dyn Write, v: &serde_json::Value) -> CliResult<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(v).expect("serialisable"))
        .map_err(|e| CliError::io("<stdout>", e))
}

fn create(path: &Path) -> CliResult<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn finish(mut w: std::io::BufWriter<std::fs::File>, path: &Path, r: std::io::Result<()>) -> CliResult<()> {
    r.and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn load(config: &Path, seed: Option<u64>) -> CliResult<(ScenarioConfig, String)> {
    let (mut cfg, text) = load_scenario(config)?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    Ok((cfg, text))
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let (cfg, _) = load(&a.config, a.seed)?;
    let sim = simulate_scenario(&cfg)?;
    write_tags(&sim.streams, &a.output)?;
    let truth_path = a.output.with_extension("truth.json");
    let mut w = create(&truth_path)?;
    let r = serde_json::to_writer_pretty(&mut w, &sim.truth).map_err(std::io::Error::from);
    finish(w, &truth_path, r)?;
    let counts: serde_json::Map<String, serde_json::Value> =
        sim.streams.iter().map(|(c, s)| (c.to_string(), json!(s.len()))).collect();
    print_json(
        out,
        &json!({
            "tags": a.output,
            "truth": truth_path,
            "seed": cfg.run.seed,
            "span_s": [0.0, cfg.run.duration_s],
            "counts": counts,
        }),
    )
}

fn coincidence(a: CoincidenceArgs, out: &mut dyn Write) -> CliResult<()> {
    let (first, second) = match (a.input.as_slice(), &a.channel) {
        ([f, s], None) => (f.clone(), s.clone()),
        ([f], Some(pair)) => {
            let (ca, cb) = pair
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("--channel expects A:B, got {pair:?}")))?;
            (format!("{f}:{ca}"), format!("{f}:{cb}"))
        }
        _ => {
            return Err(CliError::Usage(format!(
                "coincidence needs two inputs, or one with --channel A:B (got {})",
                a.input.len()
            )))
        }
    };
    let sa = read_selected(&first)?;
    let sb = read_selected(&second)?;
    let guess = match a.guess_ps {
        Some(g) => g,
        None => locate_delay(&sa, &sb, a.search_ps, 1000, 50_000)?.unwrap_or(0),
    };
    let h = cross_correlate(&sa, &sb, a.window_ps, a.bin_ps, guess)?;
    if let Some(path) = &a.output {
        let mut w = create(path)?;
        let r = h.write_csv(&mut w);
        finish(w, path, r)?;
    }
    let (fit, err) = match fit_peak(&h) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    print_json(
        out,
        &json!({
            "guess_ps": guess,
            "bins": h.n_bins(),
            "total": h.total(),
            "n_left": h.n_left,
            "n_right": h.n_right,
            "fit": fit,
            "fit_error": err,
        }),
    )
}

fn twtt(a: TwttArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut streams = read_tags(&a.input)?;
    if a.start_s.is_some() || a.end_s.is_some() {
        for s in streams.values_mut() {
            let span = s.span();
            let nominal = Span::new(
                a.start_s.map_or(span.start_ps, seconds_to_ps),
                a.end_s.map_or(span.end_ps, seconds_to_ps),
            )?;
            let ch = s.channel().clone();
            let tags = std::mem::replace(s, TimeTagStream::empty(ch.clone(), span)).into_tags();
            *s = TimeTagStream::covering(ch, tags, nominal);
        }
    }
    let params = AnalysisParams {
        window_ps: a.window_ps,
        bin_width_ps: a.bin_ps,
        up_guess_ps: a.up_guess_ps,
        down_guess_ps: a.down_guess_ps,
        search_ps: a.search_ps,
        ..AnalysisParams::default()
    };
    let series = analyze_series(&streams, a.window_s, &params)?;
    if let Some(path) = &a.output {
        let mut w = create(path)?;
        let r = series.write_csv(&mut w);
        finish(w, path, r)?;
    }
    print_json(out, &json!({"summary": series.summary(), "gaps": series.gaps}))
}

/// Reads one numeric column of a series CSV; empty cells become gaps.
pub fn read_series_column(path: &Path, column: &str) -> CliResult<(Vec<Option<f64>>, Vec<f64>)> {
    let fmt = |msg: String| CliError::Format { path: path.into(), msg };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| fmt(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| fmt(e.to_string()))?.clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| fmt(format!("no column {column:?}")))?;
    let tcol = headers.iter().position(|h| h == "window_start_s");
    let (mut vals, mut times) = (Vec::new(), Vec::new());
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| fmt(e.to_string()))?;
        let cell = row.get(idx).unwrap_or("").trim();
        vals.push(if cell.is_empty() {
            None
        } else {
            Some(cell.parse::<f64>().map_err(|e| fmt(format!("row {}: {e}", i + 1)))?)
        });
        if let Some(t) = tcol.and_then(|c| row.get(c)).and_then(|s| s.trim().parse().ok()) {
            times.push(t);
        }
    }
    Ok((vals, times))
}

pub fn stability_of(values: &[Option<f64>], tau0_s: f64) -> CliResult<StabilitySeries> {
    let p = PhaseSeries::from_optional(values, tau0_s)?;
    let grid = octave_m_grid(&p);
    if grid.is_empty() {
        return Err(CliError::Core(qtwtt_core::Error::Argument(format!(
            "series of {} samples is too short for a stability estimate",
            values.len()
        ))));
    }
    Ok(stability_curve(&p, &grid)?)
}

fn stability(a: StabilityArgs, out: &mut dyn Write) -> CliResult<()> {
    let (vals, times) = read_series_column(&a.input, &a.column)?;
    let tau0 = match (a.tau0_s, times.as_slice()) {
        (Some(t), _) => t,
        (None, [t0, t1, ..]) => t1 - t0,
        _ => return Err(CliError::Usage("cannot infer tau0; pass --tau0-s".into())),
    };
    let x: Vec<Option<f64>> = vals.iter().map(|v| v.map(|v| v * a.unit_s)).collect();
    let s = stability_of(&x, tau0)?;
    if let Some(path) = &a.output {
        let mut w = create(path)?;
        let r = s.write_csv(&mut w);
        finish(w, path, r)?;
    }
    let slope = loglog_slope(&s, Deviation::Tdev, tau0, 10.0 * tau0 * (1.0 + 1e-9)).ok();
    print_json(out, &json!({"tau0_s": tau0, "stability": s, "tdev_slope_first_decade": slope}))
}

fn psd_cmd(a: PsdArgs, out: &mut dyn Write) -> CliResult<()> {
    let s = match &a.channel {
        Some(ch) => read_selected(&format!("{}:{ch}", a.input))?,
        None => read_selected(&a.input)?,
    };
    let trace = countrate_trace(&s, a.dt_s)?;
    let sp = psd(&trace)?;
    if let Some(path) = &a.output {
        let mut w = create(path)?;
        let r = sp.write_csv(&mut w);
        finish(w, path, r)?;
    }
    let fit = powerlaw_fit(&sp, 0.0, a.fit_max_hz).ok();
    print_json(
        out,
        &json!({
            "samples": trace.counts.len(),
            "total": trace.total(),
            "zero_fraction": trace.zero_fraction(),
            "powerlaw_exponent": fit.map(|f| f.0),
            "powerlaw_level": fit.map(|f| f.1),
        }),
    )
}

/// Results of the in-memory simulate → analyse pipeline.
pub struct PipelineOutput {
    pub series: TwttSeries,
    pub stability: Option<StabilitySeries>,
    pub spectra: Vec<LinkSpectrum>,
    pub histograms: Vec<(String, CoincidenceHistogram, Option<PeakFit>)>,
    pub sim: Option<qtwtt_core::sim::SimulationOutput>,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub window_s: Option<f64>,
    pub psd_dt_s: f64,
    pub psd: bool,
    pub keep_streams: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { window_s: None, psd_dt_s: DEFAULT_DT_S, psd: true, keep_streams: false }
    }
}

/// Analysis settings for a scenario: its coincidence knobs and a delay
/// search wide enough for the configured link lengths.
pub fn analysis_params(cfg: &ScenarioConfig) -> AnalysisParams {
    let (a, b) = cfg.route_delays_ps();
    let reach = (2.0 * a.abs().max(b.abs())).ceil() as i64;
    AnalysisParams {
        window_ps: cfg.coincidence.window_ps,
        bin_width_ps: cfg.coincidence.bin_width_ps,
        search_ps: reach.max(AnalysisParams::default().search_ps),
        ..AnalysisParams::default()
    }
}

pub fn run_pipeline(cfg: &ScenarioConfig, opts: &PipelineOptions) -> CliResult<PipelineOutput> {
    let window_s = opts.window_s.unwrap_or(cfg.run.window_s);
    let sim = simulate_scenario(cfg)?;
    let params = analysis_params(cfg);
    let mut series = analyze_series(&sim.streams, window_s, &params)?;
    if opts.window_s.is_none() {
        series.truth = Some(sim.truth.true_t0_ps.clone());
    }

    let stability = {
        let x: Vec<Option<f64>> = series.t0_slots().iter().map(|v| v.map(|p| p * 1e-12)).collect();
        stability_of(&x, window_s).ok()
    };

    let mut histograms = Vec::new();
    if let Some(r) = series.results.first() {
        let (lo, hi) = (r.window_start_ps, r.window_start_ps + qtwtt_core::tagstream::seconds_to_ps(window_s));
        for (name, a, b, guess, fit) in [
            ("up", Channel::D3, Channel::D1, series.up_guess_ps, r.up_fit),
            ("down", Channel::D4, Channel::D2, series.down_guess_ps, r.down_fit),
        ] {
            let h = cross_correlate(
                &sim.stream(a).slice_window(lo, hi)?,
                &sim.stream(b).slice_window(lo, hi)?,
                params.window_ps,
                params.bin_width_ps,
                guess,
            )?;
            histograms.push((name.to_string(), h, Some(fit)));
        }
    }

    let mut spectra = Vec::new();
    if opts.psd && cfg.run.duration_s >= 64.0 * opts.psd_dt_s {
        for (seg, det) in [(Segment::FsUplink, &cfg.detectors.d1), (Segment::FiberOut, &cfg.detectors.d2)] {
            let (s, _) = probe_link(cfg, seg, det)?;
            let trace = countrate_trace(&s, opts.psd_dt_s)?;
            let spectrum = psd(&trace)?;
            spectra.push(LinkSpectrum { name: seg.name().to_string(), trace, spectrum });
        }
    }
    Ok(PipelineOutput {
        series,
        stability,
        spectra,
        histograms,
        sim: opts.keep_streams.then_some(sim),
    })
}

fn report(a: ReportArgs, out: &mut dyn Write) -> CliResult<()> {
    let (cfg, text) = load(&a.config, a.seed)?;
    let opts = PipelineOptions {
        window_s: a.window_s,
        psd_dt_s: a.dt_s,
        psd: !a.no_psd,
        keep_streams: a.write_tags,
    };
    let p = run_pipeline(&cfg, &opts)?;
    std::fs::create_dir_all(&a.output).map_err(|e| CliError::io(&a.output, e))?;
    if let Some(sim) = &p.sim {
        write_tags(&sim.streams, &a.output.join("tags.qtts"))?;
    }
    let rep = emit_report(
        &a.output,
        &ReportInputs {
            config_text: Some(&text),
            seed: Some(cfg.run.seed),
            series: &p.series,
            stability: p.stability.as_ref(),
            spectra: &p.spectra,
            histograms: &p.histograms,
            psd_fit_max_hz: PSD_FIT_MAX_HZ,
            psd_ratio_hz: PSD_RATIO_HZ,
        },
    )?;
    print_json(out, &serde_json::to_value(&rep).expect("serialisable"))
}
