use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::Value;
use tempfile::tempdir;

use qtwtt_cli::commands::{analysis_params, run, run_pipeline, Cli, PipelineOptions};
use qtwtt_cli::report::{emit_report, ReportInputs, SERIES_FILE};
use qtwtt_cli::{load_scenario, parse_scenario};
use qtwtt_core::sim::simulate_scenario;
use qtwtt_core::tagstream::seconds_to_ps;
use qtwtt_core::twtt::analyze_series;
use qtwtt_core::{Channel, TimeTagStream};

const SYMMETRIC: &str = r#"{
  "source": {"pair_rate_hz": 2e5, "correlation_sigma_ps": 0},
  "idler_attenuation_db": 0,
  "segments": {
    "fs_uplink": {"mean_loss_db": 3, "base_delay_ps": 6700000, "jitter_sigma_ps": 0},
    "fs_downlink": {"mean_loss_db": 3, "base_delay_ps": 6700000, "jitter_sigma_ps": 0},
    "fiber_out": {"mean_loss_db": 2.5, "base_delay_ps": 34255000, "jitter_sigma_ps": 0},
    "fiber_return": {"mean_loss_db": 2.5, "base_delay_ps": 34255000, "jitter_sigma_ps": 0}
  },
  "detectors": {
    "D1": {"efficiency": 1, "jitter_sigma_ps": 0, "dark_rate_hz": 0, "dead_time_ps": 0},
    "D2": {"efficiency": 1, "jitter_sigma_ps": 0, "dark_rate_hz": 0, "dead_time_ps": 0},
    "D3": {"efficiency": 1, "jitter_sigma_ps": 0, "dark_rate_hz": 0, "dead_time_ps": 0},
    "D4": {"efficiency": 1, "jitter_sigma_ps": 0, "dark_rate_hz": 0, "dead_time_ps": 0}
  },
  "clocks": {"local": {"offset_ps": 0, "fractional_frequency_offset": 0, "noise_terms": []}, "mode": "loopback"},
  "run": {"duration_s": 0.05, "window_s": 0.01, "seed": 3}
}"#;

// Same geometry with detector jitter, dark counts and a 1.3 ns fiber asymmetry.
fn noisy() -> String {
    SYMMETRIC
        .replace("\"jitter_sigma_ps\": 0, \"dark_rate_hz\": 0", "\"jitter_sigma_ps\": 30, \"dark_rate_hz\": 5000")
        .replace(
            "\"fiber_return\": {\"mean_loss_db\": 2.5, \"base_delay_ps\": 34255000",
            "\"fiber_return\": {\"mean_loss_db\": 2.5, \"base_delay_ps\": 34256300",
        )
}

fn presets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

fn cli(args: &[&str]) -> Value {
    let mut out = Vec::new();
    run(Cli::parse_from(std::iter::once("qtwtt").chain(args.iter().copied())), &mut out).unwrap();
    serde_json::from_slice(&out).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn noiseless_symmetric_report_has_zero_spread() {
    let dir = tempdir().unwrap();
    let cfg = write(dir.path(), "sym.json", SYMMETRIC);
    let out = dir.path().join("report");
    let r = cli(&["report", "-c", &cfg, "-o", out.to_str().unwrap(), "--no-psd"]);
    let s = &r["series"];
    assert_eq!(s["n_windows"], 5);
    assert_eq!(s["n_valid"], 5);
    assert_eq!(s["t0_sd_ps"].as_f64().unwrap(), 0.0);
    assert_eq!(s["t0_mean_ps"].as_f64().unwrap(), 0.0);
    assert!(s["gap_indices"].as_array().unwrap().is_empty());
    for f in ["report.json", "series.csv", "tdev.csv", "hist_up.csv", "hist_down.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempdir().unwrap();
    let cfg = write(dir.path(), "n.json", &noisy());
    let mut bytes = Vec::new();
    for run_dir in ["a", "b"] {
        let out = dir.path().join(run_dir);
        cli(&["report", "-c", &cfg, "-o", out.to_str().unwrap(), "--dt-s", "0.0005"]);
        bytes.push((
            std::fs::read(out.join(SERIES_FILE)).unwrap(),
            std::fs::read(out.join("report.json")).unwrap(),
            std::fs::read(out.join("psd_fs_uplink.csv")).unwrap(),
        ));
    }
    assert_eq!(bytes[0], bytes[1]);
    let other = dir.path().join("c");
    cli(&["report", "-c", &cfg, "-o", other.to_str().unwrap(), "--seed", "4", "--no-psd"]);
    assert_ne!(std::fs::read(other.join(SERIES_FILE)).unwrap(), bytes[0].0);
}

#[test]
fn noisy_run_recovers_asymmetry() {
    let cfg = parse_scenario(&noisy()).unwrap();
    let p = run_pipeline(&cfg, &PipelineOptions { psd: false, ..Default::default() }).unwrap();
    let s = p.series.summary();
    assert_eq!(s.n_valid, 5);
    // t0 = (B - A)/2 = (34255000 - 34256300)/2
    assert!((s.t0_mean_ps + 650.0).abs() < 10.0, "{s:?}");
    assert!(s.t0_sd_ps > 0.0 && s.t0_sd_ps < 10.0);
}

#[test]
fn failed_windows_are_listed_as_gaps() {
    let cfg = parse_scenario(&noisy()).unwrap();
    let mut sim = simulate_scenario(&cfg).unwrap();
    let d2 = sim.streams[&Channel::D2].clone();
    let (lo, hi) = (seconds_to_ps(0.02), seconds_to_ps(0.04));
    let kept = d2.tags().iter().copied().filter(|t| !(lo..hi).contains(t)).collect();
    sim.streams.insert(Channel::D2, TimeTagStream::new(Channel::D2, kept, d2.span()).unwrap());
    let series = analyze_series(&sim.streams, 0.01, &analysis_params(&cfg)).unwrap();

    let dir = tempdir().unwrap();
    let rep = emit_report(
        dir.path(),
        &ReportInputs {
            config_text: None,
            seed: None,
            series: &series,
            stability: None,
            spectra: &[],
            histograms: &[],
            psd_fit_max_hz: 20.0,
            psd_ratio_hz: 1.0,
        },
    )
    .unwrap();
    assert_eq!(rep.series.summary.gap_indices, vec![2, 3]);
    assert_eq!(rep.series.summary.n_valid, 3);
    let csv = std::fs::read_to_string(dir.path().join(SERIES_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.lines().nth(3).unwrap().starts_with("0.02,,"));
}

#[test]
fn step_by_step_commands_agree_with_report() {
    let dir = tempdir().unwrap();
    let cfg = write(dir.path(), "n.json", &noisy());
    let tags = dir.path().join("run.qtts");
    let tags_s = tags.to_str().unwrap();
    let sim = cli(&["simulate", "-c", &cfg, "-o", tags_s]);
    assert_eq!(sim["span_s"][1], 0.05);
    assert!(sim["counts"]["D1"].as_u64().unwrap() > 0);
    assert!(dir.path().join("run.truth.json").exists());

    let (d3, d1) = (format!("{tags_s}:D3"), format!("{tags_s}:D1"));
    let c = cli(&["coincidence", "-i", &d3, "-i", &d1, "--search-ps", "100000000"]);
    let center = c["fit"]["center_ps"].as_f64().unwrap();
    assert!((center - (6_700_000.0 + 34_256_300.0)).abs() < 20.0, "{center}");

    let series = dir.path().join("series.csv");
    let t = cli(&[
        "twtt", "-i", tags_s, "--window-s", "0.01", "--search-ps", "100000000", "--start-s", "0", "--end-s", "0.05",
        "-o", series.to_str().unwrap(),
    ]);
    assert_eq!(t["summary"]["n_valid"], 5);

    let report_dir = dir.path().join("rep");
    let r = cli(&["report", "-c", &cfg, "-o", report_dir.to_str().unwrap(), "--no-psd"]);
    assert_eq!(r["series"]["t0_sd_ps"], t["summary"]["t0_sd_ps"]);

    let st = cli(&["stability", "-i", series.to_str().unwrap()]);
    assert!((st["tau0_s"].as_f64().unwrap() - 0.01).abs() < 1e-12);
    assert_eq!(st["stability"]["m_values"][0], 1);

    let again = cli(&["coincidence", "-i", tags_s, "--channel", "D3:D1", "--search-ps", "100000000"]);
    assert_eq!(again, c);

    let p = cli(&["psd", "-i", &format!("{tags_s}:D2")]);
    assert_eq!(p["samples"].as_u64().unwrap(), 50);
    assert_eq!(cli(&["psd", "-i", tags_s, "--channel", "D2"]), p);
}

#[test]
fn coincidence_needs_two_inputs() {
    let mut out = Vec::new();
    let err = run(Cli::parse_from(["qtwtt", "coincidence", "-i", "x.qtts:D1"]), &mut out).unwrap_err();
    assert_eq!(err.kind(), "usage");
}

#[test]
fn best_night_preset_parses() {
    let (cfg, text) = load_scenario(&presets().join("mjd59814.json")).unwrap();
    assert!(!text.is_empty());
    let windows = (cfg.run.duration_s / cfg.run.window_s).round() as usize;
    assert!(windows >= 512, "{windows}");
    assert_eq!(cfg.coincidence.bin_width_ps, 10);
}

#[test]
fn every_shipped_preset_validates() {
    let mut n = 0;
    for entry in std::fs::read_dir(presets()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}
