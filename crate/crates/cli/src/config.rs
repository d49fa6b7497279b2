use std::path::Path;

use qtwtt_core::sim::ScenarioConfig;

use crate::error::{CliError, CliResult};

/// Parses and validates a scenario document. Unknown keys are rejected;
/// only analysis settings have defaults.
pub fn parse_scenario(text: &str) -> CliResult<ScenarioConfig> {
    let cfg: ScenarioConfig =
        serde_json::from_str(text).map_err(|e| CliError::Scenario(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario(path: &Path) -> CliResult<(ScenarioConfig, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok((parse_scenario(&text)?, text))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "source": {"pair_rate_hz": 1e5, "correlation_sigma_ps": 10},
        "idler_attenuation_db": 0,
        "segments": {
            "fs_uplink": {"mean_loss_db": 3, "base_delay_ps": 1000, "jitter_sigma_ps": 0},
            "fs_downlink": {"mean_loss_db": 3, "base_delay_ps": 1000, "jitter_sigma_ps": 0},
            "fiber_out": {"mean_loss_db": 1, "base_delay_ps": 5000, "jitter_sigma_ps": 0},
            "fiber_return": {"mean_loss_db": 1, "base_delay_ps": 5000, "jitter_sigma_ps": 0}
        },
        "detectors": {
            "D1": {"efficiency": 0.5, "jitter_sigma_ps": 20, "dark_rate_hz": 100, "dead_time_ps": 0},
            "D2": {"efficiency": 0.5, "jitter_sigma_ps": 20, "dark_rate_hz": 100, "dead_time_ps": 0},
            "D3": {"efficiency": 0.5, "jitter_sigma_ps": 20, "dark_rate_hz": 100, "dead_time_ps": 0},
            "D4": {"efficiency": 0.5, "jitter_sigma_ps": 20, "dark_rate_hz": 100, "dead_time_ps": 0}
        },
        "clocks": {"local": {"offset_ps": 0, "fractional_frequency_offset": 0, "noise_terms": []}, "mode": "loopback"},
        "run": {"duration_s": 0.1, "window_s": 0.01, "seed": 1}
    }"#;

    #[test]
    fn minimal_document_gets_analysis_defaults() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        assert_eq!(cfg.coincidence.window_ps, 2000);
        assert_eq!(cfg.coincidence.bin_width_ps, 10);
        assert!(cfg.segments.fs_uplink.fading.is_none());
    }

    #[test]
    fn negative_loss_names_the_key() {
        let text = MINIMAL.replacen("\"mean_loss_db\": 3", "\"mean_loss_db\": -3", 1);
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("mean_loss_db"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = MINIMAL.replacen("\"idler_attenuation_db\": 0,", "\"idler_attenuation_db\": 0, \"colour\": 1,", 1);
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn physical_parameters_are_required() {
        let text = MINIMAL.replacen("\"pair_rate_hz\": 1e5, ", "", 1);
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("pair_rate_hz"), "{err}");
    }
}
