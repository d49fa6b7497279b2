//! Physical model parameters for the source, channel segments, detectors
//! and clocks. All types deserialize strictly (unknown keys are rejected)
//! and expose a `validate` method reporting the offending key path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(ok: bool, key: &str, constraint: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, constraint))
    }
}

fn finite(v: f64, key: &str) -> Result<()> {
    check(v.is_finite(), key, "must be finite")
}

/// Energy-time entangled pair source at the detected-pair budget plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSourceModel {
    pub pair_rate_hz: f64,
    /// Standard deviation of the signal-idler arrival-time difference.
    pub correlation_sigma_ps: f64,
}

impl PairSourceModel {
    pub fn validate(&self, path: &str) -> Result<()> {
        check(
            self.pair_rate_hz.is_finite() && self.pair_rate_hz > 0.0,
            &format!("{path}.pair_rate_hz"),
            "must be > 0",
        )?;
        check(
            self.correlation_sigma_ps.is_finite() && self.correlation_sigma_ps >= 0.0,
            &format!("{path}.correlation_sigma_ps"),
            "must be >= 0",
        )
    }
}

fn default_exponent() -> f64 {
    -2.0 / 3.0
}

/// Turbulence-induced transmittance fluctuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingModel {
    /// Power-law exponent of the transmittance PSD below `knee_hz`.
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    pub knee_hz: f64,
    /// Relative variance of the transmittance.
    pub scintillation_index: f64,
    /// Fraction of samples forced to zero transmittance.
    pub zero_fade_fraction: f64,
    pub dt_s: f64,
}

impl FadingModel {
    pub fn validate(&self, path: &str) -> Result<()> {
        finite(self.exponent, &format!("{path}.exponent"))?;
        check(
            self.knee_hz.is_finite() && self.knee_hz > 0.0,
            &format!("{path}.knee_hz"),
            "must be > 0",
        )?;
        check(
            self.scintillation_index.is_finite() && self.scintillation_index >= 0.0,
            &format!("{path}.scintillation_index"),
            "must be >= 0",
        )?;
        check(
            (0.0..1.0).contains(&self.zero_fade_fraction),
            &format!("{path}.zero_fade_fraction"),
            "must lie in [0, 1)",
        )?;
        check(
            self.dt_s.is_finite() && self.dt_s > 0.0,
            &format!("{path}.dt_s"),
            "must be > 0",
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftShape {
    Sinusoid,
    LinearRamp,
    PiecewiseTable,
}

/// Slow delay variation of a segment.
///
/// * `sinusoid`: `amplitude · sin(2π t / period)`
/// * `linear_ramp`: `amplitude · t / period`
/// * `piecewise_table`: `amplitude · interp(table, t)`, with `table` holding
///   `(t_s, value)` knots; held constant outside the knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftModel {
    pub amplitude_ps: f64,
    pub period_s: f64,
    pub shape: DriftShape,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<(f64, f64)>,
}

impl DriftModel {
    pub fn validate(&self, path: &str) -> Result<()> {
        finite(self.amplitude_ps, &format!("{path}.amplitude_ps"))?;
        match self.shape {
            DriftShape::Sinusoid | DriftShape::LinearRamp => check(
                self.period_s.is_finite() && self.period_s > 0.0,
                &format!("{path}.period_s"),
                "must be > 0",
            ),
            DriftShape::PiecewiseTable => {
                check(
                    !self.table.is_empty(),
                    &format!("{path}.table"),
                    "must hold at least one knot",
                )?;
                check(
                    self.table.windows(2).all(|w| w[0].0 < w[1].0)
                        && self.table.iter().all(|(t, v)| t.is_finite() && v.is_finite()),
                    &format!("{path}.table"),
                    "knot times must be finite and strictly increasing",
                )
            }
        }
    }

    /// Delay excursion in picoseconds at time `t_s`.
    pub fn at(&self, t_s: f64) -> f64 {
        match self.shape {
            DriftShape::Sinusoid => {
                self.amplitude_ps * (std::f64::consts::TAU * t_s / self.period_s).sin()
            }
            DriftShape::LinearRamp => self.amplitude_ps * t_s / self.period_s,
            DriftShape::PiecewiseTable => self.amplitude_ps * interp_table(&self.table, t_s),
        }
    }
}

fn interp_table(table: &[(f64, f64)], t: f64) -> f64 {
    let i = table.partition_point(|&(tk, _)| tk <= t);
    if i == 0 {
        return table[0].1;
    }
    if i == table.len() {
        return table[i - 1].1;
    }
    let (t0, v0) = table[i - 1];
    let (t1, v1) = table[i];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// One link segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    pub mean_loss_db: f64,
    pub base_delay_ps: f64,
    /// Residual timing jitter (dispersion, turbulence), Gaussian sigma.
    pub jitter_sigma_ps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fading: Option<FadingModel>,
}

impl ChannelModel {
    /// A lossless, jitter-free segment with a fixed delay.
    pub fn ideal(base_delay_ps: f64) -> Self {
        ChannelModel {
            mean_loss_db: 0.0,
            base_delay_ps,
            jitter_sigma_ps: 0.0,
            drift: None,
            fading: None,
        }
    }

    pub fn with_loss(mut self, loss_db: f64) -> Self {
        self.mean_loss_db = loss_db;
        self
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        check(
            self.mean_loss_db.is_finite() && self.mean_loss_db >= 0.0,
            &format!("{path}.mean_loss_db"),
            "must be >= 0",
        )?;
        finite(self.base_delay_ps, &format!("{path}.base_delay_ps"))?;
        check(
            self.jitter_sigma_ps.is_finite() && self.jitter_sigma_ps >= 0.0,
            &format!("{path}.jitter_sigma_ps"),
            "must be >= 0",
        )?;
        if let Some(d) = &self.drift {
            d.validate(&format!("{path}.drift"))?;
        }
        if let Some(f) = &self.fading {
            f.validate(&format!("{path}.fading"))?;
        }
        Ok(())
    }

    pub fn transmittance(&self) -> f64 {
        db_to_transmittance(self.mean_loss_db)
    }

    pub fn delay_at(&self, t_s: f64) -> f64 {
        self.base_delay_ps + self.drift.as_ref().map_or(0.0, |d| d.at(t_s))
    }
}

pub fn db_to_transmittance(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Single-photon detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub jitter_sigma_ps: f64,
    pub dark_rate_hz: f64,
    /// Non-paralyzable hold-off after each registered event.
    pub dead_time_ps: i64,
}

impl DetectorModel {
    pub fn ideal() -> Self {
        DetectorModel {
            efficiency: 1.0,
            jitter_sigma_ps: 0.0,
            dark_rate_hz: 0.0,
            dead_time_ps: 0,
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        check(
            (0.0..=1.0).contains(&self.efficiency),
            &format!("{path}.efficiency"),
            "must lie in [0, 1]",
        )?;
        check(
            self.jitter_sigma_ps.is_finite() && self.jitter_sigma_ps >= 0.0,
            &format!("{path}.jitter_sigma_ps"),
            "must be >= 0",
        )?;
        check(
            self.dark_rate_hz.is_finite() && self.dark_rate_hz >= 0.0,
            &format!("{path}.dark_rate_hz"),
            "must be >= 0",
        )?;
        check(
            self.dead_time_ps >= 0,
            &format!("{path}.dead_time_ps"),
            "must be >= 0",
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockNoiseKind {
    /// `level`: RMS phase noise per sample, ps.
    WhitePm,
    /// `level`: one-sided phase PSD at 1 Hz, ps²/Hz (`S_x(f) = level / f`).
    FlickerPm,
    /// `level`: Allan deviation at 1 s (dimensionless).
    WhiteFm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockNoiseTerm {
    pub kind: ClockNoiseKind,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockModel {
    pub offset_ps: f64,
    pub fractional_frequency_offset: f64,
    #[serde(default)]
    pub noise_terms: Vec<ClockNoiseTerm>,
}

impl ClockModel {
    pub fn ideal() -> Self {
        ClockModel {
            offset_ps: 0.0,
            fractional_frequency_offset: 0.0,
            noise_terms: Vec::new(),
        }
    }

    pub fn with_noise(mut self, kind: ClockNoiseKind, level: f64) -> Self {
        self.noise_terms.push(ClockNoiseTerm { kind, level });
        self
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        finite(self.offset_ps, &format!("{path}.offset_ps"))?;
        finite(
            self.fractional_frequency_offset,
            &format!("{path}.fractional_frequency_offset"),
        )?;
        for (i, term) in self.noise_terms.iter().enumerate() {
            check(
                term.level.is_finite() && term.level >= 0.0,
                &format!("{path}.noise_terms[{i}].level"),
                "must be >= 0",
            )?;
        }
        Ok(())
    }

    /// True when the clock is a pure offset with no rate error or noise.
    pub fn is_static(&self) -> bool {
        self.fractional_frequency_offset == 0.0 && self.noise_terms.iter().all(|t| t.level == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_shapes() {
        let sine = DriftModel {
            amplitude_ps: 250.0,
            period_s: 100.0,
            shape: DriftShape::Sinusoid,
            table: vec![],
        };
        assert!((sine.at(25.0) - 250.0).abs() < 1e-9);
        assert!((sine.at(75.0) + 250.0).abs() < 1e-9);

        let ramp = DriftModel {
            shape: DriftShape::LinearRamp,
            ..sine.clone()
        };
        assert!((ramp.at(50.0) - 125.0).abs() < 1e-12);

        let table = DriftModel {
            amplitude_ps: 2.0,
            period_s: 1.0,
            shape: DriftShape::PiecewiseTable,
            table: vec![(0.0, 0.0), (10.0, 5.0)],
        };
        assert_eq!(table.at(-1.0), 0.0);
        assert!((table.at(4.0) - 4.0).abs() < 1e-12);
        assert_eq!(table.at(20.0), 10.0);
    }

    #[test]
    fn validation_names_offending_key() {
        let ch = ChannelModel::ideal(0.0).with_loss(-1.0);
        let err = ch.validate("segments.fs_uplink").unwrap_err();
        assert!(err.to_string().contains("segments.fs_uplink.mean_loss_db"), "{err}");

        let det = DetectorModel {
            efficiency: 1.5,
            ..DetectorModel::ideal()
        };
        assert!(det.validate("d").unwrap_err().to_string().contains("d.efficiency"));

        let fading = FadingModel {
            exponent: -2.0 / 3.0,
            knee_hz: 20.0,
            scintillation_index: 0.1,
            zero_fade_fraction: 1.0,
            dt_s: 1e-3,
        };
        assert!(fading.validate("f").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let doc = r#"{"pair_rate_hz": 1.0, "correlation_sigma_ps": 1.0, "bogus": 2}"#;
        let err = serde_json::from_str::<PairSourceModel>(doc).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn db_conversion() {
        assert!((db_to_transmittance(10.0) - 0.1).abs() < 1e-15);
        assert_eq!(db_to_transmittance(0.0), 1.0);
    }
}
