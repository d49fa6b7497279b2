use serde::{Deserialize, Serialize};

/// FWHM / σ for a Gaussian, `2√(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Ways of quoting the width of a Gaussian peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthConvention {
    Sigma,
    Fwhm,
    /// Half-width at 1/e of the peak amplitude, `√2·σ`.
    OneOverEHalf,
    /// Full width at 1/e of the peak amplitude, `2√2·σ`.
    OneOverEFull,
}

impl WidthConvention {
    pub fn per_sigma(self) -> f64 {
        match self {
            WidthConvention::Sigma => 1.0,
            WidthConvention::Fwhm => FWHM_PER_SIGMA,
            WidthConvention::OneOverEHalf => std::f64::consts::SQRT_2,
            WidthConvention::OneOverEFull => 2.0 * std::f64::consts::SQRT_2,
        }
    }
}

pub fn convert_width(value: f64, from: WidthConvention, to: WidthConvention) -> f64 {
    value / from.per_sigma() * to.per_sigma()
}
