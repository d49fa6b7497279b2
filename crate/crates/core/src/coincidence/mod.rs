//! Coincidence histograms between two tag streams and Gaussian peak fitting.

mod fit;
mod histogram;
mod width;

pub use fit::{estimate_car, fit_peak, PeakFit};
pub use histogram::{cross_correlate, locate_delay, CoincidenceHistogram};
pub use width::{convert_width, WidthConvention, FWHM_PER_SIGMA};
