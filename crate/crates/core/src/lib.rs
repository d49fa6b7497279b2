//! Simulation and analysis toolkit for quantum two-way time transfer.
//!
//! The crate synthesizes correlated photon-pair timestamp streams through
//! lossy, drifting and fading link segments, then recovers the clock offset
//! from coincidence histograms and characterizes its stability.
//!
//! Modules:
//! * [`tagstream`]: integer-picosecond timestamp streams.
//! * [`sim`]: pair source, channel, detector and clock models.
//! * [`coincidence`]: cross-correlation histograms, Gaussian peak fits, CAR.
//! * [`twtt`]: per-window offset recovery and precision predictors.
//! * [`stability`]: ADEV / MDEV / TDEV.
//! * [`spectral`]: countrate traces and PSD analysis.

pub mod coincidence;
pub mod error;
pub mod sim;
pub mod spectral;
pub mod stability;
pub mod tagstream;
pub mod twtt;

pub use error::{Error, Result};
pub use tagstream::{Channel, Span, TimeTagStream};
