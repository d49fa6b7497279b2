//! Seeded Monte-Carlo synthesis of the time-transfer experiment.

pub mod channel;
pub mod clock;
pub mod colored;
pub mod detector;
pub mod fading;
pub mod model;
pub mod rng;
pub mod scenario;
pub mod source;

pub use channel::{propagate, split};
pub use clock::{synthesize_clock_phase, ClockPhase};
pub use detector::timestamp;
pub use fading::{synthesize_fading, FadingTrace};
pub use model::{
    ChannelModel, ClockModel, ClockNoiseKind, ClockNoiseTerm, DetectorModel, DriftModel,
    DriftShape, FadingModel, PairSourceModel,
};
pub use rng::derive_seed;
pub use scenario::{
    poisson_stream, probe_link, simulate_scenario, ClockMode, Clocks, CoincidenceConfig,
    Detectors, GroundTruth, RunParams, ScenarioConfig, Segment, Segments, SimulationOutput,
};
pub use source::{generate_pairs, PairStreams};
