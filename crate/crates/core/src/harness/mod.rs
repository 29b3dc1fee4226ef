//! Scenario registry, experiment drivers and CSV reports.
//!
//! Every driver is a pure function of the scenario and the configuration:
//! fixtures are generated deterministically and the only randomness, in the
//! plane search, is seeded from the registry.

pub mod config;
pub mod decay;
pub mod fixed_scale;
pub mod monotonicity;
pub mod report;
pub mod scenario;

pub use config::{parse_approx_file, parse_cylinder, ExperimentConfig};
pub use decay::{decay_estimates, run_decay, DecayEstimate};
pub use fixed_scale::{run_fixed_scale, FixedScaleSetup};
pub use monotonicity::run_monotonicity;
pub use report::{emit_csv, read_csv, read_rows, write_rows, CsvRow, DecayRow, ExcessRow, FixedScaleRow, MonoRow, Report, Summary};
pub use scenario::{
    qgraph_field, Probe, Scenario, ScenarioKind, CATENOID_EXTENT, CROSSING_ANGLE, PARABOLOID_CURVATURE, SINE_AMPLITUDE,
    SPHERE_RADIUS, TILT_SLOPE, TWO_PLANE_OFFSETS,
};
