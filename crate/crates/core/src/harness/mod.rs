//! Experiment orchestration: config, delay buffer, slot loop, sweeps and
//! output files.

pub mod config;
pub mod delay;
pub mod output;
pub mod run;
pub mod schemes;
pub mod sweep;

pub use config::{load_config, Algorithm, PerCell, ScenarioConfig};
pub use delay::{DelayBuffer, PrecoderHistory};
pub use output::{read_summary, write_outputs, SUMMARY_FILE, TIMESERIES_FILE};
pub use run::{
    run_experiment, run_schemes, AlgorithmSummary, RunOptions, RunOutput, RunSummary, Scenario,
};
pub use schemes::{FdZfScheme, ProposedScheme, SaddleScheme, Scheme, SchemeDiagnostics};
pub use sweep::{sweep, write_sweep, SweepAxis, SweepPoint};
