//! Experiment configuration, presets, benchmark acquisition and the run driver.

pub mod config;
pub mod presets;
pub mod run;

pub use config::{
    parse_config, parse_config_str, parse_config_str_with, parse_config_with, BenchmarkSource, ExperimentConfig, MeshConfig,
    Overrides,
};
pub use presets::{build_preset, Geometry, Preset, PRESET_NAMES};
pub use run::{acquire_benchmark, initial_mesh, run_experiment, table_grid, RunSummary, STRESS_CLAMP};
