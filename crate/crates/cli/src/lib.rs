//! Experiment harness over the SSP integrator library: plain-text configs,
//! canonical table reproduction, CSV artifacts, method introspection.

pub mod config;
pub mod describe;
pub mod runner;
pub mod tables;

pub use config::{BoundSpec, ConfigError, ExperimentConfig, RawConfig, ReferenceConfig, SensorConfig};
pub use describe::{describe_method, list_methods, DescribeError};
pub use runner::{
    cached_reference, config_hash, run_experiment, step_count, CellValue, RunnerError,
    TableArtifact, WorkloadRow,
};
pub use tables::{canonical_config, reproduce_table, TableCheck, TableReport, TABLE_NAMES};
