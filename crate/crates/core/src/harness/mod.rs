//! Experiment configuration, Monte-Carlo sweeps, metrics and result files.

mod config;
mod export;
pub mod matrix_io;
mod metrics;
mod results;
mod scene;
mod sweep;
mod verify;

pub use config::{DeclaredRf, ExperimentConfig, SceneConfig, SweepConfig, UserBox, SCHEMA};
pub use export::export_dictionaries;
pub use metrics::{nmse, noise_var_for_snr, rmse, to_db};
pub use results::{aggregate, Aggregate, FailureSummary, ResultTable, TrialRow, CSV_COLUMNS, STATUS_OK};
pub use scene::{channel_at, draw_channel};
pub use sweep::{run_sweep, simulate, Experiment, SimulationReport};
pub use verify::{run_checks, Check};
