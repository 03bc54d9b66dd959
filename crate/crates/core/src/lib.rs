//! Discrete-time simulator of a delay-based opto-electronic reservoir
//! computer whose readout is an analogue RC filter, trained online by
//! gradient descent.

pub mod config;
pub mod error;
pub mod harness;
pub mod readout;
pub mod reservoir;
pub mod tasks;
pub mod trainer;

pub use config::{
    make_mask, validate_config, InputMask, KernelVariant, PhotodiodeFn, ReadoutMode,
    ReservoirConfig, SimRng, StreamTag,
};
pub use error::{Result, SimError};
pub use harness::{run_once, run_sweep, AggregateRow, ExperimentSpec, RunResult, TaskSpec};
pub use readout::WeightVector;
pub use tasks::{TaskData, TaskKind};
pub use trainer::{TrainLog, TrainSchedule};
