//! Time-multiplexed reservoir computing on a nonlinear silicon microring.
//!
//! The crate simulates the full bench: a PRBS-driven optical input stage
//! with realistic modulator/detector non-idealities, the nonlinear
//! temporal dynamics of an add-drop microring (free carriers + thermal),
//! virtual-node feature extraction, a ridge-regression readout with
//! 5-fold cross-validation, and a sweep engine that maps bit error rates
//! over bitrate, detuning, and power. Training runs on both the ring
//! output and the raw input signal, so the ring's genuine contribution
//! (the RB ratio) can be separated from artifacts the input stage itself
//! imprints on the data.

// Validation deliberately writes `!(x > 0.0)` style guards: unlike the
// inverted comparison, they treat NaN as invalid.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod nodes;
pub mod plot;
pub mod readout;
pub mod ring;
pub mod signal;
pub mod sweep;
pub mod tasks;
pub mod waveform;

pub use config::Config;
pub use nodes::{assemble_design_matrix, rebin_to_nodes, samples_per_bit, Branch, NodeMatrix};
pub use readout::{
    bit_error_rate, kfold_lambda_select, ridge_solve, statistical_floor, threshold_predict,
    Evaluation, ReadoutSettings, ReadoutWeights,
};
pub use ring::{
    calibrate_nonlinear, detect_self_pulsing, integrate_trace, linear_transmission,
    nonlinear_shift, state_derivative, OutputPort, RingOutput, RingParams, RingState,
    SolverSettings,
};
pub use signal::{encode_ook, photodetect, prbs8_generate, DetectorModel, ModulatorModel};
pub use sweep::{run_configuration, run_sweep, SweepGrid};
pub use tasks::{build_targets, truth_eval, LogicOp, TaskSpec};
pub use waveform::{OpticalWaveform, WaveformKind};
