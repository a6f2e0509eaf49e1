//! Transductive head and body pose estimation from temporally sparse labels.
//!
//! Pose labels observed at a small fraction of time steps are propagated to
//! the remaining steps in two stages: Gaussian process regression interpolates
//! each one-hot label row over time, and a joint nuclear-norm matrix
//! completion couples the interpolated labels with visual features and with
//! the other body stream. The crate also ships the experiment harness used to
//! evaluate the approach: a synthetic benchmark generator, observation masks
//! with diversity rejection, cross-validated hyperparameter search, and
//! sweep/report emission.

pub mod checkpoint;
pub mod completion;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod gpr;
pub mod labels;
pub mod preprocess;
pub mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use completion::{
    build_heterogeneous, nuclear_norm, objective, solve, solve_from, svt, update_j, update_k,
    update_multipliers, AdmmState, HeterogeneousMatrix, LabelProjection, ResidualRecord,
    SolveOptions, SolveReport, SolverWeights,
};
pub use dataset::{load_dataset, save_dataset, PersonDataset};
pub use error::{Error, Result};
pub use experiment::{
    cross_validate, derive_seed, interpolate_labels, predict_labels, run_single, run_single_method,
    run_sweep, ExperimentConfig, Method, PipelinePrediction, RepeatRecord, ReportRow, SweepResult,
    SweepRow,
};
pub use gpr::{
    default_kernel_grid, fit_kernel_hyperparams, laplacian_smooth, linear_interpolate, rbf_kernel,
    GprModel, InterpolatedLabels, InterpolationSource, RbfKernelParams,
};
pub use labels::{
    accuracy, decode_labels, encode_angle, generate_mask, label_entropy, EntropyReport,
    LabelMatrix, ObservationMask, PoseClass, DEFAULT_CLASSES,
};
pub use preprocess::{preprocess_features, PcaTransform};
pub use synthetic::{generate_synthetic, SyntheticSpec};
