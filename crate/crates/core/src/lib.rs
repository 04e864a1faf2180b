//! Facial landmark correlation analysis.
//!
//! The pipeline:
//!
//! 1. [`dataset`] reads `.pts` directories, WFLW annotation files or the
//!    canonical JSON format into a [`Dataset`].
//! 2. [`shape`] removes per-image translation and scale.
//! 3. [`cca`] computes the canonical correlation of every landmark pair and
//!    assembles the [`AffinityMatrix`].
//! 4. [`diagnostics`] compares prediction dumps against ground truth
//!    (affinity matrix error, spread across checkpoints, NME).
//! 5. [`search`] picks the sparse landmark subset that maximizes the
//!    minimum correlation between every unselected landmark and its best
//!    selected proxy.
//!
//! [`synth`] holds seeded generators and brute-force reference solvers used
//! by the test suites.

// `!(x > 0.0)` is used deliberately so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod bitset;
pub mod cca;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod matrix;
pub mod presets;
pub mod search;
pub mod shape;
pub mod synth;

pub use cca::{affinity_matrix, cca_pair, covariance, dataset_affinity, CcaResult, DEFAULT_RIDGE};
pub use dataset::{
    load_dataset, parse_pts, parse_wflw_line, ComponentBlock, Dataset, EyeConvention, FormatDescriptor, InputFormat,
    LandmarkSet, Point,
};
pub use diagnostics::{affinity_std, ame, block_summary, nme, BlockStats};
pub use error::{Error, Result};
pub use matrix::{
    export_matrix, import_matrix, AffinityMatrix, AffinityStdMatrix, AmeMatrix, MatrixLayout, SquareMatrix,
};
pub use presets::ExistingFormat;
pub use search::{
    compare_format, evaluate_format, search, search_exact, search_greedy, sweep, Method, SearchProblem, SparseFormat,
    SweepConfig, SweepCurve,
};
pub use shape::{normalize, normalize_dataset, NormalizedDataset, NormalizedSet};
