//! # fieldnet
//!
//! A three-layer metric-recognition network whose first-layer weights come
//! from a simulated electrostatic field instead of a training procedure.
//!
//! Each reference digit is binarized and every white pixel becomes a point
//! charge. Two reference planes sit on either side of a plane of potential
//! sensors; the summed Coulomb potential sampled by each sensor is the weight
//! of the matching input cell. One such weight table exists for every ordered
//! pair of references, and the pair's threshold is placed midway between its
//! responses to its own two references.
//!
//! ## Modules
//!
//! - [`mnist_io`]: IDX parsing, binarization, per-class indexing.
//! - [`field_sim`]: point-charge potentials, pair weight tables, the
//!   precomputed distance kernel used by the fast path.
//! - [`metric_net`]: pair neurons, tournament second layer, class-vote third
//!   layer, cascade growth.
//! - [`harness`]: reference selection, evaluation reports, parameter sweeps.
//! - [`archive`]: bit-exact network serialization.
//! - [`dump`]: CSV and PGM renderings of potential and weight tables.

pub mod archive;
pub mod dump;
pub mod error;
pub mod field_sim;
pub mod harness;
pub mod metric_net;
pub mod mnist_io;

pub use error::{Error, Result};
pub use field_sim::{
    build_kernel, charge_sensor_distance, pair_weight_table, potential_table,
    potential_table_fast, DistanceKernel, PhysicalConfig, PotentialTable, WeightTable,
};
pub use harness::{
    evaluate, export_report, select_references, sweep, DigitScore, EvalReport, ReferenceSpec,
    ReportFormat, SweepParam,
};
pub use metric_net::{
    build_network, classify, compute_threshold, first_layer_fire, neuron_state, zero_layer_table,
    Decision, ForwardTrace, Mode, Network, PairNeuron, Reference,
};
pub use mnist_io::{
    binarize, load_idx_images, load_idx_labels, BinaryImage, Dataset, DatasetIndex, NameConvention,
    RawImage,
};

/// Side length of the image, sensor and weight grids.
pub const GRID: usize = 28;

/// Number of cells in one grid.
pub const CELLS: usize = GRID * GRID;

/// Number of digit classes.
pub const DIGITS: usize = 10;
