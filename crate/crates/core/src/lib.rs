//! Interval-sparse sliced inverse regression for functional predictors.
//!
//! The pipeline runs in four stages:
//! 1. slice the response and estimate SIR moments ([`moments`]);
//! 2. fit ridge SIR directions ([`ridge_sir`]);
//! 3. shrink them interval-wise with a Lasso ([`sparse`]) while fusing
//!    neighbouring intervals ([`fusion`]);
//! 4. pick the ridge parameter and dimension by cross-validation
//!    ([`tuning`]).
//!
//! Everything is generic over the scalar type; the aliases below fix it to
//! `f64`.

pub mod error;
pub mod folds;
pub mod fusion;
pub mod io;
pub mod linalg;
pub mod moments;
pub mod ridge_sir;
pub mod scalar;
pub mod simulate;
pub mod sparse;
pub mod tuning;

pub use error::{Result, SisirError};
pub use fusion::{run_fusion, CvDirections, FusionConfig};
pub use io::{load_csv, load_model, save_csv, save_model, ModelFile};
pub use moments::{compute_moments, make_slices};
pub use ridge_sir::{ridge_sir_fit, RidgeSolver};
pub use scalar::Scalar;
pub use simulate::{simulate_dataset, SimModel, SimSpec};
pub use tuning::{joint_tune, TuneGrid};

pub type Dataset = moments::Dataset<f64>;
pub type MomentSet = moments::MomentSet<f64>;
pub type SliceAssignment = moments::SliceAssignment<f64>;
pub type RidgeFit = ridge_sir::RidgeFit<f64>;
pub type IntervalPartition = sparse::IntervalPartition<f64>;
pub type LassoPath = sparse::LassoPath<f64>;
pub type SparseDirections = sparse::SparseDirections<f64>;
pub type ModelRecord = fusion::ModelRecord<f64>;
pub type ModelCollection = fusion::ModelCollection<f64>;
pub type TuneResult = tuning::TuneResult<f64>;
