//! Quadratic multiform separation classifiers.
//!
//! Each class `i` owns a member function `f_i(x) = ‖A_i x − b_i‖²`; a point
//! is assigned to the class whose member function is smallest. Training
//! minimizes a ratio-clamp loss with Adam.

pub mod adam;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
mod rng;
pub mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use data::{LabeledDataset, ScalerParams};
pub use error::{QmsError, Result};
pub use eval::{accuracy, cross_validate, sweep, CvReport, SweepParam, SweepReport};
pub use loss::{gradients, loss, loss_and_gradients, ClassPartitionedBatch, GradientSet};
pub use model::{AlphaMatrix, FeatureMatrix, MemberFunctionParams, QmsModel};
pub use trainer::{train, AlphaSpec, TrainConfig, TrainingHistory};
