//! Property-conditioned coordinate generator: an iterative-denoising model
//! over vertex coordinates with a property-query attention block, plus an
//! MLP edge predictor. Double precision throughout; gradients are
//! hand-derived and gated by a finite-difference check.

mod config;
mod edges;
mod model;
mod model_io;
mod nn;
mod params;
mod sample;
mod schedule;
mod train;

pub use config::{GenConfig, PROP_DIM};
pub use edges::predict_edge_probabilities;
pub use model::{predict_x0, Model, PropNormalizer};
pub use params::ModelParams;
pub use sample::greedy_match_rmsd;
pub use schedule::{forward_noise, NoiseSchedule};
pub use train::{
    gradient_check, train, train_with_schedule, Dataset, GradCheckReport, TrainItem, TrainReport,
};
