//! Deep embedded clustering for imbalanced data.
//!
//! An autoencoder is pretrained on the raw features, its embeddings are
//! clustered with k-means, and the encoder and centroids are then refined
//! jointly against a frequency-weighted target distribution while the
//! decoder sees per-cluster statistics of its hidden activations.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below are what the command-line tool uses.

pub mod autoencoder;
pub mod checkpoint;
pub mod clustering;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod numerics;
pub mod scalar;
pub mod statpool;
pub mod trainer;

pub use autoencoder::{pretrain, Autoencoder, MlpNetwork};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use clustering::{kmeans_init, ClusterState};
pub use config::{lr_at, Ablation, Preset, TrainConfig};
pub use data::{Dataset, ImbalanceKind, ImbalanceSpec};
pub use error::{Error, Result};
pub use metrics::{ari, clustering_accuracy, nmi};
pub use numerics::{Matrix, Rng};
pub use scalar::Scalar;
pub use statpool::{Spread, StatPool};
pub use trainer::{joint_gradients, should_stop, train, train_from, StepGrads, TrainHistory, TrainOutput};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Autoencoder64 = Autoencoder<f64>;
pub type Autoencoder32 = Autoencoder<f32>;
pub type ClusterState64 = ClusterState<f64>;
pub type Dataset64 = Dataset<f64>;
pub type Checkpoint64 = Checkpoint<f64>;
pub type TrainOutput64 = TrainOutput<f64>;
