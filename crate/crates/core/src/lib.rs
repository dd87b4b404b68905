//! Clustering-enhanced domain adaptation for cross-domain intrusion
//! detection on tabular traffic features.
//!
//! The pipeline takes a labeled source domain and an unlabeled target
//! domain with possibly different feature counts:
//!
//! 1. [`preprocess`]: label correction, categorical encoding, per-domain
//!    z-scoring.
//! 2. [`homogenize`]: per-domain PCA into a shared dimension `d`.
//! 3. [`cluster`]: K-Medoids (PAM) in each domain.
//! 4. [`correspondence`]: medoid similarity, cluster matching and
//!    sample-level source/target pairs.
//! 5. [`adapt`]: a projection `A` that keeps scatter while shrinking the
//!    distance between paired samples, refined over a few rounds.
//! 6. [`classify`] and [`evaluate`]: detectors trained on `Z_s·A`, scored
//!    on `Z_t·A`.
//!
//! Every numeric routine is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to one of the two.

// `!(x > 0)` checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod classify;
pub mod cluster;
pub mod correspondence;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod homogenize;
pub mod linalg;
pub mod matrix;
pub mod preprocess;
pub mod scalar;

pub use adapt::{
    adapt_iterate, build_alignment_matrices, solve_projection, AdaptConfig, AdaptationResult, AlignmentMatrices,
    CorrespondenceMode, ProjectionModel,
};
pub use classify::{train_classifier, Classifier, ClassifierSpec, TrainConfig, TrainedModel};
pub use cluster::{cluster_cost, kmedoids_fit, Clustering, KMedoids};
pub use correspondence::{
    build_correspondences, match_clusters, similarity_matrix, CorrespondenceSet, Pair, PairWeighting, PairingOptions,
    TauPolicy,
};
pub use data::{generate_synthetic_pair, load_csv, ColumnSchema, DomainPair, Label, LabeledDataset, SyntheticTaskSpec};
pub use error::{Error, Result, Stage};
pub use evaluate::{evaluate_scores, summarize_runs, EvaluationReport, RunSummary};
pub use homogenize::{fit_pca, homogenize_pair, PcaModel};
pub use matrix::FeatureMatrix;
pub use scalar::Scalar;

/// Library version, stamped into experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Matrix = FeatureMatrix<f64>;
pub type Matrix32 = FeatureMatrix<f32>;
pub type Dataset = LabeledDataset<f64>;
pub type Dataset32 = LabeledDataset<f32>;
pub type Pair64 = DomainPair<f64>;
pub type Pair32 = DomainPair<f32>;
pub type Adaptation = AdaptationResult<f64>;
pub type Adaptation32 = AdaptationResult<f32>;
pub type Projection = ProjectionModel<f64>;
pub type Projection32 = ProjectionModel<f32>;
pub type Config = AdaptConfig<f64>;
pub type Config32 = AdaptConfig<f32>;
