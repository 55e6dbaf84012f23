//! Personalized full-assortment ranking for grocery webshops.
//!
//! The crate covers the whole offline loop: parsing purchase logs into
//! user-item matrices, the network-regression recommender that produces long
//! (top-N) rankings, the repeat-purchase top-k benchmark with its
//! cluster-popularity fallback, the decision-count and average-rank metrics
//! used to quantify information overload, the hypothesis tests, and a replay
//! harness that runs an A/B comparison on a held-out slice of the log.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cousin;
pub mod error;
pub mod experiment;
pub mod ids;
pub mod ingest;
pub mod metrics;
pub mod ranking;
pub mod similarity;
pub mod stats;

pub use baseline::{egnn_ranking, popularity_ranking, EgnnConfig, FallbackRanking};
pub use cousin::{
    CousinConfig, CousinModel, EvidencePairs, HeterogeneousNetwork, RegressionResult,
};
pub use error::{Error, Result};
pub use experiment::{AbConfig, AbReport, Group, ModelSpec};
pub use ids::{Category, ItemId, OrderId, UserId};
pub use ingest::{
    InteractionMatrix, LogFormat, MatrixSpec, PurchaseEvent, TransactionLog, ValueMode,
};
pub use metrics::{ArcReport, OrderOutcome};
pub use ranking::FullRanking;
pub use similarity::SimilarityMatrix;
pub use stats::{Alternative, SampleSummary, TestResult};
