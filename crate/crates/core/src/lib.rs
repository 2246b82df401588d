//! Hybrid isolation forests for anomaly detection.
//!
//! Classic isolation forests score a point by how quickly random axis-aligned
//! splits isolate it. That misses anomalies sitting in empty regions enclosed
//! by normal data (the centre of a ring, say). The hybrid forest keeps the
//! centroid of every leaf's training bucket and adds a distance-to-centroid
//! score; it can also take a handful of labeled anomalies, routed into the
//! leaves after training, and score points by their relative distance to
//! those. The three components are min-max normalized and blended by two
//! weights tuned by grid search.
//!
//! Modules:
//! - [`forest`]: tree and forest construction, anomaly insertion, raw scores
//! - [`scoring`]: normalization, aggregation, weight search
//! - [`metrics`]: ROC curves, AUC, score histograms
//! - [`synth`]: the annulus benchmark and its experiments
//! - [`flow`]: network-flow parsing and 50-feature encoding
//! - [`model`], [`io`]: model files, datasets and score files

pub mod error;
pub mod flow;
pub mod forest;
pub mod io;
pub mod metrics;
pub mod model;
pub mod scoring;
pub mod synth;

pub use error::{HifError, Result};
pub use forest::{average_path_length, ForestParams, HybridForest, ScoreTriple, Tree};
pub use metrics::{roc_auc, LabeledScore, RocCurve};
pub use model::ModelArtifact;
pub use scoring::{aggregate, AggregationParams, NormalizedTriple, ScoreNormalizer};
