//! Versioned JSON model files.
//!
//! A model stores the forest parameters, every tree as a pre-order list of
//! node records, the fitted score normalizer, the aggregation weights and,
//! optionally, a flow codebook and the training rows used to refit the
//! normalizer after labeled anomalies are inserted.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HifError, Result};
use crate::flow::Codebook;
use crate::forest::{ForestParams, HybridForest, Node, Tree};
use crate::io::ScoreRow;
use crate::scoring::{aggregate, AggregationParams, ScoreNormalizer};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelArtifact {
    pub forest: HybridForest,
    pub normalizer: ScoreNormalizer,
    pub aggregation: AggregationParams,
    pub codebook: Option<Codebook>,
    /// Training rows kept for refitting the normalizer.
    pub reference: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct ForestDoc {
    psi: usize,
    trees: usize,
    l_max: usize,
    seed: u64,
    dim: usize,
    sample_size: usize,
    anomalies_finalized: bool,
    nodes: Vec<Vec<Node>>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    forest: ForestDoc,
    normalizer: ScoreNormalizer,
    aggregation: AggregationParams,
    #[serde(default)]
    codebook: Option<Codebook>,
    #[serde(default)]
    reference: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

impl ModelArtifact {
    /// Fit a forest and its normalizer on `train`.
    pub fn fit(train: &[Vec<f64>], params: ForestParams, keep_reference: bool) -> Result<Self> {
        let forest = HybridForest::fit(train, params)?;
        let normalizer = ScoreNormalizer::fit_forest(&forest, train)?;
        Ok(ModelArtifact {
            forest,
            normalizer,
            aggregation: AggregationParams::default(),
            codebook: None,
            reference: keep_reference.then(|| train.to_vec()),
        })
    }

    /// Insert labeled anomalies, recompute anomaly centroids, and refit the
    /// normalizer on `train` (or the stored reference rows).
    pub fn add_anomalies<L: AsRef<str>>(
        &mut self,
        anomalies: &[Vec<f64>],
        labels: &[L],
        train: Option<&[Vec<f64>]>,
    ) -> Result<usize> {
        if anomalies.len() != labels.len() {
            return Err(HifError::InvalidParameter(format!(
                "{} anomalies but {} labels",
                anomalies.len(),
                labels.len()
            )));
        }
        for x in anomalies {
            if x.len() != self.forest.dim() {
                return Err(HifError::DimensionMismatch {
                    expected: self.forest.dim(),
                    got: x.len(),
                });
            }
        }
        self.forest.reopen();
        for (x, label) in anomalies.iter().zip(labels) {
            self.forest.add_anomaly(x, label.as_ref())?;
        }
        self.forest.finalize_anomaly_centroids();
        let train = train.or(self.reference.as_deref());
        if let Some(train) = train {
            self.normalizer = ScoreNormalizer::fit_forest(&self.forest, train)?;
        }
        Ok(anomalies.len())
    }

    pub fn score_rows<R: AsRef<[f64]> + Sync>(
        &self,
        rows: &[R],
        params: AggregationParams,
    ) -> Result<Vec<ScoreRow>> {
        Ok(self
            .forest
            .raw_scores_batch(rows)?
            .into_iter()
            .map(|raw| {
                let normalized = self.normalizer.normalize(&raw);
                ScoreRow {
                    score: aggregate(&normalized, params),
                    raw,
                    normalized,
                }
            })
            .collect())
    }

    fn to_doc(&self) -> ModelDoc {
        let p = self.forest.params();
        ModelDoc {
            format_version: MODEL_FORMAT_VERSION,
            forest: ForestDoc {
                psi: p.psi,
                trees: p.trees,
                l_max: p.l_max,
                seed: p.seed,
                dim: self.forest.dim(),
                sample_size: self.forest.sample_size(),
                anomalies_finalized: self.forest.anomalies_finalized(),
                nodes: self
                    .forest
                    .trees()
                    .iter()
                    .map(|t| t.nodes().to_vec())
                    .collect(),
            },
            normalizer: self.normalizer,
            aggregation: self.aggregation,
            codebook: self.codebook.clone(),
            reference: self.reference.clone(),
        }
    }

    fn from_doc(doc: ModelDoc) -> Result<Self> {
        let f = doc.forest;
        let params = ForestParams {
            psi: f.psi,
            trees: f.trees,
            l_max: f.l_max,
            seed: f.seed,
        };
        let trees = f
            .nodes
            .into_iter()
            .map(|nodes| Tree::from_nodes(nodes, f.dim))
            .collect::<Result<Vec<_>>>()?;
        let forest =
            HybridForest::from_parts(params, f.dim, f.sample_size, trees, f.anomalies_finalized)?;
        Ok(ModelArtifact {
            forest,
            normalizer: doc.normalizer,
            aggregation: AggregationParams::new(doc.aggregation.alpha1, doc.aggregation.alpha2)?,
            codebook: doc.codebook,
            reference: doc.reference,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_doc())?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text)
            .map_err(|e| HifError::MalformedModel(format!("no readable format_version: {e}")))?;
        if probe.format_version > MODEL_FORMAT_VERSION || probe.format_version == 0 {
            return Err(HifError::UnsupportedVersion {
                found: probe.format_version,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        Self::from_doc(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
