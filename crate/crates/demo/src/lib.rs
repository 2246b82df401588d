//! Browser demo for the annulus benchmark.
//!
//! Exposes three operations to the page: the aggregated score field over the
//! plane for chosen weights, ROC curves of the isolation-only, unsupervised
//! and supervised detectors, and the leaf-occupancy study. Flat `Vec<f64>`
//! buffers cross the JS boundary as `Float64Array`s.

use hif::forest::height_limit;
use hif::metrics::{roc_auc, LabeledScore};
use hif::scoring::{
    aggregate, grid_axis, search_lattice, AggregationParams, NormalizedTriple, ScoreNormalizer,
};
use hif::synth::{measure_leaf_occupancy, occupancy_dataset, TorusConfig, TorusDataset};
use hif::{ForestParams, HybridForest};
use wasm_bindgen::prelude::*;

/// Half-width of the square shown by the heatmap.
pub const EXTENT: f64 = 6.0;

const LABELED_CLUSTER: &str = "red";

#[wasm_bindgen]
pub struct TorusDemo {
    data: TorusDataset,
    labeled: Vec<Vec<f64>>,
    forest: HybridForest,
    normalizer: ScoreNormalizer,
    /// Normalized triples of the pooled test set, with anomaly flags.
    validation: Vec<(NormalizedTriple, bool)>,
}

impl TorusDemo {
    pub fn create(seed: u64, psi: usize, trees: usize, labeled: usize) -> hif::Result<Self> {
        let config = TorusConfig::default().with_seed(seed);
        let data = config.generate()?;
        let labeled = config.labeled_anomalies(LABELED_CLUSTER, labeled)?;
        let params = ForestParams::new(psi, trees, seed);
        let mut forest = HybridForest::fit(&data.train, params)?;
        for x in &labeled {
            forest.add_anomaly(x, LABELED_CLUSTER)?;
        }
        forest.finalize_anomaly_centroids();
        let normalizer = ScoreNormalizer::fit_forest(&forest, &data.train)?;
        let (points, flags) = data.pooled_test();
        let validation = forest
            .raw_scores_batch(&points)?
            .iter()
            .map(|t| normalizer.normalize(t))
            .zip(flags)
            .collect();
        Ok(TorusDemo {
            data,
            labeled,
            forest,
            normalizer,
            validation,
        })
    }

    pub fn score_grid(
        &self,
        params: AggregationParams,
        resolution: usize,
    ) -> hif::Result<Vec<f64>> {
        let n = resolution.max(2);
        let step = 2.0 * EXTENT / (n - 1) as f64;
        let points: Vec<[f64; 2]> = (0..n * n)
            .map(|k| {
                let (row, col) = (k / n, k % n);
                [-EXTENT + col as f64 * step, EXTENT - row as f64 * step]
            })
            .collect();
        Ok(self
            .forest
            .raw_scores_batch(&points)?
            .iter()
            .map(|t| aggregate(&self.normalizer.normalize(t), params))
            .collect())
    }

    pub fn roc_points(&self, params: AggregationParams) -> hif::Result<(Vec<f64>, f64)> {
        let samples: Vec<LabeledScore> = self
            .validation
            .iter()
            .map(|(t, a)| LabeledScore::new(aggregate(t, params), *a))
            .collect();
        let curve = roc_auc(&samples)?;
        Ok((
            curve.points.iter().flat_map(|&(f, t)| [f, t]).collect(),
            curve.auc,
        ))
    }

    pub fn tune(&self, supervised: bool, step: f64) -> hif::Result<(AggregationParams, f64)> {
        let axis = grid_axis(step)?;
        let alpha2 = if supervised { axis.clone() } else { vec![1.0] };
        let r = search_lattice(&self.validation, &axis, &alpha2)?;
        Ok((r.best, r.best_auc))
    }
}

fn js(e: hif::HifError) -> JsError {
    JsError::new(&e.to_string())
}

fn weights(alpha1: f64, alpha2: f64) -> Result<AggregationParams, JsError> {
    AggregationParams::new(alpha1, alpha2).map_err(js)
}

fn flatten(points: &[Vec<f64>]) -> Vec<f64> {
    points.iter().flatten().copied().collect()
}

#[wasm_bindgen]
impl TorusDemo {
    /// Generate the annulus data, fit a forest and insert `labeled` red anomalies.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, psi: u32, trees: u32, labeled: u32) -> Result<TorusDemo, JsError> {
        Self::create(seed as u64, psi as usize, trees as usize, labeled as usize).map_err(js)
    }

    /// Aggregated scores on a `resolution x resolution` grid over
    /// `[-EXTENT, EXTENT]^2`, row-major from the top-left corner.
    pub fn heatmap(&self, alpha1: f64, alpha2: f64, resolution: u32) -> Result<Vec<f64>, JsError> {
        self.score_grid(weights(alpha1, alpha2)?, resolution as usize)
            .map_err(js)
    }

    /// ROC curve of the pooled test set as `[fpr0, tpr0, fpr1, tpr1, ...]`.
    pub fn roc(&self, alpha1: f64, alpha2: f64) -> Result<Vec<f64>, JsError> {
        Ok(self.roc_points(weights(alpha1, alpha2)?).map_err(js)?.0)
    }

    pub fn auc(&self, alpha1: f64, alpha2: f64) -> Result<f64, JsError> {
        Ok(self.roc_points(weights(alpha1, alpha2)?).map_err(js)?.1)
    }

    /// Best weights on the pooled test set as `[alpha1, alpha2, auc]`;
    /// `supervised = false` keeps `alpha2 = 1`.
    pub fn best_weights(&self, supervised: bool, step: f64) -> Result<Vec<f64>, JsError> {
        let (p, auc) = self.tune(supervised, step).map_err(js)?;
        Ok(vec![p.alpha1, p.alpha2, auc])
    }

    pub fn extent(&self) -> f64 {
        EXTENT
    }

    /// Training points as `[x0, y0, x1, y1, ...]`.
    pub fn train_points(&self) -> Vec<f64> {
        flatten(&self.data.train)
    }

    pub fn labeled_points(&self) -> Vec<f64> {
        flatten(&self.labeled)
    }

    pub fn cluster_names(&self) -> Vec<String> {
        self.data.clusters.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Points of cluster `index` in [`TorusDemo::cluster_names`] order.
    pub fn cluster_points(&self, index: usize) -> Vec<f64> {
        self.data
            .clusters
            .get(index)
            .map_or_else(Vec::new, |(_, p)| flatten(p))
    }
}

/// Mean leaf size for each `psi`, as `[classic, 1.2 rule]` pairs, on a
/// Gaussian cloud of `points` points.
pub fn occupancy(
    psi_values: &[usize],
    points: usize,
    trees: usize,
    seed: u64,
) -> hif::Result<Vec<f64>> {
    let train = occupancy_dataset(points, seed)?;
    let rows = measure_leaf_occupancy(&train, psi_values, &[1.0, 1.2], trees, &[seed])?;
    Ok(rows.iter().map(|r| r.mean_leaf_size).collect())
}

/// Leaf occupancy for the page: `[psi, l_max, classic size, l_max 1.2, 1.2-rule size]` per `psi`.
#[wasm_bindgen]
pub fn leaf_occupancy(
    psi_values: Vec<u32>,
    points: u32,
    trees: u32,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    let psis: Vec<usize> = psi_values.iter().map(|&p| p as usize).collect();
    let sizes = occupancy(&psis, points as usize, trees as usize, seed as u64).map_err(js)?;
    Ok(psis
        .iter()
        .zip(sizes.chunks(2))
        .flat_map(|(&p, s)| {
            [
                p as f64,
                height_limit(p, 1.0) as f64,
                s[0],
                height_limit(p, 1.2) as f64,
                s[1],
            ]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> TorusDemo {
        TorusDemo::create(1, 64, 64, 5).unwrap()
    }

    #[test]
    fn heatmap_shape_and_centre() {
        let d = demo();
        let grid = d
            .score_grid(AggregationParams::new(0.3, 1.0).unwrap(), 41)
            .unwrap();
        assert_eq!(grid.len(), 41 * 41);
        assert!(grid.iter().all(|v| v.is_finite()));
        // Centre of the hole scores above a point on the ring.
        let centre = grid[20 * 41 + 20];
        let ring = grid[20 * 41 + 20 + 9];
        assert!(centre > ring, "{centre} vs {ring}");
    }

    #[test]
    fn roc_is_flattened_curve() {
        let d = demo();
        let (pts, auc) = d.roc_points(AggregationParams::ISOLATION_ONLY).unwrap();
        assert_eq!(pts.len() % 2, 0);
        assert_eq!(&pts[..2], &[0.0, 0.0]);
        assert_eq!(&pts[pts.len() - 2..], &[1.0, 1.0]);
        assert!(auc > 0.5 && auc < 0.9);
    }

    #[test]
    fn tuning_improves_on_isolation() {
        let d = demo();
        let (_, isolation) = d.roc_points(AggregationParams::ISOLATION_ONLY).unwrap();
        let (p1, hif1) = d.tune(false, 0.1).unwrap();
        let (_, hif2) = d.tune(true, 0.1).unwrap();
        assert_eq!(p1.alpha2, 1.0);
        assert!(hif1 > isolation && hif2 >= hif1);
    }

    #[test]
    fn point_buffers() {
        let d = demo();
        assert_eq!(d.train_points().len(), 2000);
        assert_eq!(d.labeled_points().len(), 10);
        assert_eq!(d.cluster_names(), ["red", "green", "cyan"]);
        assert_eq!(d.cluster_points(1).len(), 2000);
        assert!(d.cluster_points(7).is_empty());
    }

    #[test]
    fn occupancy_pairs() {
        let sizes = occupancy(&[16, 64], 2000, 20, 3).unwrap();
        assert_eq!(sizes.len(), 4);
        assert!(sizes[1] < sizes[0] && sizes[3] < sizes[2]);
    }

    #[test]
    fn bad_parameters_are_errors() {
        assert!(TorusDemo::create(0, 1, 10, 0).is_err());
        assert!(TorusDemo::create(0, 64, 0, 0).is_err());
    }
}
