//! Score normalization, the two-weight linear aggregation, and the
//! meta-parameter grid search.

use serde::{Deserialize, Serialize};

use crate::error::{HifError, Result};
use crate::forest::{HybridForest, ScoreTriple};
use crate::metrics::{auc, LabeledScore};

/// Default lattice spacing for [`grid_search`].
pub const DEFAULT_GRID_STEP: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentRange {
    pub min: f64,
    pub max: f64,
}

impl ComponentRange {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        ComponentRange { min, max }
    }

    /// `(v - min) / (max - min)`, unclamped; a constant component maps to 0.
    pub fn apply(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }
}

/// Min-max ranges of the three raw components on the training set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreNormalizer {
    pub path: ComponentRange,
    pub centroid: ComponentRange,
    pub anomaly_ratio: ComponentRange,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTriple {
    pub path: f64,
    pub centroid: f64,
    pub anomaly_ratio: f64,
}

impl ScoreNormalizer {
    pub fn fit(triples: &[ScoreTriple]) -> Result<Self> {
        if triples.is_empty() {
            return Err(HifError::EmptyDataset);
        }
        Ok(ScoreNormalizer {
            path: ComponentRange::fit(triples.iter().map(|t| t.path_score)),
            centroid: ComponentRange::fit(triples.iter().map(|t| t.centroid_score)),
            anomaly_ratio: ComponentRange::fit(triples.iter().map(|t| t.anomaly_ratio_score)),
        })
    }

    /// Fit on the raw scores of `train` under `forest`.
    pub fn fit_forest<R: AsRef<[f64]> + Sync>(forest: &HybridForest, train: &[R]) -> Result<Self> {
        Self::fit(&forest.raw_scores_batch(train)?)
    }

    pub fn normalize(&self, t: &ScoreTriple) -> NormalizedTriple {
        NormalizedTriple {
            path: self.path.apply(t.path_score),
            centroid: self.centroid.apply(t.centroid_score),
            anomaly_ratio: self.anomaly_ratio.apply(t.anomaly_ratio_score),
        }
    }
}

/// Weights of the linear score model:
/// `alpha2 * (alpha1 * s + (1 - alpha1) * s_c) + (1 - alpha2) * s_a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregationParams {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl AggregationParams {
    /// Plain isolation-forest score.
    pub const ISOLATION_ONLY: AggregationParams = AggregationParams {
        alpha1: 1.0,
        alpha2: 1.0,
    };

    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        for (name, a) in [("alpha1", alpha1), ("alpha2", alpha2)] {
            if !(0.0..=1.0).contains(&a) {
                return Err(HifError::InvalidParameter(format!(
                    "{name} must lie in [0, 1], got {a}"
                )));
            }
        }
        Ok(AggregationParams { alpha1, alpha2 })
    }

    /// Unsupervised hybrid: path and centroid scores only (`alpha2 = 1`).
    pub fn unsupervised(alpha1: f64) -> Result<Self> {
        Self::new(alpha1, 1.0)
    }
}

impl Default for AggregationParams {
    fn default() -> Self {
        Self::ISOLATION_ONLY
    }
}

pub fn aggregate(s: &NormalizedTriple, p: AggregationParams) -> f64 {
    p.alpha2 * (p.alpha1 * s.path + (1.0 - p.alpha1) * s.centroid)
        + (1.0 - p.alpha2) * s.anomaly_ratio
}

/// Lattice coordinates `0, step, 2 step, ...` on `[0, 1]`, with `1` appended
/// when `step` does not divide it.
pub fn grid_axis(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(HifError::InvalidParameter(format!(
            "grid step must lie in (0, 0.5], got {step}"
        )));
    }
    let n = (1.0 / step + 1e-9).floor() as usize;
    let mut axis: Vec<f64> = (0..=n)
        .map(|i| ((i as f64 * step) * 1e12).round() / 1e12)
        .collect();
    if *axis.last().unwrap() < 1.0 - 1e-9 {
        axis.push(1.0);
    }
    Ok(axis)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha1: f64,
    pub alpha2: f64,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: AggregationParams,
    pub best_auc: f64,
    /// Every evaluated point, `alpha1`-major.
    pub lattice: Vec<GridPoint>,
}

impl GridSearchResult {
    pub fn evaluations(&self) -> usize {
        self.lattice.len()
    }

    pub fn write_tsv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "alpha1\talpha2\tauc")?;
        for p in &self.lattice {
            writeln!(out, "{}\t{}\t{}", p.alpha1, p.alpha2, p.auc)?;
        }
        Ok(())
    }
}

/// AUC of the aggregated score over labeled, normalized triples.
pub fn aggregated_auc(
    validation: &[(NormalizedTriple, bool)],
    params: AggregationParams,
) -> Result<f64> {
    let scored: Vec<LabeledScore> = validation
        .iter()
        .map(|(t, anomaly)| LabeledScore::new(aggregate(t, params), *anomaly))
        .collect();
    auc(&scored)
}

/// Exhaustive search over `alpha1_axis x alpha2_axis`. Ties go to the
/// smallest `alpha1`, then the smallest `alpha2`.
pub fn search_lattice(
    validation: &[(NormalizedTriple, bool)],
    alpha1_axis: &[f64],
    alpha2_axis: &[f64],
) -> Result<GridSearchResult> {
    let positives = validation.iter().filter(|(_, a)| *a).count();
    if positives == 0 || positives == validation.len() {
        return Err(HifError::SingleClass {
            positives,
            negatives: validation.len() - positives,
        });
    }
    let coords: Vec<(f64, f64)> = alpha1_axis
        .iter()
        .flat_map(|&a1| alpha2_axis.iter().map(move |&a2| (a1, a2)))
        .collect();
    let eval = |&(alpha1, alpha2): &(f64, f64)| -> Result<GridPoint> {
        let auc = aggregated_auc(validation, AggregationParams::new(alpha1, alpha2)?)?;
        Ok(GridPoint {
            alpha1,
            alpha2,
            auc,
        })
    };
    #[cfg(feature = "parallel")]
    let lattice: Vec<GridPoint> = {
        use rayon::prelude::*;
        coords.par_iter().map(eval).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let lattice: Vec<GridPoint> = coords.iter().map(eval).collect::<Result<_>>()?;

    let mut best = lattice[0];
    for p in &lattice[1..] {
        let better = p.auc > best.auc
            || (p.auc == best.auc
                && (p.alpha1 < best.alpha1 || (p.alpha1 == best.alpha1 && p.alpha2 < best.alpha2)));
        if better {
            best = *p;
        }
    }
    Ok(GridSearchResult {
        best: AggregationParams::new(best.alpha1, best.alpha2)?,
        best_auc: best.auc,
        lattice,
    })
}

/// Search both weights on the lattice with spacing `step`.
pub fn grid_search(validation: &[(NormalizedTriple, bool)], step: f64) -> Result<GridSearchResult> {
    let axis = grid_axis(step)?;
    search_lattice(validation, &axis, &axis)
}

/// Search `alpha1` only, with `alpha2 = 1` (no labeled-anomaly component).
pub fn search_alpha1(
    validation: &[(NormalizedTriple, bool)],
    step: f64,
) -> Result<GridSearchResult> {
    search_lattice(validation, &grid_axis(step)?, &[1.0])
}

/// Score `instances` with `forest`, normalize, and grid-search the weights.
pub fn grid_search_forest<R: AsRef<[f64]> + Sync>(
    forest: &HybridForest,
    normalizer: &ScoreNormalizer,
    instances: &[R],
    anomaly: &[bool],
    step: f64,
) -> Result<GridSearchResult> {
    if instances.len() != anomaly.len() {
        return Err(HifError::InvalidParameter(format!(
            "{} instances but {} labels",
            instances.len(),
            anomaly.len()
        )));
    }
    let validation: Vec<_> = forest
        .raw_scores_batch(instances)?
        .iter()
        .map(|t| normalizer.normalize(t))
        .zip(anomaly.iter().copied())
        .collect();
    grid_search(&validation, step)
}
