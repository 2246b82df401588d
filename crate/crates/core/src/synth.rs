//! The 2-D annulus benchmark: uniform "normal" data on a ring with Gaussian
//! anomaly clusters on its rim and in its empty centre, plus the experiments
//! run on it.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{HifError, Result};
use crate::forest::{height_limit, ForestParams, HybridForest, DEFAULT_HEIGHT_FACTOR};
use crate::metrics::{auc, LabeledScore};
use crate::scoring::{
    aggregate, grid_axis, search_lattice, AggregationParams, NormalizedTriple, ScoreNormalizer,
};

/// Area-uniform samples from the annulus `r_inner <= |p| <= r_outer`.
pub fn sample_annulus<R: Rng + ?Sized>(
    n: usize,
    r_inner: f64,
    r_outer: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if !(r_inner >= 0.0 && r_outer > r_inner && r_outer.is_finite()) {
        return Err(HifError::InvalidParameter(format!(
            "need 0 <= r_inner < r_outer, got {r_inner}, {r_outer}"
        )));
    }
    let (a, b) = (r_inner * r_inner, r_outer * r_outer);
    Ok((0..n)
        .map(|_| {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let u: f64 = rng.random();
            let r = (u * (b - a) + a).sqrt();
            vec![r * theta.cos(), r * theta.sin()]
        })
        .collect())
}

/// Axis-aligned Gaussian samples; `variance` is the covariance diagonal.
pub fn sample_gaussian<R: Rng + ?Sized>(
    n: usize,
    mean: &[f64],
    variance: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if mean.len() != variance.len() {
        return Err(HifError::DimensionMismatch {
            expected: mean.len(),
            got: variance.len(),
        });
    }
    let axes = mean
        .iter()
        .zip(variance)
        .map(|(&m, &v)| {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HifError::InvalidParameter(format!(
                    "variance must be positive, got {v}"
                )));
            }
            Normal::new(m, v.sqrt()).map_err(|e| HifError::InvalidParameter(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n)
        .map(|_| axes.iter().map(|d| d.sample(rng)).collect())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub name: String,
    pub mean: [f64; 2],
    pub variance: [f64; 2],
    pub n: usize,
}

impl ClusterSpec {
    pub fn new(name: &str, mean: [f64; 2], variance: [f64; 2], n: usize) -> Self {
        ClusterSpec {
            name: name.to_owned(),
            mean,
            variance,
            n,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        sample_gaussian(n, &self.mean, &self.variance, rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub r_inner: f64,
    pub r_outer: f64,
    pub clusters: Vec<ClusterSpec>,
    pub seed: u64,
}

impl Default for TorusConfig {
    fn default() -> Self {
        TorusConfig {
            n_train: 1000,
            n_test: 1000,
            r_inner: 1.5,
            r_outer: 4.0,
            clusters: vec![
                ClusterSpec::new("red", [3.0, 3.0], [0.25, 0.25], 1000),
                ClusterSpec::new("green", [0.0, 0.0], [0.5, 0.5], 1000),
                ClusterSpec::new("cyan", [-3.0, -3.0], [0.25, 0.25], 1000),
            ],
            seed: 0,
        }
    }
}

impl TorusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_inner > 0.0 && self.r_outer > self.r_inner) {
            return Err(HifError::InvalidParameter(format!(
                "need 0 < r_inner < r_outer, got {}, {}",
                self.r_inner, self.r_outer
            )));
        }
        if self.n_train < 1 || self.n_test < 1 || self.clusters.iter().any(|c| c.n < 1) {
            return Err(HifError::InvalidParameter(
                "all counts must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn cluster(&self, name: &str) -> Result<&ClusterSpec> {
        self.clusters
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| HifError::InvalidParameter(format!("no cluster named `{name}`")))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TorusConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn generate(&self) -> Result<TorusDataset> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let train = sample_annulus(self.n_train, self.r_inner, self.r_outer, &mut rng)?;
        let test_normal = sample_annulus(self.n_test, self.r_inner, self.r_outer, &mut rng)?;
        let clusters = self
            .clusters
            .iter()
            .map(|c| Ok((c.name.clone(), c.sample(c.n, &mut rng)?)))
            .collect::<Result<_>>()?;
        Ok(TorusDataset {
            train,
            test_normal,
            clusters,
        })
    }

    /// Labeled anomalies from cluster `name`, drawn on a stream independent
    /// of [`TorusConfig::generate`].
    pub fn labeled_anomalies(&self, name: &str, n: usize) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        self.cluster(name)?.sample(n, &mut rng)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TorusDataset {
    pub train: Vec<Vec<f64>>,
    pub test_normal: Vec<Vec<f64>>,
    pub clusters: Vec<(String, Vec<Vec<f64>>)>,
}

impl TorusDataset {
    /// Normal test points followed by every cluster point, with anomaly flags.
    pub fn pooled_test(&self) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut points = self.test_normal.clone();
        let mut anomaly = vec![false; points.len()];
        for (_, c) in &self.clusters {
            points.extend(c.iter().cloned());
            anomaly.extend(std::iter::repeat_n(true, c.len()));
        }
        (points, anomaly)
    }
}

/// Settings shared by the annulus experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub psi: usize,
    pub trees: usize,
    pub l_max: usize,
    pub grid_step: f64,
    /// Labeled anomalies inserted for the supervised detector.
    pub labeled: usize,
    pub labeled_cluster: String,
    /// Independent repetitions; run `r` uses data seed `config.seed + r` and
    /// forest seed `forest_seed + r`.
    pub runs: usize,
    pub forest_seed: u64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            psi: 64,
            trees: 512,
            l_max: height_limit(64, DEFAULT_HEIGHT_FACTOR),
            grid_step: 0.05,
            labeled: 5,
            labeled_cluster: "red".into(),
            runs: 10,
            forest_seed: 1000,
        }
    }
}

impl ExperimentParams {
    fn forest_params(&self, run: usize) -> ForestParams {
        ForestParams::new(self.psi, self.trees, self.forest_seed + run as u64)
            .with_l_max(self.l_max)
    }
}

/// Scores of one detector configuration on the annulus test data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub name: String,
    pub params: AggregationParams,
    /// Each cluster against the normal test set.
    pub auc_by_cluster: Vec<(String, f64)>,
    /// All clusters pooled against the normal test set.
    pub auc_pooled: f64,
}

impl DetectorReport {
    pub fn cluster_auc(&self, name: &str) -> Option<f64> {
        self.auc_by_cluster
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| *a)
    }
}

struct ScoredTorus {
    normal: Vec<NormalizedTriple>,
    clusters: Vec<(String, Vec<NormalizedTriple>)>,
}

impl ScoredTorus {
    fn score(forest: &HybridForest, data: &TorusDataset) -> Result<Self> {
        let normalizer = ScoreNormalizer::fit_forest(forest, &data.train)?;
        let norm = |pts: &[Vec<f64>]| -> Result<Vec<NormalizedTriple>> {
            Ok(forest
                .raw_scores_batch(pts)?
                .iter()
                .map(|t| normalizer.normalize(t))
                .collect())
        };
        Ok(ScoredTorus {
            normal: norm(&data.test_normal)?,
            clusters: data
                .clusters
                .iter()
                .map(|(n, pts)| Ok((n.clone(), norm(pts)?)))
                .collect::<Result<_>>()?,
        })
    }

    fn validation(&self, cluster: Option<&str>) -> Vec<(NormalizedTriple, bool)> {
        let mut v: Vec<_> = self.normal.iter().map(|t| (*t, false)).collect();
        for (name, ts) in &self.clusters {
            if cluster.is_none_or(|c| c == name) {
                v.extend(ts.iter().map(|t| (*t, true)));
            }
        }
        v
    }

    fn report(&self, name: &str, params: AggregationParams) -> Result<DetectorReport> {
        let auc_of = |v: &[(NormalizedTriple, bool)]| {
            let s: Vec<_> = v
                .iter()
                .map(|(t, a)| LabeledScore::new(aggregate(t, params), *a))
                .collect();
            auc(&s)
        };
        Ok(DetectorReport {
            name: name.to_owned(),
            params,
            auc_by_cluster: self
                .clusters
                .iter()
                .map(|(n, _)| Ok((n.clone(), auc_of(&self.validation(Some(n)))?)))
                .collect::<Result<_>>()?,
            auc_pooled: auc_of(&self.validation(None))?,
        })
    }
}

/// One repetition of the blind-spot experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlindSpotRun {
    pub isolation: DetectorReport,
    /// Path + centroid score, `alpha1` tuned on the pooled test set.
    pub hybrid_unsupervised: DetectorReport,
    /// All three components with labeled anomalies, both weights tuned.
    pub hybrid_supervised: DetectorReport,
}

pub fn run_blind_spot_once(
    config: &TorusConfig,
    params: &ExperimentParams,
    run: usize,
) -> Result<BlindSpotRun> {
    let config = config.with_seed(config.seed + run as u64);
    let data = config.generate()?;
    let mut forest = HybridForest::fit(&data.train, params.forest_params(run))?;
    for x in config.labeled_anomalies(&params.labeled_cluster, params.labeled)? {
        forest.add_anomaly(&x, &params.labeled_cluster)?;
    }
    forest.finalize_anomaly_centroids();
    let scored = ScoredTorus::score(&forest, &data)?;
    let pooled = scored.validation(None);

    let axis = grid_axis(params.grid_step)?;
    let hif1 = search_lattice(&pooled, &axis, &[1.0])?.best;
    let hif2 = search_lattice(&pooled, &axis, &axis)?.best;
    Ok(BlindSpotRun {
        isolation: scored.report("IF", AggregationParams::ISOLATION_ONLY)?,
        hybrid_unsupervised: scored.report("HIF1", hif1)?,
        hybrid_supervised: scored.report("HIF2", hif2)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Mean and standard deviation over runs for one detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSummary {
    pub name: String,
    pub alpha1: MeanStd,
    pub alpha2: MeanStd,
    pub auc_by_cluster: Vec<(String, MeanStd)>,
    pub auc_pooled: MeanStd,
}

impl DetectorSummary {
    fn of(reports: &[&DetectorReport]) -> Self {
        let pick = |f: &dyn Fn(&DetectorReport) -> f64| {
            MeanStd::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>())
        };
        DetectorSummary {
            name: reports[0].name.clone(),
            alpha1: pick(&|r| r.params.alpha1),
            alpha2: pick(&|r| r.params.alpha2),
            auc_by_cluster: reports[0]
                .auc_by_cluster
                .iter()
                .enumerate()
                .map(|(i, (n, _))| (n.clone(), pick(&|r| r.auc_by_cluster[i].1)))
                .collect(),
            auc_pooled: pick(&|r| r.auc_pooled),
        }
    }

    pub fn cluster_auc(&self, name: &str) -> Option<MeanStd> {
        self.auc_by_cluster
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| *a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlindSpotReport {
    pub runs: Vec<BlindSpotRun>,
    pub isolation: DetectorSummary,
    pub hybrid_unsupervised: DetectorSummary,
    pub hybrid_supervised: DetectorSummary,
}

impl BlindSpotReport {
    pub fn detectors(&self) -> [&DetectorSummary; 3] {
        [
            &self.isolation,
            &self.hybrid_unsupervised,
            &self.hybrid_supervised,
        ]
    }

    /// One row per detector: weights, per-cluster and pooled AUC (mean, std).
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "detector\talpha1\talpha1_std\talpha2\talpha2_std")?;
        for (name, _) in &self.isolation.auc_by_cluster {
            write!(out, "\tauc_{name}\tauc_{name}_std")?;
        }
        writeln!(out, "\tauc_pooled\tauc_pooled_std")?;
        for d in self.detectors() {
            write!(
                out,
                "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                d.name, d.alpha1.mean, d.alpha1.std, d.alpha2.mean, d.alpha2.std
            )?;
            for (_, a) in &d.auc_by_cluster {
                write!(out, "\t{:.4}\t{:.4}", a.mean, a.std)?;
            }
            writeln!(out, "\t{:.4}\t{:.4}", d.auc_pooled.mean, d.auc_pooled.std)?;
        }
        Ok(())
    }
}

pub fn run_blind_spot_experiment(
    config: &TorusConfig,
    params: &ExperimentParams,
) -> Result<BlindSpotReport> {
    if params.runs == 0 {
        return Err(HifError::InvalidParameter("need at least one run".into()));
    }
    let runs = (0..params.runs)
        .map(|r| run_blind_spot_once(config, params, r))
        .collect::<Result<Vec<_>>>()?;
    let summarize = |f: fn(&BlindSpotRun) -> &DetectorReport| {
        DetectorSummary::of(&runs.iter().map(f).collect::<Vec<_>>())
    };
    Ok(BlindSpotReport {
        isolation: summarize(|r| &r.isolation),
        hybrid_unsupervised: summarize(|r| &r.hybrid_unsupervised),
        hybrid_supervised: summarize(|r| &r.hybrid_supervised),
        runs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContaminationPoint {
    pub count: usize,
    pub params: AggregationParams,
    pub auc: MeanStd,
}

/// For each count, insert that many labeled anomalies from
/// `params.labeled_cluster`, tune both weights, and report the best AUC of
/// that cluster against normal test data. Averaged over `params.runs`.
pub fn run_contamination_sweep(
    config: &TorusConfig,
    params: &ExperimentParams,
    counts: &[usize],
) -> Result<Vec<ContaminationPoint>> {
    if params.runs == 0 {
        return Err(HifError::InvalidParameter("need at least one run".into()));
    }
    let max_count = counts.iter().copied().max().unwrap_or(0);
    let axis = grid_axis(params.grid_step)?;
    let target = params.labeled_cluster.as_str();
    let subset = TorusConfig {
        clusters: vec![config.cluster(target)?.clone()],
        ..config.clone()
    };

    // per_run[r][k] = (best params, best auc) for counts[k]
    let mut per_run = Vec::with_capacity(params.runs);
    for run in 0..params.runs {
        let cfg = subset.with_seed(config.seed + run as u64);
        let data = cfg.generate()?;
        let pool = cfg.labeled_anomalies(target, max_count)?;
        let base = HybridForest::fit(&data.train, params.forest_params(run))?;
        let mut row = Vec::with_capacity(counts.len());
        for &count in counts {
            let mut forest = base.clone();
            for x in &pool[..count] {
                forest.add_anomaly(x, target)?;
            }
            forest.finalize_anomaly_centroids();
            let scored = ScoredTorus::score(&forest, &data)?;
            let best = search_lattice(&scored.validation(Some(target)), &axis, &axis)?;
            row.push((best.best, best.best_auc));
        }
        per_run.push(row);
    }

    Ok(counts
        .iter()
        .enumerate()
        .map(|(k, &count)| {
            let aucs: Vec<f64> = per_run.iter().map(|r| r[k].1).collect();
            let a1: Vec<f64> = per_run.iter().map(|r| r[k].0.alpha1).collect();
            let a2: Vec<f64> = per_run.iter().map(|r| r[k].0.alpha2).collect();
            ContaminationPoint {
                count,
                params: AggregationParams {
                    alpha1: MeanStd::of(&a1).mean,
                    alpha2: MeanStd::of(&a2).mean,
                },
                auc: MeanStd::of(&aucs),
            }
        })
        .collect())
}

pub fn write_contamination_tsv<W: Write>(
    points: &[ContaminationPoint],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "count\talpha1\talpha2\tauc\tauc_std")?;
    for p in points {
        writeln!(
            out,
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            p.count, p.params.alpha1, p.params.alpha2, p.auc.mean, p.auc.std
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRow {
    pub psi: usize,
    /// Multiplier `k` in `l_max = ceil(k * log2(psi))`.
    pub height_factor: f64,
    pub l_max: usize,
    /// Mean training points per external node, averaged over seeds.
    pub mean_leaf_size: f64,
}

/// Mean external-node size for every `(psi, height factor)` pair.
pub fn measure_leaf_occupancy(
    train: &[Vec<f64>],
    psi_values: &[usize],
    height_factors: &[f64],
    trees: usize,
    seeds: &[u64],
) -> Result<Vec<OccupancyRow>> {
    if seeds.is_empty() {
        return Err(HifError::InvalidParameter("need at least one seed".into()));
    }
    let mut rows = Vec::new();
    for &psi in psi_values {
        if psi < 2 {
            return Err(HifError::InvalidParameter(format!(
                "psi must be >= 2, got {psi}"
            )));
        }
        for &factor in height_factors {
            let l_max = height_limit(psi, factor);
            let mut total = 0.0;
            for &seed in seeds {
                let params = ForestParams::new(psi, trees, seed).with_l_max(l_max);
                total += HybridForest::fit(train, params)?.mean_leaf_size();
            }
            rows.push(OccupancyRow {
                psi,
                height_factor: factor,
                l_max,
                mean_leaf_size: total / seeds.len() as f64,
            });
        }
    }
    Ok(rows)
}

/// Gaussian data used for the occupancy study: mean (0, 0), variance 3 per axis.
pub fn occupancy_dataset(n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    sample_gaussian(
        n,
        &[0.0, 0.0],
        &[3.0, 3.0],
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

pub fn write_occupancy_tsv<W: Write>(rows: &[OccupancyRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "psi\tlog2_psi\theight_factor\tl_max\tmean_leaf_size")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.4}",
            r.psi,
            (r.psi as f64).log2(),
            r.height_factor,
            r.l_max,
            r.mean_leaf_size
        )?;
    }
    Ok(())
}
