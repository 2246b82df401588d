use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hif::flow::{self, Codebook};
use hif::forest::{height_limit, ForestParams, DEFAULT_HEIGHT_FACTOR};
use hif::io::{self, Dataset};
use hif::metrics::{roc_auc, score_histogram, LabeledScore};
use hif::scoring::{grid_axis, search_lattice, AggregationParams, DEFAULT_GRID_STEP};
use hif::synth::{self, ExperimentParams, TorusConfig};
use hif::ModelArtifact;

#[derive(Parser)]
#[command(
    name = "hif",
    version,
    about = "Hybrid isolation forest anomaly detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a forest on a training file and save the model.
    Fit(FitArgs),
    /// Insert labeled anomalies into a model.
    AddAnomalies(AddAnomaliesArgs),
    /// Score every row of a data file.
    Score(ScoreArgs),
    /// ROC curve, AUC and score histogram from a labeled score file.
    Eval(EvalArgs),
    /// Search the aggregation weights on a labeled file.
    Gridsearch(GridsearchArgs),
    /// Write the annulus benchmark datasets.
    Synth(SynthArgs),
    /// Turn a flow file into per-layer feature files.
    Flows(FlowsArgs),
    /// Run an annulus experiment and write a TSV report.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Training data (header-bearing CSV; a `label` column is ignored).
    train: PathBuf,
    #[arg(long, default_value_t = 256)]
    psi: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Height limit; defaults to ceil(1.1 * log2(psi)).
    #[arg(long)]
    lmax: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
    /// Do not store training rows in the model (add-anomalies then needs --train).
    #[arg(long)]
    no_embed_train: bool,
}

#[derive(Args)]
struct AddAnomaliesArgs {
    model: PathBuf,
    /// Anomalies, with an optional `label` column.
    anomalies: PathBuf,
    /// Training data used to refit the normalizer; defaults to the rows stored in the model.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Output model; defaults to overwriting the input.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    model: PathBuf,
    data: PathBuf,
    /// Weight of the path score against the centroid score; defaults to the model's.
    #[arg(long)]
    alpha1: Option<f64>,
    /// Weight of the unsupervised part against the anomaly-ratio score; defaults to the model's.
    #[arg(long)]
    alpha2: Option<f64>,
    /// Score file; stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Score file with a `label` column.
    scores: PathBuf,
    #[arg(long, default_value = "score")]
    column: String,
    /// Write the ROC curve as TSV.
    #[arg(long)]
    roc: Option<PathBuf>,
    /// Write a per-class score histogram as TSV.
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    bins: usize,
}

#[derive(Args)]
struct GridsearchArgs {
    model: PathBuf,
    /// Labeled validation data.
    data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
    grid_step: f64,
    /// Search alpha1 only, with alpha2 fixed at 1.
    #[arg(long)]
    unsupervised: bool,
    /// Write every evaluated point as TSV.
    #[arg(long)]
    lattice: Option<PathBuf>,
    /// Store the best weights in the model file.
    #[arg(long)]
    update: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(short, long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    /// Points per anomaly cluster.
    #[arg(long, default_value_t = 1000)]
    n_cluster: usize,
    /// Labeled anomalies written to `labeled_<cluster>.csv`.
    #[arg(long, default_value_t = 5)]
    labeled: usize,
    #[arg(long, default_value = "red")]
    labeled_cluster: String,
}

#[derive(Args)]
struct FlowsArgs {
    /// Flow file (CSV with the documented flow columns).
    input: PathBuf,
    #[arg(short, long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = flow::DEFAULT_WINDOW_SIZE)]
    window_size: usize,
    /// Abort on the first malformed line instead of skipping it.
    #[arg(long)]
    strict: bool,
    /// Directory of `<layer>.codebook.json` files to reuse instead of fitting new ones.
    #[arg(long)]
    codebooks: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    BlindSpot,
    Contamination,
    Occupancy,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    kind: Experiment,
    /// TSV report; stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 64)]
    psi: usize,
    #[arg(long, default_value_t = 512)]
    trees: usize,
    /// Defaults to ceil(1.1 * log2(psi)).
    #[arg(long)]
    lmax: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
    grid_step: f64,
    /// Labeled-anomaly counts for the contamination sweep.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,5,10")]
    counts: Vec<usize>,
    /// Sample sizes for the occupancy study.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "64,128,256,512,1024,2048,4096"
    )]
    psi_values: Vec<usize>,
    /// Height-limit multipliers for the occupancy study.
    #[arg(long, value_delimiter = ',', default_value = "1.0,1.1,1.2")]
    height_factors: Vec<f64>,
    /// Points in the occupancy dataset.
    #[arg(long, default_value_t = 10_000)]
    n_points: usize,
}

fn read_data(path: &Path) -> Result<Dataset> {
    let delimiter = match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("tab") => b'\t',
        _ => b',',
    };
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    io::read_dataset_delimited(BufReader::new(file), delimiter)
        .with_context(|| format!("cannot read {}", path.display()))
}

fn load_model(path: &Path) -> Result<ModelArtifact> {
    ModelArtifact::load(path).with_context(|| format!("cannot load model {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn check_dim(model: &ModelArtifact, data: &Dataset, path: &Path) -> Result<()> {
    if data.dim() != model.forest.dim() {
        bail!(
            "{} has {} feature columns but the model expects {}",
            path.display(),
            data.dim(),
            model.forest.dim()
        );
    }
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let data = read_data(&a.train)?;
    if data.is_empty() {
        bail!("{} has no data rows", a.train.display());
    }
    let l_max = a
        .lmax
        .unwrap_or_else(|| height_limit(a.psi, DEFAULT_HEIGHT_FACTOR));
    let params = ForestParams::new(a.psi, a.trees, a.seed).with_l_max(l_max);
    let model = ModelArtifact::fit(&data.rows, params, !a.no_embed_train)?;
    model.save(&a.out)?;
    println!(
        "built {} trees (psi {}, l_max {}, {} features) on {} rows; mean leaf size {:.4}",
        model.forest.trees().len(),
        model.forest.sample_size(),
        l_max,
        model.forest.dim(),
        data.len(),
        model.forest.mean_leaf_size()
    );
    Ok(())
}

fn add_anomalies(a: AddAnomaliesArgs) -> Result<()> {
    let mut model = load_model(&a.model)?;
    let anomalies = read_data(&a.anomalies)?;
    check_dim(&model, &anomalies, &a.anomalies)?;
    let labels = anomalies
        .labels
        .clone()
        .unwrap_or_else(|| vec!["anomaly".to_owned(); anomalies.len()]);
    let train = a.train.as_deref().map(read_data).transpose()?;
    if train.is_none() && model.reference.is_none() {
        bail!("the model stores no training rows; pass --train to refit the normalizer");
    }
    let inserted = model.add_anomalies(
        &anomalies.rows,
        &labels,
        train.as_ref().map(|t| t.rows.as_slice()),
    )?;
    model.save(a.out.as_ref().unwrap_or(&a.model))?;
    println!(
        "inserted {inserted} anomalies ({} stored in the model)",
        model.forest.anomaly_count()
    );
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = read_data(&a.data)?;
    check_dim(&model, &data, &a.data)?;
    let params = AggregationParams::new(
        a.alpha1.unwrap_or(model.aggregation.alpha1),
        a.alpha2.unwrap_or(model.aggregation.alpha2),
    )?;
    let rows = model.score_rows(&data.rows, params)?;
    let mut out = output(a.out.as_deref())?;
    io::write_scores(&rows, data.labels.as_deref(), &mut out)?;
    out.flush()?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let data = read_data(&a.scores)?;
    let col = data
        .columns
        .iter()
        .position(|c| c == &a.column)
        .with_context(|| format!("no column `{}` in {}", a.column, a.scores.display()))?;
    let flags = data
        .anomaly_flags()
        .with_context(|| format!("{} has no `label` column", a.scores.display()))?;
    let samples: Vec<LabeledScore> = data
        .rows
        .iter()
        .zip(flags)
        .map(|(r, anomaly)| LabeledScore::new(r[col], anomaly))
        .collect();
    let curve = roc_auc(&samples)?;
    if let Some(p) = &a.roc {
        curve.write_tsv(create(p)?)?;
    }
    if let Some(p) = &a.histogram {
        score_histogram(&samples, a.bins)?.write_tsv(create(p)?)?;
    }
    let positives = samples.iter().filter(|s| s.anomaly).count();
    println!(
        "{} rows ({positives} anomalous, {} normal)",
        samples.len(),
        samples.len() - positives
    );
    println!("AUC {:.4}", curve.auc);
    Ok(())
}

fn gridsearch(a: GridsearchArgs) -> Result<()> {
    let mut model = load_model(&a.model)?;
    let data = read_data(&a.data)?;
    check_dim(&model, &data, &a.data)?;
    let flags = data
        .anomaly_flags()
        .with_context(|| format!("{} has no `label` column", a.data.display()))?;
    let validation: Vec<_> = model
        .score_rows(&data.rows, model.aggregation)?
        .into_iter()
        .map(|r| r.normalized)
        .zip(flags)
        .collect();
    let axis = grid_axis(a.grid_step)?;
    let alpha2_axis = if a.unsupervised {
        vec![1.0]
    } else {
        axis.clone()
    };
    let result = search_lattice(&validation, &axis, &alpha2_axis)?;
    if let Some(p) = &a.lattice {
        result.write_tsv(create(p)?)?;
    }
    println!("{} evaluations", result.evaluations());
    println!(
        "best alpha1 {:.4} alpha2 {:.4} AUC {:.4}",
        result.best.alpha1, result.best.alpha2, result.best_auc
    );
    if a.update {
        model.aggregation = result.best;
        model.save(&a.model)?;
        println!("stored weights in {}", a.model.display());
    }
    Ok(())
}

fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = create(path)?;
    io::write_dataset(data, &mut w)?;
    w.flush()?;
    println!("{}: {} rows", path.display(), data.len());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut config = TorusConfig {
        n_train: a.n_train,
        n_test: a.n_test,
        seed: a.seed,
        ..TorusConfig::default()
    };
    for c in &mut config.clusters {
        c.n = a.n_cluster;
    }
    let data = config.generate()?;
    let labeled = config.labeled_anomalies(&a.labeled_cluster, a.labeled)?;
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let dir = &a.out_dir;

    write_csv(
        &dir.join("train.csv"),
        &Dataset::unlabeled(data.train.clone()),
    )?;
    write_csv(
        &dir.join("test_normal.csv"),
        &Dataset::labeled(data.test_normal.clone(), "normal"),
    )?;
    for (name, points) in &data.clusters {
        write_csv(
            &dir.join(format!("{name}.csv")),
            &Dataset::labeled(points.clone(), name),
        )?;
    }
    let mut pooled = Dataset::labeled(data.test_normal, "normal");
    for (name, points) in data.clusters {
        let labels = pooled.labels.as_mut().expect("labeled");
        labels.extend(std::iter::repeat_n(name, points.len()));
        pooled.rows.extend(points);
    }
    write_csv(&dir.join("test.csv"), &pooled)?;
    write_csv(
        &dir.join(format!("labeled_{}.csv", a.labeled_cluster)),
        &Dataset::labeled(labeled, &a.labeled_cluster),
    )?;
    Ok(())
}

/// File-name-safe form of an application-layer name.
fn file_stem(layer: &str) -> String {
    let s: String = layer
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "unnamed".into()
    } else {
        s
    }
}

fn flows(a: FlowsArgs) -> Result<()> {
    let file =
        File::open(&a.input).with_context(|| format!("cannot open {}", a.input.display()))?;
    let parsed = flow::parse_flows(BufReader::new(file), a.strict)
        .with_context(|| format!("cannot read {}", a.input.display()))?;
    for (line, message) in &parsed.skipped {
        eprintln!("skipped line {line}: {message}");
    }
    if parsed.records.is_empty() {
        bail!("{} contains no usable flows", a.input.display());
    }
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("cannot create {}", a.out_dir.display()))?;

    for (layer, records) in flow::split_by_app_layer(parsed.records) {
        let stem = file_stem(&layer);
        let codebook = match &a.codebooks {
            Some(dir) => {
                let path = dir.join(format!("{stem}.codebook.json"));
                let text = std::fs::read_to_string(&path).with_context(|| {
                    format!("no codebook for layer `{layer}` at {}", path.display())
                })?;
                let mut cb: Codebook = serde_json::from_str(&text)
                    .with_context(|| format!("malformed codebook {}", path.display()))?;
                cb.freeze();
                cb
            }
            None => {
                let mut cb = Codebook::new(a.window_size);
                cb.learn_categories(&records)?;
                cb.fit_minmax(&flow::encode_all(&records, &cb)?)?;
                cb.freeze();
                let path = a.out_dir.join(format!("{stem}.codebook.json"));
                std::fs::write(&path, serde_json::to_string_pretty(&cb)? + "\n")
                    .with_context(|| format!("cannot write {}", path.display()))?;
                cb
            }
        };
        let vectors = flow::encode_all(&records, &codebook)
            .with_context(|| format!("layer `{layer}`"))?
            .iter()
            .map(|v| codebook.apply_minmax(v))
            .collect::<hif::Result<Vec<_>>>()?;
        let labels: Vec<_> = records.iter().map(|r| r.label).collect();
        let path = a.out_dir.join(format!("{stem}.features.csv"));
        let mut w = create(&path)?;
        flow::write_features(&vectors, Some(&labels), &mut w)?;
        w.flush()?;
        println!("{layer}: {} flows -> {}", records.len(), path.display());
    }
    if !parsed.skipped.is_empty() {
        println!("{} malformed lines skipped", parsed.skipped.len());
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let config = TorusConfig::default().with_seed(a.seed);
    let params = ExperimentParams {
        psi: a.psi,
        trees: a.trees,
        l_max: a
            .lmax
            .unwrap_or_else(|| height_limit(a.psi, DEFAULT_HEIGHT_FACTOR)),
        grid_step: a.grid_step,
        runs: a.runs,
        forest_seed: a.seed.wrapping_add(1000),
        ..ExperimentParams::default()
    };
    let mut out = output(a.out.as_deref())?;
    match a.kind {
        Experiment::BlindSpot => {
            synth::run_blind_spot_experiment(&config, &params)?.write_tsv(&mut out)?
        }
        Experiment::Contamination => {
            let points = synth::run_contamination_sweep(&config, &params, &a.counts)?;
            synth::write_contamination_tsv(&points, &mut out)?
        }
        Experiment::Occupancy => {
            let train = synth::occupancy_dataset(a.n_points, a.seed)?;
            let seeds: Vec<u64> = (0..a.runs as u64).map(|r| params.forest_seed + r).collect();
            let rows = synth::measure_leaf_occupancy(
                &train,
                &a.psi_values,
                &a.height_factors,
                100,
                &seeds,
            )?;
            synth::write_occupancy_tsv(&rows, &mut out)?
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Fit(a) => fit(a),
        Command::AddAnomalies(a) => add_anomalies(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
        Command::Gridsearch(a) => gridsearch(a),
        Command::Synth(a) => synth(a),
        Command::Flows(a) => flows(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
