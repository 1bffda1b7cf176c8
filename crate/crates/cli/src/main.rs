//! `wce`: build corpora, compute word-class embeddings, assemble embedding
//! layers, train and evaluate classifiers, impute OOV WCEs and run seeded
//! experiment sweeps. Every command reads and writes plain files.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use wce_core::classifier::{Dataset, Model, ModelConfig};
use wce_core::corpus::{
    read_jsonl, split_by_manifest, validation_indices, write_jsonl, CorpusConfig, LabelMode, LabeledCorpus,
    SplitManifest,
};
use wce_core::embeddings::{load_pretrained, EmbeddingConfig, EmbeddingMatrix, Variant, VariantSpec};
use wce_core::eval::evaluate;
use wce_core::experiment::{
    corpus_embeddings, corpus_terms, corpus_wce, export_projector, run_experiment, ExperimentConfig, PROJECTOR_BUDGET,
};
use wce_core::oov::{impute_oov, train_from_embeddings, Regressor, RegressorConfig};
use wce_core::synthetic::{generate, write_pretrained_text, SyntheticConfig};
use wce_core::wce::{Measure, WceConfig, WordClassMatrix};

#[derive(Parser)]
#[command(name = "wce", version, about = "Word-class embeddings for text classification")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize JSON-lines documents and fix vocabulary, labels and validation split.
    BuildCorpus(BuildCorpusArgs),
    /// Compute word-class embeddings from a corpus' training split.
    Compute(ComputeArgs),
    /// Assemble the embedding layer for one variant.
    BuildEmbeddings(BuildEmbeddingsArgs),
    /// Train a classifier with early stopping on the validation split.
    Train(TrainArgs),
    /// Score a trained classifier on the test split.
    Evaluate(EvaluateArgs),
    /// Fit the pretrained-to-WCE regressor on in-vocabulary terms.
    OovTrain(OovTrainArgs),
    /// Fill the WCE span of out-of-vocabulary rows with regressor predictions.
    OovImpute(OovImputeArgs),
    /// List out-of-vocabulary terms with the highest predicted class correlations.
    OovInspect(OovInspectArgs),
    /// Write vectors.tsv and metadata.tsv for an embedding projector.
    ExportProjector(ExportProjectorArgs),
    /// Run a seeded variant sweep described by a TOML file.
    RunExperiment(RunExperimentArgs),
    /// Write a synthetic corpus and matching pretrained vectors.
    GenerateSynthetic(GenerateSyntheticArgs),
}

#[derive(Args)]
struct BuildCorpusArgs {
    /// Training documents, or all documents when --manifest is given.
    #[arg(long)]
    train: PathBuf,
    /// Test documents.
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    test: Option<PathBuf>,
    /// JSON file {"train": [ids], "test": [ids]} splitting --train.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    min_df: usize,
    /// single-label or multilabel (default: inferred from the labels).
    #[arg(long)]
    mode: Option<LabelMode>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ComputeArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// dot, ppmi, ig or chi2.
    #[arg(long, default_value = "dot")]
    measure: Measure,
    #[arg(long, default_value_t = 300)]
    max_dims: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write a text export: term followed by its values.
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Args)]
struct VariantArgs {
    /// random, pretrained, pretrained+random or pretrained+wce (a -static or
    /// -trainable suffix may replace the flags below).
    #[arg(long)]
    variant: String,
    /// Freeze the embedding layer.
    #[arg(long = "static", conflicts_with = "trainable")]
    frozen: bool,
    /// Fine-tune the embedding layer.
    #[arg(long)]
    trainable: bool,
}

impl VariantArgs {
    fn resolve(&self) -> Result<VariantSpec> {
        let flag = match (self.frozen, self.trainable) {
            (true, _) => Some(false),
            (_, true) => Some(true),
            _ => None,
        };
        if let Ok(spec) = self.variant.parse::<VariantSpec>() {
            if let Some(t) = flag {
                if t != spec.trainable {
                    bail!("--variant {} contradicts the trainability flag", self.variant);
                }
            }
            return Ok(spec);
        }
        let variant: Variant = self.variant.parse()?;
        match flag {
            Some(t) => Ok(VariantSpec::new(variant, t)?),
            None => bail!("variant {} needs --static or --trainable", self.variant),
        }
    }
}

#[derive(Args)]
struct BuildEmbeddingsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    variant: VariantArgs,
    /// Pretrained vectors, whitespace-separated text.
    #[arg(long)]
    pretrained: Option<PathBuf>,
    /// WCE artifact from `compute` (also fixes the random span width of pretrained+random).
    #[arg(long)]
    wce: Option<PathBuf>,
    /// Width of the random variant.
    #[arg(long, default_value_t = 300)]
    random_dim: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write the whole matrix as text.
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Override the trainability stored with the embeddings.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long = "static", conflicts_with = "trainable", requires = "variant")]
    frozen: bool,
    #[arg(long, requires = "variant")]
    trainable: bool,
    /// Supervised dropout probability on the WCE span.
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 100)]
    batch_size: usize,
    #[arg(long, default_value_t = 500)]
    max_len: usize,
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Cap on batches per epoch.
    #[arg(long)]
    epoch_batches: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Training log, one JSON object per epoch (default: <out>.log.jsonl).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OovTrainArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 500)]
    max_epochs: usize,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OovImputeArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    regressor: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OovInspectArgs {
    #[arg(long)]
    regressor: PathBuf,
    /// Pretrained vectors, whitespace-separated text.
    #[arg(long)]
    embeddings: PathBuf,
    /// Corpus whose vocabulary defines in-vocabulary terms (default: none).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Terms listed per class.
    #[arg(long, default_value_t = 20)]
    top: usize,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportProjectorArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    wce: PathBuf,
    #[arg(long, default_value_t = PROJECTOR_BUDGET)]
    budget: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunExperimentArgs {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateSyntheticArgs {
    /// TOML file with generator settings; unset keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for train.jsonl, test.jsonl, pretrained.txt and terms.json.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::BuildCorpus(a) => build_corpus(a, seed),
        Command::Compute(a) => compute(a),
        Command::BuildEmbeddings(a) => build_embeddings(a, seed),
        Command::Train(a) => train(a, seed),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::OovTrain(a) => oov_train(a, seed),
        Command::OovImpute(a) => oov_impute(a),
        Command::OovInspect(a) => oov_inspect(a),
        Command::ExportProjector(a) => export(a),
        Command::RunExperiment(a) => experiment(a, cli.seed),
        Command::GenerateSynthetic(a) => synthetic(a, cli.seed),
    }
}

fn load_corpus(dir: &Path) -> Result<LabeledCorpus> {
    LabeledCorpus::load(dir).with_context(|| format!("loading corpus {}", dir.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn build_corpus(a: BuildCorpusArgs, seed: u64) -> Result<()> {
    let (train, test) = match (&a.test, &a.manifest) {
        (Some(test), _) => (read_jsonl(&a.train)?, read_jsonl(test)?),
        (None, Some(manifest)) => {
            let text = fs::read_to_string(manifest).with_context(|| format!("reading {}", manifest.display()))?;
            let m: SplitManifest = serde_json::from_str(&text).context("invalid split manifest")?;
            split_by_manifest(read_jsonl(&a.train)?, &m)?
        }
        (None, None) => unreachable!("clap requires one"),
    };
    let corpus = LabeledCorpus::build(
        &train,
        &test,
        &CorpusConfig {
            min_df: a.min_df,
            seed,
            mode: a.mode,
        },
    )?;
    corpus.save(&a.out)?;
    info!(
        "{} training and {} test documents, {} terms, {} classes",
        corpus.train.len(),
        corpus.test.len(),
        corpus.vocabulary.len(),
        corpus.n_classes()
    );
    Ok(())
}

fn compute(a: ComputeArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let s = corpus_wce(
        &corpus,
        &WceConfig {
            measure: a.measure,
            max_dims: a.max_dims,
        },
    )?;
    info!(
        "{} × {} WCE matrix ({} measure{}) in {:?}",
        s.n_terms(),
        s.dims(),
        a.measure,
        if s.reduced { ", PCA-reduced" } else { "" },
        s.timings.correlate + s.timings.standardize + s.timings.project
    );
    s.save(&a.out, corpus.vocabulary.terms(), corpus.labels.names())?;
    if let Some(text) = &a.text {
        let mut w = create(text)?;
        s.write_text(&mut w, corpus.vocabulary.terms())?;
        w.flush()?;
    }
    Ok(())
}

fn load_wce(path: &Path, corpus: &LabeledCorpus) -> Result<WordClassMatrix> {
    let (s, terms, _) = WordClassMatrix::load(path).with_context(|| format!("loading WCEs {}", path.display()))?;
    if terms != corpus.vocabulary.terms() {
        bail!("WCEs in {} were computed for another vocabulary", path.display());
    }
    Ok(s)
}

fn build_embeddings(a: BuildEmbeddingsArgs, seed: u64) -> Result<()> {
    let spec = a.variant.resolve()?;
    let corpus = load_corpus(&a.corpus)?;
    let pretrained = if spec.needs_pretrained() {
        let Some(path) = &a.pretrained else {
            bail!("variant {spec} needs --pretrained");
        };
        let terms = corpus_terms(&corpus);
        Some(load_pretrained(path, |t| terms.contains(t)).with_context(|| format!("loading {}", path.display()))?)
    } else {
        None
    };
    let wce = match (&a.wce, spec.needs_wce()) {
        (Some(path), _) => Some(load_wce(path, &corpus)?),
        (None, true) => bail!("variant {spec} needs --wce"),
        (None, false) => None,
    };
    let cfg = EmbeddingConfig {
        variant: spec,
        random_dim: a.random_dim,
        seed,
    };
    let e = corpus_embeddings(&corpus, pretrained.as_ref(), wce.as_ref(), &cfg)?;
    info!(
        "{} rows × {} columns ({} + {})",
        e.rows(),
        e.dim(),
        e.first_dim(),
        e.second_dim()
    );
    e.save(&a.out)?;
    if let Some(text) = &a.text {
        let mut w = create(text)?;
        e.write_text(&mut w, 0..e.dim())?;
        w.flush()?;
    }
    Ok(())
}

fn train(a: TrainArgs, seed: u64) -> Result<()> {
    let mut corpus = load_corpus(&a.corpus)?;
    let mut e = EmbeddingMatrix::load(&a.embeddings).with_context(|| format!("loading {}", a.embeddings.display()))?;
    if let Some(variant) = &a.variant {
        let spec = VariantArgs {
            variant: variant.clone(),
            frozen: a.frozen,
            trainable: a.trainable,
        }
        .resolve()?;
        e = e.with_variant(spec)?;
    }
    if e.n_vocab() != corpus.vocabulary.len() || e.terms()[..e.n_vocab()] != *corpus.vocabulary.terms() {
        bail!(
            "embeddings in {} were built for another vocabulary",
            a.embeddings.display()
        );
    }
    corpus.validation = validation_indices(corpus.train.len(), seed);
    let cfg = ModelConfig {
        mode: corpus.mode(),
        dropout: a.dropout,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        max_len: a.max_len,
        max_epochs: a.max_epochs,
        patience: a.patience,
        epoch_batches: a.epoch_batches,
        seed,
    };
    let (model, log) = wce_core::classifier::train(&corpus, e, &cfg)?;
    info!("best epoch {} of {}", log.best_epoch, log.epochs.len());
    model.save(&a.out)?;
    let log_path = a.log.unwrap_or_else(|| a.out.with_extension("log.jsonl"));
    let mut w = create(&log_path)?;
    log.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let model = Model::load(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let corpus = load_corpus(&a.corpus)?;
    if corpus.labels.names() != model.classes.as_slice() {
        bail!("model {} was trained on another codeframe", a.model.display());
    }
    let test = Dataset::from_documents(&corpus.test, &model.embeddings, &corpus.labels)?;
    let result = evaluate(&test.labels, &model.predict(&test.sequences), &model.classes)?;
    info!("macro-F1 {:.4}, micro-F1 {:.4}", result.macro_f1, result.micro_f1);
    write_json(&a.out, &result)
}

fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::load(path).with_context(|| format!("loading embeddings {}", path.display()))
}

fn oov_train(a: OovTrainArgs, seed: u64) -> Result<()> {
    let e = load_embeddings(&a.embeddings)?;
    let cfg = RegressorConfig {
        hidden: a.hidden,
        dropout: a.dropout,
        max_epochs: a.max_epochs,
        patience: a.patience,
        seed,
        ..Default::default()
    };
    let (reg, report) = train_from_embeddings(&e, &cfg)?;
    info!(
        "{} training terms, best epoch {}, validation MSE {:.6}",
        report.n_train, report.best_epoch, report.validation_mse
    );
    reg.save(&a.out)?;
    Ok(())
}

fn oov_impute(a: OovImputeArgs) -> Result<()> {
    let e = load_embeddings(&a.embeddings)?;
    let reg = Regressor::load(&a.regressor).with_context(|| format!("loading regressor {}", a.regressor.display()))?;
    let imputed = impute_oov(&e, &reg)?;
    let n = (0..imputed.rows()).filter(|&i| imputed.wce_imputed(i)).count();
    info!("imputed WCEs for {n} out-of-vocabulary rows");
    imputed.save(&a.out)?;
    Ok(())
}

fn oov_inspect(a: OovInspectArgs) -> Result<()> {
    let reg = Regressor::load(&a.regressor).with_context(|| format!("loading regressor {}", a.regressor.display()))?;
    let known: BTreeSet<String> = match &a.corpus {
        Some(dir) => load_corpus(dir)?.vocabulary.terms().iter().cloned().collect(),
        None => BTreeSet::new(),
    };
    let u = load_pretrained(&a.embeddings, |t| !known.contains(t))
        .with_context(|| format!("loading {}", a.embeddings.display()))?;
    if u.dim() != reg.input_dim() {
        bail!(
            "regressor expects {}-dimensional vectors, {} has {}",
            reg.input_dim(),
            a.embeddings.display(),
            u.dim()
        );
    }
    let terms: Vec<&String> = u.terms().iter().collect();
    let inputs = ndarray::Array2::from_shape_fn((terms.len(), u.dim()), |(i, j)| u.get(terms[i]).expect("listed")[j]);
    let pred = reg.predict_batch(&inputs)?;
    let names: Vec<String> = if reg.classes.len() == reg.output_dim() {
        reg.classes.clone()
    } else {
        (0..reg.output_dim()).map(|k| format!("dim{k}")).collect()
    };
    let mut w: Box<dyn Write> = match &a.out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    writeln!(w, "class\trank\tterm\tpredicted")?;
    for (c, name) in names.iter().enumerate() {
        let mut order: Vec<usize> = (0..terms.len()).collect();
        order.sort_by(|&x, &y| pred[[y, c]].total_cmp(&pred[[x, c]]).then(terms[x].cmp(terms[y])));
        for (rank, &i) in order.iter().take(a.top).enumerate() {
            writeln!(w, "{name}\t{}\t{}\t{:.6}", rank + 1, terms[i], pred[[i, c]])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn export(a: ExportProjectorArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let e = load_embeddings(&a.embeddings)?;
    let s = load_wce(&a.wce, &corpus)?;
    let picked = export_projector(&e, &corpus, &s, a.budget, &a.out)?;
    info!("exported {} terms", picked.len());
    Ok(())
}

fn experiment(a: RunExperimentArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(out) = a.out {
        cfg.out_dir = out;
    }
    if let Some(seed) = seed {
        log::warn!("--seed {seed} ignored; run-experiment uses the configured seeds");
    }
    let results = run_experiment(&cfg)?;
    for agg in &results.aggregates {
        println!(
            "{:<26} macro-F1 {:.4} ± {:.4}  micro-F1 {:.4} ± {:.4}",
            agg.variant.to_string(),
            agg.macro_f1_mean,
            agg.macro_f1_std,
            agg.micro_f1_mean,
            agg.micro_f1_std
        );
    }
    for c in &results.comparisons {
        println!("{} vs {}: t = {:.3}, p = {:.4}", c.variant, c.baseline, c.t, c.p_value);
    }
    Ok(())
}

fn synthetic(a: GenerateSyntheticArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg: SyntheticConfig = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid generator settings in {}", path.display()))?
        }
        None => SyntheticConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let corpus = generate(&cfg)?;
    fs::create_dir_all(&a.out)?;
    write_jsonl(&a.out.join("train.jsonl"), &corpus.train)?;
    write_jsonl(&a.out.join("test.jsonl"), &corpus.test)?;
    let mut w = create(&a.out.join("pretrained.txt"))?;
    write_pretrained_text(&corpus.pretrained, &mut w)?;
    w.flush()?;
    write_json(
        &a.out.join("terms.json"),
        &serde_json::json!({
            "held_out": corpus.held_out_terms,
            "spurious": corpus.spurious_terms,
        }),
    )
}
