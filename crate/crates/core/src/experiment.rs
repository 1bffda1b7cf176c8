//! End-to-end pipeline helpers, seeded variant sweeps, and the projector
//! export.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{train_on, Dataset, Model, ModelConfig, TrainingLog};
use crate::corpus::{read_jsonl, validation_indices, CorpusConfig, LabelMode, LabeledCorpus};
use crate::embeddings::{
    build_embedding_matrix, load_pretrained, EmbeddingConfig, EmbeddingMatrix, PretrainedEmbeddings, Variant,
    VariantSpec,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, mean_std, paired_ttest, Evaluation};
use crate::oov::{impute_oov, train_from_embeddings, RegressorConfig};
use crate::wce::{compute_wce, correlate_ig, Measure, WceConfig, WordClassMatrix};
use crate::weighting::{binarize, tfidf};

/// WCEs from the tfidf-weighted training split.
pub fn corpus_wce(corpus: &LabeledCorpus, cfg: &WceConfig) -> Result<WordClassMatrix> {
    let enc = corpus.encode_train()?;
    compute_wce(&tfidf(&enc.counts), &enc.labels, cfg)
}

/// Embedding layer over the corpus vocabulary plus every out-of-vocabulary
/// corpus term with a pretrained vector.
pub fn corpus_embeddings(
    corpus: &LabeledCorpus,
    pretrained: Option<&PretrainedEmbeddings>,
    wce: Option<&WordClassMatrix>,
    cfg: &EmbeddingConfig,
) -> Result<EmbeddingMatrix> {
    build_embedding_matrix(
        &corpus.vocabulary,
        &corpus.out_of_vocabulary_terms(),
        pretrained,
        wce.map(|s| (s, corpus.labels.names())),
        cfg,
    )
}

/// Terms the pretrained loader should keep for `corpus`.
pub fn corpus_terms(corpus: &LabeledCorpus) -> BTreeSet<String> {
    corpus
        .train
        .iter()
        .chain(&corpus.test)
        .flat_map(|d| d.tokens.iter().cloned())
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: Model,
    pub log: TrainingLog,
    pub test: Evaluation,
    /// Scores on the training documents outside the validation sample.
    pub train: Evaluation,
}

impl RunOutcome {
    /// Best validation macro-F1 reached during training.
    pub fn best_validation_macro_f1(&self) -> f64 {
        self.log
            .epochs
            .iter()
            .find(|r| r.epoch == self.log.best_epoch)
            .map_or(0.0, |r| r.va_macro_f1)
    }
}

pub fn evaluate_model(model: &Model, data: &Dataset) -> Result<Evaluation> {
    evaluate(&data.labels, &model.predict(&data.sequences), &model.classes)
}

/// Trains on the corpus' fit split with early stopping on its validation
/// sample, then scores the test and fit splits.
pub fn train_and_evaluate(corpus: &LabeledCorpus, e: EmbeddingMatrix, cfg: &ModelConfig) -> Result<RunOutcome> {
    let mut cfg = *cfg;
    cfg.mode = corpus.mode();
    let all = Dataset::from_documents(&corpus.train, &e, &corpus.labels)?;
    let fit = all.select(&corpus.fit_indices());
    let valid = all.select(&corpus.validation);
    let test = Dataset::from_documents(&corpus.test, &e, &corpus.labels)?;
    let (model, log) = train_on(&fit, &valid, e, corpus.labels.names().to_vec(), &cfg)?;
    Ok(RunOutcome {
        test: evaluate_model(&model, &test)?,
        train: evaluate_model(&model, &fit)?,
        model,
        log,
    })
}

/// Training hyperparameters shared by every run of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_len: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub epoch_batches: Option<usize>,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        let d = ModelConfig::default();
        Self {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            max_len: d.max_len,
            max_epochs: d.max_epochs,
            patience: d.patience,
            epoch_batches: d.epoch_batches,
        }
    }
}

impl TrainingOptions {
    pub fn model_config(&self, mode: LabelMode, dropout: f64, seed: u64) -> ModelConfig {
        ModelConfig {
            mode,
            dropout,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_len: self.max_len,
            max_epochs: self.max_epochs,
            patience: self.patience,
            epoch_batches: self.epoch_batches,
            seed,
        }
    }
}

fn default_measure() -> Measure {
    Measure::Dot
}
fn default_dropout() -> f64 {
    0.5
}
fn default_min_df() -> usize {
    5
}
fn default_max_dims() -> usize {
    300
}
fn default_random_dims() -> Vec<usize> {
    vec![50, 200, 300]
}

/// Experiment description, read from TOML. Relative paths resolve against
/// the configuration file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Corpus directory written by `build-corpus`; alternative to
    /// `train` + `test`.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub pretrained: Option<PathBuf>,
    #[serde(default = "default_min_df")]
    pub min_df: usize,
    #[serde(default)]
    pub mode: Option<LabelMode>,
    pub variants: Vec<VariantSpec>,
    #[serde(default)]
    pub baseline: Option<VariantSpec>,
    #[serde(default = "default_measure")]
    pub measure: Measure,
    #[serde(default = "default_max_dims")]
    pub max_dims: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_random_dims")]
    pub random_dims: Vec<usize>,
    #[serde(default)]
    pub impute_oov: bool,
    #[serde(default)]
    pub training: TrainingOptions,
    #[serde(default)]
    pub regressor: RegressorConfig,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.corpus, &mut cfg.train, &mut cfg.test, &mut cfg.pretrained]
            .into_iter()
            .flatten()
        {
            resolve(p);
        }
        resolve(&mut cfg.out_dir);
        Ok(cfg)
    }

    /// Checks the sweep description and that every input file exists.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("variants must be non-empty".into()));
        }
        if let Some(b) = self.baseline {
            if !self.variants.contains(&b) {
                return Err(Error::Config(format!("baseline {b} is not among the variants")));
            }
        }
        if self.random_dims.is_empty() || self.random_dims.contains(&0) {
            return Err(Error::Config("random_dims must hold positive widths".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout probability {} is outside [0, 1)",
                self.dropout
            )));
        }
        match (&self.corpus, &self.train, &self.test) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => {}
            _ => return Err(Error::Config("give either corpus, or both train and test".into())),
        }
        if self.variants.iter().any(VariantSpec::needs_pretrained) && self.pretrained.is_none() {
            return Err(Error::Config(
                "a pretrained variant is listed but no pretrained file is given".into(),
            ));
        }
        for p in [&self.corpus, &self.train, &self.test, &self.pretrained]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("input {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: VariantSpec,
    pub seed: u64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub train_macro_f1: f64,
    pub train_micro_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub variant: VariantSpec,
    pub runs: usize,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
    pub micro_f1_mean: f64,
    pub micro_f1_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub variant: VariantSpec,
    pub baseline: VariantSpec,
    pub metric: String,
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
    pub significant_05: bool,
    pub significant_005: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
    pub comparisons: Vec<Comparison>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub logs: Vec<(VariantSpec, u64, TrainingLog)>,
}

impl ExperimentResults {
    pub fn aggregate(&self, variant: VariantSpec) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.variant == variant)
    }

    pub fn scores(&self, variant: VariantSpec) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| r.macro_f1)
            .collect()
    }
}

fn run_one(
    corpus: &LabeledCorpus,
    pretrained: Option<&PretrainedEmbeddings>,
    wce: &WordClassMatrix,
    variant: VariantSpec,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<(RunOutcome, Option<usize>)> {
    let model_cfg = cfg.training.model_config(corpus.mode(), cfg.dropout, seed);
    let build = |random_dim: usize| {
        let emb_cfg = EmbeddingConfig {
            variant,
            random_dim,
            seed,
        };
        corpus_embeddings(corpus, pretrained, Some(wce), &emb_cfg)
    };
    if variant.variant == Variant::Random {
        let mut best: Option<(RunOutcome, usize)> = None;
        for &dim in &cfg.random_dims {
            let outcome = train_and_evaluate(corpus, build(dim)?, &model_cfg)?;
            let better = best
                .as_ref()
                .is_none_or(|(b, _)| outcome.best_validation_macro_f1() > b.best_validation_macro_f1());
            if better {
                best = Some((outcome, dim));
            }
        }
        let (outcome, dim) = best.expect("random_dims is non-empty");
        return Ok((outcome, Some(dim)));
    }
    let mut e = build(0)?;
    if cfg.impute_oov && variant.variant == Variant::PretrainedWce {
        let reg_cfg = RegressorConfig { seed, ..cfg.regressor };
        let (reg, _) = train_from_embeddings(&e, &reg_cfg)?;
        e = impute_oov(&e, &reg)?;
    }
    Ok((train_and_evaluate(corpus, e, &model_cfg)?, None))
}

/// Runs every variant for every seed on an already-built corpus.
pub fn run_sweep(
    corpus: &LabeledCorpus,
    pretrained: Option<&PretrainedEmbeddings>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentResults> {
    if cfg.seeds.is_empty() || cfg.variants.is_empty() {
        return Err(Error::Config("seeds and variants must be non-empty".into()));
    }
    let wce = corpus_wce(
        corpus,
        &WceConfig {
            measure: cfg.measure,
            max_dims: cfg.max_dims,
        },
    )?;
    let mut corpus = corpus.clone();
    let mut runs = Vec::new();
    let mut logs = Vec::new();
    for &seed in &cfg.seeds {
        corpus.validation = validation_indices(corpus.train.len(), seed);
        corpus.seed = seed;
        for &variant in &cfg.variants {
            let (outcome, random_dim) = run_one(&corpus, pretrained, &wce, variant, seed, cfg)?;
            log::info!(
                "{variant} seed {seed}: macro-F1 {:.4}, micro-F1 {:.4}",
                outcome.test.macro_f1,
                outcome.test.micro_f1
            );
            runs.push(RunRecord {
                variant,
                seed,
                macro_f1: outcome.test.macro_f1,
                micro_f1: outcome.test.micro_f1,
                train_macro_f1: outcome.train.macro_f1,
                train_micro_f1: outcome.train.micro_f1,
                best_epoch: outcome.log.best_epoch,
                epochs_run: outcome.log.epochs.len(),
                random_dim,
            });
            logs.push((variant, seed, outcome.log));
        }
    }

    let mut warnings = Vec::new();
    let aggregates: Vec<Aggregate> = cfg
        .variants
        .iter()
        .map(|&variant| {
            let (ma, mi): (Vec<f64>, Vec<f64>) = runs
                .iter()
                .filter(|r| r.variant == variant)
                .map(|r| (r.macro_f1, r.micro_f1))
                .unzip();
            let (macro_f1_mean, macro_f1_std) = mean_std(&ma);
            let (micro_f1_mean, micro_f1_std) = mean_std(&mi);
            Aggregate {
                variant,
                runs: ma.len(),
                macro_f1_mean,
                macro_f1_std,
                micro_f1_mean,
                micro_f1_std,
            }
        })
        .collect();

    let mut comparisons = Vec::new();
    if let Some(baseline) = cfg.baseline {
        if cfg.seeds.len() < 2 {
            let msg = "a single seed was run; significance tests skipped".to_string();
            log::warn!("{msg}");
            warnings.push(msg);
        } else {
            let base: Vec<f64> = runs
                .iter()
                .filter(|r| r.variant == baseline)
                .map(|r| r.macro_f1)
                .collect();
            for &variant in cfg.variants.iter().filter(|&&v| v != baseline) {
                let scores: Vec<f64> = runs
                    .iter()
                    .filter(|r| r.variant == variant)
                    .map(|r| r.macro_f1)
                    .collect();
                let t = paired_ttest(&scores, &base)?;
                comparisons.push(Comparison {
                    variant,
                    baseline,
                    metric: "macro_f1".into(),
                    t: t.t,
                    df: t.df,
                    p_value: t.p_value,
                    significant_05: t.significant_05,
                    significant_005: t.significant_005,
                });
            }
        }
    }
    Ok(ExperimentResults {
        runs,
        aggregates,
        comparisons,
        warnings,
        logs,
    })
}

/// Loads the configured inputs, runs the sweep and writes `results.json`,
/// `summary.csv` and one `logs/<variant>_seed<k>.jsonl` per run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let corpus = match (&cfg.corpus, &cfg.train, &cfg.test) {
        (Some(dir), _, _) => LabeledCorpus::load(dir)?,
        (None, Some(train), Some(test)) => LabeledCorpus::build(
            &read_jsonl(train)?,
            &read_jsonl(test)?,
            &CorpusConfig {
                min_df: cfg.min_df,
                seed: cfg.seeds[0],
                mode: cfg.mode,
            },
        )?,
        _ => unreachable!("validated"),
    };
    let pretrained = match &cfg.pretrained {
        Some(path) if cfg.variants.iter().any(VariantSpec::needs_pretrained) => {
            let terms = corpus_terms(&corpus);
            Some(load_pretrained(path, |t| terms.contains(t))?)
        }
        _ => None,
    };
    let results = run_sweep(&corpus, pretrained.as_ref(), cfg)?;
    write_results(&results, &cfg.out_dir)?;
    Ok(results)
}

pub fn write_results(results: &ExperimentResults, out_dir: &Path) -> Result<()> {
    let logs_dir = out_dir.join("logs");
    fs::create_dir_all(&logs_dir)?;
    let mut f = BufWriter::new(File::create(out_dir.join("results.json"))?);
    serde_json::to_writer_pretty(&mut f, results)?;
    f.write_all(b"\n")?;
    f.flush()?;

    let mut csv = BufWriter::new(File::create(out_dir.join("summary.csv"))?);
    writeln!(
        csv,
        "variant,runs,macro_f1_mean,macro_f1_std,micro_f1_mean,micro_f1_std,p_value_vs_baseline"
    )?;
    for a in &results.aggregates {
        let p = results
            .comparisons
            .iter()
            .find(|c| c.variant == a.variant)
            .map_or(String::new(), |c| format!("{:.6}", c.p_value));
        writeln!(
            csv,
            "{},{},{:.6},{:.6},{:.6},{:.6},{}",
            a.variant, a.runs, a.macro_f1_mean, a.macro_f1_std, a.micro_f1_mean, a.micro_f1_std, p
        )?;
    }
    csv.flush()?;

    for (variant, seed, log) in &results.logs {
        let f = File::create(logs_dir.join(format!("{variant}_seed{seed}.jsonl")))?;
        let mut w = BufWriter::new(f);
        log.write_jsonl(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Default number of terms in a projector export.
pub const PROJECTOR_BUDGET: usize = 5000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectorTerm {
    pub term: String,
    pub selected_class: usize,
}

/// Picks `budget / m` terms per class in round-robin order: each round
/// visits the classes in index order and gives each its highest-IG term
/// not yet taken. `ig` is `v × m`.
pub fn round_robin_selection(ig: &ndarray::Array2<f64>, budget: usize) -> Result<Vec<(usize, usize)>> {
    let (v, m) = ig.dim();
    if budget < m {
        return Err(Error::Config(format!(
            "projector budget {budget} is smaller than the {m} classes"
        )));
    }
    let per_class = budget / m;
    let rankings: Vec<Vec<usize>> = (0..m)
        .map(|c| {
            let mut ids: Vec<usize> = (0..v).collect();
            ids.sort_by(|&a, &b| ig[[b, c]].total_cmp(&ig[[a, c]]).then(a.cmp(&b)));
            ids
        })
        .collect();
    let mut cursor = vec![0usize; m];
    let mut taken = vec![false; v];
    let mut out = Vec::with_capacity(per_class * m);
    for _ in 0..per_class {
        for c in 0..m {
            while cursor[c] < v && taken[rankings[c][cursor[c]]] {
                cursor[c] += 1;
            }
            if cursor[c] < v {
                let t = rankings[c][cursor[c]];
                taken[t] = true;
                out.push((t, c));
            }
        }
    }
    Ok(out)
}

/// Writes `vectors.tsv` (rows of `e`) and `metadata.tsv` for the
/// round-robin information-gain selection over the training split.
pub fn export_projector(
    e: &EmbeddingMatrix,
    corpus: &LabeledCorpus,
    wce: &WordClassMatrix,
    budget: usize,
    out_dir: &Path,
) -> Result<Vec<ProjectorTerm>> {
    let enc = corpus.encode_train()?;
    let ig = correlate_ig(&binarize(&enc.counts), &enc.labels)?;
    let selection = round_robin_selection(&ig, budget)?;
    let classes = corpus.labels.names();
    fs::create_dir_all(out_dir)?;
    let mut vectors = BufWriter::new(File::create(out_dir.join("vectors.tsv"))?);
    let mut meta = BufWriter::new(File::create(out_dir.join("metadata.tsv"))?);
    writeln!(meta, "term\tselected_class\ttop_wce_class")?;
    let mut out = Vec::with_capacity(selection.len());
    for (term_id, class) in selection {
        let term = corpus.vocabulary.term(term_id);
        let row = e
            .get(term)
            .ok_or_else(|| Error::Data(format!("term '{term}' has no embedding row")))?;
        let values: Vec<String> = e.matrix().row(row).iter().map(|x| format!("{x:.6}")).collect();
        writeln!(vectors, "{}", values.join("\t"))?;
        let top = if wce.reduced {
            "-"
        } else {
            classes[wce.top_class(term_id)].as_str()
        };
        writeln!(meta, "{term}\t{}\t{top}", classes[class])?;
        out.push(ProjectorTerm {
            term: term.to_string(),
            selected_class: class,
        });
    }
    vectors.flush()?;
    meta.flush()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::synthetic::{generate, SyntheticConfig};
    use ndarray::{array, Array2};

    fn doc(id: &str, text: &str, label: &str) -> Document {
        Document {
            id: id.into(),
            text: text.into(),
            labels: vec![label.into()],
        }
    }

    #[test]
    fn round_robin_examples() {
        let ig = array![[0.9, 0.8], [0.5, 0.1], [0.4, 0.7], [0.1, 0.6]];
        // class 0 takes term 0 first, so class 1 falls back to term 2
        assert_eq!(
            round_robin_selection(&ig, 4).unwrap(),
            vec![(0, 0), (2, 1), (1, 0), (3, 1)]
        );
        assert_eq!(round_robin_selection(&ig, 5).unwrap().len(), 4);
        assert!(round_robin_selection(&ig, 1).is_err());
    }

    /// Information gain from class and term entropies, in nats.
    fn entropy_ig(docs: &[(BTreeSet<&str>, &str)], term: &str, class: &str) -> f64 {
        let n = docs.len() as f64;
        let h = |ps: &[f64]| -ps.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
        let pc = docs.iter().filter(|d| d.1 == class).count() as f64 / n;
        let with: Vec<_> = docs.iter().filter(|d| d.0.contains(term)).collect();
        let without: Vec<_> = docs.iter().filter(|d| !d.0.contains(term)).collect();
        let cond = |set: &[&(BTreeSet<&str>, &str)]| {
            if set.is_empty() {
                return 0.0;
            }
            let p = set.iter().filter(|d| d.1 == class).count() as f64 / set.len() as f64;
            set.len() as f64 / n * h(&[p, 1.0 - p])
        };
        h(&[pc, 1.0 - pc]) - cond(&with) - cond(&without)
    }

    #[test]
    fn projector_selection_matches_entropy_oracle() {
        let train = vec![
            doc("1", "apple banana cherry", "a"),
            doc("2", "apple banana", "a"),
            doc("3", "apple date", "a"),
            doc("4", "banana elder fig", "b"),
            doc("5", "elder fig", "b"),
            doc("6", "elder cherry", "b"),
            doc("7", "grape fig cherry", "c"),
            doc("8", "grape date", "c"),
            doc("9", "grape apple", "c"),
        ];
        let corpus = LabeledCorpus::build(
            &train,
            &train[..1],
            &CorpusConfig {
                min_df: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let docs: Vec<(BTreeSet<&str>, &str)> = train
            .iter()
            .map(|d| (d.text.split(' ').collect(), d.labels[0].as_str()))
            .collect();
        let terms = corpus.vocabulary.terms();
        let classes = corpus.labels.names();
        let oracle_ig = Array2::from_shape_fn((terms.len(), classes.len()), |(t, c)| {
            entropy_ig(&docs, &terms[t], &classes[c])
        });
        let enc = corpus.encode_train().unwrap();
        let ig = correlate_ig(&binarize(&enc.counts), &enc.labels).unwrap();
        for (a, b) in ig.iter().zip(oracle_ig.iter()) {
            assert!((a - b).abs() < 1e-12);
        }

        let wce = corpus_wce(&corpus, &WceConfig::default()).unwrap();
        let cfg = EmbeddingConfig {
            variant: "random".parse().unwrap(),
            random_dim: 3,
            seed: 0,
        };
        let e = corpus_embeddings(&corpus, None, Some(&wce), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let picked = export_projector(&e, &corpus, &wce, 6, dir.path()).unwrap();
        let want = round_robin_selection(&oracle_ig, 6).unwrap();
        let want: Vec<ProjectorTerm> = want
            .into_iter()
            .map(|(t, c)| ProjectorTerm {
                term: terms[t].clone(),
                selected_class: c,
            })
            .collect();
        assert_eq!(picked, want);
        let meta = fs::read_to_string(dir.path().join("metadata.tsv")).unwrap();
        assert_eq!(meta.lines().count(), 7);
        assert!(meta.starts_with("term\tselected_class\ttop_wce_class\n"));
        let vectors = fs::read_to_string(dir.path().join("vectors.tsv")).unwrap();
        assert!(vectors.lines().all(|l| l.split('\t').count() == 3));
    }

    fn small_config(variants: &[&str], seeds: &[u64]) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            "variants = [{}]\nbaseline = \"{}\"\nseeds = {:?}\nout_dir = \"unused\"\ntrain = \"x\"\ntest = \"y\"\n[training]\nmax_epochs = 3\n",
            variants.iter().map(|v| format!("\"{v}\"")).collect::<Vec<_>>().join(", "),
            variants[0],
            seeds
        ))
        .unwrap()
    }

    #[test]
    fn sweep_structure() {
        let synth = generate(&SyntheticConfig {
            n_train: 200,
            n_test: 50,
            n_classes: 3,
            pretrained_dim: 10,
            ..Default::default()
        })
        .unwrap();
        let corpus = LabeledCorpus::build(&synth.train, &synth.test, &CorpusConfig::default()).unwrap();
        let cfg = small_config(&["pretrained-static", "pretrained+wce-static"], &[0, 1, 2]);
        let res = run_sweep(&corpus, Some(&synth.pretrained), &cfg).unwrap();
        assert_eq!(res.runs.len(), 6);
        assert_eq!(res.aggregates.len(), 2);
        assert_eq!(res.comparisons.len(), 1);
        assert_eq!(res.logs.len(), 6);

        let single = run_sweep(
            &corpus,
            Some(&synth.pretrained),
            &small_config(&["pretrained-static", "pretrained+wce-static"], &[4]),
        )
        .unwrap();
        assert!(single.comparisons.is_empty());
        assert_eq!(single.warnings.len(), 1);
        assert!(single.aggregates.iter().all(|a| a.macro_f1_std == 0.0));
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = small_config(&["random", "pretrained+wce-trainable"], &[0]);
        assert_eq!(cfg.measure, Measure::Dot);
        assert_eq!(cfg.random_dims, vec![50, 200, 300]);
        assert_eq!(cfg.training.max_epochs, 3);
        assert_eq!(cfg.training.batch_size, 100);
        // pretrained variant without a pretrained file
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml("variants = [\"glove\"]\nseeds=[0]\nout_dir=\"o\"").is_err());
        assert!(ExperimentConfig::from_toml("variants = [\"random\"]\nseeds=[0]\nout_dir=\"o\"\ntypo=1").is_err());
        let no_seeds =
            ExperimentConfig::from_toml("variants = [\"random\"]\nseeds=[]\nout_dir=\"o\"\ntrain=\"a\"\ntest=\"b\"")
                .unwrap();
        assert!(no_seeds.validate().is_err());
        let missing = ExperimentConfig::from_toml(
            "variants = [\"random\"]\nseeds=[0]\nout_dir=\"o\"\ntrain=\"/nonexistent/a\"\ntest=\"/nonexistent/b\"",
        )
        .unwrap();
        assert!(matches!(missing.validate(), Err(Error::Config(m)) if m.contains("does not exist")));
    }
}
