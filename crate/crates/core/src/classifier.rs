//! Mean-pooling classifier over an [`EmbeddingMatrix`] with supervised
//! dropout, plus a one-vs-rest logistic-regression baseline over projected
//! documents.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::corpus::{label_ids, LabelIndex, LabelMode, LabeledCorpus, TokenizedDocument};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::{contingencies, macro_f1, micro_f1};
use crate::nn::{argmax, sigmoid, softmax_in_place, xavier_uniform, AdamConfig, AdamState, PROB_CLAMP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub mode: LabelMode,
    /// Supervised-dropout probability on the second span.
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_len: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Optional cap on batches per epoch.
    pub epoch_batches: Option<usize>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mode: LabelMode::SingleLabel,
            dropout: 0.5,
            learning_rate: 1e-3,
            batch_size: 100,
            max_len: 500,
            max_epochs: 200,
            patience: 10,
            epoch_batches: None,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        check_dropout(self.dropout)?;
        if self.batch_size == 0 || self.max_len == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch size, length cap and epoch count must be positive".into(),
            ));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

fn check_dropout(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("dropout probability {p} is outside [0, 1)")))
    }
}

/// `D(e) = [u ⊕ (1−p)·d(s)] / (1 − p·r/(q+r))` for one vector, given the
/// keep mask of the `s` span. `d` is inverted dropout.
fn dropout_row(row: &[f64], keep: &[bool], p: f64, q: usize, r: usize, out: &mut [f64]) {
    let scale = 1.0 - p * r as f64 / (q + r) as f64;
    for i in 0..q {
        out[i] = row[i] / scale;
    }
    for j in 0..r {
        let inner = if keep[j] { row[q + j] / (1.0 - p) } else { 0.0 };
        out[q + j] = (1.0 - p) * inner / scale;
    }
}

/// Applies supervised dropout to every row of `rows`, drawing one keep mask
/// per row over the last `r` coordinates. Identity when not training or at
/// `p = 0`.
pub fn supervised_dropout<R: Rng>(
    rows: &Array2<f64>,
    p: f64,
    q: usize,
    r: usize,
    training: bool,
    rng: &mut R,
) -> Result<Array2<f64>> {
    check_dropout(p)?;
    if rows.ncols() != q + r {
        return Err(Error::Dimension(format!(
            "vectors have {} entries, spans need {}",
            rows.ncols(),
            q + r
        )));
    }
    if !training || p == 0.0 {
        return Ok(rows.clone());
    }
    let mut out = Array2::zeros(rows.raw_dim());
    let mut keep = vec![false; r];
    for (row, mut dst) in rows.rows().into_iter().zip(out.rows_mut()) {
        keep.iter_mut().for_each(|k| *k = rng.gen::<f64>() >= p);
        dropout_row(
            &row.to_vec(),
            &keep,
            p,
            q,
            r,
            dst.as_slice_mut().expect("standard layout"),
        );
    }
    Ok(out)
}

/// Token-id sequences (ids index rows of an embedding matrix, with
/// `rows()` as the unknown id) and their label sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<Vec<usize>>,
    pub labels: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn from_documents(docs: &[TokenizedDocument], e: &EmbeddingMatrix, labels: &LabelIndex) -> Result<Self> {
        let mut out = Self::default();
        for d in docs {
            out.sequences.push(e.encode(&d.tokens));
            out.labels.push(label_ids(&d.id, &d.labels, labels)?);
        }
        Ok(out)
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            sequences: idx.iter().map(|&i| self.sequences[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    mode: LabelMode,
    dropout: f64,
    max_len: usize,
    classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub embeddings: EmbeddingMatrix,
    /// `(q+r) × m`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub mode: LabelMode,
    pub dropout: f64,
    pub max_len: usize,
    pub classes: Vec<String>,
}

/// Gradients of the batch loss; `embeddings` is `None` when no span is
/// trainable.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub embeddings: Option<Array2<f64>>,
}

struct DocPass {
    pooled: Vec<f64>,
    /// Keep mask per token position over the second span, when dropout ran.
    keep: Option<Vec<bool>>,
}

impl Model {
    /// Xavier-uniform `W`, zero `b`.
    pub fn new(embeddings: EmbeddingMatrix, classes: Vec<String>, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        if classes.len() < 2 {
            return Err(Error::Config("a classifier needs at least two classes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let w = xavier_uniform(embeddings.dim(), classes.len(), &mut rng);
        Ok(Self {
            b: Array1::zeros(classes.len()),
            embeddings,
            w,
            mode: cfg.mode,
            dropout: cfg.dropout,
            max_len: cfg.max_len,
            classes,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn spans(&self) -> (usize, usize) {
        (self.embeddings.first_dim(), self.embeddings.second_dim())
    }

    fn truncated<'a>(&self, seq: &'a [usize]) -> &'a [usize] {
        &seq[..seq.len().min(self.max_len)]
    }

    fn pool(&self, seq: &[usize], rng: Option<&mut ChaCha8Rng>) -> DocPass {
        let seq = self.truncated(seq);
        let (q, r) = self.spans();
        let d = q + r;
        let mut pooled = vec![0.0; d];
        if seq.is_empty() {
            return DocPass { pooled, keep: None };
        }
        let e = self.embeddings.matrix();
        let unk = self.embeddings.unk_id();
        let p = self.dropout;
        match rng {
            Some(rng) if p > 0.0 && r > 0 => {
                let mut keep = vec![false; seq.len() * r];
                let mut buf = vec![0.0; d];
                for (pos, &tok) in seq.iter().enumerate() {
                    let mask = &mut keep[pos * r..(pos + 1) * r];
                    mask.iter_mut().for_each(|k| *k = rng.gen::<f64>() >= p);
                    if tok == unk {
                        continue;
                    }
                    let row = e.row(tok);
                    dropout_row(row.as_slice().expect("standard layout"), mask, p, q, r, &mut buf);
                    pooled.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
                }
                let n = seq.len() as f64;
                pooled.iter_mut().for_each(|x| *x /= n);
                DocPass {
                    pooled,
                    keep: Some(keep),
                }
            }
            _ => {
                for &tok in seq {
                    if tok != unk {
                        pooled.iter_mut().zip(e.row(tok)).for_each(|(a, b)| *a += b);
                    }
                }
                let n = seq.len() as f64;
                pooled.iter_mut().for_each(|x| *x /= n);
                DocPass { pooled, keep: None }
            }
        }
    }

    fn output(&self, pooled: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.n_classes())
            .map(|j| self.b[j] + pooled.iter().zip(self.w.column(j)).map(|(h, w)| h * w).sum::<f64>())
            .collect();
        match self.mode {
            LabelMode::SingleLabel => softmax_in_place(&mut z),
            LabelMode::Multilabel => z.iter_mut().for_each(|x| *x = sigmoid(*x)),
        }
        z
    }

    /// Class probabilities at inference time.
    pub fn predict_proba(&self, sequences: &[Vec<usize>]) -> Array2<f64> {
        let rows: Vec<Vec<f64>> = sequences
            .par_iter()
            .map(|s| self.output(&self.pool(s, None).pooled))
            .collect();
        let mut out = Array2::zeros((sequences.len(), self.n_classes()));
        for (i, r) in rows.iter().enumerate() {
            out.row_mut(i).iter_mut().zip(r).for_each(|(a, b)| *a = *b);
        }
        out
    }

    pub fn predict(&self, sequences: &[Vec<usize>]) -> Vec<Vec<usize>> {
        decide(&self.predict_proba(sequences), self.mode)
    }

    /// Mean loss and gradients over a batch. Dropout masks are drawn from
    /// `rng` when `training`.
    pub fn loss_and_grad(
        &self,
        sequences: &[Vec<usize>],
        labels: &[Vec<usize>],
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> (f64, Gradients) {
        let n = sequences.len();
        let m = self.n_classes();
        let (q, r) = self.spans();
        let seeds: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
        let passes: Vec<(DocPass, Vec<f64>)> = sequences
            .par_iter()
            .zip(&seeds)
            .map(|(seq, &seed)| {
                let mut doc_rng = ChaCha8Rng::seed_from_u64(seed);
                let pass = self.pool(seq, training.then_some(&mut doc_rng));
                let probs = self.output(&pass.pooled);
                (pass, probs)
            })
            .collect();

        let scale = match self.mode {
            LabelMode::SingleLabel => 1.0 / n as f64,
            LabelMode::Multilabel => 1.0 / (n * m) as f64,
        };
        let mut loss = 0.0;
        let mut dz = Array2::zeros((n, m));
        for (i, ((_, probs), y)) in passes.iter().zip(labels).enumerate() {
            let target = |j: usize| if y.contains(&j) { 1.0 } else { 0.0 };
            loss += example_loss(probs, y, self.mode);
            for j in 0..m {
                dz[[i, j]] = (probs[j] - target(j)) * scale;
            }
        }
        loss *= scale;

        let mut h = Array2::zeros((n, q + r));
        for (i, (pass, _)) in passes.iter().enumerate() {
            h.row_mut(i).iter_mut().zip(&pass.pooled).for_each(|(a, b)| *a = *b);
        }
        let gw = h.t().dot(&dz);
        let gb = dz.sum_axis(Axis(0));

        let first_trainable = self.embeddings.first_span().trainable;
        let second_trainable = r > 0 && self.embeddings.second_span().trainable;
        let ge = (first_trainable || second_trainable).then(|| {
            let dh = dz.dot(&self.w.t());
            let mut ge = Array2::zeros(self.embeddings.matrix().raw_dim());
            let unk = self.embeddings.unk_id();
            let p = self.dropout;
            let span_scale = if training && p > 0.0 && r > 0 {
                1.0 - p * r as f64 / (q + r) as f64
            } else {
                1.0
            };
            for (i, (seq, (pass, _))) in sequences.iter().zip(&passes).enumerate() {
                let seq = self.truncated(seq);
                if seq.is_empty() {
                    continue;
                }
                let inv_len = 1.0 / seq.len() as f64;
                let dhi = dh.row(i);
                for (pos, &tok) in seq.iter().enumerate() {
                    if tok == unk {
                        continue;
                    }
                    let mut row = ge.row_mut(tok);
                    if first_trainable {
                        for c in 0..q {
                            row[c] += dhi[c] * inv_len / span_scale;
                        }
                    }
                    if second_trainable {
                        for j in 0..r {
                            let factor = match &pass.keep {
                                Some(keep) if !keep[pos * r + j] => 0.0,
                                Some(_) => 1.0 / span_scale,
                                None => 1.0,
                            };
                            row[q + j] += dhi[q + j] * inv_len * factor;
                        }
                    }
                }
            }
            ge
        });
        (
            loss,
            Gradients {
                w: gw,
                b: gb,
                embeddings: ge,
            },
        )
    }

    /// Mean loss over a dataset at inference time.
    pub fn mean_loss(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let probs = self.predict_proba(&data.sequences);
        let total: f64 = probs
            .rows()
            .into_iter()
            .zip(&data.labels)
            .map(|(p, y)| example_loss(&p.to_vec(), y, self.mode))
            .sum();
        match self.mode {
            LabelMode::SingleLabel => total / data.len() as f64,
            LabelMode::Multilabel => total / (data.len() * self.n_classes()) as f64,
        }
    }

    pub fn to_artifact(&self) -> Result<Artifact> {
        let meta = serde_json::json!({
            "model": ModelMeta {
                mode: self.mode,
                dropout: self.dropout,
                max_len: self.max_len,
                classes: self.classes.clone(),
            },
            "embeddings": self.embeddings.meta_value()?,
        });
        let mut art = Artifact::new("model", &meta)?;
        art.push_matrix("embeddings", self.embeddings.matrix());
        art.push_matrix("w", &self.w);
        art.push_vector("b", self.b.as_slice().expect("contiguous"));
        Ok(art)
    }

    pub fn from_artifact(art: &Artifact) -> Result<Self> {
        art.expect_kind("model")?;
        let meta: serde_json::Value = art.meta()?;
        let model: ModelMeta = serde_json::from_value(meta["model"].clone())?;
        let embeddings = EmbeddingMatrix::from_meta_value(meta["embeddings"].clone(), art.matrix("embeddings")?)?;
        let w = art.matrix("w")?;
        let b = Array1::from(art.vector("b")?);
        if w.nrows() != embeddings.dim() || w.ncols() != model.classes.len() || b.len() != model.classes.len() {
            return Err(Error::Format(
                "model weights disagree with embeddings or classes".into(),
            ));
        }
        Ok(Self {
            embeddings,
            w,
            b,
            mode: model.mode,
            dropout: model.dropout,
            max_len: model.max_len,
            classes: model.classes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_artifact()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_artifact(&Artifact::load(path)?)
    }
}

/// Clamped cross-entropy (single-label) or summed binary cross-entropy
/// (multilabel) for one example.
fn example_loss(probs: &[f64], labels: &[usize], mode: LabelMode) -> f64 {
    match mode {
        LabelMode::SingleLabel => {
            let j = labels[0];
            -probs[j].max(PROB_CLAMP).ln()
        }
        LabelMode::Multilabel => probs
            .iter()
            .enumerate()
            .map(|(j, &p)| {
                if labels.contains(&j) {
                    -p.max(PROB_CLAMP).ln()
                } else {
                    -(1.0 - p).max(PROB_CLAMP).ln()
                }
            })
            .sum(),
    }
}

/// Mean loss over a batch of probability rows.
pub fn loss(probs: ArrayView2<'_, f64>, labels: &[Vec<usize>], mode: LabelMode) -> f64 {
    let total: f64 = probs
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(p, y)| example_loss(&p.to_vec(), y, mode))
        .sum();
    match mode {
        LabelMode::SingleLabel => total / probs.nrows() as f64,
        LabelMode::Multilabel => total / (probs.nrows() * probs.ncols()) as f64,
    }
}

/// Argmax with lowest-index ties (single-label) or `p ≥ 0.5` (multilabel).
pub fn decide(probs: &Array2<f64>, mode: LabelMode) -> Vec<Vec<usize>> {
    probs
        .rows()
        .into_iter()
        .map(|row| match mode {
            LabelMode::SingleLabel => vec![argmax(&row.to_vec())],
            LabelMode::Multilabel => (0..row.len()).filter(|&j| row[j] >= 0.5).collect(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub tr_loss: f64,
    pub va_loss: f64,
    pub va_macro_f1: f64,
    pub va_micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Training loss of the closing pass over the validation split.
    pub final_validation_pass_loss: f64,
}

impl TrainingLog {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for rec in &self.epochs {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

struct Optimizer {
    cfg: AdamConfig,
    w: AdamState,
    b: AdamState,
    e: Option<AdamState>,
}

impl Optimizer {
    fn new(model: &Model, cfg: AdamConfig) -> Self {
        let trainable = model.embeddings.first_span().trainable || model.embeddings.second_span().trainable;
        Self {
            cfg,
            w: AdamState::new(model.w.len()),
            b: AdamState::new(model.b.len()),
            e: trainable.then(|| AdamState::new(model.embeddings.matrix().len())),
        }
    }

    fn step(&mut self, model: &mut Model, g: &Gradients) {
        self.w.update(&self.cfg, model.w.iter_mut(), g.w.iter());
        self.b.update(&self.cfg, model.b.iter_mut(), g.b.iter());
        if let (Some(state), Some(ge)) = (self.e.as_mut(), g.embeddings.as_ref()) {
            let (q, r) = model.spans();
            let first = model.embeddings.first_span().trainable;
            let second = model.embeddings.second_span().trainable;
            let d = q + r;
            // Frozen spans keep zero gradients and moments, so Adam leaves them untouched.
            let masked: Vec<f64> = ge
                .iter()
                .enumerate()
                .map(|(k, &g)| {
                    if (k % d < q && first) || (k % d >= q && second) {
                        g
                    } else {
                        0.0
                    }
                })
                .collect();
            state.update(&self.cfg, model.embeddings.matrix_mut().iter_mut(), masked.iter());
        }
    }
}

fn run_epoch(
    model: &mut Model,
    opt: &mut Optimizer,
    data: &Dataset,
    cfg: &ModelConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0;
    for (k, chunk) in order.chunks(cfg.batch_size).enumerate() {
        if cfg.epoch_batches.is_some_and(|cap| k >= cap) {
            break;
        }
        let seqs: Vec<Vec<usize>> = chunk.iter().map(|&i| data.sequences[i].clone()).collect();
        let labels: Vec<Vec<usize>> = chunk.iter().map(|&i| data.labels[i].clone()).collect();
        let (loss, grads) = model.loss_and_grad(&seqs, &labels, true, rng);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss became {loss} at batch {k}")));
        }
        opt.step(model, &grads);
        if model.w.iter().chain(model.b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("parameters became non-finite at batch {k}")));
        }
        total += loss;
        batches += 1;
    }
    Ok(if batches == 0 { 0.0 } else { total / batches as f64 })
}

fn scores(model: &Model, data: &Dataset) -> Result<(f64, f64)> {
    let pred = model.predict(&data.sequences);
    let cs = contingencies(&data.labels, &pred, model.n_classes())?;
    Ok((macro_f1(&cs), micro_f1(&cs)))
}

/// Trains on `train` with early stopping on `valid` macro-F1, restores the
/// best checkpoint (parameters and optimizer state), then runs one more
/// epoch over `valid`.
pub fn train_on(
    train: &Dataset,
    valid: &Dataset,
    embeddings: EmbeddingMatrix,
    classes: Vec<String>,
    cfg: &ModelConfig,
) -> Result<(Model, TrainingLog)> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Insufficient(
            "training and validation splits must be non-empty".into(),
        ));
    }
    let mut model = Model::new(embeddings, classes, cfg)?;
    let mut opt = Optimizer::new(&model, AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, Model, Optimizer)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let tr_loss = run_epoch(&mut model, &mut opt, train, cfg, &mut rng)?;
        let va_loss = model.mean_loss(valid);
        let (va_macro_f1, va_micro_f1) = scores(&model, valid)?;
        let rec = EpochRecord {
            epoch,
            tr_loss,
            va_loss,
            va_macro_f1,
            va_micro_f1,
        };
        log::debug!("{}", serde_json::to_string(&rec)?);
        epochs.push(rec);
        if best.as_ref().is_none_or(|(f1, ..)| va_macro_f1 > *f1) {
            best = Some((va_macro_f1, epoch, model.clone(), opt.clone_state()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_epoch, best_model, best_opt) = best.expect("at least one epoch ran");
    model = best_model;
    opt = best_opt;
    let final_loss = run_epoch(&mut model, &mut opt, valid, cfg, &mut rng)?;
    Ok((
        model,
        TrainingLog {
            epochs,
            best_epoch,
            final_validation_pass_loss: final_loss,
        },
    ))
}

impl Optimizer {
    fn clone_state(&self) -> Self {
        Self {
            cfg: self.cfg,
            w: self.w.clone(),
            b: self.b.clone(),
            e: self.e.clone(),
        }
    }
}

/// Trains on the corpus' training split minus its validation rows.
pub fn train(corpus: &LabeledCorpus, embeddings: EmbeddingMatrix, cfg: &ModelConfig) -> Result<(Model, TrainingLog)> {
    let mut cfg = *cfg;
    cfg.mode = corpus.mode();
    let all = Dataset::from_documents(&corpus.train, &embeddings, &corpus.labels)?;
    let train = all.select(&corpus.fit_indices());
    let valid = all.select(&corpus.validation);
    train_on(&train, &valid, embeddings, corpus.labels.names().to_vec(), &cfg)
}

/// One-vs-rest logistic regression over standardized dense features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub mode: LabelMode,
    pub lambda: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// `d × m`, row-major.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub mode: LabelMode,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            mode: LabelMode::SingleLabel,
            max_iter: 300,
            tolerance: 1e-6,
        }
    }
}

pub const LAMBDA_GRID: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];

fn column_stats(x: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default();
    let stds = x
        .columns()
        .into_iter()
        .zip(&means)
        .map(|(c, m)| {
            let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    (means, stds)
}

fn apply_stats(x: &Array2<f64>, means: &[f64], stds: &[f64]) -> Array2<f64> {
    let mut z = x.clone();
    for (mut col, (m, s)) in z.columns_mut().into_iter().zip(means.iter().zip(stds)) {
        col.mapv_inplace(|v| if *s > 0.0 { (v - m) / s } else { 0.0 });
    }
    z
}

/// `(1/n) Σ BCE + (λ/2n)‖w‖²` for every class column at once, and its
/// gradient. The bias is not penalized.
pub fn logistic_objective(
    x: &Array2<f64>,
    y: &Array2<f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
    lambda: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let mut z = x.dot(w);
    z += b;
    let mut loss = 0.0;
    let mut dz = Array2::zeros(z.raw_dim());
    for ((zv, yv), d) in z.iter().zip(y.iter()).zip(dz.iter_mut()) {
        let p = sigmoid(*zv);
        loss -= if *yv > 0.5 {
            p.max(PROB_CLAMP).ln()
        } else {
            (1.0 - p).max(PROB_CLAMP).ln()
        };
        *d = (p - yv) / n;
    }
    loss = loss / n + lambda / (2.0 * n) * w.iter().map(|v| v * v).sum::<f64>();
    let gw = x.t().dot(&dz) + &(w * (lambda / n));
    let gb = dz.sum_axis(Axis(0));
    (loss, gw, gb)
}

fn fit_logistic(x: &Array2<f64>, y: &Array2<f64>, lambda: f64, cfg: &LinearConfig) -> (Array2<f64>, Array1<f64>) {
    let (n, d) = x.dim();
    let mut w = Array2::zeros((d, y.ncols()));
    let mut b = Array1::zeros(y.ncols());
    let step = 1.0 / (0.25 * (d as f64 + 1.0) + lambda / n as f64);
    for _ in 0..cfg.max_iter {
        let (_, gw, gb) = logistic_objective(x, y, &w, &b, lambda);
        let norm = gw.iter().chain(gb.iter()).map(|g| g * g).sum::<f64>().sqrt();
        w.scaled_add(-step, &gw);
        b.scaled_add(-step, &gb);
        if norm < cfg.tolerance {
            break;
        }
    }
    (w, b)
}

fn indicator(labels: &[Vec<usize>], m: usize) -> Array2<f64> {
    let mut y = Array2::zeros((labels.len(), m));
    for (i, ls) in labels.iter().enumerate() {
        for &j in ls {
            y[[i, j]] = 1.0;
        }
    }
    y
}

impl LinearModel {
    fn scores(&self, x: &Array2<f64>) -> Array2<f64> {
        let z = apply_stats(x, &self.means, &self.stds);
        let m = self.b.len();
        let w = Array2::from_shape_fn((self.w.len(), m), |(i, j)| self.w[i][j]);
        let mut s = z.dot(&w);
        s += &Array1::from(self.b.clone());
        s.mapv_inplace(sigmoid);
        s
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<Vec<usize>> {
        decide(&self.scores(x), self.mode)
    }
}

/// Fits one model per penalty in [`LAMBDA_GRID`] and keeps the one with
/// the best validation macro-F1 (earliest on ties).
pub fn train_linear_baseline(
    x_train: &Array2<f64>,
    y_train: &[Vec<usize>],
    x_valid: &Array2<f64>,
    y_valid: &[Vec<usize>],
    n_classes: usize,
    cfg: &LinearConfig,
) -> Result<LinearModel> {
    if x_train.nrows() != y_train.len() || x_valid.nrows() != y_valid.len() || x_train.ncols() != x_valid.ncols() {
        return Err(Error::Dimension("feature and label counts disagree".into()));
    }
    let (means, stds) = column_stats(x_train);
    let z = apply_stats(x_train, &means, &stds);
    let y = indicator(y_train, n_classes);
    let mut best: Option<(f64, LinearModel)> = None;
    for &lambda in &LAMBDA_GRID {
        let (w, b) = fit_logistic(&z, &y, lambda, cfg);
        let model = LinearModel {
            mode: cfg.mode,
            lambda,
            means: means.clone(),
            stds: stds.clone(),
            w: w.rows().into_iter().map(|r| r.to_vec()).collect(),
            b: b.to_vec(),
        };
        let f1 = macro_f1(&contingencies(y_valid, &model.predict(x_valid), n_classes)?);
        if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
            best = Some((f1, model));
        }
    }
    Ok(best.expect("grid is non-empty").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocabulary;
    use crate::embeddings::{build_embedding_matrix, EmbeddingConfig, PretrainedEmbeddings};
    use crate::wce::{Measure, WceTimings, WordClassMatrix};
    use ndarray::array;

    fn tiny_embeddings(trainable: bool) -> EmbeddingMatrix {
        let terms = ["a", "b", "c", "d"];
        let docs = vec![terms.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
        let v = build_vocabulary(&docs, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = PretrainedEmbeddings::from_rows(
            "t",
            terms
                .iter()
                .map(|t| (t.to_string(), (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                .collect(),
        )
        .unwrap();
        let s = WordClassMatrix {
            matrix: Array2::from_shape_fn((4, 2), |_| rng.gen_range(-1.0..1.0)),
            measure: Measure::Dot,
            reduced: false,
            means: vec![0.0; 2],
            stds: vec![1.0; 2],
            timings: WceTimings::default(),
        };
        let name = if trainable {
            "pretrained+wce-trainable"
        } else {
            "pretrained+wce-static"
        };
        let cfg = EmbeddingConfig {
            variant: name.parse().unwrap(),
            ..Default::default()
        };
        build_embedding_matrix(&v, &[], Some(&u), Some((&s, &[])), &cfg).unwrap()
    }

    fn tiny_model(mode: LabelMode, dropout: f64) -> Model {
        let cfg = ModelConfig {
            mode,
            dropout,
            seed: 4,
            ..Default::default()
        };
        let mut m = Model::new(tiny_embeddings(true), vec!["x".into(), "y".into(), "z".into()], &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        m.b.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        m
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 * 0.37 - 1.0);
        let a = supervised_dropout(&x, 0.5, 2, 2, false, &mut rng).unwrap();
        let b = supervised_dropout(&x, 0.0, 2, 2, true, &mut rng).unwrap();
        assert_eq!(a.as_slice(), x.as_slice());
        assert_eq!(b.as_slice(), x.as_slice());
        assert!(supervised_dropout(&x, 1.0, 2, 2, true, &mut rng).is_err());
        assert!(supervised_dropout(&x, 0.5, 3, 2, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_half_mask_example() {
        let row = [1.0; 4];
        let mut out = [0.0; 4];
        dropout_row(&row, &[true, false], 0.5, 2, 2, &mut out);
        let four_thirds = 1.0 / 0.75;
        assert!((out[0] - four_thirds).abs() < 1e-15);
        assert!((out[1] - four_thirds).abs() < 1e-15);
        assert!((out[2] - four_thirds).abs() < 1e-15);
        assert_eq!(out[3], 0.0);
    }

    #[test]
    fn uniform_softmax_for_zero_weights() {
        let mut m = tiny_model(LabelMode::SingleLabel, 0.0);
        m.w.fill(0.0);
        m.b.fill(0.0);
        let p = m.predict_proba(&[vec![0, 1], vec![]]);
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let l = loss(p.view(), &[vec![0], vec![2]], LabelMode::SingleLabel);
        assert!((l - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_forward_pass() {
        let mut m = tiny_model(LabelMode::SingleLabel, 0.0);
        let e = m.embeddings.matrix().clone();
        m.w = Array2::from_shape_fn((5, 3), |(i, j)| 0.1 * (i as f64) - 0.2 * (j as f64));
        m.b = array![0.3, -0.1, 0.0];
        // tokens a, c and one unknown; divisor counts all three
        let h: Vec<f64> = (0..5).map(|c| (e[[0, c]] + e[[2, c]]) / 3.0).collect();
        let z: Vec<f64> = (0..3)
            .map(|j| m.b[j] + (0..5).map(|i| h[i] * m.w[[i, j]]).sum::<f64>())
            .collect();
        let zmax = z.iter().cloned().fold(f64::MIN, f64::max);
        let ez: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
        let sum: f64 = ez.iter().sum();
        let p = m.predict_proba(&[vec![0, 2, 4]]);
        for j in 0..3 {
            assert!((p[[0, j]] - ez[j] / sum).abs() < 1e-10);
        }
    }

    #[test]
    fn sigmoid_saturates_and_threshold_is_inclusive() {
        let mut m = tiny_model(LabelMode::Multilabel, 0.0);
        m.b[1] = 1e6;
        let p = m.predict_proba(&[vec![0]]);
        assert_eq!(p[[0, 1]], 1.0);
        assert_eq!(
            decide(&array![[0.6, 0.4, 0.5]], LabelMode::Multilabel),
            vec![vec![0, 2]]
        );
        assert_eq!(decide(&array![[0.2, 0.5, 0.3]], LabelMode::SingleLabel), vec![vec![1]]);
        assert_eq!(decide(&array![[0.5, 0.5]], LabelMode::SingleLabel), vec![vec![0]]);
    }

    #[test]
    fn loss_matches_scalar_loop() {
        let probs = array![[0.7, 0.2, 0.1], [0.1, 0.1, 0.8]];
        let single = loss(probs.view(), &[vec![0], vec![1]], LabelMode::SingleLabel);
        assert!((single - (-(0.7f64.ln()) - 0.1f64.ln()) / 2.0).abs() < 1e-15);
        let multi = loss(probs.view(), &[vec![0, 1], vec![]], LabelMode::Multilabel);
        let mut want = 0.0;
        for (row, y) in [(0, [1.0, 1.0, 0.0]), (1, [0.0, 0.0, 0.0])] {
            for j in 0..3 {
                let p: f64 = probs[[row, j]];
                want -= y[j] * p.ln() + (1.0 - y[j]) * (1.0 - p).ln();
            }
        }
        assert!((multi - want / 6.0).abs() < 1e-15);
        let perfect = loss(array![[1.0, 0.0]].view(), &[vec![0]], LabelMode::SingleLabel);
        assert!(perfect.abs() < 1e-15);
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
    }

    fn check_gradients(mode: LabelMode, dropout: f64) {
        let seqs = vec![vec![0, 1, 1], vec![2, 4, 3, 0], vec![3]];
        let labels = match mode {
            LabelMode::SingleLabel => vec![vec![0], vec![2], vec![1]],
            LabelMode::Multilabel => vec![vec![0, 2], vec![], vec![1]],
        };
        let h = 1e-5;
        for point in 0..10u64 {
            let mut m = tiny_model(mode, dropout);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + point);
            m.w.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
            let f = |m: &Model| {
                m.loss_and_grad(&seqs, &labels, true, &mut ChaCha8Rng::seed_from_u64(point))
                    .0
            };
            let (_, g) = m.loss_and_grad(&seqs, &labels, true, &mut ChaCha8Rng::seed_from_u64(point));
            let mut worst: f64 = 0.0;
            for idx in 0..m.w.len() {
                let (i, j) = (idx / 3, idx % 3);
                let mut plus = m.clone();
                plus.w[[i, j]] += h;
                let mut minus = m.clone();
                minus.w[[i, j]] -= h;
                worst = worst.max(rel_err((f(&plus) - f(&minus)) / (2.0 * h), g.w[[i, j]]));
            }
            for j in 0..3 {
                let mut plus = m.clone();
                plus.b[j] += h;
                let mut minus = m.clone();
                minus.b[j] -= h;
                worst = worst.max(rel_err((f(&plus) - f(&minus)) / (2.0 * h), g.b[j]));
            }
            let ge = g.embeddings.as_ref().unwrap();
            for row in 0..4 {
                for c in 0..5 {
                    let bump = |delta: f64| {
                        let mut e = m.embeddings.matrix().clone();
                        e[[row, c]] += delta;
                        let mut mm = m.clone();
                        mm.embeddings = m.embeddings.with_matrix(e).unwrap();
                        f(&mm)
                    };
                    worst = worst.max(rel_err((bump(h) - bump(-h)) / (2.0 * h), ge[[row, c]]));
                }
            }
            assert!(worst < 1e-4, "point {point}: relative error {worst}");
        }
    }

    #[test]
    fn gradient_check_single_label() {
        check_gradients(LabelMode::SingleLabel, 0.0);
        check_gradients(LabelMode::SingleLabel, 0.5);
    }

    #[test]
    fn gradient_check_multilabel() {
        check_gradients(LabelMode::Multilabel, 0.3);
    }

    #[test]
    fn static_embeddings_have_no_gradient_and_stay_fixed() {
        let cfg = ModelConfig {
            seed: 1,
            ..Default::default()
        };
        let mut m = Model::new(tiny_embeddings(false), vec!["x".into(), "y".into()], &cfg).unwrap();
        let before = m.embeddings.matrix().clone();
        let (_, g) = m.loss_and_grad(&[vec![0, 1]], &[vec![1]], true, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(g.embeddings.is_none());
        let mut opt = Optimizer::new(&m, AdamConfig::default());
        opt.step(&mut m, &g);
        assert_eq!(m.embeddings.matrix(), &before);
    }

    #[test]
    fn model_artifact_roundtrip() {
        let m = tiny_model(LabelMode::Multilabel, 0.25);
        let back = Model::from_artifact(&m.to_artifact().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn flat_validation_returns_first_epoch_checkpoint() {
        // Every document is empty, so predictions never change.
        let data = Dataset {
            sequences: vec![vec![]; 6],
            labels: vec![vec![0], vec![1], vec![0], vec![1], vec![0], vec![1]],
        };
        let cfg = ModelConfig {
            patience: 3,
            max_epochs: 50,
            ..Default::default()
        };
        let (_, log) = train_on(&data, &data, tiny_embeddings(false), vec!["x".into(), "y".into()], &cfg).unwrap();
        assert_eq!(log.best_epoch, 1);
        assert_eq!(log.epochs.len(), 4);
    }

    #[test]
    fn linear_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((8, 3), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((8, 2), |_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
        let h = 1e-5;
        for _ in 0..5 {
            let w = Array2::from_shape_fn((3, 2), |_| rng.gen_range(-1.0..1.0));
            let b = Array1::from_shape_fn(2, |_| rng.gen_range(-1.0..1.0));
            let (_, gw, gb) = logistic_objective(&x, &y, &w, &b, 0.7);
            for k in 0..6 {
                let (i, j) = (k / 2, k % 2);
                let mut wp = w.clone();
                wp[[i, j]] += h;
                let mut wm = w.clone();
                wm[[i, j]] -= h;
                let num = (logistic_objective(&x, &y, &wp, &b, 0.7).0 - logistic_objective(&x, &y, &wm, &b, 0.7).0)
                    / (2.0 * h);
                assert!(rel_err(num, gw[[i, j]]) < 1e-4);
            }
            for j in 0..2 {
                let mut bp = b.clone();
                bp[j] += h;
                let mut bm = b.clone();
                bm[j] -= h;
                let num = (logistic_objective(&x, &y, &w, &bp, 0.7).0 - logistic_objective(&x, &y, &w, &bm, 0.7).0)
                    / (2.0 * h);
                assert!(rel_err(num, gb[j]) < 1e-4);
            }
        }
    }

    #[test]
    fn linear_separable_and_degenerate_cases() {
        let x = array![
            [2.0, 0.1],
            [1.5, -0.3],
            [1.8, 0.2],
            [-2.0, 0.0],
            [-1.2, 0.4],
            [-1.7, -0.1]
        ];
        let y = vec![vec![0], vec![0], vec![0], vec![1], vec![1], vec![1]];
        let m = train_linear_baseline(&x, &y, &x, &y, 2, &LinearConfig::default()).unwrap();
        assert_eq!(m.predict(&x), y);

        let flat = Array2::from_elem((5, 2), 3.0);
        let y = vec![vec![1], vec![1], vec![1], vec![0], vec![1]];
        let m = train_linear_baseline(&flat, &y, &flat, &y, 2, &LinearConfig::default()).unwrap();
        assert!(m.predict(&flat).iter().all(|p| p == &vec![1]));
        // class 0: tp=fp=0, fn=1 → 0; class 1: tp=4, fp=1 → 8/9
        let f1 = macro_f1(&contingencies(&y, &m.predict(&flat), 2).unwrap());
        assert!((f1 - 4.0 / 9.0).abs() < 1e-15);
    }
}
