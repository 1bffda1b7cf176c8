//! Regression from pretrained vectors to WCEs, used to fill the supervised
//! span of terms that never reached the training vocabulary.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::embeddings::{EmbeddingMatrix, SpanKind};
use crate::error::{Error, Result};
use crate::nn::{xavier_uniform, AdamConfig, AdamState};

/// Fewest aligned terms accepted for training.
pub const MIN_ALIGNED_TERMS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            dropout: 0.5,
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 500,
            patience: 20,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegressorMeta {
    dropout: f64,
    classes: Vec<String>,
}

/// `u → ReLU(u·W1 + b1) → ·W2 + b2`, with inverted dropout on the hidden
/// layer during training.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub dropout: f64,
    /// Names of the output coordinates, when they are classes.
    pub classes: Vec<String>,
}

pub struct RegressorGradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Regressor {
    pub fn new(q: usize, r: usize, cfg: &RegressorConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.dropout) {
            return Err(Error::Config(format!(
                "dropout probability {} is outside [0, 1)",
                cfg.dropout
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            w1: xavier_uniform(q, cfg.hidden, &mut rng),
            b1: Array1::zeros(cfg.hidden),
            w2: xavier_uniform(cfg.hidden, r, &mut rng),
            b2: Array1::zeros(r),
            dropout: cfg.dropout,
            classes: Vec::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.ncols()
    }

    /// Deterministic forward pass for a batch of inputs.
    pub fn predict_batch(&self, u: &Array2<f64>) -> Result<Array2<f64>> {
        if u.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "regressor expects {}-dimensional inputs, got {}",
                self.input_dim(),
                u.ncols()
            )));
        }
        let h = (u.dot(&self.w1) + &self.b1).mapv(|x| x.max(0.0));
        Ok(h.dot(&self.w2) + &self.b2)
    }

    pub fn predict_wce(&self, u: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        let batch = u.to_owned().insert_axis(Axis(0));
        Ok(self.predict_batch(&batch)?.row(0).to_vec())
    }

    /// Mean squared error over all outputs and its gradient.
    pub fn loss_and_grad(
        &self,
        u: &Array2<f64>,
        target: &Array2<f64>,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> (f64, RegressorGradients) {
        let pre = u.dot(&self.w1) + &self.b1;
        let p = self.dropout;
        let mask: Array2<f64> = if training && p > 0.0 {
            Array2::from_shape_simple_fn(
                pre.raw_dim(),
                || if rng.gen::<f64>() >= p { 1.0 / (1.0 - p) } else { 0.0 },
            )
        } else {
            Array2::ones(pre.raw_dim())
        };
        let h = pre.mapv(|x| x.max(0.0)) * &mask;
        let out = h.dot(&self.w2) + &self.b2;
        let diff = &out - target;
        let count = diff.len() as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
        let dout = diff * (2.0 / count);
        let gw2 = h.t().dot(&dout);
        let gb2 = dout.sum_axis(Axis(0));
        let dh = dout.dot(&self.w2.t());
        let mut dpre = dh * &mask;
        dpre.zip_mut_with(&pre, |d, &x| {
            if x <= 0.0 {
                *d = 0.0
            }
        });
        let gw1 = u.t().dot(&dpre);
        let gb1 = dpre.sum_axis(Axis(0));
        (
            loss,
            RegressorGradients {
                w1: gw1,
                b1: gb1,
                w2: gw2,
                b2: gb2,
            },
        )
    }

    pub fn to_artifact(&self) -> Result<Artifact> {
        let meta = RegressorMeta {
            dropout: self.dropout,
            classes: self.classes.clone(),
        };
        let mut art = Artifact::new("regressor", &meta)?;
        art.push_matrix("w1", &self.w1);
        art.push_vector("b1", &self.b1.to_vec());
        art.push_matrix("w2", &self.w2);
        art.push_vector("b2", &self.b2.to_vec());
        Ok(art)
    }

    pub fn from_artifact(art: &Artifact) -> Result<Self> {
        art.expect_kind("regressor")?;
        let meta: RegressorMeta = art.meta()?;
        let reg = Self {
            w1: art.matrix("w1")?,
            b1: Array1::from(art.vector("b1")?),
            w2: art.matrix("w2")?,
            b2: Array1::from(art.vector("b2")?),
            dropout: meta.dropout,
            classes: meta.classes,
        };
        if reg.w1.ncols() != reg.b1.len() || reg.w2.nrows() != reg.b1.len() || reg.w2.ncols() != reg.b2.len() {
            return Err(Error::Format("regressor layer shapes disagree".into()));
        }
        Ok(reg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_artifact()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_artifact(&Artifact::load(path)?)
    }
}

struct RegressorAdam {
    w1: AdamState,
    b1: AdamState,
    w2: AdamState,
    b2: AdamState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorReport {
    pub n_train: usize,
    pub n_validation: usize,
    pub best_epoch: usize,
    pub validation_mse: f64,
    pub epochs_run: usize,
}

/// Trains on aligned rows of `u` and `target`, holding out a fraction of
/// the rows for early stopping, and returns the best checkpoint.
pub fn train_regressor(
    u: &Array2<f64>,
    target: &Array2<f64>,
    cfg: &RegressorConfig,
) -> Result<(Regressor, RegressorReport)> {
    if u.nrows() != target.nrows() {
        return Err(Error::Dimension(format!(
            "{} input rows but {} target rows",
            u.nrows(),
            target.nrows()
        )));
    }
    let n = u.nrows();
    if n < MIN_ALIGNED_TERMS {
        return Err(Error::Insufficient(format!(
            "{n} terms have both a pretrained vector and a WCE; at least {MIN_ALIGNED_TERMS} are needed"
        )));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::Config("batch size and epoch count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let u_val = u.select(Axis(0), val_idx);
    let t_val = target.select(Axis(0), val_idx);

    let mut reg = Regressor::new(u.ncols(), target.ncols(), cfg)?;
    let adam_cfg = AdamConfig::with_learning_rate(cfg.learning_rate);
    let mut opt = RegressorAdam {
        w1: AdamState::new(reg.w1.len()),
        b1: AdamState::new(reg.b1.len()),
        w2: AdamState::new(reg.w2.len()),
        b2: AdamState::new(reg.b2.len()),
    };
    let val_mse = |reg: &Regressor| {
        let pred = reg.predict_batch(&u_val).expect("dimensions checked");
        (&pred - &t_val).mapv(|d| d * d).mean().unwrap_or(0.0)
    };
    let mut best = (val_mse(&reg), 0, reg.clone());
    let mut stale = 0;
    let mut epochs_run = 0;
    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        train_idx.shuffle(&mut rng);
        for chunk in train_idx.chunks(cfg.batch_size) {
            let xb = u.select(Axis(0), chunk);
            let yb = target.select(Axis(0), chunk);
            let (loss, g) = reg.loss_and_grad(&xb, &yb, true, &mut rng);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "regressor loss became {loss} in epoch {epoch}"
                )));
            }
            opt.w1.update(&adam_cfg, reg.w1.iter_mut(), g.w1.iter());
            opt.b1.update(&adam_cfg, reg.b1.iter_mut(), g.b1.iter());
            opt.w2.update(&adam_cfg, reg.w2.iter_mut(), g.w2.iter());
            opt.b2.update(&adam_cfg, reg.b2.iter_mut(), g.b2.iter());
        }
        let mse = val_mse(&reg);
        if mse < best.0 {
            best = (mse, epoch, reg.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let report = RegressorReport {
        n_train: train_idx.len(),
        n_validation: n_val,
        best_epoch: best.1,
        validation_mse: best.0,
        epochs_run,
    };
    Ok((best.2, report))
}

/// Trains on the in-vocabulary rows of `e` that have both a pretrained and
/// a WCE span.
pub fn train_from_embeddings(e: &EmbeddingMatrix, cfg: &RegressorConfig) -> Result<(Regressor, RegressorReport)> {
    if e.second_span().kind != Some(SpanKind::Wce) || e.first_span().kind != Some(SpanKind::Pretrained) {
        return Err(Error::Config(
            "OOV regression needs a pretrained+wce embedding matrix".into(),
        ));
    }
    let rows: Vec<usize> = (0..e.n_vocab())
        .filter(|&i| e.has_pretrained(i) && e.has_wce(i))
        .collect();
    let q = e.first_dim();
    let u = e.matrix().select(Axis(0), &rows).slice(s![.., ..q]).to_owned();
    let t = e.matrix().select(Axis(0), &rows).slice(s![.., q..]).to_owned();
    let (mut reg, report) = train_regressor(&u, &t, cfg)?;
    reg.classes = e.classes().to_vec();
    Ok((reg, report))
}

/// Rows eligible for imputation: outside the vocabulary, with a pretrained
/// vector and a still-zero WCE span.
pub fn imputable_rows(e: &EmbeddingMatrix) -> Vec<usize> {
    (e.n_vocab()..e.rows())
        .filter(|&i| e.has_pretrained(i) && !e.wce_imputed(i) && e.second_part(i).iter().all(|&x| x == 0.0))
        .collect()
}

/// Returns a copy of `e` whose eligible out-of-vocabulary rows carry
/// predicted WCEs.
pub fn impute_oov(e: &EmbeddingMatrix, reg: &Regressor) -> Result<EmbeddingMatrix> {
    if e.second_span().kind != Some(SpanKind::Wce) {
        return Err(Error::Config("embedding matrix has no WCE span to impute".into()));
    }
    if reg.input_dim() != e.first_dim() || reg.output_dim() != e.second_dim() {
        return Err(Error::Dimension(format!(
            "regressor maps {} → {}, embeddings have spans {} and {}",
            reg.input_dim(),
            reg.output_dim(),
            e.first_dim(),
            e.second_dim()
        )));
    }
    let rows = imputable_rows(e);
    if rows.is_empty() {
        return Ok(e.clone());
    }
    let u = e
        .matrix()
        .select(Axis(0), &rows)
        .slice(s![.., ..e.first_dim()])
        .to_owned();
    let pred = reg.predict_batch(&u)?;
    let updates: Vec<(usize, Vec<f64>)> = rows.iter().zip(pred.rows()).map(|(&i, p)| (i, p.to_vec())).collect();
    Ok(e.with_imputed_rows(&updates))
}
