//! Seeded synthetic corpora with class-conditional vocabularies, shared
//! noise terms, optional spurious training-only tokens and held-out terms,
//! plus matching synthetic "pretrained" vectors.
//!
//! Term names are alphabetic (so the tokenizer keeps them intact) and use
//! prefixes no English stop word starts with: `qx` class terms, `zx` noise,
//! `xq` spurious tokens, `vx` vectors that never occur in the corpus.

use std::collections::BTreeSet;
use std::io::Write;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::embeddings::PretrainedEmbeddings;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub n_classes: usize,
    pub terms_per_class: usize,
    pub noise_terms: usize,
    /// Fraction of each document's tokens drawn from the shared noise pool.
    pub noise_fraction: f64,
    /// Fraction of class tokens drawn from another class's vocabulary.
    pub confusion: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub multilabel: bool,
    pub pretrained_dim: usize,
    /// Weight of the class centroid in class-term pretrained vectors.
    pub pretrained_signal: f64,
    /// Spurious tokens per class, present only in training documents.
    pub spurious_per_class: usize,
    /// Probability that a training document carries one of its class's
    /// spurious tokens at each draw.
    pub spurious_rate: f64,
    /// Fraction of class and noise terms removed from training documents
    /// (they still occur in test documents and have pretrained vectors).
    pub held_out_fraction: f64,
    /// Pretrained vectors for terms that never occur in the corpus.
    pub distractor_vectors: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_train: 4000,
            n_test: 1000,
            n_classes: 20,
            terms_per_class: 60,
            noise_terms: 400,
            noise_fraction: 0.3,
            confusion: 0.0,
            min_len: 20,
            max_len: 60,
            multilabel: false,
            pretrained_dim: 100,
            pretrained_signal: 0.5,
            spurious_per_class: 0,
            spurious_rate: 0.0,
            held_out_fraction: 0.0,
            distractor_vectors: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub train: Vec<Document>,
    pub test: Vec<Document>,
    pub pretrained: PretrainedEmbeddings,
    pub held_out_terms: Vec<String>,
    pub spurious_terms: Vec<String>,
}

fn letters(mut i: usize) -> String {
    let mut s = vec![b'a'; 3];
    for slot in s.iter_mut().rev() {
        *slot = b'a' + (i % 26) as u8;
        i /= 26;
    }
    String::from_utf8(s).expect("ascii")
}

pub fn class_name(c: usize) -> String {
    format!("class{}", letters(c))
}

fn class_term(c: usize, k: usize, per_class: usize) -> String {
    format!("qx{}", letters(c * per_class + k))
}

fn noise_term(k: usize) -> String {
    format!("zx{}", letters(k))
}

fn spurious_term(c: usize, k: usize, per_class: usize) -> String {
    format!("xq{}", letters(c * per_class + k))
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_simple_fn(dim, || rng.sample::<f64, _>(StandardNormal) * scale)
}

fn validate(cfg: &SyntheticConfig) -> Result<()> {
    let terms = cfg.n_classes * cfg.terms_per_class.max(cfg.spurious_per_class);
    if cfg.n_classes < 2 || cfg.terms_per_class == 0 || cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Config(
            "synthetic corpus needs ≥2 classes, class terms and a valid length range".into(),
        ));
    }
    if terms > 26usize.pow(3) || cfg.noise_terms > 26usize.pow(3) || cfg.distractor_vectors > 26usize.pow(3) {
        return Err(Error::Config("synthetic term budget exceeds the name space".into()));
    }
    for f in [
        cfg.noise_fraction,
        cfg.confusion,
        cfg.spurious_rate,
        cfg.held_out_fraction,
    ] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Config("synthetic fractions must lie in [0, 1]".into()));
        }
    }
    if cfg.noise_fraction > 0.0 && cfg.noise_terms == 0 {
        return Err(Error::Config("noise fraction needs noise terms".into()));
    }
    Ok(())
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = cfg.n_classes;
    let vocab: Vec<Vec<String>> = (0..m)
        .map(|c| {
            (0..cfg.terms_per_class)
                .map(|k| class_term(c, k, cfg.terms_per_class))
                .collect()
        })
        .collect();
    let noise: Vec<String> = (0..cfg.noise_terms).map(noise_term).collect();
    let spurious: Vec<Vec<String>> = (0..m)
        .map(|c| {
            (0..cfg.spurious_per_class)
                .map(|k| spurious_term(c, k, cfg.spurious_per_class))
                .collect()
        })
        .collect();

    let mut candidates: Vec<&String> = vocab.iter().flatten().chain(&noise).collect();
    candidates.shuffle(&mut rng);
    let n_held = (candidates.len() as f64 * cfg.held_out_fraction).round() as usize;
    let held_out: BTreeSet<String> = candidates[..n_held].iter().map(|s| s.to_string()).collect();

    let draw_doc = |rng: &mut ChaCha8Rng, labels: &[usize], train: bool| -> Vec<String> {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let mut tokens = Vec::with_capacity(len + 1);
        while tokens.len() < len {
            let term = if rng.gen_bool(cfg.noise_fraction) {
                noise.choose(rng).expect("noise terms exist").clone()
            } else {
                let mut c = *labels.choose(rng).expect("labels");
                if rng.gen_bool(cfg.confusion) {
                    c = rng.gen_range(0..m);
                }
                vocab[c].choose(rng).expect("class terms").clone()
            };
            if train && held_out.contains(&term) {
                continue;
            }
            tokens.push(term);
        }
        if train && cfg.spurious_per_class > 0 && rng.gen_bool(cfg.spurious_rate) {
            let c = *labels.choose(rng).expect("labels");
            tokens.push(spurious[c].choose(rng).expect("spurious terms").clone());
        }
        tokens
    };

    let make_docs = |rng: &mut ChaCha8Rng, n: usize, train: bool, prefix: &str| -> Vec<Document> {
        (0..n)
            .map(|i| {
                let labels: Vec<usize> = if cfg.multilabel {
                    let k = rng.gen_range(1..=3.min(m));
                    let mut ls: Vec<usize> = (0..m).collect::<Vec<_>>().choose_multiple(rng, k).copied().collect();
                    ls.sort_unstable();
                    ls
                } else {
                    vec![i % m]
                };
                let tokens = draw_doc(rng, &labels, train);
                Document {
                    id: format!("{prefix}{i:06}"),
                    text: tokens.join(" "),
                    labels: labels.iter().map(|&c| class_name(c)).collect(),
                }
            })
            .collect()
    };
    let mut train = make_docs(&mut rng, cfg.n_train, true, "tr");
    let test = make_docs(&mut rng, cfg.n_test, false, "te");
    train.shuffle(&mut rng);

    let d = cfg.pretrained_dim;
    let scale = 1.0 / (d as f64).sqrt();
    let centroids: Vec<Array1<f64>> = (0..m).map(|_| gaussian(&mut rng, d, scale)).collect();
    let mut rows = Vec::new();
    for (c, terms) in vocab.iter().enumerate() {
        for t in terms {
            let v = &centroids[c] * cfg.pretrained_signal + gaussian(&mut rng, d, scale);
            rows.push((t.clone(), v.to_vec()));
        }
    }
    for t in noise.iter().chain(spurious.iter().flatten()) {
        rows.push((t.clone(), gaussian(&mut rng, d, scale).to_vec()));
    }
    for k in 0..cfg.distractor_vectors {
        rows.push((format!("vx{}", letters(k)), gaussian(&mut rng, d, scale).to_vec()));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let pretrained = PretrainedEmbeddings::from_rows("synthetic", rows)?;
    Ok(SyntheticCorpus {
        train,
        test,
        pretrained,
        held_out_terms: held_out.into_iter().collect(),
        spurious_terms: spurious.into_iter().flatten().collect(),
    })
}

/// Writes vectors in the whitespace text format, six decimals.
pub fn write_pretrained_text<W: Write>(u: &PretrainedEmbeddings, mut w: W) -> Result<()> {
    for term in u.terms() {
        w.write_all(term.as_bytes())?;
        for x in u.get(term).expect("listed term") {
            write!(w, " {x:.6}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Random count matrix (`n × v`, about `nnz_per_row` entries per row) and
/// single-label indicator matrix (`n × m`), for timing runs.
pub fn random_counts(n: usize, v: usize, m: usize, nnz_per_row: usize, seed: u64) -> (CsrMatrix, CsrMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut cols: Vec<usize> = (0..nnz_per_row).map(|_| rng.gen_range(0..v)).collect();
        cols.sort_unstable();
        cols.dedup();
        rows.push(cols.into_iter().map(|c| (c, rng.gen_range(1..4) as f64)).collect());
        labels.push(vec![(i % m, 1.0)]);
    }
    (
        CsrMatrix::from_sorted_rows(v, rows).expect("sorted, in range"),
        CsrMatrix::from_sorted_rows(m, labels).expect("sorted, in range"),
    )
}

/// Two-class corpus whose classes use disjoint vocabularies.
pub fn separable_corpus(n_train: usize, n_test: usize, seed: u64) -> SyntheticCorpus {
    generate(&SyntheticConfig {
        n_train,
        n_test,
        n_classes: 2,
        terms_per_class: 20,
        noise_terms: 0,
        noise_fraction: 0.0,
        min_len: 5,
        max_len: 15,
        pretrained_dim: 8,
        distractor_vectors: 0,
        seed,
        ..Default::default()
    })
    .expect("valid configuration")
}

/// `n × v` dense matrix of standard normals, for property tests.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}
