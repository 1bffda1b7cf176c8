use ndarray::Array2;
use proptest::prelude::*;

use wce_core::classifier::ModelConfig;
use wce_core::corpus::{build_vocabulary, CorpusConfig, LabeledCorpus};
use wce_core::embeddings::{
    build_embedding_matrix, project_documents, read_pretrained, EmbeddingConfig, EmbeddingMatrix, VariantSpec,
};
use wce_core::experiment::{corpus_embeddings, corpus_wce, train_and_evaluate};
use wce_core::oov::{impute_oov, train_from_embeddings, RegressorConfig};
use wce_core::sparse::CsrMatrix;
use wce_core::synthetic::{generate, separable_corpus, SyntheticConfig};
use wce_core::wce::{Measure, WceConfig, WordClassMatrix};

#[test]
fn separable_corpus_trains_to_high_validation_f1() {
    let synth = separable_corpus(400, 100, 3);
    let corpus = LabeledCorpus::build(
        &synth.train,
        &synth.test,
        &CorpusConfig {
            min_df: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let wce = corpus_wce(&corpus, &WceConfig::default()).unwrap();
    let spec: VariantSpec = "pretrained+wce-static".parse().unwrap();
    let e = corpus_embeddings(
        &corpus,
        Some(&synth.pretrained),
        Some(&wce),
        &EmbeddingConfig {
            variant: spec,
            random_dim: 0,
            seed: 3,
        },
    )
    .unwrap();
    let cfg = ModelConfig {
        learning_rate: 1e-2,
        batch_size: 32,
        seed: 3,
        ..Default::default()
    };
    let out = train_and_evaluate(&corpus, e, &cfg).unwrap();
    let losses: Vec<f64> = out.log.epochs.iter().take(5).map(|r| r.tr_loss).collect();
    assert_eq!(losses.len(), 5);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    assert!(out.best_validation_macro_f1() >= 0.95);
    assert!(out.test.macro_f1 >= 0.95);
}

#[test]
fn every_variant_satisfies_row_invariants() {
    let synth = generate(&SyntheticConfig {
        n_train: 200,
        n_test: 60,
        n_classes: 3,
        pretrained_dim: 6,
        held_out_fraction: 0.2,
        ..Default::default()
    })
    .unwrap();
    let corpus = LabeledCorpus::build(
        &synth.train,
        &synth.test,
        &CorpusConfig {
            min_df: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let wce = corpus_wce(
        &corpus,
        &WceConfig {
            measure: Measure::Chi2,
            max_dims: 300,
        },
    )
    .unwrap();
    for spec in VariantSpec::ALL {
        let cfg = EmbeddingConfig {
            variant: spec,
            random_dim: 5,
            seed: 1,
        };
        let e = corpus_embeddings(&corpus, Some(&synth.pretrained), Some(&wce), &cfg).unwrap();
        e.check_invariants().unwrap_or_else(|err| panic!("{spec}: {err}"));
        assert!(e.rows() >= corpus.vocabulary.len(), "{spec}");
        if spec.needs_pretrained() {
            // held-out test terms come in with their pretrained vectors
            assert!(e.rows() > e.n_vocab(), "{spec}");
        }
    }
}

#[test]
fn imputation_keeps_invariants_and_round_trips() {
    let synth = generate(&SyntheticConfig {
        n_train: 300,
        n_test: 80,
        n_classes: 4,
        pretrained_dim: 8,
        held_out_fraction: 0.1,
        ..Default::default()
    })
    .unwrap();
    let corpus = LabeledCorpus::build(
        &synth.train,
        &synth.test,
        &CorpusConfig {
            min_df: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let wce = corpus_wce(&corpus, &WceConfig::default()).unwrap();
    let e = corpus_embeddings(
        &corpus,
        Some(&synth.pretrained),
        Some(&wce),
        &EmbeddingConfig::default(),
    )
    .unwrap();
    let (reg, _) = train_from_embeddings(
        &e,
        &RegressorConfig {
            max_epochs: 20,
            ..Default::default()
        },
    )
    .unwrap();
    let imputed = impute_oov(&e, &reg).unwrap();
    imputed.check_invariants().unwrap();
    let n = (0..imputed.rows()).filter(|&i| imputed.wce_imputed(i)).count();
    assert_eq!(n, imputed.rows() - imputed.n_vocab());
    assert_eq!(
        imputed.matrix().slice(ndarray::s![..e.n_vocab(), ..]),
        e.matrix().slice(ndarray::s![..e.n_vocab(), ..])
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("E.bin");
    imputed.save(&path).unwrap();
    assert_eq!(EmbeddingMatrix::load(&path).unwrap(), imputed);
}

#[test]
fn files_round_trip() {
    let synth = separable_corpus(60, 20, 0);
    let corpus = LabeledCorpus::build(
        &synth.train,
        &synth.test,
        &CorpusConfig {
            min_df: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.save(dir.path()).unwrap();
    assert_eq!(LabeledCorpus::load(dir.path()).unwrap(), corpus);

    let wce = corpus_wce(
        &corpus,
        &WceConfig {
            measure: Measure::Ig,
            max_dims: 300,
        },
    )
    .unwrap();
    let path = dir.path().join("wce.bin");
    wce.save(&path, corpus.vocabulary.terms(), corpus.labels.names())
        .unwrap();
    let (back, terms, classes) = WordClassMatrix::load(&path).unwrap();
    assert_eq!(back.matrix, wce.matrix);
    assert_eq!(terms, corpus.vocabulary.terms());
    assert_eq!(classes, corpus.labels.names());

    // text export parses back as pretrained vectors within the printed precision
    let e = corpus_embeddings(
        &corpus,
        Some(&synth.pretrained),
        Some(&wce),
        &EmbeddingConfig::default(),
    )
    .unwrap();
    let mut text = Vec::new();
    e.write_text(&mut text, 0..e.dim()).unwrap();
    let parsed = read_pretrained(text.as_slice(), "export", |_| true).unwrap();
    for (row, term) in e.terms().iter().enumerate() {
        let v = parsed.get(term).unwrap();
        for (a, b) in v.iter().zip(e.matrix().row(row)) {
            assert!((a - b).abs() <= 5e-7 + 1e-15 * b.abs());
        }
    }
}

fn embedding_for(v: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let names: Vec<String> = (0..v).map(|j| format!("w{j:03}")).collect();
    let vocab = build_vocabulary(&[names], 1).unwrap();
    let cfg = EmbeddingConfig {
        variant: "random".parse().unwrap(),
        random_dim: dim,
        seed,
    };
    build_embedding_matrix(&vocab, &[], None, None, &cfg).unwrap()
}

proptest! {
    #[test]
    fn projection_is_linear(
        seed in 0u64..1000,
        n in 1usize..8,
        v in 2usize..12,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let e = embedding_for(v, 4, seed);
        let x = wce_core::synthetic::gaussian_matrix(n, v, seed);
        let z = wce_core::synthetic::gaussian_matrix(n, v, seed + 1);
        let combo: Array2<f64> = &x * a + &z * b;
        let lhs = project_documents(&CsrMatrix::from_dense(&combo), &e).unwrap();
        let px = project_documents(&CsrMatrix::from_dense(&x), &e).unwrap();
        let pz = project_documents(&CsrMatrix::from_dense(&z), &e).unwrap();
        let rhs = px * a + pz * b;
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((l - r).abs() < 1e-10);
        }
    }
}
