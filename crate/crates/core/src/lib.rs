//! Supervised word-class embeddings (WCEs) for text classification.
//!
//! The pipeline runs in stages, each exposed as its own module:
//!
//! * [`corpus`]: tokenization, vocabulary, label index, encoding
//! * [`weighting`]: tfidf and column L1 normalization over [`sparse::CsrMatrix`]
//! * [`wce`]: term-class correlation, column standardization, PCA projection
//! * [`embeddings`]: pretrained vectors, the concatenated embedding layer
//! * [`classifier`]: mean-pooling classifier with supervised dropout, plus a
//!   logistic-regression baseline over projected documents
//! * [`eval`]: F1 family and paired significance testing
//! * [`oov`]: regression from pretrained vectors to WCEs
//! * [`experiment`]: seeded sweeps and projector export

pub mod artifact;
pub mod classifier;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod nn;
pub mod oov;
pub mod sparse;
pub mod synthetic;
pub mod wce;
pub mod weighting;

pub use error::{Error, Result};
