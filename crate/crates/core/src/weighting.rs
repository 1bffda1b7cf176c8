//! Bag-of-words weighting: smooth-idf tfidf with L2 row normalization, and
//! the column L1 normalization feeding the word-class matrix.

use serde::{Deserialize, Serialize};

use crate::sparse::CsrMatrix;

/// Inverse document frequencies fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tfidf {
    n_docs: usize,
    idf: Vec<f64>,
}

impl Tfidf {
    /// `idf(t) = ln((1 + n) / (1 + df(t))) + 1`.
    pub fn fit(counts: &CsrMatrix) -> Self {
        let n = counts.rows();
        let df = counts.column_counts();
        let idf = df
            .iter()
            .map(|&d| ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        Self { n_docs: n, idf }
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// Weights raw counts by idf and L2-normalizes every nonzero row.
    pub fn transform(&self, counts: &CsrMatrix) -> CsrMatrix {
        assert_eq!(counts.cols(), self.idf.len(), "tfidf fitted on a different vocabulary");
        let norms: Vec<f64> = (0..counts.rows())
            .map(|r| {
                counts
                    .row(r)
                    .map(|(c, v)| (v * self.idf[c]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        counts.map_entries(|r, c, v| v * self.idf[c] / norms[r])
    }
}

pub fn tfidf(counts: &CsrMatrix) -> CsrMatrix {
    Tfidf::fit(counts).transform(counts)
}

/// Scales each column to sum to one; all-zero columns are left untouched.
pub fn l1_normalize_columns(x: &CsrMatrix) -> CsrMatrix {
    let sums = x.column_sums();
    x.map_entries(|_, c, v| if sums[c] != 0.0 { v / sums[c] } else { v })
}

/// Presence/absence indicator matrix.
pub fn binarize(x: &CsrMatrix) -> CsrMatrix {
    x.map_entries(|_, _, _| 1.0)
}
