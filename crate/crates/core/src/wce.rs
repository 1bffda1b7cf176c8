//! Word-class embeddings.
//!
//! A term's WCE is its row of the standardized term-class correlation
//! matrix. Correlation is either the dot product of the column-L1-normalized
//! weighted matrix with the label matrix, or one of three contingency-table
//! measures computed on presence/absence indicators. Each class column is
//! then z-scored over the vocabulary, and codeframes wider than
//! `max_dims` are projected onto their leading principal components.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::weighting::{binarize, l1_normalize_columns};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Dot,
    Ppmi,
    Ig,
    Chi2,
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(Self::Dot),
            "ppmi" => Ok(Self::Ppmi),
            "ig" => Ok(Self::Ig),
            "chi2" => Ok(Self::Chi2),
            other => Err(Error::Config(format!("unknown correlation measure '{other}'"))),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dot => "dot",
            Self::Ppmi => "ppmi",
            Self::Ig => "ig",
            Self::Chi2 => "chi2",
        })
    }
}

/// `A = X1ᵀ · Y` for a column-L1-normalized `X1` (n×v) and binary `Y` (n×m).
pub fn correlate_dot(x1: &CsrMatrix, y: &CsrMatrix) -> Result<Array2<f64>> {
    x1.transpose_dot(y)
}

/// Term-class document counts over the training documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermClassTable {
    /// documents containing the term and labelled with the class
    pub both: u64,
    /// documents containing the term
    pub term: u64,
    /// documents labelled with the class
    pub class: u64,
    pub total: u64,
}

impl TermClassTable {
    /// `[[P(t,c), P(t,¬c)], [P(¬t,c), P(¬t,¬c)]]` by maximum likelihood.
    fn joint(&self) -> [[f64; 2]; 2] {
        let n = self.total as f64;
        let tc = self.both as f64;
        let t_nc = (self.term - self.both) as f64;
        let nt_c = (self.class - self.both) as f64;
        let nt_nc = n - tc - t_nc - nt_c;
        [[tc / n, t_nc / n], [nt_c / n, nt_nc / n]]
    }

    fn degenerate(&self) -> bool {
        self.term == 0 || self.term == self.total || self.class == 0 || self.class == self.total
    }

    pub fn ppmi(&self) -> f64 {
        if self.degenerate() || self.both == 0 {
            return 0.0;
        }
        let p = self.joint();
        let pt = p[0][0] + p[0][1];
        let pc = p[0][0] + p[1][0];
        (p[0][0] / (pt * pc)).ln().max(0.0)
    }

    pub fn information_gain(&self) -> f64 {
        if self.degenerate() {
            return 0.0;
        }
        let p = self.joint();
        let p_term = [p[0][0] + p[0][1], p[1][0] + p[1][1]];
        let p_class = [p[0][0] + p[1][0], p[0][1] + p[1][1]];
        let mut ig = 0.0;
        for (i, row) in p.iter().enumerate() {
            for (j, &pij) in row.iter().enumerate() {
                if pij > 0.0 {
                    ig += pij * (pij / (p_term[i] * p_class[j])).ln();
                }
            }
        }
        ig
    }

    pub fn chi_square(&self) -> f64 {
        if self.degenerate() {
            return 0.0;
        }
        let p = self.joint();
        let pt = p[0][0] + p[0][1];
        let pc = p[0][0] + p[1][0];
        let num = p[0][0] * p[1][1] - p[0][1] * p[1][0];
        self.total as f64 * num * num / (pt * (1.0 - pt) * pc * (1.0 - pc))
    }
}

/// Contingency counts for every (term, class) cell of binarized `x` and `y`.
fn term_class_tables(xbin: &CsrMatrix, y: &CsrMatrix) -> Result<Array2<TermClassTable>> {
    let both = binarize(xbin).transpose_dot(y)?;
    let term_df = binarize(xbin).column_counts();
    let class_df = y.column_counts();
    let total = xbin.rows() as u64;
    Ok(Array2::from_shape_fn(both.dim(), |(i, j)| TermClassTable {
        both: both[[i, j]].round() as u64,
        term: term_df[i] as u64,
        class: class_df[j] as u64,
        total,
    }))
}

fn correlate_tables(xbin: &CsrMatrix, y: &CsrMatrix, f: fn(&TermClassTable) -> f64) -> Result<Array2<f64>> {
    Ok(term_class_tables(xbin, y)?.map(f))
}

pub fn correlate_ppmi(xbin: &CsrMatrix, y: &CsrMatrix) -> Result<Array2<f64>> {
    correlate_tables(xbin, y, TermClassTable::ppmi)
}

pub fn correlate_ig(xbin: &CsrMatrix, y: &CsrMatrix) -> Result<Array2<f64>> {
    correlate_tables(xbin, y, TermClassTable::information_gain)
}

pub fn correlate_chi2(xbin: &CsrMatrix, y: &CsrMatrix) -> Result<Array2<f64>> {
    correlate_tables(xbin, y, TermClassTable::chi_square)
}

/// Column z-scores with their per-column statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub matrix: Array2<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// `s_ij = (a_ij − mean_j) / std_j` with the sample (v−1) standard
/// deviation. Constant columns become all-zero.
pub fn standardize_columns(a: &Array2<f64>) -> Result<Standardized> {
    let v = a.nrows();
    if v < 2 {
        return Err(Error::Insufficient(format!(
            "standardization needs at least 2 rows, got {v}"
        )));
    }
    let mut out = Array2::zeros(a.dim());
    let mut means = Vec::with_capacity(a.ncols());
    let mut stds = Vec::with_capacity(a.ncols());
    for (j, col) in a.axis_iter(Axis(1)).enumerate() {
        let mean = col.sum() / v as f64;
        let first = col[0];
        let constant = col.iter().all(|&x| x == first);
        let std = if constant {
            0.0
        } else {
            (col.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / (v - 1) as f64).sqrt()
        };
        if std > 0.0 {
            let mut target = out.column_mut(j);
            for (o, &x) in target.iter_mut().zip(col.iter()) {
                *o = (x - mean) / std;
            }
        }
        means.push(mean);
        stds.push(std);
    }
    Ok(Standardized {
        matrix: out,
        means,
        stds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// `v × r` scores: centered rows projected onto the components.
    pub projected: Array2<f64>,
    /// `m × r` component directions, one per column.
    pub components: Array2<f64>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub means: Vec<f64>,
}

/// Projects the rows of `s` onto its top `r` principal directions, found by
/// eigendecomposition of the `m × m` column covariance. Components are
/// ordered by decreasing variance and signed so that each one's
/// largest-magnitude loading is positive.
pub fn pca_reduce(s: &Array2<f64>, r: usize) -> Result<PcaProjection> {
    let (v, m) = s.dim();
    if r == 0 || r > v.min(m) {
        return Err(Error::Dimension(format!(
            "cannot keep {r} components of a {v}x{m} matrix"
        )));
    }
    if v < 2 {
        return Err(Error::Insufficient("PCA needs at least 2 rows".into()));
    }
    let means = s.mean_axis(Axis(0)).expect("non-empty");
    let centered = s - &means.view().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (v - 1) as f64;
    let cov = DMatrix::from_fn(m, m, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let total: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0)).sum();

    let mut components = Array2::zeros((m, r));
    let mut explained_variance = Vec::with_capacity(r);
    for (k, &idx) in order.iter().take(r).enumerate() {
        let col = eig.eigenvectors.column(idx);
        let pivot = (0..m)
            .max_by(|&a, &b| {
                col[a]
                    .abs()
                    .partial_cmp(&col[b].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.cmp(&a))
            })
            .expect("m > 0");
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            components[[i, k]] = sign * col[i];
        }
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    let explained_variance_ratio = explained_variance
        .iter()
        .map(|&l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    Ok(PcaProjection {
        projected: centered.dot(&components),
        components,
        explained_variance,
        explained_variance_ratio,
        means: means.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WceConfig {
    pub measure: Measure,
    /// PCA kicks in when the codeframe is wider than this.
    pub max_dims: usize,
}

impl Default for WceConfig {
    fn default() -> Self {
        Self {
            measure: Measure::Dot,
            max_dims: 300,
        }
    }
}

/// Wall-clock cost of the correlation (A) and standardization (S) stages.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WceTimings {
    pub correlate: Duration,
    pub standardize: Duration,
    pub project: Duration,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WceMeta {
    measure: Measure,
    reduced: bool,
    terms: Vec<String>,
    classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordClassMatrix {
    /// `v × r` embedding rows.
    pub matrix: Array2<f64>,
    pub measure: Measure,
    pub reduced: bool,
    /// column means and sample stds of the raw correlation matrix
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub timings: WceTimings,
}

impl WordClassMatrix {
    pub fn dims(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn n_terms(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn row(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.matrix.row(i)
    }

    pub fn to_artifact(&self, terms: &[String], classes: &[String]) -> Result<Artifact> {
        let meta = WceMeta {
            measure: self.measure,
            reduced: self.reduced,
            terms: terms.to_vec(),
            classes: classes.to_vec(),
        };
        let mut art = Artifact::new("wce", &meta)?;
        art.push_matrix("matrix", &self.matrix);
        art.push_vector("means", &self.means);
        art.push_vector("stds", &self.stds);
        Ok(art)
    }

    /// Returns the matrix with its term and class names.
    pub fn from_artifact(art: &Artifact) -> Result<(Self, Vec<String>, Vec<String>)> {
        art.expect_kind("wce")?;
        let meta: WceMeta = art.meta()?;
        let matrix = art.matrix("matrix")?;
        if matrix.nrows() != meta.terms.len() {
            return Err(Error::Format("wce term list does not match matrix rows".into()));
        }
        let wce = Self {
            matrix,
            measure: meta.measure,
            reduced: meta.reduced,
            means: art.vector("means")?,
            stds: art.vector("stds")?,
            timings: WceTimings::default(),
        };
        Ok((wce, meta.terms, meta.classes))
    }

    pub fn save(&self, path: &Path, terms: &[String], classes: &[String]) -> Result<()> {
        self.to_artifact(terms, classes)?.save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<String>, Vec<String>)> {
        Self::from_artifact(&Artifact::load(path)?)
    }

    /// One line per term: the term, then its `r` values with six decimals.
    pub fn write_text<W: Write>(&self, mut w: W, terms: &[String]) -> Result<()> {
        if terms.len() != self.n_terms() {
            return Err(Error::Dimension(format!(
                "{} terms for {} WCE rows",
                terms.len(),
                self.n_terms()
            )));
        }
        for (term, row) in terms.iter().zip(self.matrix.rows()) {
            w.write_all(term.as_bytes())?;
            for x in row {
                write!(w, " {x:.6}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Class index with the largest WCE value in row `i` (pre-PCA only).
    pub fn top_class(&self, i: usize) -> usize {
        argmax(self.matrix.row(i).iter().copied())
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Raw correlation matrix for `measure` on the training split.
pub fn correlate(x: &CsrMatrix, y: &CsrMatrix, measure: Measure) -> Result<Array2<f64>> {
    match measure {
        Measure::Dot => correlate_dot(&l1_normalize_columns(x), y),
        Measure::Ppmi => correlate_ppmi(&binarize(x), y),
        Measure::Ig => correlate_ig(&binarize(x), y),
        Measure::Chi2 => correlate_chi2(&binarize(x), y),
    }
}

/// Full WCE pipeline on weighted training documents `x` (n×v) and labels
/// `y` (n×m): correlate, standardize, then PCA iff `m > max_dims`.
pub fn compute_wce(x: &CsrMatrix, y: &CsrMatrix, cfg: &WceConfig) -> Result<WordClassMatrix> {
    if cfg.max_dims == 0 {
        return Err(Error::Config("max_dims must be at least 1".into()));
    }
    if x.rows() != y.rows() {
        return Err(Error::Dimension(format!(
            "{} documents in X but {} in Y",
            x.rows(),
            y.rows()
        )));
    }
    let t0 = Instant::now();
    let a = correlate(x, y, cfg.measure)?;
    let t1 = Instant::now();
    let st = standardize_columns(&a)?;
    let t2 = Instant::now();
    let m = y.cols();
    let (matrix, reduced) = if m > cfg.max_dims {
        (pca_reduce(&st.matrix, cfg.max_dims)?.projected, true)
    } else {
        (st.matrix, false)
    };
    let t3 = Instant::now();
    Ok(WordClassMatrix {
        matrix,
        measure: cfg.measure,
        reduced,
        means: st.means,
        stds: st.stds,
        timings: WceTimings {
            correlate: t1 - t0,
            standardize: t2 - t1,
            project: t3 - t2,
        },
    })
}

/// Column means of `m`, used by tests and audits.
pub fn column_means(m: &Array2<f64>) -> Array1<f64> {
    m.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(m.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, n: usize, v: usize, density: f64) -> Array2<f64> {
        Array2::from_shape_fn((n, v), |_| {
            if rng.gen_bool(density) {
                rng.gen_range(0.1..3.0)
            } else {
                0.0
            }
        })
    }

    fn random_labels(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, m), |_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 })
    }

    #[test]
    fn dot_examples() {
        let x1 = CsrMatrix::from_dense(&array![[1.0], [0.0]]);
        let y = CsrMatrix::from_dense(&array![[1.0, 0.0], [0.0, 1.0]]);
        let a = correlate_dot(&x1, &y).unwrap();
        assert_eq!(a, array![[1.0, 0.0]]);
    }

    #[test]
    fn dot_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_sparse(&mut rng, 8, 5, 0.5);
        let y = random_labels(&mut rng, 8, 3);
        let x1 = l1_normalize_columns(&CsrMatrix::from_dense(&x)).to_dense();
        let a = correlate_dot(&CsrMatrix::from_dense(&x1), &CsrMatrix::from_dense(&y)).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut want = 0.0;
                for k in 0..8 {
                    want += x1[[k, i]] * y[[k, j]];
                }
                assert!((a[[i, j]] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dot_shape_mismatch() {
        let x = CsrMatrix::zeros(3, 2);
        let y = CsrMatrix::zeros(4, 2);
        assert!(matches!(correlate_dot(&x, &y), Err(Error::Dimension(_))));
    }

    #[test]
    fn chi_square_perfect_association() {
        let t = TermClassTable {
            both: 5,
            term: 5,
            class: 5,
            total: 10,
        };
        assert!((t.chi_square() - 10.0).abs() < 1e-12);
        // IG of a perfectly informative binary split is ln 2
        assert!((t.information_gain() - 2f64.ln()).abs() < 1e-12);
        assert!((t.ppmi() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn independence_gives_zero() {
        // P(t)=1/2, P(c)=1/2, P(t,c)=1/4
        let t = TermClassTable {
            both: 2,
            term: 4,
            class: 4,
            total: 8,
        };
        assert_eq!(t.ppmi(), 0.0);
        assert!(t.chi_square().abs() < 1e-15);
        assert!(t.information_gain().abs() < 1e-15);
    }

    #[test]
    fn degenerate_marginals_give_zero() {
        for t in [
            TermClassTable {
                both: 0,
                term: 0,
                class: 3,
                total: 6,
            },
            TermClassTable {
                both: 3,
                term: 6,
                class: 3,
                total: 6,
            },
            TermClassTable {
                both: 2,
                term: 2,
                class: 6,
                total: 6,
            },
        ] {
            assert_eq!(t.ppmi(), 0.0);
            assert_eq!(t.information_gain(), 0.0);
            assert_eq!(t.chi_square(), 0.0);
        }
    }

    #[test]
    fn standardize_examples() {
        let s = standardize_columns(&array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]).unwrap();
        assert_eq!(s.matrix.column(0).to_vec(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(s.matrix.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(s.means, vec![2.0, 5.0]);
        assert_eq!(s.stds, vec![1.0, 0.0]);
        assert!(standardize_columns(&array![[1.0, 2.0]]).is_err());
    }

    #[test]
    fn near_constant_float_column_is_zero() {
        let s = standardize_columns(&array![[0.1], [0.1], [0.1]]).unwrap();
        assert_eq!(s.matrix.column(0).to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn class_permutation_permutes_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = CsrMatrix::from_dense(&random_sparse(&mut rng, 30, 12, 0.3));
        let y = random_labels(&mut rng, 30, 4);
        let perm = [2, 0, 3, 1];
        let y_perm = Array2::from_shape_fn((30, 4), |(k, j)| y[[k, perm[j]]]);
        for measure in [Measure::Dot, Measure::Ppmi, Measure::Ig, Measure::Chi2] {
            let cfg = WceConfig { measure, max_dims: 300 };
            let s = compute_wce(&x, &CsrMatrix::from_dense(&y), &cfg).unwrap().matrix;
            let sp = compute_wce(&x, &CsrMatrix::from_dense(&y_perm), &cfg).unwrap().matrix;
            for (j, &pj) in perm.iter().enumerate() {
                assert_eq!(sp.column(j), s.column(pj));
            }
        }
    }

    #[test]
    fn binary_dot_is_proportional_to_cooccurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_sparse(&mut rng, 25, 10, 0.4).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let y = random_labels(&mut rng, 25, 3);
        let a = correlate_dot(
            &l1_normalize_columns(&CsrMatrix::from_dense(&x)),
            &CsrMatrix::from_dense(&y),
        )
        .unwrap();
        for i in 0..10 {
            let df: f64 = x.column(i).sum();
            for j in 0..3 {
                let co = (0..25).filter(|&k| x[[k, i]] > 0.0 && y[[k, j]] > 0.0).count() as f64;
                let want = if df > 0.0 { co / df } else { 0.0 };
                assert!((a[[i, j]] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pca_full_rank_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = Array2::from_shape_fn((40, 6), |_| rng.gen_range(-1.0..1.0));
        let p = pca_reduce(&s, 6).unwrap();
        let vvt = p.components.dot(&p.components.t());
        let recon = s.dot(&vvt);
        for (a, b) in recon.iter().zip(s.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        let vtv = p.components.t().dot(&p.components);
        for ((i, j), x) in vtv.indexed_iter() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((x - want).abs() < 1e-8);
        }
        for w in p.explained_variance.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn pca_rank_one_explains_everything() {
        let u = Array1::from_shape_fn(30, |i| (i as f64 * 0.37).sin() + 0.1 * i as f64);
        let w = array![1.0, -2.0, 0.5, 3.0];
        let s = u.view().insert_axis(Axis(1)).dot(&w.view().insert_axis(Axis(0)));
        let p = pca_reduce(&s, 1).unwrap();
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-10);
        // sign convention: loading with the largest magnitude is positive
        assert!(p.components[[3, 0]] > 0.0);
    }

    #[test]
    fn pca_rejects_too_many_components() {
        let s = Array2::<f64>::zeros((5, 3));
        assert!(matches!(pca_reduce(&s, 4), Err(Error::Dimension(_))));
        assert!(matches!(pca_reduce(&s, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn pca_threshold_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = CsrMatrix::from_dense(&random_sparse(&mut rng, 40, 50, 0.3));
        let y = CsrMatrix::from_dense(&random_labels(&mut rng, 40, 20));
        let w = compute_wce(&x, &y, &WceConfig::default()).unwrap();
        assert!(!w.reduced);
        assert_eq!(w.dims(), 20);
        let w = compute_wce(
            &x,
            &y,
            &WceConfig {
                measure: Measure::Dot,
                max_dims: 19,
            },
        )
        .unwrap();
        assert!(w.reduced);
        assert_eq!(w.dims(), 19);
        let w = compute_wce(
            &x,
            &y,
            &WceConfig {
                measure: Measure::Dot,
                max_dims: 20,
            },
        )
        .unwrap();
        assert!(!w.reduced);
    }

    #[test]
    fn large_codeframe_reduces_to_max_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 500;
        let x = CsrMatrix::from_dense(&random_sparse(&mut rng, n, 600, 0.05));
        let y = CsrMatrix::from_dense(&random_labels(&mut rng, n, 400));
        let w = compute_wce(&x, &y, &WceConfig::default()).unwrap();
        assert!(w.reduced);
        assert_eq!(w.matrix.dim(), (600, 300));
    }

    #[test]
    fn artifact_roundtrip() {
        let w = WordClassMatrix {
            matrix: array![[1.0, -1.0], [0.5, 0.25]],
            measure: Measure::Chi2,
            reduced: false,
            means: vec![0.1, 0.2],
            stds: vec![1.0, 2.0],
            timings: WceTimings::default(),
        };
        let terms = vec!["a".to_string(), "b".to_string()];
        let classes = vec!["x".to_string(), "y".to_string()];
        let art = w.to_artifact(&terms, &classes).unwrap();
        let (back, t, c) = WordClassMatrix::from_artifact(&art).unwrap();
        assert_eq!(back, w);
        assert_eq!((t, c), (terms.clone(), classes));

        let mut text = Vec::new();
        w.write_text(&mut text, &terms).unwrap();
        assert_eq!(
            String::from_utf8(text).unwrap(),
            "a 1.000000 -1.000000\nb 0.500000 0.250000\n"
        );
        assert!(w.write_text(Vec::new(), &terms[..1]).is_err());
    }
}
