//! Pretrained word vectors and the concatenated embedding layer
//! `E = [U ⊕ S]`.
//!
//! Rows of an [`EmbeddingMatrix`] are the training vocabulary (same order as
//! [`Vocabulary`]) followed by extra out-of-vocabulary terms that have a
//! pretrained vector. Columns form two spans: the first holds pretrained
//! (or, for the `Random` variant, random) vectors, the second holds WCEs
//! (or random stand-ins of the same width).

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::wce::WordClassMatrix;

/// Half-width of the uniform range for random spans.
pub const RANDOM_INIT_SCALE: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct PretrainedEmbeddings {
    source: String,
    terms: Vec<String>,
    vectors: Array2<f64>,
    index: HashMap<String, usize>,
}

impl PretrainedEmbeddings {
    pub fn from_rows(source: &str, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dim = rows.first().map_or(0, |(_, v)| v.len());
        let mut terms = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        let mut index = HashMap::new();
        for (term, v) in rows {
            if v.len() != dim {
                return Err(Error::Dimension(format!(
                    "vector for '{term}' has {} entries, expected {dim}",
                    v.len()
                )));
            }
            if index.contains_key(&term) {
                continue;
            }
            index.insert(term.clone(), terms.len());
            terms.push(term);
            data.extend(v);
        }
        let vectors = Array2::from_shape_vec((terms.len(), dim), data).map_err(|e| Error::Dimension(e.to_string()))?;
        Ok(Self {
            source: source.to_string(),
            terms,
            vectors,
            index,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn get(&self, term: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(term).map(|&i| self.vectors.row(i))
    }
}

/// Reads whitespace-separated `token v1 .. vq` lines. The dimension comes
/// from the first line (or from a word2vec-style `count dim` header); each
/// later line splits its last `q` fields off as the vector and keeps the
/// remainder, rejoined with single spaces, as the token. Only tokens for
/// which `keep` holds are retained.
pub fn read_pretrained<R: BufRead>(
    reader: R,
    source: &str,
    keep: impl Fn(&str) -> bool,
) -> Result<PretrainedEmbeddings> {
    let mut dim: Option<usize> = None;
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let q = match dim {
            Some(q) => q,
            None => {
                if fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok()) {
                    dim = Some(fields[1].parse().expect("checked"));
                    continue;
                }
                if fields.len() < 2 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "first line holds no vector".into(),
                    });
                }
                dim = Some(fields.len() - 1);
                fields.len() - 1
            }
        };
        if fields.len() < q + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {q} values after the token, found {}", fields.len() - 1),
            });
        }
        let split = fields.len() - q;
        let token = fields[..split].join(" ");
        if !keep(&token) {
            continue;
        }
        let vector = fields[split..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: format!("'{f}' is not a finite number"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((token, vector));
    }
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "no pretrained vector in '{source}' matches the requested terms"
        )));
    }
    PretrainedEmbeddings::from_rows(source, rows)
}

pub fn load_pretrained(path: &Path, keep: impl Fn(&str) -> bool) -> Result<PretrainedEmbeddings> {
    let f = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    read_pretrained(BufReader::new(f), &path.display().to_string(), keep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Random,
    Pretrained,
    PretrainedRandom,
    PretrainedWce,
}

/// A variant together with whether its embedding layer is fine-tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VariantSpec {
    pub variant: Variant,
    pub trainable: bool,
}

impl VariantSpec {
    pub const ALL: [VariantSpec; 6] = [
        VariantSpec {
            variant: Variant::Random,
            trainable: true,
        },
        VariantSpec {
            variant: Variant::Pretrained,
            trainable: false,
        },
        VariantSpec {
            variant: Variant::Pretrained,
            trainable: true,
        },
        VariantSpec {
            variant: Variant::PretrainedRandom,
            trainable: true,
        },
        VariantSpec {
            variant: Variant::PretrainedWce,
            trainable: false,
        },
        VariantSpec {
            variant: Variant::PretrainedWce,
            trainable: true,
        },
    ];

    pub fn new(variant: Variant, trainable: bool) -> Result<Self> {
        let spec = Self { variant, trainable };
        if Self::ALL.contains(&spec) {
            Ok(spec)
        } else {
            Err(Error::Config(format!("variant '{variant:?}' cannot be static")))
        }
    }

    pub fn needs_pretrained(&self) -> bool {
        self.variant != Variant::Random
    }

    pub fn needs_wce(&self) -> bool {
        matches!(self.variant, Variant::PretrainedWce | Variant::PretrainedRandom)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "pretrained" => Ok(Self::Pretrained),
            "pretrained+random" => Ok(Self::PretrainedRandom),
            "pretrained+wce" => Ok(Self::PretrainedWce),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Pretrained => "pretrained",
            Self::PretrainedRandom => "pretrained+random",
            Self::PretrainedWce => "pretrained+wce",
        })
    }
}

impl FromStr for VariantSpec {
    type Err = Error;

    /// Accepts the six names `random`, `pretrained-static`,
    /// `pretrained-trainable`, `pretrained+random`, `pretrained+wce-static`
    /// and `pretrained+wce-trainable`.
    fn from_str(s: &str) -> Result<Self> {
        let (base, trainable) = if let Some(b) = s.strip_suffix("-static") {
            (b, false)
        } else if let Some(b) = s.strip_suffix("-trainable") {
            (b, true)
        } else {
            (s, true)
        };
        let variant: Variant = base.parse()?;
        if matches!(variant, Variant::Pretrained | Variant::PretrainedWce) && base == s {
            return Err(Error::Config(format!(
                "variant '{s}' needs a -static or -trainable suffix"
            )));
        }
        Self::new(variant, trainable)
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.variant {
            Variant::Random | Variant::PretrainedRandom => write!(f, "{}", self.variant),
            _ => write!(
                f,
                "{}-{}",
                self.variant,
                if self.trainable { "trainable" } else { "static" }
            ),
        }
    }
}

impl Serialize for VariantSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VariantSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanKind {
    Pretrained,
    Wce,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub kind: Option<SpanKind>,
    pub width: usize,
    pub trainable: bool,
}

impl Span {
    const EMPTY: Span = Span {
        kind: None,
        width: 0,
        trainable: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub variant: VariantSpec,
    /// Width of the standalone random variant.
    pub random_dim: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            variant: VariantSpec {
                variant: Variant::PretrainedWce,
                trainable: false,
            },
            random_dim: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EmbeddingMeta {
    variant: VariantSpec,
    terms: Vec<String>,
    n_vocab: usize,
    first: Span,
    second: Span,
    has_pretrained: Vec<bool>,
    has_wce: Vec<bool>,
    wce_imputed: Vec<bool>,
    classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    meta: EmbeddingMeta,
    index: HashMap<String, usize>,
    matrix: Array2<f64>,
}

impl EmbeddingMatrix {
    fn from_parts(meta: EmbeddingMeta, matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() != meta.terms.len() || matrix.ncols() != meta.first.width + meta.second.width {
            return Err(Error::Dimension(
                "embedding matrix shape disagrees with its metadata".into(),
            ));
        }
        let index = meta.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self { meta, index, matrix })
    }

    pub fn variant(&self) -> VariantSpec {
        self.meta.variant
    }

    /// Same matrix under another trainability setting of its own variant.
    pub fn with_variant(mut self, spec: VariantSpec) -> Result<Self> {
        if spec.variant != self.meta.variant.variant {
            return Err(Error::Config(format!(
                "embeddings were built for {}, not {spec}",
                self.meta.variant
            )));
        }
        let spec = VariantSpec::new(spec.variant, spec.trainable)?;
        if matches!(spec.variant, Variant::Pretrained | Variant::PretrainedWce) {
            self.meta.first.trainable = spec.trainable;
            if self.meta.second.width > 0 {
                self.meta.second.trainable = spec.trainable;
            }
        }
        self.meta.variant = spec;
        Ok(self)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Width `q` of the first span.
    pub fn first_dim(&self) -> usize {
        self.meta.first.width
    }

    /// Width `r` of the second (supervised or stand-in) span.
    pub fn second_dim(&self) -> usize {
        self.meta.second.width
    }

    pub fn first_span(&self) -> Span {
        self.meta.first
    }

    pub fn second_span(&self) -> Span {
        self.meta.second
    }

    /// Number of leading rows that form the training vocabulary.
    pub fn n_vocab(&self) -> usize {
        self.meta.n_vocab
    }

    pub fn terms(&self) -> &[String] {
        &self.meta.terms
    }

    pub fn classes(&self) -> &[String] {
        &self.meta.classes
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn has_pretrained(&self, row: usize) -> bool {
        self.meta.has_pretrained[row]
    }

    pub fn has_wce(&self, row: usize) -> bool {
        self.meta.has_wce[row]
    }

    pub fn wce_imputed(&self, row: usize) -> bool {
        self.meta.wce_imputed[row]
    }

    /// Id used for tokens with no row.
    pub fn unk_id(&self) -> usize {
        self.rows()
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.get(t.as_ref()).unwrap_or(self.unk_id()))
            .collect()
    }

    pub fn first_part(&self, row: usize) -> ArrayView1<'_, f64> {
        self.matrix.slice(s![row, ..self.first_dim()])
    }

    pub fn second_part(&self, row: usize) -> ArrayView1<'_, f64> {
        self.matrix.slice(s![row, self.first_dim()..])
    }

    /// Returns a copy with each listed row's WCE span replaced and flagged as
    /// imputed.
    pub(crate) fn with_imputed_rows(&self, rows: &[(usize, Vec<f64>)]) -> Self {
        let mut out = self.clone();
        let q = self.first_dim();
        for (row, values) in rows {
            out.matrix
                .slice_mut(s![*row, q..])
                .iter_mut()
                .zip(values)
                .for_each(|(dst, &v)| *dst = v);
            out.meta.wce_imputed[*row] = true;
        }
        out
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.matrix
    }

    pub(crate) fn meta_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(&self.meta)?)
    }

    pub(crate) fn from_meta_value(meta: serde_json::Value, matrix: Array2<f64>) -> Result<Self> {
        Self::from_parts(serde_json::from_value(meta)?, matrix)
    }

    /// Replaces the whole matrix, e.g. after fine-tuning.
    pub fn with_matrix(&self, matrix: Array2<f64>) -> Result<Self> {
        Self::from_parts(self.meta.clone(), matrix)
    }

    /// Checks the span-zeroing rules implied by the row flags.
    pub fn check_invariants(&self) -> Result<()> {
        for row in 0..self.rows() {
            let in_vocab = row < self.n_vocab();
            if self.meta.first.kind == Some(SpanKind::Pretrained)
                && !self.has_pretrained(row)
                && self.first_part(row).iter().any(|&x| x != 0.0)
            {
                return Err(Error::Data(format!(
                    "row '{}' lacks a pretrained vector but its span is nonzero",
                    self.meta.terms[row]
                )));
            }
            if self.meta.second.kind.is_some()
                && !in_vocab
                && !self.wce_imputed(row)
                && self.second_part(row).iter().any(|&x| x != 0.0)
            {
                return Err(Error::Data(format!(
                    "out-of-vocabulary row '{}' has a nonzero supervised span",
                    self.meta.terms[row]
                )));
            }
            if self.has_wce(row) != (in_vocab && self.meta.second.kind == Some(SpanKind::Wce)) {
                return Err(Error::Data(format!(
                    "row '{}' has an inconsistent WCE flag",
                    self.meta.terms[row]
                )));
            }
        }
        Ok(())
    }

    pub fn to_artifact(&self) -> Result<Artifact> {
        let mut art = Artifact::new("embeddings", &self.meta)?;
        art.push_matrix("matrix", &self.matrix);
        Ok(art)
    }

    pub fn from_artifact(art: &Artifact) -> Result<Self> {
        art.expect_kind("embeddings")?;
        Self::from_parts(art.meta()?, art.matrix("matrix")?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_artifact()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_artifact(&Artifact::load(path)?)
    }

    /// Writes `term v1 .. vk` lines for the selected columns, six decimals.
    pub fn write_text<W: Write>(&self, mut w: W, columns: std::ops::Range<usize>) -> Result<()> {
        for (row, term) in self.meta.terms.iter().enumerate() {
            w.write_all(term.as_bytes())?;
            for c in columns.clone() {
                write!(w, " {:.6}", self.matrix[[row, c]])?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn random_block(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-RANDOM_INIT_SCALE..=RANDOM_INIT_SCALE))
}

/// Assembles the embedding layer for `cfg.variant`.
///
/// `extra_terms` are candidate out-of-vocabulary terms; those with a
/// pretrained vector are appended after the vocabulary rows (sorted), with
/// a zero supervised span.
pub fn build_embedding_matrix(
    vocab: &Vocabulary,
    extra_terms: &[String],
    pretrained: Option<&PretrainedEmbeddings>,
    wce: Option<(&WordClassMatrix, &[String])>,
    cfg: &EmbeddingConfig,
) -> Result<EmbeddingMatrix> {
    let spec = cfg.variant;
    let pretrained = match (spec.needs_pretrained(), pretrained) {
        (true, None) => return Err(Error::Config(format!("variant {spec} needs pretrained embeddings"))),
        (true, Some(u)) => Some(u),
        (false, _) => None,
    };
    let wce = match (spec.needs_wce(), wce) {
        (true, None) => return Err(Error::Config(format!("variant {spec} needs a word-class matrix"))),
        (true, Some((s, classes))) => {
            if s.n_terms() != vocab.len() {
                return Err(Error::Dimension(format!(
                    "word-class matrix has {} rows for a vocabulary of {}",
                    s.n_terms(),
                    vocab.len()
                )));
            }
            Some((s, classes))
        }
        (false, _) => None,
    };

    let mut terms: Vec<String> = vocab.terms().to_vec();
    if let Some(u) = pretrained {
        let extra: BTreeSet<&str> = extra_terms
            .iter()
            .map(String::as_str)
            .filter(|t| !vocab.contains(t) && u.get(t).is_some())
            .collect();
        terms.extend(extra.into_iter().map(str::to_string));
    }
    let n_vocab = vocab.len();
    let rows = terms.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let (first, second) = match spec.variant {
        Variant::Random => (
            Span {
                kind: Some(SpanKind::Random),
                width: cfg.random_dim,
                trainable: true,
            },
            Span::EMPTY,
        ),
        Variant::Pretrained => (
            Span {
                kind: Some(SpanKind::Pretrained),
                width: pretrained.unwrap().dim(),
                trainable: spec.trainable,
            },
            Span::EMPTY,
        ),
        Variant::PretrainedRandom => (
            Span {
                kind: Some(SpanKind::Pretrained),
                width: pretrained.unwrap().dim(),
                trainable: true,
            },
            Span {
                kind: Some(SpanKind::Random),
                width: wce.unwrap().0.dims(),
                trainable: true,
            },
        ),
        Variant::PretrainedWce => (
            Span {
                kind: Some(SpanKind::Pretrained),
                width: pretrained.unwrap().dim(),
                trainable: spec.trainable,
            },
            Span {
                kind: Some(SpanKind::Wce),
                width: wce.unwrap().0.dims(),
                trainable: spec.trainable,
            },
        ),
    };
    if first.width == 0 {
        return Err(Error::Config("embedding span has zero width".into()));
    }

    let q = first.width;
    let mut matrix = Array2::zeros((rows, q + second.width));
    let mut has_pretrained = vec![false; rows];
    match first.kind {
        Some(SpanKind::Random) => {
            matrix.slice_mut(s![.., ..q]).assign(&random_block(rows, q, &mut rng));
        }
        _ => {
            let u = pretrained.expect("checked above");
            for (row, term) in terms.iter().enumerate() {
                if let Some(vec) = u.get(term) {
                    matrix.slice_mut(s![row, ..q]).assign(&vec);
                    has_pretrained[row] = true;
                }
            }
        }
    }
    match second.kind {
        Some(SpanKind::Wce) => {
            let (s_mat, _) = wce.expect("checked above");
            matrix.slice_mut(s![..n_vocab, q..]).assign(&s_mat.matrix);
        }
        Some(SpanKind::Random) => {
            let block = random_block(n_vocab, second.width, &mut rng);
            matrix.slice_mut(s![..n_vocab, q..]).assign(&block);
        }
        _ => {}
    }
    let has_wce = (0..rows)
        .map(|r| r < n_vocab && second.kind == Some(SpanKind::Wce))
        .collect();
    let classes = wce.map(|(_, c)| c.to_vec()).unwrap_or_default();
    let meta = EmbeddingMeta {
        variant: spec,
        terms,
        n_vocab,
        first,
        second,
        has_pretrained,
        has_wce,
        wce_imputed: vec![false; rows],
        classes,
    };
    EmbeddingMatrix::from_parts(meta, matrix)
}

/// Document features `X · E`, restricted to the vocabulary rows of `E`.
pub fn project_documents(x: &CsrMatrix, e: &EmbeddingMatrix) -> Result<Array2<f64>> {
    if x.cols() != e.n_vocab() {
        return Err(Error::Dimension(format!(
            "document matrix has {} columns, embedding vocabulary has {} rows",
            x.cols(),
            e.n_vocab()
        )));
    }
    x.dot_dense(&e.matrix.slice(s![..e.n_vocab(), ..]).to_owned())
}
