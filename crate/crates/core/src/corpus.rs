//! Labeled corpus ingestion: tokenization, vocabulary, label index and
//! encoding of documents into id sequences and sparse count rows.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Replacement token for anything containing a digit.
pub const NUMBER_TOKEN: &str = "numbertoken";

/// Fraction of the training split sampled for validation.
pub const VALIDATION_FRACTION: f64 = 0.2;
/// Upper bound on the validation sample size.
pub const VALIDATION_CAP: usize = 20_000;

const STOP_WORDS_TEXT: &str = include_str!("stopwords_en.txt");

/// The English stop-word list shipped in `stopwords_en.txt`.
pub fn stop_words() -> &'static HashSet<&'static str> {
    static WORDS: OnceLock<HashSet<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| {
        STOP_WORDS_TEXT
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub labels: Vec<String>,
}

/// Splits on every non-alphanumeric character, lowercases, drops stop words
/// and masks any token holding a digit as [`NUMBER_TOKEN`].
pub fn tokenize(text: &str) -> Vec<String> {
    let stop = stop_words();
    let lowered = text.to_lowercase();
    lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|tok| !tok.is_empty())
        .filter_map(|tok| {
            if tok.chars().any(|c| c.is_numeric()) {
                Some(NUMBER_TOKEN.to_string())
            } else if stop.contains(tok) {
                None
            } else {
                Some(tok.to_string())
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<usize>,
    min_df: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from terms already sorted and unique.
    pub fn from_sorted_terms(terms: Vec<String>, doc_freq: Vec<usize>, min_df: usize) -> Self {
        let mut vocab = Self {
            terms,
            doc_freq,
            min_df,
            index: HashMap::new(),
        };
        vocab.reindex();
        vocab
    }

    pub(crate) fn reindex(&mut self) {
        self.index = self.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.index.contains_key(term)
    }

    pub fn term(&self, id: usize) -> &str {
        &self.terms[id]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq(&self, id: usize) -> usize {
        self.doc_freq[id]
    }

    pub fn min_df(&self) -> usize {
        self.min_df
    }

    /// Id reserved for out-of-vocabulary tokens in encoded sequences.
    pub fn unk_id(&self) -> usize {
        self.terms.len()
    }
}

/// Keeps every term whose document frequency reaches `min_df`; ids follow
/// lexicographic term order.
pub fn build_vocabulary<D, S>(docs: &[D], min_df: usize) -> Result<Vocabulary>
where
    D: AsRef<[S]>,
    S: AsRef<str>,
{
    if min_df == 0 {
        return Err(Error::Config("min_df must be at least 1".into()));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let unique: BTreeSet<&str> = doc.as_ref().iter().map(AsRef::as_ref).collect();
        for term in unique {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    let (terms, doc_freq): (Vec<String>, Vec<usize>) = df
        .into_iter()
        .filter(|&(_, count)| count >= min_df)
        .map(|(t, count)| (t.to_string(), count))
        .unzip();
    if terms.is_empty() {
        return Err(Error::Config(format!(
            "no term reaches min_df={min_df}; vocabulary is empty"
        )));
    }
    Ok(Vocabulary::from_sorted_terms(terms, doc_freq, min_df))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    SingleLabel,
    Multilabel,
}

impl std::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-label" | "single" => Ok(Self::SingleLabel),
            "multilabel" | "multi-label" | "multi" => Ok(Self::Multilabel),
            other => Err(Error::Config(format!("unknown label mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelIndex {
    names: Vec<String>,
    mode: LabelMode,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl LabelIndex {
    pub fn new(mut names: Vec<String>, mode: LabelMode) -> Result<Self> {
        names.sort();
        names.dedup();
        if names.len() < 2 {
            return Err(Error::Config(format!(
                "a codeframe needs at least 2 classes, found {}",
                names.len()
            )));
        }
        let mut li = Self {
            names,
            mode,
            index: HashMap::new(),
        };
        li.reindex();
        Ok(li)
    }

    /// Collects class names from training documents. With `mode = None`
    /// the mode is inferred: multilabel iff some document has ≠ 1 label.
    pub fn from_documents(docs: &[Document], mode: Option<LabelMode>) -> Result<Self> {
        let mode = mode.unwrap_or_else(|| {
            if docs.iter().all(|d| d.labels.len() == 1) {
                LabelMode::SingleLabel
            } else {
                LabelMode::Multilabel
            }
        });
        for doc in docs {
            let ok = match mode {
                LabelMode::SingleLabel => doc.labels.len() == 1,
                LabelMode::Multilabel => !doc.labels.is_empty(),
            };
            if !ok {
                return Err(Error::Data(format!(
                    "training document '{}' has {} labels in {:?} mode",
                    doc.id,
                    doc.labels.len(),
                    mode
                )));
            }
        }
        let names: BTreeSet<String> = docs.iter().flat_map(|d| d.labels.iter().cloned()).collect();
        Self::new(names.into_iter().collect(), mode)
    }

    pub(crate) fn reindex(&mut self) {
        self.index = self.names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn mode(&self) -> LabelMode {
        self.mode
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

/// Output of [`encode`] for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    /// Token ids; out-of-vocabulary tokens carry [`Vocabulary::unk_id`].
    pub sequences: Vec<Vec<usize>>,
    /// Document-by-term raw counts (OOV tokens dropped).
    pub counts: CsrMatrix,
    /// Binary document-by-class matrix.
    pub labels: CsrMatrix,
}

/// Maps each document's label names to sorted class ids.
pub fn label_ids(doc_id: &str, labels: &[String], label_index: &LabelIndex) -> Result<Vec<usize>> {
    let mut ids = labels
        .iter()
        .map(|name| {
            label_index
                .get(name)
                .ok_or_else(|| Error::Data(format!("document '{doc_id}' has unknown label '{name}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

pub fn encode(docs: &[TokenizedDocument], vocab: &Vocabulary, label_index: &LabelIndex) -> Result<Encoded> {
    let unk = vocab.unk_id();
    let sequences: Vec<Vec<usize>> = docs
        .par_iter()
        .map(|d| d.tokens.iter().map(|t| vocab.get(t).unwrap_or(unk)).collect())
        .collect();

    let count_rows: Vec<Vec<(usize, f64)>> = sequences
        .par_iter()
        .map(|seq| {
            let mut row: BTreeMap<usize, f64> = BTreeMap::new();
            for &id in seq.iter().filter(|&&id| id != unk) {
                *row.entry(id).or_insert(0.0) += 1.0;
            }
            row.into_iter().collect()
        })
        .collect();
    let counts = CsrMatrix::from_sorted_rows(vocab.len(), count_rows)?;

    let mut label_rows = Vec::with_capacity(docs.len());
    for d in docs {
        let ids = label_ids(&d.id, &d.labels, label_index)?;
        label_rows.push(ids.into_iter().map(|j| (j, 1.0)).collect());
    }
    let labels = CsrMatrix::from_sorted_rows(label_index.len(), label_rows)?;

    Ok(Encoded {
        sequences,
        counts,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub id: String,
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
}

impl TokenizedDocument {
    pub fn from_document(doc: &Document) -> Self {
        Self {
            id: doc.id.clone(),
            tokens: tokenize(&doc.text),
            labels: doc.labels.clone(),
        }
    }
}

pub fn tokenize_all(docs: &[Document]) -> Vec<TokenizedDocument> {
    docs.par_iter().map(TokenizedDocument::from_document).collect()
}

/// Picks the validation sample: a seeded random 20% of `n_train`, capped at
/// [`VALIDATION_CAP`]. Returned indices are sorted.
pub fn validation_indices(n_train: usize, seed: u64) -> Vec<usize> {
    let size = ((n_train as f64 * VALIDATION_FRACTION).round() as usize).min(VALIDATION_CAP);
    let mut idx: Vec<usize> = (0..n_train).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut picked = idx[..size].to_vec();
    picked.sort_unstable();
    picked
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub min_df: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: Option<LabelMode>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            min_df: 5,
            seed: 0,
            mode: None,
        }
    }
}

/// Train/validation/test documents together with the vocabulary and label
/// index built on the training split. Validation is a subset of train,
/// identified by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub train: Vec<TokenizedDocument>,
    pub test: Vec<TokenizedDocument>,
    pub validation: Vec<usize>,
    pub vocabulary: Vocabulary,
    pub labels: LabelIndex,
    pub seed: u64,
}

impl LabeledCorpus {
    pub fn build(train: &[Document], test: &[Document], cfg: &CorpusConfig) -> Result<Self> {
        Self::from_tokenized(tokenize_all(train), tokenize_all(test), cfg)
    }

    pub fn from_tokenized(
        train: Vec<TokenizedDocument>,
        test: Vec<TokenizedDocument>,
        cfg: &CorpusConfig,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Config("training split is empty".into()));
        }
        let label_docs: Vec<Document> = train
            .iter()
            .map(|d| Document {
                id: d.id.clone(),
                text: String::new(),
                labels: d.labels.clone(),
            })
            .collect();
        let labels = LabelIndex::from_documents(&label_docs, cfg.mode)?;
        let token_lists: Vec<&[String]> = train.iter().map(|d| d.tokens.as_slice()).collect();
        let vocabulary = build_vocabulary(&token_lists, cfg.min_df)?;
        // test labels must resolve too
        for d in &test {
            label_ids(&d.id, &d.labels, &labels)?;
        }
        let validation = validation_indices(train.len(), cfg.seed);
        Ok(Self {
            train,
            test,
            validation,
            vocabulary,
            labels,
            seed: cfg.seed,
        })
    }

    pub fn mode(&self) -> LabelMode {
        self.labels.mode()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    /// Training documents not in the validation sample, in order.
    pub fn fit_indices(&self) -> Vec<usize> {
        let val: HashSet<usize> = self.validation.iter().copied().collect();
        (0..self.train.len()).filter(|i| !val.contains(i)).collect()
    }

    pub fn encode_train(&self) -> Result<Encoded> {
        encode(&self.train, &self.vocabulary, &self.labels)
    }

    pub fn encode_test(&self) -> Result<Encoded> {
        encode(&self.test, &self.vocabulary, &self.labels)
    }

    /// Every token seen anywhere in the corpus that is not in the
    /// vocabulary, sorted.
    pub fn out_of_vocabulary_terms(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .train
            .iter()
            .chain(&self.test)
            .flat_map(|d| d.tokens.iter().map(String::as_str))
            .filter(|t| !self.vocabulary.contains(t))
            .collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::io::BufWriter::new(File::create(dir.join(CORPUS_FILE))?);
        serde_json::to_writer(&mut f, self)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CORPUS_FILE);
        let f =
            File::open(&path).map_err(|e| Error::Config(format!("cannot open corpus file {}: {e}", path.display())))?;
        let mut corpus: Self = serde_json::from_reader(BufReader::new(f))?;
        corpus.vocabulary.reindex();
        corpus.labels.reindex();
        Ok(corpus)
    }
}

pub const CORPUS_FILE: &str = "corpus.json";

/// Reads a JSON-lines corpus file: one `{"id", "text", "labels"}` per line.
pub fn read_jsonl(path: &Path) -> Result<Vec<Document>> {
    let f = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_jsonl(path: &Path, docs: &[Document]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    for d in docs {
        serde_json::to_writer(&mut f, d)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Partitions one document list by a `{"train": [ids], "test": [ids]}`
/// manifest, keeping manifest order.
pub fn split_by_manifest(docs: Vec<Document>, manifest: &SplitManifest) -> Result<(Vec<Document>, Vec<Document>)> {
    let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let pick = |ids: &[String]| -> Result<Vec<Document>> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|d| (*d).clone())
                    .ok_or_else(|| Error::Data(format!("manifest id '{id}' not in corpus")))
            })
            .collect()
    };
    Ok((pick(&manifest.train)?, pick(&manifest.test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    fn tdoc(id: &str, tokens: &[&str], labels: &[&str]) -> TokenizedDocument {
        TokenizedDocument {
            id: id.into(),
            tokens: toks(tokens),
            labels: toks(labels),
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The cat, the CAT!"), toks(&["cat", "cat"]));
        assert_eq!(tokenize("Boeing 747 lands"), toks(&["boeing", "numbertoken", "lands"]));
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("v2 A4-size x"),
            toks(&["numbertoken", "numbertoken", "size", "x"])
        );
    }

    #[test]
    fn stop_word_list_is_complete() {
        assert_eq!(stop_words().len(), 318);
        assert!(stop_words().contains("the"));
    }

    #[test]
    fn vocabulary_examples() {
        let docs = vec![toks(&["a", "b"]), toks(&["a"]), toks(&["a"])];
        let v = build_vocabulary(&docs, 2).unwrap();
        assert_eq!(v.terms(), &toks(&["a"])[..]);
        assert_eq!(v.doc_freq(0), 3);

        let docs = vec![toks(&["b", "a"]), toks(&["a", "b"])];
        let v = build_vocabulary(&docs, 1).unwrap();
        assert_eq!(v.get("a"), Some(0));
        assert_eq!(v.get("b"), Some(1));
    }

    #[test]
    fn vocabulary_errors() {
        let docs = vec![toks(&["a"])];
        assert!(matches!(build_vocabulary(&docs, 0), Err(Error::Config(_))));
        assert!(matches!(build_vocabulary(&docs, 2), Err(Error::Config(_))));
    }

    #[test]
    fn vocabulary_matches_brute_force_count() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let docs: Vec<Vec<String>> = (0..5000)
            .map(|_| {
                let len = rng.gen_range(0..30);
                (0..len)
                    .map(|_| format!("w{}", rng.gen_range(0..400u32) * rng.gen_range(0..4u32)))
                    .collect()
            })
            .collect();
        let vocab = build_vocabulary(&docs, 5).unwrap();

        // independent count: scan every candidate term over every document
        let mut candidates: Vec<&String> = docs.iter().flatten().collect();
        candidates.sort();
        candidates.dedup();
        let mut expected = Vec::new();
        for term in candidates {
            let df = docs.iter().filter(|d| d.contains(term)).count();
            if df >= 5 {
                expected.push(term.clone());
            }
        }
        assert_eq!(vocab.terms(), &expected[..]);
    }

    #[test]
    fn encode_examples() {
        let vocab = build_vocabulary(&[toks(&["a", "b"])], 1).unwrap();
        let labels = LabelIndex::new(toks(&["c1", "c2"]), LabelMode::Multilabel).unwrap();
        let docs = vec![
            tdoc("d0", &["a", "a", "b"], &["c1"]),
            tdoc("d1", &["zz", "yy"], &["c2"]),
            tdoc("d2", &["b"], &["c1", "c2"]),
        ];
        let enc = encode(&docs, &vocab, &labels).unwrap();
        let counts = enc.counts.to_dense();
        assert_eq!(counts.row(0).to_vec(), vec![2.0, 1.0]);
        assert_eq!(counts.row(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(enc.sequences[1], vec![vocab.unk_id(); 2]);
        let y = enc.labels.to_dense();
        assert_eq!(y.row(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(y.row(2).to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn encode_unknown_label_names_document() {
        let vocab = build_vocabulary(&[toks(&["a"])], 1).unwrap();
        let labels = LabelIndex::new(toks(&["c1", "c2"]), LabelMode::SingleLabel).unwrap();
        let err = encode(&[tdoc("doc-7", &["a"], &["c9"])], &vocab, &labels).unwrap_err();
        assert!(err.to_string().contains("doc-7"));
    }

    #[test]
    fn label_index_needs_two_classes_and_single_labels() {
        assert!(LabelIndex::new(toks(&["only"]), LabelMode::SingleLabel).is_err());
        let docs = vec![Document {
            id: "x".into(),
            text: String::new(),
            labels: toks(&["a", "b"]),
        }];
        assert!(LabelIndex::from_documents(&docs, Some(LabelMode::SingleLabel)).is_err());
        let li = LabelIndex::from_documents(
            &[
                docs[0].clone(),
                Document {
                    id: "y".into(),
                    text: String::new(),
                    labels: toks(&["c"]),
                },
            ],
            None,
        )
        .unwrap();
        assert_eq!(li.mode(), LabelMode::Multilabel);
        assert_eq!(li.len(), 3);
    }

    #[test]
    fn validation_split_is_20_percent_and_seeded() {
        let a = validation_indices(1000, 0);
        assert_eq!(a.len(), 200);
        assert_eq!(a, validation_indices(1000, 0));
        assert_ne!(a, validation_indices(1000, 1));
        assert_eq!(validation_indices(200_000, 0).len(), VALIDATION_CAP);
    }

    #[test]
    fn corpus_roundtrips_through_directory() {
        let train: Vec<Document> = (0..10)
            .map(|i| Document {
                id: format!("d{i}"),
                text: "apple banana cherry".into(),
                labels: vec![if i % 2 == 0 { "even" } else { "odd" }.into()],
            })
            .collect();
        let corpus = LabeledCorpus::build(&train, &train[..2], &CorpusConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        corpus.save(dir.path()).unwrap();
        let back = LabeledCorpus::load(dir.path()).unwrap();
        assert_eq!(back.vocabulary.get("banana"), Some(1));
        assert_eq!(back.labels.get("odd"), Some(1));
        assert_eq!(back.validation, corpus.validation);
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(text in "\\PC{0,80}") {
            let once = tokenize(&text);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn column_sums_equal_term_counts(
            docs in proptest::collection::vec(proptest::collection::vec(0u8..12, 0..15), 1..20)
        ) {
            prop_assume!(docs.iter().any(|d| !d.is_empty()));
            let docs: Vec<Vec<String>> = docs
                .iter()
                .map(|d| d.iter().map(|x| format!("t{}", (b'a' + x) as char)).collect())
                .collect();
            let vocab = build_vocabulary(&docs, 1).unwrap();
            let labels = LabelIndex::new(toks(&["p", "q"]), LabelMode::SingleLabel).unwrap();
            let tdocs: Vec<TokenizedDocument> = docs
                .iter()
                .enumerate()
                .map(|(i, d)| TokenizedDocument { id: i.to_string(), tokens: d.clone(), labels: toks(&["p"]) })
                .collect();
            let enc = encode(&tdocs, &vocab, &labels).unwrap();
            let dense = enc.counts.to_dense();
            for (j, term) in vocab.terms().iter().enumerate() {
                let brute = docs.iter().flatten().filter(|t| *t == term).count() as f64;
                prop_assert_eq!(dense.column(j).sum(), brute);
                prop_assert!(vocab.doc_freq(j) >= 1);
            }
            for row in enc.labels.to_dense().rows() {
                prop_assert_eq!(row.sum(), 1.0);
            }
        }
    }
}
