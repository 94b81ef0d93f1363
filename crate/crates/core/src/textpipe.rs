//! Tokenization, stemming, vocabulary pruning and sparse document-term
//! matrices.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("unsupported language `{0}` (expected en or de)")]
    UnsupportedLanguage(String),
    #[error("pruning removed the entire vocabulary")]
    EmptyVocabulary,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed triplet file at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    #[default]
    En,
    De,
}

impl FromStr for Lang {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Lang::En),
            "de" => Ok(Lang::De),
            other => Err(TextError::UnsupportedLanguage(other.to_string())),
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lang::En => "en",
            Lang::De => "de",
        })
    }
}

static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:[a-z][a-z0-9+.-]*://|www\.)").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[+-]?\d+(?:[.,:/]\d+)*%?$").unwrap());

fn is_separator(c: char) -> bool {
    matches!(
        c,
        ',' | ';' | '!' | '?' | '"' | '(' | ')' | '[' | ']' | '{' | '}' | '<' | '>' | '|' | '*' | '—' | '–' | '…'
            | '«' | '»' | '“' | '”' | '„' | '‘' | '’'
    )
}

/// Replaces diacritics by their base letter and `ß` by `ss`.
pub fn fold_diacritics(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' => out.push('a'),
            'ç' => out.push('c'),
            'è' | 'é' | 'ê' | 'ë' => out.push('e'),
            'ì' | 'í' | 'î' | 'ï' => out.push('i'),
            'ñ' => out.push('n'),
            'ò' | 'ó' | 'ô' | 'õ' | 'ö' | 'ø' => out.push('o'),
            'ù' | 'ú' | 'û' | 'ü' => out.push('u'),
            'ý' | 'ÿ' => out.push('y'),
            'ß' => out.push_str("ss"),
            c => out.push(c),
        }
    }
    out
}

fn trim_token(piece: &str) -> &str {
    let end = piece
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_alphanumeric())
        .map(|(i, c)| i + c.len_utf8());
    let Some(end) = end else {
        return "";
    };
    let piece = &piece[..end];
    let mut start = 0;
    let mut chars = piece.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c.is_alphanumeric() {
            start = i;
            break;
        }
        let next_is_alnum = chars.peek().is_some_and(|(_, n)| n.is_alphanumeric());
        if (c == '#' || c == '@') && next_is_alnum {
            start = i;
            break;
        }
    }
    &piece[start..]
}

/// Splits text into lowercased unigram tokens.
///
/// URLs, numeric literals and pure punctuation/symbol runs are dropped.
/// `#hashtags` and `@mentions` survive as single tokens, as do mixed tokens
/// such as `9-13` or `reinhard_4711`. German text is folded to base letters.
pub fn tokenize(text: &str, lang: Lang) -> Vec<String> {
    let lowered = text.to_lowercase();
    let lowered = match lang {
        Lang::De => fold_diacritics(&lowered),
        Lang::En => lowered,
    };
    let mut tokens = Vec::new();
    for chunk in lowered.split_whitespace() {
        if URL.is_match(chunk) {
            continue;
        }
        for piece in chunk.split(is_separator) {
            let token = trim_token(piece);
            if token.is_empty() || NUMBER.is_match(token) {
                continue;
            }
            tokens.push(token.to_string());
        }
    }
    tokens
}

/// Snowball stemming (Porter2 for English, German Snowball for German).
pub fn stem(tokens: &[String], lang: Lang) -> Vec<String> {
    let stemmer = match lang {
        Lang::En => Stemmer::create(Algorithm::English),
        Lang::De => Stemmer::create(Algorithm::German),
    };
    tokens
        .iter()
        .map(|t| match lang {
            Lang::De => stemmer.stem(&fold_diacritics(t)).into_owned(),
            Lang::En => stemmer.stem(t).into_owned(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Pipeline {
    pub lang: Lang,
    pub stem: bool,
}

impl Pipeline {
    pub fn new(lang: Lang, stem: bool) -> Self {
        Self { lang, stem }
    }

    pub fn analyze(&self, text: &str) -> Vec<String> {
        let tokens = tokenize(text, self.lang);
        if self.stem {
            stem(&tokens, self.lang)
        } else {
            tokens
        }
    }
}

/// Vocabulary pruning thresholds. The zero value keeps every term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Prune {
    pub min_doc_count: usize,
    pub min_total_count: usize,
    /// Fraction of terms with the lowest mean tf-idf to discard.
    pub min_tfidf_quantile: f64,
}

impl Prune {
    /// Keyword-extraction pruning: at least 5 documents and 5 occurrences.
    pub fn keywords() -> Self {
        Self {
            min_doc_count: 5,
            min_total_count: 5,
            min_tfidf_quantile: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Boolean,
    Count,
    Tfidf,
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "boolean" => Ok(Weighting::Boolean),
            "count" => Ok(Weighting::Count),
            "tfidf" => Ok(Weighting::Tfidf),
            other => Err(format!("unknown weighting `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    pub fn from_parts(terms: Vec<String>, doc_freq: Vec<usize>, n_docs: usize) -> Self {
        assert_eq!(terms.len(), doc_freq.len());
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            terms,
            index,
            doc_freq,
            n_docs,
        }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
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

    pub fn term(&self, id: usize) -> &str {
        &self.terms[id]
    }

    pub fn doc_freq(&self, id: usize) -> usize {
        self.doc_freq[id]
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// `ln(N / df)`.
    pub fn idf(&self, id: usize) -> f64 {
        (self.n_docs as f64 / self.doc_freq[id] as f64).ln()
    }
}

/// Borrowed sparse row.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f64],
}

impl Row<'_> {
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(self.values)
            .map(|(&j, &v)| dense[j as usize] * v)
            .sum()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(self.values).map(|(&j, &v)| (j as usize, v))
    }
}

/// Compressed sparse row matrix of documents × terms. Column indices within
/// a row are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTermMatrix {
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    n_cols: usize,
    weighting: Weighting,
}

impl DocTermMatrix {
    /// Builds a matrix from per-row `(column, value)` lists. Entries are
    /// sorted and duplicate columns summed.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>, n_cols: usize, weighting: Weighting) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let start = indices.len();
            for (j, v) in row {
                assert!((j as usize) < n_cols, "column {j} out of range {n_cols}");
                if indices.len() > start && *indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            indptr,
            indices,
            values,
            n_cols,
            weighting,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        Row {
            indices: &self.indices[a..b],
            values: &self.values[a..b],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> + '_ {
        (0..self.n_rows()).map(|i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = self.row(i);
        match row.indices.binary_search(&(j as u32)) {
            Ok(p) => row.values[p],
            Err(_) => 0.0,
        }
    }

    /// New matrix with the given rows, in the given order (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for &i in rows {
            let r = self.row(i);
            indices.extend_from_slice(r.indices);
            values.extend_from_slice(r.values);
            indptr.push(indices.len());
        }
        Self {
            indptr,
            indices,
            values,
            n_cols: self.n_cols,
            weighting: self.weighting,
        }
    }

    /// Appends the rows of `other`, which must share the column space.
    pub fn vstack(&self, other: &DocTermMatrix) -> Self {
        assert_eq!(self.n_cols, other.n_cols);
        let mut out = self.clone();
        let offset = out.indices.len();
        out.indices.extend_from_slice(&other.indices);
        out.values.extend_from_slice(&other.values);
        out.indptr.extend(other.indptr[1..].iter().map(|p| p + offset));
        if other.weighting != self.weighting {
            out.weighting = Weighting::Count;
        }
        out
    }

    /// Column-major copy: for every column the `(row, value)` entries.
    pub fn columns(&self) -> Vec<Vec<(u32, f64)>> {
        let mut cols = vec![Vec::new(); self.n_cols];
        for (i, row) in self.rows().enumerate() {
            for (j, v) in row.iter() {
                cols[j].push((i as u32, v));
            }
        }
        cols
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows()
            .map(|r| {
                let mut dense = vec![0.0; self.n_cols];
                for (j, v) in r.iter() {
                    dense[j] = v;
                }
                dense
            })
            .collect()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `row col value` lines (0-based) after a `% rows cols weighting`
    /// header, plus a `<path>.vocab` sidecar of `term<TAB>doc_freq` lines.
    pub fn write_triplets(&self, vocab: &Vocabulary, path: &Path) -> Result<(), TextError> {
        let io = |source| TextError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        let weighting = serde_json::to_value(self.weighting).unwrap();
        writeln!(out, "% {} {} {}", self.n_rows(), self.n_cols, weighting.as_str().unwrap()).map_err(io)?;
        for (i, row) in self.rows().enumerate() {
            for (j, v) in row.iter() {
                writeln!(out, "{i} {j} {v}").map_err(io)?;
            }
        }
        out.flush().map_err(io)?;

        let vocab_path = sidecar(path);
        let io = |source| TextError::Io {
            path: vocab_path.clone(),
            source,
        };
        let mut out = BufWriter::new(File::create(&vocab_path).map_err(io)?);
        for (id, term) in vocab.terms().iter().enumerate() {
            writeln!(out, "{term}\t{}", vocab.doc_freq(id)).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Reads a matrix written by [`DocTermMatrix::write_triplets`].
    pub fn read_triplets(path: &Path) -> Result<(Vocabulary, DocTermMatrix), TextError> {
        let io = |source| TextError::Io {
            path: path.to_path_buf(),
            source,
        };
        let bad = |line, message: &str| TextError::Malformed {
            line,
            message: message.to_string(),
        };
        let reader = BufReader::new(File::open(path).map_err(io)?);
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| bad(1, "missing header"))?.map_err(io)?;
        let fields: Vec<&str> = header.trim_start_matches('%').split_whitespace().collect();
        let [n_rows, n_cols, weighting] = fields[..] else {
            return Err(bad(1, "header must be `% rows cols weighting`"));
        };
        let n_rows: usize = n_rows.parse().map_err(|_| bad(1, "bad row count"))?;
        let n_cols: usize = n_cols.parse().map_err(|_| bad(1, "bad column count"))?;
        let weighting: Weighting = weighting.parse().map_err(|e: String| bad(1, &e))?;
        let mut rows = vec![Vec::new(); n_rows];
        for (n, line) in lines.enumerate() {
            let line = line.map_err(io)?;
            let mut parts = line.split_whitespace();
            let mut next = || parts.next().ok_or_else(|| bad(n + 2, "expected `row col value`"));
            let i: usize = next()?.parse().map_err(|_| bad(n + 2, "bad row"))?;
            let j: u32 = next()?.parse().map_err(|_| bad(n + 2, "bad column"))?;
            let v: f64 = next()?.parse().map_err(|_| bad(n + 2, "bad value"))?;
            if i >= n_rows || j as usize >= n_cols {
                return Err(bad(n + 2, "index out of range"));
            }
            rows[i].push((j, v));
        }
        let vocab_path = sidecar(path);
        let reader = BufReader::new(File::open(&vocab_path).map_err(|source| TextError::Io {
            path: vocab_path.clone(),
            source,
        })?);
        let mut terms = Vec::new();
        let mut dfs = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(io)?;
            let (term, df) = line.rsplit_once('\t').ok_or_else(|| bad(n + 1, "vocab line needs a tab"))?;
            terms.push(term.to_string());
            dfs.push(df.parse().map_err(|_| bad(n + 1, "bad doc_freq"))?);
        }
        Ok((
            Vocabulary::from_parts(terms, dfs, n_rows),
            DocTermMatrix::from_rows(rows, n_cols, weighting),
        ))
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".vocab");
    PathBuf::from(name)
}

/// Builds the vocabulary and document-term matrix for `texts`.
///
/// Terms are ordered lexicographically. Count thresholds are applied first;
/// the tf-idf quantile cut then discards the `floor(q·U)` remaining terms
/// with the lowest mean tf-idf over the documents that contain them.
pub fn build_dtm(
    texts: &[&str],
    pipeline: Pipeline,
    prune: Prune,
    weighting: Weighting,
) -> Result<(Vocabulary, DocTermMatrix), TextError> {
    if texts.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    let n_docs = texts.len();
    let doc_counts: Vec<HashMap<String, u32>> = texts
        .par_iter()
        .map(|t| {
            let mut counts = HashMap::new();
            for token in pipeline.analyze(t) {
                *counts.entry(token).or_insert(0) += 1;
            }
            counts
        })
        .collect();

    let mut stats: HashMap<&str, (usize, u64)> = HashMap::new();
    for counts in &doc_counts {
        for (term, &c) in counts {
            let entry = stats.entry(term.as_str()).or_insert((0, 0));
            entry.0 += 1;
            entry.1 += c as u64;
        }
    }
    let mut kept: Vec<(&str, usize, u64)> = stats
        .into_iter()
        .filter(|&(_, (df, total))| df >= prune.min_doc_count && total >= prune.min_total_count as u64)
        .map(|(t, (df, total))| (t, df, total))
        .collect();
    kept.sort_unstable_by(|a, b| a.0.cmp(b.0));

    if prune.min_tfidf_quantile > 0.0 && !kept.is_empty() {
        let mean_tfidf = |&(_, df, total): &(&str, usize, u64)| {
            (total as f64 / df as f64) * (n_docs as f64 / df as f64).ln()
        };
        let mut ranked: Vec<usize> = (0..kept.len()).collect();
        ranked.sort_by(|&a, &b| mean_tfidf(&kept[a]).total_cmp(&mean_tfidf(&kept[b])).then(a.cmp(&b)));
        let cut = (prune.min_tfidf_quantile * kept.len() as f64).floor() as usize;
        let mut drop = vec![false; kept.len()];
        for &i in &ranked[..cut.min(kept.len())] {
            drop[i] = true;
        }
        let mut it = drop.iter();
        kept.retain(|_| !*it.next().unwrap());
    }
    if kept.is_empty() {
        return Err(TextError::EmptyVocabulary);
    }

    let vocab = Vocabulary::from_parts(
        kept.iter().map(|(t, _, _)| t.to_string()).collect(),
        kept.iter().map(|&(_, df, _)| df).collect(),
        n_docs,
    );
    let rows = doc_counts
        .iter()
        .map(|counts| {
            counts
                .iter()
                .filter_map(|(term, &c)| {
                    let j = vocab.get(term)?;
                    let v = match weighting {
                        Weighting::Boolean => 1.0,
                        Weighting::Count => c as f64,
                        Weighting::Tfidf => c as f64 * vocab.idf(j),
                    };
                    (v != 0.0).then_some((j as u32, v))
                })
                .collect()
        })
        .collect();
    let dtm = DocTermMatrix::from_rows(rows, vocab.len(), weighting);
    Ok((vocab, dtm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenizer_drops_numbers_urls_punctuation() {
        assert_eq!(
            tokenize("OPEC cut output to 15.8 mln bpd — see http://x.y", Lang::En),
            toks(&["opec", "cut", "output", "to", "mln", "bpd", "see"])
        );
        assert!(tokenize("", Lang::En).is_empty());
        assert!(tokenize("  ... 1987 !!! ", Lang::En).is_empty());
    }

    #[test]
    fn tokenizer_folds_german_umlauts() {
        assert_eq!(tokenize("Flüchtlinge in Ungarn!", Lang::De), toks(&["fluchtlinge", "in", "ungarn"]));
    }

    #[test]
    fn tokenizer_keeps_handles_hashtags_and_mixed_tokens() {
        assert_eq!(
            tokenize("#Pegida @YouTube (9-13) bordelldatenbank.eu, reinhard_4711 www.a.de", Lang::De),
            toks(&["#pegida", "@youtube", "9-13", "bordelldatenbank.eu", "reinhard_4711"])
        );
    }

    #[test]
    fn stemming() {
        assert_eq!(stem(&toks(&["running", "runs"]), Lang::En), toks(&["run", "run"]));
        assert_eq!(stem(&toks(&["veranstaltung"]), Lang::De), toks(&["veranstalt"]));
        assert!(stem(&[], Lang::En).is_empty());
        assert!(matches!("fr".parse::<Lang>(), Err(TextError::UnsupportedLanguage(_))));
    }

    #[test]
    fn min_doc_count_prunes() {
        let (vocab, dtm) = build_dtm(
            &["a b", "a c", "a"],
            Pipeline::default(),
            Prune {
                min_doc_count: 2,
                ..Prune::default()
            },
            Weighting::Boolean,
        )
        .unwrap();
        assert_eq!(vocab.terms(), &["a".to_string()]);
        assert_eq!(dtm.to_dense(), vec![vec![1.0], vec![1.0], vec![1.0]]);
    }

    #[test]
    fn tfidf_of_ubiquitous_term_is_zero() {
        let (vocab, dtm) = build_dtm(&["a b b", "a c", "a"], Pipeline::default(), Prune::default(), Weighting::Tfidf)
            .unwrap();
        let a = vocab.get("a").unwrap();
        assert!((0..3).all(|i| dtm.get(i, a) == 0.0));
        let b = vocab.get("b").unwrap();
        assert!((dtm.get(0, b) - 2.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn counts_and_tfidf_quantile_pruning() {
        let texts = ["x x x y", "x y z", "y z w", "w w"];
        let (vocab, dtm) = build_dtm(&texts, Pipeline::default(), Prune::default(), Weighting::Count).unwrap();
        assert_eq!(dtm.get(0, vocab.get("x").unwrap()), 3.0);
        // mean tf-idf: y = 1·ln(4/3) is the lowest of the four terms
        let (vocab, _) = build_dtm(
            &texts,
            Pipeline::default(),
            Prune {
                min_tfidf_quantile: 0.25,
                ..Prune::default()
            },
            Weighting::Count,
        )
        .unwrap();
        assert_eq!(vocab.terms(), &toks(&["w", "x", "z"])[..]);
    }

    #[test]
    fn pruning_everything_is_an_error() {
        let err = build_dtm(
            &["a", "b"],
            Pipeline::default(),
            Prune {
                min_doc_count: 3,
                ..Prune::default()
            },
            Weighting::Boolean,
        )
        .unwrap_err();
        assert!(matches!(err, TextError::EmptyVocabulary));
    }

    #[test]
    fn triplet_round_trip() {
        let (vocab, dtm) = build_dtm(&["oil price oil", "gold", "oil gold"], Pipeline::default(), Prune::default(), Weighting::Count)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        dtm.write_triplets(&vocab, &path).unwrap();
        let (v2, m2) = DocTermMatrix::read_triplets(&path).unwrap();
        assert_eq!(v2, vocab);
        assert_eq!(m2, dtm);
    }

    #[test]
    fn select_and_stack_rows() {
        let dtm = DocTermMatrix::from_rows(vec![vec![(1, 1.0)], vec![(0, 2.0), (1, 3.0)]], 2, Weighting::Count);
        let picked = dtm.select_rows(&[1, 1, 0]);
        assert_eq!(picked.to_dense(), vec![vec![2.0, 3.0], vec![2.0, 3.0], vec![0.0, 1.0]]);
        let stacked = dtm.vstack(&picked);
        assert_eq!(stacked.n_rows(), 5);
        assert_eq!(stacked.row(4).indices, &[1]);
    }

    fn corpus_strategy() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::collection::vec("[a-f]{1,2}", 0..8).prop_map(|w| w.join(" ")), 1..12)
    }

    proptest! {
        #[test]
        fn raising_min_doc_count_never_adds_terms(texts in corpus_strategy(), lo in 0usize..4, extra in 0usize..3) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let build = |min| build_dtm(&refs, Pipeline::default(), Prune { min_doc_count: min, ..Prune::default() }, Weighting::Boolean)
                .map(|(v, _)| v.terms().to_vec())
                .unwrap_or_default();
            let loose = build(lo);
            let strict = build(lo + extra);
            prop_assert!(strict.iter().all(|t| loose.contains(t)));
        }

        #[test]
        fn boolean_row_is_set_indicator_of_tokens(texts in corpus_strategy()) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            if let Ok((vocab, dtm)) = build_dtm(&refs, Pipeline::default(), Prune::default(), Weighting::Boolean) {
                prop_assert!(dtm.nnz() == 0 || dtm.max_value() == 1.0);
                for (i, text) in refs.iter().enumerate() {
                    let mut expected: Vec<usize> = tokenize(text, Lang::En).iter().filter_map(|t| vocab.get(t)).collect();
                    expected.sort_unstable();
                    expected.dedup();
                    let got: Vec<usize> = dtm.row(i).iter().map(|(j, _)| j).collect();
                    prop_assert_eq!(got, expected);
                }
                let again = build_dtm(&refs, Pipeline::default(), Prune::default(), Weighting::Boolean).unwrap();
                prop_assert_eq!(again.1, dtm);
            }
        }
    }
}
