//! Word embeddings: co-occurrence counting, GloVe training, loading of
//! pretrained vectors, cosine neighbours and per-keyword query expansion.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keywords::{KeywordList, Provenance};
use crate::seed;
use crate::textpipe::Vocabulary;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("co-occurrence table is empty")]
    EmptyTable,
    #[error("training diverged: loss {loss} after epoch {epoch}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} components, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("term `{0}` has no vector")]
    MissingTerm(String),
    #[error("vector for `{0}` is all zeros")]
    ZeroVector(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Symmetric sparse co-occurrence counts keyed by vocabulary ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CooccurrenceTable {
    entries: HashMap<(u32, u32), f64>,
    n_terms: usize,
}

impl CooccurrenceTable {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(&(i as u32, j as u32)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_terms(&self) -> usize {
        self.n_terms
    }

    /// Entries sorted by `(i, j)`.
    pub fn triples(&self) -> Vec<(u32, u32, f64)> {
        let mut out: Vec<_> = self.entries.iter().map(|(&(i, j), &x)| (i, j, x)).collect();
        out.sort_unstable_by_key(|&(i, j, _)| (i, j));
        out
    }

    fn merge(&mut self, other: HashMap<(u32, u32), f64>) {
        for (k, v) in other {
            *self.entries.entry(k).or_insert(0.0) += v;
        }
    }
}

const CHUNK_DOCS: usize = 256;

/// Counts co-occurrences within `window` tokens on either side.
///
/// Every token pair at distance `q ≤ window` whose two tokens are in the
/// vocabulary adds `1/q` to both `X[i,j]` and `X[j,i]`. Distances are
/// measured in the original token stream. Documents are processed in fixed
/// chunks merged in order, so results do not depend on the thread count.
pub fn build_cooccurrence(
    docs: &[Vec<String>],
    vocab: &Vocabulary,
    window: usize,
) -> Result<CooccurrenceTable, EmbedError> {
    if vocab.is_empty() {
        return Err(EmbedError::EmptyVocabulary);
    }
    let partials: Vec<HashMap<(u32, u32), f64>> = docs
        .par_chunks(CHUNK_DOCS)
        .map(|chunk| {
            let mut local = HashMap::new();
            for doc in chunk {
                let ids: Vec<Option<u32>> = doc.iter().map(|t| vocab.get(t).map(|i| i as u32)).collect();
                for (p, a) in ids.iter().enumerate() {
                    let Some(a) = *a else { continue };
                    for q in 1..=window {
                        let Some(Some(b)) = ids.get(p + q) else {
                            continue;
                        };
                        let w = 1.0 / q as f64;
                        *local.entry((a, *b)).or_insert(0.0) += w;
                        *local.entry((*b, a)).or_insert(0.0) += w;
                    }
                }
            }
            local
        })
        .collect();
    let mut table = CooccurrenceTable {
        entries: HashMap::new(),
        n_terms: vocab.len(),
    };
    for p in partials {
        table.merge(p);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Source {
    Local { corpus: String, window: usize, epochs: usize },
    External { file: String },
}

/// Dense term vectors sharing one dimension. Vectors are never all-zero.
#[derive(Debug, Clone)]
pub struct EmbeddingSpace {
    dim: usize,
    terms: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
    pub source: Source,
    /// False when the vectors are untrained initialization.
    pub trained: bool,
}

impl EmbeddingSpace {
    pub fn from_vectors(terms: Vec<String>, vectors: Vec<Vec<f32>>, source: Source) -> Result<Self, EmbedError> {
        let dim = vectors.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(dim * vectors.len());
        for (t, v) in terms.iter().zip(&vectors) {
            if v.len() != dim {
                return Err(EmbedError::Dimension { expected: dim, got: v.len() });
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(EmbedError::ZeroVector(t.clone()));
            }
            flat.extend_from_slice(v);
        }
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self {
            dim,
            terms,
            index,
            vectors: flat,
            source,
            trained: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    pub fn contains(&self, term: &str) -> bool {
        self.index.contains_key(term)
    }

    pub fn vector(&self, term: &str) -> Option<&[f32]> {
        self.index.get(term).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Keeps only the listed terms (those present in the space).
    pub fn restrict<'a>(&self, keep: impl IntoIterator<Item = &'a str>) -> Self {
        let keep: HashSet<&str> = keep.into_iter().collect();
        let mut terms = Vec::new();
        let mut vectors = Vec::new();
        for (i, t) in self.terms.iter().enumerate() {
            if keep.contains(t.as_str()) {
                terms.push(t.clone());
                vectors.extend_from_slice(self.row(i));
            }
        }
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            dim: self.dim,
            terms,
            index,
            vectors,
            source: self.source.clone(),
            trained: self.trained,
        }
    }

    /// Multiplies every vector by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        let mut out = self.clone();
        out.vectors.iter_mut().for_each(|x| *x *= factor);
        out
    }

    pub fn cosine(&self, a: &str, b: &str) -> Result<f64, EmbedError> {
        let va = self.vector(a).ok_or_else(|| EmbedError::MissingTerm(a.to_string()))?;
        let vb = self.vector(b).ok_or_else(|| EmbedError::MissingTerm(b.to_string()))?;
        Ok(cosine(va, vb))
    }

    /// The `m` terms other than `term` with the highest cosine similarity.
    /// Ties are broken by lexicographic term order.
    pub fn nearest(&self, term: &str, m: usize) -> Result<Vec<(String, f64)>, EmbedError> {
        let q = self.vector(term).ok_or_else(|| EmbedError::MissingTerm(term.to_string()))?;
        let mut scored: Vec<(usize, f64)> = (0..self.terms.len())
            .into_par_iter()
            .filter(|&i| self.terms[i] != term)
            .map(|i| (i, cosine(q, self.row(i))))
            .collect();
        let order = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then_with(|| self.terms[a.0].cmp(&self.terms[b.0]));
        if m < scored.len() {
            scored.select_nth_unstable_by(m, order);
            scored.truncate(m);
        }
        scored.sort_by(order);
        Ok(scored.into_iter().map(|(i, s)| (self.terms[i].clone(), s)).collect())
    }

    /// Writes the whitespace text format `term v1 … vD`.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            write!(out, "{t}")?;
            for x in self.row(i) {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// `a·b / (‖a‖‖b‖)`, accumulated in f64.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Loads `term v1 … vD` lines. Terms are lowercased; a repeated term
/// replaces the earlier vector with a warning; all-zero vectors are skipped.
pub fn load_vectors(path: &Path) -> Result<EmbeddingSpace, EmbedError> {
    let file = File::open(path).map_err(|source| EmbedError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut terms: Vec<String> = Vec::new();
    let mut vectors: Vec<Vec<f32>> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut dim = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|source| EmbedError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut parts = line.split_whitespace();
        let Some(term) = parts.next() else { continue };
        let values: Vec<f32> = parts
            .map(|p| p.parse::<f32>())
            .collect::<Result<_, _>>()
            .map_err(|e| EmbedError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected || expected == 0 {
            return Err(EmbedError::Ragged {
                line: line_no,
                expected,
                found: values.len(),
            });
        }
        let term = term.to_lowercase();
        if values.iter().all(|&x| x == 0.0) {
            log::warn!("{}:{line_no}: skipping all-zero vector for `{term}`", path.display());
            continue;
        }
        match index.get(&term) {
            Some(&i) => {
                log::warn!("{}:{line_no}: duplicate term `{term}`, keeping the later vector", path.display());
                vectors[i] = values;
            }
            None => {
                index.insert(term.clone(), terms.len());
                terms.push(term);
                vectors.push(values);
            }
        }
    }
    EmbeddingSpace::from_vectors(
        terms,
        vectors,
        Source::External {
            file: path.display().to_string(),
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GloveOptions {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub x_max: f64,
    pub alpha: f64,
}

impl Default for GloveOptions {
    fn default() -> Self {
        Self {
            dim: 300,
            epochs: 50,
            learning_rate: 0.05,
            x_max: 100.0,
            alpha: 0.75,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GloveOutcome {
    pub space: EmbeddingSpace,
    /// Mean weighted squared error per epoch.
    pub losses: Vec<f64>,
}

/// Trains GloVe vectors with AdaGrad on the weighted least-squares objective
/// `f(X_ij)(w_i·c_j + b_i + b̃_j − ln X_ij)²`, `f(x) = min(1, (x/x_max)^α)`.
///
/// Single-threaded and deterministic under `seed`. The returned vector of a
/// term is the sum of its word and context vectors.
pub fn train_glove(
    table: &CooccurrenceTable,
    vocab: &Vocabulary,
    opts: GloveOptions,
    source: Source,
    seed: u64,
) -> Result<GloveOutcome, EmbedError> {
    if table.is_empty() {
        return Err(EmbedError::EmptyTable);
    }
    let n = table.n_terms();
    let dim = opts.dim;
    let mut rng = seed::rng(seed::derive(seed, &[seed::stream::GLOVE]));
    let scale = 0.5 / dim as f64;
    let mut init = |len: usize| -> Vec<f64> { (0..len).map(|_| (rng.gen::<f64>() - 0.5) * 2.0 * scale).collect() };
    let mut word = init(n * dim);
    let mut ctx = init(n * dim);
    let mut bw = init(n);
    let mut bc = init(n);
    let mut gw = vec![1.0f64; n * dim];
    let mut gc = vec![1.0f64; n * dim];
    let mut gbw = vec![1.0f64; n];
    let mut gbc = vec![1.0f64; n];

    let mut triples = table.triples();
    let mut losses = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        triples.shuffle(&mut rng);
        let mut loss = 0.0;
        for &(i, j, x) in &triples {
            let (i, j) = (i as usize, j as usize);
            let (wi, cj) = (i * dim, j * dim);
            let dot: f64 = (0..dim).map(|d| word[wi + d] * ctx[cj + d]).sum();
            let diff = dot + bw[i] + bc[j] - x.ln();
            let weight = (x / opts.x_max).powf(opts.alpha).min(1.0);
            let fdiff = weight * diff;
            loss += 0.5 * fdiff * diff;
            let step = opts.learning_rate * fdiff;
            for d in 0..dim {
                let (a, b) = (wi + d, cj + d);
                let g_word = fdiff * ctx[b];
                let g_ctx = fdiff * word[a];
                word[a] -= opts.learning_rate * g_word / gw[a].sqrt();
                ctx[b] -= opts.learning_rate * g_ctx / gc[b].sqrt();
                gw[a] += g_word * g_word;
                gc[b] += g_ctx * g_ctx;
            }
            bw[i] -= step / gbw[i].sqrt();
            bc[j] -= step / gbc[j].sqrt();
            gbw[i] += fdiff * fdiff;
            gbc[j] += fdiff * fdiff;
        }
        let mean = loss / triples.len() as f64;
        if !mean.is_finite() {
            return Err(EmbedError::Diverged { epoch, loss: mean });
        }
        losses.push(mean);
    }

    let vectors: Vec<Vec<f32>> = (0..n)
        .map(|i| (0..dim).map(|d| (word[i * dim + d] + ctx[i * dim + d]) as f32).collect())
        .collect();
    let mut space = EmbeddingSpace::from_vectors(vocab.terms().to_vec(), vectors, source)?;
    space.trained = opts.epochs > 0;
    if !space.trained {
        log::warn!("GloVe run with zero epochs: vectors are untrained initialization");
    }
    Ok(GloveOutcome { space, losses })
}

/// One neighbour added during expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub keyword: String,
    pub rank: usize,
    pub neighbor: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub list: KeywordList,
    pub trace: Vec<ExpansionRow>,
    /// Keywords without a vector in the space.
    pub skipped: Vec<String>,
}

/// Appends, for every keyword independently, its `m` nearest neighbours.
///
/// The result is a set: original keywords are always kept and duplicates
/// collapse. Keywords missing from the space are skipped and reported.
/// `m` outside 1..=9 is allowed with a warning.
pub fn expand_query(list: &KeywordList, space: &EmbeddingSpace, m: usize, space_id: &str) -> Expansion {
    if !(1..=9).contains(&m) {
        log::warn!("expansion size M={m} is outside the studied range 1..=9");
    }
    let mut expanded = list.clone();
    expanded.provenance = Provenance::Expanded {
        source: list.terms().iter().cloned().collect(),
        m,
        space: space_id.to_string(),
    };
    let mut trace = Vec::new();
    let mut skipped = Vec::new();
    for kw in list.terms() {
        match space.nearest(kw, m) {
            Ok(neighbors) => {
                for (rank, (neighbor, cosine)) in neighbors.into_iter().enumerate() {
                    expanded.insert(&neighbor);
                    trace.push(ExpansionRow {
                        keyword: kw.clone(),
                        rank: rank + 1,
                        neighbor,
                        cosine,
                    });
                }
            }
            Err(_) => {
                log::warn!("keyword `{kw}` has no vector in space `{space_id}`; skipped");
                skipped.push(kw.clone());
            }
        }
    }
    Expansion {
        list: expanded,
        trace,
        skipped,
    }
}

/// Table-3 style CSV: `keyword,rank,neighbor,cosine`.
pub fn write_trace_csv<W: Write>(rows: &[ExpansionRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
