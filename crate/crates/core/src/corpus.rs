//! Labeled corpora and fold plans.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate document id `{id}` (rows {first} and {second})")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },
    #[error("malformed input at row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("corpus must contain at least one relevant and one irrelevant document ({relevant} relevant of {total})")]
    SingleClass { relevant: usize, total: usize },
    #[error("document `{0}` has no label")]
    Unlabeled(String),
    #[error("document `{0}` has empty text")]
    EmptyText(String),
    #[error("invalid fold count {n_folds} for {n_docs} documents")]
    InvalidFoldCount { n_folds: usize, n_docs: usize },
    #[error("class with {members} members is too small for {n_folds} stratified folds")]
    ClassTooSmall { members: usize, n_folds: usize },
    #[error("fold plan does not match corpus: {0}")]
    PlanMismatch(String),
    #[error("unknown corpus format `{0}` (expected jsonl or csv)")]
    UnknownFormat(String),
}

/// Binary relevance label. Serialized as `0`/`1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Irrelevant,
    Relevant,
}

impl Label {
    pub fn is_relevant(self) -> bool {
        self == Label::Relevant
    }

    pub fn as_u8(self) -> u8 {
        self.is_relevant() as u8
    }
}

impl From<bool> for Label {
    fn from(relevant: bool) -> Self {
        if relevant {
            Label::Relevant
        } else {
            Label::Irrelevant
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(Label::Irrelevant),
            1 => Ok(Label::Relevant),
            other => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

/// An ordered, fully labeled corpus with at least one document per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    name: String,
    docs: Vec<Document>,
}

impl LabeledCorpus {
    pub fn new(name: impl Into<String>, docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen: HashMap<&str, usize> = HashMap::with_capacity(docs.len());
        let mut relevant = 0;
        for (row, doc) in docs.iter().enumerate() {
            if let Some(first) = seen.insert(doc.id.as_str(), row) {
                return Err(CorpusError::DuplicateId {
                    id: doc.id.clone(),
                    first,
                    second: row,
                });
            }
            if doc.text.trim().is_empty() {
                return Err(CorpusError::EmptyText(doc.id.clone()));
            }
            match doc.label {
                Some(Label::Relevant) => relevant += 1,
                Some(Label::Irrelevant) => {}
                None => return Err(CorpusError::Unlabeled(doc.id.clone())),
            }
        }
        if relevant == 0 || relevant == docs.len() {
            return Err(CorpusError::SingleClass {
                relevant,
                total: docs.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            docs,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.docs.iter().map(|d| d.text.as_str()).collect()
    }

    /// Relevance of every document, in corpus order.
    pub fn truth(&self) -> Vec<bool> {
        self.docs
            .iter()
            .map(|d| d.label.is_some_and(Label::is_relevant))
            .collect()
    }

    pub fn relevant_count(&self) -> usize {
        self.truth().into_iter().filter(|&r| r).count()
    }

    pub fn positive_share(&self) -> f64 {
        self.relevant_count() as f64 / self.len() as f64
    }

    /// Writes the corpus as canonical JSONL.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let io_err = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        for doc in &self.docs {
            let line = serde_json::to_string(doc).expect("documents always serialize");
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl FromStr for Format {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

/// Field names and label vocabulary of an input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub id: String,
    pub text: String,
    pub label: String,
    pub relevant_values: Vec<String>,
    pub irrelevant_values: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            text: "text".into(),
            label: "label".into(),
            relevant_values: vec!["1".into(), "true".into(), "relevant".into()],
            irrelevant_values: vec!["0".into(), "false".into(), "irrelevant".into()],
        }
    }
}

impl Schema {
    fn map_label(&self, raw: &str) -> Option<Label> {
        let raw = raw.trim();
        let matches = |values: &[String]| values.iter().any(|v| v.eq_ignore_ascii_case(raw));
        if matches(&self.relevant_values) {
            Some(Label::Relevant)
        } else if matches(&self.irrelevant_values) {
            Some(Label::Irrelevant)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RejectReason {
    EmptyText,
    UnmappableLabel(String),
    MissingField(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::EmptyText => write!(f, "empty text"),
            RejectReason::UnmappableLabel(v) => write!(f, "unmappable label `{v}`"),
            RejectReason::MissingField(name) => write!(f, "missing field `{name}`"),
        }
    }
}

/// A row that failed validation. Rows are 1-based data rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub row: usize,
    pub id: Option<String>,
    pub reason: RejectReason,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub corpus: LabeledCorpus,
    pub rejected: Vec<Rejection>,
}

struct RawRow {
    id: Option<String>,
    text: Option<String>,
    label: Option<String>,
}

/// Loads a labeled corpus.
///
/// Rows with empty text, a missing field or a label outside the schema's
/// vocabulary are collected in [`LoadReport::rejected`]. Unreadable files,
/// malformed records and duplicate ids abort the load.
pub fn load_corpus(path: &Path, format: Format, schema: &Schema) -> Result<LoadReport, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let rows = match format {
        Format::Jsonl => read_jsonl_rows(BufReader::new(file), schema, path)?,
        Format::Csv => read_csv_rows(file, schema)?,
    };

    let mut docs = Vec::with_capacity(rows.len());
    let mut rejected = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in rows.into_iter().enumerate() {
        let row = i + 1;
        let Some(id) = raw.id else {
            rejected.push(Rejection {
                row,
                id: None,
                reason: RejectReason::MissingField(schema.id.clone()),
            });
            continue;
        };
        if let Some(first) = seen.insert(id.clone(), row) {
            return Err(CorpusError::DuplicateId {
                id,
                first,
                second: row,
            });
        }
        let reject = |reason| Rejection {
            row,
            id: Some(id.clone()),
            reason,
        };
        let text = match raw.text {
            Some(t) if !t.trim().is_empty() => t,
            Some(_) => {
                rejected.push(reject(RejectReason::EmptyText));
                continue;
            }
            None => {
                rejected.push(reject(RejectReason::MissingField(schema.text.clone())));
                continue;
            }
        };
        let label = match raw.label {
            Some(raw_label) => match schema.map_label(&raw_label) {
                Some(l) => l,
                None => {
                    rejected.push(reject(RejectReason::UnmappableLabel(raw_label)));
                    continue;
                }
            },
            None => {
                rejected.push(reject(RejectReason::MissingField(schema.label.clone())));
                continue;
            }
        };
        docs.push(Document {
            id,
            text,
            label: Some(label),
        });
    }
    for r in &rejected {
        log::warn!("{}: row {} rejected: {}", path.display(), r.row, r.reason);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(LoadReport {
        corpus: LabeledCorpus::new(name, docs)?,
        rejected,
    })
}

fn json_scalar(value: Option<&serde_json::Value>) -> Option<String> {
    match value? {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn read_jsonl_rows(reader: impl BufRead, schema: &Schema, path: &Path) -> Result<Vec<RawRow>, CorpusError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            row: i + 1,
            message: e.to_string(),
        })?;
        rows.push(RawRow {
            id: json_scalar(value.get(&schema.id)),
            text: value.get(&schema.text).and_then(|v| v.as_str()).map(str::to_string),
            label: json_scalar(value.get(&schema.label)),
        });
    }
    Ok(rows)
}

fn read_csv_rows(file: File, schema: &Schema) -> Result<Vec<RawRow>, CorpusError> {
    let mut reader = csv::Reader::from_reader(file);
    let malformed = |row, e: csv::Error| CorpusError::Malformed {
        row,
        message: e.to_string(),
    };
    let headers = reader.headers().map_err(|e| malformed(0, e))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (id_col, text_col, label_col) = (column(&schema.id), column(&schema.text), column(&schema.label));
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(i + 1, e))?;
        let get = |col: Option<usize>| col.and_then(|c| record.get(c)).map(str::to_string);
        rows.push(RawRow {
            id: get(id_col),
            text: get(text_col),
            label: get(label_col),
        });
    }
    Ok(rows)
}

/// Assignment of every document to one of `n_folds` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    #[serde(default)]
    pub stratified: bool,
    pub assignment: IndexMap<String, usize>,
}

impl FoldPlan {
    /// Fold index per document in corpus order.
    pub fn folds_for(&self, corpus: &LabeledCorpus) -> Result<Vec<usize>, CorpusError> {
        if self.assignment.len() != corpus.len() {
            return Err(CorpusError::PlanMismatch(format!(
                "plan covers {} ids, corpus has {}",
                self.assignment.len(),
                corpus.len()
            )));
        }
        corpus
            .docs()
            .iter()
            .map(|d| match self.assignment.get(&d.id) {
                Some(&f) if f < self.n_folds => Ok(f),
                Some(&f) => Err(CorpusError::PlanMismatch(format!("fold {f} out of range for `{}`", d.id))),
                None => Err(CorpusError::PlanMismatch(format!("id `{}` missing", d.id))),
            })
            .collect()
    }

    /// Corpus positions of the documents in `fold`.
    pub fn members(&self, corpus: &LabeledCorpus, fold: usize) -> Result<Vec<usize>, CorpusError> {
        Ok(self
            .folds_for(corpus)?
            .into_iter()
            .enumerate()
            .filter_map(|(i, f)| (f == fold).then_some(i))
            .collect())
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fold plans always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, CorpusError> {
        serde_json::from_str(s).map_err(|e| CorpusError::Malformed {
            row: 0,
            message: e.to_string(),
        })
    }
}

/// Deals positions `0..labels.len()` into `n_folds` folds.
///
/// Unstratified plans shuffle all positions and deal them round-robin.
/// Stratified plans shuffle each class separately and deal the positives
/// first, then continue dealing the negatives from the next fold, so both
/// total and positive counts differ by at most one between folds.
pub fn assign_folds(labels: &[bool], n_folds: usize, stratified: bool, seed: u64) -> Result<Vec<usize>, CorpusError> {
    if n_folds < 2 || n_folds > labels.len() {
        return Err(CorpusError::InvalidFoldCount {
            n_folds,
            n_docs: labels.len(),
        });
    }
    let mut rng = seed::rng(seed::derive(seed, &[seed::stream::FOLDS]));
    let order: Vec<usize> = if stratified {
        let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i]);
        for members in [pos.len(), neg.len()] {
            if members < n_folds {
                return Err(CorpusError::ClassTooSmall { members, n_folds });
            }
        }
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        pos.into_iter().chain(neg).collect()
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut folds = vec![0; labels.len()];
    for (slot, &i) in order.iter().enumerate() {
        folds[i] = slot % n_folds;
    }
    Ok(folds)
}

pub fn make_folds(corpus: &LabeledCorpus, n_folds: usize, stratified: bool, seed: u64) -> Result<FoldPlan, CorpusError> {
    let folds = assign_folds(&corpus.truth(), n_folds, stratified, seed)?;
    let assignment = corpus
        .docs()
        .iter()
        .zip(folds)
        .map(|(d, f)| (d.id.clone(), f))
        .collect();
    Ok(FoldPlan {
        n_folds,
        seed,
        stratified,
        assignment,
    })
}

/// Ids of a corpus as a set, for disjointness checks.
pub fn id_set(corpus: &LabeledCorpus) -> HashSet<&str> {
    corpus.docs().iter().map(|d| d.id.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str, relevant: bool) -> Document {
        Document {
            id: id.into(),
            text: text.into(),
            label: Some(relevant.into()),
        }
    }

    fn corpus(n: usize, relevant: usize) -> LabeledCorpus {
        let docs = (0..n).map(|i| doc(&format!("d{i}"), "text", i < relevant)).collect();
        LabeledCorpus::new("t", docs).unwrap()
    }

    fn write(contents: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_row_file_has_half_share() {
        let f = write(
            "{\"id\":\"a\",\"text\":\"oil\",\"label\":1}\n{\"id\":\"b\",\"text\":\"gold\",\"label\":0}\n",
            ".jsonl",
        );
        let report = load_corpus(f.path(), Format::Jsonl, &Schema::default()).unwrap();
        assert_eq!(report.corpus.len(), 2);
        assert_eq!(report.corpus.positive_share(), 0.5);
        assert!(report.rejected.is_empty());
    }

    #[test]
    fn duplicate_id_is_structural_error() {
        let f = write(
            "{\"id\":\"a\",\"text\":\"x\",\"label\":1}\n{\"id\":\"a\",\"text\":\"y\",\"label\":0}\n",
            ".jsonl",
        );
        let err = load_corpus(f.path(), Format::Jsonl, &Schema::default()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { ref id, first: 1, second: 2 } if id == "a"));
    }

    #[test]
    fn bad_rows_are_reported_not_dropped_silently() {
        let f = write(
            "{\"id\":\"a\",\"text\":\"x\",\"label\":1}\n\
             {\"id\":\"b\",\"text\":\"   \",\"label\":0}\n\
             {\"id\":\"c\",\"text\":\"z\",\"label\":\"maybe\"}\n\
             {\"id\":\"d\",\"text\":\"w\",\"label\":0}\n",
            ".jsonl",
        );
        let report = load_corpus(f.path(), Format::Jsonl, &Schema::default()).unwrap();
        assert_eq!(report.corpus.len(), 2);
        assert_eq!(report.rejected.len(), 2);
        assert_eq!(report.rejected[0].reason, RejectReason::EmptyText);
        assert_eq!(report.rejected[1].reason, RejectReason::UnmappableLabel("maybe".into()));
    }

    #[test]
    fn missing_file_errors() {
        let err = load_corpus(Path::new("/nonexistent/x.jsonl"), Format::Jsonl, &Schema::default()).unwrap_err();
        assert!(matches!(err, CorpusError::Io { .. }));
    }

    #[test]
    fn csv_with_schema_map() {
        let f = write("doc,body,topic\n1,\"crude, oil\",yes\n2,wheat,no\n3,gold,no\n", ".csv");
        let schema = Schema {
            id: "doc".into(),
            text: "body".into(),
            label: "topic".into(),
            relevant_values: vec!["yes".into()],
            irrelevant_values: vec!["no".into()],
        };
        let report = load_corpus(f.path(), Format::Csv, &schema).unwrap();
        assert_eq!(report.corpus.docs()[0].text, "crude, oil");
        assert_eq!(report.corpus.truth(), vec![true, false, false]);
    }

    #[test]
    fn jsonl_round_trip() {
        let c = LabeledCorpus::new(
            "rt",
            vec![doc("x1", "Crude \"oil\"\nnews", true), doc("x2", "Flüchtlinge", false)],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.jsonl");
        c.write_jsonl(&path).unwrap();
        let back = load_corpus(&path, Format::Jsonl, &Schema::default()).unwrap().corpus;
        assert_eq!(back, c);
    }

    #[test]
    fn single_class_corpus_rejected() {
        let err = LabeledCorpus::new("t", vec![doc("a", "x", false)]).unwrap_err();
        assert!(matches!(err, CorpusError::SingleClass { .. }));
    }

    #[test]
    fn stratified_hundred_docs_five_folds() {
        let plan = make_folds(&corpus(100, 10), 5, true, 3).unwrap();
        let c = corpus(100, 10);
        for f in 0..5 {
            let members = plan.members(&c, f).unwrap();
            assert_eq!(members.len(), 20);
            assert_eq!(members.iter().filter(|&&i| i < 10).count(), 2);
        }
    }

    #[test]
    fn reuters_sized_fold_sizes() {
        let plan = make_folds(&corpus(10_377, 566), 5, false, 11).unwrap();
        let mut sizes = plan.fold_sizes();
        sizes.sort();
        assert_eq!(sizes, vec![2075, 2075, 2075, 2076, 2076]);
    }

    #[test]
    fn folds_are_deterministic_and_seed_sensitive() {
        let c = corpus(50, 7);
        assert_eq!(make_folds(&c, 5, false, 1).unwrap(), make_folds(&c, 5, false, 1).unwrap());
        assert_ne!(make_folds(&c, 5, false, 1).unwrap(), make_folds(&c, 5, false, 2).unwrap());
    }

    #[test]
    fn stratification_needs_enough_members() {
        let err = make_folds(&corpus(50, 3), 5, true, 1).unwrap_err();
        assert!(matches!(err, CorpusError::ClassTooSmall { members: 3, n_folds: 5 }));
        assert!(make_folds(&corpus(50, 3), 1, false, 1).is_err());
    }

    #[test]
    fn fold_plan_json_layout() {
        let c = corpus(4, 2);
        let plan = make_folds(&c, 2, false, 9).unwrap();
        let json: serde_json::Value = serde_json::from_str(&plan.to_json()).unwrap();
        assert_eq!(json["n_folds"], 2);
        assert_eq!(json["seed"], 9);
        assert_eq!(json["assignment"].as_object().unwrap().len(), 4);
        assert_eq!(FoldPlan::from_json(&plan.to_json()).unwrap(), plan);
    }

    proptest::proptest! {
        #[test]
        fn fold_plan_invariants(n in 10usize..300, pos_frac in 0.05f64..0.5, k in 2usize..8, seed: u64, stratified: bool) {
            let relevant = ((n as f64 * pos_frac) as usize).max(k).min(n - k);
            let c = corpus(n, relevant);
            let plan = make_folds(&c, k, stratified, seed).unwrap();
            let folds = plan.folds_for(&c).unwrap();
            proptest::prop_assert_eq!(folds.len(), n);
            let sizes = plan.fold_sizes();
            proptest::prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            if stratified {
                let mut pos = vec![0usize; k];
                for (i, f) in folds.iter().enumerate() {
                    if i < relevant { pos[*f] += 1; }
                }
                proptest::prop_assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
            }
        }
    }
}
