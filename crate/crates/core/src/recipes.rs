//! End-to-end experiment recipes shared by the CLI and the acceptance suite.
//! Each takes a labeled corpus and plain settings and returns in-memory
//! results; persistence is the caller's business.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabeledCorpus;
use crate::embed::{self, EmbedError, EmbeddingSpace, GloveOptions, Source};
use crate::keywords::{self, GridPoint, KeywordError, KeywordList, PredictiveTerms, QueryIndex};
use crate::metrics::Confusion;
use crate::seed;
use crate::textpipe::{build_dtm, DocTermMatrix, Lang, Pipeline, Prune, TextError, Vocabulary, Weighting};
use crate::topicrules::{self, LdaOptions, SweepRow, SweepSummary, TopicError, TopicModelFit};

#[derive(Debug, Error)]
pub enum RecipeError {
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Keyword(#[from] KeywordError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Topic(#[from] TopicError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordSettings {
    pub lang: Lang,
    pub prune: Prune,
    pub grid: Vec<GridPoint>,
    pub top_n: usize,
    pub n_lists: usize,
    pub list_size: usize,
}

impl Default for KeywordSettings {
    fn default() -> Self {
        Self {
            lang: Lang::En,
            prune: Prune::keywords(),
            grid: keywords::default_grid(),
            top_n: keywords::TOP_TERMS,
            n_lists: 100,
            list_size: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KeywordRun {
    pub predictive: PredictiveTerms,
    pub lists: Vec<KeywordList>,
    pub confusions: Vec<Confusion>,
}

impl KeywordRun {
    /// `(min, mean, max)` F1 across lists, undefined counted as 0.
    pub fn f1_summary(&self) -> (f64, f64, f64) {
        summarize(self.confusions.iter().map(|c| c.f1().unwrap_or(0.0)))
    }
}

pub fn summarize(values: impl Iterator<Item = f64>) -> (f64, f64, f64) {
    let (mut lo, mut hi, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
        n += 1;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    (lo, sum / n as f64, hi)
}

/// Boolean unigram matrix for keyword extraction: lowercased, unstemmed.
pub fn keyword_features(corpus: &LabeledCorpus, s: &KeywordSettings) -> Result<(Vocabulary, DocTermMatrix), RecipeError> {
    Ok(build_dtm(&corpus.texts(), Pipeline::new(s.lang, false), s.prune, Weighting::Boolean)?)
}

/// Predictive terms → sampled lists → OR-query per list.
pub fn run_keywords(corpus: &LabeledCorpus, s: &KeywordSettings, root_seed: u64) -> Result<KeywordRun, RecipeError> {
    let (vocab, dtm) = keyword_features(corpus, s)?;
    let truth = corpus.truth();
    let predictive = keywords::fit_predictive_model(&dtm, &vocab, &truth, &s.grid, s.top_n, root_seed)?;
    let lists = keywords::sample_keyword_lists(
        &predictive,
        s.n_lists,
        s.list_size,
        seed::derive(root_seed, &[seed::stream::KEYWORDS]),
    )?;
    let index = QueryIndex::new(&corpus.texts(), s.lang, false);
    let confusions = lists
        .iter()
        .map(|l| Confusion::from_slices(&index.query(l), &truth).expect("one prediction per document"))
        .collect();
    Ok(KeywordRun {
        predictive,
        lists,
        confusions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GloveSettings {
    pub window: usize,
    pub min_count: usize,
    pub glove: GloveOptions,
}

impl Default for GloveSettings {
    fn default() -> Self {
        Self {
            window: 6,
            min_count: 5,
            glove: GloveOptions::default(),
        }
    }
}

/// Trains local vectors on the lowercased corpus tokens.
pub fn local_glove(corpus: &LabeledCorpus, lang: Lang, s: &GloveSettings, root_seed: u64) -> Result<EmbeddingSpace, RecipeError> {
    let pipeline = Pipeline::new(lang, false);
    let prune = Prune {
        min_total_count: s.min_count,
        ..Prune::default()
    };
    let texts = corpus.texts();
    let (vocab, _) = build_dtm(&texts, pipeline, prune, Weighting::Count)?;
    let tokens: Vec<Vec<String>> = texts.iter().map(|t| pipeline.analyze(t)).collect();
    let table = embed::build_cooccurrence(&tokens, &vocab, s.window)?;
    let source = Source::Local {
        corpus: corpus.name().to_string(),
        window: s.window,
        epochs: s.glove.epochs,
    };
    Ok(embed::train_glove(&table, &vocab, s.glove, source, root_seed)?.space)
}

/// One point of an expansion trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionPoint {
    pub list: usize,
    pub m: usize,
    pub size: usize,
    pub confusion: Confusion,
    pub expanded: KeywordList,
}

/// For every list, the unexpanded query (`M = 0`) and each `M` in `ms`.
pub fn run_expansion(
    corpus: &LabeledCorpus,
    lang: Lang,
    lists: &[KeywordList],
    space: &EmbeddingSpace,
    space_id: &str,
    ms: &[usize],
) -> Vec<ExpansionPoint> {
    let index = QueryIndex::new(&corpus.texts(), lang, false);
    let truth = corpus.truth();
    let mut out = Vec::with_capacity(lists.len() * (ms.len() + 1));
    for (li, list) in lists.iter().enumerate() {
        let zero = std::iter::once((0, list.clone()));
        let expanded = ms.iter().map(|&m| (m, embed::expand_query(list, space, m, space_id).list));
        for (m, l) in zero.chain(expanded) {
            let confusion = Confusion::from_slices(&index.query(&l), &truth).expect("one prediction per document");
            out.push(ExpansionPoint {
                list: li,
                m,
                size: l.len(),
                confusion,
                expanded: l,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopicSettings {
    pub lang: Lang,
    pub stem: bool,
    pub prune: Prune,
    pub ks: Vec<usize>,
    pub lda: LdaOptions,
    pub xi_grid: Vec<f64>,
    pub max_relevant: usize,
}

impl Default for TopicSettings {
    fn default() -> Self {
        Self {
            lang: Lang::En,
            stem: true,
            prune: Prune::keywords(),
            ks: topicrules::K_GRID.to_vec(),
            lda: LdaOptions::default(),
            xi_grid: topicrules::XI_GRID.to_vec(),
            max_relevant: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TopicRun {
    pub vocab: Vocabulary,
    pub fits: Vec<TopicModelFit>,
    pub summary: SweepSummary,
}

/// Count matrix → one LDA fit per K → exhaustive rule sweep.
pub fn run_topics(
    corpus: &LabeledCorpus,
    s: &TopicSettings,
    root_seed: u64,
    sink: impl FnMut(&SweepRow),
) -> Result<TopicRun, RecipeError> {
    let (vocab, dtm) = build_dtm(&corpus.texts(), Pipeline::new(s.lang, s.stem), s.prune, Weighting::Count)?;
    let fits = topicrules::fit_grid(&dtm, &s.ks, s.lda, root_seed)?;
    let summary = topicrules::sweep_rules(&fits, s.max_relevant, &s.xi_grid, &corpus.truth(), sink)?;
    Ok(TopicRun { vocab, fits, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSettings {
    pub lang: Lang,
    pub stem: bool,
    pub prune: Prune,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            lang: Lang::En,
            stem: true,
            prune: Prune {
                min_doc_count: 5,
                min_total_count: 0,
                min_tfidf_quantile: 0.1,
            },
        }
    }
}

/// Boolean stemmed features for the supervised classifiers.
pub fn supervised_features(corpus: &LabeledCorpus, s: &FeatureSettings) -> Result<(Vocabulary, DocTermMatrix), RecipeError> {
    Ok(build_dtm(&corpus.texts(), Pipeline::new(s.lang, s.stem), s.prune, Weighting::Boolean)?)
}
