//! Retrieval of rare relevant documents from large, imbalanced corpora.
//!
//! Four retrieval strategies share one evaluation harness:
//!
//! * [`keywords`]: predictive keyword lists drawn from a regularized logistic
//!   regression and evaluated as boolean OR-queries.
//! * [`embed`]: GloVe-style embeddings and per-keyword nearest-neighbour
//!   query expansion.
//! * [`topicrules`]: LDA topic models turned into classification rules
//!   `r = Θ·C` with a share threshold, plus exhaustive rule sweeps.
//! * [`learn`] and [`activeloop`]: linear classifiers with imbalance
//!   treatments, trained passively or through pool-based uncertainty sampling.
//!
//! [`corpus`], [`textpipe`] and [`metrics`] provide the shared substrate;
//! [`recipes`] wires the pieces into complete experiments.

pub mod activeloop;
pub mod corpus;
pub mod embed;
pub mod keywords;
pub mod learn;
pub mod metrics;
pub mod recipes;
pub mod seed;
pub mod textpipe;
pub mod topicrules;

pub use activeloop::{LearningTrace, LoopConfig, LoopMode, Oracle, SimulatedOracle, TraceRecord};
pub use corpus::{Document, FoldPlan, Label, LabeledCorpus};
pub use embed::EmbeddingSpace;
pub use keywords::{KeywordList, PredictiveTerms};
pub use learn::{LinearModel, ModelKind, Origin, ResamplePlan};
pub use metrics::{Confusion, Scores};
pub use textpipe::{DocTermMatrix, Lang, Vocabulary, Weighting};
pub use topicrules::{RelevanceRule, TopicModelFit};
