//! Predictive keyword extraction, coefficient-weighted keyword sampling and
//! boolean OR-queries.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};

use indexmap::IndexSet;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::assign_folds;
use crate::metrics::Confusion;
use crate::seed;
use crate::textpipe::{fold_diacritics, stem, DocTermMatrix, Lang, Pipeline, Vocabulary, Weighting};

/// Number of top terms retained from the fitted model.
pub const TOP_TERMS: usize = 50;

/// Coefficients at or below this value do not count as predictive.
pub const ZERO_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum KeywordError {
    #[error("document-term matrix must be boolean-weighted")]
    NotBoolean,
    #[error("labels ({labels}) do not match matrix rows ({rows})")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("both classes must be present to fit a predictive model")]
    SingleClass,
    #[error("no term has a positive coefficient")]
    NoSeparatingTerms,
    #[error("requested {requested} terms per list but only {available} have positive weight")]
    InsufficientTerms { requested: usize, available: usize },
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("coefficients must be non-negative and sorted non-increasing")]
    InvalidRanking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Penalty {
    L1,
    L2,
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Penalty::L1 => "L1",
            Penalty::L2 => "L2",
        })
    }
}

/// One point of the regularization grid. `c` is the inverse strength:
/// the objective is `c·Σ logloss + penalty(w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub penalty: Penalty,
    pub c: f64,
}

pub fn default_grid() -> Vec<GridPoint> {
    [Penalty::L1, Penalty::L2]
        .into_iter()
        .flat_map(|penalty| [0.1, 1.0, 10.0].map(|c| GridPoint { penalty, c }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when the largest coefficient change in a sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: 1000,
        }
    }
}

/// Regularized logistic regression fitted by coordinate descent.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub sweeps: usize,
    pub converged: bool,
}

impl LogisticFit {
    pub fn decision(&self, dtm: &DocTermMatrix, i: usize) -> f64 {
        dtm.row(i).dot(&self.weights) + self.intercept
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logloss(z: f64, target: f64) -> f64 {
    softplus(z) - target * z
}

/// Fits `c·Σ logloss(w·x_i + b, y_i) + penalty(w)` with an unpenalized
/// intercept.
///
/// Each coordinate takes a Newton step on the smooth part (soft-thresholded
/// for L1) followed by an Armijo backtracking line search, so the objective
/// never increases.
pub fn fit_logistic(dtm: &DocTermMatrix, labels: &[bool], point: GridPoint, opts: SolverOptions) -> LogisticFit {
    const ARMIJO: f64 = 0.01;
    let n = dtm.n_rows();
    let columns = dtm.columns();
    let target: Vec<f64> = labels.iter().map(|&y| y as u8 as f64).collect();
    let mut w = vec![0.0; dtm.n_cols()];
    let mut b = 0.0;
    let mut z = vec![0.0; n];
    let c = point.c;
    let reg = |v: f64| match point.penalty {
        Penalty::L1 => v.abs(),
        Penalty::L2 => 0.5 * v * v,
    };

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;

        // intercept
        {
            let (mut g, mut h) = (0.0, 0.0);
            for i in 0..n {
                let p = sigmoid(z[i]);
                g += p - target[i];
                h += p * (1.0 - p);
            }
            if h > 1e-12 {
                let d = -g / h;
                let base: f64 = (0..n).map(|i| logloss(z[i], target[i])).sum();
                let mut step = 1.0;
                for _ in 0..30 {
                    let trial: f64 = (0..n).map(|i| logloss(z[i] + step * d, target[i])).sum();
                    if trial - base <= ARMIJO * step * g * d {
                        break;
                    }
                    step *= 0.5;
                }
                let delta = step * d;
                b += delta;
                z.iter_mut().for_each(|zi| *zi += delta);
                max_change = max_change.max(delta.abs());
            }
        }

        for (j, col) in columns.iter().enumerate() {
            if col.is_empty() {
                continue;
            }
            let (mut g, mut h) = (0.0, 0.0);
            for &(i, x) in col {
                let i = i as usize;
                let p = sigmoid(z[i]);
                g += x * (p - target[i]);
                h += x * x * p * (1.0 - p);
            }
            g *= c;
            h = c * h + 1e-12;
            let wj = w[j];
            let d = match point.penalty {
                Penalty::L2 => -(g + wj) / (h + 1.0),
                Penalty::L1 => {
                    if g + 1.0 <= h * wj {
                        -(g + 1.0) / h
                    } else if g - 1.0 >= h * wj {
                        -(g - 1.0) / h
                    } else {
                        -wj
                    }
                }
            };
            if d == 0.0 {
                continue;
            }
            let base: f64 = col.iter().map(|&(i, _)| logloss(z[i as usize], target[i as usize])).sum();
            let decrease_bound = match point.penalty {
                Penalty::L1 => g * d + reg(wj + d) - reg(wj),
                Penalty::L2 => (g + wj) * d,
            };
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: f64 = col
                    .iter()
                    .map(|&(i, x)| logloss(z[i as usize] + step * d * x, target[i as usize]))
                    .sum();
                let change = c * (trial - base) + reg(wj + step * d) - reg(wj);
                if change <= ARMIJO * step * decrease_bound {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                continue;
            }
            let delta = step * d;
            w[j] += delta;
            for &(i, x) in col {
                z[i as usize] += delta * x;
            }
            max_change = max_change.max(delta.abs());
        }
        if max_change < opts.tol {
            converged = true;
            break;
        }
    }
    LogisticFit {
        weights: w,
        intercept: b,
        sweeps,
        converged,
    }
}

/// Terms ranked by logistic-regression coefficient, largest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveTerms {
    pub ranked: Vec<(String, f64)>,
    pub penalty: Penalty,
    pub regularization_strength: f64,
    /// Fewer than [`TOP_TERMS`] terms had a positive coefficient.
    pub truncated: bool,
}

impl PredictiveTerms {
    /// Wraps an externally supplied ranking (e.g. loaded from CSV).
    pub fn new(ranked: Vec<(String, f64)>, penalty: Penalty, regularization_strength: f64) -> Result<Self, KeywordError> {
        let sorted = ranked.windows(2).all(|w| w[0].1 >= w[1].1);
        if !sorted || ranked.iter().any(|(_, c)| c.is_nan() || *c < 0.0) {
            return Err(KeywordError::InvalidRanking);
        }
        Ok(Self {
            truncated: ranked.len() < TOP_TERMS,
            ranked,
            penalty,
            regularization_strength,
        })
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.ranked.iter().map(|(t, _)| t.as_str())
    }

    /// Appendix-style table: `rank,term,coefficient`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "term", "coefficient"])?;
        for (rank, (term, coef)) in self.ranked.iter().enumerate() {
            w.write_record([(rank + 1).to_string(), term.clone(), coef.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Selects the grid point with the best held-out F1 on a stratified 80/20
/// split, refits it on all documents, and returns the `top_n` terms with the
/// largest positive coefficients. Ties keep vocabulary order.
pub fn fit_predictive_model(
    dtm: &DocTermMatrix,
    vocab: &Vocabulary,
    labels: &[bool],
    grid: &[GridPoint],
    top_n: usize,
    seed: u64,
) -> Result<PredictiveTerms, KeywordError> {
    if dtm.weighting() != Weighting::Boolean {
        return Err(KeywordError::NotBoolean);
    }
    if labels.len() != dtm.n_rows() {
        return Err(KeywordError::LabelMismatch {
            labels: labels.len(),
            rows: dtm.n_rows(),
        });
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        return Err(KeywordError::SingleClass);
    }
    let best = match grid {
        [] => return Err(KeywordError::EmptyGrid),
        [only] => *only,
        _ => select_grid_point(dtm, labels, grid, seed),
    };
    let fit = fit_logistic(dtm, labels, best, SolverOptions::default());
    if !fit.converged {
        log::warn!("logistic regression ({} C={}) stopped after {} sweeps", best.penalty, best.c, fit.sweeps);
    }
    let mut order: Vec<usize> = (0..fit.weights.len()).filter(|&j| fit.weights[j] > ZERO_TOL).collect();
    if order.is_empty() {
        return Err(KeywordError::NoSeparatingTerms);
    }
    order.sort_by(|&a, &b| fit.weights[b].total_cmp(&fit.weights[a]).then(a.cmp(&b)));
    let truncated = order.len() < top_n;
    if truncated {
        log::warn!("only {} terms have a positive coefficient", order.len());
    }
    order.truncate(top_n);
    Ok(PredictiveTerms {
        ranked: order.into_iter().map(|j| (vocab.term(j).to_string(), fit.weights[j])).collect(),
        penalty: best.penalty,
        regularization_strength: best.c,
        truncated,
    })
}

fn select_grid_point(dtm: &DocTermMatrix, labels: &[bool], grid: &[GridPoint], seed: u64) -> GridPoint {
    // 5 stratified folds; fold 0 is the held-out fifth
    let min_class = labels.iter().filter(|&&y| y).count().min(labels.iter().filter(|&&y| !y).count());
    let folds = if min_class >= 5 {
        assign_folds(labels, 5, true, seed::derive(seed, &[seed::stream::TUNING]))
    } else {
        assign_folds(labels, 5.min(labels.len()), false, seed::derive(seed, &[seed::stream::TUNING]))
    };
    let Ok(folds) = folds else {
        return grid[0];
    };
    let train: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] != 0).collect();
    let held: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == 0).collect();
    let train_dtm = dtm.select_rows(&train);
    let train_y: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
    let held_dtm = dtm.select_rows(&held);
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&point| {
            let fit = fit_logistic(&train_dtm, &train_y, point, SolverOptions::default());
            let mut c = Confusion::default();
            for (r, &i) in held.iter().enumerate() {
                c.add(fit.decision(&held_dtm, r) >= 0.0, labels[i]);
            }
            c.f1().unwrap_or(0.0)
        })
        .collect();
    let best = (0..grid.len())
        .max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
        .unwrap();
    log::info!("keyword model: selected {} C={} (held-out F1 {:.3})", grid[best].penalty, grid[best].c, scores[best]);
    grid[best]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Sampled { index: usize },
    Expanded { source: Vec<String>, m: usize, space: String },
    Manual,
}

/// A set of lowercase keywords; insertion order is kept for output.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordList {
    terms: IndexSet<String>,
    pub provenance: Provenance,
}

impl KeywordList {
    pub fn new<I, S>(terms: I, provenance: Provenance) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            terms: terms.into_iter().map(|t| t.as_ref().to_lowercase()).collect(),
            provenance,
        }
    }

    pub fn terms(&self) -> &IndexSet<String> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains(term)
    }

    /// Adds a term; returns false if it was already present.
    pub fn insert(&mut self, term: &str) -> bool {
        self.terms.insert(term.to_lowercase())
    }

    pub fn is_superset_of(&self, other: &KeywordList) -> bool {
        other.terms.iter().all(|t| self.terms.contains(t))
    }

    /// One keyword per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for t in &self.terms {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Self {
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty()), Provenance::Manual)
    }
}

/// Draws `n_lists` lists of `list_size` distinct terms. Within a list each
/// draw picks among the remaining terms with probability proportional to
/// the coefficient, so zero-coefficient terms are never drawn.
pub fn sample_keyword_lists(
    pt: &PredictiveTerms,
    n_lists: usize,
    list_size: usize,
    seed: u64,
) -> Result<Vec<KeywordList>, KeywordError> {
    let available = pt.ranked.iter().filter(|(_, c)| *c > 0.0).count();
    if list_size > available {
        return Err(KeywordError::InsufficientTerms {
            requested: list_size,
            available,
        });
    }
    let mut rng = seed::rng(seed::derive(seed, &[seed::stream::KEYWORDS]));
    let lists = (0..n_lists)
        .map(|index| {
            let mut weights: Vec<f64> = pt.ranked.iter().map(|(_, c)| c.max(0.0)).collect();
            let mut picked = Vec::with_capacity(list_size);
            for _ in 0..list_size {
                let total: f64 = weights.iter().sum();
                let mut r = rng.gen::<f64>() * total;
                let mut choice = None;
                for (j, &w) in weights.iter().enumerate() {
                    if w <= 0.0 {
                        continue;
                    }
                    choice = Some(j);
                    if r < w {
                        break;
                    }
                    r -= w;
                }
                let j = choice.expect("positive total weight");
                weights[j] = 0.0;
                picked.push(pt.ranked[j].0.as_str());
            }
            KeywordList::new(picked, Provenance::Sampled { index })
        })
        .collect();
    Ok(lists)
}

/// Inverted index from normalized tokens to documents, for OR-queries.
#[derive(Debug, Clone)]
pub struct QueryIndex {
    postings: HashMap<String, Vec<u32>>,
    n_docs: usize,
    lang: Lang,
    stem_match: bool,
}

impl QueryIndex {
    /// Indexes the lowercased tokens of every text (stems if `stem_match`).
    pub fn new(texts: &[&str], lang: Lang, stem_match: bool) -> Self {
        let pipeline = Pipeline::new(lang, stem_match);
        let per_doc: Vec<Vec<String>> = texts.par_iter().map(|t| pipeline.analyze(t)).collect();
        let mut postings: HashMap<String, Vec<u32>> = HashMap::new();
        for (i, tokens) in per_doc.into_iter().enumerate() {
            for t in tokens {
                let list = postings.entry(t).or_default();
                if list.last() != Some(&(i as u32)) {
                    list.push(i as u32);
                }
            }
        }
        Self {
            postings,
            n_docs: texts.len(),
            lang,
            stem_match,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    fn normalize(&self, keyword: &str) -> String {
        let lowered = keyword.to_lowercase();
        let folded = match self.lang {
            Lang::De => fold_diacritics(&lowered),
            Lang::En => lowered,
        };
        if self.stem_match {
            stem(&[folded], self.lang).pop().unwrap()
        } else {
            folded
        }
    }

    /// Documents containing at least one keyword.
    pub fn query(&self, list: &KeywordList) -> Vec<bool> {
        let mut hit = vec![false; self.n_docs];
        for kw in list.terms() {
            if let Some(docs) = self.postings.get(&self.normalize(kw)) {
                for &i in docs {
                    hit[i as usize] = true;
                }
            }
        }
        hit
    }
}

/// One-off OR-query over raw texts; prefer [`QueryIndex`] for many lists.
pub fn boolean_query(list: &KeywordList, texts: &[&str], lang: Lang, stem_match: bool) -> Vec<bool> {
    QueryIndex::new(texts, lang, stem_match).query(list)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textpipe::{build_dtm, Prune};
    use rand::SeedableRng;

    fn separable_corpus() -> (Vec<String>, Vec<bool>) {
        // "x" occurs in every positive and no negative; filler words are random
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let filler = ["aa", "bb", "cc", "dd", "ee", "ff", "gg"];
        let mut texts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..120 {
            let positive = i % 4 == 0;
            let mut words: Vec<&str> = (0..4).map(|_| filler[rng.gen_range(0..filler.len())]).collect();
            if positive {
                words.push("x");
            }
            texts.push(words.join(" "));
            labels.push(positive);
        }
        (texts, labels)
    }

    fn boolean_dtm(texts: &[String]) -> (Vocabulary, DocTermMatrix) {
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        build_dtm(&refs, Pipeline::default(), Prune::default(), Weighting::Boolean).unwrap()
    }

    #[test]
    fn perfect_separator_ranks_first() {
        let (texts, labels) = separable_corpus();
        let (vocab, dtm) = boolean_dtm(&texts);
        for penalty in [Penalty::L1, Penalty::L2] {
            let pt = fit_predictive_model(&dtm, &vocab, &labels, &[GridPoint { penalty, c: 1.0 }], 50, 1).unwrap();
            assert_eq!(pt.ranked[0].0, "x", "{penalty}");
            assert!(pt.ranked.windows(2).all(|w| w[0].1 >= w[1].1));
            assert!(pt.ranked.iter().all(|(_, c)| *c > 0.0));
        }
        let pt = fit_predictive_model(&dtm, &vocab, &labels, &default_grid(), 50, 1).unwrap();
        assert_eq!(pt.ranked[0].0, "x");
    }

    #[test]
    fn identical_documents_have_no_separating_terms() {
        let texts: Vec<String> = (0..20).map(|_| "same words here".to_string()).collect();
        let labels: Vec<bool> = (0..20).map(|i| i < 5).collect();
        let (vocab, dtm) = boolean_dtm(&texts);
        for penalty in [Penalty::L1, Penalty::L2] {
            let err = fit_predictive_model(&dtm, &vocab, &labels, &[GridPoint { penalty, c: 1.0 }], 50, 1).unwrap_err();
            assert!(matches!(err, KeywordError::NoSeparatingTerms));
        }
    }

    #[test]
    fn flipping_labels_flips_the_top_term() {
        let texts: Vec<String> = (0..40).map(|i| if i % 2 == 0 { "a".into() } else { "b".into() }).collect();
        let labels: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let flipped: Vec<bool> = labels.iter().map(|y| !y).collect();
        let (vocab, dtm) = boolean_dtm(&texts);
        let grid = [GridPoint { penalty: Penalty::L2, c: 1.0 }];
        let top = |y: &[bool]| fit_predictive_model(&dtm, &vocab, y, &grid, 50, 0).unwrap().ranked[0].0.clone();
        assert_eq!(top(&labels), "a");
        assert_eq!(top(&flipped), "b");
    }

    #[test]
    fn solver_never_increases_objective_and_converges() {
        let (texts, labels) = separable_corpus();
        let (_, dtm) = boolean_dtm(&texts);
        let objective = |fit: &LogisticFit, point: GridPoint| {
            let loss: f64 = (0..dtm.n_rows())
                .map(|i| logloss(fit.decision(&dtm, i), labels[i] as u8 as f64))
                .sum();
            let pen: f64 = match point.penalty {
                Penalty::L1 => fit.weights.iter().map(|w| w.abs()).sum(),
                Penalty::L2 => fit.weights.iter().map(|w| 0.5 * w * w).sum(),
            };
            point.c * loss + pen
        };
        for penalty in [Penalty::L1, Penalty::L2] {
            let point = GridPoint { penalty, c: 1.0 };
            let mut prev = f64::INFINITY;
            for sweeps in [1, 2, 5, 20] {
                let fit = fit_logistic(&dtm, &labels, point, SolverOptions { tol: 0.0, max_sweeps: sweeps });
                let obj = objective(&fit, point);
                assert!(obj <= prev + 1e-9, "{penalty}: {obj} > {prev}");
                prev = obj;
            }
            let fit = fit_logistic(&dtm, &labels, point, SolverOptions::default());
            assert!(fit.converged, "{penalty} did not converge");
        }
    }

    #[test]
    fn sampled_lists_have_distinct_terms() {
        let ranked: Vec<(String, f64)> = (0..50).map(|i| (format!("t{i}"), 50.0 - i as f64)).collect();
        let pt = PredictiveTerms::new(ranked, Penalty::L1, 1.0).unwrap();
        let lists = sample_keyword_lists(&pt, 100, 10, 42).unwrap();
        assert_eq!(lists.len(), 100);
        assert!(lists.iter().all(|l| l.len() == 10));
        assert_eq!(lists, sample_keyword_lists(&pt, 100, 10, 42).unwrap());
    }

    #[test]
    fn zero_weight_term_never_sampled() {
        let pt = PredictiveTerms::new(vec![("a".into(), 2.0), ("b".into(), 1.0), ("z".into(), 0.0)], Penalty::L1, 1.0).unwrap();
        let lists = sample_keyword_lists(&pt, 500, 2, 7).unwrap();
        assert!(lists.iter().all(|l| !l.contains("z")));
        assert!(matches!(
            sample_keyword_lists(&pt, 1, 3, 7),
            Err(KeywordError::InsufficientTerms { requested: 3, available: 2 })
        ));
    }

    #[test]
    fn sampling_frequency_matches_weights() {
        let pt = PredictiveTerms::new(vec![("a".into(), 0.9), ("b".into(), 0.1)], Penalty::L1, 1.0).unwrap();
        let lists = sample_keyword_lists(&pt, 10_000, 1, 3).unwrap();
        let share = lists.iter().filter(|l| l.contains("a")).count() as f64 / 10_000.0;
        assert!((share - 0.9).abs() <= 0.02, "share {share}");
    }

    #[test]
    fn case_folded_token_match() {
        let list = KeywordList::new(["OIL"], Provenance::Manual);
        assert_eq!(boolean_query(&list, &["Crude OIL output rose", "soil erosion"], Lang::En, false), vec![true, false]);
        let list = KeywordList::new(["Flüchtlinge"], Provenance::Manual);
        assert_eq!(boolean_query(&list, &["Die FLÜCHTLINGE kommen"], Lang::De, false), vec![true]);
        let list = KeywordList::new(["refugees"], Provenance::Manual);
        assert_eq!(boolean_query(&list, &["one refugee"], Lang::En, true), vec![true]);
    }

    #[test]
    fn no_match_yields_all_negative() {
        let list = KeywordList::new(["zzz"], Provenance::Manual);
        let pred = boolean_query(&list, &["a b", "c"], Lang::En, false);
        let c = Confusion::from_slices(&pred, &[true, false]).unwrap();
        assert_eq!(c.precision(), None);
    }

    #[test]
    fn keyword_list_text_round_trip() {
        let list = KeywordList::new(["oil", "#opec", "crude"], Provenance::Manual);
        let mut buf = Vec::new();
        list.write_text(&mut buf).unwrap();
        assert_eq!(KeywordList::from_text(std::str::from_utf8(&buf).unwrap()), list);
    }

    #[test]
    fn predictive_terms_csv_layout() {
        let pt = PredictiveTerms::new(vec![("oil".into(), 2.5), ("crude".into(), 1.5)], Penalty::L2, 10.0).unwrap();
        let mut buf = Vec::new();
        pt.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "rank,term,coefficient\n1,oil,2.5\n2,crude,1.5\n");
    }

    proptest::proptest! {
        #[test]
        fn superset_lists_retrieve_supersets(
            docs in proptest::collection::vec(proptest::collection::vec(0usize..12, 0..6), 1..30),
            base in proptest::collection::btree_set(0usize..12, 1..4),
            extra in proptest::collection::btree_set(0usize..12, 0..4),
        ) {
            let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
            let texts: Vec<String> = docs.iter().map(|d| d.iter().map(|&i| words[i].as_str()).collect::<Vec<_>>().join(" ")).collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let index = QueryIndex::new(&refs, Lang::En, false);
            let small = KeywordList::new(base.iter().map(|&i| &words[i]), Provenance::Manual);
            let big = KeywordList::new(base.iter().chain(&extra).map(|&i| &words[i]), Provenance::Manual);
            let reversed = KeywordList::new(base.iter().rev().map(|&i| &words[i]), Provenance::Manual);
            let (a, b) = (index.query(&small), index.query(&big));
            proptest::prop_assert!(a.iter().zip(&b).all(|(x, y)| !x || *y));
            proptest::prop_assert_eq!(index.query(&reversed), a);
        }
    }
}
