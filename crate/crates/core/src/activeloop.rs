//! Pool-based learning loop: random initial labeled set, batch acquisition
//! (random for passive learning, uncertainty for active learning) and
//! per-iteration evaluation on the pool and a held-out fold.

use std::collections::{HashMap, HashSet};
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, FoldPlan, LabeledCorpus};
use crate::learn::{self, LearnError, LinearModel, ModelKind, ResamplePlan};
use crate::metrics::{fmt_opt, Confusion, Scores};
use crate::seed;
use crate::textpipe::DocTermMatrix;

/// Regularization grid searched once on the initial labeled set.
pub const C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle timed out waiting for labels")]
    Timeout,
    #[error("oracle session closed")]
    Closed,
    #[error("oracle returned {got} labels for {expected} queries")]
    Count { expected: usize, got: usize },
    #[error("oracle has no label for `{0}`")]
    Unknown(String),
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("pool exhausted: need {needed} documents, {available} left")]
    PoolExhausted { needed: usize, available: usize },
    #[error("test fold {fold} out of range for {n_folds} folds")]
    InvalidFold { fold: usize, n_folds: usize },
    #[error("feature matrix has {rows} rows for {docs} documents")]
    RowMismatch { rows: usize, docs: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum LoopMode {
    /// Random acquisition; the training copy of the labeled set has its
    /// minority class oversampled by `oversample_factor`.
    Passive { oversample_factor: f64 },
    /// Uncertainty acquisition without resampling.
    Active,
}

impl LoopMode {
    pub fn name(&self) -> &'static str {
        match self {
            LoopMode::Passive { .. } => "passive",
            LoopMode::Active => "active",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub init_size: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub mode: LoopMode,
    pub model: ModelKind,
    /// Fixed inverse regularization; `None` tunes once on the initial set.
    pub reg_c: Option<f64>,
    pub seed: u64,
}

impl LoopConfig {
    pub fn new(mode: LoopMode, model: ModelKind, seed: u64) -> Self {
        Self {
            init_size: 250,
            batch_size: 50,
            iterations: 15,
            mode,
            model,
            reg_c: None,
            seed,
        }
    }

    pub fn final_labeled(&self) -> usize {
        self.init_size + self.batch_size * self.iterations
    }
}

/// A document handed to an oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    /// Uncertainty key under the current model, if one exists.
    pub uncertainty: Option<f64>,
}

/// Label source for acquired documents. Labels for an id must not change
/// within a run.
pub trait Oracle {
    fn label(&mut self, queries: &[Query]) -> Result<Vec<bool>, OracleError>;
}

/// Answers from known ground truth and logs every query.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    truth: HashMap<String, bool>,
    pub log: Vec<(String, bool)>,
}

impl SimulatedOracle {
    pub fn new(corpus: &LabeledCorpus) -> Self {
        let truth = corpus.docs().iter().map(|d| (d.id.clone(), d.label.is_some_and(|l| l.is_relevant()))).collect();
        Self { truth, log: Vec::new() }
    }
}

impl Oracle for SimulatedOracle {
    fn label(&mut self, queries: &[Query]) -> Result<Vec<bool>, OracleError> {
        queries
            .iter()
            .map(|q| {
                let l = *self.truth.get(&q.id).ok_or_else(|| OracleError::Unknown(q.id.clone()))?;
                self.log.push((q.id.clone(), l));
                Ok(l)
            })
            .collect()
    }
}

/// Snapshot passed to a [`LoopObserver`] after each evaluation, as row
/// positions into the corpus.
#[derive(Debug)]
pub struct LoopState<'a> {
    pub iteration: usize,
    pub labeled: &'a [usize],
    pub pool: &'a [usize],
    pub test: &'a [usize],
    pub record: &'a TraceRecord,
}

pub trait LoopObserver {
    fn on_iteration(&mut self, state: &LoopState<'_>);
}

impl<F: FnMut(&LoopState<'_>)> LoopObserver for F {
    fn on_iteration(&mut self, state: &LoopState<'_>) {
        self(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct TraceRecord {
    pub iteration: usize,
    pub labeled_count: usize,
    pub positive_share_in_I: f64,
    pub pool_scores: Scores,
    pub test_scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningTrace {
    pub test_fold: usize,
    pub mode: LoopMode,
    pub model: ModelKind,
    pub reg_c: f64,
    pub records: Vec<TraceRecord>,
}

impl LearningTrace {
    /// One JSON object per iteration, newline-delimited.
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// Plot-ready CSV. Undefined scores are left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "iteration",
            "labeled_count",
            "pos_share",
            "pool_p",
            "pool_r",
            "pool_f1",
            "test_p",
            "test_r",
            "test_f1",
        ])?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                r.labeled_count.to_string(),
                r.positive_share_in_I.to_string(),
                fmt_opt(r.pool_scores.precision),
                fmt_opt(r.pool_scores.recall),
                fmt_opt(r.pool_scores.f1),
                fmt_opt(r.test_scores.precision),
                fmt_opt(r.test_scores.recall),
                fmt_opt(r.test_scores.f1),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Row positions of the `n` smallest uncertainty keys; ties go to the
/// smaller document id. Returned most uncertain first.
pub fn select_uncertain(keys: &[f64], ids: &[&str], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    let cmp = |&a: &usize, &b: &usize| keys[a].total_cmp(&keys[b]).then_with(|| ids[a].cmp(ids[b]));
    if n < order.len() {
        order.select_nth_unstable_by(n, cmp);
        order.truncate(n);
    }
    order.sort_by(cmp);
    order
}

fn evaluate(pred: &[bool], rows: &[usize], truth: &[bool]) -> Scores {
    let mut c = Confusion::default();
    for (&p, &i) in pred.iter().zip(rows) {
        c.add(p, truth[i]);
    }
    c.scores()
}

/// Runs the loop with fold `test_fold` held out. `features` holds one row
/// per corpus document, in corpus order. Training labels come from
/// `oracle`; evaluation uses the corpus labels.
pub fn run_loop(
    corpus: &LabeledCorpus,
    features: &DocTermMatrix,
    plan: &FoldPlan,
    test_fold: usize,
    cfg: &LoopConfig,
    oracle: &mut dyn Oracle,
    mut observer: Option<&mut dyn LoopObserver>,
) -> Result<LearningTrace, LoopError> {
    if features.n_rows() != corpus.len() {
        return Err(LoopError::RowMismatch {
            rows: features.n_rows(),
            docs: corpus.len(),
        });
    }
    if test_fold >= plan.n_folds {
        return Err(LoopError::InvalidFold {
            fold: test_fold,
            n_folds: plan.n_folds,
        });
    }
    let folds = plan.folds_for(corpus)?;
    let truth = corpus.truth();
    let ids: Vec<&str> = corpus.docs().iter().map(|d| d.id.as_str()).collect();
    let test: Vec<usize> = (0..corpus.len()).filter(|&i| folds[i] == test_fold).collect();
    let mut pool: Vec<usize> = (0..corpus.len()).filter(|&i| folds[i] != test_fold).collect();
    let needed = cfg.final_labeled();
    if needed > pool.len() {
        return Err(LoopError::PoolExhausted {
            needed,
            available: pool.len(),
        });
    }
    let run_seed = seed::derive(cfg.seed, &[seed::stream::FOLD_RUN, test_fold as u64]);
    let mut rng = seed::rng(seed::derive(run_seed, &[seed::stream::SAMPLING]));
    let x_test = features.select_rows(&test);

    let ask = |oracle: &mut dyn Oracle, rows: &[usize], keys: Option<&[f64]>| -> Result<Vec<bool>, LoopError> {
        let queries: Vec<Query> = rows
            .iter()
            .enumerate()
            .map(|(n, &i)| Query {
                id: ids[i].to_string(),
                text: corpus.docs()[i].text.clone(),
                uncertainty: keys.map(|k| k[n]),
            })
            .collect();
        let labels = oracle.label(&queries)?;
        if labels.len() != rows.len() {
            return Err(OracleError::Count {
                expected: rows.len(),
                got: labels.len(),
            }
            .into());
        }
        Ok(labels)
    };

    let initial: Vec<usize> = pool.choose_multiple(&mut rng, cfg.init_size).copied().collect();
    let initial_labels = ask(oracle, &initial, None)?;
    let mut labeled: Vec<usize> = Vec::with_capacity(needed);
    let mut oracle_labels: HashMap<usize, bool> = HashMap::new();
    for (&i, l) in initial.iter().zip(initial_labels) {
        labeled.push(i);
        oracle_labels.insert(i, l);
    }
    let in_labeled: HashSet<usize> = labeled.iter().copied().collect();
    pool.retain(|i| !in_labeled.contains(i));

    let mut reg_c = cfg.reg_c;
    let mut records = Vec::with_capacity(cfg.iterations + 1);
    for t in 0..=cfg.iterations {
        let iter_seed = seed::derive(run_seed, &[seed::stream::ITERATION, t as u64]);
        let x_lab = features.select_rows(&labeled);
        let y_lab: Vec<bool> = labeled.iter().map(|i| oracle_labels[i]).collect();
        let positives = y_lab.iter().filter(|&&l| l).count();
        let share = positives as f64 / labeled.len() as f64;
        let single_class = positives == 0 || positives == labeled.len();

        let resample_plan = match cfg.mode {
            LoopMode::Passive { oversample_factor } if oversample_factor > 1.0 => {
                Some(ResamplePlan::oversample(oversample_factor, iter_seed))
            }
            _ => None,
        };
        let c = match reg_c {
            Some(c) => c,
            None => {
                let c = if single_class {
                    1.0
                } else {
                    match learn::tune(&x_lab, &y_lab, &C_GRID, cfg.model, 5, resample_plan, run_seed) {
                        Ok(o) => o.best_c,
                        Err(e) => {
                            log::warn!("fold {test_fold}: tuning failed ({e}); using C=1");
                            1.0
                        }
                    }
                };
                reg_c = Some(c);
                c
            }
        };

        let model: Option<LinearModel> = if single_class {
            log::warn!("fold {test_fold}, iteration {t}: labeled set has a single class; no model trained");
            None
        } else {
            let (x_fit, y_fit) = match &resample_plan {
                Some(p) => {
                    let r = learn::resample(&x_lab, &y_lab, p)?;
                    (r.dtm, r.labels)
                }
                None => (x_lab.clone(), y_lab.clone()),
            };
            Some(learn::train(&x_fit, &y_fit, cfg.model, c, iter_seed)?)
        };

        let x_pool = features.select_rows(&pool);
        let (pool_pred, pool_keys, test_pred) = match &model {
            Some(m) => (
                m.predict(&x_pool)?,
                Some(x_pool.rows().map(|r| m.uncertainty(r)).collect::<Vec<f64>>()),
                m.predict(&x_test)?,
            ),
            None => (vec![false; pool.len()], None, vec![false; test.len()]),
        };
        let record = TraceRecord {
            iteration: t,
            labeled_count: labeled.len(),
            positive_share_in_I: share,
            pool_scores: evaluate(&pool_pred, &pool, &truth),
            test_scores: evaluate(&test_pred, &test, &truth),
        };
        if let Some(obs) = observer.as_deref_mut() {
            obs.on_iteration(&LoopState {
                iteration: t,
                labeled: &labeled,
                pool: &pool,
                test: &test,
                record: &record,
            });
        }
        records.push(record);
        if t == cfg.iterations {
            break;
        }

        let batch: Vec<usize> = match (&cfg.mode, &pool_keys) {
            (LoopMode::Active, Some(keys)) => {
                let pool_ids: Vec<&str> = pool.iter().map(|&i| ids[i]).collect();
                select_uncertain(keys, &pool_ids, cfg.batch_size)
            }
            (mode, keys) => {
                if matches!(mode, LoopMode::Active) && keys.is_none() {
                    log::warn!("fold {test_fold}, iteration {t}: no model; acquiring at random");
                }
                let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), cfg.batch_size).into_vec();
                if let Some(k) = keys {
                    picked.sort_by(|&a, &b| k[a].total_cmp(&k[b]).then_with(|| ids[pool[a]].cmp(ids[pool[b]])));
                }
                picked
            }
        };
        let rows: Vec<usize> = batch.iter().map(|&b| pool[b]).collect();
        let batch_keys: Option<Vec<f64>> = pool_keys.as_ref().map(|k| batch.iter().map(|&b| k[b]).collect());
        let labels = ask(oracle, &rows, batch_keys.as_deref())?;
        for (&i, l) in rows.iter().zip(labels) {
            labeled.push(i);
            oracle_labels.insert(i, l);
        }
        let taken: HashSet<usize> = batch.into_iter().collect();
        pool = pool
            .into_iter()
            .enumerate()
            .filter(|(n, _)| !taken.contains(n))
            .map(|(_, i)| i)
            .collect();
    }

    Ok(LearningTrace {
        test_fold,
        mode: cfg.mode,
        model: cfg.model,
        reg_c: reg_c.unwrap_or(1.0),
        records,
    })
}

/// Runs the loop once per fold with a simulated oracle, folds in parallel.
pub fn run_replications(
    corpus: &LabeledCorpus,
    features: &DocTermMatrix,
    plan: &FoldPlan,
    cfg: &LoopConfig,
) -> Result<Vec<LearningTrace>, LoopError> {
    (0..plan.n_folds)
        .into_par_iter()
        .map(|fold| {
            let mut oracle = SimulatedOracle::new(corpus);
            run_loop(corpus, features, plan, fold, cfg, &mut oracle, None)
        })
        .collect()
}

/// Per-iteration means across replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanPoint {
    pub iteration: usize,
    pub labeled_count: usize,
    pub pos_share: f64,
    pub test_precision: f64,
    pub test_recall: f64,
    pub test_f1: f64,
    /// Replications whose test F1 was undefined (counted as 0 in the mean).
    pub undefined_f1: usize,
}

/// Means with undefined scores rendered as 0.
pub fn mean_curve(traces: &[LearningTrace]) -> Vec<MeanPoint> {
    let Some(first) = traces.first() else {
        return Vec::new();
    };
    let n = traces.len() as f64;
    (0..first.records.len())
        .map(|t| {
            let recs: Vec<&TraceRecord> = traces.iter().filter_map(|tr| tr.records.get(t)).collect();
            let mean = |f: &dyn Fn(&TraceRecord) -> f64| recs.iter().map(|r| f(r)).sum::<f64>() / n;
            MeanPoint {
                iteration: t,
                labeled_count: first.records[t].labeled_count,
                pos_share: mean(&|r| r.positive_share_in_I),
                test_precision: mean(&|r| r.test_scores.as_zero().precision),
                test_recall: mean(&|r| r.test_scores.as_zero().recall),
                test_f1: mean(&|r| r.test_scores.as_zero().f1),
                undefined_f1: recs.iter().filter(|r| r.test_scores.f1.is_none()).count(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_folds, Document, Label};
    use crate::textpipe::Weighting;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Docs over 40 terms; relevant docs always carry one of terms 0..4.
    fn synthetic(n: usize, share: f64, seed: u64) -> (LabeledCorpus, DocTermMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut docs = Vec::new();
        let mut rows = Vec::new();
        for i in 0..n {
            let rel = rng.gen::<f64>() < share;
            let mut row: Vec<(u32, f64)> = (0..4).map(|_| (rng.gen_range(5..40), 1.0)).collect();
            if rel {
                row.push((rng.gen_range(0..4), 1.0));
            }
            row.sort_by_key(|p| p.0);
            row.dedup_by_key(|p| p.0);
            rows.push(row);
            docs.push(Document {
                id: format!("d{i:05}"),
                text: format!("doc {i}"),
                label: Some(Label::from(rel)),
            });
        }
        (LabeledCorpus::new("synthetic", docs).unwrap(), DocTermMatrix::from_rows(rows, 40, Weighting::Boolean))
    }

    fn small_cfg(mode: LoopMode) -> LoopConfig {
        LoopConfig {
            init_size: 40,
            batch_size: 10,
            iterations: 5,
            mode,
            model: ModelKind::Svm,
            reg_c: Some(1.0),
            seed: 17,
        }
    }

    #[test]
    fn select_uncertain_examples() {
        let probs = [0.9f64, 0.51, 0.1];
        let keys: Vec<f64> = probs.iter().map(|p| (p - 0.5).abs()).collect();
        assert_eq!(select_uncertain(&keys, &["a", "b", "c"], 1), vec![1]);
        let mut all = select_uncertain(&keys, &["a", "b", "c"], 3);
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
        // ties go to the smaller id
        assert_eq!(select_uncertain(&[0.2, 0.2, 0.3], &["z", "y", "x"], 1), vec![1]);
    }

    #[test]
    fn select_uncertain_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let keys: Vec<f64> = (0..200).map(|_| (rng.gen_range(0..50) as f64) / 10.0).collect();
        let names: Vec<String> = (0..200).map(|i| format!("id{:03}", (i * 37) % 200)).collect();
        let ids: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut brute: Vec<usize> = (0..200).collect();
        brute.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(ids[a].cmp(ids[b])));
        for n in [1, 17, 50, 200] {
            assert_eq!(select_uncertain(&keys, &ids, n), brute[..n]);
        }
    }

    #[test]
    fn trace_structure_and_disjointness() {
        let (corpus, x) = synthetic(400, 0.2, 1);
        let plan = make_folds(&corpus, 4, false, 3).unwrap();
        for mode in [LoopMode::Active, LoopMode::Passive { oversample_factor: 5.0 }] {
            let cfg = small_cfg(mode);
            let mut oracle = SimulatedOracle::new(&corpus);
            let mut audits = 0;
            let mut obs = |s: &LoopState<'_>| {
                let l: HashSet<usize> = s.labeled.iter().copied().collect();
                let p: HashSet<usize> = s.pool.iter().copied().collect();
                let t: HashSet<usize> = s.test.iter().copied().collect();
                assert_eq!(l.len(), s.labeled.len());
                assert!(l.is_disjoint(&p) && l.is_disjoint(&t) && p.is_disjoint(&t));
                assert_eq!(l.len() + p.len() + t.len(), 400);
                audits += 1;
            };
            let trace = run_loop(&corpus, &x, &plan, 1, &cfg, &mut oracle, Some(&mut obs)).unwrap();
            assert_eq!(audits, 6);
            let counts: Vec<usize> = trace.records.iter().map(|r| r.labeled_count).collect();
            assert_eq!(counts, vec![40, 50, 60, 70, 80, 90]);
            let truth: HashMap<&str, bool> = corpus.docs().iter().map(|d| (d.id.as_str(), d.label.unwrap().is_relevant())).collect();
            assert_eq!(oracle.log.len(), 90);
            assert!(oracle.log.iter().all(|(id, l)| truth[id.as_str()] == *l));
        }
    }

    #[test]
    fn pool_exhaustion() {
        let (corpus, x) = synthetic(60, 0.3, 2);
        let plan = make_folds(&corpus, 2, false, 0).unwrap();
        let mut oracle = SimulatedOracle::new(&corpus);
        let err = run_loop(&corpus, &x, &plan, 0, &small_cfg(LoopMode::Active), &mut oracle, None);
        assert!(matches!(err, Err(LoopError::PoolExhausted { needed: 90, available: 30 })));
    }

    #[test]
    fn single_class_start_falls_back() {
        let (corpus, x) = synthetic(300, 0.01, 5);
        let plan = make_folds(&corpus, 3, false, 0).unwrap();
        let mut cfg = small_cfg(LoopMode::Active);
        cfg.init_size = 5;
        let mut oracle = SimulatedOracle::new(&corpus);
        let trace = run_loop(&corpus, &x, &plan, 0, &cfg, &mut oracle, None).unwrap();
        assert_eq!(trace.records.len(), 6);
    }

    #[test]
    fn replications_partition_and_repeat() {
        let (corpus, x) = synthetic(200, 0.25, 7);
        let plan = make_folds(&corpus, 2, false, 1).unwrap();
        let cfg = small_cfg(LoopMode::Passive { oversample_factor: 5.0 });
        let a = run_replications(&corpus, &x, &plan, &cfg).unwrap();
        let b = run_replications(&corpus, &x, &plan, &cfg).unwrap();
        assert_eq!(a.len(), 2);
        let sizes = plan.fold_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 200);
        for (ta, tb) in a.iter().zip(&b) {
            assert_eq!(ta.to_ndjson(), tb.to_ndjson());
        }
        let curve = mean_curve(&a);
        assert_eq!(curve.len(), 6);
        assert!(curve.iter().all(|p| (0.0..=1.0).contains(&p.test_f1)));
    }

    #[test]
    fn ndjson_has_exact_fields() {
        let (corpus, x) = synthetic(200, 0.3, 9);
        let plan = make_folds(&corpus, 2, false, 1).unwrap();
        let mut oracle = SimulatedOracle::new(&corpus);
        let trace = run_loop(&corpus, &x, &plan, 0, &small_cfg(LoopMode::Active), &mut oracle, None).unwrap();
        let first = trace.to_ndjson().lines().next().unwrap().to_string();
        let v: serde_json::Value = serde_json::from_str(&first).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["iteration", "labeled_count", "pool_scores", "positive_share_in_I", "test_scores"]);
        let mut csv = Vec::new();
        trace.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("iteration,labeled_count,pos_share,pool_p,pool_r,pool_f1,test_p,test_r,test_f1\n"));
        assert_eq!(text.lines().count(), 7);
    }
}
