//! Linear classifiers trained by SGD, plus the class-imbalance treatments:
//! random over- and undersampling, SMOTE and per-instance cost weights.

use std::io::{self, Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{assign_folds, CorpusError};
use crate::metrics::Confusion;
use crate::seed;
use crate::textpipe::{DocTermMatrix, Row};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("labels ({labels}) do not match matrix rows ({rows})")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("sample weights ({weights}) do not match matrix rows ({rows})")]
    WeightMismatch { weights: usize, rows: usize },
    #[error("no minority instance to resample")]
    NoMinority,
    #[error("SMOTE needs more than {q} minority rows, found {minority}")]
    SmoteTooFew { minority: usize, q: usize },
    #[error("invalid resampling factor {0}")]
    InvalidFactor(f64),
    #[error("expected a vector of dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("stratified {folds}-fold split infeasible: {source}")]
    Stratification {
        folds: usize,
        #[source]
        source: CorpusError,
    },
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("regularization parameter must be positive, got {0}")]
    InvalidC(f64),
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "svm-hinge")]
    Svm,
    #[serde(rename = "logistic")]
    Logistic,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "svm" | "svm-hinge" | "hinge" => Ok(ModelKind::Svm),
            "logistic" | "logit" | "log" => Ok(ModelKind::Logistic),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

impl ModelKind {
    /// Derivative of the loss with respect to the margin input `z`.
    fn dloss(self, z: f64, y: f64) -> f64 {
        match self {
            ModelKind::Svm => {
                if y * z < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            ModelKind::Logistic => {
                let t = y * z;
                if t > 18.0 {
                    -y * (-t).exp()
                } else if t < -18.0 {
                    -y
                } else {
                    -y / (1.0 + t.exp())
                }
            }
        }
    }

    fn loss(self, z: f64, y: f64) -> f64 {
        match self {
            ModelKind::Svm => (1.0 - y * z).max(0.0),
            ModelKind::Logistic => {
                let t = -y * z;
                if t > 18.0 {
                    t
                } else {
                    t.exp().ln_1p()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: ModelKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub reg_c: f64,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// `w·x + b` for a sparse row. Columns beyond the model dimension are
    /// ignored, so callers must check dimensions at the matrix level.
    pub fn decision_value(&self, row: Row<'_>) -> f64 {
        row.iter()
            .filter(|&(j, _)| j < self.weights.len())
            .map(|(j, v)| self.weights[j] * v)
            .sum::<f64>()
            + self.bias
    }

    pub fn decision_dense(&self, x: &[f64]) -> Result<f64, LearnError> {
        if x.len() != self.weights.len() {
            return Err(LearnError::Dimension {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias)
    }

    pub fn decision_values(&self, dtm: &DocTermMatrix) -> Result<Vec<f64>, LearnError> {
        self.check_dim(dtm)?;
        Ok(dtm.rows().map(|r| self.decision_value(r)).collect())
    }

    /// Perpendicular distance `|w·x+b| / ‖w‖` to the separating hyperplane.
    /// Infinite for a zero weight vector.
    pub fn distance(&self, row: Row<'_>) -> f64 {
        self.decision_value(row).abs() / self.norm()
    }

    /// Sigmoid of the decision value.
    pub fn predict_proba(&self, row: Row<'_>) -> f64 {
        sigmoid(self.decision_value(row))
    }

    pub fn predict(&self, dtm: &DocTermMatrix) -> Result<Vec<bool>, LearnError> {
        Ok(self.decision_values(dtm)?.into_iter().map(|z| z > 0.0).collect())
    }

    /// Uncertainty key: `|p − 0.5|` for logistic models, hyperplane distance
    /// for SVMs. Smaller is more uncertain.
    pub fn uncertainty(&self, row: Row<'_>) -> f64 {
        match self.kind {
            ModelKind::Logistic => (self.predict_proba(row) - 0.5).abs(),
            ModelKind::Svm => self.distance(row),
        }
    }

    fn check_dim(&self, dtm: &DocTermMatrix) -> Result<(), LearnError> {
        if dtm.n_cols() != self.weights.len() {
            return Err(LearnError::Dimension {
                expected: self.weights.len(),
                got: dtm.n_cols(),
            });
        }
        Ok(())
    }

    /// JSON header line followed by the weights as little-endian f64.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), LearnError> {
        let header = serde_json::json!({
            "kind": self.kind,
            "reg_c": self.reg_c,
            "bias": self.bias,
            "dim": self.weights.len(),
        });
        writeln!(out, "{header}")?;
        for w in &self.weights {
            out.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, LearnError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| LearnError::Malformed("missing header".into()))?;
        #[derive(Deserialize)]
        struct Header {
            kind: ModelKind,
            reg_c: f64,
            bias: f64,
            dim: usize,
        }
        let h: Header = serde_json::from_slice(&bytes[..nl]).map_err(|e| LearnError::Malformed(e.to_string()))?;
        let body = &bytes[nl + 1..];
        if body.len() != h.dim * 8 {
            return Err(LearnError::Malformed(format!("expected {} weight bytes, found {}", h.dim * 8, body.len())));
        }
        let weights = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            kind: h.kind,
            weights,
            bias: h.bias,
            reg_c: h.reg_c,
        })
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// SGD settings. The learning rate follows `1/(λ(t + t0))` with `t0` picked
/// by Bottou's heuristic; the intercept moves at a damped rate because the
/// features are sparse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub intercept_decay: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 20,
            intercept_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: LinearModel,
    /// Regularized objective after each epoch.
    pub objective: Vec<f64>,
}

/// Trains a linear model by SGD on `C·Σ loss + ½‖w‖²`, scaled by
/// `1/(C·n)` so that `λ = 1/(C·n)`.
pub fn train(dtm: &DocTermMatrix, labels: &[bool], kind: ModelKind, reg_c: f64, seed: u64) -> Result<LinearModel, LearnError> {
    Ok(train_weighted(dtm, labels, None, kind, reg_c, TrainOptions::default(), seed)?.model)
}

/// [`train`] with optional per-instance loss multipliers. With weights,
/// `n` becomes their sum and instances are visited in proportion to them
/// only through the gradient scale, never by duplication.
pub fn train_weighted(
    dtm: &DocTermMatrix,
    labels: &[bool],
    sample_weights: Option<&[f64]>,
    kind: ModelKind,
    reg_c: f64,
    opts: TrainOptions,
    seed: u64,
) -> Result<TrainReport, LearnError> {
    let n = dtm.n_rows();
    if labels.len() != n {
        return Err(LearnError::LabelMismatch { labels: labels.len(), rows: n });
    }
    if let Some(w) = sample_weights {
        if w.len() != n {
            return Err(LearnError::WeightMismatch { weights: w.len(), rows: n });
        }
    }
    if !(reg_c > 0.0 && reg_c.is_finite()) {
        return Err(LearnError::InvalidC(reg_c));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == n {
        return Err(LearnError::SingleClass);
    }
    let sw = |i: usize| sample_weights.map_or(1.0, |w| w[i]);
    let total_weight: f64 = (0..n).map(sw).sum();
    let lambda = 1.0 / (reg_c * total_weight);

    let typw = (1.0 / lambda.sqrt()).sqrt();
    let eta0 = typw / kind.dloss(-typw, 1.0).abs().max(1.0);
    let t0 = 1.0 / (lambda * eta0);

    let mut rng = seed::rng(seed::derive(seed, &[seed::stream::TRAINING]));
    let mut v = vec![0.0; dtm.n_cols()];
    let mut scale = 1.0f64;
    let mut bias = 0.0;
    let mut t = 0.0f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut objective = Vec::with_capacity(opts.epochs);
    let y = |i: usize| if labels[i] { 1.0 } else { -1.0 };

    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = 1.0 / (lambda * (t + t0));
            let row = dtm.row(i);
            let z = scale * row.dot(&v) + bias;
            let g = kind.dloss(z, y(i)) * sw(i);
            scale *= 1.0 - eta * lambda;
            if g != 0.0 {
                let step = -eta * g / scale;
                for (j, x) in row.iter() {
                    v[j] += step * x;
                }
                bias -= eta * g * opts.intercept_decay;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|x| *x *= scale);
                scale = 1.0;
            }
            t += 1.0;
        }
        let w: Vec<f64> = v.iter().map(|x| x * scale).collect();
        let reg = 0.5 * lambda * w.iter().map(|x| x * x).sum::<f64>();
        let data: f64 = (0..n)
            .map(|i| sw(i) * kind.loss(dtm.row(i).dot(&w) + bias, y(i)))
            .sum::<f64>()
            / total_weight;
        objective.push(data + reg);
    }
    let weights = v.into_iter().map(|x| x * scale).collect();
    Ok(TrainReport {
        model: LinearModel {
            kind,
            weights,
            bias,
            reg_c,
        },
        objective,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum Strategy {
    Oversample { factor: f64 },
    Undersample { factor: f64 },
    Smote { factor: f64, q: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    #[serde(flatten)]
    pub strategy: Strategy,
    pub seed: u64,
}

impl ResamplePlan {
    pub fn oversample(factor: f64, seed: u64) -> Self {
        Self {
            strategy: Strategy::Oversample { factor },
            seed,
        }
    }

    pub fn undersample(factor: f64, seed: u64) -> Self {
        Self {
            strategy: Strategy::Undersample { factor },
            seed,
        }
    }

    pub fn smote(factor: f64, q: usize, seed: u64) -> Self {
        Self {
            strategy: Strategy::Smote { factor, q },
            seed,
        }
    }

    fn validate(&self) -> Result<(), LearnError> {
        match self.strategy {
            Strategy::Oversample { factor } | Strategy::Smote { factor, .. } if !(factor > 1.0 && factor.is_finite()) => {
                Err(LearnError::InvalidFactor(factor))
            }
            Strategy::Undersample { factor } if !(factor > 0.0 && factor < 1.0) => Err(LearnError::InvalidFactor(factor)),
            _ => Ok(()),
        }
    }
}

/// Output of [`resample`]. Rows `0..n_original` are the input rows that
/// survived, in input order; for over-sampling and SMOTE that is every input
/// row and the new rows follow.
#[derive(Debug, Clone)]
pub struct Resampled {
    pub dtm: DocTermMatrix,
    pub labels: Vec<bool>,
    pub origin: Vec<Origin>,
}

/// Where an output row of [`resample`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Copy(usize),
    /// SMOTE row interpolated between two input rows.
    Synthetic(usize, usize),
}

/// The less frequent class; positives win a tie.
pub fn minority_class(labels: &[bool]) -> bool {
    let pos = labels.iter().filter(|&&l| l).count();
    pos * 2 <= labels.len()
}

fn ceil_count(factor: f64, n: usize) -> usize {
    // guard against 5.0 * 20 landing a hair above 100
    let x = factor * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Applies a resampling plan. Inputs are never modified.
pub fn resample(dtm: &DocTermMatrix, labels: &[bool], plan: &ResamplePlan) -> Result<Resampled, LearnError> {
    if labels.len() != dtm.n_rows() {
        return Err(LearnError::LabelMismatch {
            labels: labels.len(),
            rows: dtm.n_rows(),
        });
    }
    plan.validate()?;
    let minority = minority_class(labels);
    let min_rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == minority).collect();
    let maj_rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != minority).collect();
    if min_rows.is_empty() {
        return Err(LearnError::NoMinority);
    }
    let mut rng = seed::rng(seed::derive(plan.seed, &[seed::stream::RESAMPLE]));
    match plan.strategy {
        Strategy::Oversample { factor } => {
            let extra = ceil_count(factor, min_rows.len()) - min_rows.len();
            let mut rows: Vec<usize> = (0..labels.len()).collect();
            rows.extend((0..extra).map(|_| min_rows[rng.gen_range(0..min_rows.len())]));
            Ok(Resampled {
                dtm: dtm.select_rows(&rows),
                labels: rows.iter().map(|&i| labels[i]).collect(),
                origin: rows.into_iter().map(Origin::Copy).collect(),
            })
        }
        Strategy::Undersample { factor } => {
            let keep_n = ceil_count(factor, maj_rows.len()).min(maj_rows.len());
            let mut kept: Vec<usize> = maj_rows.choose_multiple(&mut rng, keep_n).copied().collect();
            kept.extend(&min_rows);
            kept.sort_unstable();
            Ok(Resampled {
                dtm: dtm.select_rows(&kept),
                labels: kept.iter().map(|&i| labels[i]).collect(),
                origin: kept.into_iter().map(Origin::Copy).collect(),
            })
        }
        Strategy::Smote { factor, q } => {
            if min_rows.len() <= q {
                return Err(LearnError::SmoteTooFew {
                    minority: min_rows.len(),
                    q,
                });
            }
            let extra = ceil_count(factor, min_rows.len()) - min_rows.len();
            let neighbors = nearest_minority(dtm, &min_rows, q);
            let mut synthetic = Vec::with_capacity(extra);
            let mut origin: Vec<Origin> = (0..labels.len()).map(Origin::Copy).collect();
            for _ in 0..extra {
                let a = rng.gen_range(0..min_rows.len());
                let b = neighbors[a][rng.gen_range(0..q)];
                synthetic.push(interpolate(dtm.row(min_rows[a]), dtm.row(min_rows[b]), &mut rng));
                origin.push(Origin::Synthetic(min_rows[a], min_rows[b]));
            }
            let synth = DocTermMatrix::from_rows(synthetic, dtm.n_cols(), dtm.weighting());
            let mut out_labels = labels.to_vec();
            out_labels.extend(std::iter::repeat_n(minority, extra));
            Ok(Resampled {
                dtm: dtm.vstack(&synth),
                labels: out_labels,
                origin,
            })
        }
    }
}

/// For each minority row (by position in `rows`), the positions of its `q`
/// nearest other minority rows by Euclidean distance, ties by position.
fn nearest_minority(dtm: &DocTermMatrix, rows: &[usize], q: usize) -> Vec<Vec<usize>> {
    let norms: Vec<f64> = rows
        .iter()
        .map(|&i| dtm.row(i).iter().map(|(_, v)| v * v).sum())
        .collect();
    let dense: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| {
            let mut d = vec![0.0; dtm.n_cols()];
            dtm.row(i).iter().for_each(|(j, v)| d[j] = v);
            d
        })
        .collect();
    (0..rows.len())
        .into_par_iter()
        .map(|a| {
            let mut dist: Vec<(f64, usize)> = (0..rows.len())
                .filter(|&b| b != a)
                .map(|b| {
                    let d2 = norms[a] + norms[b] - 2.0 * dtm.row(rows[b]).dot(&dense[a]);
                    (d2.max(0.0), b)
                })
                .collect();
            dist.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            dist.into_iter().take(q).map(|(_, b)| b).collect()
        })
        .collect()
}

/// Draws every feature independently and uniformly on the segment between
/// the two parents.
fn interpolate(a: Row<'_>, b: Row<'_>, rng: &mut impl Rng) -> Vec<(u32, f64)> {
    let mut out = Vec::with_capacity(a.nnz() + b.nnz());
    let (mut ia, mut ib) = (a.iter().peekable(), b.iter().peekable());
    loop {
        let (j, va, vb) = match (ia.peek(), ib.peek()) {
            (None, None) => break,
            (Some(&(ja, va)), Some(&(jb, vb))) if ja == jb => {
                ia.next();
                ib.next();
                (ja, va, vb)
            }
            (Some(&(ja, va)), Some(&(jb, _))) if ja < jb => {
                ia.next();
                (ja, va, 0.0)
            }
            (Some(&(ja, va)), None) => {
                ia.next();
                (ja, va, 0.0)
            }
            (_, Some(&(jb, vb))) => {
                ib.next();
                (jb, 0.0, vb)
            }
        };
        let gap: f64 = rng.gen();
        let s = va + gap * (vb - va);
        if s != 0.0 {
            out.push((j as u32, s));
        }
    }
    out
}

/// Cross-validated score of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridScore {
    pub c: f64,
    pub mean_val_f1: f64,
    pub mean_train_f1: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneOutcome {
    pub best_c: f64,
    pub scores: Vec<GridScore>,
    /// Validation fold sizes, for checking that resampling stays inside
    /// the training folds.
    pub validation_sizes: Vec<usize>,
}

/// Largest tolerated gap between mean train and validation F1.
pub const OVERFIT_GAP: f64 = 0.3;

/// Grid search over `grid` with stratified `folds`-fold cross-validation.
///
/// `plan` is applied to each training fold only. Points whose train/val F1
/// gap exceeds [`OVERFIT_GAP`] are rejected unless every point is. Among
/// the rest the highest mean minority-class F1 wins, smallest `C` on ties.
pub fn tune(
    dtm: &DocTermMatrix,
    labels: &[bool],
    grid: &[f64],
    kind: ModelKind,
    folds: usize,
    plan: Option<ResamplePlan>,
    seed: u64,
) -> Result<TuneOutcome, LearnError> {
    if grid.is_empty() {
        return Err(LearnError::EmptyGrid);
    }
    let tune_seed = seed::derive(seed, &[seed::stream::TUNING]);
    let assignment =
        assign_folds(labels, folds, true, tune_seed).map_err(|source| LearnError::Stratification { folds, source })?;
    let minority = minority_class(labels);
    let f1 = |pred: &[bool], truth: &[bool]| {
        let p: Vec<bool> = pred.iter().map(|&x| x == minority).collect();
        let t: Vec<bool> = truth.iter().map(|&x| x == minority).collect();
        Confusion::from_slices(&p, &t).expect("equal lengths").f1().unwrap_or(0.0)
    };
    let validation_sizes: Vec<usize> = (0..folds).map(|f| assignment.iter().filter(|&&a| a == f).count()).collect();

    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..folds).map(move |f| (g, f))).collect();
    let results: Vec<Result<(f64, f64), LearnError>> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let train_idx: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != f).collect();
            let val_idx: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == f).collect();
            let x_train = dtm.select_rows(&train_idx);
            let y_train: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();
            let x_val = dtm.select_rows(&val_idx);
            let y_val: Vec<bool> = val_idx.iter().map(|&i| labels[i]).collect();
            let fold_seed = seed::derive(tune_seed, &[g as u64, f as u64]);
            let (x_fit, y_fit) = match plan {
                Some(p) => {
                    let r = resample(&x_train, &y_train, &ResamplePlan { seed: fold_seed, ..p })?;
                    (r.dtm, r.labels)
                }
                None => (x_train.clone(), y_train.clone()),
            };
            let model = train(&x_fit, &y_fit, kind, grid[g], fold_seed)?;
            Ok((f1(&model.predict(&x_train)?, &y_train), f1(&model.predict(&x_val)?, &y_val)))
        })
        .collect();

    let mut scores = Vec::with_capacity(grid.len());
    for (g, &c) in grid.iter().enumerate() {
        let (mut tr, mut va) = (0.0, 0.0);
        for f in 0..folds {
            let (t, v) = results[g * folds + f].as_ref().map_err(|e| LearnError::Malformed(e.to_string()))?;
            tr += t;
            va += v;
        }
        let (tr, va) = (tr / folds as f64, va / folds as f64);
        scores.push(GridScore {
            c,
            mean_val_f1: va,
            mean_train_f1: tr,
            rejected: tr - va > OVERFIT_GAP,
        });
    }
    let all_rejected = scores.iter().all(|s| s.rejected);
    let best = scores
        .iter()
        .filter(|s| all_rejected || !s.rejected)
        .fold(None::<&GridScore>, |best, s| match best {
            Some(b) if b.mean_val_f1 > s.mean_val_f1 || (b.mean_val_f1 == s.mean_val_f1 && b.c <= s.c) => Some(b),
            _ => Some(s),
        })
        .expect("non-empty grid");
    Ok(TuneOutcome {
        best_c: best.c,
        scores,
        validation_sizes,
    })
}
