//! LDA by collapsed Gibbs sampling, topic-term rankings, and topic-share
//! relevance rules with an exhaustive sweep over topic subsets.

use std::collections::BTreeSet;
use std::io::{self, Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{fmt_opt, Confusion};
use crate::seed;
use crate::textpipe::{DocTermMatrix, Weighting};

/// Topic counts of the standard grid.
pub const K_GRID: [usize; 7] = [5, 15, 30, 50, 70, 90, 110];
/// Thresholds of the standard grid.
pub const XI_GRID: [f64; 4] = [0.1, 0.3, 0.5, 0.7];
/// Default FREX weight.
pub const FREX_OMEGA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("need at least 2 topics, got {0}")]
    TooFewTopics(usize),
    #[error("document-term matrix must hold counts")]
    NotCounts,
    #[error("topic {topic} out of range for K={k}")]
    TopicOutOfRange { topic: usize, k: usize },
    #[error("relevance rule needs at least one topic")]
    EmptyRule,
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("row {row} of {matrix} sums to {sum}")]
    NotStochastic { matrix: &'static str, row: usize, sum: f64 },
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
    #[error("truth has {truth} entries, fit has {docs} documents")]
    TruthMismatch { truth: usize, docs: usize },
    #[error("malformed fit file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Document-topic shares Θ (N×K) and topic-term probabilities B (K×U),
/// both row-major and row-stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModelFit {
    k: usize,
    n_docs: usize,
    n_terms: usize,
    theta: Vec<f64>,
    beta: Vec<f64>,
    pub alpha: f64,
    pub eta: f64,
    pub iterations: usize,
    pub seed: u64,
}

const ROW_TOL: f64 = 1e-9;

impl TopicModelFit {
    /// Builds a fit from explicit matrices, checking shapes and row sums.
    pub fn from_matrices(theta: Vec<Vec<f64>>, beta: Vec<Vec<f64>>) -> Result<Self, TopicError> {
        let k = beta.len();
        let n_terms = beta.first().map_or(0, Vec::len);
        if theta.iter().any(|r| r.len() != k) || beta.iter().any(|r| r.len() != n_terms) {
            return Err(TopicError::Shape("ragged theta or beta".into()));
        }
        for (name, rows) in [("theta", &theta), ("beta", &beta)] {
            for (i, r) in rows.iter().enumerate() {
                let sum: f64 = r.iter().sum();
                if (sum - 1.0).abs() > ROW_TOL {
                    return Err(TopicError::NotStochastic { matrix: name, row: i, sum });
                }
            }
        }
        Ok(Self {
            k,
            n_docs: theta.len(),
            n_terms,
            theta: theta.concat(),
            beta: beta.concat(),
            alpha: f64::NAN,
            eta: f64::NAN,
            iterations: 0,
            seed: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_terms(&self) -> usize {
        self.n_terms
    }

    pub fn theta_row(&self, i: usize) -> &[f64] {
        &self.theta[i * self.k..(i + 1) * self.k]
    }

    pub fn beta_row(&self, k: usize) -> &[f64] {
        &self.beta[k * self.n_terms..(k + 1) * self.n_terms]
    }

    pub fn theta(&self, i: usize, k: usize) -> f64 {
        self.theta[i * self.k + k]
    }

    pub fn beta(&self, k: usize, u: usize) -> f64 {
        self.beta[k * self.n_terms + u]
    }

    /// Θ transposed: one contiguous column per topic.
    pub fn theta_columns(&self) -> Vec<Vec<f64>> {
        (0..self.k).map(|k| (0..self.n_docs).map(|i| self.theta(i, k)).collect()).collect()
    }

    /// JSON header line, then Θ and B as little-endian f64.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), TopicError> {
        let header = serde_json::json!({
            "k": self.k,
            "n_docs": self.n_docs,
            "n_terms": self.n_terms,
            "alpha": self.alpha,
            "eta": self.eta,
            "iterations": self.iterations,
            "seed": self.seed,
        });
        writeln!(out, "{header}")?;
        for x in self.theta.iter().chain(&self.beta) {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, TopicError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| TopicError::Malformed("missing header".into()))?;
        #[derive(Deserialize)]
        struct Header {
            k: usize,
            n_docs: usize,
            n_terms: usize,
            alpha: Option<f64>,
            eta: Option<f64>,
            iterations: usize,
            seed: u64,
        }
        let h: Header = serde_json::from_slice(&bytes[..nl]).map_err(|e| TopicError::Malformed(e.to_string()))?;
        let n_theta = h.n_docs * h.k;
        let n_beta = h.k * h.n_terms;
        let body = &bytes[nl + 1..];
        if body.len() != 8 * (n_theta + n_beta) {
            return Err(TopicError::Malformed("body length does not match header".into()));
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            k: h.k,
            n_docs: h.n_docs,
            n_terms: h.n_terms,
            theta: values[..n_theta].to_vec(),
            beta: values[n_theta..].to_vec(),
            alpha: h.alpha.unwrap_or(f64::NAN),
            eta: h.eta.unwrap_or(f64::NAN),
            iterations: h.iterations,
            seed: h.seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaOptions {
    /// Document-topic prior; `None` means `50/K`.
    pub alpha: Option<f64>,
    pub eta: f64,
    pub iterations: usize,
}

impl Default for LdaOptions {
    fn default() -> Self {
        Self {
            alpha: None,
            eta: 0.01,
            iterations: 1000,
        }
    }
}

/// Fits LDA with a collapsed Gibbs sampler and returns the smoothed
/// posterior means of the final state:
/// `θ_ik = (n_ik+α)/(n_i+Kα)`, `β_ku = (n_ku+η)/(n_k+Uη)`.
///
/// Entries of the count matrix are rounded to whole tokens. Documents with
/// no tokens get a uniform Θ row.
pub fn fit_lda(dtm: &DocTermMatrix, k: usize, opts: LdaOptions, seed: u64) -> Result<TopicModelFit, TopicError> {
    if k < 2 {
        return Err(TopicError::TooFewTopics(k));
    }
    if dtm.weighting() != Weighting::Count {
        return Err(TopicError::NotCounts);
    }
    let alpha = opts.alpha.unwrap_or(50.0 / k as f64);
    let eta = opts.eta;
    let (n, u) = (dtm.n_rows(), dtm.n_cols());
    let mut rng = seed::rng(seed::derive(seed, &[seed::stream::LDA, k as u64]));

    let docs: Vec<Vec<u32>> = dtm
        .rows()
        .map(|r| {
            r.iter()
                .flat_map(|(j, c)| std::iter::repeat_n(j as u32, c.round().max(0.0) as usize))
                .collect()
        })
        .collect();
    let mut z: Vec<Vec<u16>> = docs.iter().map(|d| d.iter().map(|_| rng.gen_range(0..k) as u16).collect()).collect();
    let mut ndk = vec![0u32; n * k];
    let mut nkw = vec![0u32; k * u];
    let mut nk = vec![0u32; k];
    for (i, d) in docs.iter().enumerate() {
        for (&w, &t) in d.iter().zip(&z[i]) {
            let t = t as usize;
            ndk[i * k + t] += 1;
            nkw[t * u + w as usize] += 1;
            nk[t] += 1;
        }
    }

    let u_eta = u as f64 * eta;
    let mut p = vec![0.0; k];
    for _ in 0..opts.iterations {
        for (i, d) in docs.iter().enumerate() {
            let zi = &mut z[i];
            for (pos, &w) in d.iter().enumerate() {
                let w = w as usize;
                let old = zi[pos] as usize;
                ndk[i * k + old] -= 1;
                nkw[old * u + w] -= 1;
                nk[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (ndk[i * k + t] as f64 + alpha) * (nkw[t * u + w] as f64 + eta) / (nk[t] as f64 + u_eta);
                    p[t] = total;
                }
                let r = rng.gen::<f64>() * total;
                let new = p.iter().position(|&c| r < c).unwrap_or(k - 1);
                zi[pos] = new as u16;
                ndk[i * k + new] += 1;
                nkw[new * u + w] += 1;
                nk[new] += 1;
            }
        }
    }

    let mut theta = Vec::with_capacity(n * k);
    for (i, d) in docs.iter().enumerate() {
        if d.is_empty() {
            log::warn!("document {i} has no tokens; assigning uniform topic shares");
        }
        let den = d.len() as f64 + k as f64 * alpha;
        theta.extend((0..k).map(|t| (ndk[i * k + t] as f64 + alpha) / den));
    }
    let mut beta = Vec::with_capacity(k * u);
    for t in 0..k {
        let den = nk[t] as f64 + u_eta;
        beta.extend((0..u).map(|w| (nkw[t * u + w] as f64 + eta) / den));
    }
    Ok(TopicModelFit {
        k,
        n_docs: n,
        n_terms: u,
        theta,
        beta,
        alpha,
        eta,
        iterations: opts.iterations,
        seed,
    })
}

/// Fits one model per topic count, in parallel.
pub fn fit_grid(dtm: &DocTermMatrix, ks: &[usize], opts: LdaOptions, seed: u64) -> Result<Vec<TopicModelFit>, TopicError> {
    ks.par_iter().map(|&k| fit_lda(dtm, k, opts, seed)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ranking", rename_all = "lowercase")]
pub enum Ranking {
    Probability,
    Exclusivity,
    Frex { omega: f64 },
}

/// `β_ku / Σ_j β_ju` for every term of topic `k`.
pub fn exclusivity(fit: &TopicModelFit, k: usize) -> Vec<f64> {
    (0..fit.n_terms)
        .map(|u| {
            let total: f64 = (0..fit.k).map(|j| fit.beta(j, u)).sum();
            fit.beta(k, u) / total
        })
        .collect()
}

/// Empirical CDF of `values` evaluated at each of them: the share of
/// entries less than or equal.
pub fn ecdf(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values
        .iter()
        .map(|&x| sorted.partition_point(|&s| s <= x) as f64 / n)
        .collect()
}

/// FREX scores of all terms in topic `k`:
/// `1 / (ω/ECDF(excl) + (1−ω)/ECDF(β))`, ECDFs taken within the topic.
pub fn frex(fit: &TopicModelFit, k: usize, omega: f64) -> Vec<f64> {
    let e = ecdf(&exclusivity(fit, k));
    let b = ecdf(fit.beta_row(k));
    e.iter().zip(&b).map(|(e, b)| 1.0 / (omega / e + (1.0 - omega) / b)).collect()
}

/// The `n` highest-ranked term ids of topic `k` with their scores; ties go
/// to the lower term id.
pub fn top_terms(fit: &TopicModelFit, k: usize, n: usize, ranking: Ranking) -> Result<Vec<(usize, f64)>, TopicError> {
    if k >= fit.k {
        return Err(TopicError::TopicOutOfRange { topic: k, k: fit.k });
    }
    let scores = match ranking {
        Ranking::Probability => fit.beta_row(k).to_vec(),
        Ranking::Exclusivity => exclusivity(fit, k),
        Ranking::Frex { omega } => frex(fit, k, omega),
    };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(order.into_iter().take(n).map(|u| (u, scores[u])).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceRule {
    pub relevant_topics: BTreeSet<usize>,
    pub xi: f64,
}

impl RelevanceRule {
    pub fn new(topics: impl IntoIterator<Item = usize>, xi: f64) -> Result<Self, TopicError> {
        let relevant_topics: BTreeSet<usize> = topics.into_iter().collect();
        if relevant_topics.is_empty() {
            return Err(TopicError::EmptyRule);
        }
        if !(0.0..=1.0).contains(&xi) {
            return Err(TopicError::InvalidThreshold(xi));
        }
        Ok(Self { relevant_topics, xi })
    }

    fn check(&self, fit: &TopicModelFit) -> Result<(), TopicError> {
        match self.relevant_topics.iter().find(|&&t| t >= fit.k) {
            Some(&topic) => Err(TopicError::TopicOutOfRange { topic, k: fit.k }),
            None => Ok(()),
        }
    }
}

/// `r_i = Σ_{k∈C} θ_ik`, summed from 0 in ascending topic order.
pub fn score_rule(fit: &TopicModelFit, rule: &RelevanceRule) -> Result<Vec<f64>, TopicError> {
    rule.check(fit)?;
    Ok((0..fit.n_docs)
        .map(|i| rule.relevant_topics.iter().fold(0.0, |acc, &k| acc + fit.theta(i, k)))
        .collect())
}

/// Documents with `r_i ≥ ξ` are relevant.
pub fn classify_rule(fit: &TopicModelFit, rule: &RelevanceRule) -> Result<Vec<bool>, TopicError> {
    Ok(score_rule(fit, rule)?.into_iter().map(|r| r >= rule.xi).collect())
}

/// Number of topic subsets of size `1..=max` out of `k`.
pub fn subset_count(k: usize, max: usize) -> u64 {
    (1..=max.min(k)).map(|m| binomial(k as u64, m as u64)).sum()
}

fn binomial(n: u64, m: u64) -> u64 {
    (0..m).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// One evaluated rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub topics: Vec<u16>,
    pub xi: f64,
    pub confusion: Confusion,
}

impl SweepRow {
    pub fn f1(&self) -> Option<f64> {
        self.confusion.f1()
    }

    pub fn csv_header() -> [&'static str; 10] {
        ["K", "topics", "xi", "tp", "fp", "fn", "tn", "precision", "recall", "f1"]
    }

    pub fn csv_record(&self) -> [String; 10] {
        let c = &self.confusion;
        [
            self.k.to_string(),
            self.topics.iter().map(u16::to_string).collect::<Vec<_>>().join(";"),
            self.xi.to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
            fmt_opt(c.precision()),
            fmt_opt(c.recall()),
            fmt_opt(c.f1()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    /// `(K, subsets evaluated)` per fit.
    pub subsets: Vec<(usize, u64)>,
    pub rows: u64,
    /// Two best rules per K by F1 (undefined counts as 0), ties to higher
    /// recall, then to the earlier row.
    pub best: Vec<Vec<SweepRow>>,
}

/// Evaluates every subset of `1..=max_relevant` topics for every fit and
/// every threshold. Rows reach `sink` ordered by K (fit order), subset size,
/// lexicographic topic order, then threshold order.
///
/// Subset scores are sums of precomputed Θ columns; a subset reuses the
/// partial sum of its prefix.
pub fn sweep_rules(
    fits: &[TopicModelFit],
    max_relevant: usize,
    xi_grid: &[f64],
    truth: &[bool],
    mut sink: impl FnMut(&SweepRow),
) -> Result<SweepSummary, TopicError> {
    for &xi in xi_grid {
        if !(0.0..=1.0).contains(&xi) {
            return Err(TopicError::InvalidThreshold(xi));
        }
    }
    let mut summary = SweepSummary {
        subsets: Vec::new(),
        rows: 0,
        best: Vec::new(),
    };
    for fit in fits {
        if truth.len() != fit.n_docs {
            return Err(TopicError::TruthMismatch {
                truth: truth.len(),
                docs: fit.n_docs,
            });
        }
        let columns = fit.theta_columns();
        let mut prefixes: Vec<Vec<u16>> = Vec::new();
        for size in 1..=max_relevant.min(fit.k) {
            collect_prefixes(fit.k, size - 1, &mut Vec::new(), &mut prefixes);
        }
        let groups: Vec<Vec<SweepRow>> = prefixes
            .par_iter()
            .map(|prefix| eval_group(fit.k, prefix, &columns, xi_grid, truth))
            .collect();
        let mut best: Vec<SweepRow> = Vec::with_capacity(2);
        let mut n_subsets = 0u64;
        for group in groups {
            n_subsets += (group.len() / xi_grid.len().max(1)) as u64;
            for row in group {
                sink(&row);
                summary.rows += 1;
                consider_best(&mut best, row);
            }
        }
        summary.subsets.push((fit.k, n_subsets));
        summary.best.push(best);
    }
    Ok(summary)
}

fn collect_prefixes(k: usize, len: usize, current: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
    if current.len() == len {
        let next = current.last().map_or(0, |&t| t as usize + 1);
        if next < k {
            out.push(current.clone());
        }
        return;
    }
    let start = current.last().map_or(0, |&t| t as usize + 1);
    for t in start..k {
        current.push(t as u16);
        collect_prefixes(k, len, current, out);
        current.pop();
    }
}

fn eval_group(k: usize, prefix: &[u16], columns: &[Vec<f64>], xi_grid: &[f64], truth: &[bool]) -> Vec<SweepRow> {
    let n = truth.len();
    let mut partial = vec![0.0; n];
    for &t in prefix {
        partial.iter_mut().zip(&columns[t as usize]).for_each(|(p, c)| *p += c);
    }
    let first = prefix.last().map_or(0, |&t| t as usize + 1);
    let mut rows = Vec::with_capacity((k - first) * xi_grid.len());
    let mut counts = vec![Confusion::default(); xi_grid.len()];
    for last in first..k {
        counts.iter_mut().for_each(|c| *c = Confusion::default());
        let col = &columns[last];
        for i in 0..n {
            let r = partial[i] + col[i];
            for (c, &xi) in counts.iter_mut().zip(xi_grid) {
                c.add(r >= xi, truth[i]);
            }
        }
        let mut topics = prefix.to_vec();
        topics.push(last as u16);
        for (c, &xi) in counts.iter().zip(xi_grid) {
            rows.push(SweepRow {
                k,
                topics: topics.clone(),
                xi,
                confusion: *c,
            });
        }
    }
    rows
}

fn rank_key(row: &SweepRow) -> (f64, f64) {
    (row.f1().unwrap_or(0.0), row.confusion.recall().unwrap_or(0.0))
}

fn consider_best(best: &mut Vec<SweepRow>, row: SweepRow) {
    let key = rank_key(&row);
    let beats = |other: &SweepRow| {
        let o = rank_key(other);
        key.0 > o.0 || (key.0 == o.0 && key.1 > o.1)
    };
    let pos = best.iter().position(beats).unwrap_or(best.len());
    if pos < 2 {
        best.insert(pos, row);
        best.truncate(2);
    }
}
