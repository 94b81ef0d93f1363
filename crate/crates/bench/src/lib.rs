//! Fixture generators for the criterion benches.

use needle_core::textpipe::{DocTermMatrix, Weighting};
use needle_core::topicrules::TopicModelFit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sparse rows with `nnz` random columns out of `n_cols`; rows with a
/// signal column in `0..5` are labeled relevant.
pub fn sparse_problem(n_rows: usize, n_cols: usize, nnz: usize, weighting: Weighting, seed: u64) -> (DocTermMatrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::with_capacity(n_rows);
    let rows = (0..n_rows)
        .map(|_| {
            let rel = rng.gen_bool(0.05);
            let mut row: Vec<(u32, f64)> = (0..nnz)
                .map(|_| (rng.gen_range(5..n_cols as u32), f64::from(rng.gen_range(1..4u8))))
                .collect();
            if rel {
                row.push((rng.gen_range(0..5), 1.0));
            }
            row.sort_by_key(|p| p.0);
            row.dedup_by_key(|p| p.0);
            labels.push(rel);
            row
        })
        .collect();
    (DocTermMatrix::from_rows(rows, n_cols, weighting), labels)
}

/// A fit with Dirichlet-ish random rows.
pub fn random_fit(n_docs: usize, k: usize, n_terms: usize, seed: u64) -> TopicModelFit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut simplex = |n: usize| {
        let v: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let theta = (0..n_docs).map(|_| simplex(k)).collect();
    let beta = (0..k).map(|_| simplex(n_terms)).collect();
    TopicModelFit::from_matrices(theta, beta).expect("rows sum to one")
}

/// Plain-text documents of lowercase pseudo-words plus some punctuation,
/// numbers and URLs for the tokenizer to strip.
pub fn texts(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let syll = ["ka", "to", "ri", "mu", "se", "la", "po", "ne", "vi", "du"];
    (0..n)
        .map(|_| {
            (0..rng.gen_range(40..120))
                .map(|i| match i % 17 {
                    5 => "15.8,".to_string(),
                    11 => "https://example.org/x".to_string(),
                    _ => format!("{}{}{}", syll[rng.gen_range(0..10)], syll[rng.gen_range(0..10)], syll[rng.gen_range(0..10)]),
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}
