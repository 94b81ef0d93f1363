#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const SYLLABLES: [&str; 20] = [
    "ba", "ko", "ri", "su", "te", "la", "mo", "ne", "pi", "du", "ga", "fe", "lo", "ru", "si", "ta", "vo", "ze", "hu", "ki",
];

/// Alphabetic pseudo-words; the first `signal` of them mark relevant documents.
pub fn words() -> Vec<String> {
    SYLLABLES
        .iter()
        .flat_map(|a| SYLLABLES.iter().map(move |b| format!("{a}{b}n")))
        .collect()
}

/// JSONL corpus of `n` documents: relevant ones carry one to three of 15
/// signal words, every document carries 8–20 background words, and a few
/// irrelevant documents carry one signal word as noise.
pub fn write_corpus(dir: &Path, n: usize, share: f64, seed: u64) -> PathBuf {
    let vocab = words();
    let (signal, background) = vocab.split_at(15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pos = (n as f64 * share).round() as usize;
    let mut flags: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
    flags.shuffle(&mut rng);
    let mut lines = String::new();
    for (i, &rel) in flags.iter().enumerate() {
        let mut tokens: Vec<&str> = (0..rng.gen_range(8..=20))
            .map(|_| background[rng.gen_range(0..background.len())].as_str())
            .collect();
        let n_signal = if rel {
            rng.gen_range(1..=3)
        } else {
            usize::from(rng.gen_bool(0.02))
        };
        for _ in 0..n_signal {
            tokens.push(signal[rng.gen_range(0..signal.len())].as_str());
        }
        tokens.shuffle(&mut rng);
        let doc = json!({ "id": format!("d{i:05}"), "text": tokens.join(" "), "label": if rel { "1" } else { "0" } });
        lines.push_str(&doc.to_string());
        lines.push('\n');
    }
    let path = dir.join("corpus.jsonl");
    fs::write(&path, lines).unwrap();
    path
}

/// Small-budget config for fast end-to-end runs.
pub fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "seed = 42\nout = \"results\"\n\n[corpus]\npath = \"corpus.jsonl\"\n\n\
         [expand]\nneighbor_terms = [\"baban\", \"nosuchword\"]\n\n\
         [expand.local_glove.glove]\ndim = 16\nepochs = 5\n\n\
         [topicrules]\nks = [5, 15]\n\n[topicrules.lda]\niterations = 30\n\n\
         [supervised]\nfolds = 5\ninit_size = 60\nbatch_size = 20\niterations = 3\nreg_c = 1.0\n\
         {extra}"
    );
    let path = dir.join("experiment.toml");
    fs::write(&path, text).unwrap();
    path
}
