//! The four experiment families. Each command loads the corpus, runs a
//! recipe from `needle_core::recipes` and persists plot-ready files under
//! `<out>/<command>/`.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde_json::json;

use needle_core::activeloop::{self, LoopConfig, LoopMode};
use needle_core::corpus::{self, load_corpus, FoldPlan, LabeledCorpus};
use needle_core::embed::{self, EmbeddingSpace};
use needle_core::metrics::{fmt_opt, Confusion};
use needle_core::recipes;
use needle_core::seed;
use needle_core::topicrules::{self, Ranking, SweepRow};
use needle_core::{DocTermMatrix, ModelKind};

use crate::config::{ExperimentConfig, ModeName, SupervisedTask};
use crate::output::OutputDir;
use crate::service::{self, ServerHandle, Session};

pub fn read_corpus(cfg: &ExperimentConfig) -> Result<LabeledCorpus> {
    let format = cfg.corpus.format()?;
    let report = load_corpus(&cfg.corpus.path, format, &cfg.corpus.schema)
        .with_context(|| format!("loading corpus {}", cfg.corpus.path.display()))?;
    if !report.rejected.is_empty() {
        warn!("{} rows rejected while loading {}", report.rejected.len(), cfg.corpus.path.display());
        for r in report.rejected.iter().take(10) {
            warn!("  row {}: {}", r.row, r.reason);
        }
    }
    let c = &report.corpus;
    info!("corpus {}: {} documents, {} relevant", c.name(), c.len(), c.relevant_count());
    Ok(report.corpus)
}

fn corpus_details(c: &LabeledCorpus) -> serde_json::Value {
    json!({ "name": c.name(), "documents": c.len(), "relevant": c.relevant_count() })
}

fn confusion_fields(c: &Confusion) -> [String; 7] {
    [
        c.tp.to_string(),
        c.fp.to_string(),
        c.fn_.to_string(),
        c.tn.to_string(),
        fmt_opt(c.precision()),
        fmt_opt(c.recall()),
        fmt_opt(c.f1()),
    ]
}

const CONFUSION_HEADER: [&str; 7] = ["tp", "fp", "fn", "tn", "precision", "recall", "f1"];

fn header<'a>(lead: &[&'a str]) -> Vec<&'a str> {
    lead.iter().copied().chain(CONFUSION_HEADER).collect()
}

fn record(lead: Vec<String>, c: &Confusion) -> Vec<String> {
    lead.into_iter().chain(confusion_fields(c)).collect()
}

pub fn cmd_keywords(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let corpus = read_corpus(cfg)?;
    let mut out = OutputDir::create(cfg, "keywords", &[("seed", cfg.seed)])?;
    let run = recipes::run_keywords(&corpus, &cfg.keywords, cfg.seed)?;
    if run.predictive.truncated {
        warn!("only {} terms had a positive coefficient", run.predictive.ranked.len());
    }

    let mut w = out.file("predictive_terms.csv")?;
    writeln!(w, "{}", out.provenance())?;
    run.predictive.write_csv(&mut w)?;
    w.flush()?;

    let mut w = out.csv("keyword_lists.csv")?;
    w.write_record(["list", "position", "term"])?;
    for (li, list) in run.lists.iter().enumerate() {
        for (pos, term) in list.terms().iter().enumerate() {
            w.write_record([li.to_string(), pos.to_string(), term.clone()])?;
        }
    }
    w.flush()?;

    let mut w = out.csv("keyword_scores.csv")?;
    w.write_record(header(&["list", "size"]))?;
    for (li, (list, c)) in run.lists.iter().zip(&run.confusions).enumerate() {
        w.write_record(record(vec![li.to_string(), list.len().to_string()], c))?;
    }
    w.flush()?;

    let (min, mean, max) = run.f1_summary();
    let mut w = out.csv("keyword_summary.csv")?;
    w.write_record(["lists", "min_f1", "mean_f1", "max_f1", "spread", "penalty", "c"])?;
    w.write_record([
        run.lists.len().to_string(),
        min.to_string(),
        mean.to_string(),
        max.to_string(),
        (max - min).to_string(),
        run.predictive.penalty.to_string(),
        run.predictive.regularization_strength.to_string(),
    ])?;
    w.flush()?;
    info!("keyword lists: F1 min {min:.3} mean {mean:.3} max {max:.3}");

    out.finish(
        cfg,
        json!({
            "corpus": corpus_details(&corpus),
            "lists": run.lists.len(),
            "f1": { "min": min, "mean": mean, "max": max, "spread": max - min },
            "penalty": run.predictive.penalty.to_string(),
            "c": run.predictive.regularization_strength,
            "predictive_terms": run.predictive.ranked.len(),
        }),
    )
}

pub fn cmd_expand(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let task = &cfg.expand;
    if !task.local && task.embedding_file.is_none() {
        bail!("expand needs expand.local = true or an expand.embedding_file");
    }
    let corpus = read_corpus(cfg)?;
    let lang = cfg.keywords.lang;
    let mut spaces: Vec<(&str, EmbeddingSpace)> = Vec::new();
    if let Some(path) = &task.embedding_file {
        if !path.exists() {
            bail!("embedding file {} does not exist", path.display());
        }
        let space = embed::load_vectors(path).with_context(|| format!("loading vectors {}", path.display()))?;
        info!("global space: {} terms, dim {}", space.len(), space.dim());
        spaces.push(("global", space));
    }
    if task.local {
        let space = recipes::local_glove(&corpus, lang, &task.local_glove, cfg.seed)?;
        info!("local space: {} terms, dim {}", space.len(), space.dim());
        spaces.insert(0, ("local", space));
    }
    let mut out = OutputDir::create(cfg, "expand", &[("seed", cfg.seed)])?;
    let run = recipes::run_keywords(&corpus, &cfg.keywords, cfg.seed)?;

    let mut traj = out.csv("expansion_trajectories.csv")?;
    traj.write_record(header(&["space", "list", "m", "size"]))?;
    let mut added = out.csv("expansion_neighbors.csv")?;
    added.write_record(["space", "list", "m", "keyword", "rank", "neighbor", "cosine"])?;
    let mut details = Vec::new();
    for (id, space) in &spaces {
        let points = recipes::run_expansion(&corpus, lang, &run.lists, space, id, &task.ms);
        for p in &points {
            let lead = vec![id.to_string(), p.list.to_string(), p.m.to_string(), p.size.to_string()];
            traj.write_record(record(lead, &p.confusion))?;
        }
        let widest = task.ms.iter().copied().max().unwrap_or(0);
        let mut skipped = 0;
        for (li, list) in run.lists.iter().enumerate() {
            let e = embed::expand_query(list, space, widest, id);
            skipped += e.skipped.len();
            for r in &e.trace {
                added.write_record([
                    id.to_string(),
                    li.to_string(),
                    widest.to_string(),
                    r.keyword.clone(),
                    r.rank.to_string(),
                    r.neighbor.clone(),
                    r.cosine.to_string(),
                ])?;
            }
        }
        if skipped > 0 {
            warn!("{id}: {skipped} keyword occurrences have no vector and were not expanded");
        }
        details.push(json!({
            "space": id,
            "terms": space.len(),
            "dim": space.dim(),
            "source": space.source,
            "rows": points.len(),
            "skipped_keywords": skipped,
        }));
    }
    traj.flush()?;
    added.flush()?;

    if !task.neighbor_terms.is_empty() {
        let mut w = out.csv("neighbors.csv")?;
        w.write_record(["space", "term", "rank", "neighbor", "cosine"])?;
        for (id, space) in &spaces {
            for term in &task.neighbor_terms {
                let term = term.to_lowercase();
                match space.nearest(&term, task.neighbor_count) {
                    Ok(nn) => {
                        for (rank, (n, cos)) in nn.iter().enumerate() {
                            w.write_record([id.to_string(), term.clone(), (rank + 1).to_string(), n.clone(), cos.to_string()])?;
                        }
                    }
                    Err(e) => warn!("{id}: no neighbours for `{term}`: {e}"),
                }
            }
        }
        w.flush()?;
    }

    out.finish(cfg, json!({ "corpus": corpus_details(&corpus), "lists": run.lists.len(), "ms": task.ms, "spaces": details }))
}

pub fn cmd_topicrules(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let task = &cfg.topicrules;
    let corpus = read_corpus(cfg)?;
    let mut out = OutputDir::create(cfg, "topicrules", &[("seed", cfg.seed)])?;

    let mut sweep = out.csv("sweep.csv")?;
    sweep.write_record(SweepRow::csv_header())?;
    let mut sink_err: Option<csv::Error> = None;
    let run = recipes::run_topics(&corpus, &task.settings, cfg.seed, |row| {
        if sink_err.is_none() {
            if let Err(e) = sweep.write_record(row.csv_record()) {
                sink_err = Some(e);
            }
        }
    })?;
    if let Some(e) = sink_err {
        return Err(e.into());
    }
    sweep.flush()?;
    drop(sweep);
    info!("sweep: {} rules evaluated", run.summary.rows);

    let mut w = out.csv("best_rules.csv")?;
    let mut head = vec!["rank"];
    head.extend(SweepRow::csv_header());
    w.write_record(&head)?;
    for best in &run.summary.best {
        for (rank, row) in best.iter().enumerate() {
            let mut rec = vec![(rank + 1).to_string()];
            rec.extend(row.csv_record());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    let rankings = [
        ("probability", Ranking::Probability),
        ("frex", Ranking::Frex { omega: topicrules::FREX_OMEGA }),
        ("exclusivity", Ranking::Exclusivity),
    ];
    let mut w = out.csv("top_terms.csv")?;
    w.write_record(["K", "topic", "ranking", "rank", "term", "score"])?;
    for (fit, best) in run.fits.iter().zip(&run.summary.best) {
        let mut topics: Vec<u16> = best.iter().flat_map(|r| r.topics.iter().copied()).collect();
        topics.sort_unstable();
        topics.dedup();
        for &t in &topics {
            for (name, ranking) in rankings {
                for (rank, (u, score)) in topicrules::top_terms(fit, t as usize, task.top_terms, ranking)?.into_iter().enumerate() {
                    w.write_record([
                        fit.k().to_string(),
                        t.to_string(),
                        name.to_string(),
                        (rank + 1).to_string(),
                        run.vocab.term(u).to_string(),
                        score.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;

    if task.write_fits {
        for fit in &run.fits {
            let mut w = out.file(&format!("fits/lda_k{}.bin", fit.k()))?;
            fit.write_to(&mut w)?;
            w.flush()?;
        }
    }

    let best: Vec<_> = run
        .summary
        .best
        .iter()
        .filter_map(|b| b.first())
        .map(|r| json!({ "K": r.k, "topics": r.topics, "xi": r.xi, "f1": r.f1() }))
        .collect();
    let subsets: Vec<_> = run.summary.subsets.iter().map(|(k, n)| json!({ "K": k, "subsets": n })).collect();
    out.finish(
        cfg,
        json!({
            "corpus": corpus_details(&corpus),
            "vocabulary": run.vocab.len(),
            "rows": run.summary.rows,
            "subsets": subsets,
            "best_per_k": best,
        }),
    )
}

/// Corpus, feature matrix and outer fold plan shared by `supervised` and
/// `serve`.
pub struct SupervisedSetup {
    pub corpus: LabeledCorpus,
    pub features: DocTermMatrix,
    pub plan: FoldPlan,
}

pub fn fold_seed(cfg: &ExperimentConfig) -> u64 {
    seed::derive(cfg.seed, &[seed::stream::FOLDS])
}

pub fn supervised_setup(cfg: &ExperimentConfig, corpus: LabeledCorpus) -> Result<SupervisedSetup> {
    let task = &cfg.supervised;
    let (vocab, features) = recipes::supervised_features(&corpus, &task.features)?;
    info!("supervised features: {} terms", vocab.len());
    let plan = corpus::make_folds(&corpus, task.folds, task.stratified_folds, fold_seed(cfg))?;
    Ok(SupervisedSetup { corpus, features, plan })
}

pub fn loop_config(task: &SupervisedTask, mode: ModeName, model: ModelKind, root_seed: u64) -> LoopConfig {
    let mode = match mode {
        ModeName::Active => LoopMode::Active,
        ModeName::Passive => LoopMode::Passive {
            oversample_factor: task.oversample_factor,
        },
    };
    LoopConfig {
        init_size: task.init_size,
        batch_size: task.batch_size,
        iterations: task.iterations,
        mode,
        model,
        reg_c: task.reg_c,
        seed: root_seed,
    }
}

pub fn model_slug(m: ModelKind) -> &'static str {
    match m {
        ModelKind::Svm => "svm",
        ModelKind::Logistic => "logistic",
    }
}

pub fn cmd_supervised(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let task = &cfg.supervised;
    let setup = supervised_setup(cfg, read_corpus(cfg)?)?;
    let mut out = OutputDir::create(cfg, "supervised", &[("seed", cfg.seed), ("fold_seed", setup.plan.seed)])?;
    out.json("fold_plan.json", &setup.plan)?;

    let mut summary = Vec::new();
    let mut sw = out.csv("summary.csv")?;
    sw.write_record(["mode", "model", "labeled_count", "pos_share", "test_precision", "test_recall", "test_f1", "undefined_f1"])?;
    for &model in &task.models {
        for &mode in &task.modes {
            let lc = loop_config(task, mode, model, cfg.seed);
            let tag = format!("{}_{}", lc.mode.name(), model_slug(model));
            info!("running {tag} over {} folds", setup.plan.n_folds);
            let traces = activeloop::run_replications(&setup.corpus, &setup.features, &setup.plan, &lc)?;
            for t in &traces {
                let name = format!("traces/{tag}_fold{}", t.test_fold);
                let mut w = out.file(&format!("{name}.ndjson"))?;
                t.write_ndjson(&mut w)?;
                w.flush()?;
                let mut w = out.file(&format!("{name}.csv"))?;
                writeln!(w, "{} test_fold={} reg_c={}", out.provenance(), t.test_fold, t.reg_c)?;
                t.write_csv(&mut w)?;
                w.flush()?;
            }
            let curve = activeloop::mean_curve(&traces);
            let mut w = out.csv(&format!("curve_{tag}.csv"))?;
            for p in &curve {
                w.serialize(p)?;
            }
            w.flush()?;
            if let Some(last) = curve.last() {
                info!("{tag}: mean test F1 {:.3} at {} labels", last.test_f1, last.labeled_count);
                sw.serialize((
                    lc.mode.name(),
                    model,
                    last.labeled_count,
                    last.pos_share,
                    last.test_precision,
                    last.test_recall,
                    last.test_f1,
                    last.undefined_f1,
                ))?;
                summary.push(json!({
                    "mode": lc.mode.name(),
                    "model": model,
                    "final_mean_test_f1": last.test_f1,
                    "reg_c": traces.iter().map(|t| t.reg_c).collect::<Vec<_>>(),
                }));
            }
        }
    }
    sw.flush()?;
    drop(sw);
    out.finish(
        cfg,
        json!({ "corpus": corpus_details(&setup.corpus), "folds": setup.plan.fold_sizes(), "runs": summary }),
    )
}

/// Runs one interactive loop behind the HTTP service, writes the finished
/// trace, then keeps serving until interrupted.
pub fn cmd_serve(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let task = &cfg.serve;
    let setup = Arc::new(supervised_setup(cfg, read_corpus(cfg)?)?);
    let lc = loop_config(&cfg.supervised, task.mode, task.model, cfg.seed);
    let session_id = format!("{:016x}", seed::derive(cfg.seed, &[task.test_fold as u64, std::process::id() as u64]));
    let session = Session::new(session_id, task.test_fold, &lc, Duration::from_secs(task.label_timeout_secs));
    let server = ServerHandle::start(&task.bind, service::router(session.clone(), task.static_dir.clone()))?;
    info!("annotation service on http://{} (session {})", server.addr, session.id());

    let handle = service::spawn_loop(session.clone(), setup.clone(), task.test_fold, lc.clone());
    let trace = handle.join().map_err(|_| anyhow::anyhow!("loop thread panicked"))??;

    let mut out = OutputDir::create(cfg, "serve", &[("seed", cfg.seed), ("fold_seed", setup.plan.seed)])?;
    let tag = format!("{}_{}_fold{}", lc.mode.name(), model_slug(lc.model), task.test_fold);
    let mut w = out.file(&format!("{tag}.ndjson"))?;
    trace.write_ndjson(&mut w)?;
    w.flush()?;
    let mut w = out.file(&format!("{tag}.csv"))?;
    writeln!(w, "{} test_fold={} reg_c={}", out.provenance(), trace.test_fold, trace.reg_c)?;
    trace.write_csv(&mut w)?;
    w.flush()?;
    let dir = out.finish(cfg, json!({ "corpus": corpus_details(&setup.corpus), "session": session.id() }))?;
    info!("loop complete; results in {}. Serving until Ctrl-C.", dir.display());

    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(tokio::signal::ctrl_c())?;
    server.stop();
    Ok(dir)
}
