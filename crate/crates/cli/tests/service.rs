mod common;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use needle_cli::commands::{self, SupervisedSetup};
use needle_cli::config::ModeName;
use needle_cli::service::{self, ServerHandle, Session};
use needle_cli::{ExperimentConfig, Overrides};
use needle_core::activeloop::{self, LoopConfig};
use needle_core::{ModelKind, SimulatedOracle};

fn setup() -> (tempfile::TempDir, ExperimentConfig, Arc<SupervisedSetup>) {
    let dir = tempfile::tempdir().unwrap();
    common::write_corpus(dir.path(), 800, 0.1, 9);
    let mut cfg = ExperimentConfig::load(&common::write_config(dir.path(), "")).unwrap();
    cfg.apply(&Overrides {
        out: Some(dir.path().join("results")),
        ..Default::default()
    });
    let corpus = commands::read_corpus(&cfg).unwrap();
    let setup = Arc::new(commands::supervised_setup(&cfg, corpus).unwrap());
    (dir, cfg, setup)
}

fn get_json(agent: &ureq::Agent, url: &str) -> Value {
    agent.get(url).call().unwrap().body_mut().read_json().unwrap()
}

/// Status code of a POST, without treating 4xx as a transport error.
fn post(agent: &ureq::Agent, url: &str, body: &Value) -> u16 {
    agent.post(url).send_json(body).unwrap().status().as_u16()
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn wait_for(agent: &ureq::Agent, server: &ServerHandle, states: &[&str]) -> Value {
    let start = Instant::now();
    loop {
        let s = get_json(agent, &server.url("/status"));
        if states.iter().any(|st| s["state"] == *st) {
            return s;
        }
        assert!(start.elapsed() < Duration::from_secs(120), "stuck in {s}");
        std::thread::sleep(Duration::from_millis(5));
    }
}

fn run_interactive(mode: ModeName) {
    let (_dir, cfg, setup) = setup();
    let lc: LoopConfig = commands::loop_config(&cfg.supervised, mode, ModelKind::Svm, cfg.seed);
    let fold = 2;

    let mut sim = SimulatedOracle::new(&setup.corpus);
    let expected = activeloop::run_loop(&setup.corpus, &setup.features, &setup.plan, fold, &lc, &mut sim, None).unwrap();

    let truth: HashMap<String, bool> =
        setup.corpus.docs().iter().map(|d| (d.id.clone(), d.label.unwrap().is_relevant())).collect();
    let session = Session::new("replay", fold, &lc, Duration::from_secs(120));
    let server = ServerHandle::start("127.0.0.1:0", service::router(session.clone(), None)).unwrap();
    let handle = service::spawn_loop(session.clone(), setup.clone(), fold, lc.clone());
    let agent = agent();
    let labels_url = server.url("/labels");

    let mut asked = Vec::new();
    let mut batches = 0;
    loop {
        let status = wait_for(&agent, &server, &["collecting", "complete", "failed"]);
        if status["state"] != "collecting" {
            assert_eq!(status["state"], "complete", "{status}");
            break;
        }
        let batch = get_json(&agent, &server.url("/batch"));
        let items = batch.as_array().unwrap();
        assert!(!items.is_empty());
        let ids: Vec<String> = items.iter().map(|q| q["id"].as_str().unwrap().to_string()).collect();
        let label = |id: &String| u8::from(truth[id]);

        // an id outside the batch is refused and changes nothing
        assert_eq!(post(&agent, &labels_url, &json!({ "labels": { "not-a-doc": 1 } })), 409);
        // a stale session id is refused
        let stale = json!({ "session": "other", "labels": { ids[0].clone(): label(&ids[0]) } });
        assert_eq!(post(&agent, &labels_url, &stale), 409);

        let (head, tail) = ids.split_at(ids.len() / 2);
        let part = |xs: &[String]| json!({ "session": "replay", "labels": xs.iter().map(|i| (i.clone(), json!(label(i)))).collect::<serde_json::Map<_, _>>() });
        assert_eq!(post(&agent, &labels_url, &part(head)), 202);
        // the opposite label for an already labeled id conflicts
        let flip = json!({ "labels": { head[0].clone(): 1 - label(&head[0]) } });
        assert_eq!(post(&agent, &labels_url, &flip), 409);
        assert_eq!(post(&agent, &labels_url, &part(tail)), 204);
        // double submit of the full batch is a no-op
        assert_eq!(post(&agent, &labels_url, &part(&ids)), 204);
        asked.extend(ids);
        batches += 1;
    }
    let got = handle.join().unwrap().unwrap();
    assert_eq!(batches, 1 + lc.iterations);
    assert_eq!(asked.len(), lc.final_labeled());
    let sim_ids: Vec<String> = sim.log.iter().map(|(id, _)| id.clone()).collect();
    assert_eq!(asked, sim_ids, "acquisition order differs");
    assert_eq!(got.to_ndjson(), expected.to_ndjson());

    let served = get_json(&agent, &server.url("/trace"));
    assert_eq!(served, serde_json::to_value(&expected).unwrap());
    server.stop();
}

#[test]
fn interactive_replay_matches_simulated_active_run() {
    run_interactive(ModeName::Active);
}

#[test]
fn interactive_replay_matches_simulated_passive_run() {
    run_interactive(ModeName::Passive);
}

#[test]
fn active_batches_are_served_most_uncertain_first() {
    let (_dir, cfg, setup) = setup();
    let lc = commands::loop_config(&cfg.supervised, ModeName::Active, ModelKind::Svm, cfg.seed);
    let session = Session::new("order", 0, &lc, Duration::from_secs(60));
    let server = ServerHandle::start("127.0.0.1:0", service::router(session.clone(), None)).unwrap();
    let _handle = service::spawn_loop(session.clone(), setup.clone(), 0, lc);
    let agent = agent();
    let truth: HashMap<String, bool> =
        setup.corpus.docs().iter().map(|d| (d.id.clone(), d.label.unwrap().is_relevant())).collect();

    // the initial batch is random and carries no uncertainty
    wait_for(&agent, &server, &["collecting"]);
    let first = get_json(&agent, &server.url("/batch"));
    assert!(first.as_array().unwrap().iter().all(|q| q["uncertainty"].is_null()));
    let all: serde_json::Map<_, _> = first
        .as_array()
        .unwrap()
        .iter()
        .map(|q| {
            let id = q["id"].as_str().unwrap().to_string();
            let l = u8::from(truth[&id]);
            (id, json!(l))
        })
        .collect();
    assert_eq!(post(&agent, &server.url("/labels"), &json!({ "labels": all })), 204);

    let status = wait_for(&agent, &server, &["collecting"]);
    assert_eq!(status["batch"], 2);
    let second = get_json(&agent, &server.url("/batch"));
    let keys: Vec<f64> = second.as_array().unwrap().iter().map(|q| q["uncertainty"].as_f64().unwrap()).collect();
    assert_eq!(keys.len(), 20);
    assert!(keys.windows(2).all(|w| w[0] <= w[1]), "{keys:?}");

    let trace = get_json(&agent, &server.url("/trace"));
    assert!(trace["reg_c"].is_null());
    assert_eq!(trace["records"].as_array().unwrap().len(), 1);
    session.close();
    server.stop();
}

#[test]
fn static_assets_are_served_next_to_the_api() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>labeler</p>").unwrap();
    let lc = LoopConfig::new(needle_core::LoopMode::Active, ModelKind::Svm, 1);
    let session = Session::new("ui", 0, &lc, Duration::from_secs(1));
    let server = ServerHandle::start("127.0.0.1:0", service::router(session, Some(dir.path().to_path_buf()))).unwrap();
    let agent = agent();
    let mut resp = agent.get(&server.url("/index.html")).call().unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    assert_eq!(resp.body_mut().read_to_string().unwrap(), "<p>labeler</p>");
    let status = get_json(&agent, &server.url("/status"));
    assert_eq!(status["state"], "waiting");
    assert_eq!(status["session"], "ui");
}
