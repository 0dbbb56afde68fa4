use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use cagkit_core::classify::Laterality;
use cagkit_core::dataset::{split_by_group, CorpusRecord, Granularity, GeneratedText, SplitRatios};
use cagkit_core::ingest::{encode_png, BitDepth};
use cagkit_core::review::REVIEW_TABLE_COLUMNS;
use cagkit_service::{serve, ErrorBody, ServiceConfig, ServiceError, ServiceHandle};
use cagkit_testkit::{conflicts_bruteforce, Ann};
use rand::{Rng, SeedableRng};
use reqwest::StatusCode;
use serde_json::{json, Value};

fn record(exam: &str, video: &str, frame: usize) -> CorpusRecord {
    let mut generated = BTreeMap::new();
    for m in ["m1", "m2"] {
        generated.insert(m.to_string(), GeneratedText { text_jp: None, text_en: Some(format!("{m} says")) });
    }
    CorpusRecord {
        exam_id: exam.into(),
        video_id: video.into(),
        frame_index: frame,
        image_ref: cagkit_core::dataset::image_ref(exam, video, frame),
        laterality: Laterality::Lca,
        report_jp: "所見".into(),
        report_en: "finding".into(),
        gt_summary_jp: "要約".into(),
        gt_summary_en: "summary".into(),
        generated,
        complete: true,
    }
}

/// Corpus of four cases with 16-bit frames on disk and a video split.
fn corpus_dir(root: &Path) -> ServiceConfig {
    let records = vec![record("e1", "v1", 3), record("e1", "v2", 7), record("e2", "v3", 0), record("e3", "v4", 12)];
    for r in &records {
        let path = root.join(&r.image_ref);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        let pixels: Vec<u16> = (0..12).map(|k| k * 5000).collect();
        std::fs::write(&path, encode_png(4, 3, BitDepth::Sixteen, &pixels)).unwrap();
    }
    std::fs::write(root.join("corpus.jsonl"), cagkit_core::jsonl::to_string(&records)).unwrap();
    let (manifest, _) = split_by_group(&records, Granularity::Video, SplitRatios::default(), 3).unwrap();
    std::fs::write(root.join("split.json"), serde_json::to_string(&manifest).unwrap()).unwrap();
    ServiceConfig {
        bind: "127.0.0.1:0".into(),
        corpus: root.join("corpus.jsonl"),
        frame_root: root.to_path_buf(),
        split_manifest: Some(root.join("split.json")),
        candidates: None,
        store_dir: root.join("store"),
        tokens: BTreeMap::new(),
        snapshot_every: 3,
    }
}

struct Running {
    handle: ServiceHandle,
    base: String,
    client: reqwest::Client,
}

async fn start(config: ServiceConfig) -> Running {
    let handle = serve(config).await.expect("service starts");
    let base = format!("http://{}/v1", handle.local_addr());
    Running { handle, base, client: reqwest::Client::new() }
}

impl Running {
    async fn get(&self, path: &str) -> reqwest::Response {
        self.client.get(format!("{}{path}", self.base)).send().await.unwrap()
    }

    async fn post(&self, path: &str, body: Value) -> reqwest::Response {
        self.client.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap()
    }
}

fn review(case: &str, model: &str, reviewer: &str, overall: i64) -> Value {
    json!({"case_id": case, "model_id": model, "reviewer_id": reviewer, "overall": overall})
}

#[tokio::test]
async fn health() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(corpus_dir(dir.path())).await;
    let resp = svc.get("/health").await;
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.json::<Value>().await.unwrap(), json!({"status": "ok"}));
    svc.handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn unwritable_store_fails_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = corpus_dir(dir.path());
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, b"").unwrap();
    config.store_dir = blocker.join("store");
    assert!(matches!(serve(config).await, Err(ServiceError::StoreUnwritable { .. })));
}

#[tokio::test]
async fn bind_failure() {
    let dir = tempfile::tempdir().unwrap();
    let first = start(corpus_dir(dir.path())).await;
    let mut config = corpus_dir(dir.path());
    config.bind = first.handle.local_addr().to_string();
    config.store_dir = dir.path().join("store2");
    assert!(matches!(serve(config).await, Err(ServiceError::BindFailure { .. })));
    first.handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn records_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = corpus_dir(dir.path());
    let svc = start(config.clone()).await;
    let ann = json!({"video_id": "v1", "frame_index": 3, "annotator_id": "dr_a", "label": "LCA_better"});
    let resp = svc.post("/annotations", ann).await;
    assert_eq!(resp.status(), StatusCode::CREATED);
    let stored: Value = resp.json().await.unwrap();
    assert_eq!((stored["seq"].as_u64(), stored["revision"].as_u64()), (Some(1), Some(1)));

    let first: Value = svc.post("/reviews", review("e1:v1:3", "m1", "dr_a", 5)).await.json().await.unwrap();
    let second: Value = svc.post("/reviews", review("e1:v1:3", "m1", "dr_a", 8)).await.json().await.unwrap();
    assert_eq!((first["revision"].as_u64(), second["revision"].as_u64()), (Some(1), Some(2)));
    svc.handle.shutdown().await.unwrap();

    let svc = start(config).await;
    let anns: Value = svc.get("/annotations").await.json().await.unwrap();
    assert_eq!(anns.as_array().unwrap().len(), 1);
    assert_eq!(anns[0]["label"], "LCA_better");
    assert_eq!(anns[0]["annotator_id"], "dr_a");
    let reviews: Value = svc.get("/reviews").await.json().await.unwrap();
    assert_eq!(reviews.as_array().unwrap().len(), 2);
    let table: Value = svc.get("/exports/review-table?format=json").await.json().await.unwrap();
    let m1 = &table["rows"][0];
    assert_eq!((m1["model_id"].as_str(), m1["n"].as_u64(), m1["mean"].as_f64()), (Some("m1"), Some(1), Some(8.0)));

    // Revisions keep counting after the restart.
    let third: Value = svc.post("/reviews", review("e1:v1:3", "m1", "dr_a", 9)).await.json().await.unwrap();
    assert_eq!((third["seq"].as_u64(), third["revision"].as_u64()), (Some(4), Some(3)));
    svc.handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn validation_errors_are_structured() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(corpus_dir(dir.path())).await;

    let resp = svc.post("/reviews", review("e1:v1:3", "m1", "dr", 7)).await;
    assert_eq!(resp.status(), StatusCode::CREATED);

    let resp = svc.post("/reviews", review("e1:v1:3", "m1", "dr", 11)).await;
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let err: ErrorBody = resp.json().await.unwrap();
    assert_eq!((err.code.as_str(), err.field.as_deref()), ("validation_failure", Some("overall")));

    let err: ErrorBody = svc.post("/reviews", review("e1:v1:3", "m9", "dr", 7)).await.json().await.unwrap();
    assert_eq!(err.field.as_deref(), Some("model_id"));

    let resp = svc.post("/reviews", review("nope", "m1", "dr", 7)).await;
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    assert_eq!(resp.json::<ErrorBody>().await.unwrap().code, "unknown_case");

    let bad_label = json!({"video_id": "v1", "frame_index": 3, "annotator_id": "a", "label": "LCA_best"});
    let err: ErrorBody = svc.post("/annotations", bad_label).await.json().await.unwrap();
    assert_eq!(err.field.as_deref(), Some("label"));

    let unknown_frame = json!({"video_id": "v1", "frame_index": 4, "annotator_id": "a", "label": "LCA_bad"});
    assert_eq!(svc.post("/annotations", unknown_frame).await.status(), StatusCode::NOT_FOUND);

    let resp = svc
        .client
        .post(format!("{}/reviews", svc.base))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_eq!(resp.json::<ErrorBody>().await.unwrap().code, "malformed_body");

    let resp = svc.get("/nowhere").await;
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    assert_eq!(resp.json::<ErrorBody>().await.unwrap().code, "not_found");
    svc.handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn bearer_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = corpus_dir(dir.path());
    config.tokens.insert("tok-a".into(), "dr_a".into());
    let svc = start(config).await;

    assert_eq!(svc.get("/health").await.status(), StatusCode::OK);
    assert_eq!(svc.get("/cases").await.status(), StatusCode::UNAUTHORIZED);

    let authed = |path: &str| svc.client.post(format!("{}{path}", svc.base)).bearer_auth("tok-a");
    let mut body = review("e1:v1:3", "m1", "", 6);
    let resp = authed("/reviews").json(&body).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    assert_eq!(resp.json::<Value>().await.unwrap()["reviewer_id"], "dr_a");

    body["reviewer_id"] = json!("dr_b");
    let resp = authed("/reviews").json(&body).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::FORBIDDEN);
    assert_eq!(resp.json::<ErrorBody>().await.unwrap().field.as_deref(), Some("reviewer_id"));

    let resp = svc.client.get(format!("{}/cases", svc.base)).bearer_auth("wrong").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
    svc.handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn cases_and_frames() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(corpus_dir(dir.path())).await;
    let all: Value = svc.get("/cases").await.json().await.unwrap();
    assert_eq!(all.as_array().unwrap().len(), 4);
    let mut by_split = 0;
    for s in ["train", "val", "test"] {
        let part: Value = svc.get(&format!("/cases?split={s}")).await.json().await.unwrap();
        by_split += part.as_array().unwrap().len();
    }
    assert_eq!(by_split, 4);
    assert_eq!(svc.get("/cases?split=holdout").await.status(), StatusCode::BAD_REQUEST);

    let case: Value = svc.get("/cases/e1:v2:7").await.json().await.unwrap();
    assert_eq!(case["report_jp"], "所見");
    assert_eq!(case["generated"]["m2"]["text_en"], "m2 says");
    assert_eq!(svc.get("/cases/e9:v9:0").await.status(), StatusCode::NOT_FOUND);

    let resp = svc.get("/cases/e1:v2:7/frame.png").await;
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/png");
    let img = cagkit_core::ingest::decode_png(&resp.bytes().await.unwrap()).unwrap();
    assert_eq!((img.width, img.height, img.bit_depth), (4, 3, BitDepth::Eight));
    assert_eq!(img.pixels[1], (5000u32 * 255 / 65535) as u16);
    svc.handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn conflicts_match_bruteforce() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(corpus_dir(dir.path())).await;
    let frames = [("v1", 3usize), ("v2", 7), ("v3", 0)];
    let labels = ["LCA_better", "LCA_bad", "LCA_other", "RCA_better", "RCA_bad", "RCA_other"];
    let mut rng = seeded_rng(42);
    let mut events = Vec::new();
    for _ in 0..60 {
        let (video, frame) = frames[rng.random_range(0..frames.len())];
        let who = format!("dr{}", rng.random_range(0..3));
        let label = rng.random_range(0..3u8);
        let resolving = rng.random_bool(0.1);
        let body = json!({"video_id": video, "frame_index": frame, "annotator_id": who,
                          "label": labels[label as usize], "resolving": resolving});
        let stored: Value = svc.post("/annotations", body).await.json().await.unwrap();
        events.push(Ann {
            seq: stored["seq"].as_u64().unwrap(),
            video: video.into(),
            frame,
            annotator: who,
            label,
            resolving,
        });
        let listed: Value = svc.get("/annotations/conflicts").await.json().await.unwrap();
        let got: BTreeSet<(String, usize)> = listed
            .as_array()
            .unwrap()
            .iter()
            .map(|c| (c["video_id"].as_str().unwrap().to_string(), c["frame_index"].as_u64().unwrap() as usize))
            .collect();
        assert_eq!(got, conflicts_bruteforce(&events));
    }
    svc.handle.shutdown().await.unwrap();
}

fn seeded_rng(seed: u64) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(seed)
}

#[tokio::test]
async fn review_table_shape_and_sd() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(corpus_dir(dir.path())).await;
    let mut flagged = review("e1:v1:3", "m1", "dr", 6);
    flagged["vessel_error"] = json!(true);
    svc.post("/reviews", flagged).await;
    svc.post("/reviews", review("e2:v3:0", "m1", "dr", 8)).await;

    let table: Value = svc.get("/exports/review-table?format=json").await.json().await.unwrap();
    let row = &table["rows"][0];
    assert_eq!(row["mean"].as_f64(), Some(7.0));
    assert!((row["sd"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(row["vessel_error"], 1);

    let text = svc.get("/exports/review-table?format=text").await.text().await.unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let header: Vec<&str> = lines[0].split("  ").map(str::trim).filter(|s| !s.is_empty()).collect();
    assert_eq!(header, REVIEW_TABLE_COLUMNS);
    let m1: Vec<&str> = lines[2].split_whitespace().collect();
    assert_eq!(m1, ["m1", "7.00", "1.41", "0", "1", "0", "0", "0"]);
    let m2: Vec<&str> = lines[3].split_whitespace().collect();
    assert_eq!(m2, ["m2", "-", "-", "0", "0", "0", "0", "0"]);

    let again = svc.get("/exports/review-table?format=text").await.text().await.unwrap();
    assert_eq!(text, again);
    assert_eq!(svc.get("/exports/review-table?format=xml").await.status(), StatusCode::BAD_REQUEST);
    svc.handle.shutdown().await.unwrap();
}
