//! Synthetic pipeline inputs: three cines, a stub predictor, report tables,
//! generated texts and embeddings, plus a config tying them together.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cagkit_core::classify::{select_top_confidence, FramePrediction, SelectionPolicy, SixClassLabel};
use cagkit_core::dataset::case_id;
use cagkit_core::ingest::{frame_stats, write_imagedir, BitDepth, ImageFormat};
use cagkit_core::sampler::sample_keyframe_candidates;
use cagkit_core::vlscore::{write_binary, EmbeddingTriple};
use cagkit_core::{CineSequence, SamplerConfig};
use cagkit_testkit::unit_vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const SIDE: usize = 8;
pub const FRAMES: usize = 48;

pub struct Cine {
    pub exam: &'static str,
    pub video: &'static str,
    pub rel: &'static str,
    pub bits: BitDepth,
    /// Per-frame (mean, half-contrast); the frame is a checkerboard of
    /// `mean - s` and `mean + s`, so its mean is exact and its variance `s^2`.
    pub levels: Vec<(u16, u16)>,
}

impl Cine {
    fn frames(&self) -> Vec<Vec<u16>> {
        self.levels
            .iter()
            .map(|&(m, s)| {
                (0..SIDE * SIDE)
                    .map(|k| if (k / SIDE + k % SIDE).is_multiple_of(2) { m - s } else { m + s })
                    .collect()
            })
            .collect()
    }

    pub fn sequence(&self) -> CineSequence {
        CineSequence::new(self.exam, self.video, SIDE as u32, SIDE as u32, self.bits, self.frames()).unwrap()
    }

    pub fn means(&self) -> Vec<f64> {
        self.levels.iter().map(|&(m, _)| m as f64).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.levels.iter().map(|&(_, s)| (s as f64).powi(2)).collect()
    }
}

fn levels(scale: f64, mean_period: f64, var_period: f64, phase: f64) -> Vec<(u16, u16)> {
    (0..FRAMES)
        .map(|f| {
            let f = f as f64;
            let m = scale * (100.0 + 40.0 * (2.0 * PI * f / mean_period).sin());
            let s = scale * (20.0 + 10.0 * (2.0 * PI * f / var_period + phase).cos());
            (m.round() as u16, s.round() as u16)
        })
        .collect()
}

pub fn cines() -> Vec<Cine> {
    vec![
        Cine { exam: "E1", video: "V1", rel: "cines/E1/V1.dcm", bits: BitDepth::Eight, levels: levels(1.0, 16.0, 12.0, 0.0) },
        Cine { exam: "E1", video: "V2", rel: "cines/E1/V2", bits: BitDepth::Eight, levels: levels(1.0, 20.0, 9.0, 1.0) },
        Cine { exam: "E2", video: "V3", rel: "cines/E2/V3", bits: BitDepth::Sixteen, levels: levels(200.0, 14.0, 22.0, 2.0) },
    ]
}

/// V1 and V3 show the left artery, V2 the right one. Even frames are
/// `better`, odd ones `bad`; confidence rises with the frame index.
pub fn stub_label(video: &str, frame: usize) -> SixClassLabel {
    use SixClassLabel::*;
    match (video == "V2", frame.is_multiple_of(2)) {
        (false, true) => LcaBetter,
        (false, false) => LcaBad,
        (true, true) => RcaBetter,
        (true, false) => RcaBad,
    }
}

pub fn stub_probs(video: &str, frame: usize) -> Vec<f64> {
    let c = 0.5 + 0.4 * frame as f64 / FRAMES as f64;
    let mut probs = vec![(1.0 - c) / 5.0; 6];
    probs[stub_label(video, frame).position()] = c;
    probs
}

/// Ground truth disagrees with the stub on every fourth frame.
pub fn truth_label(video: &str, frame: usize) -> SixClassLabel {
    use SixClassLabel::*;
    let l = stub_label(video, frame);
    if frame % 4 != 3 {
        return l;
    }
    match l {
        LcaBad => LcaOther,
        RcaBad => RcaBetter,
        other => other,
    }
}

pub const MODELS: [&str; 2] = ["m1", "m2"];

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
    /// Case ids of the key frames the pipeline is expected to select.
    pub cases: Vec<String>,
}

impl Fixture {
    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn out(&self) -> PathBuf {
        self.root().join("out")
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
}

fn jsonl(values: impl IntoIterator<Item = serde_json::Value>) -> String {
    values.into_iter().map(|v| format!("{v}\n")).collect()
}

pub fn build() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cines = cines();
    for c in &cines {
        let seq = c.sequence();
        match c.video {
            "V1" => write(
                &root.join(c.rel),
                cagkit_testkit::dicom::multiframe(SIDE as u16, SIDE as u16, 8, &c.frames(), None, None),
            ),
            "V2" => write_imagedir(&seq, &root.join(c.rel), ImageFormat::Pgm).unwrap(),
            _ => write_imagedir(&seq, &root.join(c.rel), ImageFormat::Png).unwrap(),
        }
    }

    let mut stub = Vec::new();
    let mut truth = Vec::new();
    for c in &cines {
        for f in 0..FRAMES {
            stub.push(json!({"video_id": c.video, "frame_index": f, "probs": stub_probs(c.video, f)}));
            truth.push(json!({"video_id": c.video, "frame_index": f, "label": truth_label(c.video, f)}));
        }
    }
    write(&root.join("predictor/stub.jsonl"), jsonl(stub));
    write(&root.join("labels.jsonl"), jsonl(truth));

    // Expected key frames, needed to key the generated texts and embeddings.
    let mut preds = Vec::new();
    for c in &cines {
        let set = sample_keyframe_candidates(&c.sequence(), &SamplerConfig::default()).unwrap();
        for &i in &set.selected {
            preds.push(FramePrediction::from_raw(c.video, i, &stub_probs(c.video, i)).unwrap());
        }
    }
    let keyframes = select_top_confidence(&preds, SelectionPolicy::PerVideoBest).unwrap();
    let exam_of = |v: &str| cines.iter().find(|c| c.video == v).unwrap().exam;
    let cases: Vec<String> = keyframes
        .iter()
        .map(|k| case_id(exam_of(&k.video_id), &k.video_id, k.frame_index))
        .collect();

    write(
        &root.join("tables/reports.csv"),
        "exam_id,report_jp,report_en\n\
         E1,\"#6 75%狭窄。PCI適応。\",\"75% stenosis at #6. PCI indicated.\"\n\
         E2,\"#1 90%狭窄。\",\"90% stenosis at #1.\"\n",
    );
    write(
        &root.join("tables/summaries.jsonl"),
        jsonl([
            json!({"exam_id": "E1", "gt_summary_jp": "左前下行枝に有意狭窄。", "gt_summary_en": "Significant LAD stenosis."}),
            json!({"exam_id": "E2", "video_id": "V3", "gt_summary_jp": "右冠動脈に高度狭窄。", "gt_summary_en": "Severe RCA stenosis."}),
        ]),
    );
    let mut generated = Vec::new();
    for k in &keyframes {
        for m in MODELS {
            generated.push(json!({
                "video_id": k.video_id, "frame_index": k.frame_index, "model_id": m,
                "text_en": format!("{m}: stenosis suspected."), "text_jp": format!("{m}: 狭窄疑い。"),
            }));
        }
    }
    write(&root.join("tables/generated.jsonl"), jsonl(generated));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut siglip = Vec::new();
    for case in &cases {
        for m in MODELS {
            siglip.push(json!({
                "case_id": case, "model_id": m, "backbone_id": "siglip",
                "i_e": unit_vec(&mut rng, 8), "g_e": unit_vec(&mut rng, 8), "r_e": unit_vec(&mut rng, 8),
            }));
        }
    }
    write(&root.join("embeddings/siglip.jsonl"), jsonl(siglip));
    for m in MODELS {
        let triples: Vec<EmbeddingTriple> = cases
            .iter()
            .map(|case| {
                let v = |rng: &mut ChaCha8Rng| unit_vec(rng, 4).iter().map(|&x| x as f32 as f64).collect();
                EmbeddingTriple {
                    case_id: case.clone(),
                    model_id: m.into(),
                    backbone_id: "medclip".into(),
                    i_e: v(&mut rng),
                    g_e: v(&mut rng),
                    r_e: v(&mut rng),
                }
            })
            .collect();
        write(&root.join(format!("embeddings/medclip_{m}.bin")), write_binary(&triples).unwrap());
    }
    write(
        &root.join("embeddings/probe.jsonl"),
        jsonl([json!({
            "case_id": "orthonormal", "model_id": "probe", "backbone_id": "probe",
            "i_e": [1.0, 0.0, 0.0], "g_e": [0.0, 1.0, 0.0], "r_e": [0.0, 0.0, 1.0],
        })]),
    );

    let config = root.join("cagkit.toml");
    write(&config, CONFIG);
    Fixture { dir, config, cases }
}

pub const CONFIG: &str = r#"out = "out"

[inputs]
cines = ["cines/E1/V1.dcm", "cines/E1/V2", "cines/E2/V3"]
reports = "tables/reports.csv"
summaries = "tables/summaries.jsonl"
generated = "tables/generated.jsonl"
labels = "labels.jsonl"

[[inputs.embeddings]]
path = "embeddings/siglip.jsonl"

[[inputs.embeddings]]
path = "embeddings/medclip_m1.bin"
model_id = "m1"
backbone_id = "medclip"

[[inputs.embeddings]]
path = "embeddings/medclip_m2.bin"
model_id = "m2"
backbone_id = "medclip"

[[inputs.embeddings]]
path = "embeddings/probe.jsonl"

[sampler]
window_radius = 2
min_gap = 5

[predictor]
stub = "predictor/stub.jsonl"
selection = "per_video_best"

[split]
seed = 7
ratios = { train = 0.5, val = 0.25, test = 0.25 }

[service]
store = "review_store"
"#;

pub const STAGES: [&str; 7] = ["ingest", "sample", "classify", "split", "corpus", "vlscore", "report"];

pub fn cagkit(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cagkit"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("cagkit runs")
}

/// Runs every stage in order, panicking with stderr on failure.
pub fn run_pipeline(config: &Path, extra: &[&str]) {
    for stage in STAGES {
        let mut args = vec![stage];
        args.extend_from_slice(extra);
        let out = cagkit(config, &args);
        assert!(
            out.status.success(),
            "{stage} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn stats_of(c: &Cine) -> Vec<cagkit_core::FrameStats> {
    frame_stats(&c.sequence())
}
