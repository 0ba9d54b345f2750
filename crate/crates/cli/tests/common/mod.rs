#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::routing::post;
use axum::{Json, Router};
use base64::Engine;
use serde_json::{json, Value};
use t2i_harness_core::scenes::{generate_scenes, GenerationSpec};
use t2i_harness_core::{BBox, Detection, DetectionRecord, SceneConfig, SkillKind, Split};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_t2i-harness"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn write_png(path: &Path, width: u32, height: u32, rgb: [u8; 3]) {
    image::RgbImage::from_pixel(width, height, image::Rgb(rgb)).save(path).unwrap();
}

pub fn write_jsonl(path: &Path, rows: &[Value]) {
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    std::fs::write(path, text).unwrap();
}

/// Similarity stub: an image whose first pixel has red > 128 scores higher
/// for the first text (male), otherwise for the second.
pub struct StubServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

pub fn similarity_stub() -> StubServer {
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let app = Router::new().route(
                "/similarity",
                post(move |Json(req): Json<Value>| {
                    let counter = counter.clone();
                    async move {
                        counter.fetch_add(1, Ordering::SeqCst);
                        let bytes = base64::engine::general_purpose::STANDARD
                            .decode(req["image"].as_str().unwrap())
                            .unwrap();
                        let img = image::load_from_memory(&bytes).unwrap().to_rgb8();
                        let male = img.get_pixel(0, 0)[0] > 128;
                        let n = req["texts"].as_array().unwrap().len();
                        let mut scores = vec![0.2; n];
                        scores[if male { 0 } else { 1 }] = 0.3;
                        Json(json!({ "scores": scores }))
                    }
                }),
            );
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    let addr = rx.recv().unwrap();
    StubServer {
        url: format!("http://{addr}/similarity"),
        hits,
    }
}

/// Address that refuses connections.
pub fn dead_url() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}/similarity")
}

pub fn object_scenes(n: usize) -> Vec<SceneConfig> {
    let mut s = generate_scenes(&GenerationSpec::standard(SkillKind::Object, Split::Test, 7)).unwrap();
    s.truncate(n);
    s
}

/// A record detecting the scene's first object at `confidence`.
pub fn record_for(scene: &SceneConfig, confidence: f64) -> DetectionRecord {
    DetectionRecord {
        image_id: format!("img_{}", scene.id),
        scene_id: scene.id.clone(),
        detections: vec![Detection::new(
            scene.objects[0].class.coco_label(),
            confidence,
            BBox::new(10.0, 10.0, 40.0, 40.0),
        )],
    }
}

/// Bias fixture: `n_prompts` prompts with 9 images each. `male(p, i)`
/// decides image `i` of prompt `p`. Returns the manifest path.
pub fn gender_manifest(dir: &Path, n_prompts: usize, male: impl Fn(usize, usize) -> bool) -> PathBuf {
    let mut rows = Vec::new();
    for p in 0..n_prompts {
        for i in 0..9 {
            let name = format!("p{p}_{i}.png");
            let rgb = if male(p, i) { [200, 10, 10] } else { [10, 10, 200] };
            write_png(&dir.join(&name), 4, 4, rgb);
            rows.push(json!({"image_id": format!("p{p}_{i}"), "prompt_id": format!("profession/w{p}"), "path": name}));
        }
    }
    let path = dir.join("manifest.jsonl");
    write_jsonl(&path, &rows);
    path
}

pub fn write_config(path: &Path, body: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(body).unwrap()).unwrap();
}
