mod common;

use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::sync::Arc;

use common::*;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};
use t2i_harness::serve::AppState;
use t2i_harness::HarnessConfig;
use t2i_harness_core::scenes::{generate_scenes, GenerationSpec};
use t2i_harness_core::stats::{aggregate_workers, Aggregate, AnnotationRecord, Answer, GenderAnswer, GenderChoice};
use t2i_harness_core::{jsonl, SkillKind, Split};

const SKIN: [u8; 3] = [234, 218, 186];

struct Fixture {
    _dir: tempfile::TempDir,
    manifest: PathBuf,
    scenes: PathBuf,
    journal: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut scenes = Vec::new();
    let mut rows = Vec::new();
    for skill in SkillKind::ALL {
        let s = generate_scenes(&GenerationSpec::standard(skill, Split::Test, 1)).unwrap().remove(0);
        let name = format!("{skill}.png");
        write_png(&dir.path().join(&name), 8, 8, [90, 90, 90]);
        rows.push(json!({"image_id": format!("{skill}_img"), "scene_id": s.id, "path": name, "width": 8, "height": 8}));
        scenes.push(s);
    }
    for i in 0..9 {
        let name = format!("nurse_{i}.png");
        write_png(&dir.path().join(&name), 6, 4, SKIN);
        rows.push(json!({"image_id": format!("nurse_{i}"), "prompt_id": "profession/nurse", "path": name, "width": 6, "height": 4}));
    }
    let manifest = dir.path().join("manifest.jsonl");
    write_jsonl(&manifest, &rows);
    let scene_path = dir.path().join("scenes.jsonl");
    jsonl::write(&scene_path, &scenes).unwrap();
    let journal = dir.path().join("journal/annotations.jsonl");
    Fixture {
        manifest,
        scenes: scene_path,
        journal,
        _dir: dir,
    }
}

fn start(f: &Fixture) -> String {
    let state = AppState::load(&f.manifest, Some(&f.scenes), &f.journal, &HarnessConfig::default()).unwrap();
    let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
    std::thread::spawn(move || {
        tokio::runtime::Runtime::new().unwrap().block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            t2i_harness::serve::serve(listener, Arc::new(state)).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn post(base: &str, body: &Value) -> (StatusCode, Value) {
    let resp = Client::new().post(format!("{base}/annotations")).json(body).send().unwrap();
    let status = resp.status();
    (status, resp.json().unwrap_or(Value::Null))
}

fn get(base: &str, path: &str) -> (StatusCode, Value) {
    let resp = Client::new().get(format!("{base}{path}")).send().unwrap();
    let status = resp.status();
    (status, resp.json().unwrap_or(Value::Null))
}

fn gender(worker: &str, choice: &str) -> Value {
    json!({"worker_id": worker, "item_id": "gender:profession/nurse", "task": "gender", "answer": {"choice": choice}})
}

fn journal_lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn tasks_are_served_in_order_until_done() {
    let f = fixture();
    let base = start(&f);
    let (status, body) = get(&base, "/tasks/next?worker=w1");
    assert_eq!(status, StatusCode::OK);
    let task = &body["task"];
    assert_eq!(task["item_id"], "skill:object_img");
    assert_eq!(task["task"], "skill_object");
    assert_eq!(task["image_urls"], json!(["/images/object_img"]));
    assert_eq!(task["allowed_answers"]["class"].as_array().unwrap().len(), 15);
    // 3 skill tasks, 1 gender grid, 9 skin tasks.
    assert_eq!(body["remaining"], 13);

    let (_, all) = get(&base, "/tasks/next?worker=w1");
    assert_eq!(all["task"]["item_id"], "skill:object_img");

    let (status, _) = get(&base, "/tasks/next");
    assert_eq!(status, StatusCode::BAD_REQUEST);

    // Answer the three skill tasks; the gender grid comes next with 9 images.
    let class = |id: &str, key: &str| -> String {
        let (_, b) = get(&base, "/tasks/next?worker=w1");
        assert_eq!(b["task"]["item_id"], id);
        b["task"]["allowed_answers"][key][0].as_str().unwrap().to_string()
    };
    let c = class("skill:object_img", "class");
    assert_eq!(post(&base, &json!({"worker_id": "w1", "item_id": "skill:object_img", "task": "skill_object", "answer": {"class": c}})).0, StatusCode::OK);
    let c = class("skill:count_img", "class");
    assert_eq!(post(&base, &json!({"worker_id": "w1", "item_id": "skill:count_img", "task": "skill_count", "answer": {"class": c, "count": 3}})).0, StatusCode::OK);
    let c = class("skill:spatial_img", "class_a");
    let (_, b) = get(&base, "/tasks/next?worker=w1");
    assert_eq!(b["task"]["allowed_answers"]["relation"].as_array().unwrap().len(), 4);
    assert_eq!(post(&base, &json!({"worker_id": "w1", "item_id": "skill:spatial_img", "task": "skill_spatial", "answer": {"class_a": c, "class_b": c, "relation": "left"}})).0, StatusCode::OK);

    let (_, b) = get(&base, "/tasks/next?worker=w1");
    assert_eq!(b["task"]["task"], "gender");
    assert_eq!(b["task"]["image_urls"].as_array().unwrap().len(), 9);
    assert_eq!(b["task"]["allowed_answers"]["choice"], json!(["male", "female", "not_human"]));
    assert_eq!(b["remaining"], 10);

    // Other workers are unaffected.
    let (_, b) = get(&base, "/tasks/next?worker=w2");
    assert_eq!(b["remaining"], 13);
}

#[test]
fn submissions_are_validated() {
    let f = fixture();
    let base = start(&f);

    let (status, body) = post(&base, &json!({"worker_id": "w", "item_id": "gender:profession/nobody", "task": "gender", "answer": {"choice": "male"}}));
    assert_eq!(status, StatusCode::NOT_FOUND, "{body}");

    let resp = Client::new().post(format!("{base}/annotations")).body("{oops").send().unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    let (status, body) = post(&base, &json!({"worker_id": "w", "item_id": "gender:profession/nurse", "task": "skin_point", "answer": {"x": 1, "y": 1}}));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["errors"][0]["field"], "task");

    let (status, body) = post(&base, &gender("w", "robot"));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["errors"][0]["field"], "answer");

    let (status, body) = post(&base, &json!({"worker_id": "", "item_id": "gender:profession/nurse", "task": "gender", "answer": {"choice": "male"}}));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["errors"][0]["field"], "worker_id");

    let (status, body) = post(&base, &json!({"worker_id": "w", "item_id": "skill:count_img", "task": "skill_count", "answer": {"class": "dog", "count": 7}}));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["errors"][0]["field"], "answer.count");

    // Images are 6x4.
    let (status, body) = post(&base, &json!({"worker_id": "w", "item_id": "skin:nurse_0", "task": "skin_point", "answer": {"x": 6, "y": 0}}));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["errors"][0]["field"], "answer.x");
    let (status, body) = post(&base, &json!({"worker_id": "w", "item_id": "skin:nurse_0", "task": "skin_point", "answer": {"x": 0, "y": 4}}));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["errors"][0]["field"], "answer.y");

    // Nothing rejected reached the journal.
    assert_eq!(std::fs::read_to_string(&f.journal).unwrap(), "");
}

#[test]
fn skin_point_rgb_is_sampled_server_side() {
    let f = fixture();
    let base = start(&f);
    // Client-supplied colour and tone are replaced.
    let (status, body) = post(
        &base,
        &json!({"worker_id": "w", "item_id": "skin:nurse_3", "task": "skin_point", "answer": {"x": 5, "y": 3, "rgb": [0, 0, 0], "tone": 10}}),
    );
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["record"]["answer"], json!({"x": 5, "y": 3, "rgb": SKIN, "tone": 4}));
    let lines = journal_lines(&f.journal);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["record"]["answer"]["rgb"], json!(SKIN));
}

#[test]
fn aggregate_tracks_latest_answer_per_worker() {
    let f = fixture();
    let base = start(&f);
    let item = "/aggregate/gender:profession/nurse";

    let (status, body) = get(&base, item);
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["aggregate"], Value::Null);

    let script = [("w1", "male"), ("w2", "male"), ("w3", "female"), ("w4", "male"), ("w5", "not_human")];
    for (w, c) in script {
        let (status, body) = post(&base, &gender(w, c));
        assert_eq!(status, StatusCode::OK, "{body}");
        assert_eq!(body["replaced"], false);
    }
    let (_, body) = get(&base, item);
    assert_eq!(body["n_workers"], 5);
    assert_eq!(body["aggregate"], json!({"status": "answer", "answer": {"choice": "male"}, "votes": 3, "n_workers": 5}));

    // Resubmission replaces: now 2 male, 2 female, 1 not human.
    let (_, body) = post(&base, &gender("w4", "female"));
    assert_eq!(body["replaced"], true);
    let (_, body) = get(&base, item);
    assert_eq!(body["aggregate"]["status"], "abstain");

    // The endpoint equals aggregate_workers over the latest record per worker.
    let latest: Vec<AnnotationRecord> = [("w1", GenderChoice::Male), ("w2", GenderChoice::Male), ("w3", GenderChoice::Female), ("w4", GenderChoice::Female), ("w5", GenderChoice::NotHuman)]
        .iter()
        .map(|&(w, choice)| AnnotationRecord::new(w, "gender:profession/nurse", &Answer::Gender(GenderAnswer { choice })))
        .collect();
    let expected = aggregate_workers(&latest).unwrap();
    assert_eq!(serde_json::from_value::<Aggregate>(body["aggregate"].clone()).unwrap(), expected);

    // Journal is append-only: all six submissions are kept.
    assert_eq!(journal_lines(&f.journal).len(), 6);

    // Majority of Not Human excludes the item.
    for w in ["w1", "w2", "w3"] {
        post(&base, &gender(w, "not_human"));
    }
    let (_, body) = get(&base, item);
    assert_eq!(body["aggregate"]["status"], "excluded");

    let (status, _) = get(&base, "/aggregate/gender:profession/unknown");
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[test]
fn journal_is_replayed_on_restart() {
    let f = fixture();
    let base = start(&f);
    for (w, c) in [("a", "female"), ("b", "female"), ("c", "male"), ("a", "male")] {
        assert_eq!(post(&base, &gender(w, c)).0, StatusCode::OK);
    }
    let (_, before) = get(&base, "/aggregate/gender:profession/nurse");

    let restarted = start(&f);
    let (_, after) = get(&restarted, "/aggregate/gender:profession/nurse");
    assert_eq!(before, after);
    assert_eq!(after["aggregate"]["answer"]["choice"], "male");
    assert_eq!(after["n_workers"], 3);
}

#[test]
fn images_are_served() {
    let f = fixture();
    let base = start(&f);
    let resp = Client::new().get(format!("{base}/images/nurse_2")).send().unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/png");
    let img = image::load_from_memory(&resp.bytes().unwrap()).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (6, 4));
    assert_eq!(img.get_pixel(0, 0).0, SKIN);
    assert_eq!(get(&base, "/images/nobody").0, StatusCode::NOT_FOUND);
}

#[test]
fn serve_subcommand_listens() {
    let f = fixture();
    let mut child = bin()
        .args([
            "serve",
            "--manifest",
            f.manifest.to_str().unwrap(),
            "--scenes",
            f.scenes.to_str().unwrap(),
            "--journal",
            f.journal.to_str().unwrap(),
            "--port",
            "0",
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let base = line.split_whitespace().nth(2).unwrap().to_string();
    let (status, body) = get(&base, "/tasks/next?worker=cli");
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["remaining"], 13);
}

#[test]
fn serve_rejects_manifest_without_scenes() {
    let f = fixture();
    let o = run(&["serve", "--manifest", f.manifest.to_str().unwrap(), "--journal", f.journal.to_str().unwrap(), "--port", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not in the scene file"), "{}", stderr(&o));
}
