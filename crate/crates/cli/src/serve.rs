//! HTTP annotation service.
//!
//! Tasks are derived from an image manifest: one skill task per image that
//! has a scene, one gender task per prompt (its 9-image grid) and one skin
//! point task per prompt image. Submissions go to an append-only JSONL
//! journal through a single writer; the in-memory view keeps the latest
//! answer per (worker, item) and is replaced wholesale on each write, so
//! readers only ever clone an `Arc`.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use anyhow::{bail, Context, Result};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use t2i_harness_core::bias::{MstPalette, PixelImage, SkinRules, IMAGES_PER_PROMPT};
use t2i_harness_core::ingest::{load_scenes, ImageManifest, ManifestEntry};
use t2i_harness_core::stats::{aggregate_workers, AnnotationRecord, AnnotationTask, Answer, GenderChoice};
use t2i_harness_core::{jsonl, CountValue, ObjectClass, RelationKind, SceneConfig, SkillKind};

use crate::config::HarnessConfig;

/// A unit of annotation work as served to the UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub item_id: String,
    pub task: AnnotationTask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub image_urls: Vec<String>,
    pub allowed_answers: Value,
}

/// One journal line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JournalEntry {
    pub received_at: DateTime<Utc>,
    pub record: AnnotationRecord,
}

type Store = HashMap<String, Arc<BTreeMap<String, AnnotationRecord>>>;

pub struct AppState {
    tasks: Vec<TaskView>,
    by_id: HashMap<String, usize>,
    /// Image ids behind each task, aligned with `tasks`.
    task_images: Vec<Vec<String>>,
    images: HashMap<String, ManifestEntry>,
    palette: MstPalette,
    rules: SkinRules,
    journal_path: PathBuf,
    writer: tokio::sync::Mutex<File>,
    store: RwLock<Arc<Store>>,
}

fn image_url(id: &str) -> String {
    format!("/images/{id}")
}

fn names<T: Serialize>(values: impl IntoIterator<Item = T>) -> Value {
    Value::Array(values.into_iter().map(|v| serde_json::to_value(v).expect("enum serializes")).collect())
}

fn skill_answers(skill: SkillKind) -> (AnnotationTask, Value) {
    let classes = names(ObjectClass::ALL);
    match skill {
        SkillKind::Object => (AnnotationTask::SkillObject, json!({ "class": classes })),
        SkillKind::Count => (
            AnnotationTask::SkillCount,
            json!({ "class": classes, "count": CountValue::all().map(|c| c.value()).collect::<Vec<_>>() }),
        ),
        SkillKind::Spatial => (
            AnnotationTask::SkillSpatial,
            json!({ "class_a": classes, "class_b": classes, "relation": names(RelationKind::ALL) }),
        ),
    }
}

impl AppState {
    pub fn load(manifest: &Path, scenes: Option<&Path>, journal: &Path, config: &HarnessConfig) -> Result<Self> {
        let manifest = ImageManifest::load(manifest)?;
        let scenes: HashMap<String, SceneConfig> = match scenes {
            Some(p) => load_scenes(p)?.into_iter().map(|s| (s.id.clone(), s)).collect(),
            None => HashMap::new(),
        };

        let mut tasks = Vec::new();
        let mut task_images = Vec::new();
        for e in &manifest.entries {
            let Some(scene_id) = &e.scene_id else { continue };
            let Some(scene) = scenes.get(scene_id) else {
                bail!("image {} references scene {scene_id}, which is not in the scene file", e.image_id);
            };
            let (task, allowed_answers) = skill_answers(scene.skill);
            tasks.push(TaskView {
                item_id: format!("skill:{}", e.image_id),
                task,
                prompt: Some(scene.prompt.clone()),
                image_urls: vec![image_url(&e.image_id)],
                allowed_answers,
            });
            task_images.push(vec![e.image_id.clone()]);
        }
        for (prompt_id, entries) in manifest.by_prompt() {
            if entries.len() > IMAGES_PER_PROMPT {
                bail!("prompt {prompt_id} has {} images, at most {IMAGES_PER_PROMPT} allowed", entries.len());
            }
            if entries.len() < IMAGES_PER_PROMPT {
                log::warn!("prompt {prompt_id} has {} of {IMAGES_PER_PROMPT} images", entries.len());
            }
            tasks.push(TaskView {
                item_id: format!("gender:{prompt_id}"),
                task: AnnotationTask::Gender,
                prompt: Some(prompt_id.clone()),
                image_urls: entries.iter().map(|e| image_url(&e.image_id)).collect(),
                allowed_answers: json!({
                    "choice": names([GenderChoice::Male, GenderChoice::Female, GenderChoice::NotHuman])
                }),
            });
            task_images.push(entries.iter().map(|e| e.image_id.clone()).collect());
            for e in entries {
                let bound = |v: Option<u32>| v.map_or(Value::Null, |v| json!(v - 1));
                tasks.push(TaskView {
                    item_id: format!("skin:{}", e.image_id),
                    task: AnnotationTask::SkinPoint,
                    prompt: Some(prompt_id.clone()),
                    image_urls: vec![image_url(&e.image_id)],
                    allowed_answers: json!({
                        "x": { "min": 0, "max": bound(e.width) },
                        "y": { "min": 0, "max": bound(e.height) },
                    }),
                });
                task_images.push(vec![e.image_id.clone()]);
            }
        }
        let by_id = tasks.iter().enumerate().map(|(i, t)| (t.item_id.clone(), i)).collect();

        let mut store: HashMap<String, BTreeMap<String, AnnotationRecord>> = HashMap::new();
        if journal.exists() {
            let entries: Vec<JournalEntry> = jsonl::read(journal)?;
            log::info!("replaying {} journal entries from {}", entries.len(), journal.display());
            for entry in entries {
                let r = entry.record;
                store.entry(r.item_id.clone()).or_default().insert(r.worker_id.clone(), r);
            }
        } else if let Some(dir) = journal.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(journal)
            .with_context(|| format!("opening journal {}", journal.display()))?;

        Ok(AppState {
            tasks,
            by_id,
            task_images,
            images: manifest.entries.into_iter().map(|e| (e.image_id.clone(), e)).collect(),
            palette: config.palette()?,
            rules: config.skin_rules()?,
            journal_path: journal.to_path_buf(),
            writer: tokio::sync::Mutex::new(writer),
            store: RwLock::new(Arc::new(store.into_iter().map(|(k, v)| (k, Arc::new(v))).collect())),
        })
    }

    pub fn tasks(&self) -> &[TaskView] {
        &self.tasks
    }

    pub fn journal_path(&self) -> &Path {
        &self.journal_path
    }

    pub fn skin_rules(&self) -> &SkinRules {
        &self.rules
    }

    fn snapshot(&self) -> Arc<Store> {
        self.store.read().expect("store lock poisoned").clone()
    }

    /// Appends to the journal, then publishes a new snapshot. Returns whether
    /// the worker had answered this item before.
    async fn persist(&self, record: AnnotationRecord) -> std::io::Result<bool> {
        let mut file = self.writer.lock().await;
        let entry = JournalEntry {
            received_at: Utc::now(),
            record,
        };
        let mut line = serde_json::to_vec(&entry).map_err(std::io::Error::other)?;
        line.push(b'\n');
        file.write_all(&line)?;
        file.sync_data()?;

        let record = entry.record;
        let mut next: Store = (*self.snapshot()).clone();
        let mut workers = next.get(&record.item_id).map(|m| (**m).clone()).unwrap_or_default();
        let replaced = workers.insert(record.worker_id.clone(), record.clone()).is_some();
        next.insert(record.item_id, Arc::new(workers));
        *self.store.write().expect("store lock poisoned") = Arc::new(next);
        Ok(replaced)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/tasks/next", get(next_task))
        .route("/annotations", post(post_annotation))
        .route("/aggregate/{*item_id}", get(aggregate))
        .route("/images/{id}", get(image))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub fn run_blocking(state: AppState, host: &str, port: u16) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        let addr: SocketAddr = listener.local_addr()?;
        println!("listening on http://{addr} ({} tasks)", state.tasks.len());
        std::io::stdout().flush()?;
        axum::serve(listener, router(Arc::new(state)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn field_errors(errors: Vec<(String, String)>) -> Response {
    let errors: Vec<Value> = errors
        .into_iter()
        .map(|(field, message)| json!({ "field": field, "message": message }))
        .collect();
    (StatusCode::BAD_REQUEST, Json(json!({ "errors": errors }))).into_response()
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    worker: Option<String>,
}

async fn next_task(State(state): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> Response {
    let Some(worker) = q.worker.filter(|w| !w.trim().is_empty()) else {
        return field_errors(vec![("worker".into(), "required".into())]);
    };
    let store = state.snapshot();
    let done = |t: &TaskView| store.get(&t.item_id).is_some_and(|m| m.contains_key(&worker));
    let mut open = state.tasks.iter().filter(|t| !done(t));
    let task = open.next().cloned();
    let remaining = task.is_some() as usize + open.count();
    Json(json!({ "task": task, "remaining": remaining })).into_response()
}

async fn post_annotation(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let mut record: AnnotationRecord = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return field_errors(vec![("body".into(), e.to_string())]),
    };
    let Some(&idx) = state.by_id.get(&record.item_id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown item {}", record.item_id));
    };
    let expected = state.tasks[idx].task;
    if record.task != expected {
        return field_errors(vec![("task".into(), format!("item {} is a {expected} task", record.item_id))]);
    }
    let answer = match record.parse_answer() {
        Ok(a) => a,
        Err(errors) => return field_errors(errors),
    };

    if let Answer::SkinPoint(mut point) = answer {
        let entry = &state.images[&state.task_images[idx][0]];
        let path = entry.path.clone();
        let img = match tokio::task::spawn_blocking(move || PixelImage::open(&path)).await {
            Ok(Ok(img)) => img,
            Ok(Err(e)) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
            Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        };
        let (w, h) = (entry.width.unwrap_or(img.width), entry.height.unwrap_or(img.height));
        let mut errors = Vec::new();
        if point.x >= w {
            errors.push(("answer.x".to_string(), format!("{} outside [0,{}]", point.x, w - 1)));
        }
        if point.y >= h {
            errors.push(("answer.y".to_string(), format!("{} outside [0,{}]", point.y, h - 1)));
        }
        if !errors.is_empty() {
            return field_errors(errors);
        }
        let Some(rgb) = img.get(point.x, point.y) else {
            return field_errors(vec![("answer".into(), "point outside the stored image".into())]);
        };
        point.rgb = Some(rgb);
        point.tone = Some(state.palette.nearest(rgb.map(f64::from)));
        record.answer = Answer::SkinPoint(point).to_value();
    }

    match state.persist(record.clone()).await {
        Ok(replaced) => Json(json!({ "stored": true, "replaced": replaced, "record": record })).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("journal write failed: {e}")),
    }
}

async fn aggregate(State(state): State<Arc<AppState>>, UrlPath(item_id): UrlPath<String>) -> Response {
    let Some(&idx) = state.by_id.get(&item_id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown item {item_id}"));
    };
    let store = state.snapshot();
    let records: Vec<AnnotationRecord> = store
        .get(&item_id)
        .map(|m| m.values().cloned().collect())
        .unwrap_or_default();
    let aggregate = if records.is_empty() {
        None
    } else {
        match aggregate_workers(&records) {
            Ok(a) => Some(a),
            Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    };
    Json(json!({
        "item_id": item_id,
        "task": state.tasks[idx].task,
        "n_workers": records.len(),
        "aggregate": aggregate,
    }))
    .into_response()
}

async fn image(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(entry) = state.images.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown image {id}"));
    };
    let bytes = match tokio::fs::read(&entry.path).await {
        Ok(b) => b,
        Err(e) => return error(StatusCode::NOT_FOUND, format!("{}: {e}", entry.path.display())),
    };
    let ext = entry.path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let mime = match ext.as_str() {
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        _ => "application/octet-stream",
    };
    ([(header::CONTENT_TYPE, mime)], bytes).into_response()
}
