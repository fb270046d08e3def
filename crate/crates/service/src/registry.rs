use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use essaycbm::model::{load_any, AnyModel, ModelDims, ModelKind};
use serde::Serialize;
use tokio::sync::OnceCell;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoadState {
    Unloaded,
    Loading,
    Ready,
    Failed(String),
}

impl LoadState {
    pub fn as_str(&self) -> &'static str {
        match self {
            LoadState::Unloaded => "unloaded",
            LoadState::Loading => "loading",
            LoadState::Ready => "ready",
            LoadState::Failed(_) => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegistryError {
    Unknown(String),
    Failed { model_id: String, reason: String },
}

/// One row of `GET /models`. Kind and dims are known once loaded.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelInfo {
    pub model_id: String,
    pub kind: Option<ModelKind>,
    pub state: &'static str,
    pub reason: Option<String>,
    pub dims: Option<ModelDims>,
}

type Loaded = Result<Arc<AnyModel>, String>;

#[derive(Debug)]
struct Entry {
    path: PathBuf,
    cell: OnceCell<Loaded>,
    loading: AtomicBool,
    loads: AtomicUsize,
}

/// Model id → checkpoint path, loaded on first use and cached for the life
/// of the process. Failed loads are cached too.
#[derive(Debug, Default)]
pub struct ModelRegistry {
    entries: BTreeMap<String, Entry>,
}

impl ModelRegistry {
    pub fn new(models: impl IntoIterator<Item = (String, PathBuf)>) -> Self {
        let entries = models
            .into_iter()
            .map(|(id, path)| {
                let entry = Entry {
                    path,
                    cell: OnceCell::new(),
                    loading: AtomicBool::new(false),
                    loads: AtomicUsize::new(0),
                };
                (id, entry)
            })
            .collect();
        Self { entries }
    }

    /// Reads a JSON object `{"model_id": "checkpoint path", ...}`. Relative
    /// paths are taken relative to the manifest's directory.
    pub fn from_manifest(path: impl AsRef<Path>) -> essaycbm::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| essaycbm::Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let map: BTreeMap<String, PathBuf> = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(Self::new(map.into_iter().map(|(id, p)| {
            let resolved = if p.is_absolute() { p } else { base.join(p) };
            (id, resolved)
        })))
    }

    pub fn contains(&self, model_id: &str) -> bool {
        self.entries.contains_key(model_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn state(&self, model_id: &str) -> Option<LoadState> {
        let e = self.entries.get(model_id)?;
        Some(match e.cell.get() {
            Some(Ok(_)) => LoadState::Ready,
            Some(Err(reason)) => LoadState::Failed(reason.clone()),
            None if e.loading.load(Ordering::SeqCst) => LoadState::Loading,
            None => LoadState::Unloaded,
        })
    }

    /// Number of load attempts made for `model_id`.
    pub fn load_count(&self, model_id: &str) -> usize {
        self.entries.get(model_id).map_or(0, |e| e.loads.load(Ordering::SeqCst))
    }

    /// Returns the cached model, loading it first if needed. Concurrent
    /// callers for the same id share one load.
    pub async fn get(&self, model_id: &str) -> Result<Arc<AnyModel>, RegistryError> {
        let entry = self
            .entries
            .get(model_id)
            .ok_or_else(|| RegistryError::Unknown(model_id.to_string()))?;
        let loaded = entry
            .cell
            .get_or_init(|| async {
                entry.loading.store(true, Ordering::SeqCst);
                entry.loads.fetch_add(1, Ordering::SeqCst);
                let path = entry.path.clone();
                tracing::info!(model_id, path = %path.display(), "loading checkpoint");
                let result = tokio::task::spawn_blocking(move || load_any(&path))
                    .await
                    .map_err(|e| format!("load task failed: {e}"))
                    .and_then(|r| r.map(Arc::new).map_err(|e| e.to_string()));
                if let Err(reason) = &result {
                    tracing::warn!(model_id, reason, "checkpoint failed to load");
                }
                entry.loading.store(false, Ordering::SeqCst);
                result
            })
            .await;
        loaded.clone().map_err(|reason| RegistryError::Failed {
            model_id: model_id.to_string(),
            reason,
        })
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        self.entries
            .iter()
            .map(|(id, e)| {
                let state = self.state(id).expect("listed id exists");
                let model = e.cell.get().and_then(|r| r.as_ref().ok());
                ModelInfo {
                    model_id: id.clone(),
                    kind: model.map(|m| m.kind()),
                    state: state.as_str(),
                    reason: match state {
                        LoadState::Failed(r) => Some(r),
                        _ => None,
                    },
                    dims: model.map(|m| m.dims()),
                }
            })
            .collect()
    }
}
