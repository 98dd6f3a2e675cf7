use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use leitsatz_core::evalframe::{presentation_order, Assignment, ClassVerdict, EvalError, SummaryRef, VerdictStore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Mutex;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("reviewer {0} is assigned items but has no token")]
    MissingToken(String),
    #[error("token of reviewer {0} is shared with another reviewer or the admin")]
    SharedToken(String),
    #[error("no review texts for {}/{}", .0.judgment_id, .0.approach)]
    MissingTexts(SummaryRef),
    #[error("store {path}: {message}")]
    Store { path: String, message: String },
}

/// Static credentials and storage location.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServiceConfig {
    /// Reviewer id → bearer token used to open a session.
    pub reviewer_tokens: BTreeMap<String, String>,
    pub admin_token: String,
    /// JSONL file holding every submitted verdict.
    pub store_path: PathBuf,
    /// Salt for the opaque item ids.
    pub item_salt: String,
    /// Send the reasons excerpt along with each item.
    #[serde(default = "yes")]
    pub show_excerpt: bool,
}

fn yes() -> bool {
    true
}

/// What a reviewer is shown for one summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewText {
    pub gold_text: String,
    pub candidate_text: String,
    pub judgment_excerpt: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ReviewData {
    pub assignments: Vec<Assignment>,
    pub texts: BTreeMap<SummaryRef, ReviewText>,
}

pub(crate) struct Queue {
    /// Item ids in presentation order.
    pub items: Vec<String>,
}

pub struct AppState {
    pub(crate) config: ServiceConfig,
    pub(crate) items: HashMap<String, SummaryRef>,
    pub(crate) texts: BTreeMap<SummaryRef, ReviewText>,
    pub(crate) queues: HashMap<String, Queue>,
    pub(crate) sessions: RwLock<HashMap<String, String>>,
    /// Latest committed store; readers clone the Arc and work on a snapshot.
    snapshot: RwLock<Arc<VerdictStore>>,
    /// Held for the whole read-modify-persist cycle, so there is one writer.
    writer: Mutex<()>,
}

pub fn item_id(salt: &str, summary: &SummaryRef) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update([0]);
    h.update(summary.judgment_id.as_bytes());
    h.update([0]);
    h.update(summary.approach.as_str().as_bytes());
    hex::encode(&h.finalize()[..12])
}

fn load_store(path: &Path) -> Result<VerdictStore, ServiceError> {
    let err = |message: String| ServiceError::Store {
        path: path.display().to_string(),
        message,
    };
    match File::open(path) {
        Ok(f) => VerdictStore::read_jsonl(BufReader::new(f)).map_err(|e| err(e.to_string())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(VerdictStore::new()),
        Err(e) => Err(err(e.to_string())),
    }
}

/// Writes the whole store next to `path` and renames it into place, so the
/// file always holds either the old or the new complete store.
fn persist(path: &Path, store: &VerdictStore) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    store.write_jsonl(&mut tmp)?;
    tmp.flush()?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub enum SubmitOutcome {
    Accepted,
    Duplicate,
    Invalid(EvalError),
}

impl AppState {
    pub fn new(config: ServiceConfig, data: ReviewData) -> Result<Self, ServiceError> {
        let mut seen_tokens = BTreeMap::new();
        seen_tokens.insert(config.admin_token.clone(), "admin".to_string());
        for (reviewer, token) in &config.reviewer_tokens {
            if seen_tokens.insert(token.clone(), reviewer.clone()).is_some() {
                return Err(ServiceError::SharedToken(reviewer.clone()));
            }
        }
        let mut items = HashMap::new();
        for a in &data.assignments {
            if !data.texts.contains_key(&a.summary) {
                return Err(ServiceError::MissingTexts(a.summary.clone()));
            }
            for r in &a.reviewers {
                if !config.reviewer_tokens.contains_key(r) {
                    return Err(ServiceError::MissingToken(r.clone()));
                }
            }
            items.insert(item_id(&config.item_salt, &a.summary), a.summary.clone());
        }
        let queues = config
            .reviewer_tokens
            .keys()
            .map(|r| {
                let order = presentation_order(&data.assignments, r);
                let ids = order.iter().map(|s| item_id(&config.item_salt, s)).collect();
                (r.clone(), Queue { items: ids })
            })
            .collect();
        let store = load_store(&config.store_path)?;
        Ok(AppState {
            items,
            texts: data.texts,
            queues,
            sessions: RwLock::new(HashMap::new()),
            snapshot: RwLock::new(Arc::new(store)),
            writer: Mutex::new(()),
            config,
        })
    }

    pub fn snapshot(&self) -> Arc<VerdictStore> {
        Arc::clone(&self.snapshot.read().expect("snapshot lock"))
    }

    pub(crate) fn reviewer_for_token(&self, token: &str) -> Option<&str> {
        self.config
            .reviewer_tokens
            .iter()
            .find(|(_, t)| t.as_str() == token)
            .map(|(r, _)| r.as_str())
    }

    pub(crate) fn is_admin(&self, token: &str) -> bool {
        !self.config.admin_token.is_empty() && token == self.config.admin_token
    }

    /// Validates, stores and persists one verdict.
    pub(crate) async fn submit(&self, verdict: ClassVerdict) -> Result<SubmitOutcome, std::io::Error> {
        if let Err(e) = verdict.validate() {
            return Ok(SubmitOutcome::Invalid(e));
        }
        let _guard = self.writer.lock().await;
        let current = self.snapshot();
        if current.contains(&verdict.reviewer, &verdict.summary()) {
            return Ok(SubmitOutcome::Duplicate);
        }
        let mut next = (*current).clone();
        if let Err(e) = next.submit(verdict) {
            return Ok(SubmitOutcome::Invalid(e));
        }
        let next = Arc::new(next);
        let path = self.config.store_path.clone();
        let to_write = Arc::clone(&next);
        tokio::task::spawn_blocking(move || persist(&path, &to_write))
            .await
            .map_err(std::io::Error::other)??;
        *self.snapshot.write().expect("snapshot lock") = next;
        Ok(SubmitOutcome::Accepted)
    }
}
