//! Task scheduling and durable annotation storage.
//!
//! Two append-only JSONL logs live in the data directory: `assignments.jsonl`
//! records every task handed out and `annotations.jsonl` every accepted
//! submission. Replaying them on start-up restores the exact scheduling
//! state, so a restarted service behaves as if it never stopped.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use altereval_core::judgments::{check_justification, consolidate, AnnotationRecord};
use altereval_core::pooling::Pool;
use altereval_core::{ItemId, JudgmentSet};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

pub const ASSIGNMENTS_FILE: &str = "assignments.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const DEFAULT_PAYLOAD_TEMPLATE: &str = "synthetic:{id}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgingTask {
    pub task_id: String,
    pub category: String,
    pub target_id: ItemId,
    pub candidates: Vec<ItemId>,
    pub display_payloads: BTreeMap<ItemId, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

impl Ack {
    pub fn accepted() -> Self {
        Self {
            accepted: true,
            reason: None,
        }
    }

    pub fn rejected(reason: impl Into<String>) -> Self {
        Self {
            accepted: false,
            reason: Some(reason.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub category: String,
    pub n_targets: usize,
    pub n_judged_targets: usize,
    pub n_annotations: usize,
    pub n_workers: usize,
    pub min_annotations_per_target: usize,
    pub max_annotations_per_target: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Assignment {
    category: String,
    worker_id: String,
    target_id: ItemId,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredAnnotation {
    category: String,
    record: AnnotationRecord,
}

#[derive(Debug)]
struct Category {
    pools: Vec<Pool>,
    position: HashMap<ItemId, usize>,
    /// Workers served or judged per target, indexed like `pools`.
    load: Vec<BTreeSet<String>>,
    served: HashSet<(String, ItemId)>,
    judged: HashSet<(String, ItemId)>,
    records: Vec<AnnotationRecord>,
}

impl Category {
    fn new(pools: Vec<Pool>) -> ServiceResult<Self> {
        let mut position = HashMap::with_capacity(pools.len());
        for (i, p) in pools.iter().enumerate() {
            if position.insert(p.target_id.clone(), i).is_some() {
                return Err(ServiceError::Input(format!("target `{}` is pooled twice", p.target_id)));
            }
        }
        Ok(Self {
            load: vec![BTreeSet::new(); pools.len()],
            pools,
            position,
            served: HashSet::new(),
            judged: HashSet::new(),
            records: Vec::new(),
        })
    }

    fn serve(&mut self, worker: &str, target: &ItemId) {
        if let Some(&i) = self.position.get(target) {
            self.load[i].insert(worker.to_string());
        }
        self.served.insert((worker.to_string(), target.clone()));
    }

    fn accept(&mut self, record: AnnotationRecord) {
        if let Some(&i) = self.position.get(&record.target_id) {
            self.load[i].insert(record.worker_id.clone());
        }
        self.judged.insert((record.worker_id.clone(), record.target_id.clone()));
        self.records.push(record);
    }

    fn seen_by(&self, worker: &str, target: &ItemId) -> bool {
        let key = (worker.to_string(), target.clone());
        self.served.contains(&key) || self.judged.contains(&key)
    }
}

#[derive(Debug)]
struct Inner {
    categories: BTreeMap<String, Category>,
    assignments: File,
    annotations: File,
}

/// The annotation back end. All writes go through one lock, so the logs are
/// appended by a single writer.
#[derive(Debug)]
pub struct JudgingStore {
    inner: Mutex<Inner>,
    data_dir: PathBuf,
    payload_template: String,
}

fn io_err(context: String) -> impl FnOnce(std::io::Error) -> ServiceError {
    move |source| ServiceError::Io { context, source }
}

/// Parses a JSONL log. A final line without a newline that fails to parse
/// is the remnant of an interrupted write and is ignored.
fn read_log<T: for<'de> Deserialize<'de>>(path: &Path) -> ServiceResult<Vec<T>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(format!("reading {}", path.display()))(e)),
    };
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(_) if !complete && i + 1 == lines.len() => {}
            Err(e) => {
                return Err(ServiceError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

fn open_log(path: &Path) -> ServiceResult<File> {
    let f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(format!("opening {}", path.display())))?;
    // Drop a torn final line so the next append starts on a fresh line.
    let text = fs::read(path).map_err(io_err(format!("reading {}", path.display())))?;
    if text.last().is_some_and(|&b| b != b'\n') {
        let keep = text.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        f.set_len(keep as u64)
            .and_then(|_| f.sync_data())
            .map_err(io_err(format!("truncating {}", path.display())))?;
    }
    Ok(f)
}

fn append<T: Serialize>(file: &mut File, value: &T) -> ServiceResult<()> {
    let mut line = serde_json::to_vec(value).map_err(|e| ServiceError::Input(e.to_string()))?;
    line.push(b'\n');
    file.write_all(&line)
        .and_then(|_| file.sync_data())
        .map_err(io_err("appending to log".into()))
}

impl JudgingStore {
    /// Opens (or creates) the store in `data_dir` over the given pools and
    /// replays any existing logs.
    pub fn open(
        data_dir: impl Into<PathBuf>,
        pools: BTreeMap<String, Vec<Pool>>,
        payload_template: impl Into<String>,
    ) -> ServiceResult<Self> {
        let data_dir = data_dir.into();
        fs::create_dir_all(&data_dir).map_err(io_err(format!("creating {}", data_dir.display())))?;
        let mut categories = BTreeMap::new();
        for (name, p) in pools {
            categories.insert(name, Category::new(p)?);
        }
        let assignments_path = data_dir.join(ASSIGNMENTS_FILE);
        let annotations_path = data_dir.join(ANNOTATIONS_FILE);
        for a in read_log::<Assignment>(&assignments_path)? {
            if let Some(c) = categories.get_mut(&a.category) {
                c.serve(&a.worker_id, &a.target_id);
            }
        }
        for s in read_log::<StoredAnnotation>(&annotations_path)? {
            if let Some(c) = categories.get_mut(&s.category) {
                c.accept(s.record);
            }
        }
        let inner = Inner {
            categories,
            assignments: open_log(&assignments_path)?,
            annotations: open_log(&annotations_path)?,
        };
        Ok(Self {
            inner: Mutex::new(inner),
            data_dir,
            payload_template: payload_template.into(),
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        // A panic while holding the lock cannot leave the logs half-updated
        // in memory, since state only changes after a successful append.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn categories(&self) -> Vec<String> {
        self.lock().categories.keys().cloned().collect()
    }

    fn payload(&self, id: &ItemId) -> String {
        self.payload_template.replace("{id}", id.as_str())
    }

    /// Hands `worker` the least-loaded target they have not been served yet
    /// (ties go to pool order), or `None` when they have seen every target.
    pub fn next_task(&self, category: &str, worker: &str) -> ServiceResult<Option<JudgingTask>> {
        if worker.trim().is_empty() {
            return Err(ServiceError::Input("worker id must not be empty".into()));
        }
        let mut inner = self.lock();
        let Inner {
            categories,
            assignments,
            ..
        } = &mut *inner;
        let cat = categories
            .get_mut(category)
            .ok_or_else(|| ServiceError::UnknownCategory(category.to_string()))?;
        let pick = cat
            .pools
            .iter()
            .enumerate()
            .filter(|(_, p)| !cat.seen_by(worker, &p.target_id))
            .min_by_key(|(i, _)| (cat.load[*i].len(), *i))
            .map(|(i, _)| i);
        let Some(i) = pick else {
            return Ok(None);
        };
        let pool = &cat.pools[i];
        let target = pool.target_id.clone();
        append(
            assignments,
            &Assignment {
                category: category.to_string(),
                worker_id: worker.to_string(),
                target_id: target.clone(),
            },
        )?;
        let candidates: Vec<ItemId> = pool.items().cloned().collect();
        let display_payloads = std::iter::once(&target)
            .chain(&candidates)
            .map(|id| (id.clone(), self.payload(id)))
            .collect();
        cat.serve(worker, &target);
        Ok(Some(JudgingTask {
            task_id: format!("{category}:{target}"),
            category: category.to_string(),
            target_id: target,
            candidates,
            display_payloads,
        }))
    }

    /// Validates and stores a submission. Rejections are returned as an
    /// [`Ack`], not an error. Without an explicit category, the category
    /// in which the task was served is used.
    pub fn submit(&self, category: Option<&str>, record: AnnotationRecord) -> ServiceResult<Ack> {
        let mut inner = self.lock();
        let Inner {
            categories,
            annotations,
            ..
        } = &mut *inner;
        let key = (record.worker_id.clone(), record.target_id.clone());
        let name = match category {
            Some(c) if categories.contains_key(c) => c.to_string(),
            Some(c) => return Err(ServiceError::UnknownCategory(c.to_string())),
            None => match categories.iter().find(|(_, c)| c.seen_by(&key.0, &key.1)) {
                Some((n, _)) => n.clone(),
                None => return Ok(Ack::rejected("task was not served to this worker")),
            },
        };
        let cat = categories.get_mut(&name).expect("category exists");
        if cat.judged.contains(&key) {
            return Ok(Ack::rejected("already judged"));
        }
        if !cat.served.contains(&key) {
            return Ok(Ack::rejected("task was not served to this worker"));
        }
        if let Err(reason) = check_justification(&record.justification) {
            return Ok(Ack::rejected(reason));
        }
        let pool = &cat.pools[cat.position[&record.target_id]];
        if let Some(bad) = record.selected.iter().find(|s| !pool.items().any(|c| c == *s)) {
            return Ok(Ack::rejected(format!("selection outside pool: `{bad}`")));
        }
        append(
            annotations,
            &StoredAnnotation {
                category: name,
                record: record.clone(),
            },
        )?;
        cat.accept(record);
        Ok(Ack::accepted())
    }

    pub fn progress(&self, category: &str) -> ServiceResult<Progress> {
        let inner = self.lock();
        let cat = inner
            .categories
            .get(category)
            .ok_or_else(|| ServiceError::UnknownCategory(category.to_string()))?;
        let mut per_target: HashMap<&ItemId, usize> = HashMap::new();
        for r in &cat.records {
            *per_target.entry(&r.target_id).or_default() += 1;
        }
        let counts = cat.pools.iter().map(|p| per_target.get(&p.target_id).copied().unwrap_or(0));
        let workers: BTreeSet<&str> = cat.records.iter().map(|r| r.worker_id.as_str()).collect();
        Ok(Progress {
            category: category.to_string(),
            n_targets: cat.pools.len(),
            n_judged_targets: per_target.len(),
            n_annotations: cat.records.len(),
            n_workers: workers.len(),
            min_annotations_per_target: counts.clone().min().unwrap_or(0),
            max_annotations_per_target: counts.max().unwrap_or(0),
        })
    }

    /// Accepted records of a category, in submission order.
    pub fn records(&self, category: &str) -> ServiceResult<Vec<AnnotationRecord>> {
        let inner = self.lock();
        inner
            .categories
            .get(category)
            .map(|c| c.records.clone())
            .ok_or_else(|| ServiceError::UnknownCategory(category.to_string()))
    }

    /// Consolidates the stored annotations of a category into judgments.
    pub fn export_qrels(&self, category: &str, min_votes: usize) -> ServiceResult<JudgmentSet> {
        if min_votes == 0 {
            return Err(ServiceError::Input("min_votes must be at least 1".into()));
        }
        let inner = self.lock();
        let cat = inner
            .categories
            .get(category)
            .ok_or_else(|| ServiceError::UnknownCategory(category.to_string()))?;
        if cat.records.is_empty() {
            return Err(ServiceError::Input(format!("no annotations stored for `{category}`")));
        }
        let candidates: HashMap<ItemId, Vec<ItemId>> = cat
            .pools
            .iter()
            .map(|p| (p.target_id.clone(), p.items().cloned().collect()))
            .collect();
        Ok(consolidate(category, &cat.records, &candidates, min_votes))
    }
}
