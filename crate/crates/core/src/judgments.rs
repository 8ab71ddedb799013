//! Alternative relevance judgments ("qrels"), annotation records and
//! agreement statistics.
//!
//! The qrels layout is the classic four-column test-collection format:
//! `target_id 0 candidate_id rel`, with `rel` in `{0, 1}`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::catalog::ItemId;
use crate::error::{Error, Result};

/// Minimum number of whitespace-separated tokens in a justification.
pub const MIN_JUSTIFICATION_TOKENS: usize = 5;
/// Minimum number of characters (after trimming) in a justification.
pub const MIN_JUSTIFICATION_CHARS: usize = 20;

/// Binary judgments of candidate items per target.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JudgmentSet {
    category: String,
    entries: BTreeMap<ItemId, BTreeMap<ItemId, bool>>,
}

impl JudgmentSet {
    pub fn new(category: impl Into<String>) -> Self {
        Self {
            category: category.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    /// Adds one judgment; a repeated `(target, candidate)` pair is an error.
    pub fn insert(&mut self, target: ItemId, candidate: ItemId, relevant: bool) -> Result<()> {
        let row = self.entries.entry(target.clone()).or_default();
        if row.contains_key(&candidate) {
            return Err(Error::Input(format!(
                "duplicate judgment for target `{target}`, candidate `{candidate}`"
            )));
        }
        row.insert(candidate, relevant);
        Ok(())
    }

    /// Registers a target as assessed even if it has no judged candidates.
    pub fn mark_assessed(&mut self, target: ItemId) {
        self.entries.entry(target).or_default();
    }

    pub fn targets(&self) -> impl Iterator<Item = &ItemId> {
        self.entries.keys()
    }

    pub fn n_targets(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn judgments(&self, target: &ItemId) -> Option<&BTreeMap<ItemId, bool>> {
        self.entries.get(target)
    }

    pub fn relevance(&self, target: &ItemId, candidate: &ItemId) -> Option<bool> {
        self.entries.get(target)?.get(candidate).copied()
    }

    /// Judged relevant alternatives of a target (excluding the target itself).
    pub fn alternatives(&self, target: &ItemId) -> impl Iterator<Item = &ItemId> {
        self.entries
            .get(target)
            .into_iter()
            .flat_map(|row| row.iter().filter(|(_, &r)| r).map(|(c, _)| c))
    }

    pub fn n_relevant(&self, target: &ItemId) -> usize {
        self.alternatives(target).count()
    }

    /// Writes the set in qrels format, targets and candidates in ascending id order.
    pub fn to_qrels_string(&self) -> String {
        let mut out = String::new();
        for (target, row) in &self.entries {
            for (cand, &rel) in row {
                out.push_str(&format!("{target} 0 {cand} {}\n", u8::from(rel)));
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        f.write_all(self.to_qrels_string().as_bytes())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Loads a qrels file. Rows are `target 0 candidate rel`.
pub fn load_qrels(path: &Path) -> Result<JudgmentSet> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_qrels(path, &text)
}

pub fn parse_qrels(path: &Path, text: &str) -> Result<JudgmentSet> {
    let category = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut set = JudgmentSet::new(category);
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let target = ItemId::new(cols[0]).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let cand = ItemId::new(cols[2]).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let rel = match cols[3] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("relevance must be 0 or 1, got {other:?}"),
                ))
            }
        };
        set.insert(target, cand, rel)
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
    }
    Ok(set)
}

/// The items that count as relevant for a target: the target itself, plus its
/// judged relevant alternatives when `include_alternatives` is set.
pub fn relevant_set(j: &JudgmentSet, target: &ItemId, include_alternatives: bool) -> BTreeSet<ItemId> {
    let mut set = BTreeSet::from([target.clone()]);
    if include_alternatives {
        set.extend(j.alternatives(target).cloned());
    }
    set
}

/// Cohen's kappa for two binary label sequences.
pub fn cohens_kappa(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "label sequences differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Input("label sequences are empty".into()));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let p_o = agree / n;
    let p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(Error::Undefined(
            "agreement: both raters assign one identical constant label".into(),
        ));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_target: usize,
    pub n_assessed: usize,
    pub n_relevant: usize,
    pub avg_relevant: f64,
    pub n_annotations_per_target: usize,
}

/// Collection statistics. `avg_relevant` averages the relevant-alternative
/// count over assessed targets.
pub fn dataset_stats(j: &JudgmentSet, n_target_catalog: usize, pool_size: usize) -> Result<DatasetStats> {
    if pool_size == 0 {
        return Err(Error::Input("pool size must be at least 1".into()));
    }
    let n_assessed = j.n_targets();
    let counts: Vec<usize> = j.targets().map(|t| j.n_relevant(t)).collect();
    let n_relevant = counts.iter().filter(|&&c| c > 0).count();
    let avg_relevant = if n_assessed == 0 {
        0.0
    } else {
        counts.iter().sum::<usize>() as f64 / n_assessed as f64
    };
    if n_target_catalog < n_assessed {
        return Err(Error::Input(format!(
            "catalog target count {n_target_catalog} is below the {n_assessed} assessed targets"
        )));
    }
    let n_target = n_target_catalog;
    let n_annotations_per_target = if n_assessed == 0 { 0 } else { pool_size };
    Ok(DatasetStats {
        n_target,
        n_assessed,
        n_relevant,
        avg_relevant,
        n_annotations_per_target,
    })
}

/// One submitted judging task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub worker_id: String,
    pub target_id: ItemId,
    pub selected: BTreeSet<ItemId>,
    pub justification: String,
    pub duration_ms: u64,
    pub timestamp: DateTime<Utc>,
}

/// Checks the attention-check policy. Returns a human-readable reason on failure.
pub fn check_justification(text: &str) -> std::result::Result<(), String> {
    let trimmed = text.trim();
    let tokens = trimmed.split_whitespace().count();
    let chars = trimmed.chars().count();
    if tokens < MIN_JUSTIFICATION_TOKENS || chars < MIN_JUSTIFICATION_CHARS {
        return Err(format!(
            "attention check failed: justification needs at least {MIN_JUSTIFICATION_TOKENS} words \
             and {MIN_JUSTIFICATION_CHARS} characters (got {tokens} words, {chars} characters)"
        ));
    }
    Ok(())
}

/// Reads line-delimited annotation records. Blank lines are skipped.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
        .collect()
}

/// Consolidates annotation records into a judgment set.
///
/// Every annotator of a target has seen all of that target's candidates, so
/// a candidate is relevant iff at least `min_votes` annotators selected it
/// and those form a strict majority of the target's annotators. All pooled
/// candidates of an annotated target receive a row.
pub fn consolidate(
    category: &str,
    records: &[AnnotationRecord],
    candidates: &HashMap<ItemId, Vec<ItemId>>,
    min_votes: usize,
) -> JudgmentSet {
    let mut per_target: BTreeMap<&ItemId, (usize, HashMap<&ItemId, usize>)> = BTreeMap::new();
    for r in records {
        let (n, votes) = per_target.entry(&r.target_id).or_default();
        *n += 1;
        for s in &r.selected {
            *votes.entry(s).or_default() += 1;
        }
    }
    let mut set = JudgmentSet::new(category);
    for (target, (n, votes)) in per_target {
        set.mark_assessed(target.clone());
        let pooled = candidates.get(target).cloned().unwrap_or_default();
        let mut all: BTreeSet<&ItemId> = pooled.iter().collect();
        all.extend(votes.keys().copied());
        for cand in all {
            let v = votes.get(cand).copied().unwrap_or(0);
            let relevant = v >= min_votes && 2 * v > n;
            // Pairs are unique because `all` is a set.
            let _ = set.insert(target.clone(), cand.clone(), relevant);
        }
    }
    set
}

/// Pairs up the first two annotators of every multiply-judged target and
/// returns their label sequences over the target's candidates.
pub fn double_judged_labels(
    records: &[AnnotationRecord],
    candidates: &HashMap<ItemId, Vec<ItemId>>,
) -> (Vec<bool>, Vec<bool>) {
    let mut by_target: BTreeMap<&ItemId, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        by_target.entry(&r.target_id).or_default().push(r);
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (target, mut recs) in by_target {
        if recs.len() < 2 {
            continue;
        }
        recs.sort_by(|x, y| x.timestamp.cmp(&y.timestamp).then(x.worker_id.cmp(&y.worker_id)));
        let Some(cands) = candidates.get(target) else {
            continue;
        };
        for c in cands {
            a.push(recs[0].selected.contains(c));
            b.push(recs[1].selected.contains(c));
        }
    }
    (a, b)
}
