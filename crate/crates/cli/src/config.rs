//! The experiment configuration document.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const SEED_ENV: &str = "ALTEREVAL_SEED";

/// Everything needed to rerun an experiment. Relative paths are resolved
/// against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub catalog: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub pools: Option<PathBuf>,
    /// Final-turn runs of the systems feeding the pools.
    pub runs: Vec<PathBuf>,
    /// Per-system embedding files for nearest-neighbour lists, keyed by
    /// system name. Systems without one use the catalog embeddings.
    pub system_embeddings: BTreeMap<String, PathBuf>,
    pub sut: String,
    /// Explicit simulator specs; when empty the tolerance and probability
    /// grids are expanded instead.
    pub simulators: Vec<String>,
    pub tolerances: Vec<usize>,
    pub p_switch: Vec<f64>,
    pub k: usize,
    pub cutoff: usize,
    pub max_turns: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub run_id: String,
    pub output: PathBuf,
    pub n_pool_targets: usize,
    pub strata: usize,
    pub nn_quota: usize,
    pub retrieved_quota: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            catalog: None,
            qrels: None,
            pools: None,
            runs: Vec::new(),
            system_embeddings: BTreeMap::new(),
            sut: "greedy:eta=0.2".into(),
            simulators: Vec::new(),
            tolerances: vec![1, 2, 3, 4],
            p_switch: vec![0.55, 0.65, 0.75, 0.85, 0.95],
            k: 100,
            cutoff: 10,
            max_turns: 10,
            noise_sigma: 0.1,
            seed: 0,
            run_id: "altereval".into(),
            output: PathBuf::from("out"),
            n_pool_targets: 200,
            strata: 4,
            nn_quota: 4,
            retrieved_quota: 3,
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.catalog, &mut cfg.qrels, &mut cfg.pools].into_iter().flatten() {
            resolve(base, p);
        }
        cfg.runs.iter_mut().for_each(|p| resolve(base, p));
        cfg.system_embeddings.values_mut().for_each(|p| resolve(base, p));
        resolve(base, &mut cfg.output);
        Ok(cfg)
    }

    /// Loads `path` if given, otherwise starts from the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Applies `ALTEREVAL_SEED`, then an explicit seed flag.
    pub fn apply_seed(&mut self, flag: Option<u64>) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| UsageError(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?;
        }
        if let Some(s) = flag {
            self.seed = s;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(UsageError(m.into()).into());
        if self.simulators.is_empty() && (self.tolerances.is_empty() || self.p_switch.is_empty()) {
            return bad("tolerance and p_switch grids must be non-empty");
        }
        if self.k == 0 || self.cutoff == 0 || self.max_turns == 0 {
            return bad("k, cutoff and max_turns must be at least 1");
        }
        if self.run_id.is_empty() || self.run_id.contains('/') {
            return bad("run_id must be non-empty and contain no '/'");
        }
        Ok(())
    }

    pub fn catalog_path(&self) -> Result<&Path> {
        self.catalog
            .as_deref()
            .ok_or_else(|| UsageError("no catalog given (config `catalog` or --catalog)".into()).into())
    }
}
