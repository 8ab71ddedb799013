use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use altereval_core::catalog::{load_catalog, nearest_neighbors};
use altereval_core::eval::write_file;
use altereval_core::pooling::{
    band_bounds, build_pool, difficulty_score, load_run, stratified_sample, Pool, Run, SourceList,
};
use altereval_core::rng::SeedTree;
use altereval_core::{Catalog, Error, ItemId};
use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{ConfigArgs, UsageError};

pub const POOL_STREAM: &str = "pool";

#[derive(Args, Debug)]
pub struct PoolArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Final-turn run of a system (repeatable).
    #[arg(long = "run")]
    runs: Vec<PathBuf>,
    /// Embeddings a system uses for nearest neighbours, as `system=path` (repeatable).
    #[arg(long = "embeddings", value_parser = parse_named_path)]
    embeddings: Vec<(String, PathBuf)>,
    /// Number of targets to sample.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    strata: Option<usize>,
}

pub fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or_else(|| format!("expected name=path, got {s:?}"))?;
    if name.is_empty() || path.is_empty() {
        return Err(format!("expected name=path, got {s:?}"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

#[derive(Serialize)]
struct SampledTarget {
    target_id: ItemId,
    difficulty: f64,
    rank: usize,
    stratum: usize,
}

#[derive(Serialize)]
struct PoolManifest {
    master_seed: u64,
    stream: &'static str,
    systems: Vec<String>,
    n_candidates: usize,
    n_unscored: usize,
    n_targets: usize,
    strata: usize,
    band_bounds: Vec<(usize, usize)>,
    nn_quota: usize,
    retrieved_quota: usize,
    targets: Vec<SampledTarget>,
}

pub fn run(args: PoolArgs) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(args.common.config.as_deref())?;
    cfg.apply_seed(args.common.seed)?;
    if let Some(c) = args.common.catalog {
        cfg.catalog = Some(c);
    }
    if let Some(o) = args.common.out {
        cfg.output = o;
    }
    if !args.runs.is_empty() {
        cfg.runs = args.runs;
    }
    cfg.system_embeddings.extend(args.embeddings);
    if let Some(n) = args.n {
        cfg.n_pool_targets = n;
    }
    if let Some(s) = args.strata {
        cfg.strata = s;
    }
    if cfg.runs.is_empty() {
        return Err(UsageError("no runs given (config `runs` or --run)".into()).into());
    }
    let catalog = load_catalog(cfg.catalog_path()?)?;
    let runs: Vec<Run> = cfg.runs.iter().map(|p| load_run(p)).collect::<Result<_, _>>()?;
    let mut names = BTreeSet::new();
    if let Some(dup) = runs.iter().find(|r| !names.insert(r.system.as_str())) {
        return Err(UsageError(format!("two runs for system `{}`", dup.system)).into());
    }
    let mut views: Vec<Catalog> = Vec::with_capacity(runs.len());
    for r in &runs {
        views.push(match cfg.system_embeddings.get(&r.system) {
            Some(p) => load_catalog(p).with_context(|| format!("embeddings of `{}`", r.system))?,
            None => catalog.clone(),
        });
    }
    if let Some(unused) = cfg.system_embeddings.keys().find(|k| !names.contains(k.as_str())) {
        return Err(UsageError(format!("embeddings given for unknown system `{unused}`")).into());
    }

    // Candidate targets: ranked by every system and present in every view.
    let mut universe: Vec<&ItemId> = runs[0].rankings.keys().collect();
    universe.retain(|t| {
        catalog.contains(t) && runs.iter().all(|r| r.rankings.contains_key(*t)) && views.iter().all(|v| v.contains(t))
    });
    let mut scored: Vec<(ItemId, f64)> = Vec::with_capacity(universe.len());
    let mut n_unscored = 0;
    for t in universe {
        let scores: Result<Vec<f64>, Error> = runs
            .iter()
            .map(|r| {
                let s: Vec<f64> = r.rankings[t].iter().map(|(_, s)| *s).collect();
                difficulty_score(&s)
            })
            .collect();
        match scores {
            Ok(s) => scored.push((t.clone(), s.iter().sum::<f64>() / s.len() as f64)),
            Err(Error::Degenerate(_)) | Err(Error::Input(_)) => n_unscored += 1,
            Err(e) => return Err(e.into()),
        }
    }

    let seeds = SeedTree::new(cfg.seed);
    let sample = stratified_sample(&scored, cfg.n_pool_targets, cfg.strata, &mut seeds.stream(POOL_STREAM))?;

    let mut ranked: Vec<&(ItemId, f64)> = scored.iter().collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let rank_of: BTreeMap<&ItemId, (usize, f64)> = ranked.iter().enumerate().map(|(i, (t, s))| (t, (i, *s))).collect();
    let strata = cfg.strata.min(ranked.len().max(1));
    let bounds = band_bounds(ranked.len(), strata);

    let per_source = cfg.nn_quota.max(cfg.retrieved_quota);
    let nn_depth = (per_source + 2 * runs.len() * per_source).min(catalog.len().saturating_sub(1));
    let mut pools: Vec<Pool> = Vec::with_capacity(sample.len());
    let mut sampled = Vec::with_capacity(sample.len());
    for t in &sample {
        let nn: Vec<SourceList> = runs
            .iter()
            .zip(&views)
            .map(|(r, v)| {
                let list = nearest_neighbors(v, t, nn_depth)?.into_iter().map(|(i, _)| i).collect();
                Ok((r.system.clone(), list))
            })
            .collect::<Result<_, Error>>()?;
        let retrieved: Vec<SourceList> = runs
            .iter()
            .map(|r| (r.system.clone(), r.rankings[t].iter().map(|(i, _)| i.clone()).collect()))
            .collect();
        pools.push(build_pool(t, &nn, &retrieved, cfg.nn_quota, cfg.retrieved_quota)?);
        let (rank, difficulty) = rank_of[t];
        sampled.push(SampledTarget {
            target_id: t.clone(),
            difficulty,
            rank,
            stratum: bounds.iter().position(|&(lo, hi)| (lo..hi).contains(&rank)).unwrap_or(0),
        });
    }

    std::fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    let pools_path = cfg.output.join("pools.jsonl");
    let mut out = Vec::new();
    for p in &pools {
        serde_json::to_writer(&mut out, p)?;
        out.push(b'\n');
    }
    write_file(&pools_path, &out)?;
    let manifest = PoolManifest {
        master_seed: cfg.seed,
        stream: POOL_STREAM,
        systems: runs.iter().map(|r| r.system.clone()).collect(),
        n_candidates: scored.len(),
        n_unscored,
        n_targets: pools.len(),
        strata,
        band_bounds: bounds,
        nn_quota: cfg.nn_quota,
        retrieved_quota: cfg.retrieved_quota,
        targets: sampled,
    };
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    write_file(&cfg.output.join("pool_manifest.json"), &text)?;
    println!(
        "wrote {} pools of {} candidates to {}",
        pools.len(),
        pools.first().map_or(0, Pool::len),
        pools_path.display()
    );
    Ok(())
}
