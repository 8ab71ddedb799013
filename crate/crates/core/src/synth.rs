//! Seeded synthetic benchmarks: a Gaussian catalog whose targets have
//! judged alternatives planted in their neighbourhoods, and per-system
//! embeddings and runs for exercising the pooling pipeline.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::catalog::{nearest_neighbors, Catalog, ItemId};
use crate::error::{Error, Result};
use crate::judgments::JudgmentSet;
use crate::pooling::Run;
use crate::rng::{SeedTree, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub category: String,
    pub n_items: usize,
    pub dim: usize,
    pub n_targets: usize,
    pub min_alternatives: usize,
    pub max_alternatives: usize,
    /// Standard deviation of an alternative's offset from its target.
    pub alternative_spread: f64,
    /// Judged candidates per target; the rows beyond the alternatives are
    /// the target's nearest non-relevant neighbours.
    pub pool_size: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            category: "synthetic".into(),
            n_items: 1000,
            dim: 16,
            n_targets: 50,
            min_alternatives: 2,
            max_alternatives: 5,
            alternative_spread: 0.35,
            pool_size: 14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub catalog: Catalog,
    pub judgments: JudgmentSet,
    pub targets: Vec<ItemId>,
}

pub fn item_id(i: usize) -> ItemId {
    ItemId::new(format!("item{i:05}")).expect("generated ids are valid")
}

fn gaussian(dim: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn synthetic_benchmark(cfg: &BenchmarkConfig, seed: u64) -> Result<Benchmark> {
    let BenchmarkConfig {
        n_items,
        dim,
        n_targets,
        min_alternatives,
        max_alternatives,
        ..
    } = *cfg;
    if dim == 0 || n_targets == 0 {
        return Err(Error::Input("dimension and target count must be positive".into()));
    }
    if min_alternatives > max_alternatives || max_alternatives > cfg.pool_size {
        return Err(Error::Input("need min_alternatives <= max_alternatives <= pool_size".into()));
    }
    if n_targets * (1 + max_alternatives) > n_items || cfg.pool_size >= n_items {
        return Err(Error::Input(format!(
            "{n_items} items cannot hold {n_targets} targets with up to {max_alternatives} alternatives"
        )));
    }
    let seeds = SeedTree::new(seed);
    let mut rng = seeds.stream("synth/items");
    let mut vectors: Vec<Vec<f64>> = (0..n_items).map(|_| gaussian(dim, &mut rng)).collect();

    let mut rng = seeds.stream("synth/targets");
    let chosen = sample(&mut rng, n_items, n_targets * (1 + max_alternatives)).into_vec();
    let (target_idx, spare) = chosen.split_at(n_targets);
    let mut spare = spare.iter().copied();
    let mut alternatives: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut rng = seeds.stream("synth/alternatives");
    for &t in target_idx {
        let m = rng.random_range(min_alternatives..=max_alternatives);
        let alts: Vec<usize> = spare.by_ref().take(m).collect();
        for &a in &alts {
            let offset = gaussian(dim, &mut rng);
            vectors[a] = vectors[t]
                .iter()
                .zip(&offset)
                .map(|(x, e)| x + cfg.alternative_spread * e)
                .collect();
        }
        alternatives.insert(t, alts);
    }

    let catalog = Catalog::new(
        cfg.category.clone(),
        dim,
        vectors.into_iter().enumerate().map(|(i, v)| (item_id(i), v)),
    )?;
    let mut judgments = JudgmentSet::new(cfg.category.clone());
    let mut targets = Vec::with_capacity(n_targets);
    for (&t, alts) in &alternatives {
        let target = item_id(t);
        let relevant: BTreeSet<ItemId> = alts.iter().map(|&a| item_id(a)).collect();
        for a in &relevant {
            judgments.insert(target.clone(), a.clone(), true)?;
        }
        let others = nearest_neighbors(&catalog, &target, cfg.pool_size)?
            .into_iter()
            .map(|(id, _)| id)
            .filter(|id| !relevant.contains(id))
            .take(cfg.pool_size - relevant.len());
        for o in others {
            judgments.insert(target.clone(), o, false)?;
        }
        targets.push(target);
    }
    targets.sort();
    Ok(Benchmark {
        catalog,
        judgments,
        targets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemViewsConfig {
    pub systems: Vec<String>,
    /// Standard deviation of each system's distortion of the item vectors.
    pub embedding_noise: f64,
    /// Standard deviation of the query noise behind each final ranking.
    pub query_noise: f64,
    /// Items per run ranking.
    pub depth: usize,
    /// How many catalog items get a run ranking (the pooling universe).
    pub n_run_targets: usize,
}

impl Default for SystemViewsConfig {
    fn default() -> Self {
        Self {
            systems: vec!["gru".into(), "ege".into()],
            embedding_noise: 0.5,
            query_noise: 1.0,
            depth: 100,
            n_run_targets: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemView {
    pub name: String,
    pub embeddings: Catalog,
    pub run: Run,
}

/// Each system sees a distorted copy of the catalog and produces a
/// final-turn ranking for a common subset of targets from a noisy query
/// near the target. Scores are cosine similarities.
pub fn system_views(catalog: &Catalog, cfg: &SystemViewsConfig, seed: u64) -> Result<Vec<SystemView>> {
    if cfg.systems.is_empty() {
        return Err(Error::Input("at least one system is required".into()));
    }
    if cfg.n_run_targets > catalog.len() || cfg.depth >= catalog.len() {
        return Err(Error::Input("run targets and depth must fit in the catalog".into()));
    }
    let seeds = SeedTree::new(seed);
    let mut rng = seeds.stream("synth/run-targets");
    let mut run_targets: Vec<usize> = sample(&mut rng, catalog.len(), cfg.n_run_targets).into_vec();
    run_targets.sort_unstable();
    let mut views = Vec::with_capacity(cfg.systems.len());
    for name in &cfg.systems {
        let mut rng = seeds.stream(&format!("synth/system/{name}"));
        let embeddings = Catalog::new(
            catalog.category(),
            catalog.dim(),
            catalog.ids().iter().map(|id| {
                let v = catalog.embedding(id).expect("id from catalog");
                let e = gaussian(v.len(), &mut rng);
                (id.clone(), v.iter().zip(&e).map(|(x, n)| x + cfg.embedding_noise * n).collect())
            }),
        )?;
        let mut rankings = BTreeMap::new();
        for &t in &run_targets {
            let target = &catalog.ids()[t];
            let v = embeddings.embedding(target).expect("id from catalog");
            let e = gaussian(v.len(), &mut rng);
            let query: Vec<f64> = v.iter().zip(&e).map(|(x, n)| x + cfg.query_noise * n).collect();
            let ranking: Vec<(ItemId, f64)> = embeddings
                .rank_by_vector(&query, cfg.depth + 1)?
                .into_iter()
                .filter(|(id, _)| id != target)
                .take(cfg.depth)
                .collect();
            rankings.insert(target.clone(), ranking);
        }
        views.push(SystemView {
            name: name.clone(),
            embeddings,
            run: Run {
                system: name.clone(),
                rankings,
            },
        });
    }
    Ok(views)
}
