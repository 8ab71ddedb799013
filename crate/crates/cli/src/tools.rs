use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use altereval_core::catalog::load_catalog;
use altereval_core::eval::write_file;
use altereval_core::judgments::{cohens_kappa, dataset_stats, double_judged_labels, load_annotations, load_qrels};
use altereval_core::pooling::{
    cohen_d_to_probability, correlation_to_cohens_d, load_pools, required_sample_size, save_run, Pool, PowerSpec,
};
use altereval_core::synth::{synthetic_benchmark, system_views, BenchmarkConfig, SystemViewsConfig};
use altereval_core::ItemId;
use altereval_service::{router, JudgingStore, DEFAULT_PAYLOAD_TEMPLATE};
use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use crate::config::RunConfig;
use crate::pool::parse_named_path;
use crate::UsageError;

fn load_named_pools(pools: &[(String, PathBuf)]) -> Result<BTreeMap<String, Vec<Pool>>> {
    if pools.is_empty() {
        return Err(UsageError("no pools given (--pools category=path)".into()).into());
    }
    let mut out = BTreeMap::new();
    for (name, path) in pools {
        if out.insert(name.clone(), load_pools(path)?).is_some() {
            return Err(UsageError(format!("category `{name}` given twice")).into());
        }
    }
    Ok(out)
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Pools of a category, as `category=path` (repeatable).
    #[arg(long = "pools", value_parser = parse_named_path, required = true)]
    pools: Vec<(String, PathBuf)>,
    /// Directory for the assignment and annotation logs.
    #[arg(long)]
    data: PathBuf,
    /// Directory with the judging UI bundle.
    #[arg(long)]
    ui: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Display payload per item; `{id}` is replaced by the item id.
    #[arg(long, default_value = DEFAULT_PAYLOAD_TEMPLATE)]
    payload_template: String,
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let store = JudgingStore::open(&args.data, load_named_pools(&args.pools)?, args.payload_template)?;
    let app = router(Arc::new(store), args.ui);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.addr)
            .await
            .with_context(|| format!("binding {}", args.addr))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        altereval_service::serve(listener, app).await?;
        Ok(())
    })
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long = "pools", value_parser = parse_named_path, required = true)]
    pools: Vec<(String, PathBuf)>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    category: String,
    /// Minimum number of selecting annotators for a relevant label.
    #[arg(long, default_value_t = 1)]
    min_votes: usize,
    /// Output qrels file.
    #[arg(long)]
    out: PathBuf,
}

pub fn export(args: ExportArgs) -> Result<()> {
    let store = JudgingStore::open(&args.data, load_named_pools(&args.pools)?, DEFAULT_PAYLOAD_TEMPLATE)?;
    let set = store.export_qrels(&args.category, args.min_votes)?;
    write_file(&args.out, set.to_qrels_string().as_bytes())?;
    println!("wrote judgments for {} targets to {}", set.n_targets(), args.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct KappaArgs {
    /// First annotator's labels, e.g. `1,0,1`.
    #[arg(long, requires = "b", conflicts_with_all = ["annotations", "pools"])]
    a: Option<String>,
    /// Second annotator's labels.
    #[arg(long, requires = "a")]
    b: Option<String>,
    /// Annotation records (JSONL); the first two annotators of each target are compared.
    #[arg(long, requires = "pools")]
    annotations: Option<PathBuf>,
    #[arg(long, requires = "annotations")]
    pools: Option<PathBuf>,
}

fn parse_labels(s: &str) -> Result<Vec<bool>> {
    s.split(',')
        .map(|t| match t.trim() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => Err(UsageError(format!("label must be 0 or 1, got {other:?}")).into()),
        })
        .collect()
}

pub fn kappa(args: KappaArgs) -> Result<()> {
    let (a, b) = match (args.a, args.b, args.annotations, args.pools) {
        (Some(a), Some(b), _, _) => (parse_labels(&a)?, parse_labels(&b)?),
        (_, _, Some(ann), Some(pools)) => {
            let records = load_annotations(&ann)?;
            let candidates: HashMap<ItemId, Vec<ItemId>> = load_pools(&pools)?
                .into_iter()
                .map(|p| {
                    let items = p.items().cloned().collect();
                    (p.target_id, items)
                })
                .collect();
            double_judged_labels(&records, &candidates)
        }
        _ => return Err(UsageError("give --a and --b, or --annotations and --pools".into()).into()),
    };
    let k = cohens_kappa(&a, &b)?;
    println!("kappa {k:.4}");
    println!("n {}", a.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct PowerArgs {
    /// Correlation effect size (repeatable).
    #[arg(long, required = true, allow_negative_numbers = true)]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.90)]
    power: f64,
    /// Print JSON lines instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Serialize)]
struct PowerRow {
    rho: f64,
    cohen_d: f64,
    required_n: usize,
    p_superiority: f64,
}

pub fn power(args: PowerArgs) -> Result<()> {
    let rows: Vec<PowerRow> = args
        .rho
        .iter()
        .map(|&rho| {
            let spec = PowerSpec::new(rho, args.alpha, args.power)?;
            let d = correlation_to_cohens_d(rho)?;
            Ok(PowerRow {
                rho,
                cohen_d: d,
                required_n: required_sample_size(&spec),
                p_superiority: cohen_d_to_probability(d)?,
            })
        })
        .collect::<Result<_>>()?;
    if args.json {
        for r in &rows {
            println!("{}", serde_json::to_string(r)?);
        }
        return Ok(());
    }
    println!("alpha={} power={}", args.alpha, args.power);
    println!("{:>8}  {:>8}  {:>10}  {:>13}", "rho", "cohen_d", "required_n", "p_superiority");
    for r in &rows {
        println!(
            "{:>8.3}  {:>8.3}  {:>10}  {:>13.3}",
            r.rho, r.cohen_d, r.required_n, r.p_superiority
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    qrels: PathBuf,
    /// Catalog of candidate targets; its size is reported as n_target.
    #[arg(long, conflicts_with = "n_target")]
    catalog: Option<PathBuf>,
    /// Number of candidate targets, when no catalog file is at hand.
    #[arg(long)]
    n_target: Option<usize>,
    /// Candidates judged per target.
    #[arg(long, default_value_t = 14)]
    pool_size: usize,
    #[arg(long)]
    json: bool,
}

pub fn stats(args: StatsArgs) -> Result<()> {
    let j = load_qrels(&args.qrels)?;
    let n_target = match (&args.catalog, args.n_target) {
        (Some(c), _) => load_catalog(c)?.len(),
        (None, Some(n)) => n,
        (None, None) => j.n_targets(),
    };
    let s = dataset_stats(&j, n_target, args.pool_size)?;
    if args.json {
        println!("{}", serde_json::json!({ "category": j.category(), "stats": s }));
        return Ok(());
    }
    println!(
        "{:<12}  {:>8}  {:>10}  {:>10}  {:>12}  {:>24}",
        "category", "n_target", "n_assessed", "n_relevant", "avg_relevant", "n_annotations_per_target"
    );
    println!(
        "{:<12}  {:>8}  {:>10}  {:>10}  {:>12.1}  {:>24}",
        j.category(),
        s.n_target,
        s.n_assessed,
        s.n_relevant,
        s.avg_relevant,
        s.n_annotations_per_target
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    items: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Targets with planted alternatives and judgments.
    #[arg(long, default_value_t = 50)]
    targets: usize,
    /// Targets ranked by every system (the pooling universe).
    #[arg(long, default_value_t = 400)]
    run_targets: usize,
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let bcfg = BenchmarkConfig {
        n_items: args.items,
        dim: args.dim,
        n_targets: args.targets,
        ..BenchmarkConfig::default()
    };
    let bench = synthetic_benchmark(&bcfg, args.seed)?;
    let vcfg = SystemViewsConfig {
        n_run_targets: args.run_targets,
        ..SystemViewsConfig::default()
    };
    let views = system_views(&bench.catalog, &vcfg, args.seed)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    bench.catalog.save(&args.out.join("catalog.emb"))?;
    let qrels_name = format!("{}.qrels", bcfg.category);
    bench.judgments.save(&args.out.join(&qrels_name))?;
    let mut cfg = RunConfig {
        catalog: Some("catalog.emb".into()),
        qrels: Some(qrels_name.into()),
        pools: Some("out/pools.jsonl".into()),
        output: "out".into(),
        seed: args.seed,
        ..RunConfig::default()
    };
    for v in &views {
        let emb = format!("{}.emb", v.name);
        let run = format!("{}.run", v.name);
        v.embeddings.save(&args.out.join(&emb))?;
        save_run(&args.out.join(&run), &v.run)?;
        cfg.system_embeddings.insert(v.name.clone(), emb.into());
        cfg.runs.push(run.into());
    }
    let mut text = serde_json::to_vec_pretty(&cfg)?;
    text.push(b'\n');
    write_file(&args.out.join("config.json"), &text)?;
    println!(
        "wrote {} items, {} judged targets and {} system runs to {}",
        bench.catalog.len(),
        bench.targets.len(),
        views.len(),
        args.out.display()
    );
    Ok(())
}
