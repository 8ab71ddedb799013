use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use altereval_core::catalog::load_catalog;
use altereval_core::eval::{report_to_csv, save_transcripts, write_file, Metric, RunReport};
use altereval_core::experiment::{simulate, simulator_grid, ExperimentConfig, SimulationOutput};
use altereval_core::judgments::load_qrels;
use altereval_core::pooling::load_pools;
use altereval_core::simulate::SimulatorSpec;
use altereval_core::systems::{AnySut, SutSpec};
use altereval_core::{ItemId, JudgmentSet};
use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{ConfigArgs, UsageError};

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(long)]
    pools: Option<PathBuf>,
    /// System under test, e.g. `greedy:eta=0.2`.
    #[arg(long)]
    sut: Option<String>,
    /// Simulator spec (repeatable); replaces the default grid.
    #[arg(long = "simulator")]
    simulators: Vec<String>,
    /// Dialog worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

/// File-name form of a spec string.
pub fn slug(spec: &str) -> String {
    spec.chars()
        .map(|c| match c {
            ':' | ',' => '_',
            c if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '=' => c,
            _ => '-',
        })
        .collect::<String>()
        .replace('=', "")
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig,
    n_targets: usize,
    streams: [&'static str; 3],
    outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct BestThreshold {
    sut: String,
    tolerance: usize,
    max_switches: Option<usize>,
    metric: &'static str,
    p_switch: f64,
    value: f64,
}

type ProbGroups<'a> = BTreeMap<(usize, Option<usize>), Vec<(f64, &'a RunReport)>>;

/// For each MetaSimProb tolerance, the switch probability with the best
/// final-turn value of each metric (ties go to the smaller probability).
fn best_thresholds(reports: &[(SimulatorSpec, &RunReport)]) -> Vec<BestThreshold> {
    let mut groups: ProbGroups = BTreeMap::new();
    for (spec, rep) in reports {
        if let SimulatorSpec::GainLoss {
            tolerance,
            p_switch,
            max_switches,
        } = *spec
        {
            groups.entry((tolerance, max_switches)).or_default().push((p_switch, rep));
        }
    }
    let mut out = Vec::new();
    for ((tolerance, max_switches), mut reps) in groups {
        reps.sort_by(|a, b| a.0.total_cmp(&b.0));
        for metric in [Metric::Sr1, Metric::Ndcg10, Metric::Mrr10] {
            let mut best: Option<(f64, f64, &RunReport)> = None;
            for &(p, rep) in &reps {
                let Some(v) = rep.final_row().map(|r| r.get(metric)) else {
                    continue;
                };
                if best.is_none_or(|(_, b, _)| v > b) {
                    best = Some((p, v, rep));
                }
            }
            if let Some((p_switch, value, rep)) = best {
                out.push(BestThreshold {
                    sut: rep.sut_spec.clone(),
                    tolerance,
                    max_switches,
                    metric: metric.name(),
                    p_switch,
                    value,
                });
            }
        }
    }
    out
}

fn targets_for(judgments: Option<&JudgmentSet>, pools: Option<&Path>) -> Result<Vec<ItemId>> {
    if let Some(j) = judgments {
        return Ok(j.targets().cloned().collect());
    }
    if let Some(p) = pools {
        let mut t: Vec<ItemId> = load_pools(p)?.into_iter().map(|p| p.target_id).collect();
        t.sort();
        t.dedup();
        return Ok(t);
    }
    Err(UsageError("no targets: give qrels or pools".into()).into())
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(args.common.config.as_deref())?;
    cfg.apply_seed(args.common.seed)?;
    if let Some(c) = args.common.catalog {
        cfg.catalog = Some(c);
    }
    if let Some(o) = args.common.out {
        cfg.output = o;
    }
    if let Some(q) = args.qrels {
        cfg.qrels = Some(q);
    }
    if let Some(p) = args.pools {
        cfg.pools = Some(p);
    }
    if let Some(s) = args.sut {
        cfg.sut = s;
    }
    if !args.simulators.is_empty() {
        cfg.simulators = args.simulators;
    }
    cfg.validate()?;

    let specs: Vec<SimulatorSpec> = if cfg.simulators.is_empty() {
        simulator_grid(&cfg.tolerances, &cfg.p_switch)?
    } else {
        cfg.simulators.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    let sut_spec: SutSpec = cfg.sut.parse()?;
    if specs.iter().any(SimulatorSpec::is_meta) && cfg.qrels.is_none() {
        return Err(UsageError("meta-simulators need relevance judgments (config `qrels` or --qrels)".into()).into());
    }
    let catalog = load_catalog(cfg.catalog_path()?)?;
    let judgments = cfg.qrels.as_deref().map(load_qrels).transpose()?;
    let targets = targets_for(judgments.as_ref(), cfg.pools.as_deref())?;
    let sut = AnySut::from_spec(&sut_spec, cfg.k)?;
    let empty = JudgmentSet::default();
    let j = judgments.as_ref().unwrap_or(&empty);

    let exp = ExperimentConfig {
        run_id: cfg.run_id.clone(),
        master_seed: cfg.seed,
        max_turns: cfg.max_turns,
        cutoff: cfg.cutoff,
        noise_sigma: cfg.noise_sigma,
        threads: args.threads,
    };
    let started = Instant::now();
    let sut_label = sut_spec.to_string();
    let outputs: Vec<(SimulatorSpec, SimulationOutput)> = specs
        .iter()
        .map(|spec| {
            simulate(&exp, &catalog, j, &sut, &sut_label, spec, &targets, None)
                .map(|o| (spec.clone(), o))
                .with_context(|| format!("simulating `{spec}`"))
        })
        .collect::<Result<_>>()?;
    let elapsed = started.elapsed();

    let reports_dir = cfg.output.join("reports");
    let transcripts_dir = cfg.output.join("transcripts");
    for d in [&reports_dir, &transcripts_dir] {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let mut files = Vec::new();
    for (spec, out) in &outputs {
        let name = format!("{}__{}", slug(&sut_label), slug(&spec.to_string()));
        let report_path = reports_dir.join(format!("{name}.csv"));
        write_file(&report_path, report_to_csv(&out.report)?.as_bytes())?;
        save_transcripts(&transcripts_dir.join(format!("{name}.jsonl")), &out.transcripts)?;
        files.push(format!("reports/{name}.csv"));
        files.push(format!("transcripts/{name}.jsonl"));
        let last = out.report.final_row().expect("max_turns >= 1");
        println!(
            "{:<32} sr1={:.3} ndcg10={:.3} mrr10={:.3}",
            spec.to_string(),
            last.sr1,
            last.ndcg10,
            last.mrr10
        );
    }

    let reps: Vec<(SimulatorSpec, &RunReport)> = outputs.iter().map(|(s, o)| (s.clone(), &o.report)).collect();
    let best = best_thresholds(&reps);
    if !best.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        for b in &best {
            w.serialize(b)?;
        }
        write_file(&cfg.output.join("best_thresholds.csv"), &w.into_inner()?)?;
        files.push("best_thresholds.csv".into());
    }
    let manifest = Manifest {
        config: &cfg,
        n_targets: targets.len(),
        streams: ["{run_id}/sut/{target}", "{run_id}/dialog/{target}/critique", "{run_id}/dialog/{target}/switch"],
        outputs: files,
    };
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    write_file(&cfg.output.join("manifest.json"), &text)?;
    eprintln!(
        "{} simulator specs x {} targets in {:.2?}",
        outputs.len(),
        targets.len(),
        elapsed
    );
    Ok(())
}
