//! Runs a simulator over a set of targets and aggregates the result.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ItemId};
use crate::error::{Error, Result};
use crate::eval::{aggregate, run_dialog, DialogContext, DialogStreams, RunReport, Transcript};
use crate::judgments::JudgmentSet;
use crate::rng::SeedTree;
use crate::simulate::{SimulatorSpec, SyntheticCritiquer};
use crate::systems::SystemUnderTest;

pub const DEFAULT_NOISE_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub master_seed: u64,
    pub max_turns: usize,
    pub cutoff: usize,
    pub noise_sigma: f64,
    /// Worker threads for dialogs; 1 runs sequentially, 0 uses every core.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            master_seed: 0,
            max_turns: crate::eval::DEFAULT_MAX_TURNS,
            cutoff: crate::eval::DEFAULT_CUTOFF,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            threads: 1,
        }
    }
}

/// Substream names used by one dialog.
pub fn stream_names(run_id: &str, target: &ItemId) -> [String; 3] {
    [
        format!("{run_id}/sut/{target}"),
        format!("{run_id}/dialog/{target}/critique"),
        format!("{run_id}/dialog/{target}/switch"),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub transcripts: Vec<Transcript>,
    pub report: RunReport,
}

/// Simulates one dialog per target and aggregates them. Every dialog draws
/// from its own named substreams, so the output does not depend on thread
/// count or scheduling. Transcripts come back in target order.
///
/// Base-simulator runs are scored against the target alone and meta runs
/// against the target plus its alternatives, unless `include_alternatives`
/// overrides that.
#[allow(clippy::too_many_arguments)]
pub fn simulate<S>(
    cfg: &ExperimentConfig,
    catalog: &Catalog,
    judgments: &JudgmentSet,
    sut: &S,
    sut_spec: &str,
    simulator: &SimulatorSpec,
    targets: &[ItemId],
    include_alternatives: Option<bool>,
) -> Result<SimulationOutput>
where
    S: SystemUnderTest + ?Sized,
{
    if targets.is_empty() {
        return Err(Error::Input("no targets to simulate".into()));
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(Error::Input(format!("noise sigma must be finite and >= 0, got {}", cfg.noise_sigma)));
    }
    if let Some(t) = targets.iter().find(|t| !catalog.contains(t)) {
        return Err(Error::NotFound(format!("target `{t}` is not in the catalog")));
    }
    if simulator.is_meta() {
        if judgments.is_empty() {
            return Err(Error::Input(format!("`{simulator}` needs relevance judgments")));
        }
        if let Some(t) = targets.iter().find(|t| judgments.judgments(t).is_none()) {
            return Err(Error::Input(format!("target `{t}` has no judgments")));
        }
    }
    let include_alternatives = include_alternatives.unwrap_or(simulator.is_meta());
    let seeds = SeedTree::new(cfg.master_seed);
    let ctx = DialogContext {
        run_id: &cfg.run_id,
        sut_spec,
        catalog,
        judgments,
        max_turns: cfg.max_turns,
        include_alternatives,
        seed: cfg.master_seed,
    };
    let one = |target: &ItemId| -> Result<Transcript> {
        let [sut_name, critique_name, switch_name] = stream_names(&cfg.run_id, target);
        let base = SyntheticCritiquer::new(catalog, cfg.noise_sigma, seeds.derive_u64(&critique_name));
        let streams = DialogStreams {
            sut: seeds.stream(&sut_name),
            switch: seeds.stream(&switch_name),
        };
        run_dialog(&ctx, sut, simulator, &base, target, streams)
    };
    let transcripts: Vec<Transcript> = match cfg.threads {
        1 => targets.iter().map(one).collect::<Result<_>>()?,
        0 => targets.par_iter().map(one).collect::<Result<_>>()?,
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Input(format!("thread pool: {e}")))?
            .install(|| targets.par_iter().map(one).collect::<Result<_>>())?,
    };
    let report = aggregate(&transcripts, judgments, include_alternatives, cfg.cutoff, cfg.max_turns)?;
    Ok(SimulationOutput { transcripts, report })
}

/// The default simulator grid: the base simulator, MetaSimTol at each
/// tolerance, and MetaSimProb at each (tolerance, probability) pair.
pub fn simulator_grid(tolerances: &[usize], probabilities: &[f64]) -> Result<Vec<SimulatorSpec>> {
    if tolerances.is_empty() || probabilities.is_empty() {
        return Err(Error::Input("tolerance and probability grids must be non-empty".into()));
    }
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Input(format!("switch probability {p} outside [0, 1]")));
    }
    let mut grid = vec![SimulatorSpec::Base];
    grid.extend(tolerances.iter().map(|&tolerance| SimulatorSpec::Tolerance {
        tolerance,
        max_switches: None,
    }));
    for &tolerance in tolerances {
        grid.extend(probabilities.iter().map(|&p_switch| SimulatorSpec::GainLoss {
            tolerance,
            p_switch,
            max_switches: None,
        }));
    }
    Ok(grid)
}
