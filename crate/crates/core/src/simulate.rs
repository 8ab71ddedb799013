//! Simulated users.
//!
//! A [`BaseSimulator`] critiques the currently top-ranked item against a
//! single target. The meta-simulators wrap a base simulator and may move the
//! user's target to a judged alternative:
//!
//! * tolerance-based: once the turn exceeds the user's patience, the target
//!   becomes whichever member of `{original target} ∪ alternatives` is most
//!   similar to the current top-ranked item;
//! * gain-loss: past the tolerance, a drop in similarity between the current
//!   and the previous top-ranked item (a perceived loss) triggers the same
//!   re-selection with probability `p_switch`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::catalog::{dot, normalized, Catalog, ItemId};
use crate::error::{Error, Result};
use crate::judgments::{relevant_set, JudgmentSet};
use crate::rng::{SeedTree, SimRng};

/// Feedback on the top-ranked item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critique {
    /// Unit-norm feedback direction, or all zeros when the user is satisfied.
    pub direction: Vec<f64>,
    pub satisfied: bool,
    pub text: Option<String>,
}

impl Critique {
    pub fn satisfied(dim: usize) -> Self {
        Self {
            direction: vec![0.0; dim],
            satisfied: true,
            text: Some("that's the one".into()),
        }
    }
}

/// Renders the two dominant components of a direction, e.g. `more f3, less f0`.
fn render_direction(direction: &[f64]) -> String {
    let mut idx: Vec<usize> = (0..direction.len()).collect();
    idx.sort_by(|&a, &b| direction[b].abs().total_cmp(&direction[a].abs()).then(a.cmp(&b)));
    idx.iter()
        .take(2)
        .map(|&i| {
            let word = if direction[i] >= 0.0 { "more" } else { "less" };
            format!("{word} f{i}")
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Synthetic stand-in for a learned relative captioner: the direction from
/// the top-ranked item towards the target, perturbed by isotropic Gaussian
/// noise and normalised.
pub fn synthetic_critique<R: Rng + ?Sized>(
    catalog: &Catalog,
    top1: &ItemId,
    target: &ItemId,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Critique> {
    let t = catalog.embedding(target)?;
    let c = catalog.embedding(top1)?;
    if top1 == target {
        return Ok(Critique::satisfied(catalog.dim()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Input(format!("noise sigma must be finite and >= 0, got {noise_sigma}")));
    }
    let mut diff: Vec<f64> = t.iter().zip(c).map(|(a, b)| a - b).collect();
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
        for x in diff.iter_mut() {
            *x += normal.sample(rng);
        }
    }
    let direction = normalized(&diff)
        .ok_or_else(|| Error::Degenerate(format!("critique of `{top1}` towards `{target}` is zero")))?;
    let text = Some(render_direction(&direction));
    Ok(Critique {
        direction,
        satisfied: false,
        text,
    })
}

/// A single-target critiquing user.
pub trait BaseSimulator {
    /// Critique `top1` relative to `target` at `turn`. Must be deterministic
    /// in its arguments and the simulator's own seed.
    fn critique(&self, turn: usize, top1: &ItemId, target: &ItemId) -> Result<Critique>;
}

/// [`BaseSimulator`] backed by [`synthetic_critique`]. The noise for a call
/// is drawn from a stream keyed by `(seed, turn, top1, target)`.
#[derive(Debug, Clone)]
pub struct SyntheticCritiquer<'a> {
    catalog: &'a Catalog,
    noise_sigma: f64,
    seeds: SeedTree,
}

impl<'a> SyntheticCritiquer<'a> {
    pub fn new(catalog: &'a Catalog, noise_sigma: f64, seed: u64) -> Self {
        Self {
            catalog,
            noise_sigma,
            seeds: SeedTree::new(seed),
        }
    }
}

impl BaseSimulator for SyntheticCritiquer<'_> {
    fn critique(&self, turn: usize, top1: &ItemId, target: &ItemId) -> Result<Critique> {
        let mut rng = self.seeds.stream(&format!("critique/{turn}/{top1}/{target}"));
        synthetic_critique(self.catalog, top1, target, self.noise_sigma, &mut rng)
    }
}

/// Which user model drives a dialog. String forms: `simbase`,
/// `metasimtol:tol=<k>`, `metasimprob:tol=<k>,p=<x>`; either meta form also
/// accepts `max_switches=<n>`.
#[derive(Debug, Clone, PartialEq)]
pub enum SimulatorSpec {
    Base,
    Tolerance {
        tolerance: usize,
        max_switches: Option<usize>,
    },
    GainLoss {
        tolerance: usize,
        p_switch: f64,
        max_switches: Option<usize>,
    },
}

impl SimulatorSpec {
    pub fn is_meta(&self) -> bool {
        !matches!(self, SimulatorSpec::Base)
    }

    pub fn tolerance(&self) -> Option<usize> {
        match self {
            SimulatorSpec::Base => None,
            SimulatorSpec::Tolerance { tolerance, .. } | SimulatorSpec::GainLoss { tolerance, .. } => {
                Some(*tolerance)
            }
        }
    }
}

impl fmt::Display for SimulatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let max = |m: &Option<usize>| m.map(|n| format!(",max_switches={n}")).unwrap_or_default();
        match self {
            SimulatorSpec::Base => write!(f, "simbase"),
            SimulatorSpec::Tolerance {
                tolerance,
                max_switches,
            } => write!(f, "metasimtol:tol={tolerance}{}", max(max_switches)),
            SimulatorSpec::GainLoss {
                tolerance,
                p_switch,
                max_switches,
            } => write!(f, "metasimprob:tol={tolerance},p={p_switch}{}", max(max_switches)),
        }
    }
}

impl FromStr for SimulatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Input(format!("bad simulator spec {s:?}: {why}"));
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let mut tol = None;
        let mut p = None;
        let mut max_switches = None;
        for kv in params.split(',').filter(|kv| !kv.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            match k {
                "tol" => tol = Some(v.parse::<usize>().map_err(|_| bad("tol must be a turn count"))?),
                "p" => p = Some(v.parse::<f64>().map_err(|_| bad("p must be a number"))?),
                "max_switches" => {
                    max_switches = Some(v.parse::<usize>().map_err(|_| bad("max_switches must be a count"))?)
                }
                _ => return Err(bad(&format!("unknown parameter `{k}`"))),
            }
        }
        match kind {
            "simbase" if params.is_empty() => Ok(SimulatorSpec::Base),
            "metasimtol" if p.is_none() => Ok(SimulatorSpec::Tolerance {
                tolerance: tol.ok_or_else(|| bad("missing tol"))?,
                max_switches,
            }),
            "metasimprob" => {
                let p_switch = p.ok_or_else(|| bad("missing p"))?;
                if !(0.0..=1.0).contains(&p_switch) {
                    return Err(bad("p must lie in [0, 1]"));
                }
                Ok(SimulatorSpec::GainLoss {
                    tolerance: tol.ok_or_else(|| bad("missing tol"))?,
                    p_switch,
                    max_switches,
                })
            }
            _ => Err(bad("unknown simulator or unexpected parameters")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub turn: usize,
    pub from: ItemId,
    pub to: ItemId,
}

/// Per-dialog state of a simulated user.
#[derive(Debug, Clone)]
pub struct SimulatorState {
    pub user_id: String,
    pub original_target: ItemId,
    pub current_target: ItemId,
    pub tolerance: usize,
    /// Only consulted by the gain-loss simulator.
    pub p_switch: f64,
    pub max_switches: Option<usize>,
    pub prev_top1: Option<ItemId>,
    pub switch_events: Vec<SwitchEvent>,
    pub rng: SimRng,
}

impl SimulatorState {
    pub fn new(user_id: impl Into<String>, target: ItemId, spec: &SimulatorSpec, rng: SimRng) -> Self {
        let (tolerance, p_switch, max_switches) = match *spec {
            SimulatorSpec::Base => (usize::MAX, 0.0, None),
            SimulatorSpec::Tolerance {
                tolerance,
                max_switches,
            } => (tolerance, 0.0, max_switches),
            SimulatorSpec::GainLoss {
                tolerance,
                p_switch,
                max_switches,
            } => (tolerance, p_switch, max_switches),
        };
        Self {
            user_id: user_id.into(),
            original_target: target.clone(),
            current_target: target,
            tolerance,
            p_switch,
            max_switches,
            prev_top1: None,
            switch_events: Vec::new(),
            rng,
        }
    }

    fn may_switch(&self) -> bool {
        self.max_switches.is_none_or(|m| self.switch_events.len() < m)
    }

    fn retarget(&mut self, turn: usize, to: ItemId) {
        if to != self.current_target {
            let from = std::mem::replace(&mut self.current_target, to.clone());
            self.switch_events.push(SwitchEvent { turn, from, to });
        }
    }
}

/// The member of `{target} ∪ alternatives(target)` most similar to `top1`;
/// ties go to the smallest id.
pub fn select_alternative(j: &JudgmentSet, catalog: &Catalog, target: &ItemId, top1: &ItemId) -> Result<ItemId> {
    let anchor = catalog.unit_embedding(top1)?;
    let mut best: Option<(f64, ItemId)> = None;
    for alt in relevant_set(j, target, true) {
        // Judged items missing from the catalog cannot be critiqued towards.
        let Ok(u) = catalog.unit_embedding(&alt) else {
            continue;
        };
        let s = dot(anchor, u);
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, alt));
        }
    }
    best.map(|(_, id)| id)
        .ok_or_else(|| Error::NotFound(target.to_string()))
}

/// Tolerance-based meta-simulator turn.
pub fn meta_tol_critique<B: BaseSimulator + ?Sized>(
    state: &mut SimulatorState,
    base: &B,
    j: &JudgmentSet,
    catalog: &Catalog,
    turn: usize,
    top1: &ItemId,
) -> Result<Critique> {
    check_turn(turn)?;
    if turn > state.tolerance && state.may_switch() {
        let alt = select_alternative(j, catalog, &state.original_target, top1)?;
        state.retarget(turn, alt);
    }
    base.critique(turn, top1, &state.current_target)
}

/// Gain-loss meta-simulator turn. The uniform draw for the switch guard is
/// taken from the state's stream, and only when a loss was perceived.
pub fn meta_prob_critique<B: BaseSimulator + ?Sized>(
    state: &mut SimulatorState,
    base: &B,
    j: &JudgmentSet,
    catalog: &Catalog,
    turn: usize,
    top1: &ItemId,
) -> Result<Critique> {
    meta_prob_critique_with(state, base, j, catalog, turn, top1, None)
}

/// As [`meta_prob_critique`], with an optional fixed value for the draw.
pub(crate) fn meta_prob_critique_with<B: BaseSimulator + ?Sized>(
    state: &mut SimulatorState,
    base: &B,
    j: &JudgmentSet,
    catalog: &Catalog,
    turn: usize,
    top1: &ItemId,
    draw: Option<f64>,
) -> Result<Critique> {
    check_turn(turn)?;
    if turn > state.tolerance && state.may_switch() {
        if let Some(prev) = state.prev_top1.clone() {
            let delta = catalog.similarity(top1, &state.current_target)?
                - catalog.similarity(&prev, &state.current_target)?;
            if delta < 0.0 {
                let u = draw.unwrap_or_else(|| state.rng.random::<f64>());
                if u < state.p_switch {
                    let alt = select_alternative(j, catalog, &state.original_target, top1)?;
                    state.retarget(turn, alt);
                }
            }
        }
    }
    state.prev_top1 = Some(top1.clone());
    base.critique(turn, top1, &state.current_target)
}

/// One simulated-user turn under `spec`.
pub fn critique_turn<B: BaseSimulator + ?Sized>(
    spec: &SimulatorSpec,
    state: &mut SimulatorState,
    base: &B,
    j: &JudgmentSet,
    catalog: &Catalog,
    turn: usize,
    top1: &ItemId,
) -> Result<Critique> {
    match spec {
        SimulatorSpec::Base => {
            check_turn(turn)?;
            base.critique(turn, top1, &state.current_target)
        }
        SimulatorSpec::Tolerance { .. } => meta_tol_critique(state, base, j, catalog, turn, top1),
        SimulatorSpec::GainLoss { .. } => meta_prob_critique(state, base, j, catalog, turn, top1),
    }
}

fn check_turn(turn: usize) -> Result<()> {
    if turn == 0 {
        return Err(Error::Input("turns are numbered from 1".into()));
    }
    Ok(())
}
