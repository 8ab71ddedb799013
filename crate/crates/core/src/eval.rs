//! Dialog loop, per-turn ranking metrics and run-level aggregation.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ItemId};
use crate::error::{Error, Result};
use crate::judgments::{relevant_set, JudgmentSet};
use crate::rng::SimRng;
use crate::simulate::{critique_turn, BaseSimulator, SimulatorSpec, SimulatorState, SwitchEvent};
use crate::systems::SystemUnderTest;

pub const DEFAULT_CUTOFF: usize = 10;
pub const DEFAULT_MAX_TURNS: usize = 10;

/// SR@1, NDCG@cutoff and MRR@cutoff for one ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnScores {
    pub sr1: f64,
    pub ndcg10: f64,
    pub mrr10: f64,
}

impl TurnScores {
    pub const PERFECT: TurnScores = TurnScores {
        sr1: 1.0,
        ndcg10: 1.0,
        mrr10: 1.0,
    };
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Binary-gain ranking metrics of `ranking` against `relevant`.
pub fn turn_metrics(ranking: &[ItemId], relevant: &BTreeSet<ItemId>, cutoff: usize) -> Result<TurnScores> {
    if relevant.is_empty() {
        return Err(Error::Input("relevant set is empty".into()));
    }
    if ranking.is_empty() {
        return Err(Error::Input("ranking is empty".into()));
    }
    if cutoff == 0 {
        return Err(Error::Input("cutoff must be at least 1".into()));
    }
    let mut seen = HashSet::with_capacity(ranking.len());
    if let Some(dup) = ranking.iter().find(|i| !seen.insert(*i)) {
        return Err(Error::Input(format!("ranking repeats `{dup}`")));
    }
    let sr1 = if relevant.contains(&ranking[0]) { 1.0 } else { 0.0 };
    let mut dcg = 0.0;
    let mut mrr = 0.0;
    for (i, item) in ranking.iter().take(cutoff).enumerate() {
        if relevant.contains(item) {
            dcg += discount(i + 1);
            if mrr == 0.0 {
                mrr = 1.0 / (i + 1) as f64;
            }
        }
    }
    let idcg: f64 = (1..=relevant.len().min(cutoff)).map(discount).sum();
    Ok(TurnScores {
        sr1,
        ndcg10: dcg / idcg,
        mrr10: mrr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub ranking: Vec<ItemId>,
    pub current_target: ItemId,
    pub switch_event: Option<SwitchEvent>,
    pub satisfied: bool,
}

/// Everything that happened in one simulated dialog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub run_id: String,
    pub target_id: ItemId,
    pub simulator_spec: String,
    pub sut_spec: String,
    pub seed: u64,
    pub turns: Vec<TurnRecord>,
}

impl Transcript {
    /// Turn at which the user was satisfied, if any.
    pub fn success_turn(&self) -> Option<usize> {
        self.turns.iter().find(|t| t.satisfied).map(|t| t.turn)
    }
}

/// Shared, read-only inputs of a dialog.
#[derive(Debug, Clone, Copy)]
pub struct DialogContext<'a> {
    pub run_id: &'a str,
    pub sut_spec: &'a str,
    pub catalog: &'a Catalog,
    pub judgments: &'a JudgmentSet,
    pub max_turns: usize,
    /// Count judged alternatives as successes, not just the target.
    pub include_alternatives: bool,
    pub seed: u64,
}

/// Random streams owned by one dialog.
#[derive(Debug, Clone)]
pub struct DialogStreams {
    pub sut: SimRng,
    pub switch: SimRng,
}

/// Runs one dialog: the system ranks, the dialog stops if the top item is
/// relevant, otherwise the user critiques it and the system re-ranks, for at
/// most `max_turns` turns.
pub fn run_dialog<S, B>(
    ctx: &DialogContext<'_>,
    sut: &S,
    simulator: &SimulatorSpec,
    base: &B,
    target: &ItemId,
    streams: DialogStreams,
) -> Result<Transcript>
where
    S: SystemUnderTest + ?Sized,
    B: BaseSimulator + ?Sized,
{
    if !ctx.catalog.contains(target) {
        return Err(Error::NotFound(target.to_string()));
    }
    if ctx.max_turns == 0 {
        return Err(Error::Input("max_turns must be at least 1".into()));
    }
    let DialogStreams { sut: mut sut_rng, switch } = streams;
    let relevant = relevant_set(ctx.judgments, target, ctx.include_alternatives);
    let mut user = SimulatorState::new(target.as_str(), target.clone(), simulator, switch);
    let (mut ranking, mut sut_state) = sut.initial_rank(ctx.catalog, &mut sut_rng)?;
    let mut turns = Vec::with_capacity(ctx.max_turns);

    for turn in 1..=ctx.max_turns {
        let top1 = ranking
            .first()
            .cloned()
            .ok_or_else(|| Error::Input(format!("system returned an empty ranking at turn {turn}")))?;
        if relevant.contains(&top1) {
            turns.push(TurnRecord {
                turn,
                ranking,
                current_target: user.current_target.clone(),
                switch_event: None,
                satisfied: true,
            });
            break;
        }
        let last = turn == ctx.max_turns;
        let mut switch_event = None;
        let critique = if last {
            None
        } else {
            let before = user.switch_events.len();
            let c = critique_turn(simulator, &mut user, base, ctx.judgments, ctx.catalog, turn, &top1)?;
            if user.switch_events.len() > before {
                switch_event = user.switch_events.last().cloned();
            }
            Some(c)
        };
        let shown = match &critique {
            Some(c) => {
                let (next, next_state) = sut.rank(ctx.catalog, &sut_state, c, &mut sut_rng)?;
                sut_state = next_state;
                std::mem::replace(&mut ranking, next)
            }
            None => std::mem::take(&mut ranking),
        };
        turns.push(TurnRecord {
            turn,
            ranking: shown,
            current_target: user.current_target.clone(),
            switch_event,
            satisfied: false,
        });
    }
    Ok(Transcript {
        run_id: ctx.run_id.to_string(),
        target_id: target.clone(),
        simulator_spec: simulator.to_string(),
        sut_spec: ctx.sut_spec.to_string(),
        seed: ctx.seed,
        turns,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub turn: usize,
    pub sr1: f64,
    pub ndcg10: f64,
    pub mrr10: f64,
}

impl MetricRow {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Sr1 => self.sr1,
            Metric::Ndcg10 => self.ndcg10,
            Metric::Mrr10 => self.mrr10,
        }
    }
}

/// Per-turn means over targets for one (system, simulator) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub simulator_spec: String,
    pub sut_spec: String,
    pub per_turn: Vec<MetricRow>,
    pub n_targets: usize,
    pub include_alternatives: bool,
}

impl RunReport {
    pub fn at_turn(&self, turn: usize) -> Option<&MetricRow> {
        self.per_turn.iter().find(|r| r.turn == turn)
    }

    pub fn final_row(&self) -> Option<&MetricRow> {
        self.per_turn.last()
    }
}

/// Averages per-turn metrics over dialogs. From the turn a dialog succeeded
/// onwards, all three metrics count as 1; earlier turns are scored against
/// the target's relevant set.
pub fn aggregate(
    transcripts: &[Transcript],
    j: &JudgmentSet,
    include_alternatives: bool,
    cutoff: usize,
    max_turns: usize,
) -> Result<RunReport> {
    let first = transcripts
        .first()
        .ok_or_else(|| Error::Input("no transcripts to aggregate".into()))?;
    if max_turns == 0 {
        return Err(Error::Input("max_turns must be at least 1".into()));
    }
    // A fixed summation order makes the means independent of input order.
    let mut ordered: Vec<&Transcript> = transcripts.iter().collect();
    ordered.sort_by(|a, b| a.target_id.cmp(&b.target_id).then(a.run_id.cmp(&b.run_id)));

    let mut sums = vec![(0.0, 0.0, 0.0); max_turns];
    for tr in ordered {
        if tr.turns.len() > max_turns {
            return Err(Error::Input(format!(
                "transcript for `{}` has {} turns, more than {max_turns}",
                tr.target_id,
                tr.turns.len()
            )));
        }
        let relevant = relevant_set(j, &tr.target_id, include_alternatives);
        let success = tr.success_turn();
        for (t, sum) in sums.iter_mut().enumerate() {
            let turn = t + 1;
            let scores = match success {
                Some(s) if s <= turn => TurnScores::PERFECT,
                _ => {
                    let rec = tr.turns.get(t).ok_or_else(|| {
                        Error::Input(format!(
                            "transcript for `{}` stops at turn {} without success",
                            tr.target_id,
                            tr.turns.len()
                        ))
                    })?;
                    turn_metrics(&rec.ranking, &relevant, cutoff)?
                }
            };
            sum.0 += scores.sr1;
            sum.1 += scores.ndcg10;
            sum.2 += scores.mrr10;
        }
    }
    let n = transcripts.len() as f64;
    Ok(RunReport {
        simulator_spec: first.simulator_spec.clone(),
        sut_spec: first.sut_spec.clone(),
        per_turn: sums
            .into_iter()
            .enumerate()
            .map(|(t, (a, b, c))| MetricRow {
                turn: t + 1,
                sr1: a / n,
                ndcg10: b / n,
                mrr10: c / n,
            })
            .collect(),
        n_targets: transcripts.len(),
        include_alternatives,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Sr1,
    Ndcg10,
    Mrr10,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Sr1 => "sr1",
            Metric::Ndcg10 => "ndcg10",
            Metric::Mrr10 => "mrr10",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sr1" => Ok(Metric::Sr1),
            "ndcg10" => Ok(Metric::Ndcg10),
            "mrr10" => Ok(Metric::Mrr10),
            _ => Err(Error::Input(format!("unknown metric {s:?}"))),
        }
    }
}

/// Percentage by which the best meta-simulator report beats the base report
/// on `metric` at `turn`.
pub fn improvement(base: &RunReport, metas: &[RunReport], metric: Metric, turn: usize) -> Result<f64> {
    let value = |r: &RunReport| {
        r.at_turn(turn)
            .map(|row| row.get(metric))
            .ok_or_else(|| Error::Input(format!("report `{}` has no turn {turn}", r.simulator_spec)))
    };
    let base_value = value(base)?;
    let mut best: Option<f64> = None;
    for m in metas {
        if m.sut_spec != base.sut_spec || m.n_targets != base.n_targets {
            return Err(Error::Input(format!(
                "report `{}` is not comparable with the base report",
                m.simulator_spec
            )));
        }
        let v = value(m)?;
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    }
    let best = best.ok_or_else(|| Error::Input("no meta-simulator reports to compare".into()))?;
    if base_value == 0.0 {
        return Err(Error::Undefined(format!("improvement: base {metric} is 0 at turn {turn}")));
    }
    Ok(100.0 * (best - base_value) / base_value)
}

pub const REPORT_HEADER: [&str; 7] = ["simulator", "sut", "turn", "sr1", "ndcg10", "mrr10", "n_targets"];

/// Serialises a report as CSV. Floats use the shortest exact representation.
pub fn report_to_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Input(format!("csv: {e}"));
    w.write_record(REPORT_HEADER).map_err(csv_err)?;
    for row in &report.per_turn {
        w.write_record([
            report.simulator_spec.clone(),
            report.sut_spec.clone(),
            row.turn.to_string(),
            format!("{:?}", row.sr1),
            format!("{:?}", row.ndcg10),
            format!("{:?}", row.mrr10),
            report.n_targets.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn save_report(path: &Path, report: &RunReport) -> Result<()> {
    write_file(path, report_to_csv(report)?.as_bytes())
}

/// Reads a report CSV. The evaluation mode is inferred from the simulator:
/// meta-simulator runs are scored with alternatives.
pub fn load_report(path: &Path) -> Result<RunReport> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let headers = r
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != REPORT_HEADER {
        return Err(Error::parse(path, 1, format!("unexpected header {headers:?}")));
    }
    let mut report: Option<RunReport> = None;
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            rec[k].parse().map_err(|_| Error::parse(path, line, format!("bad number {:?}", &rec[k])))
        };
        let int = |k: usize| -> Result<usize> {
            rec[k].parse().map_err(|_| Error::parse(path, line, format!("bad count {:?}", &rec[k])))
        };
        let row = MetricRow {
            turn: int(2)?,
            sr1: num(3)?,
            ndcg10: num(4)?,
            mrr10: num(5)?,
        };
        let n_targets = int(6)?;
        let rep = report.get_or_insert_with(|| RunReport {
            simulator_spec: rec[0].to_string(),
            sut_spec: rec[1].to_string(),
            per_turn: Vec::new(),
            n_targets,
            include_alternatives: rec[0]
                .parse::<SimulatorSpec>()
                .map(|s| s.is_meta())
                .unwrap_or(false),
        });
        if rep.simulator_spec != rec[0] || rep.sut_spec != rec[1] || rep.n_targets != n_targets {
            return Err(Error::parse(path, line, "report mixes runs"));
        }
        rep.per_turn.push(row);
    }
    report.ok_or_else(|| Error::parse(path, 1, "report has no rows"))
}

pub fn save_transcripts(path: &Path, transcripts: &[Transcript]) -> Result<()> {
    let mut out = Vec::new();
    for t in transcripts {
        serde_json::to_writer(&mut out, t)?;
        out.push(b'\n');
    }
    write_file(path, &out)
}

pub fn load_transcripts(path: &Path) -> Result<Vec<Transcript>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
        .collect()
}

/// Writes via a temporary sibling and a rename, so readers never observe a
/// partially written file.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(format!("creating {}", tmp.display()), e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{Critique, SyntheticCritiquer};
    use crate::systems::{GreedyRanker, RandomRanker};
    use rand::SeedableRng;

    fn id(s: &str) -> ItemId {
        ItemId::new(s).unwrap()
    }

    fn ids(v: &[&str]) -> Vec<ItemId> {
        v.iter().map(|s| id(s)).collect()
    }

    fn set(v: &[&str]) -> BTreeSet<ItemId> {
        v.iter().map(|s| id(s)).collect()
    }

    #[test]
    fn perfect_first_rank() {
        let m = turn_metrics(&ids(&["t", "a", "b"]), &set(&["t"]), 10).unwrap();
        assert_eq!(m, TurnScores::PERFECT);
    }

    #[test]
    fn single_relevant_at_rank_three() {
        let m = turn_metrics(&ids(&["a", "b", "t", "c"]), &set(&["t"]), 10).unwrap();
        assert_eq!(m.sr1, 0.0);
        assert!((m.mrr10 - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.ndcg10 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn alternatives_can_lower_ndcg() {
        let ranking = ids(&["t", "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9", "a1"]);
        let with_alts = turn_metrics(&ranking, &set(&["t", "a1", "a2", "a3"]), 10).unwrap();
        // IDCG = 1 + 0.6309 + 0.5 + 0.4307
        assert!((with_alts.ndcg10 - 1.0 / 2.5616).abs() < 1e-3);
        let alone = turn_metrics(&ranking, &set(&["t"]), 10).unwrap();
        assert_eq!(alone.ndcg10, 1.0);
        assert!(with_alts.ndcg10 < alone.ndcg10);
        assert_eq!(with_alts.mrr10, alone.mrr10);
    }

    #[test]
    fn relevant_beyond_cutoff_scores_zero() {
        let ranking: Vec<ItemId> = (0..12).map(|i| id(&format!("x{i}"))).collect();
        let m = turn_metrics(&ranking, &set(&["x11"]), 10).unwrap();
        assert_eq!((m.sr1, m.ndcg10, m.mrr10), (0.0, 0.0, 0.0));
    }

    #[test]
    fn metric_input_errors() {
        assert!(turn_metrics(&ids(&["a"]), &BTreeSet::new(), 10).is_err());
        assert!(turn_metrics(&[], &set(&["a"]), 10).is_err());
        assert!(turn_metrics(&ids(&["a", "a"]), &set(&["a"]), 10).is_err());
    }

    fn line_catalog() -> Catalog {
        Catalog::new(
            "t",
            2,
            (0..30).map(|i| {
                let a = i as f64 * 0.2;
                (id(&format!("i{i:02}")), vec![a.cos(), a.sin()])
            }),
        )
        .unwrap()
    }

    fn ctx<'a>(c: &'a Catalog, j: &'a JudgmentSet, alts: bool) -> DialogContext<'a> {
        DialogContext {
            run_id: "r",
            sut_spec: "test",
            catalog: c,
            judgments: j,
            max_turns: 10,
            include_alternatives: alts,
            seed: 1,
        }
    }

    fn streams(seed: u64) -> DialogStreams {
        DialogStreams {
            sut: SimRng::seed_from_u64(seed),
            switch: SimRng::seed_from_u64(seed + 1),
        }
    }

    /// Always shows the same fixed ranking.
    struct Fixed(Vec<ItemId>);

    impl SystemUnderTest for Fixed {
        type State = ();
        fn initial_rank(&self, _: &Catalog, _: &mut SimRng) -> Result<(Vec<ItemId>, ())> {
            Ok((self.0.clone(), ()))
        }
        fn rank(&self, _: &Catalog, _: &(), _: &Critique, _: &mut SimRng) -> Result<(Vec<ItemId>, ())> {
            Ok((self.0.clone(), ()))
        }
    }

    #[test]
    fn immediate_success_is_one_turn() {
        let c = line_catalog();
        let j = JudgmentSet::default();
        let base = SyntheticCritiquer::new(&c, 0.0, 0);
        let sut = Fixed(ids(&["i05", "i01"]));
        let tr = run_dialog(&ctx(&c, &j, false), &sut, &SimulatorSpec::Base, &base, &id("i05"), streams(0)).unwrap();
        assert_eq!(tr.turns.len(), 1);
        assert!(tr.turns[0].satisfied);
        assert_eq!(tr.success_turn(), Some(1));
    }

    #[test]
    fn random_ranker_rarely_succeeds() {
        let items: Vec<(ItemId, Vec<f64>)> = (0..1000)
            .map(|i| {
                let a = i as f64 * 0.013;
                (id(&format!("i{i:04}")), vec![a.cos(), a.sin(), 1.0])
            })
            .collect();
        let c = Catalog::new("t", 3, items).unwrap();
        let j = JudgmentSet::default();
        let base = SyntheticCritiquer::new(&c, 0.1, 0);
        let sut = RandomRanker { k: 100 };
        let mut full = 0;
        for s in 0..20 {
            let tr = run_dialog(&ctx(&c, &j, false), &sut, &SimulatorSpec::Base, &base, &id("i0500"), streams(s)).unwrap();
            if tr.turns.len() == 10 && tr.success_turn().is_none() {
                full += 1;
            }
        }
        assert!(full >= 18, "{full}");
    }

    #[test]
    fn greedy_noiseless_fixture_succeeds_quickly() {
        // query starts near `start`; one critique towards `target` makes it the argmax
        let c = Catalog::new(
            "t",
            3,
            vec![
                (id("start"), vec![1.0, 0.0, 0.0]),
                (id("target"), vec![0.0, 0.0, 1.0]),
                (id("side"), vec![0.0, 1.0, 0.0]),
                (id("mix"), vec![0.7, 0.7, 0.0]),
            ],
        )
        .unwrap();
        let j = JudgmentSet::default();
        let base = SyntheticCritiquer::new(&c, 0.0, 0);
        let sut = GreedyRanker { eta: 1.0, k: 4 };
        // find a stream whose initial query puts `start` first
        let s = (0..200)
            .find(|&s| sut.initial_rank(&c, &mut SimRng::seed_from_u64(s)).unwrap().0[0] == id("start"))
            .expect("some seed starts at `start`");
        let tr = run_dialog(&ctx(&c, &j, false), &sut, &SimulatorSpec::Base, &base, &id("target"), streams(s)).unwrap();
        assert!(tr.success_turn().is_some_and(|t| t <= 3), "{tr:?}");
    }

    fn transcript(target: &str, rankings: &[&[&str]], success: Option<usize>) -> Transcript {
        let mut turns: Vec<TurnRecord> = rankings
            .iter()
            .enumerate()
            .map(|(i, r)| TurnRecord {
                turn: i + 1,
                ranking: ids(r),
                current_target: id(target),
                switch_event: None,
                satisfied: false,
            })
            .collect();
        if let Some(s) = success {
            turns.truncate(s);
            turns[s - 1].satisfied = true;
        }
        Transcript {
            run_id: "r".into(),
            target_id: id(target),
            simulator_spec: "simbase".into(),
            sut_spec: "test".into(),
            seed: 0,
            turns,
        }
    }

    #[test]
    fn aggregate_pins_after_success() {
        let j = JudgmentSet::default();
        let miss: &[&str] = &["x", "y", "t"];
        let hit: &[&str] = &["t", "x"];
        let tr = transcript("t", &[miss, miss, miss, hit], Some(4));
        let rep = aggregate(&[tr], &j, false, 10, 10).unwrap();
        assert_eq!(rep.per_turn.len(), 10);
        for row in &rep.per_turn[..3] {
            assert!((row.mrr10 - 1.0 / 3.0).abs() < 1e-12);
        }
        for row in &rep.per_turn[3..] {
            assert_eq!((row.sr1, row.ndcg10, row.mrr10), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn aggregate_all_immediate_successes() {
        let j = JudgmentSet::default();
        let trs: Vec<Transcript> = ["a", "b", "c"]
            .iter()
            .map(|t| transcript(t, &[&[t]], Some(1)))
            .collect();
        let rep = aggregate(&trs, &j, false, 10, 10).unwrap();
        assert!(rep.per_turn.iter().all(|r| (r.sr1, r.ndcg10, r.mrr10) == (1.0, 1.0, 1.0)));
    }

    #[test]
    fn aggregate_means_over_targets() {
        let j = JudgmentSet::default();
        let five: &[&str] = &["x1", "x2", "x3", "x4", "a"];
        let fourish: &[&str] = &["y1", "b", "y3"];
        let a = transcript("a", &[five], None);
        // mrr 0.5 for b; we want 0.2 and 0.4 - use rank 5 and rank 2.5 is impossible,
        // so compare against a hand mean instead
        let b = transcript("b", &[fourish], None);
        let rep = aggregate(&[a.clone(), b.clone()], &j, false, 10, 1).unwrap();
        assert!((rep.per_turn[0].mrr10 - (0.2 + 0.5) / 2.0).abs() < 1e-12);
        let swapped = aggregate(&[b, a], &j, false, 10, 1).unwrap();
        assert_eq!(rep, swapped);
        assert!(aggregate(&[], &j, false, 10, 10).is_err());
    }

    #[test]
    fn aggregate_rejects_truncated_failures() {
        let j = JudgmentSet::default();
        let tr = transcript("t", &[&["x"]], None);
        assert!(aggregate(&[tr], &j, false, 10, 3).is_err());
    }

    fn report(sim: &str, mrr: f64) -> RunReport {
        RunReport {
            simulator_spec: sim.into(),
            sut_spec: "greedy:eta=1".into(),
            per_turn: vec![MetricRow {
                turn: 10,
                sr1: mrr / 2.0,
                ndcg10: mrr,
                mrr10: mrr,
            }],
            n_targets: 50,
            include_alternatives: sim != "simbase",
        }
    }

    #[test]
    fn improvement_examples() {
        let base = report("simbase", 0.2);
        let v = improvement(&base, &[report("metasimtol:tol=1", 0.3)], Metric::Mrr10, 10).unwrap();
        assert!((v - 50.0).abs() < 1e-9);
        let v = improvement(
            &base,
            &[report("metasimtol:tol=1", 0.25), report("metasimtol:tol=2", 0.3)],
            Metric::Mrr10,
            10,
        )
        .unwrap();
        assert!((v - 50.0).abs() < 1e-9);
        let v = improvement(&base, &[report("metasimtol:tol=1", 0.1)], Metric::Mrr10, 10).unwrap();
        assert!(v < 0.0);
        let zero = report("simbase", 0.0);
        assert!(matches!(
            improvement(&zero, &[report("metasimtol:tol=1", 0.1)], Metric::Mrr10, 10),
            Err(Error::Undefined(_))
        ));
        assert!(improvement(&base, &[], Metric::Mrr10, 10).is_err());
    }

    #[test]
    fn report_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rep = report("metasimprob:tol=2,p=0.75", 1.0 / 3.0);
        save_report(&path, &rep).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("simulator,sut,turn,sr1,ndcg10,mrr10,n_targets\n\"metasimprob:tol=2,p=0.75\""));
        assert_eq!(load_report(&path).unwrap(), rep);
    }

    #[test]
    fn transcripts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let trs = vec![transcript("t", &[&["x", "t"], &["t"]], Some(2))];
        save_transcripts(&path, &trs).unwrap();
        assert_eq!(load_transcripts(&path).unwrap(), trs);
    }
}
