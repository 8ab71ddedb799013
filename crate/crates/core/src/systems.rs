//! Systems under test: conversational rankers that turn critiques into
//! rankings, plus the reference implementations used for desk-scale runs.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::catalog::{normalized, Catalog, ItemId};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::simulate::Critique;

pub const DEFAULT_K: usize = 100;

/// A conversational recommender being evaluated.
///
/// Rankings have `min(K, |catalog|)` distinct items and must be
/// deterministic given the state, the critique and the random stream.
pub trait SystemUnderTest: Send + Sync {
    type State: Clone + Send;

    fn initial_rank(&self, catalog: &Catalog, rng: &mut SimRng) -> Result<(Vec<ItemId>, Self::State)>;

    fn rank(
        &self,
        catalog: &Catalog,
        state: &Self::State,
        critique: &Critique,
        rng: &mut SimRng,
    ) -> Result<(Vec<ItemId>, Self::State)>;
}

/// The greedy ranker's belief about what the user wants.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryState {
    pub query: Vec<f64>,
    pub learning_rate: f64,
}

impl QueryState {
    pub fn new(query: &[f64], learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(Error::Input(format!("learning rate must lie in (0, 1], got {learning_rate}")));
        }
        let query = normalized(query).ok_or_else(|| Error::Degenerate("zero query vector".into()))?;
        Ok(Self { query, learning_rate })
    }
}

/// Moves the query towards the critique direction and ranks the catalog by
/// cosine similarity to it. A satisfied critique leaves the query, and so
/// the ranking, unchanged.
pub fn greedy_vector_rank(
    state: &QueryState,
    critique: &Critique,
    catalog: &Catalog,
    k: usize,
) -> Result<(Vec<ItemId>, QueryState)> {
    if k == 0 {
        return Err(Error::Input("K must be at least 1".into()));
    }
    let next = if critique.satisfied {
        state.clone()
    } else {
        if critique.direction.len() != state.query.len() {
            return Err(Error::DimensionMismatch {
                expected: state.query.len(),
                got: critique.direction.len(),
            });
        }
        let moved: Vec<f64> = state
            .query
            .iter()
            .zip(&critique.direction)
            .map(|(q, d)| q + state.learning_rate * d)
            .collect();
        QueryState {
            query: normalized(&moved)
                .ok_or_else(|| Error::Degenerate("critique cancelled the query".into()))?,
            learning_rate: state.learning_rate,
        }
    };
    let ranking = catalog
        .rank_by_vector(&next.query, k)?
        .into_iter()
        .map(|(id, _)| id)
        .collect();
    Ok((ranking, next))
}

/// Uniformly shuffled catalog, truncated to `k`.
pub fn random_rank<R: Rng + ?Sized>(catalog: &Catalog, k: usize, rng: &mut R) -> Vec<ItemId> {
    let mut ids = catalog.ids().to_vec();
    let k = k.min(ids.len());
    let (head, _) = ids.partial_shuffle(rng, k);
    head.to_vec()
}

/// Draws a direction uniformly on the unit sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(u) = normalized(&v) {
            return u;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRanker {
    pub eta: f64,
    pub k: usize,
}

impl SystemUnderTest for GreedyRanker {
    type State = QueryState;

    fn initial_rank(&self, catalog: &Catalog, rng: &mut SimRng) -> Result<(Vec<ItemId>, QueryState)> {
        let state = QueryState::new(&random_unit_vector(catalog.dim(), rng), self.eta)?;
        let ranking = catalog
            .rank_by_vector(&state.query, self.k)?
            .into_iter()
            .map(|(id, _)| id)
            .collect();
        Ok((ranking, state))
    }

    fn rank(
        &self,
        catalog: &Catalog,
        state: &QueryState,
        critique: &Critique,
        _rng: &mut SimRng,
    ) -> Result<(Vec<ItemId>, QueryState)> {
        greedy_vector_rank(state, critique, catalog, self.k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomRanker {
    pub k: usize,
}

impl SystemUnderTest for RandomRanker {
    type State = ();

    fn initial_rank(&self, catalog: &Catalog, rng: &mut SimRng) -> Result<(Vec<ItemId>, ())> {
        Ok((random_rank(catalog, self.k, rng), ()))
    }

    fn rank(&self, catalog: &Catalog, _: &(), _: &Critique, rng: &mut SimRng) -> Result<(Vec<ItemId>, ())> {
        Ok((random_rank(catalog, self.k, rng), ()))
    }
}

/// One line of a replay file: the ranking shown at `turn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayTurn {
    pub turn: usize,
    pub ranking: Vec<ItemId>,
}

/// Replays precomputed per-turn rankings from an external system. Critiques
/// are ignored; once the recorded turns run out the last ranking repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRanker {
    turns: Vec<Vec<ItemId>>,
}

impl ReplayRanker {
    pub fn new(mut turns: Vec<ReplayTurn>) -> Result<Self> {
        turns.sort_by_key(|t| t.turn);
        for (i, t) in turns.iter().enumerate() {
            if t.turn != i + 1 {
                return Err(Error::Input(format!("replay turns must be 1..T, found turn {}", t.turn)));
            }
            if t.ranking.is_empty() {
                return Err(Error::Input(format!("replay turn {} has an empty ranking", t.turn)));
            }
        }
        if turns.is_empty() {
            return Err(Error::Input("replay has no turns".into()));
        }
        Ok(Self {
            turns: turns.into_iter().map(|t| t.ranking).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let turns = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
            .collect::<Result<Vec<ReplayTurn>>>()?;
        Self::new(turns)
    }

    fn at(&self, turn_index: usize) -> Vec<ItemId> {
        self.turns[turn_index.min(self.turns.len() - 1)].clone()
    }
}

impl SystemUnderTest for ReplayRanker {
    type State = usize;

    fn initial_rank(&self, _: &Catalog, _: &mut SimRng) -> Result<(Vec<ItemId>, usize)> {
        Ok((self.at(0), 0))
    }

    fn rank(&self, _: &Catalog, state: &usize, _: &Critique, _: &mut SimRng) -> Result<(Vec<ItemId>, usize)> {
        Ok((self.at(state + 1), state + 1))
    }
}

/// Parsed SUT spec string: `greedy:eta=<x>`, `random`, or
/// `replay:path=<file>`.
#[derive(Debug, Clone, PartialEq)]
pub enum SutSpec {
    Greedy { eta: f64 },
    Random,
    Replay { path: PathBuf },
}

impl fmt::Display for SutSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SutSpec::Greedy { eta } => write!(f, "greedy:eta={eta}"),
            SutSpec::Random => write!(f, "random"),
            SutSpec::Replay { path } => write!(f, "replay:path={}", path.display()),
        }
    }
}

impl FromStr for SutSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Input(format!("bad SUT spec {s:?}: {why}"));
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let params: BTreeMap<&str, &str> = params
            .split(',')
            .filter(|kv| !kv.is_empty())
            .map(|kv| kv.split_once('=').ok_or_else(|| bad("expected key=value")))
            .collect::<Result<_>>()?;
        let only = |keys: &[&str]| params.keys().all(|k| keys.contains(k));
        match kind {
            "greedy" if only(&["eta"]) => {
                let eta: f64 = params
                    .get("eta")
                    .ok_or_else(|| bad("missing eta"))?
                    .parse()
                    .map_err(|_| bad("eta must be a number"))?;
                if !(eta > 0.0 && eta <= 1.0) {
                    return Err(bad("eta must lie in (0, 1]"));
                }
                Ok(SutSpec::Greedy { eta })
            }
            "random" if params.is_empty() => Ok(SutSpec::Random),
            "replay" if only(&["path"]) => Ok(SutSpec::Replay {
                path: PathBuf::from(params.get("path").ok_or_else(|| bad("missing path"))?),
            }),
            _ => Err(bad("unknown system or unexpected parameters")),
        }
    }
}

/// Any of the built-in systems, selected at runtime from a [`SutSpec`].
#[derive(Debug, Clone)]
pub enum AnySut {
    Greedy(GreedyRanker),
    Random(RandomRanker),
    Replay(ReplayRanker),
}

#[derive(Debug, Clone)]
pub enum AnySutState {
    Greedy(QueryState),
    Random,
    Replay(usize),
}

impl AnySut {
    pub fn from_spec(spec: &SutSpec, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Input("K must be at least 1".into()));
        }
        Ok(match spec {
            SutSpec::Greedy { eta } => AnySut::Greedy(GreedyRanker { eta: *eta, k }),
            SutSpec::Random => AnySut::Random(RandomRanker { k }),
            SutSpec::Replay { path } => AnySut::Replay(ReplayRanker::load(path)?),
        })
    }
}

impl SystemUnderTest for AnySut {
    type State = AnySutState;

    fn initial_rank(&self, catalog: &Catalog, rng: &mut SimRng) -> Result<(Vec<ItemId>, AnySutState)> {
        Ok(match self {
            AnySut::Greedy(s) => {
                let (r, st) = s.initial_rank(catalog, rng)?;
                (r, AnySutState::Greedy(st))
            }
            AnySut::Random(s) => (s.initial_rank(catalog, rng)?.0, AnySutState::Random),
            AnySut::Replay(s) => {
                let (r, st) = s.initial_rank(catalog, rng)?;
                (r, AnySutState::Replay(st))
            }
        })
    }

    fn rank(
        &self,
        catalog: &Catalog,
        state: &AnySutState,
        critique: &Critique,
        rng: &mut SimRng,
    ) -> Result<(Vec<ItemId>, AnySutState)> {
        Ok(match (self, state) {
            (AnySut::Greedy(s), AnySutState::Greedy(st)) => {
                let (r, st) = s.rank(catalog, st, critique, rng)?;
                (r, AnySutState::Greedy(st))
            }
            (AnySut::Random(s), AnySutState::Random) => (s.rank(catalog, &(), critique, rng)?.0, AnySutState::Random),
            (AnySut::Replay(s), AnySutState::Replay(st)) => {
                let (r, st) = s.rank(catalog, st, critique, rng)?;
                (r, AnySutState::Replay(st))
            }
            _ => return Err(Error::Input("state does not belong to this system".into())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::collections::HashSet;

    fn id(s: &str) -> ItemId {
        ItemId::new(s).unwrap()
    }

    fn grid_catalog(n: usize) -> Catalog {
        Catalog::new(
            "t",
            2,
            (0..n).map(|i| {
                let a = i as f64 * 0.7;
                (id(&format!("i{i:02}")), vec![a.cos(), a.sin()])
            }),
        )
        .unwrap()
    }

    fn critique(direction: &[f64]) -> Critique {
        Critique {
            direction: direction.to_vec(),
            satisfied: false,
            text: None,
        }
    }

    #[test]
    fn greedy_update_example() {
        let c = Catalog::new("t", 2, vec![(id("x"), vec![1.0, 1.0]), (id("y"), vec![1.0, 0.0])]).unwrap();
        let st = QueryState::new(&[1.0, 0.0], 1.0).unwrap();
        let (ranking, next) = greedy_vector_rank(&st, &critique(&[0.0, 1.0]), &c, 100).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((next.query[0] - h).abs() < 1e-12 && (next.query[1] - h).abs() < 1e-12);
        assert_eq!(ranking, vec![id("x"), id("y")]);
    }

    #[test]
    fn satisfied_critique_keeps_ranking() {
        let c = grid_catalog(9);
        let st = QueryState::new(&[0.3, 0.8], 0.5).unwrap();
        let (r1, s1) = greedy_vector_rank(&st, &critique(&[1.0, 0.0]), &c, 5).unwrap();
        let (r2, s2) = greedy_vector_rank(&s1, &Critique::satisfied(2), &c, 5).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn ranking_truncates_to_catalog() {
        let c = grid_catalog(5);
        let st = QueryState::new(&[1.0, 0.0], 1.0).unwrap();
        let (r, _) = greedy_vector_rank(&st, &critique(&[0.0, 1.0]), &c, 100).unwrap();
        assert_eq!(r.len(), 5);
        assert_eq!(r.iter().collect::<HashSet<_>>().len(), 5);
    }

    #[test]
    fn random_rank_is_seeded_permutation() {
        let c = grid_catalog(20);
        let a = random_rank(&c, 20, &mut SimRng::seed_from_u64(4));
        let b = random_rank(&c, 20, &mut SimRng::seed_from_u64(4));
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, c.ids());
        assert_eq!(random_rank(&c, 3, &mut SimRng::seed_from_u64(4)).len(), 3);
    }

    #[test]
    fn random_rank_first_place_is_uniform() {
        let n = 10;
        let c = grid_catalog(n);
        let draws = 10_000;
        let mut rng = SimRng::seed_from_u64(99);
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            let top = &random_rank(&c, 3, &mut rng)[0];
            counts[c.position(top).unwrap()] += 1;
        }
        let p = 1.0 / n as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for &k in &counts {
            assert!((k as f64 - mean).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn noiseless_critique_reaches_unique_target() {
        // target is its own unique nearest neighbour of the updated query
        let c = Catalog::new(
            "t",
            3,
            vec![
                (id("start"), vec![1.0, 0.0, 0.0]),
                (id("near"), vec![0.9, 0.3, 0.0]),
                (id("target"), vec![0.0, 0.0, 1.0]),
                (id("other"), vec![0.0, 1.0, 0.0]),
            ],
        )
        .unwrap();
        let st = QueryState::new(&[1.0, 0.0, 0.0], 1.0).unwrap();
        let base = crate::simulate::SyntheticCritiquer::new(&c, 0.0, 1);
        use crate::simulate::BaseSimulator;
        let k = base.critique(1, &id("start"), &id("target")).unwrap();
        let (r, _) = greedy_vector_rank(&st, &k, &c, 4).unwrap();
        assert_eq!(r[0], id("target"));
    }

    #[test]
    fn sut_specs_parse() {
        assert_eq!("greedy:eta=0.5".parse::<SutSpec>().unwrap(), SutSpec::Greedy { eta: 0.5 });
        assert_eq!("random".parse::<SutSpec>().unwrap(), SutSpec::Random);
        assert_eq!(
            "replay:path=/tmp/r.jsonl".parse::<SutSpec>().unwrap().to_string(),
            "replay:path=/tmp/r.jsonl"
        );
        for bad in ["greedy", "greedy:eta=0", "greedy:eta=2", "random:x=1", "neural"] {
            assert!(bad.parse::<SutSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn replay_follows_turns_then_repeats() {
        let turns = vec![
            ReplayTurn { turn: 2, ranking: vec![id("b"), id("a")] },
            ReplayTurn { turn: 1, ranking: vec![id("a"), id("b")] },
        ];
        let r = ReplayRanker::new(turns).unwrap();
        let c = grid_catalog(2);
        let mut rng = SimRng::seed_from_u64(0);
        let (first, st) = r.initial_rank(&c, &mut rng).unwrap();
        assert_eq!(first[0], id("a"));
        let (second, st) = r.rank(&c, &st, &critique(&[1.0, 0.0]), &mut rng).unwrap();
        assert_eq!(second[0], id("b"));
        let (third, _) = r.rank(&c, &st, &critique(&[1.0, 0.0]), &mut rng).unwrap();
        assert_eq!(third, second);
        assert!(ReplayRanker::new(vec![ReplayTurn { turn: 2, ranking: vec![id("a")] }]).is_err());
    }
}
