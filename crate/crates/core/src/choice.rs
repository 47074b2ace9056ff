//! Preference aggregation over weighted weak-order ballots.
//!
//! A [`Profile`] bundles the recommender's strict ballot with the tiered
//! ballots of the allocated fairness agents. Four rules turn a profile (or,
//! for rescoring, the raw scores) into a delivered ranking:
//!
//! * [`aggregate_rescoring`]: recommender score plus weighted `delta` for
//!   every protected item.
//! * [`aggregate_borda`]: positional scores, tie-averaged within tiers.
//! * [`aggregate_copeland`]: pairwise win/loss record with half points for
//!   pairwise ties.
//! * [`aggregate_ranked_pairs`]: locks pairwise majorities by margin unless
//!   a cycle would form.
//!
//! Every rule falls back to the canonical order (recommender score
//! descending, then item id ascending) when its own scores tie.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    canonical_cmp, descending, AgentSpec, AllocationResult, Catalog, ItemId, ScoredList,
};

/// A weighted weak order: earlier tiers are strictly preferred to later
/// ones, items within a tier are tied.
#[derive(Debug, Clone, PartialEq)]
pub struct Ballot {
    pub tiers: Vec<Vec<ItemId>>,
    pub weight: f64,
    /// Only the recommender's ballot carries scores.
    pub scores: Option<HashMap<ItemId, f64>>,
}

impl Ballot {
    /// Empty tiers are dropped.
    pub fn from_tiers(tiers: Vec<Vec<ItemId>>, weight: f64) -> Self {
        Ballot {
            tiers: tiers.into_iter().filter(|t| !t.is_empty()).collect(),
            weight,
            scores: None,
        }
    }

    /// The strict order induced by a scored list, one item per tier.
    pub fn from_scored_list(list: &ScoredList, weight: f64) -> Self {
        Ballot {
            tiers: list.items().map(|id| vec![id.clone()]).collect(),
            weight,
            scores: Some(list.entries().iter().cloned().collect()),
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn is_fully_indifferent(&self) -> bool {
        self.tiers.len() <= 1
    }
}

/// The ballots cast for one recommendation opportunity.
///
/// Candidates are the recommender's items, in recommender order.
#[derive(Debug, Clone)]
pub struct Profile {
    candidates: Vec<ItemId>,
    rec_scores: Vec<f64>,
    /// Canonical rank of each candidate (0 = first).
    canonical: Vec<usize>,
    ballots: Vec<Ballot>,
    /// Per ballot, the tier index of every candidate.
    tier_of: Vec<Vec<usize>>,
}

impl Profile {
    /// The recommender ballot is the strict order of `recommendations`.
    pub fn new(
        recommendations: &ScoredList,
        recommender_weight: f64,
        agent_ballots: Vec<Ballot>,
    ) -> Result<Self> {
        let mut ballots = Vec::with_capacity(agent_ballots.len() + 1);
        ballots.push(Ballot::from_scored_list(
            recommendations,
            recommender_weight,
        ));
        ballots.extend(agent_ballots);
        Self::from_ballots(recommendations, ballots)
    }

    fn from_ballots(recommendations: &ScoredList, ballots: Vec<Ballot>) -> Result<Self> {
        let candidates = recommendations.item_ids();
        let rec_scores: Vec<f64> = recommendations.scores().collect();
        let index: HashMap<&ItemId, usize> = candidates
            .iter()
            .enumerate()
            .map(|(i, id)| (id, i))
            .collect();

        let mut tier_of = Vec::with_capacity(ballots.len());
        for (b, ballot) in ballots.iter().enumerate() {
            if !(ballot.weight >= 0.0 && ballot.weight.is_finite()) {
                return Err(Error::MalformedProfile(format!(
                    "ballot {b} has invalid weight {}",
                    ballot.weight
                )));
            }
            let mut tiers = vec![usize::MAX; candidates.len()];
            for (t, tier) in ballot.tiers.iter().enumerate() {
                for id in tier {
                    let &c = index.get(id).ok_or_else(|| {
                        Error::MalformedProfile(format!(
                            "ballot {b} ranks item {id}, which is not a candidate"
                        ))
                    })?;
                    if tiers[c] != usize::MAX {
                        return Err(Error::MalformedProfile(format!(
                            "ballot {b} ranks item {id} more than once"
                        )));
                    }
                    tiers[c] = t;
                }
            }
            if let Some(c) = tiers.iter().position(|&t| t == usize::MAX) {
                return Err(Error::MalformedProfile(format!(
                    "ballot {b} does not rank candidate {}",
                    candidates[c]
                )));
            }
            tier_of.push(tiers);
        }

        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| {
            canonical_cmp(
                (&candidates[a], rec_scores[a]),
                (&candidates[b], rec_scores[b]),
            )
        });
        let mut canonical = vec![0; candidates.len()];
        for (rank, &c) in order.iter().enumerate() {
            canonical[c] = rank;
        }

        Ok(Profile {
            candidates,
            rec_scores,
            canonical,
            ballots,
            tier_of,
        })
    }

    pub fn candidates(&self) -> &[ItemId] {
        &self.candidates
    }

    /// Recommender scores aligned with [`Profile::candidates`].
    pub fn rec_scores(&self) -> &[f64] {
        &self.rec_scores
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// The recommender's ballot first, then agent ballots.
    pub fn ballots(&self) -> &[Ballot] {
        &self.ballots
    }

    pub fn recommender_ballot(&self) -> &Ballot {
        &self.ballots[0]
    }

    pub fn agent_ballots(&self) -> &[Ballot] {
        &self.ballots[1..]
    }

    /// Candidate indices in canonical order.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&c| self.canonical[c]);
        order
    }

    /// Ranks candidates by `points` descending, ties by canonical order.
    fn rank_by_points(&self, points: &[f64]) -> ScoredList {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            descending(points[a], points[b]).then_with(|| self.canonical[a].cmp(&self.canonical[b]))
        });
        let entries = order
            .into_iter()
            .map(|c| (self.candidates[c].clone(), points[c]))
            .collect();
        ScoredList::new(entries).expect("points sorted descending over distinct candidates")
    }

    fn scored_from_order(&self, order: &[usize]) -> ScoredList {
        let n = order.len();
        let entries = order
            .iter()
            .enumerate()
            .map(|(pos, &c)| (self.candidates[c].clone(), (n - pos) as f64))
            .collect();
        ScoredList::new(entries).expect("positional scores are decreasing")
    }
}

/// Weighted pairwise support between candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginMatrix {
    candidates: Vec<ItemId>,
    support: Vec<f64>,
}

impl MarginMatrix {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[ItemId] {
        &self.candidates
    }

    /// Total weight of ballots strictly preferring candidate `i` to `j`.
    pub fn support_at(&self, i: usize, j: usize) -> f64 {
        self.support[i * self.len() + j]
    }

    pub fn support(&self, i: &ItemId, j: &ItemId) -> Option<f64> {
        let a = self.candidates.iter().position(|c| c == i)?;
        let b = self.candidates.iter().position(|c| c == j)?;
        Some(self.support_at(a, b))
    }
}

/// Tallies, for every ordered pair, the weight of ballots strictly
/// preferring the first item. Ballots tying the pair abstain.
pub fn pairwise_support(profile: &Profile) -> MarginMatrix {
    let n = profile.len();
    let mut support = vec![0.0; n * n];
    for (ballot, tiers) in profile.ballots.iter().zip(&profile.tier_of) {
        if ballot.weight == 0.0 || ballot.is_fully_indifferent() {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                if tiers[i] < tiers[j] {
                    support[i * n + j] += ballot.weight;
                }
            }
        }
    }
    MarginMatrix {
        candidates: profile.candidates.clone(),
        support,
    }
}

/// Adds `weight * delta` of each allocated agent to every item it protects
/// and re-sorts.
pub fn aggregate_rescoring(
    recommendations: &ScoredList,
    allocation: &AllocationResult,
    agents: &[AgentSpec],
    catalog: &Catalog,
) -> ScoredList {
    let boosts: Vec<(Option<usize>, f64)> = allocation
        .allocated()
        .filter_map(|(a, w)| {
            let spec = agents.get(a)?;
            Some((
                catalog.feature_index(&spec.protected_feature),
                w * spec.delta,
            ))
        })
        .collect();
    let rescored: Vec<(ItemId, f64, f64)> = recommendations
        .entries()
        .iter()
        .map(|(id, score)| {
            let bonus: f64 = boosts
                .iter()
                .filter(|(f, _)| f.is_some_and(|f| catalog.is_protected_at(id, f)))
                .map(|(_, b)| b)
                .sum();
            (id.clone(), score + bonus, *score)
        })
        .collect();
    let mut order: Vec<usize> = (0..rescored.len()).collect();
    order.sort_by(|&a, &b| {
        descending(rescored[a].1, rescored[b].1).then_with(|| {
            canonical_cmp(
                (&rescored[a].0, rescored[a].2),
                (&rescored[b].0, rescored[b].2),
            )
        })
    });
    let entries = order
        .into_iter()
        .map(|i| (rescored[i].0.clone(), rescored[i].1))
        .collect();
    ScoredList::new(entries).expect("rescored entries sorted descending")
}

/// Weighted Borda count. Within a tier every item receives the average of
/// the positional scores the tier spans, so each ballot hands out
/// `n(n-1)/2` points in total.
pub fn aggregate_borda(profile: &Profile) -> ScoredList {
    profile.rank_by_points(&borda_points(profile))
}

pub fn borda_points(profile: &Profile) -> Vec<f64> {
    let n = profile.len();
    let mut points = vec![0.0; n];
    for (ballot, tiers) in profile.ballots.iter().zip(&profile.tier_of) {
        if ballot.weight == 0.0 {
            continue;
        }
        let mut tier_sizes = vec![0usize; ballot.tiers.len()];
        for &t in tiers {
            tier_sizes[t] += 1;
        }
        let mut tier_score = Vec::with_capacity(tier_sizes.len());
        let mut above = 0usize;
        for &size in &tier_sizes {
            // positions n-1-above down to n-above-size, averaged
            let top = (n - 1 - above) as f64;
            tier_score.push(top - (size as f64 - 1.0) / 2.0);
            above += size;
        }
        for (c, &t) in tiers.iter().enumerate() {
            points[c] += ballot.weight * tier_score[t];
        }
    }
    points
}

/// Copeland: one point per pairwise majority win, half a point each for a
/// pairwise tie.
pub fn aggregate_copeland(profile: &Profile) -> ScoredList {
    profile.rank_by_points(&copeland_points(&pairwise_support(profile)))
}

pub fn copeland_points(margins: &MarginMatrix) -> Vec<f64> {
    let n = margins.len();
    let mut points = vec![0.0; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (sij, sji) = (margins.support_at(i, j), margins.support_at(j, i));
            if sij > sji {
                points[i] += 1.0;
            } else if sji > sij {
                points[j] += 1.0;
            } else {
                points[i] += 0.5;
                points[j] += 0.5;
            }
        }
    }
    points
}

/// One pair considered while building the Ranked Pairs ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDecision {
    pub winner: ItemId,
    pub loser: ItemId,
    /// `support(winner, loser) - support(loser, winner)`; zero for contested
    /// ties.
    pub margin: f64,
    /// The pair was a tie whose direction was drawn at random.
    pub contested_tie: bool,
    pub locked: bool,
}

/// Every pair decision in the order it was made.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedPairsTrace {
    pub decisions: Vec<PairDecision>,
}

impl RankedPairsTrace {
    pub fn locked(&self) -> impl Iterator<Item = (&ItemId, &ItemId)> + '_ {
        self.decisions
            .iter()
            .filter(|d| d.locked)
            .map(|d| (&d.winner, &d.loser))
    }
}

/// Ranked Pairs with random tie handling. Output scores are `n - position`.
pub fn aggregate_ranked_pairs<R: Rng + ?Sized>(profile: &Profile, rng: &mut R) -> ScoredList {
    ranked_pairs_traced(profile, rng).0
}

/// Ranked Pairs, also returning the pair decisions.
///
/// Strict majorities are sorted by margin descending (equal margins in
/// random order) and locked unless they close a cycle. Contested ties,
/// where both sides have positive support, are then visited in random
/// order and locked in a random direction, again only if acyclic. Pairs
/// nobody expressed a preference on stay unconstrained, and the final
/// topological sort resolves them canonically.
pub fn ranked_pairs_traced<R: Rng + ?Sized>(
    profile: &Profile,
    rng: &mut R,
) -> (ScoredList, RankedPairsTrace) {
    let n = profile.len();
    let margins = pairwise_support(profile);

    let mut strict = Vec::new();
    let mut contested = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (sij, sji) = (margins.support_at(i, j), margins.support_at(j, i));
            if sij > sji {
                strict.push((i, j, sij - sji));
            } else if sji > sij {
                strict.push((j, i, sji - sij));
            } else if sij > 0.0 {
                contested.push((i, j));
            }
        }
    }
    strict.shuffle(rng);
    strict.sort_by(|a, b| descending(a.2, b.2));
    contested.shuffle(rng);

    let mut graph = LockGraph::new(n);
    let mut trace = RankedPairsTrace::default();
    let mut record = |w: usize, l: usize, margin: f64, contested_tie: bool, locked: bool| {
        trace.decisions.push(PairDecision {
            winner: profile.candidates[w].clone(),
            loser: profile.candidates[l].clone(),
            margin,
            contested_tie,
            locked,
        });
    };
    for (w, l, margin) in strict {
        let locked = graph.try_lock(w, l);
        record(w, l, margin, false, locked);
    }
    for (i, j) in contested {
        let (w, l) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
        let locked = graph.try_lock(w, l);
        record(w, l, 0.0, true, locked);
    }

    let order = graph.topological_order(&profile.canonical);
    (profile.scored_from_order(&order), trace)
}

/// Locked edges plus their transitive closure as row bitsets.
struct LockGraph {
    n: usize,
    words: usize,
    reach: Vec<u64>,
    edges: Vec<Vec<usize>>,
}

impl LockGraph {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        LockGraph {
            n,
            words,
            reach: vec![0; n * words],
            edges: vec![Vec::new(); n],
        }
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        self.reach[from * self.words + to / 64] & (1 << (to % 64)) != 0
    }

    /// Locks `winner -> loser` unless `loser` already reaches `winner`.
    fn try_lock(&mut self, winner: usize, loser: usize) -> bool {
        if winner == loser || self.reaches(loser, winner) {
            return false;
        }
        self.edges[winner].push(loser);
        let mut add = self.reach[loser * self.words..(loser + 1) * self.words].to_vec();
        add[loser / 64] |= 1 << (loser % 64);
        for x in 0..self.n {
            if x == winner || self.reaches(x, winner) {
                let row = &mut self.reach[x * self.words..(x + 1) * self.words];
                for (r, a) in row.iter_mut().zip(&add) {
                    *r |= a;
                }
            }
        }
        true
    }

    /// Kahn's algorithm, always taking the available node of lowest
    /// `priority`.
    fn topological_order(&self, priority: &[usize]) -> Vec<usize> {
        let mut indegree = vec![0usize; self.n];
        for targets in &self.edges {
            for &t in targets {
                indegree[t] += 1;
            }
        }
        let mut available: std::collections::BTreeSet<(usize, usize)> = (0..self.n)
            .filter(|&c| indegree[c] == 0)
            .map(|c| (priority[c], c))
            .collect();
        let mut order = Vec::with_capacity(self.n);
        while let Some((p, c)) = available.iter().next().copied() {
            available.remove(&(p, c));
            order.push(c);
            for &t in &self.edges[c] {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    available.insert((priority[t], t));
                }
            }
        }
        order
    }
}

/// The four aggregation rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceMechanism {
    Rescoring,
    Borda,
    Copeland,
    RankedPairs,
}

impl ChoiceMechanism {
    pub const ALL: [ChoiceMechanism; 4] = [
        ChoiceMechanism::Rescoring,
        ChoiceMechanism::Borda,
        ChoiceMechanism::Copeland,
        ChoiceMechanism::RankedPairs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChoiceMechanism::Rescoring => "rescoring",
            ChoiceMechanism::Borda => "borda",
            ChoiceMechanism::Copeland => "copeland",
            ChoiceMechanism::RankedPairs => "ranked_pairs",
        }
    }
}

impl fmt::Display for ChoiceMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ChoiceMechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChoiceMechanism::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown choice mechanism {s:?} (expected one of rescoring, borda, copeland, ranked_pairs)"
                ))
            })
    }
}
