//! Domain types shared by every stage of the pipeline: item identifiers,
//! scored lists, agent definitions, allocation results, the item catalog
//! with protected-group flags, and the bounded history of delivered lists.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of an item (or a user) as it appears in input data.
///
/// Ordering is numeric when both tokens are plain unsigned integers and
/// lexicographic otherwise, so that `"9" < "10"`. Integers sort before
/// non-integer tokens.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(String);

impl ItemId {
    pub fn new(id: impl Into<String>) -> Self {
        ItemId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn numeric(&self) -> Option<u128> {
        if self.0.is_empty() || !self.0.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        self.0.parse().ok()
    }
}

impl Ord for ItemId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.numeric(), other.numeric()) {
            (Some(a), Some(b)) => a.cmp(&b).then_with(|| self.0.cmp(&other.0)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for ItemId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        ItemId(s.to_owned())
    }
}

impl From<String> for ItemId {
    fn from(s: String) -> Self {
        ItemId(s)
    }
}

impl From<usize> for ItemId {
    fn from(n: usize) -> Self {
        ItemId(n.to_string())
    }
}

/// Canonical tie-break between two scored items: higher score first, then
/// ascending item id.
pub fn canonical_cmp(a: (&ItemId, f64), b: (&ItemId, f64)) -> Ordering {
    descending(a.1, b.1).then_with(|| a.0.cmp(b.0))
}

/// Orders larger values first. `-0.0` and `0.0` compare equal; NaN is
/// treated as equal to everything and must be excluded upstream.
pub fn descending(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// An ordered list of `(item, score)` pairs with non-increasing scores and
/// distinct items.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredList {
    entries: Vec<(ItemId, f64)>,
}

impl ScoredList {
    /// Builds a list whose entries are already in order.
    pub fn new(entries: Vec<(ItemId, f64)>) -> Result<Self> {
        for (id, score) in &entries {
            if !score.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "score for item {id} is not finite"
                )));
            }
        }
        if let Some(w) = entries.windows(2).find(|w| w[1].1 > w[0].1) {
            return Err(Error::InvalidInput(format!(
                "scores increase from item {} ({}) to item {} ({})",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
        let list = ScoredList { entries };
        list.check_distinct()?;
        Ok(list)
    }

    /// Sorts arbitrary entries by score descending with the canonical
    /// tie-break.
    pub fn from_unsorted(mut entries: Vec<(ItemId, f64)>) -> Result<Self> {
        entries.sort_by(|a, b| canonical_cmp((&a.0, a.1), (&b.0, b.1)));
        Self::new(entries)
    }

    fn check_distinct(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(self.entries.len());
        for (id, _) in &self.entries {
            if !seen.insert(id) {
                return Err(Error::InvalidInput(format!("item {id} appears twice")));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[(ItemId, f64)] {
        &self.entries
    }

    pub fn items(&self) -> impl ExactSizeIterator<Item = &ItemId> + '_ {
        self.entries.iter().map(|(id, _)| id)
    }

    pub fn item_ids(&self) -> Vec<ItemId> {
        self.items().cloned().collect()
    }

    pub fn scores(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, s)| *s)
    }

    pub fn score_of(&self, id: &ItemId) -> Option<f64> {
        self.entries.iter().find(|(i, _)| i == id).map(|(_, s)| *s)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The first `k` entries (or all of them when shorter).
    pub fn top(&self, k: usize) -> ScoredList {
        ScoredList {
            entries: self.entries.iter().take(k).cloned().collect(),
        }
    }
}

/// A fairness concern: the items it protects, its target proportion and its
/// rescoring increment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    /// Key into the item feature flags that marks protected items.
    #[serde(rename = "feature")]
    pub protected_feature: String,
    /// Desired share of protected items, in `(0, 1]`.
    pub target_proportion: f64,
    /// Score increment given to protected items under rescoring.
    #[serde(default)]
    pub delta: f64,
}

impl AgentSpec {
    pub fn new(
        name: impl Into<String>,
        protected_feature: impl Into<String>,
        target_proportion: f64,
        delta: f64,
    ) -> Result<Self> {
        let spec = AgentSpec {
            name: name.into(),
            protected_feature: protected_feature.into(),
            target_proportion,
            delta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_proportion > 0.0 && self.target_proportion <= 1.0) {
            return Err(Error::Config(format!(
                "agent {}: target_proportion must be in (0, 1], got {}",
                self.name, self.target_proportion
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!(
                "agent {}: delta must be a finite value >= 0, got {}",
                self.name, self.delta
            )));
        }
        Ok(())
    }
}

/// An agent together with its live fairness score.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub spec: AgentSpec,
    /// In `[0, 1]`; 1 means the target is met.
    pub fairness: f64,
}

/// Per-agent allocation weights, indexed by agent declaration order. A
/// weight of zero means the agent was not allocated.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub weights: Vec<f64>,
}

impl AllocationResult {
    pub fn none(n_agents: usize) -> Self {
        AllocationResult {
            weights: vec![0.0; n_agents],
        }
    }

    pub fn single(n_agents: usize, winner: usize) -> Self {
        let mut weights = vec![0.0; n_agents];
        weights[winner] = 1.0;
        AllocationResult { weights }
    }

    /// Indices and weights of the allocated agents.
    pub fn allocated(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, w)| *w > 0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.allocated().next().is_none()
    }
}

/// A catalog item and its protected-group membership per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: ItemId,
    pub protected_flags: BTreeMap<String, bool>,
}

/// Protected flags for every known item, one column per feature key.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    features: Vec<String>,
    flags: HashMap<ItemId, Vec<bool>>,
}

impl Catalog {
    pub fn new(features: Vec<String>) -> Self {
        Catalog {
            features,
            flags: HashMap::new(),
        }
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn feature_index(&self, feature: &str) -> Option<usize> {
        self.features.iter().position(|f| f == feature)
    }

    pub fn has_feature(&self, feature: &str) -> bool {
        self.feature_index(feature).is_some()
    }

    /// Inserts or replaces an item; `flags` is aligned with [`Catalog::features`].
    pub fn insert_flags(&mut self, id: ItemId, flags: Vec<bool>) -> Result<()> {
        if flags.len() != self.features.len() {
            return Err(Error::InvalidInput(format!(
                "item {id}: expected {} flags, got {}",
                self.features.len(),
                flags.len()
            )));
        }
        self.flags.insert(id, flags);
        Ok(())
    }

    pub fn insert(&mut self, item: Item) -> Result<()> {
        let flags = self
            .features
            .iter()
            .map(|f| item.protected_flags.get(f).copied().unwrap_or(false))
            .collect();
        self.insert_flags(item.id, flags)
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.flags.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn item(&self, id: &ItemId) -> Option<Item> {
        self.flags.get(id).map(|flags| Item {
            id: id.clone(),
            protected_flags: self
                .features
                .iter()
                .cloned()
                .zip(flags.iter().copied())
                .collect(),
        })
    }

    /// Unknown items and unknown features are unprotected.
    pub fn is_protected(&self, id: &ItemId, feature: &str) -> bool {
        match self.feature_index(feature) {
            Some(f) => self.is_protected_at(id, f),
            None => false,
        }
    }

    pub fn is_protected_at(&self, id: &ItemId, feature_index: usize) -> bool {
        self.flags
            .get(id)
            .and_then(|flags| flags.get(feature_index))
            .copied()
            .unwrap_or(false)
    }

    /// Adds every id not yet present as unprotected everywhere and returns
    /// how many were added.
    pub fn cover<'a>(&mut self, ids: impl IntoIterator<Item = &'a ItemId>) -> usize {
        let width = self.features.len();
        let mut added = 0;
        for id in ids {
            if !self.flags.contains_key(id) {
                self.flags.insert(id.clone(), vec![false; width]);
                added += 1;
            }
        }
        added
    }

    /// Sorted item ids, for deterministic iteration.
    pub fn sorted_ids(&self) -> Vec<ItemId> {
        let mut ids: Vec<_> = self.flags.keys().cloned().collect();
        ids.sort();
        ids
    }
}

/// Multiset of item ids drawn from the history window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ItemMultiset {
    pub counts: BTreeMap<ItemId, usize>,
    pub total: usize,
}

impl ItemMultiset {
    pub fn count(&self, id: &ItemId) -> usize {
        self.counts.get(id).copied().unwrap_or(0)
    }
}

/// Bounded FIFO of the most recent delivered lists.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    capacity: usize,
    lists: VecDeque<Vec<ItemId>>,
}

impl HistoryWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("history window capacity must be >= 1".into()));
        }
        Ok(HistoryWindow {
            capacity,
            lists: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn lists(&self) -> impl Iterator<Item = &[ItemId]> + '_ {
        self.lists.iter().map(Vec::as_slice)
    }

    /// Appends a delivered list, evicting the oldest one when full.
    pub fn push(&mut self, delivered: Vec<ItemId>) -> Result<()> {
        if delivered.is_empty() {
            return Err(Error::InvalidInput(
                "cannot push an empty delivered list into the history window".into(),
            ));
        }
        if self.lists.len() == self.capacity {
            self.lists.pop_front();
        }
        self.lists.push_back(delivered);
        Ok(())
    }

    /// All stored lists concatenated, repetitions across lists counted.
    pub fn multiset(&self) -> ItemMultiset {
        let mut out = ItemMultiset::default();
        for id in self.lists.iter().flatten() {
            *out.counts.entry(id.clone()).or_insert(0) += 1;
            out.total += 1;
        }
        out
    }

    /// Total number of slots across stored lists.
    pub fn total_slots(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    /// Slots holding items protected under `feature_index`.
    pub fn protected_slots(&self, catalog: &Catalog, feature_index: usize) -> usize {
        self.lists
            .iter()
            .flatten()
            .filter(|id| catalog.is_protected_at(id, feature_index))
            .count()
    }
}
