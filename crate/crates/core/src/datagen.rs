//! Synthetic recommender output from latent factors.
//!
//! Users are generated regime by regime. Each user draws a propensity
//! vector `Φ_i ~ Normal(μ, σ)` per factor from its regime, then a latent
//! vector `U_i ~ Normal(Φ_i, factor_stddev)`. Items draw binary
//! propensities `Φ_j ~ Bernoulli(p)` per factor and a latent vector
//! `V_j ~ Normal(Φ_j, factor_stddev)` (or `V_j = Φ_j` with
//! `exact_binary_items`). The first `sensitive_factors` factors mark
//! protected features. For every user, `sample_size` distinct items are
//! drawn uniformly, scored by `U_i · V_j`, and the top `list_length` are
//! kept.
//!
//! Randomness comes from one ChaCha8 stream seeded with `seed_from_u64`.
//! Normal deviates use the ziggurat method of `rand_distr::StandardNormal`,
//! scaled and shifted. Generation order is: users (regimes in declaration
//! order), items, recommendation lists (user order), arrival sequencing.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agents::agent_compatibility_synthetic;
use crate::error::{Error, Result};
use crate::model::{Catalog, ItemId, ScoredList};

/// A batch of users sharing one propensity distribution.
///
/// `mean` and `stddev` give the per-factor normal parameters. Factors past
/// the end of either vector default to mean 0 and standard deviation 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSpec {
    pub name: String,
    pub count: usize,
    #[serde(default)]
    pub mean: Vec<f64>,
    #[serde(default)]
    pub stddev: Vec<f64>,
}

impl RegimeSpec {
    pub fn mean_of(&self, factor: usize) -> f64 {
        self.mean.get(factor).copied().unwrap_or(0.0)
    }

    pub fn stddev_of(&self, factor: usize) -> f64 {
        self.stddev.get(factor).copied().unwrap_or(1.0)
    }
}

/// Order in which generated users arrive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OrderRepr", into = "OrderRepr")]
pub enum ArrivalOrder {
    /// Regime blocks concatenated in this order.
    Sequence(Vec<String>),
    /// All users shuffled together.
    Mixed,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OrderRepr {
    Keyword(String),
    Sequence(Vec<String>),
}

impl TryFrom<OrderRepr> for ArrivalOrder {
    type Error = String;

    fn try_from(r: OrderRepr) -> Result<Self, String> {
        match r {
            OrderRepr::Keyword(k) if k == "mixed" => Ok(ArrivalOrder::Mixed),
            OrderRepr::Keyword(k) => Err(format!(
                "order must be \"mixed\" or a list of regime names, got {k:?}"
            )),
            OrderRepr::Sequence(s) => Ok(ArrivalOrder::Sequence(s)),
        }
    }
}

impl From<ArrivalOrder> for OrderRepr {
    fn from(o: ArrivalOrder) -> Self {
        match o {
            ArrivalOrder::Mixed => OrderRepr::Keyword("mixed".into()),
            ArrivalOrder::Sequence(s) => OrderRepr::Sequence(s),
        }
    }
}

/// Full description of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSpec {
    /// When set, must equal the sum of regime counts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_users: Option<usize>,
    pub n_items: usize,
    /// Total latent factors `k`.
    pub factors: usize,
    /// The first `k_s` factors are sensitive.
    pub sensitive_factors: usize,
    /// Feature key of each sensitive factor.
    pub feature_names: Vec<String>,
    /// Bernoulli probability of each item factor.
    pub item_probabilities: Vec<f64>,
    pub factor_stddev: f64,
    /// Items scored per user (`m`).
    pub sample_size: usize,
    /// Items kept per user (`m'`).
    pub list_length: usize,
    pub exact_binary_items: bool,
    pub regimes: Vec<RegimeSpec>,
    /// Defaults to declaration order of `regimes`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<ArrivalOrder>,
    pub seed: u64,
}

/// 500 users, 5,000 items, 200 samples and top 50 per user, item
/// probabilities (0.039, 0.05, 0.9), user features N(0.5, 0.06) and
/// N(0.6, 0.08), factor standard deviation 1.
impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            n_users: None,
            n_items: 5000,
            factors: 3,
            sensitive_factors: 2,
            feature_names: vec!["f1".into(), "f2".into()],
            item_probabilities: vec![0.039, 0.05, 0.9],
            factor_stddev: 1.0,
            sample_size: 200,
            list_length: 50,
            exact_binary_items: false,
            regimes: vec![RegimeSpec {
                name: "synthetic".into(),
                count: 500,
                mean: vec![0.5, 0.6],
                stddev: vec![0.06, 0.08],
            }],
            order: None,
            seed: 0,
        }
    }
}

impl GenSpec {
    /// Three regimes with sharply different compatibilities and rarer
    /// protected items: `high1` users favour feature `f1`, `high2` users
    /// favour `f2`, `low` users favour neither. `f2` is the rarer feature.
    /// These parameters are illustrative, not calibrated to any dataset.
    pub fn sequenced_example() -> Self {
        GenSpec {
            item_probabilities: vec![0.03, 0.015, 0.9],
            regimes: vec![
                RegimeSpec {
                    name: "high1".into(),
                    count: 150,
                    mean: vec![0.9, 0.1],
                    stddev: vec![0.05, 0.05],
                },
                RegimeSpec {
                    name: "high2".into(),
                    count: 150,
                    mean: vec![0.1, 0.9],
                    stddev: vec![0.05, 0.05],
                },
                RegimeSpec {
                    name: "low".into(),
                    count: 200,
                    mean: vec![0.3, 0.3],
                    stddev: vec![0.1, 0.1],
                },
            ],
            order: Some(ArrivalOrder::Sequence(vec![
                "high1".into(),
                "high2".into(),
                "low".into(),
            ])),
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_order(mut self, order: ArrivalOrder) -> Self {
        self.order = Some(order);
        self
    }

    pub fn total_users(&self) -> usize {
        self.regimes.iter().map(|r| r.count).sum()
    }

    pub fn arrival_order(&self) -> ArrivalOrder {
        self.order.clone().unwrap_or_else(|| {
            ArrivalOrder::Sequence(self.regimes.iter().map(|r| r.name.clone()).collect())
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.factors == 0 {
            return fail("factors must be >= 1".into());
        }
        if self.sensitive_factors > self.factors {
            return fail(format!(
                "sensitive_factors ({}) exceeds factors ({})",
                self.sensitive_factors, self.factors
            ));
        }
        if self.feature_names.len() != self.sensitive_factors {
            return fail(format!(
                "feature_names has {} entries but sensitive_factors is {}",
                self.feature_names.len(),
                self.sensitive_factors
            ));
        }
        let unique: HashSet<_> = self.feature_names.iter().collect();
        if unique.len() != self.feature_names.len() {
            return fail("feature_names must be distinct".into());
        }
        if self.item_probabilities.len() != self.factors {
            return fail(format!(
                "item_probabilities has {} entries but factors is {}",
                self.item_probabilities.len(),
                self.factors
            ));
        }
        if let Some(p) = self
            .item_probabilities
            .iter()
            .find(|p| !(0.0..=1.0).contains(*p))
        {
            return fail(format!("item probability {p} outside [0, 1]"));
        }
        if !(self.factor_stddev >= 0.0 && self.factor_stddev.is_finite()) {
            return fail(format!(
                "factor_stddev must be >= 0, got {}",
                self.factor_stddev
            ));
        }
        if self.list_length > self.sample_size {
            return fail(format!(
                "list_length ({}) exceeds sample_size ({})",
                self.list_length, self.sample_size
            ));
        }
        if self.sample_size > self.n_items {
            return fail(format!(
                "sample_size ({}) exceeds n_items ({})",
                self.sample_size, self.n_items
            ));
        }
        if self.regimes.is_empty() {
            return fail("at least one regime is required".into());
        }
        let mut names = HashSet::new();
        for r in &self.regimes {
            if !names.insert(r.name.as_str()) {
                return fail(format!("regime {:?} declared twice", r.name));
            }
            if r.count == 0 {
                return fail(format!("regime {:?}: count must be > 0", r.name));
            }
            if r.mean.len() > self.factors || r.stddev.len() > self.factors {
                return fail(format!("regime {:?}: more parameters than factors", r.name));
            }
            if let Some(s) = r.stddev.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
                return fail(format!("regime {:?}: stddev {s} must be >= 0", r.name));
            }
            if r.mean.iter().any(|m| !m.is_finite()) {
                return fail(format!("regime {:?}: mean must be finite", r.name));
            }
        }
        if let Some(n) = self.n_users {
            if n != self.total_users() {
                return fail(format!(
                    "n_users ({n}) does not match the regime counts ({})",
                    self.total_users()
                ));
            }
        }
        if let Some(ArrivalOrder::Sequence(seq)) = &self.order {
            if let Some(unknown) = seq.iter().find(|n| !names.contains(n.as_str())) {
                return fail(format!("order names unknown regime {unknown:?}"));
            }
        }
        Ok(())
    }
}

/// A generated user.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUser {
    pub id: String,
    pub regime: String,
    pub propensities: Vec<f64>,
    pub latent: Vec<f64>,
}

/// A generated item; `propensities` entries are 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticItem {
    pub id: ItemId,
    pub propensities: Vec<f64>,
    pub latent: Vec<f64>,
}

fn normal(mean: f64, stddev: f64) -> Normal<f64> {
    Normal::new(mean, stddev).expect("validated normal parameters")
}

/// Draws a user's propensities from the regime and latent factors around
/// them.
pub fn gen_user<R: Rng + ?Sized>(
    regime: &RegimeSpec,
    factors: usize,
    factor_stddev: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let propensities: Vec<f64> = (0..factors)
        .map(|f| normal(regime.mean_of(f), regime.stddev_of(f)).sample(rng))
        .collect();
    let latent = propensities
        .iter()
        .map(|&phi| normal(phi, factor_stddev).sample(rng))
        .collect();
    (propensities, latent)
}

/// Draws an item's binary propensities and its latent factors.
pub fn gen_item<R: Rng + ?Sized>(spec: &GenSpec, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let propensities: Vec<f64> = spec
        .item_probabilities
        .iter()
        .map(|&p| if rng.random_bool(p) { 1.0 } else { 0.0 })
        .collect();
    let latent = if spec.exact_binary_items {
        propensities.clone()
    } else {
        propensities
            .iter()
            .map(|&phi| normal(phi, spec.factor_stddev).sample(rng))
            .collect()
    };
    (propensities, latent)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scores `sample_size` uniformly drawn distinct items and keeps the best
/// `list_length`, sorted by score with the canonical tie-break.
pub fn gen_recommendations<R: Rng + ?Sized>(
    user_latent: &[f64],
    items: &[SyntheticItem],
    sample_size: usize,
    list_length: usize,
    rng: &mut R,
) -> Result<ScoredList> {
    if sample_size > items.len() || list_length > sample_size {
        return Err(Error::Config(format!(
            "need list_length <= sample_size <= n_items, got {list_length}, {sample_size}, {}",
            items.len()
        )));
    }
    let entries = rand::seq::index::sample(rng, items.len(), sample_size)
        .into_iter()
        .map(|j| (items[j].id.clone(), dot(user_latent, &items[j].latent)))
        .collect();
    Ok(ScoredList::from_unsorted(entries)?.top(list_length))
}

/// Arrival order as indices into `users`.
pub fn sequence_arrivals<R: Rng + ?Sized>(
    users: &[SyntheticUser],
    regimes: &[RegimeSpec],
    order: &ArrivalOrder,
    rng: &mut R,
) -> Result<Vec<usize>> {
    match order {
        ArrivalOrder::Mixed => {
            let mut all: Vec<usize> = (0..users.len()).collect();
            all.shuffle(rng);
            Ok(all)
        }
        ArrivalOrder::Sequence(names) => {
            let mut out = Vec::with_capacity(users.len());
            for name in names {
                if !regimes.iter().any(|r| &r.name == name) {
                    return Err(Error::Config(format!(
                        "unknown regime {name:?} in arrival order"
                    )));
                }
                out.extend(
                    users
                        .iter()
                        .enumerate()
                        .filter(|(_, u)| &u.regime == name)
                        .map(|(i, _)| i),
                );
            }
            Ok(out)
        }
    }
}

/// A generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub spec: GenSpec,
    pub users: Vec<SyntheticUser>,
    pub items: Vec<SyntheticItem>,
    /// Recommendation list of each user, aligned with `users`.
    pub recommendations: Vec<ScoredList>,
    /// Arrival order as indices into `users`.
    pub arrivals: Vec<usize>,
}

/// Runs the full generation pipeline for a validated spec.
pub fn generate(spec: &GenSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut users = Vec::with_capacity(spec.total_users());
    for regime in &spec.regimes {
        for _ in 0..regime.count {
            let (propensities, latent) =
                gen_user(regime, spec.factors, spec.factor_stddev, &mut rng);
            users.push(SyntheticUser {
                id: users.len().to_string(),
                regime: regime.name.clone(),
                propensities,
                latent,
            });
        }
    }

    let items: Vec<SyntheticItem> = (0..spec.n_items)
        .map(|j| {
            let (propensities, latent) = gen_item(spec, &mut rng);
            SyntheticItem {
                id: ItemId::from(j),
                propensities,
                latent,
            }
        })
        .collect();

    let recommendations = users
        .iter()
        .map(|u| {
            gen_recommendations(
                &u.latent,
                &items,
                spec.sample_size,
                spec.list_length,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let arrivals = sequence_arrivals(&users, &spec.regimes, &spec.arrival_order(), &mut rng)?;

    Ok(SyntheticDataset {
        spec: spec.clone(),
        users,
        items,
        recommendations,
        arrivals,
    })
}

impl SyntheticDataset {
    /// Protected flags: an item is protected for a sensitive feature when
    /// its binary propensity for that factor is 1.
    pub fn catalog(&self) -> Catalog {
        let mut catalog = Catalog::new(self.spec.feature_names.clone());
        let k_s = self.spec.sensitive_factors;
        for item in &self.items {
            let flags = item.propensities[..k_s].iter().map(|&p| p == 1.0).collect();
            catalog
                .insert_flags(item.id.clone(), flags)
                .expect("one flag per sensitive factor");
        }
        catalog
    }

    /// Compatibility of `user` with the agent guarding `feature`.
    pub fn compatibility(&self, user: usize, feature: &str) -> Option<f64> {
        let f = self.spec.feature_names.iter().position(|n| n == feature)?;
        Some(agent_compatibility_synthetic(
            self.users[user].propensities[f],
        ))
    }

    /// Share of catalog items protected under each sensitive feature.
    pub fn catalog_prevalence(&self) -> Vec<f64> {
        (0..self.spec.sensitive_factors)
            .map(|f| {
                let n = self
                    .items
                    .iter()
                    .filter(|i| i.propensities[f] == 1.0)
                    .count();
                n as f64 / self.items.len().max(1) as f64
            })
            .collect()
    }
}
