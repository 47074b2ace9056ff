//! CSV loaders and writers for externally produced recommender output.
//!
//! All files are UTF-8, comma separated, with a header row:
//!
//! | file | header |
//! |------|--------|
//! | recommendations | `user_id,item_id,score` |
//! | item features | `item_id,<feature_1>,<feature_2>,...` (cells 0/1) |
//! | compatibilities | `user_id,agent_name,score` |
//! | rating profiles | `user_id,item_id,rating` |
//! | arrivals | `user_id,regime` (regime may be empty) |

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::agents::agent_compatibility_entropy;
use crate::error::{Error, Result};
use crate::model::{AgentSpec, Catalog, ItemId, ScoredList};

/// Compatibility used when neither the compatibility file nor a rating
/// profile covers a user.
pub const NEUTRAL_COMPATIBILITY: f64 = 0.5;

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn expect_header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers()?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::load(
            path,
            1,
            format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(())
}

/// Iterates data rows with their 1-based line numbers.
fn rows<'r>(
    path: &Path,
    rdr: &'r mut csv::Reader<File>,
    width: usize,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + 'r {
    let path = path.to_path_buf();
    rdr.records().map(move |rec| {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::load(&path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::load(
                &path,
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        Ok((line, rec))
    })
}

fn parse_f64(path: &Path, line: u64, field: &str, what: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::load(
            path,
            line,
            format!("{what} {field:?} is not a finite number"),
        )),
    }
}

/// Recommendation lists keyed by user, plus users in order of first
/// appearance in the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecommendationSet {
    pub users: Vec<String>,
    pub lists: HashMap<String, ScoredList>,
}

impl RecommendationSet {
    pub fn get(&self, user: &str) -> Option<&ScoredList> {
        self.lists.get(user)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.lists.values().map(ScoredList::len).sum()
    }

    /// Every item any list mentions.
    pub fn items(&self) -> impl Iterator<Item = &ItemId> + '_ {
        self.users.iter().flat_map(|u| self.lists[u].items())
    }
}

/// Loads `user_id,item_id,score` rows and sorts each user's list by score.
pub fn load_recommendations(path: impl AsRef<Path>) -> Result<RecommendationSet> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &["user_id", "item_id", "score"])?;

    let mut users = Vec::new();
    let mut raw: HashMap<String, Vec<(ItemId, f64)>> = HashMap::new();
    let mut seen: HashSet<(String, ItemId)> = HashSet::new();
    for row in rows(path, &mut rdr, 3) {
        let (line, rec) = row?;
        let user = rec[0].to_owned();
        let item = ItemId::new(&rec[1]);
        let score = parse_f64(path, line, &rec[2], "score")?;
        if user.is_empty() || item.as_str().is_empty() {
            return Err(Error::load(path, line, "empty user or item id"));
        }
        if !seen.insert((user.clone(), item.clone())) {
            return Err(Error::load(
                path,
                line,
                format!("duplicate recommendation for user {user}, item {item}"),
            ));
        }
        raw.entry(user.clone())
            .or_insert_with(|| {
                users.push(user);
                Vec::new()
            })
            .push((item, score));
    }

    let lists = raw
        .into_iter()
        .map(|(u, entries)| Ok((u, ScoredList::from_unsorted(entries)?)))
        .collect::<Result<_>>()?;
    Ok(RecommendationSet { users, lists })
}

/// Loads 0/1 feature flags. Every key in `required` must be a column.
pub fn load_item_features(path: impl AsRef<Path>, required: &[&str]) -> Result<Catalog> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if headers.first().map(String::as_str) != Some("item_id") {
        return Err(Error::load(path, 1, "first column must be item_id"));
    }
    let features: Vec<String> = headers[1..].to_vec();
    for key in required {
        if !features.iter().any(|f| f == key) {
            return Err(Error::Config(format!(
                "feature {key:?} is not a column of {} (columns: {})",
                path.display(),
                features.join(", ")
            )));
        }
    }

    let mut catalog = Catalog::new(features);
    let mut seen = HashSet::new();
    for row in rows(path, &mut rdr, headers.len()) {
        let (line, rec) = row?;
        let id = ItemId::new(&rec[0]);
        if !seen.insert(id.clone()) {
            return Err(Error::load(path, line, format!("duplicate item {id}")));
        }
        let flags = rec
            .iter()
            .skip(1)
            .map(|cell| match cell {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::load(
                    path,
                    line,
                    format!("feature cell {other:?} is not 0 or 1"),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        catalog.insert_flags(id, flags)?;
    }
    Ok(catalog)
}

/// Adds unlisted items as unprotected, logging how many were missing.
pub fn cover_items<'a>(catalog: &mut Catalog, ids: impl IntoIterator<Item = &'a ItemId>) -> usize {
    let missing = catalog.cover(ids);
    if missing > 0 {
        log::warn!("{missing} recommended items have no feature row; treating them as unprotected");
    }
    missing
}

/// Per-(user, agent) compatibility scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompatibilityTable {
    scores: HashMap<(String, String), f64>,
}

impl CompatibilityTable {
    pub fn insert(&mut self, user: impl Into<String>, agent: impl Into<String>, score: f64) {
        self.scores
            .insert((user.into(), agent.into()), score.clamp(0.0, 1.0));
    }

    pub fn get(&self, user: &str, agent: &str) -> Option<f64> {
        self.scores
            .get(&(user.to_owned(), agent.to_owned()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Accepts values within 0.01 of `[0, 1]` and clamps them.
pub fn load_compatibilities(path: impl AsRef<Path>) -> Result<CompatibilityTable> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &["user_id", "agent_name", "score"])?;
    let mut table = CompatibilityTable::default();
    for row in rows(path, &mut rdr, 3) {
        let (line, rec) = row?;
        let score = parse_f64(path, line, &rec[2], "compatibility")?;
        if !(-0.01..=1.01).contains(&score) {
            return Err(Error::load(
                path,
                line,
                format!("compatibility {score} outside [0, 1]; wrong column?"),
            ));
        }
        table.insert(&rec[0], &rec[1], score);
    }
    Ok(table)
}

/// Users' rated items.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingProfiles {
    profiles: HashMap<String, Vec<(ItemId, f64)>>,
}

impl RatingProfiles {
    pub fn get(&self, user: &str) -> Option<&[(ItemId, f64)]> {
        self.profiles.get(user).map(Vec::as_slice)
    }

    /// Entropy compatibility of `user` with the given feature, if the user
    /// has a profile.
    pub fn entropy_compatibility(
        &self,
        user: &str,
        feature: &str,
        catalog: &Catalog,
    ) -> Option<f64> {
        let profile = self.profiles.get(user)?;
        let protected = profile
            .iter()
            .filter(|(id, _)| catalog.is_protected(id, feature))
            .count();
        agent_compatibility_entropy(protected, profile.len()).ok()
    }
}

pub fn load_rating_profiles(path: impl AsRef<Path>) -> Result<RatingProfiles> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &["user_id", "item_id", "rating"])?;
    let mut out = RatingProfiles::default();
    for row in rows(path, &mut rdr, 3) {
        let (line, rec) = row?;
        let rating = parse_f64(path, line, &rec[2], "rating")?;
        out.profiles
            .entry(rec[0].to_owned())
            .or_default()
            .push((ItemId::new(&rec[1]), rating));
    }
    Ok(out)
}

/// Where a resolved compatibility came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompatibilitySource {
    File,
    Profile,
    Neutral,
}

/// Compatibility of `user` with `agent`: the file entry under the agent's
/// name (or, failing that, its feature key), else the entropy of the
/// user's rating profile, else [`NEUTRAL_COMPATIBILITY`].
pub fn resolve_compatibility(
    table: Option<&CompatibilityTable>,
    profiles: Option<&RatingProfiles>,
    catalog: &Catalog,
    user: &str,
    agent: &AgentSpec,
) -> (f64, CompatibilitySource) {
    if let Some(t) = table {
        if let Some(v) = t
            .get(user, &agent.name)
            .or_else(|| t.get(user, &agent.protected_feature))
        {
            return (v, CompatibilitySource::File);
        }
    }
    if let Some(v) =
        profiles.and_then(|p| p.entropy_compatibility(user, &agent.protected_feature, catalog))
    {
        return (v, CompatibilitySource::Profile);
    }
    (NEUTRAL_COMPATIBILITY, CompatibilitySource::Neutral)
}

/// Loads `user_id,regime` rows giving the arrival order.
pub fn load_arrivals(path: impl AsRef<Path>) -> Result<Vec<(String, Option<String>)>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &["user_id", "regime"])?;
    rows(path, &mut rdr, 2)
        .map(|row| {
            let (_, rec) = row?;
            let regime = (!rec[1].is_empty()).then(|| rec[1].to_owned());
            Ok((rec[0].to_owned(), regime))
        })
        .collect()
}

/// Writes users' lists in the given user order.
pub fn write_recommendations<'a>(
    path: impl AsRef<Path>,
    lists: impl IntoIterator<Item = (&'a str, &'a ScoredList)>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["user_id", "item_id", "score"])?;
    for (user, list) in lists {
        for (item, score) in list.entries() {
            w.write_record([user, item.as_str(), &score.to_string()])?;
        }
    }
    flush(path, w)
}

/// Writes every catalog item, sorted by id.
pub fn write_item_features(path: impl AsRef<Path>, catalog: &Catalog) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let mut header = vec!["item_id".to_owned()];
    header.extend(catalog.features().iter().cloned());
    w.write_record(&header)?;
    for id in catalog.sorted_ids() {
        let mut rec = vec![id.to_string()];
        rec.extend((0..catalog.features().len()).map(|f| {
            if catalog.is_protected_at(&id, f) {
                "1"
            } else {
                "0"
            }
            .to_owned()
        }));
        w.write_record(&rec)?;
    }
    flush(path, w)
}

pub fn write_compatibilities<'a>(
    path: impl AsRef<Path>,
    rows: impl IntoIterator<Item = (&'a str, &'a str, f64)>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["user_id", "agent_name", "score"])?;
    for (user, agent, score) in rows {
        w.write_record([user, agent, &score.to_string()])?;
    }
    flush(path, w)
}

pub fn write_arrivals<'a>(
    path: impl AsRef<Path>,
    rows: impl IntoIterator<Item = (&'a str, Option<&'a str>)>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["user_id", "regime"])?;
    for (user, regime) in rows {
        w.write_record([user, regime.unwrap_or("")])?;
    }
    flush(path, w)
}

fn flush(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))?;
    let mut file = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    file.flush().map_err(|e| Error::io(path, e))
}
