//! Experiment orchestration and output files.
//!
//! A run directory holds `steps.csv`, `summary.csv`, `allocation.csv`,
//! `fairness_series.csv` and `manifest.toml`. Grid runs put one such
//! directory per cell under the output root, plus `grid_summary.csv`.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{self, DataSource, ExperimentConfig, IngestPaths};
use crate::datagen::{self, GenSpec, SyntheticDataset};
use crate::error::{Error, Result};
use crate::ingest::{self, NEUTRAL_COMPATIBILITY};
use crate::metrics::{self, FairnessSummary};
use crate::model::{AgentSpec, Catalog, ItemId};
use crate::sim::{self, Arrival, SimConfig, StepRecord};

pub const STEPS_FILE: &str = "steps.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const ALLOCATION_FILE: &str = "allocation.csv";
pub const FAIRNESS_FILE: &str = "fairness_series.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const GRID_SUMMARY_FILE: &str = "grid_summary.csv";

/// Catalog and arrival sequence shared by every cell of an experiment.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub catalog: Catalog,
    pub arrivals: Vec<Arrival>,
}

/// Builds arrivals from a generated dataset; compatibility is the user's
/// propensity for each agent's feature.
pub fn arrivals_from_dataset(
    data: &SyntheticDataset,
    agents: &[AgentSpec],
) -> Result<Vec<Arrival>> {
    data.arrivals
        .iter()
        .map(|&u| {
            let user = &data.users[u];
            let compatibility = agents
                .iter()
                .map(|a| {
                    data.compatibility(u, &a.protected_feature).ok_or_else(|| {
                        Error::Config(format!(
                            "agent {}: feature {:?} is not generated",
                            a.name, a.protected_feature
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Arrival {
                user_id: user.id.clone(),
                regime: Some(user.regime.clone()),
                candidates: data.recommendations[u].clone(),
                compatibility,
            })
        })
        .collect()
}

fn prepare_ingested(paths: &IngestPaths, agents: &[AgentSpec]) -> Result<PreparedData> {
    let recs = ingest::load_recommendations(&paths.recommendations)?;
    let features: Vec<&str> = agents
        .iter()
        .map(|a| a.protected_feature.as_str())
        .collect();
    let mut catalog = ingest::load_item_features(&paths.features, &features)?;
    ingest::cover_items(&mut catalog, recs.items());
    let table = paths
        .compatibilities
        .as_ref()
        .map(ingest::load_compatibilities)
        .transpose()?;
    let profiles = paths
        .profiles
        .as_ref()
        .map(ingest::load_rating_profiles)
        .transpose()?;
    let order: Vec<(String, Option<String>)> = match &paths.arrivals {
        Some(p) => ingest::load_arrivals(p)?,
        None => recs.users.iter().map(|u| (u.clone(), None)).collect(),
    };
    let mut neutral = 0usize;
    let arrivals = order
        .into_iter()
        .map(|(user, regime)| {
            let compatibility = agents
                .iter()
                .map(|a| {
                    let (v, src) = ingest::resolve_compatibility(
                        table.as_ref(),
                        profiles.as_ref(),
                        &catalog,
                        &user,
                        a,
                    );
                    if src == ingest::CompatibilitySource::Neutral {
                        neutral += 1;
                    }
                    v
                })
                .collect();
            Arrival {
                candidates: recs.get(&user).cloned().unwrap_or_default(),
                user_id: user,
                regime,
                compatibility,
            }
        })
        .collect();
    if neutral > 0 {
        log::info!(
            "{neutral} arrival/agent pairs use neutral compatibility {NEUTRAL_COMPATIBILITY}"
        );
    }
    Ok(PreparedData { catalog, arrivals })
}

/// Loads or generates the experiment's data.
pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData> {
    match &config.data {
        DataSource::Generated(spec) => {
            let data = datagen::generate(spec)?;
            Ok(PreparedData {
                catalog: data.catalog(),
                arrivals: arrivals_from_dataset(&data, &config.agents)?,
            })
        }
        DataSource::Ingested(paths) => prepare_ingested(paths, &config.agents),
    }
}

/// Headline numbers for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub records: usize,
    pub list_length: usize,
    pub agents: Vec<String>,
    /// `None` when the run has no records.
    pub ndcg: Option<f64>,
    pub fairness: Option<FairnessSummary>,
    pub baseline: Option<FairnessSummary>,
    pub allocation_totals: Vec<f64>,
}

impl RunSummary {
    pub fn compute(
        records: &[StepRecord],
        agents: &[AgentSpec],
        list_length: usize,
    ) -> Result<Self> {
        let (ndcg, fairness, baseline) = if records.is_empty() {
            (None, None, None)
        } else {
            (
                Some(metrics::mean_ndcg(records, list_length)?),
                Some(metrics::experiment_fairness(records, agents)?),
                Some(metrics::baseline_fairness(records, agents)?),
            )
        };
        let mut allocation_totals = metrics::allocation_totals(records);
        allocation_totals.resize(agents.len(), 0.0);
        Ok(RunSummary {
            records: records.len(),
            list_length,
            agents: agents.iter().map(|a| a.name.clone()).collect(),
            ndcg,
            fairness,
            baseline,
            allocation_totals,
        })
    }

    /// `(metric, value)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![("records".to_owned(), self.records as f64)];
        if let Some(n) = self.ndcg {
            rows.push((format!("ndcg@{}", self.list_length), n));
        }
        for (label, s) in [
            ("fairness", &self.fairness),
            ("baseline_fairness", &self.baseline),
        ] {
            if let Some(s) = s {
                for (name, v) in self.agents.iter().zip(&s.per_agent) {
                    rows.push((format!("{label}_{name}"), *v));
                }
                rows.push((format!("{label}_average"), s.average));
            }
        }
        for (name, v) in self.agents.iter().zip(&self.allocation_totals) {
            rows.push((format!("allocation_total_{name}"), *v));
        }
        rows
    }
}

/// Outcome of one grid cell.
#[derive(Debug, Clone)]
pub struct CellReport {
    pub name: Option<String>,
    pub dir: PathBuf,
    pub config: SimConfig,
    pub summary: RunSummary,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn join_ids(ids: &[ItemId]) -> String {
    ids.iter().map(ItemId::as_str).collect::<Vec<_>>().join(" ")
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn steps_header(agents: &[AgentSpec]) -> Vec<String> {
    let mut h: Vec<String> = ["arrival", "user_id", "regime"].map(String::from).into();
    for prefix in [
        "fairness",
        "compatibility",
        "weight",
        "protected",
        "baseline_protected",
    ] {
        h.extend(agents.iter().map(|a| format!("{prefix}_{}", a.name)));
    }
    h.extend(["delivered", "scores", "original"].map(String::from));
    h
}

/// Writes one row per step record.
pub fn write_steps(path: &Path, records: &[StepRecord], agents: &[AgentSpec]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(steps_header(agents))?;
    for r in records {
        let mut row = vec![
            r.arrival.to_string(),
            r.user_id.clone(),
            r.regime.clone().unwrap_or_default(),
        ];
        for v in [&r.fairness, &r.compatibility, &r.weights] {
            row.extend(v.iter().map(f64::to_string));
        }
        for v in [&r.protected_delivered, &r.protected_original] {
            row.extend(v.iter().map(usize::to_string));
        }
        row.push(join_ids(&r.delivered));
        row.push(join_f64(&r.scores));
        row.push(join_ids(&r.original));
        w.write_record(&row)?;
    }
    finish(path, w)
}

/// Reads a `steps.csv` written by [`write_steps`].
pub fn read_steps(path: &Path, agents: &[AgentSpec]) -> Result<Vec<StepRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::load(path, 0, e.to_string()))?;
    let expected = steps_header(agents);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != expected {
        return Err(Error::load(
            path,
            1,
            "header does not match the manifest's agents",
        ));
    }
    let n = agents.len();
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::load(path, line, format!("cannot parse {what}"));
        let f64s = |range: std::ops::Range<usize>| -> Result<Vec<f64>> {
            range
                .map(|i| rec[i].parse::<f64>().map_err(|_| bad(&expected[i])))
                .collect()
        };
        let counts = |range: std::ops::Range<usize>| -> Result<Vec<usize>> {
            range
                .map(|i| rec[i].parse::<usize>().map_err(|_| bad(&expected[i])))
                .collect()
        };
        let ids = |s: &str| -> Vec<ItemId> { s.split_whitespace().map(ItemId::new).collect() };
        let base = 3;
        let tail = base + 5 * n;
        let scores = rec[tail + 1]
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| bad("scores")))
            .collect::<Result<_>>()?;
        records.push(StepRecord {
            arrival: rec[0].parse().map_err(|_| bad("arrival"))?,
            user_id: rec[1].to_owned(),
            regime: (!rec[2].is_empty()).then(|| rec[2].to_owned()),
            fairness: f64s(base..base + n)?,
            compatibility: f64s(base + n..base + 2 * n)?,
            weights: f64s(base + 2 * n..base + 3 * n)?,
            protected_delivered: counts(base + 3 * n..base + 4 * n)?,
            protected_original: counts(base + 4 * n..tail)?,
            delivered: ids(&rec[tail]),
            scores,
            original: ids(&rec[tail + 2]),
        });
    }
    Ok(records)
}

fn write_series(
    path: &Path,
    series: &[Vec<f64>],
    agents: &[AgentSpec],
    records: &[StepRecord],
) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["arrival".to_owned()];
    header.extend(agents.iter().map(|a| a.name.clone()));
    w.write_record(&header)?;
    for (t, r) in records.iter().enumerate() {
        let mut row = vec![r.arrival.to_string()];
        row.extend(series.iter().map(|s| s[t].to_string()));
        w.write_record(&row)?;
    }
    finish(path, w)
}

fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["metric", "value"])?;
    for (metric, value) in summary.rows() {
        w.write_record([metric, value.to_string()])?;
    }
    finish(path, w)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the five run files into `dir`.
pub fn write_run(
    dir: &Path,
    experiment: &ExperimentConfig,
    cell: &SimConfig,
    records: &[StepRecord],
) -> Result<RunSummary> {
    create_dir(dir)?;
    let agents = &cell.agents;
    write_steps(&dir.join(STEPS_FILE), records, agents)?;
    let summary = RunSummary::compute(records, agents, cell.list_length)?;
    write_summary(&dir.join(SUMMARY_FILE), &summary)?;
    write_series(
        &dir.join(ALLOCATION_FILE),
        &metrics::allocation_counts(records),
        agents,
        records,
    )?;
    write_series(
        &dir.join(FAIRNESS_FILE),
        &metrics::windowed_fairness_series(records),
        agents,
        records,
    )?;
    write_text(
        &dir.join(MANIFEST_FILE),
        &config::to_toml(&experiment.manifest_for(cell))?,
    )?;
    Ok(summary)
}

/// Runs every cell and writes its files under `outdir`.
///
/// Cells run in parallel; each simulation is sequential, so output does
/// not depend on thread count.
pub fn run_experiment(config: &ExperimentConfig, outdir: &Path) -> Result<Vec<CellReport>> {
    let data = prepare_data(config)?;
    log::info!(
        "{} arrivals over {} catalog items",
        data.arrivals.len(),
        data.catalog.len()
    );
    create_dir(outdir)?;
    let reports = config
        .cells()
        .into_par_iter()
        .map(|cell| {
            let dir = match &cell.name {
                Some(n) => outdir.join(n),
                None => outdir.to_path_buf(),
            };
            let log = sim::run(&cell.sim, &data.arrivals, &data.catalog)?;
            let summary = write_run(&dir, config, &cell.sim, &log.records)?;
            log::info!(
                "{}: {} records",
                cell.name.as_deref().unwrap_or("run"),
                log.records.len()
            );
            Ok(CellReport {
                name: cell.name,
                dir,
                config: cell.sim,
                summary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if config.is_grid() {
        write_grid_summary(&outdir.join(GRID_SUMMARY_FILE), &reports)?;
    }
    Ok(reports)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_grid_summary(path: &Path, reports: &[CellReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "cell",
        "allocation",
        "choice",
        "seed",
        "records",
        "ndcg",
        "fairness_average",
        "baseline_fairness_average",
    ])?;
    for r in reports {
        w.write_record([
            r.name.clone().unwrap_or_default(),
            r.config.allocation.to_string(),
            r.config.choice.to_string(),
            r.config.seed.to_string(),
            r.summary.records.to_string(),
            opt(r.summary.ndcg),
            opt(r.summary.fairness.as_ref().map(|f| f.average)),
            opt(r.summary.baseline.as_ref().map(|f| f.average)),
        ])?;
    }
    finish(path, w)
}

/// Writes a generated dataset in the ingest schemas plus a manifest.
pub fn generate_dataset(spec: &GenSpec, outdir: &Path) -> Result<SyntheticDataset> {
    let data = datagen::generate(spec)?;
    create_dir(outdir)?;
    ingest::write_recommendations(
        outdir.join("recommendations.csv"),
        data.users
            .iter()
            .map(|u| u.id.as_str())
            .zip(&data.recommendations),
    )?;
    ingest::write_item_features(outdir.join("item_features.csv"), &data.catalog())?;
    let compat: Vec<(&str, &str, f64)> = data
        .users
        .iter()
        .enumerate()
        .flat_map(|(u, user)| {
            let data = &data;
            spec.feature_names.iter().map(move |f| {
                (
                    user.id.as_str(),
                    f.as_str(),
                    data.compatibility(u, f).expect("generated feature"),
                )
            })
        })
        .collect();
    ingest::write_compatibilities(outdir.join("compatibilities.csv"), compat)?;
    ingest::write_arrivals(
        outdir.join("arrivals.csv"),
        data.arrivals.iter().map(|&u| {
            (
                data.users[u].id.as_str(),
                Some(data.users[u].regime.as_str()),
            )
        }),
    )?;
    let mut manifest = toml::Table::new();
    manifest.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    let body = toml::Table::try_from(spec)
        .map_err(|e| Error::Config(format!("cannot serialize genspec: {e}")))?;
    manifest.extend(body);
    write_text(&outdir.join(MANIFEST_FILE), &manifest.to_string())?;
    Ok(data)
}

fn summarize_dir(dir: &Path, name: Option<String>) -> Result<CellReport> {
    let experiment = config::parse_config(dir.join(MANIFEST_FILE))?;
    let cells = experiment.cells();
    let [cell] = cells.as_slice() else {
        return Err(Error::Config(format!(
            "{}: manifest describes more than one run",
            dir.display()
        )));
    };
    let records = read_steps(&dir.join(STEPS_FILE), &cell.sim.agents)?;
    let summary = RunSummary::compute(&records, &cell.sim.agents, cell.sim.list_length)?;
    Ok(CellReport {
        name,
        dir: dir.to_path_buf(),
        config: cell.sim.clone(),
        summary,
    })
}

/// Recomputes summaries from the files of a run or grid directory.
pub fn summarize(outdir: &Path) -> Result<Vec<CellReport>> {
    if outdir.join(MANIFEST_FILE).is_file() {
        return Ok(vec![summarize_dir(outdir, None)?]);
    }
    let entries = fs::read_dir(outdir).map_err(|e| Error::io(outdir, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Config(format!(
            "{}: no run directories found",
            outdir.display()
        )));
    }
    dirs.into_iter()
        .map(|d| {
            let name = d.file_name().map(|n| n.to_string_lossy().into_owned());
            summarize_dir(&d, name)
        })
        .collect()
}

/// Plain-text table of reports.
pub fn render_reports(reports: &[CellReport]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"));
    let mut out = format!(
        "{:<28} {:>7} {:>8} {:>9} {:>9}\n",
        "run", "records", "ndcg", "fairness", "baseline"
    );
    for r in reports {
        let name = r
            .name
            .clone()
            .unwrap_or_else(|| format!("{}_{}", r.config.allocation, r.config.choice));
        out.push_str(&format!(
            "{:<28} {:>7} {:>8} {:>9} {:>9}\n",
            name,
            r.summary.records,
            fmt(r.summary.ndcg),
            fmt(r.summary.fairness.as_ref().map(|f| f.average)),
            fmt(r.summary.baseline.as_ref().map(|f| f.average)),
        ));
    }
    out
}
