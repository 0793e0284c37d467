//! Implementations of the CLI subcommands. Each reads an optional TOML
//! config, writes its CSVs into an output directory and returns what it
//! computed so callers (and tests) can inspect it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use llmchain_core::analytics::{self, AnalyticsOutput, MetricScores, ScoreMatrix};
use llmchain_core::audit::{audit, AuditReport};
use llmchain_core::backends::{load_dataset, DatasetFormat};
use llmchain_core::bench::{self, BenchConfig, BenchRow};
use llmchain_core::fig2::{self, Fig2Config, TrajectoryPoint};
use llmchain_core::reputation::HyperParams;
use llmchain_core::scenario::{run_scenario, RunReport, Scenario};
use llmchain_core::scorers::FileScorer;

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base.and_then(Path::parent) {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub struct RunOutcome {
    pub report: RunReport,
    pub audit: AuditReport,
}

/// `run`: replays a scenario, audits the result and writes
/// `trajectories.csv`, `leaderboard.csv`, `events.jsonl`, `ledger.log`,
/// `records/` and `audit.json`.
pub fn run(config: &Path, out_dir: &Path, seed: Option<u64>) -> Result<RunOutcome> {
    let mut scenario = Scenario::load(config)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let report = run_scenario(&scenario)?;
    let audit = audit(
        report.events(),
        report.ledger.store(),
        report.ledger.hyperparams(),
        report.ledger.state(),
    );
    report.write(out_dir)?;
    write(out_dir, "audit.json", &serde_json::to_string_pretty(&audit)?)?;
    Ok(RunOutcome { report, audit })
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig2Settings {
    pub hyperparams: HyperParams,
    pub fig2: Fig2Config,
}

/// `fig2`: writes `fig2.csv`.
pub fn fig2(config: Option<&Path>, out_dir: &Path) -> Result<Vec<TrajectoryPoint>> {
    let settings: Fig2Settings = match config {
        Some(p) => read_toml(p)?,
        None => Fig2Settings::default(),
    };
    let points = fig2::run_fig2(&settings.hyperparams, &settings.fig2)?;
    write(out_dir, "fig2.csv", &fig2::to_csv(&points))?;
    Ok(points)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub bench: BenchConfig,
}

/// `bench`: writes `bench.csv`.
pub fn bench(config: Option<&Path>, out_dir: &Path, overrides: impl FnOnce(&mut BenchConfig)) -> Result<Vec<BenchRow>> {
    let mut settings: BenchSettings = match config {
        Some(p) => read_toml(p)?,
        None => BenchSettings::default(),
    };
    overrides(&mut settings.bench);
    let rows = bench::run_benchmark(&settings.bench)?;
    write(out_dir, "bench.csv", &bench::to_csv(&rows))?;
    Ok(rows)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSource {
    /// Summary-row name; defaults to the file stem.
    #[serde(default)]
    pub metric: Option<String>,
    pub path: PathBuf,
    /// Only use rows scored against this reference model.
    #[serde(default)]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsSettings {
    pub scores: Vec<ScoreSource>,
    /// Human-winner labels.
    pub truth: Option<PathBuf>,
    /// Interaction traces: adds a lexical metric against the ground truth
    /// and supplies question contexts for win rates.
    pub dataset: Option<PathBuf>,
    pub tie_epsilon: f64,
}

impl Default for AnalyticsSettings {
    fn default() -> Self {
        Self {
            scores: Vec::new(),
            truth: None,
            dataset: None,
            tie_epsilon: analytics::DEFAULT_TIE_EPSILON,
        }
    }
}

impl AnalyticsSettings {
    pub fn load(path: &Path) -> Result<Self> {
        let mut s: Self = read_toml(path)?;
        for src in &mut s.scores {
            src.path = resolve(Some(path), &src.path);
        }
        s.truth = s.truth.map(|t| resolve(Some(path), &t));
        s.dataset = s.dataset.map(|d| resolve(Some(path), &d));
        Ok(s)
    }
}

/// `analytics`: writes `summary.csv`, `win_rates.csv` and `confusion.csv`.
pub fn analytics(settings: &AnalyticsSettings, out_dir: &Path) -> Result<AnalyticsOutput> {
    let traces = match &settings.dataset {
        Some(p) => Some(load_dataset(p, DatasetFormat::from_path(p))?),
        None => None,
    };
    let mut metrics = Vec::new();
    for src in &settings.scores {
        let scorer = FileScorer::load(&src.path)?;
        let mut matrix = ScoreMatrix::from_file(&scorer, src.reference.as_deref());
        if let Some(t) = &traces {
            matrix = matrix.with_contexts(t);
        }
        let name = src.metric.clone().unwrap_or_else(|| {
            src.path
                .file_stem()
                .map_or_else(|| "scores".into(), |s| s.to_string_lossy().into_owned())
        });
        metrics.push(MetricScores { name, matrix });
    }
    if let Some(t) = &traces {
        metrics.push(MetricScores {
            name: "lexical".into(),
            matrix: ScoreMatrix::from_traces(t, None),
        });
    }
    if metrics.is_empty() {
        bail!("nothing to analyse: give score files or a dataset");
    }
    let truth = match &settings.truth {
        Some(p) => Some(analytics::load_truth(p)?),
        None => None,
    };
    let out = analytics::run_analytics(&metrics, truth.as_deref(), settings.tie_epsilon)?;
    out.write(out_dir)
        .with_context(|| format!("writing analytics into {}", out_dir.display()))?;
    Ok(out)
}
