//! Experiment harness: dataset generation, oracle labeling, training,
//! evaluation and report tables.

mod eval;

pub use eval::{
    cmd_eval, cmd_report, read_results, summarize_rows, write_results, EvalOptions, EvalSummary, MethodSummary, ReportRow,
    ResultRow, RowStatus, RESULT_COLUMNS,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{GsbfConfig, RminlpConfig};
use crate::bnb::{solve_exact, ExactOutcome, OracleTrace, SearchLimits};
use crate::conic::{solve_relaxation, Assignment};
use crate::dagger::{dagger_train, LabeledInstance, TrainRunConfig, TrainingReport};
use crate::error::{Error, Result};
use crate::netgen::{generate_instance, load_instance, save_instance, GenConfig, NetworkInstance};
use crate::par::{self, Execution};
use crate::policy::{save_policy, FeatureMode, HyperParams, PolicyModel};

pub const DATA_FORMAT_VERSION: &str = "v1";
/// Width of the seed range reserved for each split.
const SPLIT_SEED_SPAN: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Learned,
    Rminlp,
    Gsbf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Learned => "learned",
            Method::Rminlp => "rminlp",
            Method::Gsbf => "gsbf",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        [Method::Exact, Method::Learned, Method::Rminlp, Method::Gsbf]
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown method {name:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Validation => 1,
            Split::Test => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSettings {
    pub hyper_grid: Vec<HyperParams>,
    pub retrain_every: usize,
    pub feature_mode: FeatureMode,
    pub max_optimal_prune_rate: f64,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let d = TrainRunConfig::default();
        TrainingSettings {
            hyper_grid: d.hyper_grid,
            retrain_every: d.retrain_every,
            feature_mode: d.feature_mode,
            max_optimal_prune_rate: d.max_optimal_prune_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: GenConfig,
    /// Scenario of the test split when it differs from training.
    pub test_scenario: Option<GenConfig>,
    pub tsinr_sweep_db: Vec<f64>,
    pub splits: SplitSizes,
    pub seed: u64,
    pub limits: SearchLimits,
    pub methods: Vec<Method>,
    pub training: TrainingSettings,
    pub rminlp: RminlpConfig,
    pub gsbf: GsbfConfig,
    pub execution: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: GenConfig {
                num_rrh: 6,
                num_users: 4,
                ..GenConfig::default()
            },
            test_scenario: None,
            tsinr_sweep_db: vec![0.0, 2.0, 4.0, 6.0, 8.0],
            splits: SplitSizes {
                train: 100,
                validation: 30,
                test: 30,
            },
            seed: 1,
            limits: SearchLimits::default(),
            methods: vec![Method::Exact, Method::Learned, Method::Rminlp, Method::Gsbf],
            training: TrainingSettings::default(),
            rminlp: RminlpConfig::default(),
            gsbf: GsbfConfig::default(),
            execution: Execution::Parallel,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if let Some(t) = &self.test_scenario {
            t.validate()?;
        }
        if self.tsinr_sweep_db.is_empty() || self.tsinr_sweep_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("TSINR sweep must be a nonempty list of finite values".into()));
        }
        if self.seed > u64::MAX / (4 * SPLIT_SEED_SPAN) {
            return Err(Error::Config(format!("seed {} too large", self.seed)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        for h in &self.training.hyper_grid {
            h.validate()?;
        }
        Ok(())
    }

    pub fn max_tsinr_db(&self) -> f64 {
        self.tsinr_sweep_db.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scenario_for(&self, split: Split) -> &GenConfig {
        match (split, &self.test_scenario) {
            (Split::Test, Some(t)) => t,
            _ => &self.scenario,
        }
    }

    /// First seed of the range reserved for `split`; ranges never overlap.
    pub fn split_seed_base(&self, split: Split) -> u64 {
        self.seed * 4 * SPLIT_SEED_SPAN + split.index() * SPLIT_SEED_SPAN
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(json.as_bytes())))
    }

    pub fn train_run_config(&self) -> TrainRunConfig {
        TrainRunConfig {
            hyper_grid: self.training.hyper_grid.clone(),
            limits: self.limits,
            retrain_every: self.training.retrain_every,
            feature_mode: self.training.feature_mode,
            max_optimal_prune_rate: self.training.max_optimal_prune_rate,
            seed: self.seed,
            execution: self.execution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub seed: u64,
    pub tsinr_db: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub train: Vec<ManifestEntry>,
    pub validation: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
    /// Seeds dropped because the realization is infeasible at the largest
    /// swept TSINR.
    pub discarded: Vec<u64>,
}

impl Manifest {
    pub fn entries(&self, split: Split) -> &[ManifestEntry] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if m.version != DATA_FORMAT_VERSION {
            return Err(Error::Load {
                path: path.to_path_buf(),
                reason: format!("unsupported manifest version {:?}", m.version),
            });
        }
        Ok(m)
    }
}

/// File locations inside a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetLayout { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn instance(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.file)
    }

    pub fn trace(&self, split: Split, seed: u64) -> PathBuf {
        self.root.join("traces").join(split.name()).join(format!("{seed}.json"))
    }

    pub fn label_report(&self) -> PathBuf {
        self.root.join("labels.json")
    }

    pub fn policy(&self) -> PathBuf {
        self.root.join("policy.json")
    }

    pub fn training_report(&self) -> PathBuf {
        self.root.join("training_report.json")
    }

    pub fn results(&self) -> PathBuf {
        self.root.join("results.csv")
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn load_manifest(&self) -> Result<Manifest> {
        Manifest::load(&self.manifest())
    }
}

fn feasible_at(instance: &NetworkInstance, tsinr_db: f64, limits: &SearchLimits) -> Result<bool> {
    let probe = instance.with_tsinr_db(tsinr_db);
    Ok(solve_relaxation(&probe, &Assignment::root(probe.num_rrh), &limits.solver)?.is_optimal())
}

/// Draws the three splits. Train and validation realizations cycle through
/// the TSINR sweep; test realizations are stored at the first sweep point
/// and evaluated at every point.
pub fn cmd_gen(config: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    config.validate()?;
    let layout = DatasetLayout::new(out);
    let hash = config.hash()?;
    if layout.manifest().exists() {
        let existing = layout.load_manifest()?;
        if existing.config_hash != hash {
            return Err(Error::Config(format!(
                "{} holds a dataset for config {}, refusing to overwrite with config {}",
                out.display(),
                existing.config_hash,
                hash
            )));
        }
        log::info!("dataset at {} is up to date", out.display());
        return Ok(existing);
    }
    let max_db = config.max_tsinr_db();
    let mut manifest = Manifest {
        version: DATA_FORMAT_VERSION.to_string(),
        config_hash: hash,
        config: config.clone(),
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        discarded: Vec::new(),
    };
    for split in Split::ALL {
        let want = config.splits.get(split);
        let dir = out.join("instances").join(split.name());
        std::fs::create_dir_all(&dir)?;
        let base = config.split_seed_base(split);
        let scenario = config.scenario_for(split);
        let mut entries = Vec::with_capacity(want);
        let mut offset = 0;
        // candidates are drawn in parallel chunks but accepted in seed order
        while entries.len() < want {
            if offset >= SPLIT_SEED_SPAN {
                return Err(Error::Config(format!(
                    "could not find {want} feasible {} realizations",
                    split.name()
                )));
            }
            let chunk: Vec<u64> = (offset..(offset + 2 * (want - entries.len()) as u64).min(SPLIT_SEED_SPAN))
                .map(|o| base + o)
                .collect();
            offset += chunk.len() as u64;
            let drawn = par::map(config.execution, &chunk, |&seed| -> Result<(u64, Option<NetworkInstance>)> {
                let inst = generate_instance(scenario, seed)?;
                Ok((seed, feasible_at(&inst, max_db, &config.limits)?.then_some(inst)))
            });
            for item in drawn {
                if entries.len() == want {
                    break;
                }
                let (seed, inst) = item?;
                let Some(inst) = inst else {
                    manifest.discarded.push(seed);
                    continue;
                };
                let tsinr_db = match split {
                    Split::Test => config.tsinr_sweep_db[0],
                    _ => config.tsinr_sweep_db[entries.len() % config.tsinr_sweep_db.len()],
                };
                let file = format!("instances/{}/{seed}.json", split.name());
                save_instance(&inst.with_tsinr_db(tsinr_db), &out.join(&file))?;
                entries.push(ManifestEntry { seed, tsinr_db, file });
            }
        }
        match split {
            Split::Train => manifest.train = entries,
            Split::Validation => manifest.validation = entries,
            Split::Test => manifest.test = entries,
        }
    }
    manifest.discarded.sort_unstable();
    std::fs::write(layout.manifest(), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Verifies that `config` is the one the dataset was generated with.
pub fn check_config(manifest: &Manifest, config: &ExperimentConfig) -> Result<()> {
    let hash = config.hash()?;
    if hash != manifest.config_hash {
        return Err(Error::Config(format!(
            "config hash {hash} does not match the dataset's {}",
            manifest.config_hash
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelStatus {
    Labeled,
    Infeasible,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub split: Split,
    pub seed: u64,
    pub status: LabelStatus,
    pub optimal_objective: Option<f64>,
    pub socp_solves: u64,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub version: String,
    pub entries: Vec<LabelEntry>,
}

impl LabelReport {
    pub fn labeled(&self, split: Split) -> impl Iterator<Item = &LabelEntry> {
        self.entries
            .iter()
            .filter(move |e| e.split == split && e.status == LabelStatus::Labeled)
    }
}

/// Exact search on the training and validation splits, one trace per
/// feasible instance.
pub fn cmd_label(layout: &DatasetLayout, limits: &SearchLimits, exec: Execution) -> Result<LabelReport> {
    let manifest = layout.load_manifest()?;
    let mut entries = Vec::new();
    for split in [Split::Train, Split::Validation] {
        std::fs::create_dir_all(layout.trace(split, 0).parent().expect("trace dir"))?;
        let results = par::map(exec, manifest.entries(split), |entry| -> Result<LabelEntry> {
            let instance = load_instance(&layout.instance(entry))?;
            let mut label = LabelEntry {
                split,
                seed: entry.seed,
                status: LabelStatus::Labeled,
                optimal_objective: None,
                socp_solves: 0,
                reason: None,
            };
            match solve_exact(&instance, limits) {
                Ok(ExactOutcome::Solved { trace, stats, .. }) => {
                    trace.save(&layout.trace(split, entry.seed))?;
                    label.optimal_objective = Some(trace.optimal_objective);
                    label.socp_solves = stats.socp_solves;
                }
                Ok(ExactOutcome::Infeasible { stats }) => {
                    label.status = LabelStatus::Infeasible;
                    label.socp_solves = stats.socp_solves;
                    label.reason = Some("root relaxation infeasible".into());
                }
                Err(Error::Budget { stats }) => {
                    log::warn!("{} instance {} exceeded the node budget", split.name(), entry.seed);
                    label.status = LabelStatus::Budget;
                    label.socp_solves = stats.socp_solves;
                    label.reason = Some(format!("budget exhausted after {} nodes", stats.nodes_visited));
                }
                Err(e) => return Err(e),
            }
            Ok(label)
        });
        for r in results {
            entries.push(r?);
        }
    }
    let report = LabelReport {
        version: DATA_FORMAT_VERSION.to_string(),
        entries,
    };
    std::fs::write(layout.label_report(), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

pub fn load_label_report(layout: &DatasetLayout) -> Result<LabelReport> {
    let path = layout.label_report();
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Load {
        path: path.clone(),
        reason: format!("{e}; run `label` first"),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Load {
        path,
        reason: e.to_string(),
    })
}

/// Labeled instances of `split`, in manifest order.
pub fn load_labeled(layout: &DatasetLayout, manifest: &Manifest, labels: &LabelReport, split: Split) -> Result<Vec<LabeledInstance>> {
    let ok: std::collections::HashSet<u64> = labels.labeled(split).map(|e| e.seed).collect();
    manifest
        .entries(split)
        .iter()
        .filter(|e| ok.contains(&e.seed))
        .map(|e| {
            Ok(LabeledInstance {
                instance: load_instance(&layout.instance(e))?,
                trace: OracleTrace::load(&layout.trace(split, e.seed))?,
            })
        })
        .collect()
}

pub fn cmd_train(layout: &DatasetLayout, config: &TrainRunConfig) -> Result<(PolicyModel, TrainingReport)> {
    let manifest = layout.load_manifest()?;
    let labels = load_label_report(layout)?;
    let train = load_labeled(layout, &manifest, &labels, Split::Train)?;
    let validation = load_labeled(layout, &manifest, &labels, Split::Validation)?;
    let (model, report) = dagger_train(config, &train, &validation)?;
    save_policy(&model, &layout.policy())?;
    report.save(&layout.training_report())?;
    Ok((model, report))
}
