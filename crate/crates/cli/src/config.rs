//! Pipeline configuration: one JSON file, every seed explicit.
//!
//! ```json
//! {
//!   "paths": { "log": null, "artifacts": "artifacts", "reports": "reports" },
//!   "model": { "preset": "common_small", "path": null },
//!   "generate": { "n_traces": null, "seed": 42 },
//!   "kpi": { "kind": "loan_profit", "interest_rate": 0.15, "labor_cost": 36.0 },
//!   "agent_activities": [],
//!   "csv": { "case_id": "case_id", "activity": "activity", "timestamp": "timestamp" },
//!   "split": { "train_fraction": 0.8, "seed": 0, "exclude_undecidable_test": true },
//!   "k": 100,
//!   "kmeans_seed": 0,
//!   "kmeans_deduplicate": false,
//!   "build": { "gamma": 0.99, "attribution": "traversed" },
//!   "scaling": [{ "kind": "h0" }, { "kind": "linear" }, { "kind": "step", "n_t": 50 }, { "kind": "smooth", "lambda": 50.0 }],
//!   "train": { "episodes": 50000, "gamma": 0.99, "seed": 0 },
//!   "q_learning": false,
//!   "sim": { "n_traces": 5000, "seed": 7 },
//!   "fallback": false
//! }
//! ```
//!
//! Every field is optional. Relative paths resolve against the directory of
//! the config file. A missing `paths.log` means the log written by
//! `generate` into the artifacts directory. Empty `agent_activities` takes
//! the agent activities of the process model.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use prescriptor::eventlog::{CsvSchema, KpiSpec, SplitOptions};
use prescriptor::rl::{ScalingSpec, TrainConfig};
use prescriptor::simgen::ProcessModel;
use prescriptor::BuildOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub log: Option<PathBuf>,
    pub artifacts: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            log: None,
            artifacts: "artifacts".into(),
            reports: "reports".into(),
        }
    }
}

/// Process model used by `generate` and `eval-sim`: a preset, or a JSON
/// model file when `path` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSource {
    pub preset: String,
    pub path: Option<PathBuf>,
}

impl Default for ModelSource {
    fn default() -> Self {
        ModelSource {
            preset: "common_small".into(),
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Defaults to the model's own `n_traces`.
    pub n_traces: Option<usize>,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            n_traces: None,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_traces: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_traces: 5000,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub model: ModelSource,
    pub generate: GenerateConfig,
    pub kpi: KpiSpec,
    pub agent_activities: Vec<String>,
    pub csv: CsvSchema,
    pub split: SplitOptions,
    pub k: usize,
    pub kmeans_seed: u64,
    pub kmeans_deduplicate: bool,
    pub build: BuildOptions,
    pub scaling: Vec<ScalingSpec>,
    pub train: TrainConfig,
    /// Also train a Q-learning policy next to the scaled Monte Carlo ones.
    pub q_learning: bool,
    pub sim: SimConfig,
    /// Recommend for unseen states from the nearest seen state.
    pub fallback: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            model: ModelSource::default(),
            generate: GenerateConfig::default(),
            kpi: KpiSpec::default(),
            agent_activities: Vec::new(),
            csv: CsvSchema::default(),
            split: SplitOptions::default(),
            k: 100,
            kmeans_seed: 0,
            kmeans_deduplicate: false,
            build: BuildOptions::default(),
            scaling: ScalingSpec::standard_set(),
            train: TrainConfig::default(),
            q_learning: false,
            sim: SimConfig::default(),
            fallback: false,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("--config", format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config("--config", e.to_string()))
    }

    /// Replaces every seed.
    pub fn override_seeds(&mut self, seed: u64) {
        self.generate.seed = seed;
        self.split.seed = seed;
        self.kmeans_seed = seed;
        self.train.seed = seed;
        self.sim.seed = seed;
    }

    fn hash_of(&self, keep: impl Fn(&str) -> bool) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let map = v.as_object_mut().expect("config is an object");
        map.retain(|k, _| keep(k));
        if let Some(paths) = map.get_mut("paths").and_then(|p| p.as_object_mut()) {
            paths.retain(|k, _| k == "log");
        }
        sha256_hex(serde_json::to_string(&v).expect("value serializes").as_bytes())
    }

    /// Hash of everything but the output locations.
    pub fn config_hash(&self) -> String {
        self.hash_of(|_| true)
    }

    /// Hash of the settings trained artifacts depend on.
    pub fn training_hash(&self) -> String {
        self.hash_of(|k| !matches!(k, "sim" | "fallback"))
    }

    pub fn policy_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.scaling.iter().map(|s| s.name().to_string()).collect();
        if self.q_learning {
            names.push("qlearning".into());
        }
        names
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.k == 0 {
            return Err(CliError::config("k", "must be at least 1"));
        }
        if self.scaling.is_empty() && !self.q_learning {
            return Err(CliError::config("scaling", "no policy to train"));
        }
        let names = self.policy_names();
        let distinct: BTreeSet<&String> = names.iter().collect();
        if distinct.len() != names.len() {
            return Err(CliError::config("scaling", "each scaling kind may appear once"));
        }
        let f = self.split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::config(
                "split.train_fraction",
                format!("{f} is not in (0, 1)"),
            ));
        }
        self.train
            .validate()
            .map_err(|e| CliError::config("train", e.to_string()))?;
        if !(0.0..=1.0).contains(&self.build.gamma) {
            return Err(CliError::config("build.gamma", "must lie in [0, 1]"));
        }
        if self.sim.n_traces == 0 {
            return Err(CliError::config("sim.n_traces", "must be at least 1"));
        }
        if self.generate.n_traces == Some(0) {
            return Err(CliError::config("generate.n_traces", "must be at least 1"));
        }
        if self.model.path.is_none() && ProcessModel::preset_names().all(|n| n != self.model.preset) {
            let known: Vec<&str> = ProcessModel::preset_names().collect();
            return Err(CliError::config(
                "model.preset",
                format!("unknown preset `{}`; known: {}", self.model.preset, known.join(", ")),
            ));
        }
        Ok(())
    }
}

/// A loaded configuration with its paths resolved.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
    pub artifacts: PathBuf,
    pub reports: PathBuf,
    /// `--out`: replaces the output location of the command.
    pub out: Option<PathBuf>,
}

impl Context {
    /// `artifacts_env` replaces `paths.artifacts`.
    pub fn new(
        config_path: Option<&Path>,
        seed_override: Option<u64>,
        out: Option<PathBuf>,
        artifacts_env: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        let (mut config, base_dir) = match config_path {
            Some(p) => {
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (PipelineConfig::from_file(p)?, base)
            }
            None => (PipelineConfig::default(), PathBuf::new()),
        };
        if let Some(seed) = seed_override {
            config.override_seeds(seed);
        }
        config.validate()?;
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let artifacts = match artifacts_env {
            Some(p) => p,
            None => resolve(&config.paths.artifacts),
        };
        let reports = resolve(&config.paths.reports);
        if let Some(path) = &config.model.path {
            if !resolve(path).is_file() {
                return Err(CliError::config(
                    "model.path",
                    format!("{} does not exist", resolve(path).display()),
                ));
            }
        }
        Ok(Context {
            config,
            base_dir,
            artifacts,
            reports,
            out,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Input log of `train`, output of `generate`.
    pub fn log_path(&self) -> PathBuf {
        match &self.config.paths.log {
            Some(p) => self.resolve(p),
            None => self.artifacts.join("log.csv"),
        }
    }

    /// The configured process model, scoring traces with the configured KPI.
    pub fn model(&self) -> Result<ProcessModel, CliError> {
        let mut model = match &self.config.model.path {
            Some(p) => {
                let path = self.resolve(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::config("model.path", format!("{}: {e}", path.display())))?;
                ProcessModel::from_json(&text).map_err(|e| CliError::config("model.path", e.to_string()))
            }
            None => ProcessModel::preset(&self.config.model.preset)
                .map_err(|e| CliError::config("model.preset", e.to_string())),
        }?;
        model.kpi = self.config.kpi.clone();
        Ok(model)
    }

    pub fn agent_activities(&self) -> Result<Vec<String>, CliError> {
        if self.config.agent_activities.is_empty() {
            Ok(self.model()?.agent_activities().into_iter().collect())
        } else {
            Ok(self.config.agent_activities.clone())
        }
    }
}
