use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::DqnConfig;
use crate::eval::{DEFAULT_RESAMPLES, DEFAULT_THRESHOLD_POINTS};
use crate::generation::DEFAULT_SECTOR_SIZE;
use crate::grid::{is_supported_pairing, Cmdp, ContextSpace, EnvKind, DEFAULT_CM_WALLS, DEFAULT_MAX_STEPS};
use crate::planning::DesiredMode;
use crate::repr::ReprConfig;
use crate::session::SessionConfig;

pub const DEFAULT_SEEDS: [u64; 5] = [42, 84, 126, 168, 210];
pub const DEFAULT_STEPS: u64 = 4_000_000;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Experiment description as stored on disk (JSON). Unset optional fields
/// take defaults that depend on the environment and context space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub env: EnvKind,
    pub context_space: ContextSpace,
    pub representation: String,
    #[serde(default)]
    pub entity_count: Option<usize>,
    #[serde(default = "default_map_size")]
    pub map_size: (usize, usize),
    #[serde(default = "default_sector_size")]
    pub sector_size: (usize, usize),
    #[serde(default = "default_cm_walls")]
    pub cm_walls: (usize, usize),
    #[serde(default = "default_max_steps")]
    pub max_episode_steps: u32,
    #[serde(default)]
    pub n_src: Option<usize>,
    #[serde(default)]
    pub n_tgt: Option<usize>,
    #[serde(default = "default_steps")]
    pub steps_src: u64,
    #[serde(default = "default_steps")]
    pub steps_tgt: u64,
    #[serde(default)]
    pub dqn: DqnConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_eval_intervals")]
    pub eval_intervals: u32,
    #[serde(default = "default_threshold_points")]
    pub threshold_points: usize,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub desired_mode: DesiredMode,
    #[serde(default = "default_true")]
    pub source_on_target: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_map_size() -> (usize, usize) {
    (6, 6)
}
fn default_sector_size() -> (usize, usize) {
    DEFAULT_SECTOR_SIZE
}
fn default_cm_walls() -> (usize, usize) {
    DEFAULT_CM_WALLS
}
fn default_max_steps() -> u32 {
    DEFAULT_MAX_STEPS
}
fn default_steps() -> u64 {
    DEFAULT_STEPS
}
fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}
fn default_eval_episodes() -> usize {
    50
}
fn default_eval_intervals() -> u32 {
    100
}
fn default_threshold_points() -> usize {
    DEFAULT_THRESHOLD_POINTS
}
fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}
fn default_true() -> bool {
    true
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Source/target context-set sizes used when the config leaves them unset.
pub fn default_context_sizes(env: EnvKind, space: ContextSpace) -> (usize, usize) {
    match (env, space) {
        (EnvKind::GN, ContextSpace::EL) => (8, 16),
        (_, ContextSpace::CM) => (250, 500),
        _ => (100, 200),
    }
}

impl ExperimentConfig {
    pub fn new(env: EnvKind, context_space: ContextSpace, representation: &str) -> Self {
        Self {
            name: None,
            env,
            context_space,
            representation: representation.to_string(),
            entity_count: None,
            map_size: default_map_size(),
            sector_size: default_sector_size(),
            cm_walls: default_cm_walls(),
            max_episode_steps: default_max_steps(),
            n_src: None,
            n_tgt: None,
            steps_src: DEFAULT_STEPS,
            steps_tgt: DEFAULT_STEPS,
            dqn: DqnConfig::default(),
            seeds: default_seeds(),
            eval_episodes: default_eval_episodes(),
            eval_intervals: default_eval_intervals(),
            threshold_points: default_threshold_points(),
            bootstrap_resamples: default_resamples(),
            desired_mode: DesiredMode::default(),
            source_on_target: true,
            out_dir: default_out_dir(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Parses, fills defaults and validates.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: Self = serde_json::from_str(text)?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    /// Replaces unset fields with their defaults and checks consistency.
    pub fn resolve(&mut self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !is_supported_pairing(self.env, self.context_space) {
            return invalid(format!(
                "{:?} does not support the {:?} context space",
                self.env, self.context_space
            ));
        }
        let repr = self.repr()?;
        let (src, tgt) = default_context_sizes(self.env, self.context_space);
        self.n_src.get_or_insert(src);
        self.n_tgt.get_or_insert(tgt);
        self.entity_count.get_or_insert(self.env.default_entity_count());
        if self.name.is_none() {
            self.name = Some(format!("{:?}-{:?}-{}", self.env, self.context_space, repr));
        }
        if self.seeds.is_empty() {
            return invalid("at least one seed is required".into());
        }
        if self.steps_src == 0 || self.steps_tgt == 0 {
            return invalid("training budgets must be positive".into());
        }
        if self.eval_episodes == 0 || self.eval_intervals == 0 || self.threshold_points < 2 {
            return invalid("evaluation settings must be positive (threshold grid needs 2+ points)".into());
        }
        if self.n_src == Some(0) || self.n_tgt == Some(0) {
            return invalid("context sets must be non-empty".into());
        }
        if self.cm_walls.0 > self.cm_walls.1 {
            return invalid("cm_walls range is empty".into());
        }
        let name = self.name.as_deref().unwrap_or_default();
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            return invalid(format!("config name `{name}` is not a valid directory name"));
        }
        self.dqn.validate().map_err(ConfigError::Invalid)?;
        let cmdp = self.cmdp()?;
        let needed = (self.n_src.unwrap() + self.n_tgt.unwrap()) as f64;
        if needed > cmdp.context_count() {
            return invalid(format!(
                "{needed} contexts requested but only {} exist",
                cmdp.context_count()
            ));
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_default()
    }

    pub fn repr(&self) -> Result<ReprConfig, ConfigError> {
        self.representation
            .parse()
            .map_err(|e: crate::repr::ReprError| ConfigError::Invalid(e.to_string()))
    }

    pub fn cmdp(&self) -> Result<Cmdp, ConfigError> {
        let mut cmdp = Cmdp::with_size(
            self.env,
            self.context_space,
            self.map_size.0,
            self.map_size.1,
            self.entity_count.unwrap_or(self.env.default_entity_count()),
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cmdp.cm_walls = self.cm_walls;
        cmdp.max_steps = self.max_episode_steps;
        cmdp.gamma = self.dqn.gamma;
        Ok(cmdp)
    }

    pub fn session(&self, seed: u64) -> Result<SessionConfig, ConfigError> {
        let mut s = SessionConfig::new(self.cmdp()?, self.repr()?, seed);
        s.dqn = self.dqn.clone();
        s.n_src = self.n_src.unwrap_or(default_context_sizes(self.env, self.context_space).0);
        s.n_tgt = self.n_tgt.unwrap_or(default_context_sizes(self.env, self.context_space).1);
        s.steps_src = self.steps_src;
        s.steps_tgt = self.steps_tgt;
        s.eval_episodes = self.eval_episodes;
        s.eval_intervals = self.eval_intervals;
        s.sector_size = self.sector_size;
        s.desired_mode = self.desired_mode;
        s.source_on_target = self.source_on_target;
        Ok(s)
    }

    /// Family label such as `GN+CM`.
    pub fn cmdp_label(&self) -> String {
        format!("{:?}+{:?}", self.env, self.context_space)
    }
}
