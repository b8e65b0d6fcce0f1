use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::agent::{save_checkpoint, Checkpoint};
use crate::grid::Context;
use crate::repr::ReprConfig;
use crate::session::{run_session, SessionResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAILURE_MARKER: &str = "FAILED";
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Everything needed to replay one seed of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub cmdp: String,
    pub representation: ReprConfig,
    pub seed: u64,
    pub src_contexts: Vec<Context>,
    pub tgt_contexts: Vec<Context>,
    pub artifacts: BTreeMap<String, String>,
    pub code_version: String,
    pub started_unix_secs: u64,
    pub elapsed_secs: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

pub fn seed_dir(out: &Path, cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    out.join(cfg.name()).join(seed.to_string())
}

fn write(path: &Path, contents: &str) -> Result<(), String> {
    std::fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn contexts_text(result: &SessionResult) -> String {
    let mut out = String::new();
    for (role, set) in [("src", &result.src_contexts), ("tgt", &result.tgt_contexts)] {
        for c in set {
            out.push_str(role);
            out.push('\t');
            out.push_str(&serde_json::to_string(c).expect("context serialises"));
            out.push('\n');
        }
    }
    out
}

/// Writes every artifact of one finished session into `dir`.
pub fn write_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    result: &SessionResult,
    started: u64,
    elapsed: f64,
) -> Result<RunManifest, String> {
    let mut artifacts = BTreeMap::new();
    let mut histories = vec![
        ("source", &result.source),
        ("transferred", &result.transferred),
        ("target", &result.target),
    ];
    if let Some(h) = &result.source_on_target {
        histories.push(("source_on_target", h));
    }
    for (role, h) in histories {
        let file = format!("history_{role}.csv");
        write(&dir.join(&file), &h.to_csv())?;
        artifacts.insert(format!("history_{role}"), file);
    }
    for (role, policy) in [
        ("source", &result.source_policy),
        ("transferred", &result.transferred_policy),
        ("target", &result.target_policy),
    ] {
        let file = format!("checkpoint_{role}");
        let ckpt = Checkpoint {
            network: policy.network.clone(),
            seed: result.seed,
            steps: policy.steps,
        };
        save_checkpoint(&dir.join(&file), &ckpt).map_err(|e| format!("{file}: {e}"))?;
        artifacts.insert(format!("checkpoint_{role}"), file);
    }
    write(&dir.join("contexts.txt"), &contexts_text(result))?;
    artifacts.insert("contexts".into(), "contexts.txt".into());
    let manifest = RunManifest {
        config: cfg.clone(),
        cmdp: cfg.cmdp_label(),
        representation: cfg.repr().map_err(|e| e.to_string())?,
        seed: result.seed,
        src_contexts: result.src_contexts.clone(),
        tgt_contexts: result.tgt_contexts.clone(),
        artifacts,
        code_version: CODE_VERSION.into(),
        started_unix_secs: started,
        elapsed_secs: elapsed,
    };
    write(
        &dir.join(MANIFEST_FILE),
        &(serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n"),
    )?;
    Ok(manifest)
}

/// Runs one seed end to end; on failure leaves a marker file with the error.
pub fn run_seed(out: &Path, cfg: &ExperimentConfig, seed: u64) -> Result<PathBuf, String> {
    let dir = seed_dir(out, cfg, seed);
    std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let _ = std::fs::remove_file(dir.join(FAILURE_MARKER));
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let outcome = cfg
        .session(seed)
        .map_err(|e| e.to_string())
        .and_then(|s| run_session(&s).map_err(|e| e.to_string()))
        .and_then(|result| write_artifacts(&dir, cfg, &result, started, clock.elapsed().as_secs_f64()));
    match outcome {
        Ok(_) => Ok(dir),
        Err(e) => {
            let _ = std::fs::write(dir.join(FAILURE_MARKER), format!("seed {seed}: {e}\n"));
            Err(format!("seed {seed}: {e}"))
        }
    }
}

/// Runs every seed of `cfg` with up to `parallel` seeds at a time.
pub fn run_experiment(out: &Path, cfg: &ExperimentConfig, parallel: usize) -> Vec<Result<PathBuf, String>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| cfg.seeds.par_iter().map(|&seed| run_seed(out, cfg, seed)).collect())
}
