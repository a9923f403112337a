//! Runs every (point, seed) of a configuration in parallel and records the
//! results on disk.
//!
//! Layout under the output directory:
//!
//! - `runs/{fingerprint[..16]}_seed{seed}.csv` with header `step,value`;
//! - the same stem with `.json`: run metadata and final weights;
//! - `manifest.json`: every run in sweep order.
//!
//! A run whose files already exist with a matching fingerprint is loaded
//! instead of recomputed, so interrupted sweeps resume where they stopped.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tetd_core::agents::{run_control, run_prediction, AgentConfig, ControlAgent, RunRecord};
use tetd_core::envs::{baird, Baird, CartPoleTask};
use tetd_core::policy::SoftmaxPolicySpec;
use tetd_core::seeded_rng;

use crate::config::{ConfigPoint, EnvironmentName, ExperimentConfig, Setting};
use crate::error::{HarnessError, Result};

/// Offset that separates the CartPole evaluation stream from the learning
/// stream of the same seed.
const EVALUATION_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// Metadata written next to every run's CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub fingerprint: String,
    pub seed: u64,
    pub metric: String,
    pub diverged: bool,
    pub diverged_at: Option<u64>,
    pub final_weights: Vec<f64>,
    pub environment: EnvironmentName,
    pub setting: Setting,
    pub point: ConfigPoint,
    pub steps: u64,
    pub constants: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub fingerprint: String,
    pub seed: u64,
    pub label: String,
    pub point: ConfigPoint,
    /// Paths relative to the output directory.
    pub csv: String,
    pub metadata: String,
    pub diverged: bool,
    /// Last recorded metric, absent if it is not finite.
    pub final_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// The configuration with `output_dir` blanked, so the manifest does not
    /// depend on where it was written.
    pub config: ExperimentConfig,
    pub metric: String,
    pub maximize: bool,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::json(&path, e))
    }
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub manifest: Manifest,
    /// Hex SHA-256 of the manifest file.
    pub manifest_hash: String,
    pub executed: usize,
    pub reused: usize,
}

pub const MANIFEST_FILE: &str = "manifest.json";
const RUNS_DIR: &str = "runs";

fn run_stem(fingerprint: &str, seed: u64) -> String {
    format!("{}_seed{seed}", &fingerprint[..16])
}

/// Runs one seed of one configuration point without touching the disk.
pub fn run_point(config: &ExperimentConfig, point: &ConfigPoint, seed: u64) -> Result<RunRecord> {
    let agent_config = AgentConfig::constant(point.algorithm, point.alpha);
    let mut record = match (config.environment, config.setting) {
        (EnvironmentName::Baird, Setting::Prediction) => {
            let problem = Baird::new().prediction_problem(point.target)?;
            run_prediction(&problem, agent_config, config.steps, config.eval_points, seed)?
        }
        (EnvironmentName::Baird, _) => {
            let env = Baird::new();
            let mut task = env.control_task();
            let agent = ControlAgent::new(
                agent_config,
                baird::DISCOUNT,
                baird::N_ACTIONS,
                env.control_initial_weights.clone(),
                SoftmaxPolicySpec::softmax(point.target),
                config.behavior_spec(),
            )?;
            let mut norm = |w: &[f64]| w.iter().map(|x| x * x).sum::<f64>().sqrt();
            run_control(&mut task, agent, config.steps, config.eval_points, seed, config.metric_name(), &mut norm)?
        }
        (EnvironmentName::Cartpole, _) => {
            let mut task = CartPoleTask::with_defaults();
            let evaluator = task.clone();
            let target = SoftmaxPolicySpec::softmax(point.target);
            let agent = ControlAgent::new(
                agent_config,
                tetd_core::envs::cartpole::DISCOUNT,
                tetd_core::envs::cartpole::N_ACTIONS,
                vec![0.0; tetd_core::agents::ControlTask::dim(&task)],
                target.clone(),
                config.behavior_spec(),
            )?;
            let mut eval_rng = seeded_rng(seed.wrapping_add(EVALUATION_STREAM));
            let episodes = config.evaluation_episodes;
            let mut failure = None;
            let mut metric = |w: &[f64]| match evaluator.evaluate(w, &target, episodes, &mut eval_rng) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            };
            let record =
                run_control(&mut task, agent, config.steps, config.eval_points, seed, config.metric_name(), &mut metric)?;
            if let Some(e) = failure {
                return Err(e.into());
            }
            record
        }
    };
    record.fingerprint = config.fingerprint(point);
    Ok(record)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

/// Formats a run as `step,value` CSV.
pub fn record_csv(record: &RunRecord) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "value"]).map_err(csv_write)?;
    for &(step, value) in &record.points {
        w.write_record([step.to_string(), value.to_string()]).map_err(csv_write)?;
    }
    w.into_inner().map_err(|e| HarnessError::Invalid(e.to_string()))
}

fn csv_write(e: csv::Error) -> HarnessError {
    HarnessError::Invalid(format!("csv encoding failed: {e}"))
}

/// Reads a `step,value` CSV.
pub fn read_points(path: &Path) -> Result<Vec<(u64, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::Csv {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })?;
    let bad = |line: usize, reason: String| HarnessError::Csv { path: path.to_path_buf(), line, reason };
    let headers = reader.headers().map_err(|e| bad(1, e.to_string()))?;
    if headers != vec!["step", "value"] {
        return Err(bad(1, format!("expected header step,value, found {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut points = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        if row.len() != 2 {
            return Err(bad(line, format!("expected 2 fields, found {}", row.len())));
        }
        let step = row[0].parse().map_err(|e| bad(line, format!("step: {e}")))?;
        let value = row[1].parse().map_err(|e| bad(line, format!("value: {e}")))?;
        points.push((step, value));
    }
    Ok(points)
}

fn read_metadata(path: &Path) -> Result<RunMetadata> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::json(path, e))
}

/// Loads one run from the files named in a manifest entry.
pub fn load_run(dir: &Path, entry: &ManifestEntry) -> Result<RunRecord> {
    let meta = read_metadata(&dir.join(&entry.metadata))?;
    let points = read_points(&dir.join(&entry.csv))?;
    Ok(RunRecord {
        fingerprint: meta.fingerprint,
        seed: meta.seed,
        metric: meta.metric,
        points,
        diverged: meta.diverged,
        diverged_at: meta.diverged_at,
        final_weights: meta.final_weights,
    })
}

/// Returns the stored run if both files exist, agree with the
/// configuration and hold the full schedule.
fn reuse(config: &ExperimentConfig, csv: &Path, meta: &Path, fingerprint: &str, seed: u64) -> Option<RunRecord> {
    let m = read_metadata(meta).ok()?;
    if m.fingerprint != fingerprint || m.seed != seed {
        return None;
    }
    let points = read_points(csv).ok()?;
    (points.len() == config.eval_points).then_some(RunRecord {
        fingerprint: m.fingerprint,
        seed: m.seed,
        metric: m.metric,
        points,
        diverged: m.diverged,
        diverged_at: m.diverged_at,
        final_weights: m.final_weights,
    })
}

struct Job {
    point: ConfigPoint,
    fingerprint: String,
    seed: u64,
}

/// Runs the whole sweep, reusing finished runs, and writes the manifest.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepSummary> {
    config.validate()?;
    let root = &config.output_dir;
    let runs = root.join(RUNS_DIR);
    fs::create_dir_all(&runs).map_err(|e| HarnessError::io(&runs, e))?;
    let constants = config.environment_constants();
    let jobs: Vec<Job> = config
        .points()
        .into_iter()
        .flat_map(|point| {
            let fingerprint = config.fingerprint(&point);
            (0..config.seeds).map(move |seed| Job { point, fingerprint: fingerprint.clone(), seed })
        })
        .collect();

    let outcomes: Vec<(ManifestEntry, bool)> = jobs
        .par_iter()
        .map(|job| -> Result<(ManifestEntry, bool)> {
            let stem = run_stem(&job.fingerprint, job.seed);
            let csv_rel = format!("{RUNS_DIR}/{stem}.csv");
            let meta_rel = format!("{RUNS_DIR}/{stem}.json");
            let (csv_path, meta_path) = (root.join(&csv_rel), root.join(&meta_rel));
            let (record, executed) = match reuse(config, &csv_path, &meta_path, &job.fingerprint, job.seed) {
                Some(r) => (r, false),
                None => {
                    let record = run_point(config, &job.point, job.seed)?;
                    let meta = RunMetadata {
                        fingerprint: job.fingerprint.clone(),
                        seed: job.seed,
                        metric: record.metric.clone(),
                        diverged: record.diverged,
                        diverged_at: record.diverged_at,
                        final_weights: record.final_weights.clone(),
                        environment: config.environment,
                        setting: config.setting,
                        point: job.point,
                        steps: config.steps,
                        constants: constants.clone(),
                    };
                    // The CSV goes first so a present sidecar implies a complete run.
                    write_atomic(&csv_path, &record_csv(&record)?)?;
                    let json = serde_json::to_vec_pretty(&meta).map_err(|e| HarnessError::json(&meta_path, e))?;
                    write_atomic(&meta_path, &json)?;
                    (record, true)
                }
            };
            let entry = ManifestEntry {
                fingerprint: job.fingerprint.clone(),
                seed: job.seed,
                label: job.point.algorithm.label(),
                point: job.point,
                csv: csv_rel,
                metadata: meta_rel,
                diverged: record.diverged,
                final_value: record.final_value().filter(|v| v.is_finite()),
            };
            Ok((entry, executed))
        })
        .collect::<Result<_>>()?;

    let executed = outcomes.iter().filter(|o| o.1).count();
    let manifest = Manifest {
        config: ExperimentConfig { output_dir: PathBuf::new(), ..config.clone() },
        metric: config.metric_name().to_string(),
        maximize: config.maximizes(),
        entries: outcomes.into_iter().map(|o| o.0).collect(),
    };
    let manifest_path = root.join(MANIFEST_FILE);
    let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| HarnessError::json(&manifest_path, e))?;
    write_atomic(&manifest_path, &bytes)?;
    Ok(SweepSummary {
        manifest_hash: hex::encode(Sha256::digest(&bytes)),
        executed,
        reused: manifest.entries.len() - executed,
        manifest,
    })
}

/// Hex SHA-256 of a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}
