//! Experiment configuration: environment, setting and the grids to sweep.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tetd_core::agents::Algorithm;
use tetd_core::envs::baird;
use tetd_core::envs::CartPoleParams;
use tetd_core::policy::{BasePolicy, SoftmaxPolicySpec};
use tetd_core::traces::TraceMode;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvironmentName {
    Baird,
    Cartpole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Prediction,
    ControlFixedBehavior,
    ControlChangingBehavior,
}

impl Setting {
    pub fn is_control(self) -> bool {
        self != Setting::Prediction
    }
}

/// One algorithm family with its own grid of truncation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmGrid {
    OffPolicyTd,
    Etd0Full,
    TruncatedEtd { n: Vec<usize> },
    EtdBeta { beta: Vec<f64> },
    ProjectedTruncatedEtd {
        n: Vec<usize>,
        #[serde(default)]
        radius: Option<f64>,
    },
    TruncatedEmphaticExpectedSarsa { n: Vec<usize> },
    /// Each entry of `traces` is one variant: `hard` with `n`, `full` for
    /// no truncation, `soft` with `beta`.
    ProjectedTruncatedEmphaticExpectedSarsa {
        traces: Vec<TraceMode>,
        #[serde(default)]
        radius: Option<f64>,
    },
}

impl AlgorithmGrid {
    pub fn expand(&self) -> Vec<Algorithm> {
        match self {
            AlgorithmGrid::OffPolicyTd => vec![Algorithm::OffPolicyTd],
            AlgorithmGrid::Etd0Full => vec![Algorithm::Etd0Full],
            AlgorithmGrid::TruncatedEtd { n } => n.iter().map(|&n| Algorithm::TruncatedEtd { n }).collect(),
            AlgorithmGrid::EtdBeta { beta } => beta.iter().map(|&beta| Algorithm::EtdBeta { beta }).collect(),
            AlgorithmGrid::ProjectedTruncatedEtd { n, radius } => {
                n.iter().map(|&n| Algorithm::ProjectedTruncatedEtd { n, radius: *radius }).collect()
            }
            AlgorithmGrid::TruncatedEmphaticExpectedSarsa { n } => {
                n.iter().map(|&n| Algorithm::TruncatedEmphaticExpectedSarsa { n }).collect()
            }
            AlgorithmGrid::ProjectedTruncatedEmphaticExpectedSarsa { traces, radius } => traces
                .iter()
                .map(|&trace| Algorithm::ProjectedTruncatedEmphaticExpectedSarsa { trace, radius: *radius })
                .collect(),
        }
    }
}

fn default_seeds() -> u64 {
    30
}

fn default_eval_points() -> usize {
    100
}

fn default_evaluation_episodes() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentName,
    pub setting: Setting,
    pub algorithms: Vec<AlgorithmGrid>,
    /// Constant step sizes to sweep.
    pub learning_rates: Vec<f64>,
    /// `π(dashed|s)` for Baird prediction, softmax temperatures for control.
    pub targets: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    pub steps: u64,
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    /// Episodes per CartPole evaluation.
    #[serde(default = "default_evaluation_episodes")]
    pub evaluation_episodes: usize,
    pub output_dir: PathBuf,
}

/// One cell of the sweep, shared by all seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigPoint {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub target: f64,
}

/// Everything that determines a run's output apart from the seed.
#[derive(Serialize)]
struct FingerprintInput<'a> {
    environment: EnvironmentName,
    setting: Setting,
    point: &'a ConfigPoint,
    steps: u64,
    eval_points: usize,
    evaluation_episodes: Option<usize>,
    constants: serde_json::Value,
}

/// `0.1 × 2⁻ᵏ` for `k = 0..19`.
pub fn default_learning_rates() -> Vec<f64> {
    (0..20).map(|k| 0.1 * 2f64.powi(-k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    BairdPrediction,
    BairdControl,
    Cartpole,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let control_traces = vec![
            TraceMode::Full,
            TraceMode::Hard { n: 0 },
            TraceMode::Hard { n: 2 },
            TraceMode::Hard { n: 4 },
            TraceMode::Hard { n: 8 },
            TraceMode::Soft { beta: 0.8 },
        ];
        match preset {
            Preset::BairdPrediction => Self {
                environment: EnvironmentName::Baird,
                setting: Setting::Prediction,
                algorithms: vec![
                    AlgorithmGrid::Etd0Full,
                    AlgorithmGrid::OffPolicyTd,
                    AlgorithmGrid::TruncatedEtd { n: vec![2, 4, 8] },
                    AlgorithmGrid::EtdBeta { beta: vec![0.8] },
                ],
                learning_rates: default_learning_rates(),
                targets: baird::TARGET_GRID.to_vec(),
                seeds: default_seeds(),
                steps: 100_000,
                eval_points: default_eval_points(),
                evaluation_episodes: default_evaluation_episodes(),
                output_dir: PathBuf::from("out/baird-prediction"),
            },
            Preset::BairdControl => Self {
                environment: EnvironmentName::Baird,
                setting: Setting::ControlFixedBehavior,
                algorithms: vec![AlgorithmGrid::ProjectedTruncatedEmphaticExpectedSarsa {
                    traces: control_traces,
                    radius: None,
                }],
                learning_rates: default_learning_rates(),
                targets: vec![0.01, 0.1, 1.0],
                seeds: default_seeds(),
                steps: 100_000,
                eval_points: default_eval_points(),
                evaluation_episodes: default_evaluation_episodes(),
                output_dir: PathBuf::from("out/baird-control"),
            },
            Preset::Cartpole => Self {
                environment: EnvironmentName::Cartpole,
                setting: Setting::ControlChangingBehavior,
                algorithms: vec![AlgorithmGrid::ProjectedTruncatedEmphaticExpectedSarsa {
                    traces: vec![
                        TraceMode::Full,
                        TraceMode::Hard { n: 0 },
                        TraceMode::Hard { n: 2 },
                        TraceMode::Hard { n: 4 },
                        TraceMode::Hard { n: 8 },
                        TraceMode::Soft { beta: 0.1 },
                        TraceMode::Soft { beta: 0.2 },
                        TraceMode::Soft { beta: 0.4 },
                        TraceMode::Soft { beta: 0.8 },
                    ],
                    radius: None,
                }],
                learning_rates: default_learning_rates(),
                targets: vec![0.01],
                seeds: default_seeds(),
                steps: 100_000,
                eval_points: 21,
                evaluation_episodes: default_evaluation_episodes(),
                output_dir: PathBuf::from("out/cartpole"),
            },
        }
    }

    pub fn from_json_str(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads a JSON config, or TOML when the extension is `.toml`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let config = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| HarnessError::Invalid(format!("{}: {e}", path.display())))?
        } else {
            Self::from_json_str(&text).map_err(|e| HarnessError::json(path, e))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field and names the first offending one.
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(HarnessError::config("algorithms", "grid is empty"));
        }
        for (k, grid) in self.algorithms.iter().enumerate() {
            let expanded = grid.expand();
            if expanded.is_empty() {
                return Err(HarnessError::config(format!("algorithms[{k}]"), "parameter grid is empty"));
            }
            for alg in expanded {
                alg.validate().map_err(|e| HarnessError::config(format!("algorithms[{k}]"), e.to_string()))?;
                if alg.is_control() != self.setting.is_control() {
                    return Err(HarnessError::config(
                        format!("algorithms[{k}]"),
                        format!("{} does not fit the {:?} setting", alg.label(), self.setting),
                    ));
                }
            }
        }
        if self.learning_rates.is_empty() {
            return Err(HarnessError::config("learning_rates", "grid is empty"));
        }
        if let Some(a) = self.learning_rates.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(HarnessError::config("learning_rates", format!("{a} is not a positive step size")));
        }
        if self.targets.is_empty() {
            return Err(HarnessError::config("targets", "grid is empty"));
        }
        for &t in &self.targets {
            let ok = if self.setting.is_control() { t > 0.0 && t.is_finite() } else { (0.0..=1.0).contains(&t) };
            if !ok {
                let what = if self.setting.is_control() { "a positive temperature" } else { "a probability" };
                return Err(HarnessError::config("targets", format!("{t} is not {what}")));
            }
        }
        if self.seeds == 0 {
            return Err(HarnessError::config("seeds", "need at least one seed"));
        }
        if self.steps == 0 {
            return Err(HarnessError::config("steps", "need at least one step"));
        }
        if self.eval_points < 2 {
            return Err(HarnessError::config("eval_points", "need at least two evaluation points"));
        }
        if self.environment == EnvironmentName::Cartpole {
            if !self.setting.is_control() {
                return Err(HarnessError::config("setting", "cartpole supports control settings only"));
            }
            if self.evaluation_episodes == 0 {
                return Err(HarnessError::config("evaluation_episodes", "need at least one episode"));
            }
        }
        Ok(())
    }

    /// The sweep in a fixed order: targets, then algorithms, then step sizes.
    pub fn points(&self) -> Vec<ConfigPoint> {
        let algorithms: Vec<Algorithm> = self.algorithms.iter().flat_map(AlgorithmGrid::expand).collect();
        let mut out = Vec::new();
        for &target in &self.targets {
            for &algorithm in &algorithms {
                for &alpha in &self.learning_rates {
                    out.push(ConfigPoint { algorithm, alpha, target });
                }
            }
        }
        out
    }

    /// Constants of the environment that shape every run.
    pub fn environment_constants(&self) -> serde_json::Value {
        match self.environment {
            EnvironmentName::Baird => serde_json::json!({
                "discount": baird::DISCOUNT,
                "behavior": baird::behavior_probs(),
                "features": "canonical 7x8 features in orthonormal row-space coordinates",
            }),
            EnvironmentName::Cartpole => serde_json::json!({
                "discount": tetd_core::envs::cartpole::DISCOUNT,
                "physics": CartPoleParams::default(),
                "tile_coder": tetd_core::envs::TileCoder::cartpole_default(),
            }),
        }
    }

    /// Hex SHA-256 of everything that determines a run at `point` except the
    /// seed and the output location.
    pub fn fingerprint(&self, point: &ConfigPoint) -> String {
        let input = FingerprintInput {
            environment: self.environment,
            setting: self.setting,
            point,
            steps: self.steps,
            eval_points: self.eval_points,
            evaluation_episodes: (self.environment == EnvironmentName::Cartpole).then_some(self.evaluation_episodes),
            constants: self.environment_constants(),
        };
        let bytes = serde_json::to_vec(&input).expect("fingerprint input serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Behavior policy for the control settings.
    pub fn behavior_spec(&self) -> SoftmaxPolicySpec {
        let fixed = BasePolicy::Fixed(baird::behavior_probs().to_vec());
        match (self.environment, self.setting) {
            (EnvironmentName::Baird, Setting::ControlChangingBehavior) => SoftmaxPolicySpec::mixture(1.0, 0.9, fixed),
            (EnvironmentName::Baird, _) => SoftmaxPolicySpec::fixed(fixed),
            (EnvironmentName::Cartpole, Setting::ControlChangingBehavior) => {
                SoftmaxPolicySpec::mixture(1.0, 0.95, BasePolicy::Uniform)
            }
            (EnvironmentName::Cartpole, _) => SoftmaxPolicySpec::fixed(BasePolicy::Uniform),
        }
    }

    /// Whether larger final metrics are better.
    pub fn maximizes(&self) -> bool {
        self.environment == EnvironmentName::Cartpole
    }

    pub fn metric_name(&self) -> &'static str {
        match (self.environment, self.setting) {
            (EnvironmentName::Baird, Setting::Prediction) => "rmsve",
            (EnvironmentName::Baird, _) => "weight_norm",
            (EnvironmentName::Cartpole, _) => "episode_return",
        }
    }

    /// Number of runs the sweep consists of.
    pub fn run_count(&self) -> usize {
        self.points().len() * self.seeds as usize
    }
}
