//! Linear learners: five prediction algorithms and two expected-SARSA
//! control algorithms, plus the run loops that drive them.

mod control;
mod run;

pub use control::{ControlAgent, ControlStep, ControlTask, TabularControlTask};
pub use run::{
    evaluation_steps, rmsve, run_control, run_prediction, PredictionProblem, RunRecord, DIVERGENCE_NORM,
};

use serde::{Deserialize, Serialize};

use crate::features::{project_ball, FeatureVector, LinearWeights};
use crate::traces::{Indexing, TraceConfig, TraceEngine, TraceMode};
use crate::{Error, Result};

/// Which update rule a learner uses. `radius: None` means no projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Algorithm {
    /// Importance-sampled TD(0), i.e. a trace fixed at 1.
    OffPolicyTd,
    /// ETD(0) with the untruncated followon trace.
    Etd0Full,
    TruncatedEtd { n: usize },
    /// ETD(0) with the soft trace of decay β.
    EtdBeta { beta: f64 },
    ProjectedTruncatedEtd { n: usize, radius: Option<f64> },
    /// Expected SARSA whose window ratios are rebuilt from the current
    /// weights every step.
    TruncatedEmphaticExpectedSarsa { n: usize },
    /// Expected SARSA with stored ratios and an optional ball projection.
    /// The trace mode also covers the untruncated and soft variants.
    ProjectedTruncatedEmphaticExpectedSarsa { trace: TraceMode, radius: Option<f64> },
}

impl Algorithm {
    pub fn is_control(&self) -> bool {
        matches!(
            self,
            Algorithm::TruncatedEmphaticExpectedSarsa { .. }
                | Algorithm::ProjectedTruncatedEmphaticExpectedSarsa { .. }
        )
    }

    /// Trace used by the learner, `None` for a constant trace of 1.
    pub fn trace_mode(&self) -> Option<TraceMode> {
        match *self {
            Algorithm::OffPolicyTd => None,
            Algorithm::Etd0Full => Some(TraceMode::Full),
            Algorithm::TruncatedEtd { n }
            | Algorithm::ProjectedTruncatedEtd { n, .. }
            | Algorithm::TruncatedEmphaticExpectedSarsa { n } => Some(TraceMode::Hard { n }),
            Algorithm::EtdBeta { beta } => Some(TraceMode::Soft { beta }),
            Algorithm::ProjectedTruncatedEmphaticExpectedSarsa { trace, .. } => Some(trace),
        }
    }

    pub fn radius(&self) -> Option<f64> {
        match *self {
            Algorithm::ProjectedTruncatedEtd { radius, .. }
            | Algorithm::ProjectedTruncatedEmphaticExpectedSarsa { radius, .. } => radius,
            _ => None,
        }
    }

    /// Short label such as `n=4`, `n=inf` or `beta=0.8`.
    pub fn label(&self) -> String {
        match self.trace_mode() {
            None => "n=0".into(),
            Some(TraceMode::Full) => "n=inf".into(),
            Some(TraceMode::Hard { n }) => format!("n={n}"),
            Some(TraceMode::Soft { beta }) => format!("beta={beta}"),
            Some(TraceMode::Combined { beta, n }) => format!("beta={beta},n={n}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(mode) = self.trace_mode() {
            mode.validate()?;
        }
        match self.radius() {
            Some(r) if !(r > 0.0) => Err(Error::InvalidParameter(format!("radius {r} must be positive"))),
            _ => Ok(()),
        }
    }
}

/// Step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    Constant { alpha: f64 },
    /// `α_t = 1 / (2 α_λ (t + 1))`.
    Harmonic { alpha_lambda: f64 },
}

impl LearningRate {
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            LearningRate::Constant { alpha } => alpha,
            LearningRate::Harmonic { alpha_lambda } => 1.0 / (2.0 * alpha_lambda * (t as f64 + 1.0)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            LearningRate::Constant { alpha } => alpha,
            LearningRate::Harmonic { alpha_lambda } => alpha_lambda,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("learning rate parameter {v} must be positive")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub learning_rate: LearningRate,
}

impl AgentConfig {
    pub fn new(algorithm: Algorithm, learning_rate: LearningRate) -> Self {
        Self { algorithm, learning_rate }
    }

    pub fn constant(algorithm: Algorithm, alpha: f64) -> Self {
        Self::new(algorithm, LearningRate::Constant { alpha })
    }

    pub fn validate(&self) -> Result<()> {
        self.algorithm.validate()?;
        self.learning_rate.validate()
    }

    fn trace_engine(&self, indexing: Indexing, gamma: f64) -> Result<Option<TraceEngine>> {
        self.algorithm
            .trace_mode()
            .map(|mode| TraceEngine::new(TraceConfig::new(mode, indexing, gamma)))
            .transpose()
    }
}

/// TD error `r + γ x'ᵀw − xᵀw`.
pub fn td_error<X: FeatureVector + ?Sized>(w: &[f64], x: &X, reward: f64, gamma: f64, x_next: &X) -> f64 {
    reward + gamma * x_next.dot(w) - x.dot(w)
}

/// `w += α F ρ δ x` and returns `δ`.
#[allow(clippy::too_many_arguments)]
pub fn prediction_step<X: FeatureVector + ?Sized>(
    w: &mut [f64],
    x: &X,
    reward: f64,
    x_next: &X,
    gamma: f64,
    alpha: f64,
    trace: f64,
    rho: f64,
) -> f64 {
    let delta = td_error(w, x, reward, gamma, x_next);
    x.add_scaled_to(w, alpha * trace * rho * delta);
    delta
}

/// `w += α F (r + γ v̄' − xᵀw) x` where `v̄' = Σ_a π(a|s') x(s', a)ᵀw` is
/// supplied by the caller (0 at a terminal state). Returns the TD error.
pub fn expected_sarsa_step<X: FeatureVector + ?Sized>(
    w: &mut [f64],
    x: &X,
    reward: f64,
    expected_next: f64,
    gamma: f64,
    alpha: f64,
    trace: f64,
) -> f64 {
    let delta = reward + gamma * expected_next - x.dot(w);
    x.add_scaled_to(w, alpha * trace * delta);
    delta
}

/// `Σ_a π(a|s') x(s', a)ᵀw`.
pub fn expected_value<X: FeatureVector>(w: &[f64], features: &[X], probs: &[f64]) -> f64 {
    features.iter().zip(probs).map(|(x, p)| p * x.dot(w)).sum()
}

/// A prediction learner: weights, trace and step-size schedule.
#[derive(Debug, Clone)]
pub struct PredictionAgent {
    config: AgentConfig,
    gamma: f64,
    weights: LinearWeights,
    trace: Option<TraceEngine>,
    steps: u64,
}

impl PredictionAgent {
    pub fn new(config: AgentConfig, gamma: f64, initial_weights: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if config.algorithm.is_control() {
            return Err(Error::InvalidParameter(format!(
                "{:?} is a control algorithm",
                config.algorithm
            )));
        }
        let trace = config.trace_engine(Indexing::Prediction, gamma)?;
        let mut weights = LinearWeights::from_vec(initial_weights);
        if let Some(r) = config.algorithm.radius() {
            project_ball(weights.as_mut_slice(), r);
        }
        Ok(Self { config, gamma, weights, trace, steps: 0 })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn weights(&self) -> &LinearWeights {
        &self.weights
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Trace value for a step with this ratio and interest. Advances the trace.
    pub fn next_trace(&mut self, rho: f64, interest: f64) -> f64 {
        self.trace.as_mut().map_or(1.0, |e| e.push(rho, interest))
    }

    /// One update on the transition `x → x'` with reward `r`, ratio `ρ_t`
    /// and interest `i_t`. Returns the TD error.
    pub fn observe<X: FeatureVector + ?Sized>(
        &mut self,
        x: &X,
        reward: f64,
        x_next: &X,
        rho: f64,
        interest: f64,
    ) -> f64 {
        let trace = self.next_trace(rho, interest);
        let alpha = self.config.learning_rate.at(self.steps);
        let delta =
            prediction_step(self.weights.as_mut_slice(), x, reward, x_next, self.gamma, alpha, trace, rho);
        if let Some(r) = self.config.algorithm.radius() {
            project_ball(self.weights.as_mut_slice(), r);
        }
        self.steps += 1;
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_reward_and_weights_do_not_move() {
        let mut w = vec![0.0; 3];
        let x = [1.0, 2.0, 3.0];
        let delta = prediction_step(&mut w, &x[..], 0.0, &[0.5, 0.5, 0.5][..], 0.9, 0.1, 2.0, 3.0);
        assert_eq!(delta, 0.0);
        assert_eq!(w, vec![0.0; 3]);
        let delta = expected_sarsa_step(&mut w, &x[..], 0.0, 0.0, 0.9, 0.1, 2.0);
        assert_eq!(delta, 0.0);
        assert_eq!(w, vec![0.0; 3]);
    }

    #[test]
    fn tabular_one_step_regression() {
        let mut w = vec![0.0; 2];
        prediction_step(&mut w, &[1.0, 0.0][..], 3.5, &[0.0, 1.0][..], 0.0, 1.0, 1.0, 1.0);
        assert_eq!(w, vec![3.5, 0.0]);
    }

    #[test]
    fn learning_rate_schedule() {
        let lr = LearningRate::Harmonic { alpha_lambda: 0.25 };
        assert_eq!(lr.at(0), 2.0);
        assert_eq!(lr.at(3), 0.5);
        assert_eq!(LearningRate::Constant { alpha: 0.1 }.at(1000), 0.1);
        assert!(LearningRate::Constant { alpha: 0.0 }.validate().is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(Algorithm::OffPolicyTd.label(), "n=0");
        assert_eq!(Algorithm::Etd0Full.label(), "n=inf");
        assert_eq!(Algorithm::TruncatedEtd { n: 4 }.label(), "n=4");
        assert_eq!(Algorithm::EtdBeta { beta: 0.8 }.label(), "beta=0.8");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_radius = Algorithm::ProjectedTruncatedEtd { n: 2, radius: Some(0.0) };
        assert!(bad_radius.validate().is_err());
        assert!(Algorithm::EtdBeta { beta: 1.0 }.validate().is_err());
        let control = AgentConfig::constant(Algorithm::TruncatedEmphaticExpectedSarsa { n: 2 }, 0.1);
        assert!(PredictionAgent::new(control, 0.9, vec![0.0]).is_err());
    }

    #[test]
    fn algorithm_serde_round_trip() {
        let algs = [
            Algorithm::OffPolicyTd,
            Algorithm::EtdBeta { beta: 0.4 },
            Algorithm::ProjectedTruncatedEtd { n: 3, radius: None },
            Algorithm::ProjectedTruncatedEmphaticExpectedSarsa { trace: TraceMode::Full, radius: Some(5.0) },
        ];
        for a in algs {
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(serde_json::from_str::<Algorithm>(&json).unwrap(), a);
        }
    }
}
