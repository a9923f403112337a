use std::collections::VecDeque;

use super::{expected_sarsa_step, expected_value, AgentConfig, Algorithm};
use crate::features::{project_ball, FeatureMap, FeatureVector, LinearWeights};
use crate::mdp::{sample_categorical, sample_initial_state, transition_from, InterestFunction, TabularMdp};
use crate::policy::{action_values, SoftmaxPolicySpec};
use crate::traces::{trace_window_recompute, Indexing, TraceEngine};
use crate::{Error, Result, Rng};

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlStep {
    pub reward: f64,
    /// The next state is absorbing: bootstrap from 0.
    pub terminal: bool,
    /// The episode was cut off: bootstrap normally, then start over.
    pub truncated: bool,
}

/// An environment together with its state-action features.
pub trait ControlTask {
    type Features: FeatureVector + Clone;

    fn n_actions(&self) -> usize;
    fn discount(&self) -> f64;
    /// Length of the weight vector.
    fn dim(&self) -> usize;
    fn reset(&mut self, rng: &mut Rng) -> Result<()>;
    /// `x(s, a)` for every action of the current state.
    fn action_features(&self) -> Result<Vec<Self::Features>>;
    /// Interest of the current state paired with `action`.
    fn interest(&self, _action: usize) -> f64 {
        1.0
    }
    fn step(&mut self, action: usize, rng: &mut Rng) -> Result<ControlStep>;
}

/// A finite MDP with state-action feature rows indexed by `s · |A| + a`.
/// It never terminates.
#[derive(Debug, Clone)]
pub struct TabularControlTask {
    mdp: TabularMdp,
    features: FeatureMap,
    interest: Option<InterestFunction>,
    state: usize,
}

impl TabularControlTask {
    pub fn new(mdp: TabularMdp, features: FeatureMap, interest: Option<InterestFunction>) -> Result<Self> {
        if features.n_rows() != mdp.n_pairs() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} state-action pairs",
                features.n_rows(),
                mdp.n_pairs()
            )));
        }
        if let Some(i) = &interest {
            if i.len() != mdp.n_pairs() {
                return Err(Error::Shape(format!("interest of length {} for {} pairs", i.len(), mdp.n_pairs())));
            }
        }
        Ok(Self { mdp, features, interest, state: 0 })
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }
}

impl ControlTask for TabularControlTask {
    type Features = Vec<f64>;

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn discount(&self) -> f64 {
        self.mdp.discount()
    }

    fn dim(&self) -> usize {
        self.features.dim()
    }

    fn reset(&mut self, rng: &mut Rng) -> Result<()> {
        self.state = sample_initial_state(&self.mdp, rng);
        Ok(())
    }

    fn action_features(&self) -> Result<Vec<Vec<f64>>> {
        let n_actions = self.mdp.n_actions();
        Ok((0..n_actions).map(|a| self.features.row(self.state * n_actions + a).to_vec()).collect())
    }

    fn interest(&self, action: usize) -> f64 {
        self.interest
            .as_ref()
            .map_or(1.0, |i| i.get(self.state * self.mdp.n_actions() + action))
    }

    fn step(&mut self, action: usize, rng: &mut Rng) -> Result<ControlStep> {
        let step = transition_from(&self.mdp, self.state, action, rng);
        self.state = step.next_state;
        Ok(ControlStep { reward: step.reward, terminal: false, truncated: false })
    }
}

#[derive(Debug, Clone)]
struct WindowEntry<X> {
    features: Vec<X>,
    action: usize,
    interest: f64,
}

/// `π(a|s) / μ(a|s)`, taken as 0 whenever the target never picks `a`.
fn ratio(pi: f64, mu: f64) -> f64 {
    if pi == 0.0 {
        0.0
    } else {
        pi / mu
    }
}

/// An expected-SARSA learner with weight-dependent target and behavior
/// policies.
#[derive(Debug, Clone)]
pub struct ControlAgent<X> {
    config: AgentConfig,
    gamma: f64,
    weights: LinearWeights,
    target: SoftmaxPolicySpec,
    behavior: SoftmaxPolicySpec,
    /// Stored-ratio trace of the projected variant.
    trace: Option<TraceEngine>,
    /// Window of the recomputing variant, oldest first.
    window: VecDeque<WindowEntry<X>>,
    steps: u64,
}

impl<X: FeatureVector + Clone> ControlAgent<X> {
    pub fn new(
        config: AgentConfig,
        gamma: f64,
        n_actions: usize,
        initial_weights: Vec<f64>,
        target: SoftmaxPolicySpec,
        behavior: SoftmaxPolicySpec,
    ) -> Result<Self> {
        config.validate()?;
        target.validate(n_actions)?;
        behavior.validate(n_actions)?;
        let trace = match config.algorithm {
            Algorithm::ProjectedTruncatedEmphaticExpectedSarsa { .. } => {
                config.trace_engine(Indexing::Control, gamma)?
            }
            Algorithm::TruncatedEmphaticExpectedSarsa { .. } => None,
            other => {
                return Err(Error::InvalidParameter(format!("{other:?} is a prediction algorithm")));
            }
        };
        let mut weights = LinearWeights::from_vec(initial_weights);
        if let Some(r) = config.algorithm.radius() {
            project_ball(weights.as_mut_slice(), r);
        }
        Ok(Self { config, gamma, weights, target, behavior, trace, window: VecDeque::new(), steps: 0 })
    }

    pub fn weights(&self) -> &LinearWeights {
        &self.weights
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn target_probs(&self, features: &[X]) -> Vec<f64> {
        self.target.probs(&action_values(features, self.weights.as_slice()))
    }

    pub fn behavior_probs(&self, features: &[X]) -> Vec<f64> {
        self.behavior.probs(&action_values(features, self.weights.as_slice()))
    }

    /// Samples an action from the behavior policy at the current weights.
    pub fn act(&self, features: &[X], rng: &mut Rng) -> usize {
        sample_categorical(&self.behavior_probs(features), rng)
    }

    /// `ρ` of `action` under the current weights.
    fn current_ratio(&self, features: &[X], action: usize) -> f64 {
        let q = action_values(features, self.weights.as_slice());
        ratio(self.target.probs(&q)[action], self.behavior.probs(&q)[action])
    }

    fn next_trace(&mut self, features: &[X], action: usize, interest: f64) -> f64 {
        let rho = self.current_ratio(features, action);
        if let Some(engine) = self.trace.as_mut() {
            return engine.push(rho, interest);
        }
        let Algorithm::TruncatedEmphaticExpectedSarsa { n } = self.config.algorithm else {
            unreachable!("only the recomputing variant has no trace engine")
        };
        self.window.push_back(WindowEntry { features: features.to_vec(), action, interest });
        if self.window.len() > n + 1 {
            self.window.pop_front();
        }
        let pairs: Vec<(f64, f64)> = self
            .window
            .iter()
            .map(|e| (self.current_ratio(&e.features, e.action), e.interest))
            .collect();
        trace_window_recompute(&pairs, self.gamma, Indexing::Control)
    }

    /// One update for `(S_t, A_t, R_{t+1}, S_{t+1})`. `next` holds
    /// `x(S_{t+1}, ·)`, or `None` when `S_{t+1}` is terminal. Returns the TD
    /// error.
    pub fn observe(
        &mut self,
        features: &[X],
        action: usize,
        interest: f64,
        reward: f64,
        next: Option<&[X]>,
    ) -> f64 {
        let trace = self.next_trace(features, action, interest);
        let expected_next = next.map_or(0.0, |nf| expected_value(self.weights.as_slice(), nf, &self.target_probs(nf)));
        let alpha = self.config.learning_rate.at(self.steps);
        let delta = expected_sarsa_step(
            self.weights.as_mut_slice(),
            &features[action],
            reward,
            expected_next,
            self.gamma,
            alpha,
            trace,
        );
        if let Some(r) = self.config.algorithm.radius() {
            project_ball(self.weights.as_mut_slice(), r);
        }
        self.steps += 1;
        delta
    }

    /// Forgets trace history at an episode boundary.
    pub fn end_episode(&mut self) {
        if let Some(engine) = self.trace.as_mut() {
            engine.reset();
        }
        self.window.clear();
    }
}
