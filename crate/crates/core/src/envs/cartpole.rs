//! Cart-pole balancing with Euler integration and the classic constants.
//!
//! Observations are `(x, ẋ, θ, θ̇)`. Reward is +1 per step; an episode ends
//! when the pole falls, the cart leaves the track, or the step cap is hit.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tiles::TileCoder;
use crate::agents::{ControlStep, ControlTask};
use crate::features::SparseBinary;
use crate::policy::{action_values, SoftmaxPolicySpec};
use crate::{mdp::sample_categorical, Error, Result, Rng};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const N_ACTIONS: usize = 2;
pub const DISCOUNT: f64 = 0.99;

/// Physical constants and episode limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force: f64,
    /// Integration step in seconds.
    pub dt: f64,
    /// Pole angle in radians beyond which it has fallen.
    pub angle_limit: f64,
    pub position_limit: f64,
    pub max_steps: u32,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force: 10.0,
            dt: 0.02,
            angle_limit: 12.0f64.to_radians(),
            position_limit: 2.4,
            max_steps: 1000,
        }
    }
}

pub type CartPoleState = [f64; 4];

/// Whether the pole has fallen or the cart has left the track.
pub fn has_failed(params: &CartPoleParams, state: &CartPoleState) -> bool {
    state[0].abs() > params.position_limit || state[2].abs() > params.angle_limit
}

/// One Euler step. Returns the next state, the reward and whether the
/// episode ended through failure.
pub fn cartpole_step(params: &CartPoleParams, state: &CartPoleState, action: usize) -> (CartPoleState, f64, bool) {
    let [x, x_dot, theta, theta_dot] = *state;
    let force = if action == RIGHT { params.force } else { -params.force };
    let total_mass = params.cart_mass + params.pole_mass;
    let pole_moment = params.pole_mass * params.half_length;
    let (sin, cos) = theta.sin_cos();
    let temp = (force + pole_moment * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc = (params.gravity * sin - cos * temp)
        / (params.half_length * (4.0 / 3.0 - params.pole_mass * cos * cos / total_mass));
    let x_acc = temp - pole_moment * theta_acc * cos / total_mass;
    let next = [
        x + params.dt * x_dot,
        x_dot + params.dt * x_acc,
        theta + params.dt * theta_dot,
        theta_dot + params.dt * theta_acc,
    ];
    (next, 1.0, has_failed(params, &next))
}

/// Episode state machine around [`cartpole_step`].
#[derive(Debug, Clone)]
pub struct CartPole {
    params: CartPoleParams,
    state: CartPoleState,
    steps: u32,
    done: bool,
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Self {
        Self { params, state: [0.0; 4], steps: 0, done: true }
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    pub fn observation(&self) -> &CartPoleState {
        &self.state
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Each coordinate starts uniformly in `[-0.05, 0.05]`.
    pub fn reset(&mut self, rng: &mut Rng) {
        for v in self.state.iter_mut() {
            *v = rng.random_range(-0.05..0.05);
        }
        self.steps = 0;
        self.done = false;
    }

    /// Starts an episode from a given state.
    pub fn reset_to(&mut self, state: CartPoleState) {
        self.state = state;
        self.steps = 0;
        self.done = has_failed(&self.params, &state);
    }

    pub fn step(&mut self, action: usize) -> Result<ControlStep> {
        if self.done {
            return Err(Error::Environment("step called on a finished episode".into()));
        }
        if action >= N_ACTIONS {
            return Err(Error::Environment(format!("action {action} out of range")));
        }
        let (next, reward, failed) = cartpole_step(&self.params, &self.state, action);
        self.state = next;
        self.steps += 1;
        let truncated = !failed && self.steps >= self.params.max_steps;
        self.done = failed || truncated;
        Ok(ControlStep { reward, terminal: failed, truncated })
    }
}

/// CartPole with tile-coded state-action features: the index set of the
/// observation shifted by `a · coder.size()`.
#[derive(Debug, Clone)]
pub struct CartPoleTask {
    env: CartPole,
    coder: TileCoder,
}

impl CartPoleTask {
    pub fn new(params: CartPoleParams, coder: TileCoder) -> Self {
        Self { env: CartPole::new(params), coder }
    }

    pub fn with_defaults() -> Self {
        Self::new(CartPoleParams::default(), TileCoder::cartpole_default())
    }

    pub fn env(&self) -> &CartPole {
        &self.env
    }

    pub fn coder(&self) -> &TileCoder {
        &self.coder
    }

    fn features_of(&self, obs: &CartPoleState) -> Result<Vec<SparseBinary>> {
        let base = self.coder.code(obs)?;
        Ok((0..N_ACTIONS)
            .map(|a| SparseBinary(base.indices().iter().map(|i| i + a * self.coder.size()).collect()))
            .collect())
    }

    /// Mean undiscounted return of `policy` at weights `w` over fresh
    /// episodes, using a private copy of the environment.
    pub fn evaluate(&self, w: &[f64], policy: &SoftmaxPolicySpec, episodes: usize, rng: &mut Rng) -> Result<f64> {
        let mut env = CartPole::new(self.env.params);
        let mut total = 0.0;
        for _ in 0..episodes {
            env.reset(rng);
            while !env.is_done() {
                let feats = self.features_of(env.observation())?;
                let action = sample_categorical(&policy.probs(&action_values(&feats, w)), rng);
                total += env.step(action)?.reward;
            }
        }
        Ok(total / episodes as f64)
    }
}

impl ControlTask for CartPoleTask {
    type Features = SparseBinary;

    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn discount(&self) -> f64 {
        DISCOUNT
    }

    fn dim(&self) -> usize {
        N_ACTIONS * self.coder.size()
    }

    fn reset(&mut self, rng: &mut Rng) -> Result<()> {
        self.env.reset(rng);
        Ok(())
    }

    fn action_features(&self) -> Result<Vec<SparseBinary>> {
        self.features_of(self.env.observation())
    }

    fn step(&mut self, action: usize, _rng: &mut Rng) -> Result<ControlStep> {
        self.env.step(action)
    }
}
