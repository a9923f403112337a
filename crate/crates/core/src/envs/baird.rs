//! Baird's seven-state counterexample.
//!
//! Action `dashed` jumps uniformly to one of the first six states, action
//! `solid` always leads to the seventh. Rewards are zero, so every policy
//! has `v_π = 0` and `q_π = 0`.

use crate::agents::{PredictionProblem, TabularControlTask};
use crate::features::FeatureMap;
use crate::linalg::{Matrix, Vector};
use crate::mdp::{InterestFunction, TabularMdp, TabularPolicy};
use crate::Result;

pub const N_STATES: usize = 7;
pub const N_ACTIONS: usize = 2;
pub const DASHED: usize = 0;
pub const SOLID: usize = 1;
pub const DISCOUNT: f64 = 0.99;
/// Target policies `π(dashed|s)` used in the prediction experiments.
pub const TARGET_GRID: [f64; 6] = [0.0, 0.02, 0.04, 0.06, 0.08, 0.1];

pub fn baird_mdp() -> TabularMdp {
    let mut transition = vec![0.0; N_STATES * N_ACTIONS * N_STATES];
    for s in 0..N_STATES {
        for next in 0..N_STATES - 1 {
            transition[(s * N_ACTIONS + DASHED) * N_STATES + next] = 1.0 / 6.0;
        }
        transition[(s * N_ACTIONS + SOLID) * N_STATES + N_STATES - 1] = 1.0;
    }
    TabularMdp::new(
        N_STATES,
        N_ACTIONS,
        transition,
        vec![0.0; N_STATES * N_ACTIONS],
        DISCOUNT,
        vec![1.0 / N_STATES as f64; N_STATES],
    )
    .expect("Baird MDP is well formed")
}

/// `μ(dashed) = 6/7`, `μ(solid) = 1/7` in every state.
pub fn behavior_probs() -> [f64; 2] {
    [6.0 / 7.0, 1.0 / 7.0]
}

pub fn baird_behavior() -> TabularPolicy {
    TabularPolicy::state_independent(N_STATES, &behavior_probs()).expect("valid distribution")
}

pub fn baird_target(p_dashed: f64) -> Result<TabularPolicy> {
    TabularPolicy::state_independent(N_STATES, &[p_dashed, 1.0 - p_dashed])
}

/// The textbook 8-dimensional features: `x(s) = 2e_s + e_8` for the first
/// six states and `x(7) = e_7 + 2e_8`. They have rank 7.
pub fn baird_canonical_features() -> Matrix {
    let mut x = Matrix::zeros(N_STATES, N_STATES + 1);
    for s in 0..N_STATES - 1 {
        x[(s, s)] = 2.0;
        x[(s, N_STATES)] = 1.0;
    }
    x[(N_STATES - 1, N_STATES - 1)] = 1.0;
    x[(N_STATES - 1, N_STATES)] = 2.0;
    x
}

/// Textbook initial weights for [`baird_canonical_features`].
pub fn baird_canonical_initial_weights() -> Vec<f64> {
    vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 1.0]
}

/// Orthonormal basis `Q` (8×7) of the row space of the canonical features.
fn row_space_basis() -> Matrix {
    baird_canonical_features().transpose().qr().q()
}

/// Canonical features in coordinates of an orthonormal basis `Q` of their
/// row space, `x'(s) = Qᵀx(s)`.
///
/// Every linear update moves the canonical weights along some `x(s)`, so the
/// component in the null space never changes and never affects values. In
/// the coordinates `w' = Qᵀw` the features have full rank while values,
/// inner products `x(s)ᵀx(s')` and therefore every learning trajectory of
/// `Xw` are exactly those of the canonical parameterization.
pub fn baird_features() -> FeatureMap {
    FeatureMap::new(baird_canonical_features() * row_space_basis()).expect("row-space coordinates have full rank")
}

/// The canonical initial weights in row-space coordinates, `Qᵀw₀`.
pub fn baird_initial_weights() -> Vec<f64> {
    let w0 = Vector::from_vec(baird_canonical_initial_weights());
    (row_space_basis().transpose() * w0).iter().copied().collect()
}

/// State features copied into the block of the chosen action, rows indexed
/// by `s · 2 + a`.
pub fn baird_control_features() -> FeatureMap {
    let x = baird_features();
    let k = x.dim();
    let mut m = Matrix::zeros(N_STATES * N_ACTIONS, k * N_ACTIONS);
    for s in 0..N_STATES {
        for a in 0..N_ACTIONS {
            for j in 0..k {
                m[(s * N_ACTIONS + a, a * k + j)] = x.matrix()[(s, j)];
            }
        }
    }
    FeatureMap::new(m).expect("block features have full rank")
}

pub fn baird_control_initial_weights() -> Vec<f64> {
    let w = baird_initial_weights();
    w.iter().chain(&w).copied().collect()
}

/// Everything needed to run Baird experiments.
#[derive(Debug, Clone)]
pub struct Baird {
    pub mdp: TabularMdp,
    pub features: FeatureMap,
    pub initial_weights: Vec<f64>,
    pub control_features: FeatureMap,
    pub control_initial_weights: Vec<f64>,
}

impl Default for Baird {
    fn default() -> Self {
        Self::new()
    }
}

impl Baird {
    pub fn new() -> Self {
        Self {
            mdp: baird_mdp(),
            features: baird_features(),
            initial_weights: baird_initial_weights(),
            control_features: baird_control_features(),
            control_initial_weights: baird_control_initial_weights(),
        }
    }

    /// Off-policy evaluation of `π(dashed|s) = p_dashed` under the standard
    /// behavior policy with unit interest.
    pub fn prediction_problem(&self, p_dashed: f64) -> Result<PredictionProblem> {
        PredictionProblem::new(
            self.mdp.clone(),
            baird_behavior(),
            baird_target(p_dashed)?,
            self.features.clone(),
            InterestFunction::ones(N_STATES),
            self.initial_weights.clone(),
        )
    }

    pub fn control_task(&self) -> TabularControlTask {
        TabularControlTask::new(self.mdp.clone(), self.control_features.clone(), None)
            .expect("control features match the MDP")
    }
}
