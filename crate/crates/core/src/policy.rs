//! Weight-dependent softmax policies and their mixtures with a fixed base
//! policy.

use serde::{Deserialize, Serialize};

use crate::features::{FeatureMap, FeatureVector};
use crate::mdp::TabularPolicy;
use crate::{Error, Result};

/// Policy mixed in with weight `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "probs", rename_all = "snake_case")]
pub enum BasePolicy {
    Uniform,
    /// The same action distribution in every state.
    Fixed(Vec<f64>),
}

/// `π(·|s) = ε·base + (1 − ε)·softmax(q(s, ·)/τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicySpec {
    pub temperature: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "uniform_base")]
    pub base: BasePolicy,
}

fn uniform_base() -> BasePolicy {
    BasePolicy::Uniform
}

impl SoftmaxPolicySpec {
    /// Plain softmax at temperature `tau`.
    pub fn softmax(temperature: f64) -> Self {
        Self { temperature, epsilon: 0.0, base: BasePolicy::Uniform }
    }

    pub fn mixture(temperature: f64, epsilon: f64, base: BasePolicy) -> Self {
        Self { temperature, epsilon, base }
    }

    /// A weight-independent policy equal to `base`.
    pub fn fixed(base: BasePolicy) -> Self {
        Self { temperature: 1.0, epsilon: 1.0, base }
    }

    pub fn validate(&self, n_actions: usize) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature {} must be positive and finite",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!("epsilon {} not in [0, 1]", self.epsilon)));
        }
        if let BasePolicy::Fixed(probs) = &self.base {
            if probs.len() != n_actions {
                return Err(Error::Shape(format!(
                    "base policy has {} actions, expected {n_actions}",
                    probs.len()
                )));
            }
            let sum: f64 = probs.iter().sum();
            if probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::NotStochastic("base policy is not a distribution".into()));
            }
        }
        Ok(())
    }

    /// Writes the action distribution for action values `q` into `out`.
    pub fn probs_into(&self, q: &[f64], out: &mut [f64]) {
        let n = q.len();
        if self.epsilon < 1.0 {
            let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (o, &v) in out.iter_mut().zip(q) {
                *o = ((v - max) / self.temperature).exp();
                total += *o;
            }
            for o in out.iter_mut() {
                *o *= (1.0 - self.epsilon) / total;
            }
        } else {
            out.fill(0.0);
        }
        if self.epsilon > 0.0 {
            match &self.base {
                BasePolicy::Uniform => {
                    for o in out.iter_mut() {
                        *o += self.epsilon / n as f64;
                    }
                }
                BasePolicy::Fixed(base) => {
                    for (o, b) in out.iter_mut().zip(base) {
                        *o += self.epsilon * b;
                    }
                }
            }
        }
    }

    pub fn probs(&self, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; q.len()];
        self.probs_into(q, &mut out);
        out
    }
}

/// Action values `q(s, a) = x(s, a)ᵀw` for every action of one state.
pub fn action_values<F: FeatureVector>(features: &[F], w: &[f64]) -> Vec<f64> {
    features.iter().map(|x| x.dot(w)).collect()
}

/// Tabular policy obtained by evaluating `spec` on the action values
/// `x(s, a)ᵀw`. Rows of `features` are indexed by `s · n_actions + a`.
pub fn softmax_policy_from_weights(
    w: &[f64],
    features: &FeatureMap,
    n_actions: usize,
    spec: &SoftmaxPolicySpec,
) -> Result<TabularPolicy> {
    spec.validate(n_actions)?;
    if n_actions == 0 || !features.n_rows().is_multiple_of(n_actions) {
        return Err(Error::Shape(format!(
            "{} feature rows do not split into {n_actions} actions",
            features.n_rows()
        )));
    }
    if w.len() != features.dim() {
        return Err(Error::Shape(format!("weights of length {} for {} features", w.len(), features.dim())));
    }
    let n_states = features.n_rows() / n_actions;
    let mut probs = vec![0.0; features.n_rows()];
    let mut q = vec![0.0; n_actions];
    for s in 0..n_states {
        for (a, v) in q.iter_mut().enumerate() {
            *v = features.row(s * n_actions + a).dot(w);
        }
        spec.probs_into(&q, &mut probs[s * n_actions..(s + 1) * n_actions]);
    }
    TabularPolicy::new(n_states, n_actions, probs)
}
