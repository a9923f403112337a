//! Followon traces.
//!
//! Two index conventions exist and they differ by one step:
//!
//! - prediction: `F_t = i_t + γ ρ_{t-1} F_{t-1}` (the ratio of the previous
//!   step links consecutive terms);
//! - control: `F_t = i_t + γ ρ_t F_{t-1}` (the ratio of the current action
//!   links them, state-action interest).
//!
//! A hard truncation of length `n` keeps only the `n + 1` newest terms of the
//! expanded sum, so with all `i ≤ i_max` and `ρ ≤ ρ_max` the trace never
//! exceeds `(n + 1) max(1, ρ_max)ⁿ i_max`. History before step 0 is treated
//! as `i = ρ = 0`, so for `t < n` the truncated trace equals the full one.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Below this magnitude the incremental path refuses to divide.
pub const INCREMENTAL_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceMode {
    /// Untruncated recursion with decay γ.
    Full,
    /// Last `n + 1` terms with decay γ.
    Hard { n: usize },
    /// Untruncated recursion with decay β.
    Soft { beta: f64 },
    /// Last `n + 1` terms with decay β.
    Combined { beta: f64, n: usize },
}

impl TraceMode {
    /// Window length `n` for the truncated modes.
    pub fn window(&self) -> Option<usize> {
        match *self {
            TraceMode::Hard { n } | TraceMode::Combined { n, .. } => Some(n),
            TraceMode::Full | TraceMode::Soft { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TraceMode::Soft { beta } | TraceMode::Combined { beta, .. } if !(beta > 0.0 && beta < 1.0) => {
                Err(Error::InvalidParameter(format!("beta {beta} not in (0, 1)")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indexing {
    Prediction,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub mode: TraceMode,
    pub indexing: Indexing,
    pub gamma: f64,
    /// Use the O(1) running-correction update instead of re-evaluating the
    /// window every step. Only meaningful for the truncated modes.
    #[serde(default)]
    pub incremental: bool,
}

impl TraceConfig {
    pub fn new(mode: TraceMode, indexing: Indexing, gamma: f64) -> Self {
        Self { mode, indexing, gamma, incremental: false }
    }

    pub fn incremental(mut self) -> Self {
        self.incremental = true;
        self
    }

    /// γ for `Full`/`Hard`, β for `Soft`/`Combined`.
    pub fn decay(&self) -> f64 {
        match self.mode {
            TraceMode::Full | TraceMode::Hard { .. } => self.gamma,
            TraceMode::Soft { beta } | TraceMode::Combined { beta, .. } => beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mode.validate()?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        if self.incremental && self.mode.window().is_none() {
            return Err(Error::InvalidParameter(
                "incremental updates need a truncated trace mode".into(),
            ));
        }
        Ok(())
    }
}

/// Horner evaluation of a truncated trace over `(ρ_k, i_k)` pairs ordered
/// oldest to newest.
pub fn trace_window_recompute(pairs: &[(f64, f64)], decay: f64, indexing: Indexing) -> f64 {
    let mut value = 0.0;
    let mut prev_rho = 0.0;
    for &(rho, interest) in pairs {
        let link = match indexing {
            Indexing::Prediction => prev_rho,
            Indexing::Control => rho,
        };
        value = interest + decay * link * value;
        prev_rho = rho;
    }
    value
}

/// Stateful trace computer; one per run.
#[derive(Debug, Clone)]
pub struct TraceEngine {
    config: TraceConfig,
    decay: f64,
    /// Newest `n + 1` pairs for the truncated modes.
    ring: VecDeque<(f64, f64)>,
    /// Previous trace value.
    value: f64,
    /// ρ of the previous step.
    last_rho: f64,
    /// Size of the term that fell out of the window this step.
    delta: f64,
    /// Pair evicted on the previous step, if any.
    prev_evicted: Option<(f64, f64)>,
    steps: u64,
    fallbacks: u64,
}

impl TraceEngine {
    pub fn new(config: TraceConfig) -> Result<Self> {
        config.validate()?;
        let capacity = config.mode.window().map_or(0, |n| n + 2);
        Ok(Self {
            config,
            decay: config.decay(),
            ring: VecDeque::with_capacity(capacity),
            value: 0.0,
            last_rho: 0.0,
            delta: 0.0,
            prev_evicted: None,
            steps: 0,
            fallbacks: 0,
        })
    }

    pub fn config(&self) -> &TraceConfig {
        &self.config
    }

    /// Trace value returned by the last push (0 before the first).
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// How often the incremental path had to re-evaluate the window.
    pub fn fallback_count(&self) -> u64 {
        self.fallbacks
    }

    /// Stored `(ρ, i)` pairs, oldest first.
    pub fn window(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.ring.iter()
    }

    /// Forgets all history, e.g. at an episode boundary.
    pub fn reset(&mut self) {
        self.ring.clear();
        self.value = 0.0;
        self.last_rho = 0.0;
        self.delta = 0.0;
        self.prev_evicted = None;
        self.steps = 0;
    }

    /// Advances one step with this step's ratio and interest and returns the
    /// trace `F_t`.
    ///
    /// In the prediction indexing `rho_t` is only stored for the next step.
    pub fn push(&mut self, rho_t: f64, interest_t: f64) -> f64 {
        let link = match self.config.indexing {
            Indexing::Prediction => self.last_rho,
            Indexing::Control => rho_t,
        };
        let value = match self.config.mode.window() {
            None => interest_t + self.decay * link * self.value,
            Some(n) => {
                self.ring.push_back((rho_t, interest_t));
                let evicted = if self.ring.len() > n + 1 { self.ring.pop_front() } else { None };
                if self.config.incremental {
                    self.incremental_value(n, link, interest_t, evicted)
                } else {
                    self.window_value()
                }
            }
        };
        self.value = value;
        self.last_rho = rho_t;
        self.steps += 1;
        value
    }

    fn window_value(&mut self) -> f64 {
        let pairs = self.ring.make_contiguous();
        trace_window_recompute(pairs, self.decay, self.config.indexing)
    }

    /// `γⁿ⁺¹ i_ev ∏ρ` for the term that just left the window, from stored
    /// values.
    fn dropped_term(&self, n: usize, evicted: (f64, f64)) -> f64 {
        let ratios: f64 = match self.config.indexing {
            // ρ_{t-n-1} · ρ_{t-n} ⋯ ρ_{t-1}
            Indexing::Prediction => {
                evicted.0 * self.ring.iter().take(n).map(|p| p.0).product::<f64>()
            }
            // ρ_{t-n} ⋯ ρ_t
            Indexing::Control => self.ring.iter().map(|p| p.0).product(),
        };
        self.decay.powi(n as i32 + 1) * evicted.1 * ratios
    }

    fn incremental_value(&mut self, n: usize, link: f64, interest_t: f64, evicted: Option<(f64, f64)>) -> f64 {
        let Some(evicted) = evicted else {
            // Nothing has left the window yet: the plain recursion is exact.
            self.delta = 0.0;
            return interest_t + self.decay * link * self.value;
        };
        let recursive = self.prev_evicted.and_then(|prev| {
            // Ratio leaving the product of linking ratios.
            let out = match self.config.indexing {
                Indexing::Prediction => prev.0,
                Indexing::Control => evicted.0,
            };
            let divisor = out * prev.1;
            (divisor.abs() >= INCREMENTAL_GUARD).then(|| self.delta * link * evicted.1 / divisor)
        });
        self.prev_evicted = Some(evicted);
        match recursive {
            Some(delta) => {
                self.delta = delta;
                interest_t + self.decay * link * self.value - delta
            }
            None => {
                if self.steps > n as u64 + 1 {
                    self.fallbacks += 1;
                }
                self.delta = self.dropped_term(n, evicted);
                self.window_value()
            }
        }
    }
}
