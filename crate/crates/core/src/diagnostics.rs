//! Monte Carlo estimates that tie the sampled learners to the closed-form
//! analysis.
//!
//! Samples along one stationary trajectory are correlated, so standard
//! errors come from batch means: the stream is cut into equal batches and
//! the spread of the per-batch averages is used.

use serde::{Deserialize, Serialize};

use crate::agents::{td_error, PredictionProblem};
use crate::mdp::{
    sample_categorical, state_action_transition_matrix, state_transition_matrix, stationary_distribution,
    transition_from, InterestFunction, TabularMdp, TabularPolicy,
};
use crate::traces::{Indexing, TraceConfig, TraceEngine, TraceMode};
use crate::{Error, Result, Rng};

/// Componentwise mean with a batch-means standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEstimate {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Number of samples that contributed to each component.
    pub samples: Vec<u64>,
}

impl BatchEstimate {
    /// Largest `|mean − expected| / std_err` over the components. Gaps at
    /// the level of summation roundoff count as 0, so deterministic
    /// components with zero spread compare cleanly.
    pub fn max_z_score(&self, expected: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.std_err)
            .zip(expected)
            .map(|((m, se), e)| {
                let gap = (m - e).abs();
                if gap <= 1e-9 * e.abs().max(1.0) {
                    0.0
                } else {
                    gap / se
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Per-component sums for the current batch plus the finished batch means.
struct BatchMeans {
    total: Vec<f64>,
    count: Vec<u64>,
    batch_sum: Vec<f64>,
    batch_count: Vec<u64>,
    batch_means: Vec<Vec<f64>>,
}

impl BatchMeans {
    fn new(len: usize) -> Self {
        Self {
            total: vec![0.0; len],
            count: vec![0; len],
            batch_sum: vec![0.0; len],
            batch_count: vec![0; len],
            batch_means: vec![Vec::new(); len],
        }
    }

    fn add(&mut self, idx: usize, value: f64) {
        self.total[idx] += value;
        self.count[idx] += 1;
        self.batch_sum[idx] += value;
        self.batch_count[idx] += 1;
    }

    fn close_batch(&mut self) {
        for idx in 0..self.total.len() {
            if self.batch_count[idx] > 0 {
                self.batch_means[idx].push(self.batch_sum[idx] / self.batch_count[idx] as f64);
            }
            self.batch_sum[idx] = 0.0;
            self.batch_count[idx] = 0;
        }
    }

    fn finish(self) -> BatchEstimate {
        let mean = self
            .total
            .iter()
            .zip(&self.count)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
            .collect();
        let std_err = self
            .batch_means
            .iter()
            .map(|b| {
                if b.len() < 2 {
                    return f64::INFINITY;
                }
                let k = b.len() as f64;
                let m = b.iter().sum::<f64>() / k;
                let var = b.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            })
            .collect();
        BatchEstimate { mean, std_err, samples: self.count }
    }
}

fn check_batches(steps: u64, batches: usize) -> Result<u64> {
    if batches < 2 || steps < batches as u64 {
        return Err(Error::InvalidParameter(format!("need at least 2 batches and one step per batch (got {batches} for {steps} steps)")));
    }
    Ok(steps / batches as u64)
}

/// Estimates `E[F_{t,n} | S_t = s]` (prediction indexing) or
/// `E[F_{t,n} | S_t = s, A_t = a]` (control indexing, pairs `s · |A| + a`)
/// along a trajectory of `behavior` started from its stationary
/// distribution. `interest` is per state or per pair accordingly. The first
/// `n` steps are discarded so every recorded trace has a full window.
#[allow(clippy::too_many_arguments)]
pub fn emphasis_monte_carlo(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    target: &TabularPolicy,
    interest: &InterestFunction,
    n: usize,
    indexing: Indexing,
    steps: u64,
    batches: usize,
    rng: &mut Rng,
) -> Result<BatchEstimate> {
    behavior.check_matches(mdp)?;
    target.check_matches(mdp)?;
    let per_batch = check_batches(steps, batches)?;
    let n_actions = mdp.n_actions();
    let len = match indexing {
        Indexing::Prediction => mdp.n_states(),
        Indexing::Control => mdp.n_pairs(),
    };
    if interest.len() != len {
        return Err(Error::Shape(format!("interest of length {} for {len} indices", interest.len())));
    }
    let d = stationary_distribution(&state_transition_matrix(mdp, behavior)?)?;
    let mut engine = TraceEngine::new(TraceConfig::new(TraceMode::Hard { n }, indexing, mdp.discount()))?;
    let mut stats = BatchMeans::new(len);
    let mut state = sample_categorical(d.as_vector().as_slice(), rng);
    for t in 0..steps + n as u64 {
        let action = sample_categorical(behavior.row(state), rng);
        let rho = target.prob(state, action) / behavior.prob(state, action);
        let idx = match indexing {
            Indexing::Prediction => state,
            Indexing::Control => state * n_actions + action,
        };
        let trace = engine.push(rho, interest.get(idx));
        if let Some(k) = t.checked_sub(n as u64) {
            stats.add(idx, trace);
            if (k + 1) % per_batch == 0 {
                stats.close_batch();
            }
        }
        state = transition_from(mdp, state, action, rng).next_state;
    }
    Ok(stats.finish())
}

/// Estimates the expected truncated emphatic TD increment
/// `E[F_{t,n} ρ_t δ_t(w) x(S_t)]` at fixed weights `w` along a stationary
/// behavior trajectory. Its exact value is `A_n w + b_n`.
pub fn expected_increment_monte_carlo(
    problem: &PredictionProblem,
    n: usize,
    w: &[f64],
    steps: u64,
    batches: usize,
    rng: &mut Rng,
) -> Result<BatchEstimate> {
    let per_batch = check_batches(steps, batches)?;
    let dim = problem.features.dim();
    if w.len() != dim {
        return Err(Error::Shape(format!("{} weights for {dim} features", w.len())));
    }
    let mdp = &problem.mdp;
    let gamma = mdp.discount();
    let mut engine = TraceEngine::new(TraceConfig::new(TraceMode::Hard { n }, Indexing::Prediction, gamma))?;
    let mut stats = BatchMeans::new(dim);
    let mut state = sample_categorical(problem.stationary().as_slice(), rng);
    for t in 0..steps + n as u64 {
        let action = sample_categorical(problem.behavior.row(state), rng);
        let step = transition_from(mdp, state, action, rng);
        let rho = problem.ratio(state, action);
        let trace = engine.push(rho, problem.interest.get(state));
        if let Some(k) = t.checked_sub(n as u64) {
            let x = problem.features.row(state);
            let delta = td_error(w, x, step.reward, gamma, problem.features.row(step.next_state));
            let scale = trace * rho * delta;
            for (j, &xj) in x.iter().enumerate() {
                stats.add(j, scale * xj);
            }
            if (k + 1) % per_batch == 0 {
                stats.close_batch();
            }
        }
        state = step.next_state;
    }
    Ok(stats.finish())
}

/// Fraction of time spent in each state along a trajectory of `policy`.
pub fn state_occupancy(mdp: &TabularMdp, policy: &TabularPolicy, steps: u64, rng: &mut Rng) -> Result<Vec<f64>> {
    policy.check_matches(mdp)?;
    let mut counts = vec![0u64; mdp.n_states()];
    let mut state = sample_categorical(mdp.initial_dist(), rng);
    for _ in 0..steps {
        counts[state] += 1;
        let action = sample_categorical(policy.row(state), rng);
        state = transition_from(mdp, state, action, rng).next_state;
    }
    Ok(counts.into_iter().map(|c| c as f64 / steps as f64).collect())
}

/// Fraction of time spent in each pair `s · |A| + a`.
pub fn pair_occupancy(mdp: &TabularMdp, policy: &TabularPolicy, steps: u64, rng: &mut Rng) -> Result<Vec<f64>> {
    policy.check_matches(mdp)?;
    // Validates the pair chain before sampling it.
    state_action_transition_matrix(mdp, policy)?;
    let mut counts = vec![0u64; mdp.n_pairs()];
    let mut state = sample_categorical(mdp.initial_dist(), rng);
    for _ in 0..steps {
        let action = sample_categorical(policy.row(state), rng);
        counts[state * mdp.n_actions() + action] += 1;
        state = transition_from(mdp, state, action, rng).next_state;
    }
    Ok(counts.into_iter().map(|c| c as f64 / steps as f64).collect())
}

/// Total variation distance `½ Σ |p − q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
