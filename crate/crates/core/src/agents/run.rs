use serde::{Deserialize, Serialize};

use super::{AgentConfig, ControlAgent, ControlTask, PredictionAgent};
use crate::features::FeatureMap;
use crate::linalg::Vector;
use crate::mdp::{
    sample_categorical, sample_initial_state, state_transition_matrix, state_values, stationary_distribution,
    transition_from, InterestFunction, TabularMdp, TabularPolicy,
};
use crate::{seeded_rng, Error, Result};

/// Weight norm beyond which a run counts as diverged.
pub const DIVERGENCE_NORM: f64 = 1e10;

/// Metric trajectory of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Filled in by whoever owns the configuration.
    #[serde(default)]
    pub fingerprint: String,
    pub seed: u64,
    pub metric: String,
    /// `(step, value)` pairs in step order.
    pub points: Vec<(u64, f64)>,
    pub diverged: bool,
    /// First evaluation step at which divergence was detected.
    #[serde(default)]
    pub diverged_at: Option<u64>,
    /// Last finite weights.
    pub final_weights: Vec<f64>,
}

impl RunRecord {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn final_value(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }
}

/// `points` evenly spaced evaluation steps from 0 to `total` inclusive.
pub fn evaluation_steps(total: u64, points: usize) -> Vec<u64> {
    match points {
        0 => Vec::new(),
        1 => vec![total],
        _ => (0..points as u64)
            .map(|k| ((k as u128 * total as u128) / (points as u128 - 1)) as u64)
            .collect(),
    }
}

/// `‖Xw − v‖` weighted by `d`.
pub fn rmsve(features: &FeatureMap, w: &[f64], v: &Vector, d: &Vector) -> f64 {
    let err = features.values(w) - v;
    err.iter().zip(d.iter()).map(|(e, d)| d * e * e).sum::<f64>().sqrt()
}

/// A verified off-policy evaluation problem on a finite MDP.
#[derive(Debug, Clone)]
pub struct PredictionProblem {
    pub mdp: TabularMdp,
    pub behavior: TabularPolicy,
    pub target: TabularPolicy,
    pub features: FeatureMap,
    pub interest: InterestFunction,
    pub initial_weights: Vec<f64>,
    d_mu: Vector,
    v_pi: Vector,
    /// `π(a|s)/μ(a|s)` indexed by `s · |A| + a`.
    ratios: Vec<f64>,
}

impl PredictionProblem {
    /// Checks ergodicity of `μ`, coverage of `π` by `μ` and the shapes of the
    /// features, interest and initial weights.
    pub fn new(
        mdp: TabularMdp,
        behavior: TabularPolicy,
        target: TabularPolicy,
        features: FeatureMap,
        interest: InterestFunction,
        initial_weights: Vec<f64>,
    ) -> Result<Self> {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        if features.n_rows() != ns || interest.len() != ns || initial_weights.len() != features.dim() {
            return Err(Error::Shape(format!(
                "{} feature rows, {} interest values and {} weights for {ns} states and {} features",
                features.n_rows(),
                interest.len(),
                initial_weights.len(),
                features.dim()
            )));
        }
        let d_mu = stationary_distribution(&state_transition_matrix(&mdp, &behavior)?)?.into_vector();
        let v_pi = state_values(&mdp, &target)?;
        let mut ratios = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let (pi, mu) = (target.prob(s, a), behavior.prob(s, a));
                if pi > 0.0 && mu == 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "behavior never takes action {a} in state {s} but the target does"
                    )));
                }
                ratios[s * na + a] = if pi == 0.0 { 0.0 } else { pi / mu };
            }
        }
        Ok(Self { mdp, behavior, target, features, interest, initial_weights, d_mu, v_pi, ratios })
    }

    pub fn stationary(&self) -> &Vector {
        &self.d_mu
    }

    pub fn true_values(&self) -> &Vector {
        &self.v_pi
    }

    pub fn ratio(&self, s: usize, a: usize) -> f64 {
        self.ratios[s * self.mdp.n_actions() + a]
    }

    pub fn rmsve(&self, w: &[f64]) -> f64 {
        rmsve(&self.features, w, &self.v_pi, &self.d_mu)
    }
}

fn weights_ok(w: &[f64]) -> bool {
    w.iter().all(|x| x.is_finite()) && w.iter().map(|x| x * x).sum::<f64>().sqrt() <= DIVERGENCE_NORM
}

/// Evaluation bookkeeping shared by both run loops.
struct Recorder {
    schedule: Vec<u64>,
    next: usize,
    record: RunRecord,
}

impl Recorder {
    fn new(seed: u64, metric: &str, total: u64, points: usize, w0: &[f64]) -> Self {
        Self {
            schedule: evaluation_steps(total, points),
            next: 0,
            record: RunRecord {
                fingerprint: String::new(),
                seed,
                metric: metric.to_string(),
                points: Vec::with_capacity(points),
                diverged: false,
                diverged_at: None,
                final_weights: w0.to_vec(),
            },
        }
    }

    fn due(&self, step: u64) -> bool {
        self.schedule.get(self.next) == Some(&step)
    }

    /// Records every evaluation scheduled at `step`. Returns `false` once the
    /// run has diverged, after padding the remaining points.
    fn evaluate(&mut self, step: u64, w: &[f64], metric: &mut dyn FnMut(&[f64]) -> f64) -> bool {
        if !weights_ok(w) {
            self.diverge(step);
            return false;
        }
        let value = metric(w);
        if !value.is_finite() {
            self.diverge(step);
            return false;
        }
        self.record.final_weights.copy_from_slice(w);
        while self.due(step) {
            self.record.points.push((step, value));
            self.next += 1;
        }
        true
    }

    fn diverge(&mut self, step: u64) {
        let last = self.record.points.last().map_or(f64::NAN, |p| p.1);
        self.record.diverged = true;
        self.record.diverged_at = Some(step);
        for &s in &self.schedule[self.next..] {
            self.record.points.push((s, last));
        }
        self.next = self.schedule.len();
    }

    fn finish(self) -> RunRecord {
        self.record
    }
}

/// Runs a prediction learner for `steps` transitions under the behavior
/// policy, recording the weighted value error `‖Xw − v_π‖_{d_μ}` at
/// `eval_points` evenly spaced steps.
pub fn run_prediction(
    problem: &PredictionProblem,
    config: AgentConfig,
    steps: u64,
    eval_points: usize,
    seed: u64,
) -> Result<RunRecord> {
    let mut agent = PredictionAgent::new(config, problem.mdp.discount(), problem.initial_weights.clone())?;
    let mut rng = seeded_rng(seed);
    let mut rec = Recorder::new(seed, "rmsve", steps, eval_points, agent.weights().as_slice());
    let mut metric = |w: &[f64]| problem.rmsve(w);
    if rec.due(0) && !rec.evaluate(0, agent.weights().as_slice(), &mut metric) {
        return Ok(rec.finish());
    }
    let mut state = sample_initial_state(&problem.mdp, &mut rng);
    for t in 1..=steps {
        let action = sample_categorical(problem.behavior.row(state), &mut rng);
        let step = transition_from(&problem.mdp, state, action, &mut rng);
        let delta = agent.observe(
            problem.features.row(state),
            step.reward,
            problem.features.row(step.next_state),
            problem.ratio(state, action),
            problem.interest.get(state),
        );
        state = step.next_state;
        if !delta.is_finite() {
            rec.diverge(t);
            break;
        }
        if rec.due(t) && !rec.evaluate(t, agent.weights().as_slice(), &mut metric) {
            break;
        }
    }
    Ok(rec.finish())
}

/// Runs an expected-SARSA learner on `task`. Actions follow the agent's
/// behavior policy at the current weights; episodes restart on termination
/// or truncation. `metric` is evaluated on the weights at `eval_points`
/// evenly spaced steps.
pub fn run_control<T: ControlTask>(
    task: &mut T,
    mut agent: ControlAgent<T::Features>,
    steps: u64,
    eval_points: usize,
    seed: u64,
    metric_name: &str,
    metric: &mut dyn FnMut(&[f64]) -> f64,
) -> Result<RunRecord> {
    let mut rng = seeded_rng(seed);
    let mut rec = Recorder::new(seed, metric_name, steps, eval_points, agent.weights().as_slice());
    if rec.due(0) && !rec.evaluate(0, agent.weights().as_slice(), metric) {
        return Ok(rec.finish());
    }
    task.reset(&mut rng)?;
    let mut features = task.action_features()?;
    let mut action = agent.act(&features, &mut rng);
    for t in 1..=steps {
        let interest = task.interest(action);
        let outcome = task.step(action, &mut rng)?;
        let next = if outcome.terminal { None } else { Some(task.action_features()?) };
        let next_action = next.as_ref().map(|nf| agent.act(nf, &mut rng));
        let delta = agent.observe(&features, action, interest, outcome.reward, next.as_deref());
        if !delta.is_finite() {
            rec.diverge(t);
            break;
        }
        if outcome.terminal || outcome.truncated {
            agent.end_episode();
            task.reset(&mut rng)?;
            features = task.action_features()?;
            action = agent.act(&features, &mut rng);
        } else {
            features = next.expect("non-terminal step has next features");
            action = next_action.expect("non-terminal step has next action");
        }
        if rec.due(t) && !rec.evaluate(t, agent.weights().as_slice(), metric) {
            break;
        }
    }
    Ok(rec.finish())
}
