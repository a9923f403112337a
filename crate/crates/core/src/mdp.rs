//! Finite MDPs, tabular policies and the Markov chains they induce.
//!
//! State-action pairs are flattened as `s * n_actions + a` everywhere in the
//! crate.

use std::collections::VecDeque;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, Matrix, Vector};
use crate::{Error, Result, Rng};

const ROW_SUM_TOL: f64 = 1e-12;

/// Power-iteration tolerance on `‖dᵀP − dᵀ‖∞`.
pub const STATIONARY_TOL: f64 = 1e-12;
/// Iteration cap before falling back to the direct solve.
pub const STATIONARY_MAX_ITERS: usize = 1_000_000;
/// Entries of a stationary vector at or below this are treated as zero.
pub const STATIONARY_ZERO: f64 = 1e-14;

fn check_distribution(what: &str, row: &[f64], tol: f64) -> Result<()> {
    if let Some(bad) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::NotStochastic(format!("{what} has entry {bad}")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::NotStochastic(format!("{what} sums to {sum}")));
    }
    Ok(())
}

/// A finite discounted MDP with deterministic rewards `r(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `p(s'|s,a)` stored at `(s * n_actions + a) * n_states + s'`.
    transition: Vec<f64>,
    /// `r(s,a)` stored at `s * n_actions + a`.
    reward: Vec<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
}

/// JSON layout of an MDP: nested arrays `transition[s][a][s']` and
/// `reward[s][a]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub discount: f64,
    pub initial_dist: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Shape("MDP needs at least one state and one action".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::Shape(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::Shape(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if initial_dist.len() != n_states {
            return Err(Error::Shape(format!(
                "initial distribution has {} entries, expected {n_states}",
                initial_dist.len()
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidParameter(format!("discount {discount} not in [0, 1)")));
        }
        if let Some(r) = reward.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidParameter(format!("reward {r} is not finite")));
        }
        for (sa, row) in transition.chunks(n_states).enumerate() {
            let (s, a) = (sa / n_actions, sa % n_actions);
            check_distribution(&format!("p(.|{s},{a})"), row, ROW_SUM_TOL)?;
        }
        check_distribution("initial distribution", &initial_dist, ROW_SUM_TOL)?;
        Ok(Self { n_states, n_actions, transition, reward, discount, initial_dist })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// Distribution `p(·|s,a)` over next states.
    pub fn next_state_dist(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.next_state_dist(s, a)[next]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// Copy of this MDP with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.reward.clone(),
            discount,
            self.initial_dist.clone(),
        )
    }

    pub fn to_document(&self) -> MdpDocument {
        let transition = (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|a| self.next_state_dist(s, a).to_vec()).collect())
            .collect();
        let reward = self.reward.chunks(self.n_actions).map(<[f64]>::to_vec).collect();
        MdpDocument {
            n_states: self.n_states,
            n_actions: self.n_actions,
            transition,
            reward,
            discount: self.discount,
            initial_dist: self.initial_dist.clone(),
        }
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(json)?;
        Self::try_from(doc)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let (ns, na) = (doc.n_states, doc.n_actions);
        if doc.transition.len() != ns || doc.transition.iter().any(|r| r.len() != na) {
            return Err(Error::Shape(format!("transition must be {ns}x{na}x{ns}")));
        }
        if doc.reward.len() != ns || doc.reward.iter().any(|r| r.len() != na) {
            return Err(Error::Shape(format!("reward must be {ns}x{na}")));
        }
        let mut transition = Vec::with_capacity(ns * na * ns);
        for row in doc.transition.iter().flatten() {
            if row.len() != ns {
                return Err(Error::Shape(format!("transition must be {ns}x{na}x{ns}")));
            }
            transition.extend_from_slice(row);
        }
        let reward = doc.reward.into_iter().flatten().collect();
        TabularMdp::new(ns, na, transition, reward, doc.discount, doc.initial_dist)
    }
}

/// A stationary stochastic policy `π(a|s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || probs.len() != n_states * n_actions {
            return Err(Error::Shape(format!(
                "policy needs {n_states}x{n_actions} entries, got {}",
                probs.len()
            )));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            check_distribution(&format!("policy row {s}"), row, ROW_SUM_TOL)?;
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::Shape("policy rows have different lengths".into()));
        }
        Self::new(n_states, n_actions, rows.into_iter().flatten().collect())
    }

    /// The same action distribution in every state.
    pub fn state_independent(n_states: usize, action_probs: &[f64]) -> Result<Self> {
        Self::new(n_states, action_probs.len(), action_probs.repeat(n_states))
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self { n_states, n_actions, probs: vec![p; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    /// Whether every action has positive probability in every state.
    pub fn covers_all_actions(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub(crate) fn check_matches(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(Error::Shape(format!(
                "policy is {}x{}, MDP has {} states and {} actions",
                self.n_states, self.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<f64>>> for TabularPolicy {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<TabularPolicy> for Vec<Vec<f64>> {
    fn from(p: TabularPolicy) -> Self {
        p.probs.chunks(p.n_actions).map(<[f64]>::to_vec).collect()
    }
}

/// Strictly positive interest over states or state-action pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct InterestFunction(Vec<f64>);

impl InterestFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("interest vector is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParameter(format!("interest {v} must be positive")));
        }
        Ok(Self(values))
    }

    pub fn constant(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn ones(len: usize) -> Self {
        Self(vec![1.0; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.0[idx]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_column_slice(&self.0)
    }
}

impl TryFrom<Vec<f64>> for InterestFunction {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<InterestFunction> for Vec<f64> {
    fn from(i: InterestFunction) -> Self {
        i.0
    }
}

/// Invariant distribution of an ergodic chain; every entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution(Vector);

impl StationaryDistribution {
    pub fn as_vector(&self) -> &Vector {
        &self.0
    }

    pub fn into_vector(self) -> Vector {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.min()
    }

    pub fn max(&self) -> f64 {
        self.0.max()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `P_π(s, s') = Σ_a π(a|s) p(s'|s,a)`.
pub fn state_transition_matrix(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Matrix> {
    policy.check_matches(mdp)?;
    let n = mdp.n_states;
    let mut p = Matrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for (next, q) in mdp.next_state_dist(s, a).iter().enumerate() {
                p[(s, next)] += pa * q;
            }
        }
    }
    Ok(p)
}

/// `P_π((s,a),(s',a')) = p(s'|s,a) π(a'|s')`.
pub fn state_action_transition_matrix(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Matrix> {
    policy.check_matches(mdp)?;
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut p = Matrix::zeros(ns * na, ns * na);
    for s in 0..ns {
        for a in 0..na {
            for (next, q) in mdp.next_state_dist(s, a).iter().enumerate() {
                if *q == 0.0 {
                    continue;
                }
                for b in 0..na {
                    p[(s * na + a, next * na + b)] = q * policy.prob(next, b);
                }
            }
        }
    }
    Ok(p)
}

/// `r_π(s) = Σ_a π(a|s) r(s,a)`.
pub fn state_reward_vector(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vector> {
    policy.check_matches(mdp)?;
    Ok(Vector::from_fn(mdp.n_states, |s, _| {
        (0..mdp.n_actions).map(|a| policy.prob(s, a) * mdp.reward(s, a)).sum()
    }))
}

/// The reward function as a vector over flattened state-action pairs.
pub fn state_action_reward_vector(mdp: &TabularMdp) -> Vector {
    Vector::from_column_slice(&mdp.reward)
}

/// `v_π = (I − γP_π)⁻¹ r_π`.
pub fn state_values(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vector> {
    let p = state_transition_matrix(mdp, policy)?;
    let r = state_reward_vector(mdp, policy)?;
    let n = mdp.n_states;
    linalg::solve(&(Matrix::identity(n, n) - p * mdp.discount), &r)
}

/// `q_π = (I − γP_π)⁻¹ r` over state-action pairs.
pub fn action_values(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vector> {
    let p = state_action_transition_matrix(mdp, policy)?;
    let n = mdp.n_pairs();
    linalg::solve(&(Matrix::identity(n, n) - p * mdp.discount), &state_action_reward_vector(mdp))
}

fn check_row_stochastic(p: &Matrix) -> Result<()> {
    if p.nrows() != p.ncols() || p.nrows() == 0 {
        return Err(Error::Shape(format!("transition matrix is {}x{}", p.nrows(), p.ncols())));
    }
    for (i, row) in p.row_iter().enumerate() {
        let row: Vec<f64> = row.iter().copied().collect();
        check_distribution(&format!("transition row {i}"), &row, 1e-10)?;
    }
    Ok(())
}

fn reachable(p: &Matrix, start: usize, transpose: bool) -> Vec<bool> {
    let n = p.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            let w = if transpose { p[(v, u)] } else { p[(u, v)] };
            if w > 0.0 && !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of an irreducible chain, from BFS levels on the support of `p`.
fn period(p: &Matrix) -> usize {
    let n = p.nrows();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if p[(u, v)] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0;
    for u in 0..n {
        for v in 0..n {
            if p[(u, v)] > 0.0 {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    g
}

/// Invariant distribution `d` with `dᵀP = dᵀ` of an ergodic chain.
///
/// Irreducibility and aperiodicity are checked on the support of `p` before
/// solving; the solve itself is power iteration with a dense fallback.
pub fn stationary_distribution(p: &Matrix) -> Result<StationaryDistribution> {
    check_row_stochastic(p)?;
    let n = p.nrows();
    if !reachable(p, 0, false).iter().all(|&x| x) || !reachable(p, 0, true).iter().all(|&x| x) {
        return Err(Error::NonErgodic("chain is reducible".into()));
    }
    let k = period(p);
    if k != 1 {
        return Err(Error::NonErgodic(format!("chain is periodic with period {k}")));
    }

    let pt = p.transpose();
    let mut d = Vector::from_element(n, 1.0 / n as f64);
    let mut converged = false;
    for _ in 0..STATIONARY_MAX_ITERS {
        let next = &pt * &d;
        let change = linalg::max_abs(&(&next - &d));
        d = next;
        if change < STATIONARY_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        // (Pᵀ − I)d = 0 with the last equation replaced by Σd = 1.
        let mut a = pt.clone() - Matrix::identity(n, n);
        a.row_mut(n - 1).fill(1.0);
        let mut b = Vector::zeros(n);
        b[n - 1] = 1.0;
        d = linalg::solve(&a, &b)?;
    }
    let total = d.sum();
    d /= total;

    let residual = linalg::max_abs(&(&pt * &d - &d));
    if residual >= 1e-10 {
        return Err(Error::NonErgodic(format!("stationary residual {residual:e}")));
    }
    if d.min() <= STATIONARY_ZERO {
        return Err(Error::NonErgodic(format!("stationary entry {:e} is zero", d.min())));
    }
    Ok(StationaryDistribution(d))
}

/// Draws an index from a discrete distribution.
pub fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

pub fn sample_initial_state(mdp: &TabularMdp, rng: &mut Rng) -> usize {
    sample_categorical(&mdp.initial_dist, rng)
}

/// One interaction: `A ~ π(·|s)`, `R = r(s, A)`, `S' ~ p(·|s, A)`.
pub fn sample_step(mdp: &TabularMdp, policy: &TabularPolicy, state: usize, rng: &mut Rng) -> Result<Step> {
    policy.check_matches(mdp)?;
    if state >= mdp.n_states {
        return Err(Error::Shape(format!("state {state} out of range {}", mdp.n_states)));
    }
    let action = sample_categorical(policy.row(state), rng);
    Ok(transition_from(mdp, state, action, rng))
}

/// Executes a given action in `state`.
pub fn transition_from(mdp: &TabularMdp, state: usize, action: usize, rng: &mut Rng) -> Step {
    let next_state = sample_categorical(mdp.next_state_dist(state, action), rng);
    Step { action, reward: mdp.reward(state, action), next_state }
}

fn random_simplex(n: usize, floor: f64, rng: &mut Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random MDP with dense transitions and rewards in `[-1, 1]`.
///
/// Every transition probability is at least `floor / (n_states (1 + floor))`,
/// so any policy induces an ergodic chain.
pub fn random_mdp(n_states: usize, n_actions: usize, discount: f64, rng: &mut Rng) -> Result<TabularMdp> {
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(random_simplex(n_states, 0.05, rng));
    }
    let reward = (0..n_states * n_actions).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let initial = random_simplex(n_states, 0.1, rng);
    TabularMdp::new(n_states, n_actions, transition, reward, discount, initial)
}

/// Random policy with every probability bounded away from zero.
pub fn random_policy(n_states: usize, n_actions: usize, rng: &mut Rng) -> TabularPolicy {
    let probs = (0..n_states).flat_map(|_| random_simplex(n_actions, 0.2, rng)).collect();
    TabularPolicy::new(n_states, n_actions, probs).expect("random simplex rows are distributions")
}
