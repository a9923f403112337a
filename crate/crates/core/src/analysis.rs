//! Closed-form emphasis analysis.
//!
//! For a chain `P` (the target policy's transition matrix), a behavior
//! stationary distribution `d` with `D = diag(d)` and an interest vector
//! `i`:
//!
//! - truncated emphasis `m_n = Σ_{j=0}^{n} γʲ D⁻¹ (Pᵀ)ʲ D i` and its limit
//!   `m = D⁻¹ (I − γPᵀ)⁻¹ D i`, with `f_n = D m_n`, `f = D m`;
//! - expected update `A_n = Xᵀ D_{f_n} (γP − I) X`, `b_n = Xᵀ D_{f_n} r`
//!   and fixed point `w_n = −A_n⁻¹ b_n`;
//! - sufficient truncation lengths for `A_n` to be negative definite and
//!   for `Π_{f_n} T` to be a `√γ`-contraction, plus the log-ratio helpers
//!   behind them.
//!
//! The same formulas serve the state-action setting with `P`, `d`, `i` and
//! `r` indexed by pairs.

use serde::{Deserialize, Serialize};

use crate::features::FeatureMap;
use crate::linalg::{self, Matrix, Vector};
use crate::mdp::{
    state_action_reward_vector, state_action_transition_matrix, state_reward_vector, state_transition_matrix,
    stationary_distribution, InterestFunction, TabularMdp, TabularPolicy,
};
use crate::{Error, Result, Rng};

/// Negative definiteness is declared when the largest eigenvalue of the
/// symmetric part is below `-ND_TOL`.
pub const ND_TOL: f64 = 1e-12;

/// Truncation lengths scanned when no sufficient bound is available.
pub const DEFAULT_SCAN_LIMIT: usize = 10_000;

/// Inputs of the emphasis formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct EmphasisProblem {
    p: Matrix,
    d: Vector,
    interest: Vector,
    reward: Vector,
    gamma: f64,
}

impl EmphasisProblem {
    pub fn new(p: Matrix, d: Vector, interest: Vector, reward: Vector, gamma: f64) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n || d.len() != n || interest.len() != n || reward.len() != n {
            return Err(Error::Shape(format!(
                "chain {}x{}, distribution {}, interest {}, reward {}",
                p.nrows(),
                p.ncols(),
                d.len(),
                interest.len(),
                reward.len()
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!("discount {gamma} not in [0, 1)")));
        }
        if d.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::NonErgodic("distribution has non-positive entries".into()));
        }
        if interest.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidParameter("interest must be positive".into()));
        }
        Ok(Self { p, d, interest, reward, gamma })
    }

    /// State-indexed problem: `P_π`, `d_μ`, `r_π`.
    pub fn prediction(
        mdp: &TabularMdp,
        behavior: &TabularPolicy,
        target: &TabularPolicy,
        interest: &InterestFunction,
    ) -> Result<Self> {
        let d = stationary_distribution(&state_transition_matrix(mdp, behavior)?)?.into_vector();
        Self::new(
            state_transition_matrix(mdp, target)?,
            d,
            interest.to_vector(),
            state_reward_vector(mdp, target)?,
            mdp.discount(),
        )
    }

    /// Pair-indexed problem: `P_π((s,a),(s',a'))`, `d_μ(s,a)`, `r(s,a)`.
    pub fn control(
        mdp: &TabularMdp,
        behavior: &TabularPolicy,
        target: &TabularPolicy,
        interest: &InterestFunction,
    ) -> Result<Self> {
        let d = stationary_distribution(&state_action_transition_matrix(mdp, behavior)?)?.into_vector();
        Self::new(
            state_action_transition_matrix(mdp, target)?,
            d,
            interest.to_vector(),
            state_action_reward_vector(mdp),
            mdp.discount(),
        )
    }

    pub fn transition(&self) -> &Matrix {
        &self.p
    }

    pub fn distribution(&self) -> &Vector {
        &self.d
    }

    pub fn interest(&self) -> &Vector {
        &self.interest
    }

    pub fn reward(&self) -> &Vector {
        &self.reward
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn d_min(&self) -> f64 {
        self.d.min()
    }

    pub fn d_max(&self) -> f64 {
        self.d.max()
    }

    /// `y ↦ γ Pᵀ y`.
    fn step_back(&self, y: &Vector) -> Vector {
        self.p.tr_mul(y) * self.gamma
    }

    /// `m_n`, by iterated matrix-vector products.
    pub fn truncated_emphasis(&self, n: usize) -> Vector {
        let mut term = self.d.component_mul(&self.interest);
        let mut sum = term.clone();
        for _ in 0..n {
            term = self.step_back(&term);
            sum += &term;
        }
        sum.component_div(&self.d)
    }

    /// `m`, by a dense solve.
    pub fn emphasis(&self) -> Result<Vector> {
        let n = self.len();
        let lhs = Matrix::identity(n, n) - self.p.transpose() * self.gamma;
        Ok(linalg::solve(&lhs, &self.d.component_mul(&self.interest))?.component_div(&self.d))
    }

    /// `m − m_n = γⁿ⁺¹ D⁻¹ (Pᵀ)ⁿ⁺¹ D m`, free of the cancellation in the
    /// direct difference.
    pub fn emphasis_tail(&self, n: usize) -> Result<Vector> {
        let mut y = self.d.component_mul(&self.emphasis()?);
        for _ in 0..=n {
            y = self.step_back(&y);
        }
        Ok(y.component_div(&self.d))
    }

    /// `D m` for any emphasis vector.
    pub fn followon(&self, m: &Vector) -> Vector {
        self.d.component_mul(m)
    }

    /// Emphasis weighting `f_n`, or `f` when `n` is `None`.
    pub fn followon_weights(&self, n: Option<usize>) -> Result<Vector> {
        let m = match n {
            Some(n) => self.truncated_emphasis(n),
            None => self.emphasis()?,
        };
        Ok(self.followon(&m))
    }

    /// Right-hand sides `γⁿ⁺¹ (d_max/d_min) ‖m‖₁` and
    /// `γⁿ⁺¹ (d_max²/d_min) ‖m‖₁` bounding `‖m_n − m‖₁` and `‖f_n − f‖∞`.
    pub fn approximation_bounds(&self, n: usize, m_l1: f64) -> (f64, f64) {
        let g = self.gamma.powi(n as i32 + 1);
        let (lo, hi) = (self.d_min(), self.d_max());
        (g * hi / lo * m_l1, g * hi * hi / lo * m_l1)
    }

    /// `(A, b)` for the weighting `f`.
    pub fn expected_update_with(&self, x: &FeatureMap, f: &Vector) -> Result<(Matrix, Vector)> {
        if x.n_rows() != self.len() || f.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} feature rows and {} weights for {} rows",
                x.n_rows(),
                f.len(),
                self.len()
            )));
        }
        let n = self.len();
        let xm = x.matrix();
        let weighted_xt = xm.transpose() * Matrix::from_diagonal(f);
        let a = &weighted_xt * (&self.p * self.gamma - Matrix::identity(n, n)) * xm;
        let b = weighted_xt * &self.reward;
        Ok((a, b))
    }

    /// `(A_n, b_n)`; `None` gives the untruncated pair.
    pub fn expected_update(&self, x: &FeatureMap, n: Option<usize>) -> Result<(Matrix, Vector)> {
        self.expected_update_with(x, &self.followon_weights(n)?)
    }

    /// Smallest eigenvalue of `½(D_f(I − γP) + (I − γPᵀ)D_f)` with `f = D m`.
    pub fn lambda_min(&self) -> Result<f64> {
        let n = self.len();
        let f = self.followon(&self.emphasis()?);
        let m = Matrix::from_diagonal(&f) * (Matrix::identity(n, n) - &self.p * self.gamma);
        Ok(linalg::min_symmetric_eigenvalue(&m))
    }

    /// `λ_min d_min / (d_max² ‖γP − I‖₂ ‖m‖₁)`.
    pub fn negative_definite_rhs(&self) -> Result<(f64, f64)> {
        let n = self.len();
        let lambda = self.lambda_min()?;
        let m_l1 = linalg::l1_norm(&self.emphasis()?);
        let norm = linalg::spectral_norm(&(&self.p * self.gamma - Matrix::identity(n, n)));
        let rhs = lambda * self.d_min() / (self.d_max().powi(2) * norm * m_l1);
        Ok((rhs, lambda))
    }

    /// `κ = min d i / f` and
    /// `κ d_min min(i d) / (d_max² ‖I − γPᵀ‖∞ ‖m‖₁)`.
    pub fn contraction_rhs(&self) -> Result<(f64, f64)> {
        let n = self.len();
        let m = self.emphasis()?;
        let di = self.d.component_mul(&self.interest);
        let f = self.followon(&m);
        let kappa = di.component_div(&f).min();
        let norm = linalg::inf_norm(&(Matrix::identity(n, n) - self.p.transpose() * self.gamma));
        let rhs = kappa * self.d_min() * di.min() / (self.d_max().powi(2) * norm * linalg::l1_norm(&m));
        Ok((rhs, kappa))
    }

    /// Smallest `n` whose `A_n` is negative definite, scanning `0..=limit`.
    pub fn first_negative_definite(&self, x: &FeatureMap, limit: usize) -> Result<Option<usize>> {
        let mut term = self.d.component_mul(&self.interest);
        let mut f = term.clone();
        for n in 0..=limit {
            if n > 0 {
                term = self.step_back(&term);
                f += &term;
            }
            let (a, _) = self.expected_update_with(x, &f)?;
            if is_negative_definite(&a) {
                return Ok(Some(n));
            }
        }
        Ok(None)
    }

    /// Sufficient and empirically minimal truncation lengths for a negative
    /// definite `A_n`.
    pub fn min_n_negative_definite(&self, x: &FeatureMap) -> Result<NegativeDefiniteThreshold> {
        let (rhs, lambda_min) = self.negative_definite_rhs()?;
        let n_bound = threshold_from_rhs(self.gamma, rhs);
        let n_actual = self.first_negative_definite(x, n_bound.unwrap_or(DEFAULT_SCAN_LIMIT))?;
        Ok(NegativeDefiniteThreshold { n_bound, n_actual, lambda_min, rhs })
    }

    /// Sufficient truncation length for the `√γ`-contraction.
    pub fn min_n_contraction(&self) -> Result<ContractionThreshold> {
        let (rhs, kappa) = self.contraction_rhs()?;
        Ok(ContractionThreshold { n_bound: threshold_from_rhs(self.gamma, rhs), kappa, rhs })
    }

    /// `(n₁, n₂)`: the real-valued thresholds `ln(rhs)/ln γ − 1` of the two
    /// conditions.
    pub fn selection_helpers(&self) -> Result<(f64, f64)> {
        let (nd, _) = self.negative_definite_rhs()?;
        let (ct, _) = self.contraction_rhs()?;
        Ok((helper_value(self.gamma, nd), helper_value(self.gamma, ct)))
    }

    /// `T v = r + γ P v`.
    pub fn bellman(&self, v: &Vector) -> Vector {
        &self.reward + &self.p * v * self.gamma
    }

    /// Exact `√γ`-contraction check factor `‖Π_{f_n} γP‖_{f_n}`.
    pub fn contraction_factor(&self, x: &FeatureMap, n: Option<usize>) -> Result<f64> {
        contraction_factor(x, &self.followon_weights(n)?, &self.p, self.gamma)
    }

    /// Every quantity of the analysis at truncation length `n`.
    pub fn report(&self, x: &FeatureMap, n: usize) -> Result<EmphasisReport> {
        let m_n = self.truncated_emphasis(n);
        let m = self.emphasis()?;
        let f_n = self.followon(&m_n);
        let f = self.followon(&m);
        let (bound_l1, bound_inf) = self.approximation_bounds(n, linalg::l1_norm(&m));
        let tail = self.emphasis_tail(n)?;
        let (a_n, b_n) = self.expected_update_with(x, &f_n)?;
        let nd = self.min_n_negative_definite(x)?;
        let contraction = self.min_n_contraction()?;
        let (n1, n2) = self.selection_helpers()?;
        let a_n_negative_definite = is_negative_definite(&a_n);
        let w_star_n = fixed_point(&a_n, &b_n).ok().map(|w| w.iter().copied().collect());
        Ok(EmphasisReport {
            n,
            m_n: to_vec(&m_n),
            m: to_vec(&m),
            f_n: to_vec(&f_n),
            f: to_vec(&f),
            tail_l1: linalg::l1_norm(&tail),
            tail_f_inf: linalg::max_abs(&self.followon(&tail)),
            bound_l1,
            bound_inf,
            lambda_min: nd.lambda_min,
            kappa: contraction.kappa,
            a_n: a_n.row_iter().map(|r| r.iter().copied().collect()).collect(),
            b_n: to_vec(&b_n),
            a_n_negative_definite,
            w_star_n,
            contraction_factor: contraction_factor(x, &f_n, &self.p, self.gamma)?,
            min_n_nd: nd.n_bound,
            min_n_nd_actual: nd.n_actual,
            min_n_contract: contraction.n_bound,
            n1: finite(n1),
            n2: finite(n2),
        })
    }
}

fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeDefiniteThreshold {
    /// Smallest `n` satisfying the sufficient condition; `None` when the
    /// right-hand side is not positive.
    pub n_bound: Option<usize>,
    /// Smallest `n` (up to the bound) whose `A_n` is negative definite.
    pub n_actual: Option<usize>,
    pub lambda_min: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionThreshold {
    pub n_bound: Option<usize>,
    pub kappa: f64,
    pub rhs: f64,
}

/// Serializable summary of [`EmphasisProblem::report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmphasisReport {
    pub n: usize,
    pub m_n: Vec<f64>,
    pub m: Vec<f64>,
    pub f_n: Vec<f64>,
    pub f: Vec<f64>,
    /// `‖m − m_n‖₁`.
    pub tail_l1: f64,
    /// `‖f − f_n‖∞`.
    pub tail_f_inf: f64,
    pub bound_l1: f64,
    pub bound_inf: f64,
    pub lambda_min: f64,
    pub kappa: f64,
    pub a_n: Vec<Vec<f64>>,
    pub b_n: Vec<f64>,
    pub a_n_negative_definite: bool,
    pub w_star_n: Option<Vec<f64>>,
    /// `‖Π_{f_n} γP‖_{f_n}`.
    pub contraction_factor: f64,
    pub min_n_nd: Option<usize>,
    pub min_n_nd_actual: Option<usize>,
    pub min_n_contract: Option<usize>,
    pub n1: Option<f64>,
    pub n2: Option<f64>,
}

/// `ln(rhs)/ln γ − 1`, the real threshold that `n` must exceed for
/// `γⁿ⁺¹ < rhs`. Infinite when `rhs ≤ 0`.
pub fn helper_value(gamma: f64, rhs: f64) -> f64 {
    if !(rhs > 0.0) {
        return f64::INFINITY;
    }
    if gamma == 0.0 {
        return -1.0;
    }
    rhs.ln() / gamma.ln() - 1.0
}

/// Smallest integer `n ≥ 0` with `γⁿ⁺¹ < rhs`.
pub fn threshold_from_rhs(gamma: f64, rhs: f64) -> Option<usize> {
    if !(rhs > 0.0) {
        return None;
    }
    let holds = |n: usize| gamma.powf(n as f64 + 1.0) < rhs;
    let n1 = helper_value(gamma, rhs);
    let mut n = if n1 < 0.0 { 0 } else { n1.floor() as usize + 1 };
    // Guard against rounding in the logarithms.
    while n > 0 && holds(n - 1) {
        n -= 1;
    }
    while !holds(n) {
        n += 1;
    }
    Some(n)
}

/// Solves `A w = −b`.
pub fn fixed_point(a: &Matrix, b: &Vector) -> Result<Vector> {
    linalg::solve(a, &(-b)).map_err(|e| {
        Error::Singular(format!("A_n is singular ({e}); it is not negative definite at this n"))
    })
}

/// Whether the symmetric part of `m` has all eigenvalues below `-ND_TOL`.
pub fn is_negative_definite(m: &Matrix) -> bool {
    m.nrows() == m.ncols() && m.nrows() > 0 && linalg::max_symmetric_eigenvalue(m) < -ND_TOL
}

/// `Π = X (Xᵀ D X)⁻¹ Xᵀ D` with `D = diag(weights)`.
pub fn projection_matrix(x: &FeatureMap, weights: &Vector) -> Result<Matrix> {
    if weights.len() != x.n_rows() {
        return Err(Error::Shape(format!("{} weights for {} rows", weights.len(), x.n_rows())));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidParameter("projection weights must be positive".into()));
    }
    let xm = x.matrix();
    let xtd = xm.transpose() * Matrix::from_diagonal(weights);
    let gram = &xtd * xm;
    Ok(xm * linalg::solve_matrix(&gram, &xtd)?)
}

/// `‖v‖_w = √(Σ w v²)`.
pub fn weighted_norm(v: &Vector, weights: &Vector) -> f64 {
    v.iter().zip(weights.iter()).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}

/// `‖Π γP‖` in the `weights`-norm, i.e. `‖D^{½} Π γP D^{-½}‖₂`.
pub fn contraction_factor(x: &FeatureMap, weights: &Vector, p: &Matrix, gamma: f64) -> Result<f64> {
    let pi = projection_matrix(x, weights)?;
    let sqrt_w = weights.map(f64::sqrt);
    let op = Matrix::from_diagonal(&sqrt_w) * pi * p * gamma * Matrix::from_diagonal(&sqrt_w.map(|s| 1.0 / s));
    Ok(linalg::spectral_norm(&op))
}

/// Largest observed `‖Π T v₁ − Π T v₂‖ / ‖v₁ − v₂‖` in the `weights`-norm
/// over `pairs` random pairs with standard normal-ish entries.
pub fn sampled_contraction_factor(
    problem: &EmphasisProblem,
    x: &FeatureMap,
    weights: &Vector,
    pairs: usize,
    rng: &mut Rng,
) -> Result<f64> {
    use rand::Rng as _;
    let pi = projection_matrix(x, weights)?;
    let n = problem.len();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let v1 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let v2 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let diff = &pi * (problem.bellman(&v1) - problem.bellman(&v2));
        let denom = weighted_norm(&(v1 - v2), weights);
        if denom > 0.0 {
            worst = worst.max(weighted_norm(&diff, weights) / denom);
        }
    }
    Ok(worst)
}

/// `m_n` for the state-indexed problem.
pub fn truncated_emphasis(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    target: &TabularPolicy,
    interest: &InterestFunction,
    n: usize,
) -> Result<Vector> {
    Ok(EmphasisProblem::prediction(mdp, behavior, target, interest)?.truncated_emphasis(n))
}

/// `m` for the state-indexed problem.
pub fn emphasis_limit(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    target: &TabularPolicy,
    interest: &InterestFunction,
) -> Result<Vector> {
    EmphasisProblem::prediction(mdp, behavior, target, interest)?.emphasis()
}

/// `(A_n, b_n)` for the state-indexed problem; `None` for the untruncated
/// pair.
pub fn expected_update(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    target: &TabularPolicy,
    interest: &InterestFunction,
    features: &FeatureMap,
    n: Option<usize>,
) -> Result<(Matrix, Vector)> {
    EmphasisProblem::prediction(mdp, behavior, target, interest)?.expected_update(features, n)
}

pub fn min_n_negative_definite(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    target: &TabularPolicy,
    interest: &InterestFunction,
    features: &FeatureMap,
) -> Result<NegativeDefiniteThreshold> {
    EmphasisProblem::prediction(mdp, behavior, target, interest)?.min_n_negative_definite(features)
}

pub fn min_n_contraction(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    target: &TabularPolicy,
    interest: &InterestFunction,
) -> Result<ContractionThreshold> {
    EmphasisProblem::prediction(mdp, behavior, target, interest)?.min_n_contraction()
}

pub fn selection_helpers_n1_n2(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    target: &TabularPolicy,
    interest: &InterestFunction,
) -> Result<(f64, f64)> {
    EmphasisProblem::prediction(mdp, behavior, target, interest)?.selection_helpers()
}

/// Largest `max(n₁, n₂)` over a finite set of `(μ, π)` pairs, a lower
/// estimate of the supremum over policy sets.
pub fn max_selection_helper(problems: &[EmphasisProblem]) -> Result<f64> {
    problems.iter().try_fold(f64::NEG_INFINITY, |acc, p| {
        let (n1, n2) = p.selection_helpers()?;
        Ok(acc.max(n1).max(n2))
    })
}
