//! Response function `J(λ) = E(w_λ)` and three routes to its gradient.
//!
//! * Forward-mode iterative differentiation carries the sensitivity
//!   `S_t = ∂w_t/∂λ` (an `r × p` matrix) alongside the inner gradient descent:
//!
//!   ```text
//!   w_{t+1} = w_t − η ∇_w L_λ(w_t)
//!   S_{t+1} = (I − η ∇²_w L_λ) S_t − η ∂_λ∇_w L_λ(w_t),   S_0 = 0
//!   ```
//!
//!   and returns `S_Tᵀ ∇_w E(w_T)`, the exact gradient of the truncated response
//!   `λ ↦ E(w_T(λ))`.
//! * Implicit differentiation at the exact minimizer `w*`:
//!   `h = −(∂_λ∇_w L)ᵀ (∇²_w L)⁻¹ ∇_w E(w*)`.
//! * Central finite differences of any [`Response`].

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, HpoError, Result};
use crate::inner::{check_divergence, closed_form_solution, solve_raw, InnerConfig};
use crate::linalg::spd_solve;
use crate::problem::{BilevelProblem, HyperparameterDomain, HyperparameterPoint};

/// Anything that evaluates a scalar response at a hyperparameter vector.
pub trait Response {
    fn value(&self, lambda: &[f64]) -> Result<f64>;
}

impl<F> Response for F
where
    F: Fn(&[f64]) -> Result<f64>,
{
    fn value(&self, lambda: &[f64]) -> Result<f64> {
        self(lambda)
    }
}

/// Adapts an infallible closure into a [`Response`].
pub struct Plain<F>(pub F);

impl<F> Response for Plain<F>
where
    F: Fn(&[f64]) -> f64,
{
    fn value(&self, lambda: &[f64]) -> Result<f64> {
        Ok((self.0)(lambda))
    }
}

/// `J(λ)` through `cfg.steps` of inner gradient descent. Points must lie in the problem's box.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryResponse<'a> {
    pub problem: &'a BilevelProblem,
    pub inner: &'a InnerConfig,
}

impl Response for TrajectoryResponse<'_> {
    fn value(&self, lambda: &[f64]) -> Result<f64> {
        let point = self.problem.domain().point(lambda.to_vec())?;
        response_value(self.problem, &point, self.inner)
    }
}

/// `J(λ)` at the exact inner minimizer. Accepts any λ for which the inner Hessian is
/// positive definite, including points outside the problem's box.
#[derive(Debug, Clone, Copy)]
pub struct ClosedFormResponse<'a> {
    pub problem: &'a BilevelProblem,
}

impl Response for ClosedFormResponse<'_> {
    fn value(&self, lambda: &[f64]) -> Result<f64> {
        closed_form_response(self.problem, lambda)
    }
}

pub fn closed_form_response(p: &BilevelProblem, lambda: &[f64]) -> Result<f64> {
    if lambda.len() != p.hyper_dim() {
        return Err(HpoError::DimensionMismatch {
            what: "hyperparameter vector".into(),
            expected: p.hyper_dim(),
            found: lambda.len(),
        });
    }
    ensure_finite(lambda, "hyperparameter")?;
    p.outer_objective(&closed_form_solution(p, lambda)?)
}

/// Outer objective at the final inner iterate.
pub fn response_value(p: &BilevelProblem, lambda: &HyperparameterPoint, cfg: &InnerConfig) -> Result<f64> {
    let traj = solve_raw(p, lambda.values(), cfg)?;
    p.outer_objective(traj.final_iterate())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HypergradMethod {
    #[default]
    ForwardIterative,
    Implicit,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypergradientEstimate {
    pub value: Vec<f64>,
    pub method: HypergradMethod,
    /// Inner steps behind the estimate; 0 for the implicit route.
    pub inner_steps_used: usize,
    /// Inner solves (or linear solves) consumed.
    pub evaluations: usize,
}

impl HypergradientEstimate {
    pub fn norm(&self) -> f64 {
        crate::linalg::norm2(&self.value)
    }
}

/// Forward-mode iterative differentiation through `cfg.steps` inner steps.
pub fn hypergradient_forward(
    p: &BilevelProblem,
    lambda: &HyperparameterPoint,
    cfg: &InnerConfig,
) -> Result<HypergradientEstimate> {
    cfg.validate_for(p)?;
    let lam = lambda.values();
    let eta = cfg.step_size;
    // The inner objective is quadratic in w, so ∂_wΦ = I − η∇²L does not change along the path.
    let hessian = p.inner_hessian(lam);
    let mut w = cfg.init.clone();
    let mut sens = Array2::<f64>::zeros((p.param_dim(), p.hyper_dim()));
    let initial = p.inner_objective_raw(&w, lam)?;
    for t in 1..=cfg.steps {
        let grad = p.inner_gradient(&w, lam);
        let cross = p.inner_cross_derivative(&w);
        sens = &sens - &((hessian.dot(&sens) + cross) * eta);
        w = &w - &(grad * eta);
        check_divergence(p.inner_objective_raw(&w, lam), t, initial)?;
        if sens.iter().any(|v| !v.is_finite()) {
            return Err(HpoError::NonFinite(format!("sensitivity at step {t}")));
        }
    }
    let outer_grad = p.outer_gradient(&w);
    let value = sens.t().dot(&outer_grad).to_vec();
    ensure_finite(&value, "forward hypergradient")?;
    Ok(HypergradientEstimate {
        value,
        method: HypergradMethod::ForwardIterative,
        inner_steps_used: cfg.steps,
        evaluations: 1,
    })
}

/// Implicit-function-theorem hypergradient at the exact inner minimizer.
///
/// For the scalar ridge `∇²L = 2(XᵀX + λI)` and `∂_λ∇L = 2w*`, so the factors of two
/// cancel and the result is `−w*ᵀ (XᵀX + λI)⁻¹ ∇_w E(w*)`.
pub fn hypergradient_implicit(p: &BilevelProblem, lambda: &HyperparameterPoint) -> Result<HypergradientEstimate> {
    let lam = lambda.values();
    let w_star = closed_form_solution(p, lam)?;
    let outer_grad = p.outer_gradient(&w_star);
    let v: Array1<f64> = spd_solve(&p.inner_hessian(lam), &outer_grad)?;
    let cross = p.inner_cross_derivative(&w_star);
    let value = (-cross.t().dot(&v)).to_vec();
    ensure_finite(&value, "implicit hypergradient")?;
    Ok(HypergradientEstimate {
        value,
        method: HypergradMethod::Implicit,
        inner_steps_used: 0,
        evaluations: 1,
    })
}

/// Default finite-difference step per coordinate: `1e−5 · max(1, |λ_i|)`.
pub fn default_fd_steps(lambda: &[f64]) -> Vec<f64> {
    lambda.iter().map(|l| 1e-5 * l.abs().max(1.0)).collect()
}

/// Central differences `(J(λ + h_i e_i) − J(λ − h_i e_i)) / (2 h_i)`; every perturbed
/// point must stay inside `domain`.
pub fn central_difference<R: Response + ?Sized>(
    response: &R,
    lambda: &[f64],
    steps: &[f64],
    domain: &HyperparameterDomain,
) -> Result<Vec<f64>> {
    if steps.len() != lambda.len() {
        return Err(HpoError::DimensionMismatch {
            what: "finite-difference steps".into(),
            expected: lambda.len(),
            found: steps.len(),
        });
    }
    let mut grad = Vec::with_capacity(lambda.len());
    for (i, &h) in steps.iter().enumerate() {
        if !(h > 0.0 && h.is_finite()) {
            return Err(HpoError::InvalidConfig(format!(
                "finite-difference step {h} is not positive"
            )));
        }
        let mut plus = lambda.to_vec();
        let mut minus = lambda.to_vec();
        plus[i] += h;
        minus[i] -= h;
        if !domain.contains(&plus) || !domain.contains(&minus) {
            return Err(HpoError::DomainViolation(format!(
                "λ ± {h:e} e_{i} leaves the box around {lambda:?}"
            )));
        }
        grad.push((response.value(&plus)? - response.value(&minus)?) / (2.0 * h));
    }
    Ok(grad)
}

/// Finite-difference hypergradient of the truncated response with step `h` in every coordinate.
pub fn hypergradient_fd(
    p: &BilevelProblem,
    lambda: &HyperparameterPoint,
    h: f64,
    cfg: &InnerConfig,
) -> Result<HypergradientEstimate> {
    let response = TrajectoryResponse { problem: p, inner: cfg };
    let steps = vec![h; lambda.dim()];
    let value = central_difference(&response, lambda.values(), &steps, p.domain())?;
    Ok(HypergradientEstimate {
        value,
        method: HypergradMethod::FiniteDifference,
        inner_steps_used: cfg.steps,
        evaluations: 2 * lambda.dim(),
    })
}

/// Finite differences that fall back to one-sided quotients within `h` of a bound.
pub(crate) fn bounded_difference<R: Response + ?Sized>(
    response: &R,
    lambda: &[f64],
    steps: &[f64],
    domain: &HyperparameterDomain,
) -> Result<Vec<f64>> {
    let mut grad = Vec::with_capacity(lambda.len());
    for (i, &h) in steps.iter().enumerate() {
        let lo = domain.lower()[i];
        let hi = domain.upper()[i];
        let up = (lambda[i] + h).min(hi);
        let down = (lambda[i] - h).max(lo);
        let mut plus = lambda.to_vec();
        let mut minus = lambda.to_vec();
        plus[i] = up;
        minus[i] = down;
        grad.push((response.value(&plus)? - response.value(&minus)?) / (up - down));
    }
    Ok(grad)
}
