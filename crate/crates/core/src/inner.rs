//! Inner problem `argmin_w L_λ(w)`: constant-step gradient descent and the
//! closed forms available for the supported quadratic instances.

use crate::error::{HpoError, Result};
use crate::linalg::{power_iteration, spd_solve};
use crate::problem::{BilevelProblem, HyperparameterPoint, ModelKind, PenaltyKind};
use ndarray::{Array1, Array2};

pub const DEFAULT_INNER_STEPS: usize = 2000;
const POWER_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct InnerConfig {
    pub steps: usize,
    pub step_size: f64,
    pub init: Array1<f64>,
}

impl InnerConfig {
    pub fn new(steps: usize, step_size: f64, init: Array1<f64>) -> Result<Self> {
        let cfg = Self { steps, step_size, init };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `T = 2000`, `w_0 = 0` and `η = 1/(2 L_smooth)` at the domain's upper corner.
    pub fn default_for(p: &BilevelProblem) -> Self {
        Self {
            steps: DEFAULT_INNER_STEPS,
            step_size: default_step_size(p),
            init: Array1::zeros(p.param_dim()),
        }
    }

    pub fn with_steps(&self, steps: usize) -> Self {
        Self { steps, ..self.clone() }
    }

    pub fn with_init(&self, init: Array1<f64>) -> Self {
        Self { init, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(HpoError::InvalidConfig("inner steps must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(HpoError::InvalidConfig(format!(
                "inner step size must be positive and finite, got {}",
                self.step_size
            )));
        }
        if self.init.iter().any(|v| !v.is_finite()) {
            return Err(HpoError::NonFinite("inner initialization".into()));
        }
        Ok(())
    }

    pub(crate) fn validate_for(&self, p: &BilevelProblem) -> Result<()> {
        self.validate()?;
        if self.init.len() != p.param_dim() {
            return Err(HpoError::DimensionMismatch {
                what: "inner initialization".into(),
                expected: p.param_dim(),
                found: self.init.len(),
            });
        }
        Ok(())
    }
}

/// Largest eigenvalue of the inner Hessian at `lambda` (power iteration, 50 steps).
pub fn smoothness_constant(p: &BilevelProblem, lambda: &[f64]) -> f64 {
    power_iteration(&p.inner_hessian(lambda), POWER_ITERATIONS)
}

/// `1/(2 L_smooth)` with `L_smooth` taken at the upper corner of the box, where it is largest.
pub fn default_step_size(p: &BilevelProblem) -> f64 {
    0.5 / smoothness_constant(p, p.domain().upper())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerTrajectory {
    pub iterates: Vec<Array1<f64>>,
    pub objective_values: Vec<f64>,
}

impl InnerTrajectory {
    pub fn final_iterate(&self) -> &Array1<f64> {
        self.iterates.last().expect("trajectory holds w_0")
    }

    pub fn steps(&self) -> usize {
        self.iterates.len() - 1
    }

    /// Extrapolated distance from the final iterate to the limit of the dynamics.
    ///
    /// Fits a linear rate `ρ` to the step norms over the last `window` steps and sums the
    /// geometric tail `‖w_T − w_{T−1}‖ ρ/(1−ρ)`. Returns `f64::INFINITY` when the step norms
    /// are not contracting.
    pub fn remaining_distance_estimate(&self, window: usize) -> f64 {
        let t = self.steps();
        let step = |k: usize| {
            crate::linalg::distance(
                self.iterates[k].as_slice().expect("contiguous"),
                self.iterates[k - 1].as_slice().expect("contiguous"),
            )
        };
        let last = step(t);
        let scale = 1.0 + crate::linalg::norm2(self.final_iterate().as_slice().expect("contiguous"));
        if last <= 1e-14 * scale {
            return last;
        }
        let window = window.clamp(1, t.saturating_sub(1).max(1));
        if t <= window {
            return f64::INFINITY;
        }
        let earlier = step(t - window);
        if earlier <= last {
            return f64::INFINITY;
        }
        let rho = (last / earlier).powf(1.0 / window as f64);
        last * rho / (1.0 - rho)
    }
}

/// One step of `w ↦ w − η ∇_w L_λ(w)`.
pub fn inner_step(
    p: &BilevelProblem,
    w: &Array1<f64>,
    lambda: &HyperparameterPoint,
    step_size: f64,
) -> Result<Array1<f64>> {
    step_raw(p, w, lambda.values(), step_size)
}

pub(crate) fn step_raw(p: &BilevelProblem, w: &Array1<f64>, lambda: &[f64], step_size: f64) -> Result<Array1<f64>> {
    let g = p.inner_gradient(w, lambda);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(HpoError::NonFinite("inner gradient".into()));
    }
    Ok(w - &(g * step_size))
}

/// Runs `cfg.steps` gradient steps from `cfg.init`, recording `L_λ(w_t)`.
///
/// Fails with [`HpoError::Divergence`] as soon as the objective exceeds ten times its
/// initial value.
pub fn solve_inner(p: &BilevelProblem, lambda: &HyperparameterPoint, cfg: &InnerConfig) -> Result<InnerTrajectory> {
    solve_raw(p, lambda.values(), cfg)
}

pub(crate) fn solve_raw(p: &BilevelProblem, lambda: &[f64], cfg: &InnerConfig) -> Result<InnerTrajectory> {
    cfg.validate_for(p)?;
    let mut w = cfg.init.clone();
    let initial = p.inner_objective_raw(&w, lambda)?;
    let mut iterates = Vec::with_capacity(cfg.steps + 1);
    let mut objective_values = Vec::with_capacity(cfg.steps + 1);
    iterates.push(w.clone());
    objective_values.push(initial);
    for t in 1..=cfg.steps {
        w = step_raw(p, &w, lambda, cfg.step_size)?;
        let value = check_divergence(p.inner_objective_raw(&w, lambda), t, initial)?;
        iterates.push(w.clone());
        objective_values.push(value);
    }
    Ok(InnerTrajectory {
        iterates,
        objective_values,
    })
}

/// Maps overflow to a divergence report and applies the 10x guard.
pub(crate) fn check_divergence(value: Result<f64>, step: usize, initial: f64) -> Result<f64> {
    match value {
        Ok(v) if v > 10.0 * initial => Err(HpoError::Divergence {
            step,
            value: v,
            initial,
        }),
        Ok(v) => Ok(v),
        Err(HpoError::NonFinite(_)) => Err(HpoError::Divergence {
            step,
            value: f64::INFINITY,
            initial,
        }),
        Err(e) => Err(e),
    }
}

/// `(XᵀX + λI)⁻¹ Xᵀy` for linear regression with a scalar ridge penalty.
pub fn ridge_closed_form(p: &BilevelProblem, lambda: &HyperparameterPoint) -> Result<Array1<f64>> {
    if p.model().kind != ModelKind::LinearRegression || p.penalty().kind != PenaltyKind::ScalarRidge {
        return Err(HpoError::InvalidConfig(
            "ridge closed form needs linear regression with a scalar ridge penalty".into(),
        ));
    }
    let x = p.train().features();
    let y = p.train().targets().expect("linear regression carries targets");
    let mut a: Array2<f64> = x.t().dot(x);
    for i in 0..a.nrows() {
        a[[i, i]] += lambda.values()[0];
    }
    spd_solve(&a, &x.t().dot(y))
}

/// `(n/(n+λ)) x̄` for the mean estimator with a scalar ridge penalty.
pub fn mean_closed_form(p: &BilevelProblem, lambda: &HyperparameterPoint) -> Result<Array1<f64>> {
    if p.model().kind != ModelKind::MeanEstimator || p.penalty().kind != PenaltyKind::ScalarRidge {
        return Err(HpoError::InvalidConfig(
            "mean closed form needs the mean estimator with a scalar ridge penalty".into(),
        ));
    }
    let n = p.train().rows() as f64;
    let factor = n / (n + lambda.values()[0]);
    Ok(p.train().mean() * factor)
}

/// Exact inner minimizer for any supported kind: solves `∇²L · w = −∇L(0)`.
pub fn closed_form_solution(p: &BilevelProblem, lambda: &[f64]) -> Result<Array1<f64>> {
    let h = p.inner_hessian(lambda);
    let rhs = -p.inner_gradient(&Array1::zeros(p.param_dim()), lambda);
    spd_solve(&h, &rhs)
}
