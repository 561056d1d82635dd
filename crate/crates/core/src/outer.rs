//! Projected hypergradient descent on λ with a step-norm stopping rule.

use serde::Serialize;

use crate::ekeland::{
    classify_model_step, ekeland_certificate, estimate_smoothness, find_perturbation_witness, growth_from_smoothness,
    minimize_model, model_function, EkelandCertificate, ModelStep, WitnessReport,
};
use crate::error::{ensure_finite, HpoError, Result};
use crate::hypergrad::{
    bounded_difference, central_difference, default_fd_steps, hypergradient_forward, hypergradient_implicit,
    ClosedFormResponse, HypergradMethod, HypergradientEstimate, Response, TrajectoryResponse,
};
use crate::inner::InnerConfig;
use crate::linalg::distance;
use crate::problem::{project_hyperparameter, BilevelProblem, HyperparameterDomain, HyperparameterPoint};

/// Samples per coordinate when the smoothness constant has to be estimated.
const SMOOTHNESS_SAMPLES: usize = 64;
const MAX_BACKTRACKS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct OuterConfig {
    /// Constant step size; `None` selects `0.05 · min width / (1 + ‖h_0‖)`.
    pub alpha: Option<f64>,
    pub epsilon: f64,
    pub max_iters: usize,
    pub method: HypergradMethod,
    pub inner: InnerConfig,
    pub sufficient_decrease_c: f64,
    /// Halve α within an iteration until sufficient decrease holds.
    pub backtrack: bool,
    /// `λ_0`; defaults to the box midpoint.
    pub start: Option<Vec<f64>>,
    /// Finite-difference step for the finite-difference method.
    pub fd_step: Option<f64>,
    /// Smoothness constant for the growth function; estimated when absent.
    pub smoothness: Option<f64>,
    /// Tolerance of the attached certificate; defaults to `epsilon`.
    pub certificate_epsilon: Option<f64>,
}

impl OuterConfig {
    pub fn default_for(p: &BilevelProblem) -> Self {
        Self {
            alpha: None,
            epsilon: 1e-4,
            max_iters: 500,
            method: HypergradMethod::ForwardIterative,
            inner: InnerConfig::default_for(p),
            sufficient_decrease_c: 0.1,
            backtrack: false,
            start: None,
            fd_step: None,
            smoothness: None,
            certificate_epsilon: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(HpoError::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        if let Some(a) = self.alpha {
            positive("alpha", a)?;
        }
        positive("epsilon", self.epsilon)?;
        if let Some(e) = self.certificate_epsilon {
            positive("certificate epsilon", e)?;
        }
        if let Some(h) = self.fd_step {
            positive("finite-difference step", h)?;
        }
        if let Some(l) = self.smoothness {
            positive("smoothness", l)?;
        }
        if self.max_iters == 0 {
            return Err(HpoError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.sufficient_decrease_c >= 0.0 && self.sufficient_decrease_c.is_finite()) {
            return Err(HpoError::InvalidConfig(format!(
                "sufficient decrease constant must be nonnegative, got {}",
                self.sufficient_decrease_c
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    StepNorm,
    MaxIters,
    Divergence,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::StepNorm => "step-norm",
            StopReason::MaxIters => "max-iters",
            StopReason::Divergence => "divergence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterTrace {
    pub iterates: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// One estimate per iterate. On divergence the last iterate may lack one.
    pub hypergrads: Vec<HypergradientEstimate>,
    /// `‖λ_{t+1} − λ_t‖`, one per step.
    pub step_norms: Vec<f64>,
    /// Step size actually used per step; differs from `alpha` only under backtracking.
    pub step_sizes: Vec<f64>,
    pub alpha: f64,
    pub epsilon: f64,
    pub stop_reason: StopReason,
    pub divergence: Option<String>,
    pub sufficient_decrease: Vec<bool>,
    pub certificate: Option<EkelandCertificate>,
    pub witness: Option<WitnessReport>,
    pub model_step: Option<ModelStep>,
    pub smoothness: Option<f64>,
}

impl OuterTrace {
    pub fn final_lambda(&self) -> &[f64] {
        self.iterates.last().expect("a trace holds at least λ_0")
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("a trace holds at least J(λ_0)")
    }
}

/// Externally supplied infimum estimate and candidate set for the final certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateInputs {
    pub inf_estimate: f64,
    pub candidates: Vec<HyperparameterPoint>,
}

/// `λ_{t+1} = Π_Λ(λ_t − α h_t)`.
pub fn outer_step(
    lambda: &HyperparameterPoint,
    h: &HypergradientEstimate,
    alpha: f64,
    domain: &HyperparameterDomain,
) -> Result<HyperparameterPoint> {
    ensure_finite(&h.value, "hypergradient")?;
    if h.value.len() != lambda.dim() {
        return Err(HpoError::DimensionMismatch {
            what: "hypergradient".into(),
            expected: lambda.dim(),
            found: h.value.len(),
        });
    }
    let raw: Vec<f64> = lambda
        .values()
        .iter()
        .zip(&h.value)
        .map(|(l, g)| l - alpha * g)
        .collect();
    project_hyperparameter(&raw, domain)
}

/// Boundary included: a step of exactly `epsilon` stops the loop.
pub fn stopping(current: &HyperparameterPoint, previous: &HyperparameterPoint, epsilon: f64) -> bool {
    distance(current.values(), previous.values()) <= epsilon
}

/// Per step, whether `J(λ_t) − J(λ_{t+1}) ≥ c ‖λ_{t+1} − λ_t‖²`.
pub fn sufficient_decrease_check(trace: &OuterTrace, c: f64) -> Vec<bool> {
    decrease_flags(&trace.iterates, &trace.values, c)
}

fn decrease_flags(iterates: &[Vec<f64>], values: &[f64], c: f64) -> Vec<bool> {
    iterates
        .windows(2)
        .zip(values.windows(2))
        .map(|(l, j)| j[0] - j[1] >= c * distance(&l[1], &l[0]).powi(2))
        .collect()
}

/// The response a run evaluates: truncated dynamics, or the exact minimizer for the
/// implicit method.
#[derive(Clone, Copy)]
pub enum RunResponse<'a> {
    Trajectory(TrajectoryResponse<'a>),
    ClosedForm(ClosedFormResponse<'a>),
}

impl<'a> RunResponse<'a> {
    pub fn for_config(p: &'a BilevelProblem, cfg: &'a OuterConfig) -> Self {
        match cfg.method {
            HypergradMethod::Implicit => RunResponse::ClosedForm(ClosedFormResponse { problem: p }),
            _ => RunResponse::Trajectory(TrajectoryResponse {
                problem: p,
                inner: &cfg.inner,
            }),
        }
    }
}

impl Response for RunResponse<'_> {
    fn value(&self, lambda: &[f64]) -> Result<f64> {
        match self {
            RunResponse::Trajectory(r) => r.value(lambda),
            RunResponse::ClosedForm(r) => r.value(lambda),
        }
    }
}

/// Hypergradient at `λ` by the configured method. Finite differences turn one-sided
/// near a bound.
pub fn estimate_hypergradient(
    p: &BilevelProblem,
    lambda: &HyperparameterPoint,
    cfg: &OuterConfig,
) -> Result<HypergradientEstimate> {
    match cfg.method {
        HypergradMethod::ForwardIterative => hypergradient_forward(p, lambda, &cfg.inner),
        HypergradMethod::Implicit => hypergradient_implicit(p, lambda),
        HypergradMethod::FiniteDifference => {
            let response = TrajectoryResponse {
                problem: p,
                inner: &cfg.inner,
            };
            let steps = match cfg.fd_step {
                Some(h) => vec![h; lambda.dim()],
                None => default_fd_steps(lambda.values()),
            };
            let value = match central_difference(&response, lambda.values(), &steps, p.domain()) {
                Err(HpoError::DomainViolation(_)) => {
                    bounded_difference(&response, lambda.values(), &steps, p.domain())?
                }
                other => other?,
            };
            Ok(HypergradientEstimate {
                value,
                method: HypergradMethod::FiniteDifference,
                inner_steps_used: cfg.inner.steps,
                evaluations: 2 * lambda.dim(),
            })
        }
    }
}

pub fn run_hpo(p: &BilevelProblem, cfg: &OuterConfig) -> Result<OuterTrace> {
    run_hpo_with(p, cfg, None)
}

/// Runs the outer loop. With `inputs` the final certificate is taken relative to the
/// supplied infimum and candidates instead of the trace itself.
pub fn run_hpo_with(p: &BilevelProblem, cfg: &OuterConfig, inputs: Option<&CertificateInputs>) -> Result<OuterTrace> {
    cfg.validate()?;
    let domain = p.domain();
    let response = RunResponse::for_config(p, cfg);
    let start = match &cfg.start {
        Some(s) => domain.point(s.clone())?,
        None => domain.midpoint(),
    };

    let j0 = response.value(start.values())?;
    let h0 = estimate_hypergradient(p, &start, cfg)?;
    let alpha = cfg.alpha.unwrap_or(0.05 * domain.min_width() / (1.0 + h0.norm()));

    let mut iterates = vec![start.values().to_vec()];
    let mut values = vec![j0];
    let mut hypergrads = vec![h0];
    let mut step_norms = Vec::new();
    let mut step_sizes = Vec::new();
    let mut divergence = None;
    let mut stop_reason = StopReason::MaxIters;
    let mut current = start;

    for _ in 0..cfg.max_iters {
        let h = hypergrads.last().expect("estimate recorded for the current iterate");
        let j_current = *values.last().expect("value recorded for the current iterate");
        let mut step = alpha;
        let mut next = outer_step(&current, h, step, domain)?;
        let mut j_next = evaluate(&response, &next);
        if cfg.backtrack {
            for _ in 0..MAX_BACKTRACKS {
                let moved = distance(next.values(), current.values());
                match &j_next {
                    Ok(j) if j_current - j >= cfg.sufficient_decrease_c * moved * moved => break,
                    Err(e) if !matches!(e, HpoError::Divergence { .. }) => break,
                    _ => {}
                }
                step *= 0.5;
                next = outer_step(&current, h, step, domain)?;
                j_next = evaluate(&response, &next);
            }
        }
        let j_next = match j_next {
            Ok(j) => j,
            Err(e @ HpoError::Divergence { .. }) => {
                divergence = Some(e.to_string());
                stop_reason = StopReason::Divergence;
                break;
            }
            Err(e) => return Err(e),
        };
        let moved = distance(next.values(), current.values());
        iterates.push(next.values().to_vec());
        values.push(j_next);
        step_norms.push(moved);
        step_sizes.push(step);

        if j_next > 10.0 * j0.abs() && j_next > j0 {
            divergence = Some(format!("J = {j_next:e} exceeds 10x the initial {j0:e}"));
            stop_reason = StopReason::Divergence;
            break;
        }
        match estimate_hypergradient(p, &next, cfg) {
            Ok(h_next) => hypergrads.push(h_next),
            Err(e @ HpoError::Divergence { .. }) => {
                divergence = Some(e.to_string());
                stop_reason = StopReason::Divergence;
                break;
            }
            Err(e) => return Err(e),
        }
        let done = stopping(&next, &current, cfg.epsilon);
        current = next;
        if done {
            stop_reason = StopReason::StepNorm;
            break;
        }
    }

    let sufficient_decrease = decrease_flags(&iterates, &values, cfg.sufficient_decrease_c);
    let mut trace = OuterTrace {
        iterates,
        values,
        hypergrads,
        step_norms,
        step_sizes,
        alpha,
        epsilon: cfg.epsilon,
        stop_reason,
        divergence,
        sufficient_decrease,
        certificate: None,
        witness: None,
        model_step: None,
        smoothness: None,
    };
    if stop_reason == StopReason::StepNorm {
        attach_certificates(p, cfg, &response, &mut trace, inputs)?;
    }
    Ok(trace)
}

fn evaluate(response: &RunResponse<'_>, lambda: &HyperparameterPoint) -> Result<f64> {
    let j = response.value(lambda.values())?;
    if j.is_finite() {
        Ok(j)
    } else {
        Err(HpoError::NonFinite(format!("response at {:?}", lambda.values())))
    }
}

fn attach_certificates(
    p: &BilevelProblem,
    cfg: &OuterConfig,
    response: &RunResponse<'_>,
    trace: &mut OuterTrace,
    inputs: Option<&CertificateInputs>,
) -> Result<()> {
    let domain = p.domain();
    let to_point = |v: &Vec<f64>| domain.point(v.clone());
    let base = to_point(trace.iterates.last().expect("nonempty"))?;
    let eps = cfg.certificate_epsilon.unwrap_or(cfg.epsilon);
    let certificate = match inputs {
        Some(i) => ekeland_certificate(response, &base, eps, i.inf_estimate, &i.candidates)?,
        None => {
            let candidates = trace.iterates.iter().map(to_point).collect::<Result<Vec<_>>>()?;
            let inf = trace.values.iter().copied().fold(f64::INFINITY, f64::min);
            ekeland_certificate(response, &base, eps, inf, &candidates)?
        }
    };

    let k = trace.iterates.len();
    let previous = to_point(&trace.iterates[k - 2])?;
    let smoothness = match cfg.smoothness {
        Some(l) => l,
        None => estimate_smoothness(response, domain, SMOOTHNESS_SAMPLES)?,
    };
    let growth = growth_from_smoothness(smoothness)?;
    let model = model_function(response, &previous, &trace.hypergrads[k - 2])?;
    let plus = minimize_model(&model, domain);
    let witness = find_perturbation_witness(response, &previous, &plus, &growth, domain)?;

    trace.model_step = Some(classify_model_step(&model, &plus));
    trace.smoothness = Some(smoothness);
    trace.certificate = Some(certificate);
    trace.witness = Some(witness);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::desk::{make_desk_mean, make_desk_ridge};
    use crate::hypergrad::closed_form_response;

    fn estimate(value: Vec<f64>) -> HypergradientEstimate {
        HypergradientEstimate {
            value,
            method: HypergradMethod::Implicit,
            inner_steps_used: 0,
            evaluations: 1,
        }
    }

    #[test]
    fn step_arithmetic_and_projection() {
        let d = HyperparameterDomain::uniform(1, 0.001, 10.0).unwrap();
        let pt = |v: f64| d.point(vec![v]).unwrap();
        assert_eq!(
            outer_step(&pt(5.0), &estimate(vec![2.0]), 0.5, &d).unwrap().values(),
            &[4.0]
        );
        assert_eq!(
            outer_step(&pt(0.01), &estimate(vec![100.0]), 1.0, &d).unwrap().values(),
            &[0.001]
        );
        assert_eq!(
            outer_step(&pt(3.3), &estimate(vec![0.0]), 7.0, &d).unwrap().values(),
            &[3.3]
        );
        assert!(outer_step(&pt(3.3), &estimate(vec![f64::NAN]), 1.0, &d).is_err());
    }

    #[test]
    fn stopping_boundary() {
        let d = HyperparameterDomain::uniform(1, 0.0, 10.0).unwrap();
        let pt = |v: f64| d.point(vec![v]).unwrap();
        assert!(stopping(&pt(1.0), &pt(1.0), 1e-9));
        assert!(stopping(&pt(1.5), &pt(1.0), 0.5));
        assert!(!stopping(&pt(2.0), &pt(1.0), 0.5));
    }

    #[test]
    fn decrease_flags_by_sign() {
        let its = vec![vec![1.0], vec![2.0], vec![3.0]];
        assert_eq!(decrease_flags(&its, &[1.0, 1.0, 1.0], 0.0), vec![true, true]);
        assert_eq!(decrease_flags(&its, &[1.0, 2.0, 3.0], 0.1), vec![false, false]);
    }

    #[test]
    fn single_iteration_budget() {
        let p = make_desk_ridge();
        let mut cfg = OuterConfig::default_for(&p);
        cfg.max_iters = 1;
        let trace = run_hpo(&p, &cfg).unwrap();
        assert_eq!(trace.iterates.len(), 2);
        assert!(trace.step_norms[0] > cfg.epsilon);
        assert_eq!(trace.stop_reason, StopReason::MaxIters);
        assert!(trace.certificate.is_none());
    }

    #[test]
    fn nearly_flat_start_stops_immediately() {
        // J′ vanishes linearly at λ = 0, so a small step from the lower bound barely moves
        let p = make_desk_mean();
        let mut cfg = OuterConfig::default_for(&p);
        cfg.method = HypergradMethod::Implicit;
        cfg.start = Some(vec![p.domain().lower()[0]]);
        cfg.alpha = Some(1e-3);
        let trace = run_hpo(&p, &cfg).unwrap();
        assert_eq!(trace.stop_reason, StopReason::StepNorm);
        assert!(trace.iterates.len() <= 3);
        assert!(trace.certificate.as_ref().unwrap().valid);
    }

    #[test]
    fn mean_problem_descends_to_lower_bound() {
        let p = make_desk_mean();
        let cfg = OuterConfig::default_for(&p);
        let trace = run_hpo(&p, &cfg).unwrap();
        assert_eq!(trace.stop_reason, StopReason::StepNorm);
        for w in trace.iterates.windows(2) {
            assert!(w[1][0] <= w[0][0]);
        }
        assert!(trace.hypergrads.iter().all(|h| h.value[0] > 0.0));
        assert!(trace.final_lambda()[0] < 1e-2);
    }

    #[test]
    fn iterates_stay_in_box_and_runs_repeat() {
        let p = make_desk_ridge();
        let mut cfg = OuterConfig::default_for(&p);
        cfg.method = HypergradMethod::Implicit;
        cfg.max_iters = 40;
        let a = run_hpo(&p, &cfg).unwrap();
        let b = run_hpo(&p, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.iterates.iter().all(|l| p.domain().contains(l)));
        for (l, j) in a.iterates.iter().zip(&a.values) {
            assert_eq!(*j, closed_form_response(&p, l).unwrap());
        }
    }

    #[test]
    fn finite_difference_runs_at_the_bound() {
        let p = make_desk_ridge();
        let mut cfg = OuterConfig::default_for(&p);
        cfg.method = HypergradMethod::FiniteDifference;
        cfg.inner = cfg.inner.with_steps(200);
        cfg.start = Some(vec![p.domain().lower()[0]]);
        cfg.max_iters = 3;
        let trace = run_hpo(&p, &cfg).unwrap();
        assert!(trace.hypergrads[0].value[0].is_finite());
    }

    #[test]
    fn invalid_configs() {
        let p = make_desk_ridge();
        let base = OuterConfig::default_for(&p);
        for cfg in [
            OuterConfig {
                epsilon: 0.0,
                ..base.clone()
            },
            OuterConfig {
                alpha: Some(-1.0),
                ..base.clone()
            },
            OuterConfig {
                max_iters: 0,
                ..base.clone()
            },
            OuterConfig {
                start: Some(vec![20.0]),
                ..base.clone()
            },
        ] {
            assert!(run_hpo(&p, &cfg).is_err());
        }
    }
}
