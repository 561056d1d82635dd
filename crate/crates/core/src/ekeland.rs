//! Growth functions, first-order model functions, perturbation bounds, and
//! Ekeland certificates with `ρ = √ε`.
//!
//! The metric on the hyperparameter box is Euclidean throughout.

use serde::Serialize;

use crate::error::{HpoError, Result};
use crate::hypergrad::{bounded_difference, HypergradientEstimate, Response};
use crate::linalg::{distance, norm2};
use crate::problem::{project_hyperparameter, HyperparameterDomain, HyperparameterPoint};

/// Slack added to both proximity checks of a witness report.
pub const WITNESS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthKind {
    Quadratic,
}

/// `ζ(t) = c t²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthFunction {
    pub kind: GrowthKind,
    pub coefficient: f64,
}

impl GrowthFunction {
    pub fn quadratic(coefficient: f64) -> Result<Self> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(HpoError::InvalidConfig(format!(
                "growth coefficient must be positive, got {coefficient}"
            )));
        }
        Ok(Self {
            kind: GrowthKind::Quadratic,
            coefficient,
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        self.coefficient * t * t
    }

    pub fn derivative(&self, t: f64) -> f64 {
        2.0 * self.coefficient * t
    }

    /// `ζ(t)/ζ′(t)`, extended by its limit 0 at `t = 0`.
    pub fn value_over_derivative(&self, t: f64) -> f64 {
        if t == 0.0 {
            0.0
        } else {
            self.value(t) / self.derivative(t)
        }
    }
}

/// Quadratic growth `ζ(t) = (L/2) t²`, which bounds the first-order Taylor remainder
/// of an `L`-smooth response.
pub fn growth_from_smoothness(smoothness: f64) -> Result<GrowthFunction> {
    if !(smoothness > 0.0 && smoothness.is_finite()) {
        return Err(HpoError::InvalidConfig(format!(
            "smoothness constant must be positive, got {smoothness}"
        )));
    }
    GrowthFunction::quadratic(0.5 * smoothness)
}

/// Estimates a smoothness constant of `response` over the box from second differences.
///
/// Each coordinate is scanned on `samples` evenly spaced points through the box centre;
/// the largest absolute second difference is doubled.
pub fn estimate_smoothness<R: Response + ?Sized>(
    response: &R,
    domain: &HyperparameterDomain,
    samples: usize,
) -> Result<f64> {
    let samples = samples.max(3);
    let centre = domain.midpoint().into_vec();
    let mut worst: f64 = 0.0;
    for i in 0..domain.dim() {
        let lo = domain.lower()[i];
        let hi = domain.upper()[i];
        let h = (hi - lo) / (samples - 1) as f64;
        let mut values = Vec::with_capacity(samples);
        for k in 0..samples {
            let mut point = centre.clone();
            point[i] = if k + 1 == samples { hi } else { lo + h * k as f64 };
            values.push(response.value(&point)?);
        }
        for w in values.windows(3) {
            worst = worst.max(((w[2] - 2.0 * w[1] + w[0]) / (h * h)).abs());
        }
    }
    Ok((2.0 * worst).max(f64::EPSILON))
}

/// First-order model `J_λ(γ) = J(λ) + gᵀ(γ − λ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelFunction {
    pub base: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl ModelFunction {
    pub fn evaluate(&self, gamma: &[f64]) -> f64 {
        self.value
            + self
                .gradient
                .iter()
                .zip(gamma.iter().zip(&self.base))
                .map(|(g, (x, b))| g * (x - b))
                .sum::<f64>()
    }
}

pub fn model_function<R: Response + ?Sized>(
    response: &R,
    lambda: &HyperparameterPoint,
    gradient: &HypergradientEstimate,
) -> Result<ModelFunction> {
    if gradient.value.len() != lambda.dim() {
        return Err(HpoError::DimensionMismatch {
            what: "model gradient".into(),
            expected: lambda.dim(),
            found: gradient.value.len(),
        });
    }
    Ok(ModelFunction {
        base: lambda.values().to_vec(),
        value: response.value(lambda.values())?,
        gradient: gradient.value.clone(),
    })
}

/// Exact minimizer of the affine model over the box: lower bound where the slope is
/// positive, upper bound where it is negative, base value where it is zero.
pub fn minimize_model(model: &ModelFunction, domain: &HyperparameterDomain) -> HyperparameterPoint {
    let values = model
        .gradient
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            if g > 0.0 {
                domain.lower()[i]
            } else if g < 0.0 {
                domain.upper()[i]
            } else {
                model.base[i]
            }
        })
        .collect::<Vec<_>>();
    project_hyperparameter(&values, domain).expect("bounds and base are finite and of length p")
}

/// How the model minimizer relates to its base point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelStep {
    /// `λ⁺ ≠ λ`; the perturbation bounds apply.
    Distinct,
    /// Zero model gradient, so `λ⁺ = λ`.
    Stationary,
    /// Nonzero gradient, but every descent coordinate already sits on its bound.
    ConstrainedStationary,
}

pub fn classify_model_step(model: &ModelFunction, minimizer: &HyperparameterPoint) -> ModelStep {
    if minimizer.values() != model.base.as_slice() {
        ModelStep::Distinct
    } else if model.gradient.iter().all(|g| *g == 0.0) {
        ModelStep::Stationary
    } else {
        ModelStep::ConstrainedStationary
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundPair {
    /// `d = ‖λ⁺ − λ‖`.
    pub distance: f64,
    /// Point proximity `2 ζ(d)/ζ′(d)`.
    pub point: f64,
    /// Value proximity `ζ(d)`.
    pub value: f64,
}

pub fn perturbation_bounds(
    lambda: &HyperparameterPoint,
    lambda_plus: &HyperparameterPoint,
    growth: &GrowthFunction,
) -> Result<BoundPair> {
    let d = distance(lambda.values(), lambda_plus.values());
    if d == 0.0 {
        return Err(HpoError::CoincidentPoints);
    }
    Ok(BoundPair {
        distance: d,
        point: 2.0 * growth.value_over_derivative(d),
        value: growth.value(d),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessSearchConfig {
    pub max_iters: usize,
    /// Relative finite-difference step for gradients of `J`.
    pub fd_step: f64,
    /// Points scanned by the 1-D fallback.
    pub fallback_points: usize,
}

impl Default for WitnessSearchConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            fd_step: 1e-6,
            fallback_points: 2001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub lambda: Vec<f64>,
    pub lambda_plus: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    /// True when `λ⁺ = λ`, i.e. the stationarity branch; bounds are then zero.
    pub coincident: bool,
    pub bounds: BoundPair,
    pub value_at_plus: f64,
    pub value_at_hat: f64,
    /// `point bound + tol − ‖λ⁺ − λ̂‖`; nonnegative when point proximity holds.
    pub point_residual: f64,
    /// `J(λ⁺) + value bound + tol − J(λ̂)`; nonnegative when value proximity holds.
    pub value_residual: f64,
    pub satisfied: bool,
    pub converged: bool,
    pub iterations: usize,
    pub used_grid_fallback: bool,
}

struct PerturbedObjective<'a, R: ?Sized> {
    response: &'a R,
    centre: &'a [f64],
    growth: GrowthFunction,
}

impl<R: Response + ?Sized> PerturbedObjective<'_, R> {
    /// `G(γ) = J(γ) + ζ(‖γ − λ‖)` together with `J(γ)`.
    fn eval(&self, gamma: &[f64]) -> Result<(f64, f64)> {
        let j = self.response.value(gamma)?;
        Ok((j + self.growth.value(distance(gamma, self.centre)), j))
    }
}

/// Locally minimizes `G(γ) = J(γ) + ζ(‖γ − λ‖)` from `λ⁺` by projected gradient descent
/// with Armijo backtracking, and checks point and value proximity of the result.
///
/// In one dimension an unsatisfied search falls back to a dense scan of `G`.
pub fn find_perturbation_witness<R: Response + ?Sized>(
    response: &R,
    lambda: &HyperparameterPoint,
    lambda_plus: &HyperparameterPoint,
    growth: &GrowthFunction,
    domain: &HyperparameterDomain,
) -> Result<WitnessReport> {
    find_perturbation_witness_with(
        response,
        lambda,
        lambda_plus,
        growth,
        domain,
        &WitnessSearchConfig::default(),
    )
}

pub fn find_perturbation_witness_with<R: Response + ?Sized>(
    response: &R,
    lambda: &HyperparameterPoint,
    lambda_plus: &HyperparameterPoint,
    growth: &GrowthFunction,
    domain: &HyperparameterDomain,
    cfg: &WitnessSearchConfig,
) -> Result<WitnessReport> {
    let value_at_plus = response.value(lambda_plus.values())?;
    let bounds = match perturbation_bounds(lambda, lambda_plus, growth) {
        Ok(b) => b,
        Err(HpoError::CoincidentPoints) => {
            return Ok(finish(
                lambda,
                lambda_plus,
                lambda_plus.values().to_vec(),
                value_at_plus,
                value_at_plus,
                BoundPair {
                    distance: 0.0,
                    point: 0.0,
                    value: 0.0,
                },
                true,
                true,
                0,
                false,
            ));
        }
        Err(e) => return Err(e),
    };

    let objective = PerturbedObjective {
        response,
        centre: lambda.values(),
        growth: *growth,
    };
    let mut gamma = lambda_plus.values().to_vec();
    let (mut g_val, mut j_val) = objective.eval(&gamma)?;
    let mut step = 1.0 / (2.0 * growth.coefficient);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let fd_steps: Vec<f64> = gamma.iter().map(|g| cfg.fd_step * g.abs().max(1.0)).collect();
        let mut grad = bounded_difference(response, &gamma, &fd_steps, domain)?;
        for (gi, (x, c)) in grad.iter_mut().zip(gamma.iter().zip(lambda.values())) {
            *gi += 2.0 * growth.coefficient * (x - c);
        }
        let mut accepted = None;
        while step > 1e-14 {
            let trial: Vec<f64> = gamma.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            let trial = project_hyperparameter(&trial, domain)?.into_vec();
            let moved = distance(&trial, &gamma);
            if moved == 0.0 {
                break;
            }
            let (g_trial, j_trial) = objective.eval(&trial)?;
            if g_trial <= g_val - 1e-4 / step * moved * moved {
                accepted = Some((trial, g_trial, j_trial, moved));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, g_trial, j_trial, moved)) => {
                gamma = trial;
                g_val = g_trial;
                j_val = j_trial;
                step *= 2.0;
                if moved <= 1e-12 * (1.0 + norm2(&gamma)) {
                    converged = true;
                    break;
                }
            }
            None => {
                converged = true;
                break;
            }
        }
    }

    let mut report = finish(
        lambda,
        lambda_plus,
        gamma,
        value_at_plus,
        j_val,
        bounds,
        false,
        converged,
        iterations,
        false,
    );
    if !report.satisfied && domain.dim() == 1 {
        let (lo, hi) = (domain.lower()[0], domain.upper()[0]);
        let n = cfg.fallback_points.max(2);
        let mut best: Option<(f64, f64, f64)> = None;
        for k in 0..n {
            let x = if k + 1 == n {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            };
            let (g, j) = objective.eval(&[x])?;
            if best.is_none_or(|(bg, _, _)| g < bg) {
                best = Some((g, x, j));
            }
        }
        let (g_best, x_best, j_best) = best.expect("at least two points");
        if g_best < g_val {
            report = finish(
                lambda,
                lambda_plus,
                vec![x_best],
                value_at_plus,
                j_best,
                bounds,
                false,
                converged,
                iterations,
                true,
            );
        }
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    lambda: &HyperparameterPoint,
    lambda_plus: &HyperparameterPoint,
    lambda_hat: Vec<f64>,
    value_at_plus: f64,
    value_at_hat: f64,
    bounds: BoundPair,
    coincident: bool,
    converged: bool,
    iterations: usize,
    used_grid_fallback: bool,
) -> WitnessReport {
    let point_residual = bounds.point + WITNESS_TOLERANCE - distance(lambda_plus.values(), &lambda_hat);
    let value_residual = value_at_plus + bounds.value + WITNESS_TOLERANCE - value_at_hat;
    WitnessReport {
        lambda: lambda.values().to_vec(),
        lambda_plus: lambda_plus.values().to_vec(),
        lambda_hat,
        coincident,
        bounds,
        value_at_plus,
        value_at_hat,
        point_residual,
        value_residual,
        satisfied: point_residual >= 0.0 && value_residual >= 0.0,
        converged,
        iterations,
        used_grid_fallback,
    }
}

/// Slack of each conclusion of the certificate; all nonnegative on a valid certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateResiduals {
    /// `ε − (J(λ̃) − inf)`.
    pub premise: f64,
    /// `J(λ̃) − J(z̃)`.
    pub descent: f64,
    /// `√ε − d(z̃, λ̃)`.
    pub proximity: f64,
    /// `min_λ [J(λ) + √ε d(z̃, λ) − J(z̃)]` over candidates `λ ≠ z̃`; must be strictly positive.
    pub strict: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EkelandCertificate {
    pub epsilon: f64,
    pub rho: f64,
    pub base: Vec<f64>,
    pub base_value: f64,
    /// Infimum estimate the certificate is relative to; the true infimum is unknown.
    pub inf_estimate: f64,
    /// Set when a candidate undercut the supplied estimate and replaced it.
    pub inf_estimate_lowered: bool,
    pub base_gap: f64,
    pub witness: Vec<f64>,
    pub witness_value: f64,
    pub distance: f64,
    pub residuals: CertificateResiduals,
    pub candidates_checked: usize,
    pub strict_violations: usize,
    pub strict_inequality_holds: bool,
    pub valid: bool,
}

impl EkelandCertificate {
    /// Amount by which the premise `J(λ̃) ≤ inf + ε` fails, or 0.
    pub fn premise_excess(&self) -> f64 {
        (self.base_gap - self.epsilon).max(0.0)
    }
}

/// Checks the `ρ = √ε` form of Ekeland's principle at `base` against explicit candidates.
///
/// The witness `z̃` is the lowest-valued point among `base` and the candidates that lies
/// within `√ε` of `base` and does not exceed `J(base)`.
pub fn ekeland_certificate<R: Response + ?Sized>(
    response: &R,
    base: &HyperparameterPoint,
    epsilon: f64,
    inf_estimate: f64,
    candidates: &[HyperparameterPoint],
) -> Result<EkelandCertificate> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(HpoError::InvalidConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !inf_estimate.is_finite() {
        return Err(HpoError::NonFinite("infimum estimate".into()));
    }
    let rho = epsilon.sqrt();
    let base_value = response.value(base.values())?;
    let values = candidates
        .iter()
        .map(|c| response.value(c.values()))
        .collect::<Result<Vec<_>>>()?;

    let candidate_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let inf_estimate_lowered = candidate_min < inf_estimate;
    let inf = inf_estimate.min(candidate_min);
    let base_gap = base_value - inf;

    let mut witness: (&[f64], f64, f64) = (base.values(), base_value, 0.0);
    for (c, &v) in candidates.iter().zip(&values) {
        let d = distance(c.values(), base.values());
        if d <= rho && v <= base_value && (v < witness.1 || (v == witness.1 && d < witness.2)) {
            witness = (c.values(), v, d);
        }
    }
    let (z, z_value, z_distance) = witness;

    let mut strict_min: Option<f64> = None;
    let mut strict_violations = 0;
    for (c, &v) in candidates.iter().zip(&values) {
        if c.values() == z {
            continue;
        }
        let slack = v + rho * distance(z, c.values()) - z_value;
        if slack <= 0.0 {
            strict_violations += 1;
        }
        strict_min = Some(strict_min.map_or(slack, |m: f64| m.min(slack)));
    }

    let residuals = CertificateResiduals {
        premise: epsilon - base_gap,
        descent: base_value - z_value,
        proximity: rho - z_distance,
        strict: strict_min,
    };
    let valid = residuals.premise >= 0.0 && residuals.descent >= 0.0 && residuals.proximity >= 0.0;
    Ok(EkelandCertificate {
        epsilon,
        rho,
        base: base.values().to_vec(),
        base_value,
        inf_estimate: inf,
        inf_estimate_lowered,
        base_gap,
        witness: z.to_vec(),
        witness_value: z_value,
        distance: z_distance,
        residuals,
        candidates_checked: candidates.len(),
        strict_violations,
        strict_inequality_holds: strict_violations == 0,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergrad::{HypergradMethod, Plain};
    use proptest::prelude::*;

    fn estimate(value: Vec<f64>) -> HypergradientEstimate {
        HypergradientEstimate {
            value,
            method: HypergradMethod::Implicit,
            inner_steps_used: 0,
            evaluations: 1,
        }
    }

    fn box1() -> HyperparameterDomain {
        HyperparameterDomain::uniform(1, 0.001, 10.0).unwrap()
    }

    #[test]
    fn growth_formula() {
        let z = growth_from_smoothness(2.0).unwrap();
        assert_eq!(z.value(1.0), 1.0);
        assert_eq!(z.derivative(1.0), 2.0);
        for l in [0.1, 1.0, 37.0] {
            let z = growth_from_smoothness(l).unwrap();
            assert_eq!(z.value(0.0), 0.0);
            assert_eq!(z.derivative(0.0), 0.0);
        }
        assert!(growth_from_smoothness(0.0).is_err());
        assert!(growth_from_smoothness(-1.0).is_err());
    }

    #[test]
    fn model_is_anchored_and_flat_without_gradient() {
        let j = Plain(|l: &[f64]| (l[0] - 2.0).powi(2));
        let lam = box1().point(vec![3.0]).unwrap();
        let m = model_function(&j, &lam, &estimate(vec![2.0])).unwrap();
        assert_eq!(m.evaluate(&[3.0]).to_bits(), 1.0f64.to_bits());
        assert_eq!(m.evaluate(&[2.0]), -1.0);
        let gap = (m.evaluate(&[2.0]) - 0.0f64).abs();
        assert!(gap <= growth_from_smoothness(2.0).unwrap().value(1.0));

        let flat = model_function(&j, &lam, &estimate(vec![0.0])).unwrap();
        assert_eq!(flat.evaluate(&[7.5]), flat.value);
    }

    #[test]
    fn model_minimizer_rules() {
        let d = box1();
        let j = Plain(|_: &[f64]| 0.0);
        let lam = d.point(vec![4.0]).unwrap();
        let m = model_function(&j, &lam, &estimate(vec![1.0])).unwrap();
        assert_eq!(minimize_model(&m, &d).values(), &[0.001]);
        let flat = model_function(&j, &lam, &estimate(vec![0.0])).unwrap();
        let plus = minimize_model(&flat, &d);
        assert_eq!(plus.values(), &[4.0]);
        assert_eq!(classify_model_step(&flat, &plus), ModelStep::Stationary);

        let d2 = HyperparameterDomain::uniform(2, 0.0, 1.0).unwrap();
        let lam2 = d2.point(vec![0.5, 0.5]).unwrap();
        let m2 = model_function(&j, &lam2, &estimate(vec![-2.0, 3.0])).unwrap();
        assert_eq!(minimize_model(&m2, &d2).values(), &[1.0, 0.0]);
    }

    #[test]
    fn constrained_stationary_at_active_bound() {
        let d = box1();
        let j = Plain(|l: &[f64]| l[0]);
        let lam = d.point(vec![0.001]).unwrap();
        let m = model_function(&j, &lam, &estimate(vec![1.0])).unwrap();
        let plus = minimize_model(&m, &d);
        assert_eq!(classify_model_step(&m, &plus), ModelStep::ConstrainedStationary);
    }

    #[test]
    fn bound_examples() {
        let d = box1();
        let quad = growth_from_smoothness(3.0).unwrap();
        let b = perturbation_bounds(&d.point(vec![1.0]).unwrap(), &d.point(vec![1.5]).unwrap(), &quad).unwrap();
        assert!((b.point - 0.5).abs() <= f64::EPSILON);
        let z4 = growth_from_smoothness(4.0).unwrap();
        let b = perturbation_bounds(&d.point(vec![1.0]).unwrap(), &d.point(vec![2.0]).unwrap(), &z4).unwrap();
        assert_eq!(b.value, 2.0);
        assert_eq!(
            perturbation_bounds(&d.point(vec![1.0]).unwrap(), &d.point(vec![1.0]).unwrap(), &z4),
            Err(HpoError::CoincidentPoints)
        );
    }

    #[test]
    fn constant_response_keeps_witness_at_model_minimizer() {
        let d = box1();
        let j = Plain(|_: &[f64]| 4.0);
        let lam = d.point(vec![3.0]).unwrap();
        let m = model_function(&j, &lam, &estimate(vec![0.0])).unwrap();
        let plus = minimize_model(&m, &d);
        let z = growth_from_smoothness(2.0).unwrap();
        let r = find_perturbation_witness(&j, &lam, &plus, &z, &d).unwrap();
        assert_eq!(r.lambda_hat, plus.values());
        assert!(r.coincident && r.satisfied);
        assert!(r.point_residual > 0.0 && r.value_residual > 0.0);
    }

    #[test]
    fn quadratic_witness_is_satisfied() {
        let d = box1();
        let j = Plain(|l: &[f64]| (l[0] - 2.0).powi(2));
        let lam = d.point(vec![3.0]).unwrap();
        let m = model_function(&j, &lam, &estimate(vec![2.0])).unwrap();
        let plus = minimize_model(&m, &d);
        let r = find_perturbation_witness(&j, &lam, &plus, &growth_from_smoothness(2.0).unwrap(), &d).unwrap();
        assert!(r.satisfied, "{r:?}");
        // G(γ) = (γ−2)² + (γ−3)² is minimized at 2.5
        assert!((r.lambda_hat[0] - 2.5).abs() < 1e-5);
    }

    #[test]
    fn certificate_at_grid_minimizer_is_its_own_witness() {
        let d = box1();
        let j = Plain(|l: &[f64]| (l[0] - 2.0).powi(2));
        let grid: Vec<_> = (0..50)
            .map(|k| d.point(vec![0.001 + 0.2 * k as f64]).unwrap())
            .collect();
        let (best, best_v) = grid
            .iter()
            .map(|g| (g.clone(), (g.values()[0] - 2.0).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let cert = ekeland_certificate(&j, &best, 0.3, best_v, &grid).unwrap();
        assert!(cert.valid);
        assert_eq!(cert.witness, best.values());
        assert_eq!(cert.distance, 0.0);
    }

    fn vertices(d: &HyperparameterDomain) -> Vec<Vec<f64>> {
        (0..1usize << d.dim())
            .map(|mask| {
                (0..d.dim())
                    .map(|i| if mask >> i & 1 == 1 { d.upper()[i] } else { d.lower()[i] })
                    .collect()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn model_minimizer_beats_every_vertex(
            g in proptest::collection::vec(-5.0f64..5.0, 1..=3),
            t in proptest::collection::vec(0.0f64..1.0, 3),
        ) {
            let d = HyperparameterDomain::uniform(g.len(), 0.1, 4.0).unwrap();
            let base = d.point((0..g.len()).map(|i| 0.1 + 3.9 * t[i]).collect()).unwrap();
            let m = ModelFunction { base: base.values().to_vec(), value: 1.0, gradient: g };
            let best = m.evaluate(minimize_model(&m, &d).values());
            for v in vertices(&d) {
                prop_assert!(best <= m.evaluate(&v) + 1e-12);
            }
        }

        #[test]
        fn quadratic_point_bound_is_the_step(a in 0.0f64..10.0, b in 0.0f64..10.0, l in 0.01f64..100.0) {
            prop_assume!(a != b);
            let d = HyperparameterDomain::uniform(1, 0.0, 10.0).unwrap();
            let bounds = perturbation_bounds(
                &d.point(vec![a]).unwrap(),
                &d.point(vec![b]).unwrap(),
                &growth_from_smoothness(l).unwrap(),
            ).unwrap();
            prop_assert!((bounds.point - (a - b).abs()).abs() <= 4.0 * f64::EPSILON * (a - b).abs());
        }

        #[test]
        fn valid_certificates_recheck(base in 0.0f64..4.0, eps in 1e-4f64..1.0, shift in 0.0f64..0.5) {
            let d = HyperparameterDomain::uniform(1, 0.0, 4.0).unwrap();
            let j = |x: f64| (x - 1.3).powi(2);
            let response = Plain(move |l: &[f64]| j(l[0]));
            let cands: Vec<_> = (0..41).map(|k| d.point(vec![0.1 * k as f64]).unwrap()).collect();
            let cert = ekeland_certificate(&response, &d.point(vec![base]).unwrap(), eps, -shift, &cands).unwrap();
            if cert.valid {
                let z = cert.witness[0];
                prop_assert!(eps - (j(base) - cert.inf_estimate) >= 0.0);
                prop_assert!(j(base) - j(z) >= 0.0);
                prop_assert!(eps.sqrt() - (z - base).abs() >= 0.0);
            }
        }
    }

    #[test]
    fn certificate_premise_failure() {
        let d = box1();
        let j = Plain(|l: &[f64]| l[0]);
        let eps = 0.01;
        let base = d.point(vec![1.0]).unwrap();
        let cert = ekeland_certificate(&j, &base, eps, 1.0 - 2.0 * eps, &[]).unwrap();
        assert!(!cert.valid);
        assert!((cert.premise_excess() - eps).abs() < 1e-15);
        assert!(ekeland_certificate(&j, &base, 0.0, 0.0, &[]).is_err());
    }
}
